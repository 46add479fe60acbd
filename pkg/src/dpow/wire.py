"""Length-prefixed binary records.

A record is ``u32 body_length || body`` where the body is a one-byte type
tag followed by fields, each encoded as ``u32 length || bytes``. Integers are
packed fixed-width big-endian inside their field. The simulator uses
``len(record)`` to meter traffic.
"""

from __future__ import annotations

import struct
from typing import Iterable, List, Tuple

_U32 = struct.Struct(">I")


class WireError(ValueError):
    pass


def u32(v: int) -> bytes:
    return v.to_bytes(4, "big")


def u64(v: int) -> bytes:
    return v.to_bytes(8, "big")


def encode_record(tag: int, fields: Iterable[bytes]) -> bytes:
    body = bytearray([tag])
    for f in fields:
        body += _U32.pack(len(f))
        body += f
    return _U32.pack(len(body)) + bytes(body)


def decode_record(data: bytes) -> Tuple[int, List[bytes]]:
    """Inverse of :func:`encode_record`; the input must be exactly one record."""
    if len(data) < 5:
        raise WireError("record too short")
    (n,) = _U32.unpack_from(data, 0)
    if n != len(data) - 4:
        raise WireError(f"length prefix {n} does not match payload {len(data) - 4}")
    tag = data[4]
    fields = []
    pos = 5
    while pos < len(data):
        if pos + 4 > len(data):
            raise WireError("truncated field header")
        (flen,) = _U32.unpack_from(data, pos)
        pos += 4
        if pos + flen > len(data):
            raise WireError("truncated field")
        fields.append(bytes(data[pos:pos + flen]))
        pos += flen
    return tag, fields


def encode_list(items: Iterable[bytes]) -> bytes:
    """Nested list of byte strings packed into a single field."""
    out = bytearray()
    items = list(items)
    out += _U32.pack(len(items))
    for it in items:
        out += _U32.pack(len(it))
        out += it
    return bytes(out)


def decode_list(data: bytes) -> List[bytes]:
    if len(data) < 4:
        raise WireError("list too short")
    (count,) = _U32.unpack_from(data, 0)
    pos = 4
    items = []
    for _ in range(count):
        if pos + 4 > len(data):
            raise WireError("truncated list")
        (n,) = _U32.unpack_from(data, pos)
        pos += 4
        items.append(bytes(data[pos:pos + n]))
        pos += n
    if pos != len(data):
        raise WireError("trailing bytes in list")
    return items
