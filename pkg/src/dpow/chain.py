"""Block data model: transactions, coinbase, Merkle trees, headers, hashing.

Hashes are plain 32-byte ``bytes``. Equal-length byte strings compare
lexicographically, which is the same as comparing their big-endian integer
values, so ``digest <= target_bytes`` works directly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import cached_property
from typing import List, Sequence, Tuple

from Crypto.Hash import keccak

from . import wire

Hash256 = bytes

HASH_LEN = 32
HEADER_LEN = 84
ZERO_HASH: Hash256 = bytes(HASH_LEN)

_HEADER = struct.Struct(">32sQQ32sI")
assert _HEADER.size == HEADER_LEN


def keccak256(data: bytes) -> Hash256:
    """Keccak-256 with the original Keccak padding (Ethereum flavour, not NIST SHA3-256)."""
    return keccak.new(digest_bits=256, data=data).digest()


def hash_to_int(h: Hash256) -> int:
    return int.from_bytes(h, "big")


def _check_hash(h: bytes, name: str) -> None:
    if not isinstance(h, (bytes, bytearray)) or len(h) != HASH_LEN:
        raise ValueError(f"{name} must be {HASH_LEN} bytes")


@dataclass(frozen=True)
class Transaction:
    payload: bytes

    @cached_property
    def id(self) -> Hash256:
        return keccak256(self.payload)


@dataclass(frozen=True)
class CoinbaseTx:
    """Reward transaction; its extra-data region is ``miner_id || extra``."""

    miner_id: bytes
    extra: bytes
    receiver: bytes

    def __post_init__(self):
        if not self.miner_id:
            raise ValueError("miner_id must be non-empty")

    @property
    def extra_data(self) -> bytes:
        return self.miner_id + self.extra

    def serialize(self) -> bytes:
        return self.miner_id + self.extra + self.receiver

    @cached_property
    def id(self) -> Hash256:
        return keccak256(self.serialize())

    def encode(self) -> bytes:
        return wire.encode_list([self.miner_id, self.extra, self.receiver])

    @classmethod
    def decode(cls, data: bytes) -> "CoinbaseTx":
        miner_id, extra, receiver = wire.decode_list(data)
        return cls(miner_id, extra, receiver)


@dataclass(frozen=True)
class MerkleBranch:
    leaf_index: int
    siblings: Tuple[Hash256, ...] = ()

    def encode(self) -> bytes:
        return wire.encode_list([wire.u64(self.leaf_index), *self.siblings])

    @classmethod
    def decode(cls, data: bytes) -> "MerkleBranch":
        items = wire.decode_list(data)
        return cls(int.from_bytes(items[0], "big"), tuple(items[1:]))


def _parent(left: Hash256, right: Hash256) -> Hash256:
    return keccak256(left + right)


def _next_level(level: List[Hash256]) -> List[Hash256]:
    if len(level) % 2:
        level = level + [level[-1]]
    return [_parent(level[i], level[i + 1]) for i in range(0, len(level), 2)]


def merkle_root(leaves: Sequence[Hash256]) -> Hash256:
    """Binary Merkle root; an odd level duplicates its last node."""
    if not leaves:
        raise ValueError("merkle_root of an empty leaf list")
    level = list(leaves)
    while len(level) > 1:
        level = _next_level(level)
    return level[0]


def merkle_branch(leaves: Sequence[Hash256], index: int) -> MerkleBranch:
    if not 0 <= index < len(leaves):
        raise IndexError(f"leaf index {index} out of range for {len(leaves)} leaves")
    level = list(leaves)
    i = index
    siblings = []
    while len(level) > 1:
        if len(level) % 2:
            level = level + [level[-1]]
        siblings.append(level[i ^ 1])
        level = _next_level(level)
        i //= 2
    return MerkleBranch(index, tuple(siblings))


def apply_branch(leaf: Hash256, branch: MerkleBranch) -> Hash256:
    h = leaf
    i = branch.leaf_index
    for sib in branch.siblings:
        h = _parent(h, sib) if i % 2 == 0 else _parent(sib, h)
        i //= 2
    return h


@dataclass(frozen=True)
class BlockHeader:
    prev_hash: Hash256
    difficulty: int
    timestamp: int
    tx_root: Hash256
    nonce: int = 0

    def __post_init__(self):
        _check_hash(self.prev_hash, "prev_hash")
        _check_hash(self.tx_root, "tx_root")
        if not 0 <= self.difficulty < 2**64:
            raise ValueError("difficulty out of u64 range")
        if not 0 <= self.timestamp < 2**64:
            raise ValueError("timestamp out of u64 range")
        if not 0 <= self.nonce < 2**32:
            raise ValueError("nonce out of u32 range")

    def serialize(self) -> bytes:
        return _HEADER.pack(self.prev_hash, self.difficulty, self.timestamp,
                            self.tx_root, self.nonce)

    @classmethod
    def deserialize(cls, data: bytes) -> "BlockHeader":
        if len(data) != HEADER_LEN:
            raise ValueError(f"header must be {HEADER_LEN} bytes, got {len(data)}")
        return cls(*_HEADER.unpack(data))

    def with_nonce(self, nonce: int) -> "BlockHeader":
        return BlockHeader(self.prev_hash, self.difficulty, self.timestamp, self.tx_root, nonce)

    @cached_property
    def hash(self) -> Hash256:
        return keccak256(self.serialize())


def hash_header(h: BlockHeader) -> Hash256:
    return h.hash


def tx_leaves(coinbase: CoinbaseTx, txs: Sequence[Transaction]) -> List[Hash256]:
    return [coinbase.id] + [t.id for t in txs]


@dataclass(frozen=True)
class Block:
    header: BlockHeader
    coinbase: CoinbaseTx
    txs: Tuple[Transaction, ...] = field(default_factory=tuple)

    @property
    def hash(self) -> Hash256:
        return self.header.hash

    def computed_root(self) -> Hash256:
        return merkle_root(tx_leaves(self.coinbase, self.txs))

    def root_matches(self) -> bool:
        return self.computed_root() == self.header.tx_root

    def encode(self) -> bytes:
        return wire.encode_list([
            self.header.serialize(),
            self.coinbase.encode(),
            wire.encode_list(t.payload for t in self.txs),
        ])

    @classmethod
    def decode(cls, data: bytes) -> "Block":
        header, coinbase, txs = wire.decode_list(data)
        return cls(BlockHeader.deserialize(header), CoinbaseTx.decode(coinbase),
                   tuple(Transaction(p) for p in wire.decode_list(txs)))
