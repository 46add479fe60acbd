"""Proof-of-work puzzle: difficulty to target, checking, nonce search."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

from .chain import BlockHeader, keccak256

# a 256-bit threshold; a header is valid when its hash, read big-endian, is <= it
Target = int

MAX_TARGET = 2**256 - 1
NONCE_SPACE = 2**32
# stop signal is polled at least this often
STOP_CHECK_INTERVAL = 2**12


def target_from_difficulty(diff: int) -> Target:
    if diff < 1:
        raise ValueError("difficulty must be >= 1")
    return MAX_TARGET // diff


def check_pow(h: BlockHeader, target: Target) -> bool:
    return int.from_bytes(h.hash, "big") <= target


@dataclass(frozen=True)
class PowSolution:
    nonce: int
    coinbase_extra: bytes
    header: BlockHeader


def scan_nonces(template: BlockHeader, target: int, lo: int, hi: int,
                stop=None) -> Tuple[Optional[int], int]:
    """Linear scan of ``[lo, hi)``.

    Returns ``(nonce or None, hashes evaluated)``. ``stop`` is anything with an
    ``is_set()`` method (``threading.Event`` works).
    """
    if not 0 <= lo < hi <= NONCE_SPACE:
        raise ValueError(f"bad nonce range [{lo}, {hi})")
    prefix = template.serialize()[:-4]
    tried = 0
    for nonce in range(lo, hi):
        if stop is not None and tried % STOP_CHECK_INTERVAL == 0 and stop.is_set():
            return None, tried
        tried += 1
        digest = keccak256(prefix + nonce.to_bytes(4, "big"))
        if int.from_bytes(digest, "big") <= target:
            return nonce, tried
    return None, tried


def search_nonce(template: BlockHeader, target: int, nonce_range=(0, NONCE_SPACE),
                 stop=None, coinbase_extra: bytes = b"") -> Optional[PowSolution]:
    """Smallest nonce in ``nonce_range`` whose header meets ``target``, or None."""
    lo, hi = nonce_range
    nonce, _ = scan_nonces(template, target, lo, hi, stop)
    if nonce is None:
        return None
    return PowSolution(nonce, coinbase_extra, template.with_nonce(nonce))
