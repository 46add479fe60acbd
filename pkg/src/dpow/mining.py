"""Map-reduce mining: a sharding server splits the search space among miners.

Each miner's coinbase extra-data starts with its own fixed-length ID, so no
two miners can ever build the same coinbase and therefore never hash the
same header. The server only ships the coinbase's Merkle branch; miners
rebuild the transaction root locally after every coinbase change.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence

from . import wire
from .chain import (ZERO_HASH, Block, BlockHeader, CoinbaseTx, Hash256, MerkleBranch,
                    Transaction, apply_branch, keccak256, merkle_branch)
from .puzzle import NONCE_SPACE, check_pow, scan_nonces, target_from_difficulty

MINER_ID_LEN = 20
EXTRA_LEN = 8
DEFAULT_REMAP_TIMEOUT = 30.0

TAG_ASSIGNMENT = 0x01
TAG_WORK_RESULT = 0x02


class Verdict(enum.Enum):
    ACCEPTED = "accepted"
    STALE = "stale"
    INVALID = "invalid"


@dataclass(frozen=True)
class ShardAssignment:
    prev_hash: Hash256
    difficulty: int
    timestamp: int
    coinbase_branch: MerkleBranch
    coinbase_receiver: bytes
    miner_id: bytes
    epoch: int

    def encode(self) -> bytes:
        return wire.encode_record(TAG_ASSIGNMENT, [
            self.prev_hash, wire.u64(self.difficulty), wire.u64(self.timestamp),
            self.coinbase_branch.encode(), self.coinbase_receiver, self.miner_id,
            wire.u64(self.epoch),
        ])

    @classmethod
    def decode(cls, data: bytes) -> "ShardAssignment":
        tag, f = wire.decode_record(data)
        if tag != TAG_ASSIGNMENT or len(f) != 7:
            raise wire.WireError("not a shard assignment record")
        return cls(f[0], int.from_bytes(f[1], "big"), int.from_bytes(f[2], "big"),
                   MerkleBranch.decode(f[3]), f[4], f[5], int.from_bytes(f[6], "big"))


@dataclass(frozen=True)
class WorkResult:
    assignment_epoch: int
    coinbase: CoinbaseTx
    nonce: int
    claimed_root: Hash256

    def encode(self) -> bytes:
        return wire.encode_record(TAG_WORK_RESULT, [
            wire.u64(self.assignment_epoch), self.coinbase.encode(),
            wire.u32(self.nonce), self.claimed_root,
        ])

    @classmethod
    def decode(cls, data: bytes) -> "WorkResult":
        tag, f = wire.decode_record(data)
        if tag != TAG_WORK_RESULT or len(f) != 4:
            raise wire.WireError("not a work result record")
        return cls(int.from_bytes(f[0], "big"), CoinbaseTx.decode(f[1]),
                   int.from_bytes(f[2], "big"), f[3])


@dataclass
class MinerStats:
    hashes_tried: int = 0
    shards_received: int = 0
    solutions_found: int = 0


def extra_for(counter: int) -> bytes:
    return counter.to_bytes(EXTRA_LEN, "big")


def header_for(a: ShardAssignment, root: Hash256, nonce: int = 0) -> BlockHeader:
    return BlockHeader(a.prev_hash, a.difficulty, a.timestamp, root, nonce)


def mine_shard(a: ShardAssignment, stop=None, *, nonce_limit: int = NONCE_SPACE,
               max_extras: Optional[int] = None,
               stats: Optional[MinerStats] = None) -> Optional[WorkResult]:
    """Search ``(extra, nonce)`` pairs in order until a solution or ``stop``.

    ``nonce_limit`` shrinks the per-coinbase nonce range and ``max_extras``
    bounds the number of coinbase variants; both exist for tests and for the
    simulator's real-hash mode. Without them the loop only ends on success or
    on the stop signal.
    """
    target = target_from_difficulty(a.difficulty)
    counter = 0
    while max_extras is None or counter < max_extras:
        if stop is not None and stop.is_set():
            return None
        coinbase = CoinbaseTx(a.miner_id, extra_for(counter), a.coinbase_receiver)
        root = apply_branch(coinbase.id, a.coinbase_branch)
        nonce, tried = scan_nonces(header_for(a, root), target, 0, nonce_limit, stop)
        if stats is not None:
            stats.hashes_tried += tried
        if nonce is not None:
            if stats is not None:
                stats.solutions_found += 1
            return WorkResult(a.epoch, coinbase, nonce, root)
        counter += 1
    return None


@dataclass
class ShardingServer:
    """Master node: builds the block template and hands out shards.

    The coinbase is always leaf 0. Its Merkle branch does not depend on the
    coinbase value itself, so one branch serves every miner.
    """

    prev_hash: Hash256
    difficulty: int
    timestamp: int
    receiver: bytes
    txs: Sequence[Transaction] = ()
    remap_timeout: float = DEFAULT_REMAP_TIMEOUT
    epoch: int = 0
    miners: List[bytes] = field(default_factory=list)

    def __post_init__(self):
        self.txs = tuple(self.txs)
        self._branch = self._coinbase_branch()

    def _coinbase_branch(self) -> MerkleBranch:
        leaves = [ZERO_HASH] + [t.id for t in self.txs]
        return merkle_branch(leaves, 0)

    @property
    def coinbase_branch(self) -> MerkleBranch:
        return self._branch

    def map_shards(self, miners: Iterable[bytes]) -> List[ShardAssignment]:
        miners = list(miners)
        if not miners:
            raise ValueError("no miners to map shards to")
        for m in miners:
            if len(m) != MINER_ID_LEN:
                raise ValueError(f"miner_id must be exactly {MINER_ID_LEN} bytes")
        if len(set(miners)) != len(miners):
            raise ValueError("duplicate miner_id")
        self.miners = miners
        self.epoch += 1
        return [ShardAssignment(self.prev_hash, self.difficulty, self.timestamp,
                                self._branch, self.receiver, m, self.epoch)
                for m in miners]

    def remap(self, timestamp: Optional[int] = None) -> List[ShardAssignment]:
        """New shards for the same miners, e.g. after the remap timeout."""
        if timestamp is not None:
            self.timestamp = timestamp
        return self.map_shards(self.miners)

    def verify_submission(self, w: WorkResult) -> Verdict:
        if w.assignment_epoch < self.epoch:
            return Verdict.STALE
        if w.assignment_epoch != self.epoch:
            return Verdict.INVALID
        cb = w.coinbase
        if cb.miner_id not in self.miners or cb.receiver != self.receiver:
            return Verdict.INVALID
        root = apply_branch(cb.id, self._branch)
        if root != w.claimed_root:
            return Verdict.INVALID
        if not 0 <= w.nonce < NONCE_SPACE:
            return Verdict.INVALID
        header = BlockHeader(self.prev_hash, self.difficulty, self.timestamp, root, w.nonce)
        if not check_pow(header, target_from_difficulty(self.difficulty)):
            return Verdict.INVALID
        return Verdict.ACCEPTED

    def build_block(self, w: WorkResult) -> Block:
        """Assemble the full block for an accepted submission."""
        if self.verify_submission(w) is not Verdict.ACCEPTED:
            raise ValueError("submission was not accepted")
        header = BlockHeader(self.prev_hash, self.difficulty, self.timestamp,
                             w.claimed_root, w.nonce)
        return Block(header, w.coinbase, self.txs)


def miner_id_from_name(name: str) -> bytes:
    """Deterministic 20-byte address-like ID for simulations and tests."""
    return keccak256(name.encode())[-MINER_ID_LEN:]


def collision_probability(m: int, form: str = "approx") -> float:
    """Birthday estimate for a Keccak-256 collision among ``m`` coinbase messages.

    ``form="approx"`` is the quadratic estimate ``m(m-1) / 2^257`` (capped at
    1), which is the quantity usually tabulated. ``form="exp"`` is the
    exponential bound ``1 - exp(-m(m-1) / 2^257)``.
    """
    if m < 0:
        raise ValueError("m must be non-negative")
    if m < 2:
        return 0.0
    log_x = math.log(m) + math.log(m - 1) - 257 * math.log(2)
    if form == "approx":
        return 1.0 if log_x >= 0 else math.exp(log_x)
    if form == "exp":
        if log_x > 700:
            return 1.0
        return -math.expm1(-math.exp(log_x))
    raise ValueError(f"unknown form {form!r}")
