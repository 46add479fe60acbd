"""Deterministic simulations of mining and verification.

Everything here is a pure function of :class:`SimConfig`. Experiment 1 charges
virtual time for hashing (``n`` hashes at rate ``rho`` take ``n / rho``
simulated seconds), so results do not depend on the machine running them.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import math
import os
import random
from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional, Sequence, Tuple, get_args

import numpy as np
from scipy import stats

from . import __version__
from .chain import ZERO_HASH, Block, Transaction, keccak256
from .events import EventQueue, Network
from .mining import (ShardingServer, ShardAssignment, MinerStats, Verdict,
                     mine_shard, miner_id_from_name)
from .pbft import (EMPTY_HASH, ConsensusState, Phase, Proposal, Timeouts, Verifier,
                   VerifierGroup, MacSigner, sign_proposal)
from .puzzle import check_pow, target_from_difficulty

CONFIG_SCHEMA_VERSION = 1
TRACE_VERSION = f"dpow-trace/{__version__}"

ByzantineStrategy = Literal["conspire_validate_invalid", "vote_mixed", "withhold", "equivocate"]
STRATEGIES = get_args(ByzantineStrategy)


@dataclass
class SimConfig:
    seed: int = 42
    # experiment 1
    miners: int = 7
    trials: int = 1000
    difficulty: Optional[int] = None
    difficulty_band: Tuple[float, float] = (20.0, 22.0)  # log2 bounds, sampled log-uniform
    hash_rate: float = 1.0e5
    poll_interval: float = 5.0
    remap_timeout: float = 30.0
    real_hash: bool = False
    # network
    latency: Tuple[float, float] = (0.05, 0.5)
    drop_rate: float = 0.0
    max_sim_time: float = 3600.0
    # verification
    verifiers: int = 4
    byzantine: List[Tuple[int, str]] = field(default_factory=list)
    max_step: int = 20
    timeouts: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    block_difficulty: int = 16
    candidate_servers: int = 2
    heights: int = 2
    runs: int = 1000
    exp2_trials: int = 10
    exp2_max_step: int = 1
    # test hook: plant a conflicting commit to exercise the checker
    inject_double_commit: bool = False

    def __post_init__(self):
        self.difficulty_band = tuple(self.difficulty_band)
        self.latency = tuple(self.latency)
        self.timeouts = tuple(self.timeouts)
        self.byzantine = [tuple(b) for b in self.byzantine]
        if not 0 <= self.drop_rate < 1:
            raise ValueError("drop_rate must be in [0, 1)")
        if self.trials < 1 or self.exp2_trials < 1 or self.runs < 1:
            raise ValueError("trial counts must be >= 1")
        if self.miners < 1 or self.verifiers < 1:
            raise ValueError("topology counts must be >= 1")
        for idx, strat in self.byzantine:
            if strat not in STRATEGIES:
                raise ValueError(f"unknown byzantine strategy {strat!r}")
            if not 0 <= idx < self.verifiers:
                raise ValueError(f"byzantine index {idx} outside the verifier group")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["schema"] = CONFIG_SCHEMA_VERSION
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        d["byzantine"] = [list(b) for b in self.byzantine]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        d = dict(d)
        schema = d.pop("schema", CONFIG_SCHEMA_VERSION)
        if schema != CONFIG_SCHEMA_VERSION:
            raise ValueError(f"unsupported config schema {schema}")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "SimConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    solve_time: float
    group: str
    verdict: str  # "V" | "I" | "no-consensus"
    hashes_total: int

    FIELDS = ("trial", "group", "solve_time", "verdict", "hashes_total")


def records_to_csv(records: Sequence[TrialRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TrialRecord.FIELDS)
    for r in records:
        w.writerow([r.trial, r.group, repr(float(r.solve_time)), r.verdict, r.hashes_total])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Experiment 1: solo mining vs one sharding server with k miners


@dataclass
class ArmSummary:
    mean: float
    median: float
    q1: float
    q3: float

    @property
    def iqr(self) -> float:
        return self.q3 - self.q1


@dataclass
class Experiment1Result:
    records: List[TrialRecord]
    solo: ArmSummary
    sharded: ArmSummary
    ratio: float
    t_stat: float
    p_value: float

    def times(self, group: str) -> np.ndarray:
        return np.array([r.solve_time for r in self.records if r.group == group])


def trial_difficulty(cfg: SimConfig, trial: int) -> int:
    if cfg.difficulty is not None:
        return cfg.difficulty
    lo, hi = cfg.difficulty_band
    u = np.random.default_rng([cfg.seed, trial, 0xD1FF]).uniform(lo, hi)
    return max(1, int(round(2.0 ** u)))


def _next_tick(phase: float, interval: float, t: float) -> float:
    if interval <= 0 or t <= phase:
        return max(t, phase) if interval > 0 else t
    return phase + math.ceil((t - phase) / interval) * interval


class _MiningTrial:
    """One puzzle for one arm, run on the event queue.

    The solo arm models k independent servers mining the same temporary
    block: every solo miner walks the identical search sequence, so they all
    need the same number of hashes. The sharded arm gives each miner its own
    coinbase prefix and therefore an independent search.
    """

    def __init__(self, cfg: SimConfig, trial: int, arm: str, difficulty: int):
        self.cfg = cfg
        self.trial = trial
        self.arm = arm
        self.d = difficulty
        k = cfg.miners
        self.k = k
        self.q = EventQueue()
        self.rngs = [np.random.default_rng([cfg.seed, trial, i, 0x1A7]) for i in range(k)]
        interval = cfg.poll_interval
        self.phase = [float(r.uniform(0, interval)) if interval > 0 else 0.0 for r in self.rngs]
        if arm == "solo":
            self.server_of = list(range(k))
        else:
            self.server_of = [0] * k
        n_servers = max(self.server_of) + 1
        self.server_epoch = [0] * n_servers
        self.m_epoch = [0] * k
        self.m_start = [0.0] * k
        self.m_work = [0] * k
        self.hashes = 0.0
        self._real_cache: Dict[Tuple[int, int], int] = {}

    def _latency(self, i: int) -> float:
        lo, hi = self.cfg.latency
        return float(self.rngs[i].uniform(lo, hi))

    def _work_key(self, i: int) -> int:
        return 0 if self.arm == "solo" else i

    def _work(self, i: int, epoch: int) -> int:
        key = self._work_key(i)
        if self.cfg.real_hash:
            return self._real_work(key, epoch)
        rng = np.random.default_rng([self.cfg.seed, self.trial, epoch, key, 0x4A5])
        return int(rng.geometric(1.0 / self.d))

    def _real_work(self, key: int, epoch: int) -> int:
        if (key, epoch) not in self._real_cache:
            a = experiment1_assignment(self.cfg, self.trial, epoch, key, self.d)
            st = MinerStats()
            res = mine_shard(a, stats=st)
            assert res is not None
            self._real_cache[(key, epoch)] = st.hashes_tried
        return self._real_cache[(key, epoch)]

    def _publish(self, server: int) -> None:
        self.server_epoch[server] += 1
        epoch = self.server_epoch[server]
        now = self.q.now
        for i in range(self.k):
            if self.server_of[i] != server:
                continue
            pickup = _next_tick(self.phase[i], self.cfg.poll_interval, now)
            self.q.push(pickup + self._latency(i), "deliver", ("assign", i, epoch))
        self.q.push(now + self.cfg.remap_timeout, "timer", ("remap", server, epoch))

    def _stop_hashing(self, i: int) -> None:
        if self.m_epoch[i]:
            elapsed = self.q.now - self.m_start[i]
            self.hashes += min(self.m_work[i], elapsed * self.cfg.hash_rate)

    def run(self) -> TrialRecord:
        cfg = self.cfg
        for s in range(len(self.server_epoch)):
            self._publish(s)
        while self.q:
            ev = self.q.pop()
            if ev.time > cfg.max_sim_time:
                break
            what = ev.payload[0]
            if what == "assign":
                _, i, epoch = ev.payload
                if epoch != self.server_epoch[self.server_of[i]]:
                    continue
                self._stop_hashing(i)
                n = self._work(i, epoch)
                self.m_epoch[i], self.m_start[i], self.m_work[i] = epoch, self.q.now, n
                self.q.push(self.q.now + n / cfg.hash_rate, "hash_batch", (i, epoch))
            elif ev.kind == "hash_batch":
                i, epoch = ev.payload
                if self.m_epoch[i] != epoch:
                    continue
                self._stop_hashing(i)
                self.m_epoch[i] = 0
                self.q.push(self.q.now + self._latency(i), "deliver", ("submit", i, epoch))
            elif what == "submit":
                _, i, epoch = ev.payload
                if epoch == self.server_epoch[self.server_of[i]]:
                    for j in range(self.k):
                        self._stop_hashing(j)
                    return TrialRecord(self.trial, self.q.now, self.arm, "V", int(self.hashes))
            elif what == "remap":
                _, server, epoch = ev.payload
                if epoch == self.server_epoch[server]:
                    self._publish(server)
        for j in range(self.k):
            self._stop_hashing(j)
        return TrialRecord(self.trial, cfg.max_sim_time, self.arm, "no-consensus",
                           int(self.hashes))


def experiment1_assignment(cfg: SimConfig, trial: int, epoch: int, miner: int,
                           difficulty: int) -> ShardAssignment:
    """The real shard a miner would get in real-hash mode."""
    prev = keccak256(f"exp1/{cfg.seed}/{trial}".encode())
    txs = [Transaction(f"tx/{cfg.seed}/{trial}/{j}".encode()) for j in range(3)]
    server = ShardingServer(prev, difficulty, 1_600_000_000 + epoch, b"pool-receiver", txs)
    server.epoch = epoch - 1
    return server.map_shards([miner_id_from_name(f"miner-{miner}")])[0]


def _summary(times: np.ndarray) -> ArmSummary:
    q1, med, q3 = np.percentile(times, [25, 50, 75])
    return ArmSummary(float(times.mean()), float(med), float(q1), float(q3))


def run_experiment_1(cfg: SimConfig) -> Experiment1Result:
    records = []
    for t in range(cfg.trials):
        d = trial_difficulty(cfg, t)
        for arm in ("solo", "sharded"):
            records.append(_MiningTrial(cfg, t, arm, d).run())
    solo = np.array([r.solve_time for r in records if r.group == "solo"])
    shard = np.array([r.solve_time for r in records if r.group == "sharded"])
    if np.array_equal(solo, shard):
        t_stat, p = 0.0, 1.0
    else:
        res = stats.ttest_ind(np.log(shard), np.log(solo), equal_var=False)
        t_stat, p = float(res.statistic), float(res.pvalue)
    return Experiment1Result(records, _summary(solo), _summary(shard),
                             float(solo.mean() / shard.mean()), t_stat, p)


# ---------------------------------------------------------------------------
# Byzantine verifiers


class ByzantineVerifier(Verifier):
    """A verifier that follows one misbehaviour strategy.

    ``conspire_validate_invalid`` votes for a block exactly when it is
    invalid and denies valid ones; ``vote_mixed`` flips a seeded coin per
    vote; ``withhold`` stays silent; ``equivocate`` tells different peers
    different things in every message.
    """

    honest = False

    def __init__(self, *args, strategy: ByzantineStrategy, rng: random.Random, **kw):
        super().__init__(*args, **kw)
        if strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {strategy!r}")
        self.strategy = strategy
        self.rng = rng
        self._coins: Dict[tuple, bool] = {}

    def remember_block(self, block: Block) -> None:
        self.state.known_blocks[block.hash] = block

    def accepts_commit(self, block: Block) -> bool:
        return True

    def _candidates(self) -> List[Block]:
        st = self.state
        return list(self.candidates(self, st.height, st.tip_hash))

    def _target(self) -> Optional[Block]:
        if self._block is not None:
            return self._block
        c = self._candidates()
        return c[0] if c else None

    def _coin(self, *key) -> bool:
        if key not in self._coins:
            self._coins[key] = self.rng.random() < 0.5
        return self._coins[key]

    def _split(self, recipient: str) -> bool:
        return self.group.index(recipient) % 2 == 0

    def choose_proposal(self, recipient: str) -> Optional[Proposal]:
        st = self.state
        if self.strategy == "withhold":
            return None
        cands = self._candidates()
        if not cands:
            return None
        block = cands[0]
        if self.strategy == "equivocate" and len(cands) > 1 and not self._split(recipient):
            block = cands[1]
        return sign_proposal(self.signer, self.id, st.height, st.round, block)

    def _value(self, phase: str, recipient: str):
        st = self.state
        if self.strategy == "withhold":
            return None
        target = self._target()
        if target is None:
            return EMPTY_HASH
        if self.strategy == "conspire_validate_invalid":
            return EMPTY_HASH if st.is_valid_block(target) else target.hash
        if self.strategy == "vote_mixed":
            return target.hash if self._coin(st.height, st.round, phase) else EMPTY_HASH
        cands = self._candidates()
        if self._split(recipient) or len(cands) < 2:
            return target.hash
        other = next((b for b in cands if b.hash != target.hash), None)
        return other.hash if other is not None else EMPTY_HASH

    def choose_prevote(self, block, recipient):
        return self._value("prevote", recipient)

    def choose_precommit(self, prevote_result, recipient):
        return self._value("precommit", recipient)


# ---------------------------------------------------------------------------
# Consensus runs on the simulated network


def verifier_names(m: int) -> Tuple[str, ...]:
    return tuple(f"v{i}" for i in range(m))


class CandidatePool:
    """Mines candidate blocks on demand, one per sharding server, per tip."""

    def __init__(self, seed: int, servers: int, difficulty: int):
        self.seed = seed
        self.servers = servers
        self.difficulty = difficulty
        self._cache: Dict[Tuple[int, bytes], List[Block]] = {}

    def blocks(self, height: int, tip: bytes) -> List[Block]:
        key = (height, tip)
        if key not in self._cache:
            self._cache[key] = [mine_block(self.seed, j, height, tip, self.difficulty)
                                for j in range(self.servers)]
        return self._cache[key]


def mine_block(seed: int, server: int, height: int, tip: bytes, difficulty: int) -> Block:
    """A real, valid block from sharding server ``server`` on top of ``tip``."""
    txs = [Transaction(f"tx/{seed}/{server}/{height}/{j}".encode()) for j in range(2)]
    srv = ShardingServer(tip, difficulty, 1_600_000_000 + height,
                         f"server-{server}".encode(), txs)
    a = srv.map_shards([miner_id_from_name(f"s{server}-miner")])[0]
    w = mine_shard(a)
    assert w is not None and srv.verify_submission(w) is Verdict.ACCEPTED
    return srv.build_block(w)


def invalidate(block: Block) -> Block:
    """Same block with a nonce that fails the proof of work."""
    target = target_from_difficulty(block.header.difficulty)
    nonce = block.header.nonce
    while True:
        nonce = (nonce + 1) % 2**32
        h = block.header.with_nonce(nonce)
        if not check_pow(h, target):
            return Block(h, block.coinbase, block.txs)


@dataclass
class ConsensusRun:
    verifiers: List[Verifier]
    honest: List[Verifier]
    trace: Optional[list]
    sent: int
    dropped: int
    bytes_sent: int
    end_time: float

    def final_state(self) -> dict:
        return {v.id: {
            "chain": [b.hash.hex() for b in v.state.chain],
            "committed": [[h, r, bh.hex()] for h, r, bh in v.committed],
            "phase": v.phase,
            "height": v.state.height,
            "round": v.state.round,
        } for v in self.verifiers}


def run_consensus(group: VerifierGroup, *, seed: int, latency, drop_rate: float,
                  timeouts: Timeouts, max_step: int, target_height: int,
                  candidates, byzantine: Dict[int, str] = None, delay_hook=None,
                  max_sim_time: float = 3600.0, trace: bool = False,
                  wait_for_all: bool = False) -> ConsensusRun:
    byzantine = byzantine or {}
    q = EventQueue()
    log = [] if trace else None
    net = Network(q, random.Random(f"net/{seed}"), latency, drop_rate, delay_hook, log)
    signer = MacSigner.for_members(group.members, seed)
    verifiers = []
    for i, name in enumerate(group.members):
        state = ConsensusState(group, max_step=max_step)
        kw = dict(timeouts=timeouts, target_height=target_height)
        if i in byzantine:
            v = ByzantineVerifier(name, state, signer, net, candidates,
                                  strategy=byzantine[i], rng=random.Random(f"byz/{seed}/{i}"), **kw)
        else:
            v = Verifier(name, state, signer, net, candidates, **kw)
        net.register(name, v)
        verifiers.append(v)
    for v in verifiers:
        v.start()
    honest = [v for v in verifiers if v.honest]
    watched = verifiers if wait_for_all else honest
    while q:
        if all(v.done for v in watched):
            break
        ev = q.pop()
        if ev.time > max_sim_time:
            break
        net.dispatch(ev)
    return ConsensusRun(verifiers, honest, log, net.sent, net.dropped, net.bytes_sent, q.now)


# ---------------------------------------------------------------------------
# Experiment 2: verdict grid for groups with 1, 2 or 3 bad verifiers

EXP2_GROUPS = (("A1", True, 1), ("A2", True, 2), ("A3", True, 3),
               ("B1", False, 1), ("B2", False, 2), ("B3", False, 3))


def exp2_strategy(bad: int, m: int) -> str:
    """Bad verifiers that jointly hold a quorum conspire; smaller minorities vote erratically."""
    return "conspire_validate_invalid" if bad >= VerifierGroup(verifier_names(m)).quorum \
        else "vote_mixed"


@dataclass
class Experiment2Result:
    records: List[TrialRecord]
    grid: Dict[str, List[str]]

    def table(self) -> str:
        n = max(len(v) for v in self.grid.values())
        lines = ["Trial    " + " ".join(f"{i + 1:>2}" for i in range(n))]
        for label, cells in self.grid.items():
            lines.append(f"Group {label} " + " ".join(f"{c:>2}" for c in cells))
        return "\n".join(lines)


def run_exp2_trial(cfg: SimConfig, label: str, valid: bool, bad: int, trial: int) -> TrialRecord:
    m = cfg.verifiers
    group = VerifierGroup(verifier_names(m))
    seed = int.from_bytes(hashlib.sha256(f"{cfg.seed}/{label}/{trial}".encode()).digest()[:8], "big")
    block = mine_block(seed, 0, 1, ZERO_HASH, cfg.block_difficulty)
    if not valid:
        block = invalidate(block)
    strategy = exp2_strategy(bad, m)
    byz = {i: strategy for i in range(m - bad, m)}

    def cands(v, height, tip):
        return [block] if height == 1 and tip == ZERO_HASH else []

    run = run_consensus(group, seed=seed, latency=cfg.latency, drop_rate=cfg.drop_rate,
                        timeouts=Timeouts(*cfg.timeouts), max_step=cfg.exp2_max_step,
                        target_height=1, candidates=cands, byzantine=byz,
                        max_sim_time=cfg.max_sim_time, wait_for_all=True)
    committed = any(bh == block.hash for v in run.verifiers for _, _, bh in v.committed)
    if committed:
        verdict = "V"
    elif any(v.saw_empty_quorum for v in run.verifiers):
        verdict = "I"
    else:
        verdict = "no-consensus"
    return TrialRecord(trial, run.end_time, label, verdict, 0)


def run_experiment_2(cfg: SimConfig) -> Experiment2Result:
    records = []
    grid = {}
    for label, valid, bad in EXP2_GROUPS:
        row = []
        for t in range(cfg.exp2_trials):
            rec = run_exp2_trial(cfg, label, valid, bad, t)
            records.append(rec)
            # a block that was not committed was not validated
            row.append("V" if rec.verdict == "V" else "I")
        grid[label] = row
    return Experiment2Result(records, grid)


# ---------------------------------------------------------------------------
# Safety campaign


def check_run(run: ConsensusRun) -> List[str]:
    """Safety violations among honest verifiers; empty list means clean."""
    problems = []
    by_height: Dict[int, set] = {}
    for v in run.honest:
        for h, _, bh in v.committed:
            by_height.setdefault(h, set()).add(bh)
    for h, hashes in sorted(by_height.items()):
        if len(hashes) > 1:
            problems.append(f"conflicting commits at height {h}: "
                            + ", ".join(sorted(x.hex()[:16] for x in hashes)))
    chains = [[b.hash for b in v.state.chain] for v in run.honest]
    for a in chains:
        for b in chains:
            n = min(len(a), len(b))
            if a[:n] != b[:n]:
                problems.append("honest chains are not prefixes of each other")
                break
    for v in run.honest:
        for h, signed in v.signed_precommits.items():
            if len(set(signed)) > 1:
                problems.append(f"{v.id} precommitted two blocks at height {h}")
        for cert in v.state.certificates:
            if not cert.verify(v.group, v.signer):
                problems.append(f"{v.id} holds an unverifiable certificate at height {cert.height}")
        if any(b < a for a, b in zip(v.progress, v.progress[1:])):
            problems.append(f"{v.id} moved backwards in (height, round)")
    return sorted(set(problems), key=problems.index)


def delayed_vote_scenario(seed: int = 0, trace: bool = False) -> Tuple[ConsensusRun, Block, Block]:
    """Four honest verifiers; A commits X while its votes reach nobody in time.

    Ordering the group C, A, D, B makes A primary of round 0, D of round 1
    and B of round 2. D only knows block Y, so it proposes Y in round 1; B
    and C are locked on X and refuse it; B re-proposes X in round 2.
    """
    group = VerifierGroup(("C", "A", "D", "B"))
    x = mine_block(seed, 0, 1, ZERO_HASH, 16)
    y = mine_block(seed, 1, 1, ZERO_HASH, 16)

    def cands(v, height, tip):
        if height != 1:
            return []
        return [y] if v.id == "D" else [x, y]

    def hook(src, dst, msg, now):
        if src != "A":
            return None
        name = type(msg).__name__
        if name == "CommitCertificate":
            return 50.0
        if name == "Proposal" and dst == "D":
            return 50.0
        if name == "Vote" and msg.height == 1 and msg.round == 0:
            if msg.phase is Phase.PREVOTE and dst == "D":
                return 50.0
            if msg.phase is Phase.PRECOMMIT and dst in ("B", "C"):
                return 50.0
        return None

    run = run_consensus(group, seed=seed, latency=(0.01, 0.1), drop_rate=0.0,
                        timeouts=Timeouts(2.0, 0.5, 1.0), max_step=20, target_height=1,
                        candidates=cands, delay_hook=hook, trace=trace)
    return run, x, y


@dataclass
class SafetyReport:
    runs: int
    violations: List[Tuple[int, List[str]]]
    committed_heights: int
    aborted_runs: int
    scenario_ok: bool
    trace_path: Optional[str] = None

    @property
    def ok(self) -> bool:
        return not self.violations and self.scenario_ok

    def to_dict(self) -> dict:
        return {"runs": self.runs, "ok": self.ok, "scenario_ok": self.scenario_ok,
                "committed_heights": self.committed_heights,
                "aborted_runs": self.aborted_runs,
                "violations": [{"run": i, "problems": p} for i, p in self.violations],
                "trace_path": self.trace_path}


def campaign_run(cfg: SimConfig, i: int, trace: bool = False) -> ConsensusRun:
    group = VerifierGroup(verifier_names(cfg.verifiers))
    seed = cfg.seed * 1_000_003 + i
    pool = CandidatePool(seed, cfg.candidate_servers, cfg.block_difficulty)
    run = run_consensus(group, seed=seed, latency=cfg.latency, drop_rate=cfg.drop_rate,
                        timeouts=Timeouts(*cfg.timeouts), max_step=cfg.max_step,
                        target_height=cfg.heights,
                        candidates=lambda v, h, tip: pool.blocks(h, tip),
                        byzantine=dict(cfg.byzantine), max_sim_time=cfg.max_sim_time,
                        trace=trace)
    if cfg.inject_double_commit and run.honest:
        forged = mine_block(seed + 1, 99, 1, ZERO_HASH, cfg.block_difficulty)
        run.honest[0].committed.append((1, 0, forged.hash))
    return run


def scenario_holds(run: ConsensusRun, x: Block, y: Block) -> bool:
    by_id = {v.id: v for v in run.verifiers}
    committed = {bh for v in run.verifiers for _, _, bh in v.committed}
    if committed != {x.hash} or any(len(v.committed) != 1 for v in run.verifiers):
        return False
    if by_id["D"].signed_prevotes.get((1, 1)) != y.hash:
        return False
    if any(by_id[n].signed_prevotes.get((1, 1)) != EMPTY_HASH for n in ("B", "C")):
        return False
    group = run.verifiers[0].group
    for n in ("B", "C", "D"):
        _, r, _ = by_id[n].committed[0]
        if group.primary_for(1, r) not in ("B", "C"):
            return False
    return not check_run(run)


def run_safety_campaign(cfg: SimConfig, trace_dir: Optional[str] = None) -> SafetyReport:
    byz = len(cfg.byzantine)
    if 3 * byz >= cfg.verifiers:
        raise ValueError("safety campaign needs fewer than M/3 byzantine verifiers")
    run, x, y = delayed_vote_scenario(cfg.seed)
    scenario_ok = scenario_holds(run, x, y)
    violations = []
    committed = 0
    aborted = 0
    trace_path = None
    for i in range(cfg.runs):
        run = campaign_run(cfg, i)
        problems = check_run(run)
        committed += max((v.state.height - 1 for v in run.honest), default=0)
        aborted += any(v.phase == "aborted" for v in run.honest)
        if problems:
            violations.append((i, problems))
            if trace_dir is not None and trace_path is None:
                trace_path = os.path.join(trace_dir, f"failure-run{i}.trace.jsonl")
                write_trace(cfg, i, trace_path)
    return SafetyReport(cfg.runs, violations, committed, aborted, scenario_ok, trace_path)


# ---------------------------------------------------------------------------
# Traces and replay


def write_trace(cfg: SimConfig, run_index: int, path: str) -> ConsensusRun:
    run = campaign_run(cfg, run_index, trace=True)
    with open(path, "w") as fh:
        fh.write(json.dumps({"version": TRACE_VERSION, "config": cfg.to_dict(),
                             "run": run_index}, sort_keys=True) + "\n")
        for ev in run.trace:
            fh.write(json.dumps(ev, sort_keys=True) + "\n")
        fh.write(json.dumps({"final": run.final_state(), "problems": check_run(run)},
                            sort_keys=True) + "\n")
    return run


@dataclass
class ReplayResult:
    matches: bool
    final: dict
    problems: List[str]


def replay(path: str) -> ReplayResult:
    """Re-run the execution a trace was recorded from and compare end states."""
    with open(path) as fh:
        lines = [json.loads(line) for line in fh if line.strip()]
    head, events, tail = lines[0], lines[1:-1], lines[-1]
    if head.get("version") != TRACE_VERSION:
        raise ValueError(f"trace version {head.get('version')!r} does not match {TRACE_VERSION!r}")
    cfg = SimConfig.from_dict(head["config"])
    run = campaign_run(cfg, head["run"], trace=True)
    replayed = [json.loads(json.dumps(ev, sort_keys=True)) for ev in run.trace]
    final = json.loads(json.dumps(run.final_state(), sort_keys=True))
    problems = check_run(run)
    matches = final == tail["final"] and replayed == events and problems == tail["problems"]
    return ReplayResult(matches, final, problems)
