"""Double-spend risk: committee corruption, the block race and their product.

Parties are identical, so an attacker holding ``T`` of ``N`` parties owns a
``T/N`` share of both hash power and verifier seats. The attack needs a
corrupted quorum (``P_f``) and a winning secret chain (``P_s``).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence

import numpy as np
from scipy import stats

from .pbft import quorum

EXACT = "exact"
UPPER_BOUND = "upper_bound"
MONTE_CARLO = "monte_carlo"

# walks whose catch-up chance has dropped below this are scored as failures
RACE_NEGLIGIBLE = 1e-12
# step budget for walks that never drift away (attacker share >= 1/2)
RACE_STEP_CAP = 100_000
MC_BATCH = 1 << 18


@dataclass(frozen=True)
class AttackScenario:
    total_parties: int
    attacker_parties: int
    verifier_count: int
    confirmations: int

    def __post_init__(self):
        if self.total_parties < 1:
            raise ValueError("N must be >= 1")
        if not 0 <= self.attacker_parties <= self.total_parties:
            raise ValueError("need 0 <= T <= N")
        if self.verifier_count < 1:
            raise ValueError("M must be >= 1")
        if self.confirmations < 0:
            raise ValueError("z must be >= 0")

    @property
    def share(self) -> float:
        return self.attacker_parties / self.total_parties

    @property
    def secret_chain_mean(self) -> float:
        """Expected secret-chain length after z honest blocks: z T / (N - T)."""
        n, t = self.total_parties, self.attacker_parties
        if t == n:
            return math.inf
        return self.confirmations * t / (n - t)


@dataclass(frozen=True)
class ProbabilityResult:
    value: float
    kind: str
    trials: Optional[int] = None
    stderr: Optional[float] = None

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"probability out of range: {self.value}")
        if self.kind not in (EXACT, UPPER_BOUND, MONTE_CARLO):
            raise ValueError(f"unknown kind {self.kind!r}")

    def __float__(self) -> float:
        return self.value


def _check_nt(n: int, t: int) -> None:
    if n < 1 or not 0 <= t <= n:
        raise ValueError("need N >= 1 and 0 <= T <= N")


def pf_chernoff_bound(n: int, t: int, m: int) -> ProbabilityResult:
    """Multiplicative Chernoff bound on a corrupted quorum.

    With ``mu = M T / N`` and ``delta = 2N/(3T) - 1``: ``exp(-delta^2 mu / 3)``
    when ``N/3 <= T <= 2N/3`` and ``exp(-delta mu / 3)`` when ``T < N/3``.
    Vacuous (1) from ``T >= 2N/3``; 0 when there is no attacker at all.
    """
    _check_nt(n, t)
    if m < 1:
        raise ValueError("M must be >= 1")
    if t == 0:
        return ProbabilityResult(0.0, UPPER_BOUND)
    if 3 * t >= 2 * n:
        return ProbabilityResult(1.0, UPPER_BOUND)
    delta = 2 * n / (3 * t) - 1
    mu = m * t / n
    exponent = delta * delta * mu / 3 if 3 * t >= n else delta * mu / 3
    return ProbabilityResult(min(1.0, math.exp(-exponent)), UPPER_BOUND)


def pf_exact(n: int, t: int, m: int) -> ProbabilityResult:
    """P(Binomial(M, T/N) >= quorum(M)), the same quorum the verifiers use."""
    _check_nt(n, t)
    if not 1 <= m <= 10_000:
        raise ValueError("M must be in [1, 10^4]")
    v = float(stats.binom.sf(quorum(m) - 1, m, t / n))
    return ProbabilityResult(min(1.0, max(0.0, v)), EXACT)


def catch_up_probability(n: int, t: int, z: int) -> ProbabilityResult:
    """Gambler's-ruin chance of ever closing a ``z``-block gap."""
    _check_nt(n, t)
    if z < 0:
        raise ValueError("z must be >= 0")
    if 2 * t >= n:
        return ProbabilityResult(1.0, EXACT)
    return ProbabilityResult((t / (n - t)) ** z, EXACT)


def ps_double_spend(s: AttackScenario) -> ProbabilityResult:
    """Chance the secret chain overtakes after ``z`` confirmations.

    Sum over the Poisson secret-chain length ``k``: for ``k <= z`` the
    attacker still has to catch up ``z - k`` blocks, beyond that it has
    already won. Both parts are summed as non-negative terms, so no
    cancellation occurs for small results.
    """
    n, t, z = s.total_parties, s.attacker_parties, s.confirmations
    if 2 * t >= n or z == 0:
        return ProbabilityResult(1.0, EXACT)
    if t == 0:
        return ProbabilityResult(0.0, EXACT)
    lam = s.secret_chain_mean
    log_r = math.log(t / (n - t))
    total = 0.0
    for k in range(z + 1):
        log_pk = k * math.log(lam) - lam - math.lgamma(k + 1)
        total += math.exp(log_pk + (z - k) * log_r)
    total += float(stats.poisson.sf(z, lam))
    return ProbabilityResult(min(1.0, total), EXACT)


def p_att(s: AttackScenario) -> ProbabilityResult:
    """Upper bound on a successful double spend: Chernoff bound times ``P_s``.

    For ``T/N >= 1/2`` the race factor is 1 and only the bound remains;
    beyond ``2/3`` the attacker owns a quorum outright.
    """
    n, t = s.total_parties, s.attacker_parties
    if 3 * t > 2 * n:
        return ProbabilityResult(1.0, UPPER_BOUND)
    bound = pf_chernoff_bound(n, t, s.verifier_count).value
    return ProbabilityResult(min(1.0, bound * ps_double_spend(s).value), UPPER_BOUND)


def simulate_race(q: float, deficits: np.ndarray, rng: np.random.Generator,
                  step_cap: int = RACE_STEP_CAP) -> np.ndarray:
    """Random-walk the attacker's deficit; True where it reaches zero.

    Each step the attacker finds the next block with probability ``q``.
    When ``q < 1/2``, a walk is abandoned once its deficit ``D`` satisfies
    ``(q/p)^D < 1e-12``. Otherwise walks are cut after ``step_cap`` steps
    and counted as failures, which can only bias the estimate downwards.
    """
    d = np.asarray(deficits, dtype=np.int64).copy()
    won = d <= 0
    if q <= 0.0:
        return won
    if q >= 1.0:
        return np.ones_like(won)
    cap = np.iinfo(np.int64).max
    if q < 0.5:
        cap = int(math.ceil(math.log(RACE_NEGLIGIBLE) / math.log(q / (1 - q))))
    active = np.flatnonzero((d > 0) & (d < cap))
    steps = 0
    while active.size and steps < step_cap:
        # advance every live walk by a chunk of steps at once
        width = int(min(max(16, (1 << 22) // active.size), 4096, step_cap - steps))
        moves = np.where(rng.random((active.size, width)) < q, -1, 1).astype(np.int64)
        path = d[active, None] + np.cumsum(moves, axis=1)
        zero, over = path <= 0, path >= cap
        first_zero = np.where(zero.any(axis=1), zero.argmax(axis=1), width)
        first_over = np.where(over.any(axis=1), over.argmax(axis=1), width)
        hit = first_zero < first_over
        won[active[hit]] = True
        d[active] = path[:, -1]
        active = active[~hit & (first_over == width)]
        steps += width
    return won


def monte_carlo_double_spend(s: AttackScenario, trials: int, seed: int) -> ProbabilityResult:
    """Seeded joint simulation: committee draw, Poisson head start, block race."""
    if trials < 1000:
        raise ValueError("trials must be >= 1000")
    rng = np.random.default_rng(seed)
    q = s.share
    need = quorum(s.verifier_count)
    lam = s.secret_chain_mean
    wins = 0
    left = trials
    while left:
        n = min(left, MC_BATCH)
        left -= n
        corrupted = int(np.count_nonzero(rng.binomial(s.verifier_count, q, size=n) >= need))
        if not corrupted:
            continue
        if math.isinf(lam):
            wins += corrupted
            continue
        head = rng.poisson(lam, size=corrupted)
        wins += int(np.count_nonzero(simulate_race(q, s.confirmations - head, rng)))
    p = wins / trials
    return ProbabilityResult(p, MONTE_CARLO, trials, math.sqrt(p * (1 - p) / trials))


GRID_COLUMNS = ("N", "T", "M", "z", "p_f_bound", "p_f_exact", "p_s", "p_att",
                "mc_estimate", "mc_stderr")


def grid_rows(scenarios: Iterable[AttackScenario], mc_trials: int = 0,
              seed: int = 0) -> List[dict]:
    """Evaluate every scenario; Monte Carlo columns stay empty when ``mc_trials`` is 0."""
    rows = []
    for i, s in enumerate(scenarios):
        n, t, m, z = s.total_parties, s.attacker_parties, s.verifier_count, s.confirmations
        row = {"N": n, "T": t, "M": m, "z": z,
               "p_f_bound": pf_chernoff_bound(n, t, m).value,
               "p_f_exact": pf_exact(n, t, m).value,
               "p_s": ps_double_spend(s).value,
               "p_att": p_att(s).value,
               "mc_estimate": "", "mc_stderr": ""}
        if mc_trials:
            mc = monte_carlo_double_spend(s, mc_trials, int(np.random.SeedSequence([seed, i])
                                                            .generate_state(1)[0]))
            row["mc_estimate"], row["mc_stderr"] = mc.value, mc.stderr
        rows.append(row)
    return rows


def grid_to_csv(rows: Iterable[dict], columns: Sequence[str] = GRID_COLUMNS) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()
