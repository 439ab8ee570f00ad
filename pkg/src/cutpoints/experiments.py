"""Monte Carlo estimators checked against the exact formulas.

Every estimator returns an :class:`EstimateReport` holding the sufficient
statistics of its replicates, so reports over disjoint replicate ranges
merge exactly: ``run(seed, reps=2n)`` equals ``merge(run(seed, n, first=0),
run(seed, n, first=n))`` field for field.  Replicate ``i`` draws only from
its own counter-based substream, so ``workers`` changes wall time and
nothing else.

Thresholds used by the audits (4 standard errors, spreads <= 3) are
calibration choices; each record carries the raw numbers alongside.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidArguments, MemoryGuard
from .resistance_chain import (ChainLaw, TailTable, block_minimum_b, block_p_sum,
                               conditional_cut_probability, cutpoint_probability,
                               return_probability)
from .rng import CounterStream, derive_stream
from .trajectory_engine import _walk_batch, sample_cutpoint_patterns

Z_LIMIT = 4.0
DEFAULT_K_LIMIT = 1 << 16

_TAG_ESCAPE, _TAG_COND, _TAG_CENSUS = 1, 2, 3


@dataclass(frozen=True)
class EstimateReport:
    """Mean of per-replicate values with its standard error.

    ``se = sample std / sqrt(reps)``; with one replicate the SE is reported
    as 0 and ``se_defined`` is False.  ``z`` is set iff ``target`` is.
    """

    name: str
    reps: int
    total: float
    total_sq: float
    seed: int
    target: float | None = None
    first_replicate: int = 0
    params: dict = field(default_factory=dict)

    @property
    def estimate(self) -> float:
        return self.total / self.reps if self.reps else math.nan

    @property
    def se_defined(self) -> bool:
        return self.reps >= 2

    @property
    def se(self) -> float:
        if not self.se_defined:
            return 0.0
        n = self.reps
        var = max(self.total_sq - self.total * self.total / n, 0.0) / (n - 1)
        return math.sqrt(var / n)

    @property
    def z(self) -> float | None:
        if self.target is None:
            return None
        if self.se == 0.0:
            return 0.0 if self.estimate == self.target else math.copysign(math.inf, self.estimate - self.target)
        return (self.estimate - self.target) / self.se

    def within(self, k: float = Z_LIMIT) -> bool:
        return self.z is not None and abs(self.z) <= k

    def ci(self, level: float = 0.95) -> tuple[float, float]:
        from scipy.stats import norm
        h = norm.ppf(0.5 + level / 2) * self.se
        return self.estimate - h, self.estimate + h

    def as_record(self) -> dict:
        return {"estimator": self.name, "seed": self.seed, "reps": self.reps,
                "estimate": self.estimate, "se": self.se, "se_defined": self.se_defined,
                "target": self.target, "z": self.z, **self.params}

    @classmethod
    def from_values(cls, name, values, seed, target=None, first_replicate=0, **params):
        v = np.asarray(values, dtype=np.float64)
        return cls(name, int(v.size), float(v.sum()), float((v * v).sum()), seed,
                   target, first_replicate, params)


def merge(a: EstimateReport, b: EstimateReport) -> EstimateReport:
    """Combine reports over adjacent replicate ranges of the same experiment."""
    if (a.name, a.seed, a.target, a.params) != (b.name, b.seed, b.target, b.params):
        raise InvalidArguments("can only merge reports of the same experiment")
    lo, hi = (a, b) if a.first_replicate <= b.first_replicate else (b, a)
    if lo.first_replicate + lo.reps != hi.first_replicate:
        raise InvalidArguments("replicate ranges are not adjacent")
    return replace(lo, reps=lo.reps + hi.reps, total=lo.total + hi.total,
                   total_sq=lo.total_sq + hi.total_sq)


def _split(reps: int, first: int, workers: int):
    workers = max(1, min(workers, reps)) if reps else 1
    edges = np.linspace(0, reps, workers + 1).astype(int)
    return [(first + int(a), int(b - a)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def _parallel(fn, reps: int, first: int, workers: int):
    parts = _split(reps, first, workers)
    if len(parts) <= 1:
        return [fn(first, reps)]
    with ThreadPoolExecutor(len(parts)) as ex:
        return list(ex.map(lambda p: fn(*p), parts))


def _merge_all(reports):
    out = reports[0]
    for r in reports[1:]:
        out = merge(out, r)
    return out


def _check_reps(reps):
    if reps < 1:
        raise InvalidArguments("reps must be >= 1")


def mc_escape(chain: ChainLaw, table: TailTable, k: int, reps: int, seed: int, *,
              N: int | None = None, first_replicate: int = 0, workers: int = 1) -> EstimateReport:
    """Estimate the probability that a walk from ``k + 1`` never returns to ``k``.

    The walk is simulated until it hits ``k`` or reaches ``N`` (default
    ``4k``); from ``N`` it returns with probability ``t_N / t_k``.  Target
    is ``p_k``.
    """
    _check_reps(reps)
    N = max(4 * k, k + 2) if N is None else int(N)
    if table.profile.kind == "explicit":
        N = min(N, table.profile.cutoff + 1)
    if not k < N:
        raise InvalidArguments("need k < N")
    back = return_probability(table, N, k)
    up = chain.up_table(N - 1)
    rs = CounterStream(seed, derive_stream(_TAG_ESCAPE, k))

    def run(first, n):
        rep = np.arange(first, first + n, dtype=np.uint64)
        pos = np.full(n, k + 1, dtype=np.int64)
        ctr = np.zeros(n, dtype=np.uint64)
        _walk_batch(up, np.arange(n), pos, rep, ctr, rs, k, N)
        reached = pos == N
        returned = rs.uniform(rep, ctr) < back
        return EstimateReport.from_values("escape", reached & ~returned, seed,
                                          cutpoint_probability(table, k), first, k=k, N=N)

    return _merge_all(_parallel(run, reps, first_replicate, workers))


def mc_conditional(chain: ChainLaw, table: TailTable, j: int, k: int, reps: int, seed: int, *,
                   first_replicate: int = 0, workers: int = 1) -> EstimateReport:
    """Frequency with which a walk from ``j + 1`` hits ``k + 1`` before ``j``; target ``Q_k(j)``."""
    _check_reps(reps)
    target = conditional_cut_probability(table, j, k)
    up = chain.up_table(k)
    rs = CounterStream(seed, derive_stream(_TAG_COND, j, k))

    def run(first, n):
        rep = np.arange(first, first + n, dtype=np.uint64)
        pos = np.full(n, j + 1, dtype=np.int64)
        ctr = np.zeros(n, dtype=np.uint64)
        _walk_batch(up, np.arange(n), pos, rep, ctr, rs, j, k + 1)
        return EstimateReport.from_values("conditional", pos == k + 1, seed, target,
                                          first, j=j, k=k)

    return _merge_all(_parallel(run, reps, first_replicate, workers))


def level_frequencies(chain: ChainLaw, table: TailTable, K: int, reps: int, seed: int, *,
                      method: str = "ladder", first_replicate: int = 0) -> list:
    """Per-level cutpoint frequencies from the exact sampler, each against ``p_k``."""
    _check_reps(reps)
    b = sample_cutpoint_patterns(chain, table, K, reps, seed, method=method,
                                 first_replicate=first_replicate)
    p = table.cutpoint_probabilities(1, K)
    return [EstimateReport.from_values("level", b.indicators[:, k - 1], seed, float(p[k - 1]),
                                       first_replicate, k=k, method=method)
            for k in range(1, K + 1)]


def pattern_conditional(chain: ChainLaw, table: TailTable, j: int, k: int, reps: int, seed: int, *,
                        method: str = "ladder") -> EstimateReport:
    """Frequency of ``j`` being a cutpoint among exact samples where ``k`` is one."""
    if not 1 <= j < k:
        raise InvalidArguments("need 1 <= j < k")
    b = sample_cutpoint_patterns(chain, table, k, reps, seed, method=method)
    sel = b.indicators[:, k - 1]
    return EstimateReport.from_values("pattern_conditional", b.indicators[sel, j - 1], seed,
                                      conditional_cut_probability(table, j, k), 0,
                                      j=j, k=k, method=method)


@dataclass
class BlockStats:
    """Per-replicate statistics of the dyadic block ``(2^m, 2^{m+1}]``.

    ``ell`` holds the largest cutpoint of the block, or -1 where the block
    has none.
    """

    m: int
    A_block: np.ndarray       # A_{m,m+1}
    A_wide: np.ndarray        # A_{m-1,m+1}
    hit: np.ndarray           # A_{m,m+1} > 0
    ell: np.ndarray
    no_cut: np.ndarray        # no cutpoint in [1, 2^{m+1}]


@dataclass
class BlockCensus:
    stats: BlockStats
    a_hat: EstimateReport
    expected_A: EstimateReport
    no_cutpoint: EstimateReport


def block_stats(indicators: np.ndarray, m: int) -> BlockStats:
    lo, hi = 2 ** m, 2 ** (m + 1)
    blk = indicators[:, lo:hi]                  # levels lo+1 .. hi
    wide = indicators[:, 2 ** (m - 1):hi]
    A = blk.sum(axis=1)
    hit = A > 0
    last = hi - np.argmax(blk[:, ::-1], axis=1)
    ell = np.where(hit, last, -1)
    return BlockStats(m, A, wide.sum(axis=1), hit, ell, ~indicators[:, :hi].any(axis=1))


def block_census(chain: ChainLaw, table: TailTable, m: int, reps: int, seed: int, *,
                 method: str = "ladder", first_replicate: int = 0, workers: int = 1,
                 k_limit: int = DEFAULT_K_LIMIT) -> BlockCensus:
    """Exact-sampler census of block ``m``: ``a_m``, ``E[A_{m-1,m+1}]`` and no-cutpoint probability."""
    _check_reps(reps)
    if m < 1:
        raise InvalidArguments("need m >= 1")
    K = 2 ** (m + 1)
    if K > k_limit:
        raise MemoryGuard(f"block m={m} needs K={K} > limit {k_limit}")
    stream = derive_stream(_TAG_CENSUS, m)
    target = block_p_sum(table, m)

    def run(first, n):
        b = sample_cutpoint_patterns(chain, table, K, n, seed, method=method,
                                     first_replicate=first, stream=stream)
        return block_stats(b.indicators, m)

    parts = _parallel(run, reps, first_replicate, workers)
    st = BlockStats(m, *(np.concatenate([getattr(p, f) for p in parts])
                         for f in ("A_block", "A_wide", "hit", "ell", "no_cut")))
    mk = EstimateReport.from_values
    return BlockCensus(
        st,
        mk("a_m", st.hit, seed, None, first_replicate, m=m),
        mk("E[A_{m-1,m+1}]", st.A_wide, seed, target, first_replicate, m=m),
        mk("P[no cutpoint]", st.no_cut, seed, None, first_replicate, m=m, K=K),
    )


@dataclass
class AuditRecord:
    m: int
    lhs: float
    b_m: float
    a_hat: float
    a_se: float
    reps: int
    status: str

    @property
    def rhs(self) -> float:
        return self.a_hat * self.b_m

    @property
    def margin(self) -> float:
        return self.lhs - self.rhs

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def as_record(self) -> dict:
        return {"m": self.m, "lhs": self.lhs, "rhs": self.rhs, "b_m": self.b_m,
                "a_hat": self.a_hat, "se": self.a_se, "reps": self.reps,
                "margin": self.margin, "status": self.status}


def inequality_audit(chain: ChainLaw, table: TailTable, m: int, reps: int, seed: int, *,
                     min_reps: int = 100, workers: int = 1, census: BlockCensus | None = None) -> AuditRecord:
    """Check ``sum p_j >= a_m b_m`` with ``a_m`` replaced by its lower 4-SE bound."""
    census = census or block_census(chain, table, m, reps, seed, workers=workers)
    a = census.a_hat
    lhs = block_p_sum(table, m)
    b = block_minimum_b(table, m)
    if a.reps < min_reps or not a.se_defined:
        status = "inconclusive"
    else:
        status = "pass" if lhs >= (a.estimate - Z_LIMIT * a.se) * b else "fail"
    return AuditRecord(m, lhs, b, a.estimate, a.se, a.reps, status)


@dataclass
class SummabilityTable:
    """Per-block estimates of ``a_m`` with ``a_m m^2``.

    Evidence for ``a_m = O(1/m^2)``, not a verification of it.
    """

    rows: list = field(default_factory=list)       # (m, a_hat, se, a_hat * m^2)
    violations: list = field(default_factory=list)  # m where a_{m} exceeds a_{m-1} beyond 2 SE

    @property
    def nonincreasing(self) -> bool:
        return not self.violations

    def growth_ratio(self) -> float:
        """``max_m a_m m^2`` over the first row's value."""
        if not self.rows:
            return math.nan
        return max(r[3] for r in self.rows) / self.rows[0][3]


def summability_table(chain: ChainLaw, table: TailTable, m_range, reps: int, seed: int, *,
                      workers: int = 1, trend_se: float = 2.0) -> SummabilityTable:
    out = SummabilityTable()
    prev = None
    for m in m_range:
        a = block_census(chain, table, m, reps, seed, workers=workers).a_hat
        out.rows.append((m, a.estimate, a.se, a.estimate * m * m))
        if prev is not None and a.estimate - prev.estimate > trend_se * math.hypot(a.se, prev.se):
            out.violations.append(m)
        prev = a
    return out
