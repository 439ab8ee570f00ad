"""Simulation of the birth-and-death chain and cutpoint detection.

Level ``k`` is a cutpoint of a walk from 1 iff the walk never returns to
``k`` after its first passage of ``k + 1``.  A finite run censored at the
first passage of ``N`` can only give a provisional answer; the probability
that the infinite continuation still spoils ``k`` is ``t_N / t_k``.

Two exact (uncensored) samplers of the indicator pattern on ``[1, K]`` are
provided:

``regeneration``
    Simulate to the first passage of ``N``, flip a coin with the return
    probability ``t_N / t_K``, and on a return continue from ``K`` (the
    descent from ``N`` down to ``K`` only touches levels ``>= K``, so it can
    be simulated with :func:`conditioned_descent` or skipped).

``ladder``
    Split the walk at the first-passage times of ``2, 3, ..., K + 1``.  The
    pieces are independent; piece ``i`` (from ``i`` until ``i + 1``) has a
    minimum with an explicit law from the gambler's-ruin formula, and the
    minimum of the infinite remainder after reaching ``K + 1`` has law
    ``P(min >= a) = 1 - t_{K+1} / t_{a-1}``.  Level ``j`` is a cutpoint iff
    every later piece, and the remainder, stays above ``j``.  Cost is
    ``O(K log K)`` per replicate and independent of walk length.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (DivergentTail, InsufficientData, InvalidArguments, InvalidInput,
                     NumericFailure, OutOfRange)
from .resistance_chain import ChainLaw, TailTable, return_probability
from .rng import CounterStream
from .trajectory import StopRule, Trajectory, first_passage
from .tree_walk import walk_statistics

DEFAULT_HORIZON = 10 ** 9
STREAM_PATTERN = 101
STREAM_DESCENT = 202


def simulate(chain: ChainLaw, start: int, stop_rule: StopRule, seed: int, *,
             stream: int = 0, replicate: int = 0,
             max_steps: int = DEFAULT_HORIZON) -> Trajectory:
    """Sample one path; step ``n`` uses variate ``(seed, stream, replicate, n)``."""
    if start < 1 or start > chain.profile.max_state:
        raise InvalidArguments(f"start state {start} outside the chain")
    if stop_rule.kind in ("first_passage", "absorb") and stop_rule.level > chain.profile.max_state:
        raise InvalidArguments(f"stop level {stop_rule.level} beyond chain end "
                               f"{chain.profile.max_state}")
    target = stop_rule.level if stop_rule.kind != "horizon" else None
    limit = min(max_steps, stop_rule.level) if stop_rule.kind == "horizon" else max_steps
    end = chain.profile.max_state
    cap = end - 1
    rs = CounterStream(seed, stream)
    up = chain.up_table(int(min(max(64, 2 * start), cap)))
    states = [start]
    x, step = start, 0
    buf = rs.block(replicate, 0, 1024)
    used = 0
    while x != target and step < limit and x != end:
        if used == len(buf):
            buf = rs.block(replicate, step, min(len(buf) * 2, 1 << 20))
            used = 0
        if x >= len(up):
            up = chain.up_table(int(min(2 * x, cap)))
        x = x + 1 if buf[used] < up[x] else x - 1
        used += 1
        step += 1
        states.append(x)
    early = x != target and stop_rule.kind != "horizon"
    return Trajectory(np.asarray(states, dtype=np.int64), stop_rule, "line",
                      {"seed": seed, "stream": stream, "replicate": replicate}, early)


# --- detectors ---------------------------------------------------------------

@dataclass
class CutpointReport:
    """Cutpoint indicators on levels ``1..K`` (arrays indexed by ``k - 1``)."""

    K: int
    indicator: np.ndarray
    method: str
    N: int | None
    bias_bound: np.ndarray
    first_passage: np.ndarray | None = None
    spoiled: np.ndarray | None = None

    def cutpoints(self) -> list:
        return [k + 1 for k in np.flatnonzero(self.indicator)]

    def __getitem__(self, k: int) -> bool:
        if not 1 <= k <= self.K:
            raise OutOfRange(f"level {k} outside [1, {self.K}]")
        return bool(self.indicator[k - 1])


def _censored_indicators(states: np.ndarray, K: int):
    """Single O(T) scan: first passage times and the revisit-after-passage flags."""
    fp = np.full(K + 2, -1, dtype=np.int64)
    spoiled = np.zeros(K + 2, dtype=bool)
    runmax = 0
    for t, x in enumerate(states.tolist()):
        if x > runmax:
            if x <= K + 1:
                fp[x] = t
            runmax = x
        elif x < runmax and x <= K:
            spoiled[x] = True
    return fp, spoiled


def detect_cutpoints_censored(traj: Trajectory, K: int, table: TailTable | None = None) -> CutpointReport:
    """Provisional cutpoint indicators of a path censored at first passage of ``N``."""
    rule = traj.stop_rule
    if rule is None or rule.kind != "first_passage":
        raise InvalidInput("trajectory must be censored at a first passage")
    N = rule.level
    s = np.asarray(traj.states)
    if traj.censored_early or s[-1] != N or np.count_nonzero(s == N) != 1:
        raise InvalidInput(f"trajectory does not end at its first passage of {N}")
    if s[0] != 1:
        raise InvalidInput("cutpoint detection assumes the walk starts at 1")
    if not 1 <= K < N:
        raise InvalidArguments(f"need 1 <= K < N, got K={K}, N={N}")
    fp, spoiled = _censored_indicators(s, K)
    if table is not None:
        t = table.tail_mid
        bias = np.array([t[N] / t[k] for k in range(1, K + 1)])
    else:
        bias = np.full(K, np.nan)
    return CutpointReport(K, ~spoiled[1:K + 1], f"censored({N})", N, bias, fp[1:K + 2],
                          spoiled[1:K + 1].copy())


def definitional_cut_times(states) -> list:
    """Times ``t`` at which ``{S_0..S_t}`` and ``{S_{t+1}..}`` are disjoint.

    Direct use of the definition, maintaining the past set and the future
    multiset as ``t`` advances.
    """
    s = list(states)
    future = {}
    for x in s:
        future[x] = future.get(x, 0) + 1
    past = set()
    shared = 0
    out = []
    for t, x in enumerate(s):
        future[x] -= 1
        if future[x] == 0 and x in past:
            shared -= 1
        if x not in past:
            past.add(x)
            if future[x] > 0:
                shared += 1
        if shared == 0 and t + 1 < len(s):
            out.append(t)
    return out


def definitional_cutpoints(states) -> set:
    """States that are cutpoints of the finite path by the definition."""
    s = list(states)
    return {s[t] for t in definitional_cut_times(s)}


def detect_strong_cutpoints(traj, chain) -> list:
    """Interior times ``k`` with ``p(S_i, S_j) = 0`` for all ``i < k < j``.

    ``chain`` needs an ``adjacent(x, y)`` predicate.  Quadratic in the path
    length; the endpoints are excluded because the condition is vacuous there.
    """
    s = traj.as_tuple() if isinstance(traj, Trajectory) else tuple(traj)
    T = len(s)
    blocked = np.zeros(T + 1, dtype=np.int64)
    for i in range(T):
        for j in range(i + 2, T):
            if chain.adjacent(s[i], s[j]):
                blocked[i + 1] += 1
                blocked[j] -= 1
    cover = np.cumsum(blocked)[:T]
    return [k for k in range(1, T - 1) if cover[k] == 0]


# --- conditioned descent -----------------------------------------------------

def _descent_up(chain: ChainLaw, table: TailTable, K: int, top: int) -> np.ndarray:
    """h-transformed up probabilities on ``K..top`` for ``h(x) = t_x / t_K``."""
    if top + 1 > table.k_max + 1:
        raise OutOfRange(f"descent ceiling {top} beyond tabulated range {table.k_max}")
    up = chain.up_table(top)[:top + 1].copy()
    t = table.tail_mid
    x = np.arange(K + 1, top + 1)
    u = up[x] * t[x + 1] / t[x]
    d = (1 - up[x]) * t[x - 1] / t[x]
    total = u + d
    dev = np.abs(total - 1).max(initial=0.0)
    if dev > 1e-6:
        raise NumericFailure(f"h-transformed rows off by {dev:.3g}; tail enclosure too wide")
    if dev > 1e-9:
        u = u / total
    out = np.full(top + 1, np.nan)
    out[x] = u
    return out


def conditioned_descent(chain: ChainLaw, table: TailTable, N: int, K: int, seed: int, *,
                        ceiling: int | None = None, stream: int = STREAM_DESCENT,
                        replicate: int = 0) -> Trajectory:
    """Path from ``N`` to its first visit of ``K``, conditioned on that visit happening.

    Uses ``p'(x, y) = p(x, y) h(y) / h(x)`` with ``h(x) = t_x / t_K``.  The
    conditioned walk may climb far above ``N`` before descending; reaching
    ``ceiling`` (default: the table's range) stops it with
    ``censored_early`` set.
    """
    if not 1 <= K < N:
        raise InvalidArguments(f"need 1 <= K < N, got K={K}, N={N}")
    if not table.profile.transient:
        raise DivergentTail("descent needs a transient profile")
    ceiling = table.k_max if ceiling is None else int(ceiling)
    if ceiling <= N:
        raise InvalidArguments("ceiling must exceed N")
    up = _descent_up(chain, table, K, ceiling - 1)
    rs = CounterStream(seed, stream)
    states = [N]
    x, step, used = N, 0, 0
    buf = rs.block(replicate, 0, 1024)
    while x != K and x != ceiling:
        if used == len(buf):
            buf = rs.block(replicate, step, min(2 * len(buf), 1 << 20))
            used = 0
        x = x + 1 if buf[used] < up[x] else x - 1
        used += 1
        step += 1
        states.append(x)
    return Trajectory(np.asarray(states, dtype=np.int64), StopRule("absorb", K), "line",
                      {"seed": seed, "stream": stream, "replicate": replicate,
                       "conditioned": f"h=t_x/t_{K}"}, censored_early=x != K)


# --- batched walkers ---------------------------------------------------------

class _Tracker:
    """Spoil flags and first passages for levels ``<= K`` across a batch."""

    def __init__(self, R: int, K: int):
        self.K = K
        self.spoiled = np.zeros((R, K + 2), dtype=bool)
        self.fp = np.full((R, K + 2), -1, dtype=np.int64)
        self.fp[:, 1] = 0
        self.runmax = np.ones(R, dtype=np.int64)
        self.time = np.zeros(R, dtype=np.int64)


def _walk_batch(up, idx, pos, rep, ctr, rs: CounterStream, lo: int, hi: int,
                tracker: _Tracker | None = None, max_steps: int = DEFAULT_HORIZON):
    """Advance walkers ``idx`` until each reaches ``lo`` or ``hi``.

    ``up`` is indexed by state and must cover ``lo+1 .. hi-1``.  Arrays are
    updated in place.  Returns the walker indices stopped by ``max_steps``.
    """
    a = np.asarray(idx, dtype=np.int64)
    p, c = pos[a].copy(), ctr[a].copy()
    r = rep[a]
    if tracker is not None:
        rm, tm = tracker.runmax[a].copy(), tracker.time[a].copy()
    steps = 0
    live = (p != lo) & (p < hi)
    K = tracker.K if tracker is not None else 0

    def flush(mask):
        sel = a[mask]
        pos[sel], ctr[sel] = p[mask], c[mask]
        if tracker is not None:
            tracker.runmax[sel], tracker.time[sel] = rm[mask], tm[mask]

    flush(~live)
    a, p, c, r = a[live], p[live], c[live], r[live]
    if tracker is not None:
        rm, tm = rm[live], tm[live]
    while a.size and steps < max_steps:
        u = rs.uniform(r, c)
        c += 1
        p += np.where(u < up[p], 1, -1)
        if tracker is not None:
            tm += 1
            new = p > rm
            rec = new & (p <= K + 1)
            if rec.any():
                tracker.fp[a[rec], p[rec]] = tm[rec]
            rm = np.maximum(rm, p)
            sp = (p < rm) & (p <= K)
            if sp.any():
                tracker.spoiled[a[sp], p[sp]] = True
        steps += 1
        done = (p == lo) | (p >= hi)
        if done.any():
            flush(done)
            keep = ~done
            a, p, c, r = a[keep], p[keep], c[keep], r[keep]
            if tracker is not None:
                rm, tm = rm[keep], tm[keep]
    if a.size:
        flush(np.ones(a.size, dtype=bool))
    return a


@dataclass
class PatternBatch:
    """Exact cutpoint indicators on ``[1, K]`` for a range of replicates."""

    K: int
    indicators: np.ndarray          # (reps, K) bool, column k-1 is level k
    method: str
    N: int | None
    censored: np.ndarray | None     # first-round (censored at N) indicators
    first_passage: np.ndarray | None
    seed: int
    first_replicate: int

    @property
    def reps(self) -> int:
        return self.indicators.shape[0]


def _check_exact(table: TailTable, K: int):
    if not table.profile.transient:
        raise DivergentTail("exact cutpoint sampling needs a transient profile")
    if K < 1:
        raise InvalidArguments("need K >= 1")


def default_censor_level(K: int) -> int:
    return 4 * K


def _regeneration(chain, table, K, N, rs, rep, descent):
    R = len(rep)
    if N > table.k_max + 1:
        raise OutOfRange(f"censor level N={N} beyond table range {table.k_max}")
    up = chain.up_table(N - 1)
    pos = np.ones(R, dtype=np.int64)
    ctr = np.zeros(R, dtype=np.uint64)
    tr = _Tracker(R, K)
    idx = np.arange(R)
    _walk_batch(up, idx, pos, rep, ctr, rs, 0, N, tr)
    censored = ~tr.spoiled[:, 1:K + 1]
    back_p = return_probability(table, N, K)
    if descent == "simulate":
        hup = _descent_up(chain, table, K, table.k_max)
    active = idx
    while active.size:
        u = rs.uniform(rep[active], ctr[active])
        ctr[active] += 1
        back = active[u < back_p]
        if back.size and descent == "simulate":
            pos[back] = N
            stuck = _walk_batch(hup, back, pos, rep, ctr, rs, K, table.k_max + 1)
            if stuck.size or np.any(pos[back] != K):
                raise NumericFailure("conditioned descent left the tabulated range; "
                                     "use descent='skip'")
        pos[back] = K
        tr.spoiled[back, K] = True
        tr.runmax[back] = np.maximum(tr.runmax[back], N)
        _walk_batch(up, back, pos, rep, ctr, rs, 0, N, tr)
        active = back
    return ~tr.spoiled[:, 1:K + 1], censored, tr.fp[:, 1:K + 2]


def _ladder(table, K, rs, rep):
    # Thresholds are written in tails rather than prefix sums: the prefix form
    # (P_i - u P_{i+1}) / (1 - u) cancels catastrophically once r_i drops
    # below the spacing of doubles near P_i (geometric profiles, i > ~50).
    t = table.tail_mid
    r = table.r_values
    if K + 1 > table.k_max + 1:
        raise OutOfRange(f"K={K} beyond table range {table.k_max}")
    R = len(rep)
    out = np.empty((R, K), dtype=bool)
    chunk = max(1, (1 << 22) // (K + 2))
    desc = -t[1:K + 1]
    for s in range(0, R, chunk):
        rr = rep[s:s + chunk]
        n = len(rr)
        u = rs.uniform(rr[:, None], np.arange(1, K + 2, dtype=np.uint64)[None, :])
        mins = np.full((n, K + 2), np.iinfo(np.int64).max, dtype=np.int64)
        for i in range(2, K + 1):
            ui = u[:, i - 1]
            thr = t[i + 1] + r[i] / (1.0 - ui)
            mins[:, i] = 1 + np.searchsorted(desc[:i - 1], -thr, side="left")
        thr = t[K + 1] / (1.0 - u[:, K])
        mins[:, K + 1] = 1 + np.searchsorted(desc, -thr, side="left")
        suf = np.minimum.accumulate(mins[:, ::-1], axis=1)[:, ::-1]
        out[s:s + chunk] = suf[:, 2:K + 2] > np.arange(1, K + 1)
    return out


def sample_cutpoint_patterns(chain: ChainLaw, table: TailTable, K: int, reps: int, seed: int, *,
                             method: str = "ladder", N: int | None = None,
                             first_replicate: int = 0, descent: str = "skip",
                             stream: int = STREAM_PATTERN) -> PatternBatch:
    """Exact samples of the infinite walk's cutpoint indicators on ``[1, K]``.

    Replicate ``i`` depends only on ``(seed, stream, i)``, so any split of
    the replicate range gives the same rows.
    """
    _check_exact(table, K)
    if reps < 0:
        raise InvalidArguments("reps must be >= 0")
    rs = CounterStream(seed, stream)
    rep = np.arange(first_replicate, first_replicate + reps, dtype=np.uint64)
    if method == "ladder":
        ind = _ladder(table, K, rs, rep)
        return PatternBatch(K, ind, method, None, None, None, seed, first_replicate)
    if method == "regeneration":
        if descent not in ("skip", "simulate"):
            raise InvalidArguments(f"unknown descent mode {descent!r}")
        N = default_censor_level(K) if N is None else int(N)
        if N <= K:
            raise InvalidArguments("censor level N must exceed K")
        if table.profile.kind == "explicit":
            N = min(N, table.profile.cutoff + 1)
        ind, cen, fp = _regeneration(chain, table, K, N, rs, rep, descent)
        return PatternBatch(K, ind, method, N, cen, fp, seed, first_replicate)
    raise InvalidArguments(f"unknown method {method!r}")


def exact_cutpoint_pattern(chain: ChainLaw, table: TailTable, K: int, seed: int, *,
                           N: int | None = None, replicate: int = 0,
                           method: str = "regeneration", descent: str = "skip") -> CutpointReport:
    """One exact sample of the cutpoint indicators on ``[1, K]``."""
    b = sample_cutpoint_patterns(chain, table, K, 1, seed, method=method, N=N,
                                 first_replicate=replicate, descent=descent)
    ind = b.indicators[0]
    fp = b.first_passage[0] if b.first_passage is not None else None
    return CutpointReport(K, ind, "exact_pattern", b.N, np.zeros(K), fp, ~ind)


# --- splice --------------------------------------------------------------------

def splice_to_cutpoints(traj: Trajectory, n: int) -> Trajectory:
    """Replace the path up to the last visit of ``L_n`` by ``L_0, ..., L_n``.

    ``L`` is the loop-erasure.  In the result the first ``n + 1`` states are
    cutpoints.
    """
    if n < 0:
        raise InvalidArguments("n must be >= 0")
    st = walk_statistics(traj)
    if len(st.L) <= n:
        raise InsufficientData(f"loop-erasure has only {len(st.L)} vertices, need {n + 1}")
    s = np.asarray(traj.states)
    kn = st.last_visit[st.L[n]]
    out = np.concatenate([np.asarray(st.L[:n + 1], dtype=s.dtype), s[kn + 1:]])
    prov = dict(traj.provenance, spliced=n)
    return Trajectory(out, traj.stop_rule, traj.space, prov, traj.censored_early)
