"""Exact analytics for birth-and-death chains given by edge resistances.

The chain lives on ``{1, 2, ...}``; ``r(k)`` is the resistance of the edge
``{k, k+1}``.  From ``k >= 2`` the walk steps up with probability
``r(k-1) / (r(k-1) + r(k))`` and down otherwise; from 1 it steps to 2.

Tail sums ``t_k = sum_{j >= k} r_j`` are computed once into a
:class:`TailTable` carrying a certified enclosure ``[tail_lo, tail_hi]``.
Probability formulas evaluate on the enclosure midpoint and can report an
absolute error bound (``with_error=True``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import NamedTuple

import numpy as np

from .errors import DivergentTail, InvalidArguments, InvalidProfile, OutOfRange

UNIT_ROUNDOFF = 2.0 ** -53
DEFAULT_SUMMATION_CUTOFF = 10 ** 7
_BLOCK = 1024
_CHUNK = 1 << 20


@dataclass(frozen=True)
class ResistanceProfile:
    """Edge resistances ``r(k) > 0``, ``k >= 1``.

    ``kind`` is one of ``"canonical"`` (``r(k) = 1 / (k (ln k)^beta)`` for
    ``k >= 2`` and ``r(1) = r(2)``), ``"explicit"`` (a finite list; the chain
    is then absorbed at ``cutoff + 1``) or ``"geometric"``
    (``r(k) = scale * ratio**k``).
    """

    kind: str
    beta: float | None = None
    values: tuple[float, ...] | None = None
    ratio: float | None = None
    scale: float = 1.0

    @property
    def cutoff(self) -> int | None:
        return len(self.values) if self.kind == "explicit" else None

    @property
    def transient(self) -> bool:
        if self.kind == "canonical":
            return self.beta > 1
        return True

    @property
    def max_state(self) -> float:
        """Largest state the chain can occupy (``inf`` for infinite profiles)."""
        return self.cutoff + 1 if self.kind == "explicit" else math.inf

    def r(self, k: int) -> float:
        return float(self.r_array(k, k + 1)[0])

    def r_array(self, lo: int, hi: int) -> np.ndarray:
        """Resistances ``r(k)`` for ``lo <= k < hi``."""
        if lo < 1:
            raise OutOfRange(f"resistance index must be >= 1, got {lo}")
        if hi <= lo:
            return np.empty(0)
        if self.kind == "explicit" and hi - 1 > self.cutoff:
            raise OutOfRange(f"index {hi - 1} beyond explicit cutoff {self.cutoff}")
        if self.kind == "explicit":
            return np.asarray(self.values[lo - 1:hi - 1], dtype=np.float64)
        k = np.arange(lo, hi, dtype=np.float64)
        if self.kind == "geometric":
            out = self.scale * np.power(self.ratio, k)
            if out[-1] <= 0.0:
                raise OutOfRange(f"geometric resistance underflows at index {hi - 1}")
            return out
        k[k < 2] = 2.0
        return 1.0 / (k * np.log(k) ** self.beta)

    def describe(self) -> dict:
        if self.kind == "canonical":
            return {"profile": "canonical", "beta": self.beta}
        if self.kind == "geometric":
            return {"profile": "geometric", "ratio": self.ratio, "scale": self.scale}
        return {"profile": "explicit", "cutoff": self.cutoff}


def make_profile(beta: float | None = None, values=None, ratio: float | None = None,
                 scale: float = 1.0) -> ResistanceProfile:
    """Build a profile from exactly one of ``beta``, ``values`` or ``ratio``.

    Canonical profiles with ``beta <= 1`` are constructible (they are
    recurrent); tail-dependent operations refuse them.
    """
    given = [x is not None for x in (beta, values, ratio)]
    if sum(given) != 1:
        raise InvalidProfile("give exactly one of beta, values, ratio")
    if beta is not None:
        beta = float(beta)
        if not beta > 0 or not math.isfinite(beta):
            raise InvalidProfile(f"beta must be a positive finite number, got {beta}")
        return ResistanceProfile("canonical", beta=beta)
    if ratio is not None:
        ratio, scale = float(ratio), float(scale)
        if not 0 < ratio < 1 or not scale > 0:
            raise InvalidProfile("geometric profile needs 0 < ratio < 1 and scale > 0")
        return ResistanceProfile("geometric", ratio=ratio, scale=scale)
    vals = tuple(float(v) for v in values)
    if not vals:
        raise InvalidProfile("explicit profile is empty")
    if not all(v > 0 and math.isfinite(v) for v in vals):
        raise InvalidProfile("explicit resistances must be positive and finite")
    return ResistanceProfile("explicit", values=vals)


def canonical(beta: float) -> ResistanceProfile:
    return make_profile(beta=beta)


def explicit(values) -> ResistanceProfile:
    return make_profile(values=values)


def geometric(ratio: float = 0.5, scale: float = 1.0) -> ResistanceProfile:
    return make_profile(ratio=ratio, scale=scale)


def read_profile(path) -> ResistanceProfile:
    """One resistance per line, index implicit from 1; ``#`` comments allowed."""
    vals = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                vals.append(float(line))
    return make_profile(values=vals)


# --- certified summation -------------------------------------------------------

def _suffix_sums(x: np.ndarray, carry_in: float = 0.0):
    """Suffix sums ``s[i] = carry_in + sum(x[i:])`` of non-negative terms.

    Blocks of ``_BLOCK`` terms are scanned with ``cumsum`` and the block
    totals are carried with Neumaier compensation.  Returns ``(s, rel)``
    where ``|s[i] - exact[i]| <= rel * s[i]`` (floating-point summation only;
    ``carry_in`` is taken as exact).
    """
    n = len(x)
    if n == 0:
        return np.empty(0), 0.0
    nb = -(-n // _BLOCK)
    pad = np.zeros(nb * _BLOCK)
    pad[:n] = x
    blocks = pad.reshape(nb, _BLOCK)
    within = np.cumsum(blocks[:, ::-1], axis=1)[:, ::-1]
    totals = within[:, 0]
    carry = np.empty(nb)
    hi, lo = float(carry_in), 0.0
    for b in range(nb - 1, -1, -1):
        carry[b] = hi + lo
        v = float(totals[b])
        s = hi + v
        lo += (hi - s) + v if abs(hi) >= abs(v) else (v - s) + hi
        hi = s
    out = (within + carry[:, None]).ravel()[:n]
    rel = (_BLOCK + 4) * UNIT_ROUNDOFF / (1 - (_BLOCK + 4) * UNIT_ROUNDOFF)
    return out, rel


def _total(profile: ResistanceProfile, lo: int, hi: int):
    """``sum_{lo <= k < hi} r(k)`` and a relative error bound."""
    parts = []
    for a in range(lo, hi, _CHUNK):
        x = profile.r_array(a, min(hi, a + _CHUNK))
        nb = -(-len(x) // _BLOCK)
        pad = np.zeros(nb * _BLOCK)
        pad[:len(x)] = x
        parts.append(pad.reshape(nb, _BLOCK).sum(axis=1))
    if not parts:
        return 0.0, 0.0
    total = math.fsum(np.concatenate(parts))
    return total, (_BLOCK + 2) * UNIT_ROUNDOFF * 1.01


def _integral_tail(beta: float, x: float) -> float:
    """``int_x^inf dy / (y (ln y)^beta)``."""
    return math.log(x) ** (1.0 - beta) / (beta - 1.0)


# --- tables --------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TailTable:
    """Prefix and tail sums of a profile for indices ``1 .. k_max + 1``.

    Arrays are indexed directly by ``k`` (entry 0 unused).
    ``prefix[k] = sum_{j<k} r_j``; ``t_k`` lies in ``[tail_lo[k], tail_hi[k]]``.
    """

    profile: ResistanceProfile
    k_max: int
    summation_cutoff: int
    r_values: np.ndarray
    prefix_values: np.ndarray
    prefix_err: np.ndarray
    tail_lo: np.ndarray
    tail_hi: np.ndarray

    @cached_property
    def tail_mid(self) -> np.ndarray:
        mid = 0.5 * (self.tail_lo + self.tail_hi)
        mid.flags.writeable = False
        return mid

    def _check(self, k: int, top: int | None = None) -> int:
        top = self.k_max + 1 if top is None else top
        if not 1 <= k <= top:
            raise OutOfRange(f"index {k} outside tabulated range [1, {top}]")
        return int(k)

    def r(self, k: int) -> float:
        top = self.k_max + 1
        if self.profile.kind == "explicit":
            top = min(top, self.profile.cutoff)
        return float(self.r_values[self._check(k, top)])

    def t(self, k: int) -> float:
        return float(self.tail_mid[self._check(k)])

    def t_bounds(self, k: int) -> tuple[float, float]:
        k = self._check(k)
        return float(self.tail_lo[k]), float(self.tail_hi[k])

    def prefix(self, k: int) -> float:
        return float(self.prefix_values[self._check(k)])

    def cutpoint_probabilities(self, lo: int = 1, hi: int | None = None) -> np.ndarray:
        """Vector of ``p_k = r_k / t_k`` for ``lo <= k <= hi``."""
        hi = self.k_max if hi is None else hi
        self._check(lo)
        self._check(hi)
        _require_transient(self.profile)
        return self.r_values[lo:hi + 1] / self.tail_mid[lo:hi + 1]


def _require_transient(profile: ResistanceProfile) -> None:
    if not profile.transient:
        raise DivergentTail(f"sum of resistances diverges for beta = {profile.beta} <= 1")


def tails(profile: ResistanceProfile, k_max: int,
          summation_cutoff: int = DEFAULT_SUMMATION_CUTOFF) -> TailTable:
    """Tabulate prefix sums and certified tail enclosures up to ``k_max + 1``.

    Canonical profiles sum directly to ``summation_cutoff`` (raised to
    ``k_max + 1`` if needed) and bracket the remainder between the integrals
    of ``1/(x (ln x)^beta)`` from ``cutoff + 1`` and from ``cutoff``.
    """
    return _tails_cached(profile, int(k_max), int(summation_cutoff))


@lru_cache(maxsize=16)
def _tails_cached(profile: ResistanceProfile, k_max: int, summation_cutoff: int) -> TailTable:
    if k_max < 1:
        raise OutOfRange("k_max must be >= 1")
    _require_transient(profile)
    n = k_max + 1
    if profile.kind == "explicit" and k_max > profile.cutoff:
        raise OutOfRange(f"k_max {k_max} beyond explicit cutoff {profile.cutoff}")

    r = np.full(n + 1, np.nan)
    if profile.kind == "explicit":
        top = min(n, profile.cutoff)
        r[1:top + 1] = profile.r_array(1, top + 1)
    else:
        r[1:] = profile.r_array(1, n + 1)

    eps_eval = 0.0 if profile.kind == "explicit" else (abs(profile.beta or 0.0) + 8) * UNIT_ROUNDOFF
    lo_rem = hi_rem = 0.0
    cutoff = n

    if profile.kind == "geometric":
        q, c = profile.ratio, profile.scale
        k = np.arange(n + 1, dtype=np.float64)
        mid = c * np.power(q, k) / (1.0 - q)
        pre = c * q * (1.0 - np.power(q, k - 1)) / (1.0 - q)
        pre[:2] = 0.0
        slack = 8 * UNIT_ROUNDOFF
        tail_lo, tail_hi = mid * (1 - slack), mid * (1 + slack)
        tail_lo[0] = tail_hi[0] = np.nan
        return TailTable(profile, k_max, n, r, pre, pre * slack, tail_lo, tail_hi)

    if profile.kind == "explicit":
        cutoff = profile.cutoff
        suffix, rel = _suffix_sums(profile.r_array(1, cutoff + 1))
        s = np.zeros(n + 1)
        s[1:n + 1] = np.concatenate([suffix, [0.0]])[:n]
        err = s * rel
    else:
        cutoff = max(summation_cutoff, n)
        rest, rel_rest = _total(profile, n + 1, cutoff + 1)
        lo_rem = _integral_tail(profile.beta, cutoff + 1.0) * (1 - 4 * UNIT_ROUNDOFF)
        hi_rem = _integral_tail(profile.beta, float(cutoff)) * (1 + 4 * UNIT_ROUNDOFF)
        suffix, rel = _suffix_sums(r[1:], carry_in=rest)
        s = np.empty(n + 1)
        s[0] = np.nan
        s[1:] = suffix
        err = s * (rel + eps_eval) + rest * (rel_rest + eps_eval)

    tail_lo = np.maximum(np.nextafter(s - err + lo_rem, -np.inf), 0.0)
    tail_hi = np.nextafter(s + err + hi_rem, np.inf)
    if profile.kind == "explicit" and n == cutoff + 1:
        tail_lo[n] = tail_hi[n] = 0.0
    tail_lo[0] = tail_hi[0] = np.nan

    # prefix[k] = sum_{j<k} r_j, k = 1..n
    rev, rel_p = _suffix_sums(r[1:n][::-1])
    pre = np.zeros(n + 1)
    pre[2:n + 1] = rev[::-1]
    pre_err = pre * (rel_p + eps_eval)
    return TailTable(profile, k_max, cutoff, r, pre, pre_err, tail_lo, tail_hi)


class ChainLaw:
    """Transition law of the birth-and-death chain of a profile.

    ``up(1) = 1``; for ``k >= 2``, ``up(k) = r(k-1) / (r(k-1) + r(k))``.
    """

    def __init__(self, profile: ResistanceProfile):
        self.profile = profile
        self._up = np.empty(0)

    def up(self, k: int) -> float:
        return float(self.up_table(k)[k])

    def down(self, k: int) -> float:
        return 1.0 - self.up(k) if k >= 2 else 0.0

    def up_table(self, n: int) -> np.ndarray:
        """``up`` probabilities indexed by state, covering states ``1 .. n``."""
        if n > self.profile.max_state - 1:
            raise OutOfRange(f"state {n} has no outgoing law (chain ends at "
                             f"{self.profile.max_state})")
        if len(self._up) <= n:
            size = max(n + 1, 2 * len(self._up), 64)
            if self.profile.kind == "explicit":
                size = min(size, self.profile.cutoff + 1)
            if self.profile.kind == "geometric":
                # ratio r_{k-1}/r_k is constant; avoids underflow of r_k itself
                up = np.full(size, 1.0 / (1.0 + self.profile.ratio))
                up[0], up[1] = np.nan, 1.0
                self._up = up
                return up
            r = np.empty(size + 1)
            r[0] = np.nan
            r[1:] = self.profile.r_array(1, size + 1) if self.profile.kind != "explicit" \
                else np.concatenate([self.profile.r_array(1, size), [np.nan]])
            up = np.empty(size)
            up[0] = np.nan
            up[1] = 1.0
            up[2:] = r[1:size - 1] / (r[1:size - 1] + r[2:size])
            self._up = up
        return self._up

    def probability(self, x: int, y: int) -> float:
        """One-step transition probability ``p(x, y)``."""
        if y == x + 1:
            return self.up(x)
        if y == x - 1 and x >= 2:
            return self.down(x)
        return 0.0

    def successors(self, x: int):
        """Possible next states of ``x`` and their probabilities."""
        if x == 1:
            return [2], np.array([1.0])
        u = self.up(x)
        return [x - 1, x + 1], np.array([1.0 - u, u])

    def adjacent(self, x, y) -> bool:
        """Reachability predicate ``p(x, y) > 0``."""
        return abs(x - y) == 1 and min(x, y) >= 1 and max(x, y) <= self.profile.max_state


# --- probability formulas ------------------------------------------------------

def _result(value: float, err: float, with_error: bool):
    return (value, err) if with_error else value


def hit_before(table: TailTable, k: int, n: int, with_error: bool = False):
    """Probability a walk from ``k`` reaches ``n`` before ``1``."""
    if n < 2:
        raise InvalidArguments("need n >= 2")
    if not 1 <= k <= n:
        raise OutOfRange(f"need 1 <= k <= n, got k={k}, n={n}")
    table._check(n)
    num, den = table.prefix_values[k], table.prefix_values[n]
    v = num / den
    err = v * (table.prefix_err[k] / num if num else 0.0) + v * table.prefix_err[n] / den \
        + 2 * UNIT_ROUNDOFF * v
    return _result(float(v), float(err), with_error)


def _ratio_error(num: float, lo: float, hi: float, v: float) -> float:
    return max(abs(num / lo - v), abs(num / hi - v)) + 2 * UNIT_ROUNDOFF * v


def cutpoint_probability(table: TailTable, k: int, with_error: bool = False):
    """``p_k = r_k / t_k``: probability that level ``k`` is a cutpoint."""
    _require_transient(table.profile)
    rk = table.r(k)
    lo, hi = table.t_bounds(k)
    v = rk / table.t(k)
    return _result(v, _ratio_error(rk, lo, hi, v), with_error)


def conditional_cut_probability(table: TailTable, j: int, k: int, with_error: bool = False):
    """``Q_k(j) = r_j / (t_j - t_{k+1})``: walk from ``j+1`` hits ``k+1`` before ``j``."""
    if not 1 <= j < k:
        raise InvalidArguments(f"need 1 <= j < k, got j={j}, k={k}")
    table._check(k + 1)
    seg = table.r_values[j:k + 1]
    den = math.fsum(seg)
    v = table.r_values[j] / den
    err = 4 * UNIT_ROUNDOFF * v
    if table.profile.kind != "explicit":
        err += (abs(table.profile.beta or 0.0) + 8) * UNIT_ROUNDOFF * v * 2
    return _result(float(v), float(err), with_error)


def return_probability(table: TailTable, N: int, k: int, with_error: bool = False):
    """``t_N / t_k``: probability that a walk at ``N`` ever hits ``k <= N``."""
    _require_transient(table.profile)
    if not 1 <= k <= N:
        raise InvalidArguments(f"need 1 <= k <= N, got k={k}, N={N}")
    tn, tk = table.t(N), table.t(k)
    v = tn / tk
    lo_n, hi_n = table.t_bounds(N)
    lo_k, hi_k = table.t_bounds(k)
    err = max(abs(hi_n / lo_k - v), abs(lo_n / hi_k - v)) + 2 * UNIT_ROUNDOFF * v
    return _result(v, err, with_error)


def block_minimum_b(table: TailTable, m: int) -> float:
    """``min over k in (2^m, 2^{m+1}] of sum_{i=1}^{2^{m-1}} Q_k(k-i)``."""
    if m < 1:
        raise InvalidArguments("need m >= 1")
    top = 2 ** (m + 1)
    if top > table.k_max:
        raise OutOfRange(f"block m={m} needs k_max >= {top}")
    w = 2 ** (m - 1)
    r = table.r_values
    best = math.inf
    for k in range(2 ** m + 1, top + 1):
        seg = r[k - w:k + 1][::-1]          # r_k, r_{k-1}, ..., r_{k-w}
        den = np.cumsum(seg)[1:]            # sum_{l=k-i}^{k} r_l, i = 1..w
        best = min(best, math.fsum(seg[1:] / den))
    return best


def block_p_sum(table: TailTable, m: int) -> float:
    """``sum_{j=2^{m-1}+1}^{2^{m+1}} p_j``, the expected cutpoint count of the block."""
    if m < 1:
        raise InvalidArguments("need m >= 1")
    top = 2 ** (m + 1)
    if top > table.k_max:
        raise OutOfRange(f"block m={m} needs k_max >= {top}")
    return math.fsum(table.cutpoint_probabilities(2 ** (m - 1) + 1, top))


class DivergenceAudit(NamedTuple):
    partial_sum: float
    lower_bound: float

    @property
    def holds(self) -> bool:
        return self.partial_sum >= self.lower_bound - 1e-9 * abs(self.lower_bound)


def divergence_audit(table: TailTable, m: int, M: int) -> DivergenceAudit:
    """``(sum_{k=m}^{M} p_k, 1 - t_{M+1}/t_m)``; the first always dominates."""
    if not 1 <= m <= M:
        raise InvalidArguments(f"need 1 <= m <= M, got m={m}, M={M}")
    table._check(M + 1)
    partial = math.fsum(table.cutpoint_probabilities(m, M))
    return DivergenceAudit(partial, 1.0 - table.t(M + 1) / table.t(m))
