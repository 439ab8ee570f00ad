"""Running a Markov chain from per-state successor stacks.

Each state owns a stack of successors drawn independently from its
transition law; the walk pops the top of the current state's stack and
moves there.  For a run that stops, ``popped(x)`` is the list consumed at
``x``, ``U(x)`` its last entry and ``W(x)`` the rest.  Reordering any
``W(x)`` and rerunning leaves all transition counts and last exits
unchanged, and drawing each ``W(x)`` order uniformly at random reproduces
the law of the chain.

Lazy stacks draw entry ``(x, depth)`` from a counter-based stream, so a
rerun sees exactly the same unconsumed entries as the original run.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import InconsistentStacks, InvalidArguments, InvalidPermutation, StackUnderflow
from .rng import CounterStream
from .trajectory import Trajectory, absorb

STREAM_STACKS = 303
_MASK = (1 << 64) - 1


class FiniteChain:
    """A chain given as ``{x: {y: p(x, y)}}``."""

    def __init__(self, rows: dict):
        self.rows = {}
        for x, row in rows.items():
            ys = sorted(row)
            ps = np.array([row[y] for y in ys], dtype=float)
            if np.any(ps < 0) or abs(ps.sum() - 1) > 1e-12:
                raise InvalidArguments(f"row {x} is not a probability vector")
            self.rows[x] = (ys, ps)

    def successors(self, x):
        if x not in self.rows:
            raise InvalidArguments(f"state {x} has no outgoing law")
        return self.rows[x]

    def probability(self, x, y) -> float:
        ys, ps = self.successors(x)
        return float(ps[ys.index(y)]) if y in ys else 0.0

    def adjacent(self, x, y) -> bool:
        return x in self.rows and self.probability(x, y) > 0


class StackSystem:
    """Successor stacks: explicit prefixes, optionally backed by a lazy law."""

    def __init__(self, law=None, seed: int = 0, explicit: dict | None = None,
                 stream: int = STREAM_STACKS):
        if law is None and explicit is None:
            raise InvalidArguments("need a transition law or explicit stacks")
        self.law = law
        self.seed = seed
        self.stream = stream
        self.explicit = {x: list(v) for x, v in (explicit or {}).items()}
        self._rs = CounterStream(seed, stream) if law is not None else None
        self._laws = {}

    def entry(self, x, depth: int):
        stack = self.explicit.get(x)
        if stack is not None and depth < len(stack):
            return stack[depth]
        if self.law is None:
            raise StackUnderflow(f"stack under {x} exhausted at depth {depth}")
        if x not in self._laws:
            ys, ps = self.law.successors(x)
            self._laws[x] = (list(ys), np.cumsum(ps))
        ys, cdf = self._laws[x]
        u = self._rs.uniform(int(hash(x)) & _MASK, depth)
        return ys[min(int(np.searchsorted(cdf, u * cdf[-1], side="right")), len(ys) - 1)]

    def with_prefixes(self, prefixes: dict) -> "StackSystem":
        """Copy with the given explicit stack prefixes replacing the current ones."""
        new = StackSystem.__new__(StackSystem)
        new.law, new.seed, new.stream = self.law, self.seed, self.stream
        new.explicit = {**self.explicit, **{x: list(v) for x, v in prefixes.items()}}
        new._rs, new._laws = self._rs, self._laws
        return new


@dataclass(frozen=True)
class StackSnapshot:
    """Bookkeeping of a finished run."""

    popped: dict
    x0: object
    end: object
    stacks: StackSystem

    def W(self, x) -> tuple:
        return tuple(self.popped.get(x, ())[:-1])

    def U(self, x):
        p = self.popped.get(x)
        return p[-1] if p else x

    def multiset(self, x) -> Counter:
        return Counter(self.W(x))

    def multisets(self) -> dict:
        return {x: self.multiset(x) for x in self.popped}

    def exits(self) -> dict:
        return {x: self.U(x) for x in self.popped}


def _stop_target(stop):
    if isinstance(stop, tuple):
        kind, level = stop
        if kind not in ("absorb", "first_passage"):
            raise InvalidArguments(f"unknown stop {kind!r}")
        return level
    if hasattr(stop, "kind"):
        if stop.kind == "horizon":
            raise InvalidArguments("stack runs need an absorbing or first-passage stop")
        return stop.level
    return stop


def run_from_stacks(stacks: StackSystem, x0, stop, max_steps: int = 10 ** 7):
    """Pop successors from ``x0`` until the stop state is first reached.

    ``stop`` is a state, ``("absorb", y)``, ``("first_passage", N)`` or a
    :class:`~cutpoints.trajectory.StopRule`.
    """
    y = _stop_target(stop)
    depth = Counter()
    popped = {}
    states = [x0]
    x = x0
    while x != y:
        if len(states) > max_steps:
            raise StackUnderflow(f"no arrival at {y} within {max_steps} steps")
        nxt = stacks.entry(x, depth[x])
        depth[x] += 1
        popped.setdefault(x, []).append(nxt)
        states.append(nxt)
        x = nxt
    traj = Trajectory(np.asarray(states), absorb(y), "stacks",
                      {"seed": stacks.seed, "stream": stacks.stream})
    snap = StackSnapshot({k: tuple(v) for k, v in popped.items()}, x0, y, stacks)
    return traj, snap


def _check_perm(perm, n: int, x) -> list:
    perm = [int(i) for i in perm]
    if len(perm) == n + 1:
        if perm[-1] != n:
            raise InvalidPermutation(f"permutation at {x} moves the final exit")
        perm = perm[:-1]
    if sorted(perm) != list(range(n)):
        raise InvalidPermutation(f"not a permutation of W({x}) (length {n}): {perm}")
    return perm


def reorder_and_rerun(snapshot: StackSnapshot, permutations: dict, max_steps: int = 10 ** 7):
    """Permute ``W(x)`` for ``x`` in ``permutations`` (``U(x)`` stays last) and rerun.

    ``permutations[x]`` lists indices into ``W(x)``; a list one longer is
    accepted only if it keeps the final exit in place.
    """
    prefixes = {}
    for x, perm in permutations.items():
        w = snapshot.W(x)
        perm = _check_perm(perm, len(w), x)
        prefixes[x] = [w[i] for i in perm] + ([snapshot.U(x)] if x in snapshot.popped else [])
    # States outside the reordered set keep exactly their consumed entries on top.
    for x, p in snapshot.popped.items():
        prefixes.setdefault(x, list(p))
    stacks = snapshot.stacks.with_prefixes(prefixes)
    return run_from_stacks(stacks, snapshot.x0, snapshot.end, max_steps)


def resample_orderings(multisets: dict, exits: dict, x0, end, seed: int, *,
                       replicate: int = 0, stream: int = STREAM_STACKS + 1) -> Trajectory:
    """Rerun from stacks whose ``W(x)`` orders are drawn uniformly at random.

    ``multisets[x]`` is ``[W(x)]`` (a Counter or any iterable), ``exits[x]``
    is ``U(x)``.  The run must consume every entry exactly.
    """
    rs = CounterStream(seed, stream).child(replicate)
    explicit = {}
    for x in set(multisets) | set(exits):
        if x == end and not multisets.get(x):
            continue
        ms = multisets.get(x, ())
        items = sorted(ms.elements()) if isinstance(ms, Counter) else sorted(ms)
        if x not in exits:
            raise InconsistentStacks(f"no final exit recorded for {x}")
        if items:
            u = rs.uniform(np.full(len(items), int(hash(x)) & _MASK, dtype=np.uint64),
                           np.arange(len(items), dtype=np.uint64))
            items = [items[i] for i in np.argsort(u, kind="stable")]
        explicit[x] = items + [exits[x]]
    stacks = StackSystem(explicit=explicit, seed=seed, stream=stream)
    n_total = sum(len(v) for v in explicit.values())
    try:
        traj, snap = run_from_stacks(stacks, x0, end, max_steps=n_total + 1)
    except StackUnderflow as exc:
        raise InconsistentStacks(str(exc)) from None
    used = sum(len(v) for v in snap.popped.values())
    if used != n_total:
        raise InconsistentStacks(f"run consumed {used} of {n_total} stack entries")
    return traj


def transition_counts(states) -> Counter:
    s = list(states)
    return Counter(zip(s[:-1], s[1:]))


def eulerian_check(M: dict, x0, end_state) -> bool:
    """In/out balance of the transition multigraph of a walk ``x0 -> end_state``."""
    bal = Counter()
    for (a, b), c in M.items():
        if c < 0:
            return False
        bal[a] += c
        bal[b] -= c
    bal[x0] -= 1
    bal[end_state] += 1
    return all(v == 0 for v in bal.values())
