"""Trajectory container and stopping rules shared by the simulators."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArguments


@dataclass(frozen=True)
class StopRule:
    """``first_passage(N)``, ``absorb(y)`` or ``horizon(T)``."""

    kind: str
    level: int

    def __post_init__(self):
        if self.kind not in ("first_passage", "absorb", "horizon"):
            raise InvalidArguments(f"unknown stop rule {self.kind!r}")

    def __str__(self):
        return f"{self.kind}({self.level})"


def first_passage(n: int) -> StopRule:
    return StopRule("first_passage", int(n))


def absorb(y: int) -> StopRule:
    return StopRule("absorb", int(y))


def horizon(t: int) -> StopRule:
    return StopRule("horizon", int(t))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """A finite nearest-neighbour path.

    ``space`` is ``"line"`` for the half-line or a :class:`~cutpoints.tree_walk.Tree`.
    ``censored_early`` is set when a hard step cap stopped the walk before its
    stop rule fired.
    """

    states: np.ndarray
    stop_rule: StopRule | None = None
    space: object = "line"
    provenance: dict = field(default_factory=dict)
    censored_early: bool = False

    @property
    def start(self):
        return self.states[0]

    @property
    def end(self):
        return self.states[-1]

    def __len__(self):
        return len(self.states)

    def as_tuple(self) -> tuple:
        return tuple(int(s) for s in self.states)

    def dump(self) -> str:
        """Text dump: header comments, then one state per line."""
        lines = [f"# start {int(self.start)}", f"# stop {self.stop_rule}"]
        for key, val in self.provenance.items():
            lines.append(f"# {key} {val}")
        if self.censored_early:
            lines.append("# censored_early true")
        lines.extend(str(int(s)) for s in self.states)
        return "\n".join(lines) + "\n"


def line_trajectory(states, stop_rule: StopRule | None = None) -> Trajectory:
    """Wrap a hand-written path on the half-line, checking adjacency."""
    arr = np.asarray(states, dtype=np.int64)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidArguments("trajectory must be a non-empty sequence")
    if arr.min() < 1 or np.any(np.abs(np.diff(arr)) != 1):
        raise InvalidArguments("states must be >= 1 and consecutive states adjacent")
    if stop_rule is None:
        stop_rule = first_passage(int(arr[-1])) if arr[-1] == arr.max() and \
            np.count_nonzero(arr == arr[-1]) == 1 else horizon(len(arr) - 1)
    return Trajectory(arr, stop_rule)
