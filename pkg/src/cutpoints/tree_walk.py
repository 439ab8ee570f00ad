"""Nearest-neighbour walks on finite trees and their occupation statistics.

A walk from ``x0`` absorbed at ``y`` yields occupation numbers ``V``,
transition counts ``M``, last-exit pointers ``U`` and the loop-erasure
``L``.  On a tree, ``M`` is recoverable from ``V`` alone by peeling leaves
(:func:`reconstruct_M_from_V`) and ``U`` from ``V`` and the escape vertex
(:func:`infer_exit_pointers`).
"""
from __future__ import annotations

import heapq
from collections import Counter, defaultdict
from dataclasses import dataclass, field

import numpy as np

from .errors import InconsistentOccupationField, InvalidArguments, InvalidInput
from .rng import CounterStream
from .trajectory import StopRule, Trajectory, absorb


@dataclass(eq=False)
class Tree:
    """A finite tree with positive edge weights (conductances)."""

    edges: list
    root: int
    weights: dict = field(default_factory=dict)
    absorb: int | None = None

    def __post_init__(self):
        self.adj = defaultdict(list)
        verts = set()
        for u, v in self.edges:
            if u == v:
                raise InvalidInput(f"self-loop at {u}")
            self.adj[u].append(v)
            self.adj[v].append(u)
            verts.update((u, v))
        if not verts:
            verts.add(self.root)
        self.vertices = sorted(verts)
        if self.root not in verts:
            raise InvalidInput(f"root {self.root} not in tree")
        if len(self.edges) != len(verts) - 1:
            raise InvalidInput("a tree needs |edges| = |vertices| - 1")
        if len(self._component(self.root)) != len(verts):
            raise InvalidInput("tree is disconnected")
        if self.absorb is not None and self.absorb not in verts:
            raise InvalidInput(f"absorbing vertex {self.absorb} not in tree")
        w = {}
        for u, v in self.edges:
            key = (min(u, v), max(u, v))
            if key in w:
                raise InvalidInput(f"duplicate edge {key}")
            w[key] = float(self.weights.get(key, self.weights.get((v, u), 1.0)))
            if not w[key] > 0:
                raise InvalidInput(f"edge weight must be positive on {key}")
        self.weights = w
        for x in self.adj:
            self.adj[x].sort()

    def _component(self, start):
        seen, stack = {start}, [start]
        while stack:
            x = stack.pop()
            for y in self.adj[x]:
                if y not in seen:
                    seen.add(y)
                    stack.append(y)
        return seen

    def weight(self, u, v) -> float:
        return self.weights[(min(u, v), max(u, v))]

    def neighbors(self, x) -> list:
        return self.adj[x]

    def adjacent(self, x, y) -> bool:
        return (min(x, y), max(x, y)) in self.weights

    def step_law(self, x):
        """Neighbours of ``x`` and their step probabilities."""
        nbrs = self.adj[x]
        w = np.array([self.weight(x, y) for y in nbrs])
        return nbrs, w / w.sum()

    successors = step_law

    def path_between(self, a, b) -> list:
        """Vertices on the unique path from ``a`` to ``b``."""
        parent = {a: None}
        stack = [a]
        while stack:
            x = stack.pop()
            if x == b:
                break
            for y in self.adj[x]:
                if y not in parent:
                    parent[y] = x
                    stack.append(y)
        out = [b]
        while out[-1] != a:
            out.append(parent[out[-1]])
        return out[::-1]

    @classmethod
    def path(cls, n: int, root: int = 1, weights=None) -> "Tree":
        """The path ``1 - 2 - ... - n``."""
        return cls([(k, k + 1) for k in range(1, n)], root, weights or {})


def parse_tree(text: str) -> Tree:
    """Parse the edge-list format.

    Lines are ``u v [weight]``; header lines ``root x0`` and ``absorb y``;
    ``#`` starts a comment; blank lines are ignored.
    """
    edges, weights = [], {}
    root = target = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "root" and len(parts) == 2:
                root = int(parts[1])
            elif parts[0] == "absorb" and len(parts) == 2:
                target = int(parts[1])
            elif len(parts) in (2, 3):
                u, v = int(parts[0]), int(parts[1])
                edges.append((u, v))
                if len(parts) == 3:
                    weights[(min(u, v), max(u, v))] = float(parts[2])
            else:
                raise ValueError
        except ValueError:
            raise InvalidInput(f"line {lineno}: cannot parse {raw!r}") from None
    if root is None:
        raise InvalidInput("missing 'root' header line")
    return Tree(edges, root, weights, absorb=target)


def format_tree(tree: Tree) -> str:
    lines = [f"root {tree.root}"]
    if tree.absorb is not None:
        lines.append(f"absorb {tree.absorb}")
    for (u, v), w in sorted(tree.weights.items()):
        lines.append(f"{u} {v} {w!r}")
    return "\n".join(lines) + "\n"


def random_tree(rng: np.random.Generator, n: int, weighted: bool = True) -> Tree:
    """Uniform random labelled tree on ``0..n-1`` via a Pruefer sequence."""
    if n == 1:
        return Tree([], 0)
    if n == 2:
        edges = [(0, 1)]
    else:
        seq = rng.integers(0, n, size=n - 2)
        degree = np.ones(n, dtype=int)
        for s in seq:
            degree[s] += 1
        leaves = [i for i in range(n) if degree[i] == 1]
        heapq.heapify(leaves)
        edges = []
        for s in seq:
            leaf = heapq.heappop(leaves)
            edges.append((leaf, int(s)))
            degree[s] -= 1
            if degree[s] == 1:
                heapq.heappush(leaves, int(s))
        edges.append((heapq.heappop(leaves), heapq.heappop(leaves)))
    weights = {}
    if weighted:
        for u, v in edges:
            weights[(min(u, v), max(u, v))] = float(rng.uniform(0.1, 3.0))
    root = int(rng.integers(0, n))
    return Tree(edges, root, weights)


def simulate_tree_walk(tree: Tree, x0=None, y=None, seed: int = 0, *, stream: int = 0,
                       replicate: int = 0, max_steps: int = 10 ** 7) -> Trajectory:
    """Walk from ``x0`` stepping proportionally to edge weights until it first hits ``y``."""
    x0 = tree.root if x0 is None else x0
    y = tree.absorb if y is None else y
    if y is None:
        raise InvalidArguments("no absorbing vertex given")
    if x0 not in tree.adj and len(tree.vertices) > 1:
        raise InvalidArguments(f"start {x0} not in tree")
    laws = {}
    rs = CounterStream(seed, stream)
    states = [x0]
    x, step, buf, used = x0, 0, rs.block(replicate, 0, 256), 0
    while x != y and step < max_steps:
        if used == len(buf):
            buf = rs.block(replicate, step, len(buf) * 2)
            used = 0
        if x not in laws:
            nbrs, probs = tree.step_law(x)
            laws[x] = (nbrs, np.cumsum(probs))
        nbrs, cdf = laws[x]
        i = int(np.searchsorted(cdf, buf[used] * cdf[-1], side="right"))
        x = nbrs[min(i, len(nbrs) - 1)]
        used += 1
        step += 1
        states.append(x)
    return Trajectory(np.asarray(states, dtype=np.int64), absorb(y), tree,
                      {"seed": seed, "stream": stream, "replicate": replicate},
                      censored_early=x != y)


@dataclass
class WalkStatistics:
    V: dict
    M: dict
    U: dict
    L: list
    end_state: object
    last_visit: dict

    def occupation(self, x) -> int:
        return self.V.get(x, 0)

    def exit_pointer(self, x):
        return self.U.get(x, x)


def _states(traj):
    return traj.as_tuple() if isinstance(traj, Trajectory) else tuple(traj)


def loop_erasure(states) -> list:
    """Chronological loop-erasure: erase each cycle as soon as it closes."""
    if isinstance(states, np.ndarray):
        states = states.tolist()
    path, where = [], {}
    for s in states:
        if s in where:
            cut = where[s]
            for v in path[cut + 1:]:
                del where[v]
            del path[cut + 1:]
        else:
            where[s] = len(path)
            path.append(s)
    return path


def walk_statistics(traj) -> WalkStatistics:
    """Occupation numbers, transition counts, last-exit pointers and loop-erasure.

    ``U(x)`` is the state entered right after the final visit to ``x``; the
    end state has no successor and gets ``U = end`` (unvisited states
    default to themselves via :meth:`WalkStatistics.exit_pointer`).
    """
    s = _states(traj)
    if not s:
        raise InvalidArguments("empty trajectory")
    V = Counter(s)
    M = Counter(zip(s[:-1], s[1:]))
    last = {}
    for i, x in enumerate(s):
        last[x] = i
    U = {x: (s[i + 1] if i + 1 < len(s) else x) for x, i in last.items()}
    return WalkStatistics(dict(V), dict(M), U, loop_erasure(s), s[-1], last)


def check_balance(stats: WalkStatistics, x0) -> bool:
    """The entry, exit and Eulerian balance identities of a walk from ``x0``."""
    into, out = Counter(), Counter()
    for (a, b), c in stats.M.items():
        out[a] += c
        into[b] += c
    for x, v in stats.V.items():
        if v != into[x] + (x == x0):
            return False
        if out[x] != v - (x == stats.end_state):
            return False
        if out[x] - into[x] != (x == x0) - (x == stats.end_state):
            return False
    return True


def reconstruct_M_from_V(tree: Tree, V: dict, x0, y, order=None) -> dict:
    """Transition counts of a walk ``x0 -> y`` recovered from occupation numbers.

    Leaves ``z != y`` are peeled one at a time (smallest id first unless an
    ``order`` callable picks among the current candidate leaves).  Peeling
    ``z`` with neighbour ``z*`` emits ``M(z, z*) = V(z)`` and
    ``M(z*, z) = V(z) - [z is the current start]``, then charges the
    collapsed excursions to ``z*``: ``V(z*) -= V(z) - [z is the start]``;
    if ``z`` was the start, the start moves to ``z*``.  ``V(y)`` is never read.
    """
    vs = set(tree.vertices)
    if x0 not in vs or y not in vs:
        raise InvalidArguments("x0 and y must be tree vertices")
    v = {x: int(V.get(x, 0)) for x in vs if x != y}
    for x in tree.path_between(x0, y)[:-1]:
        if v[x] <= 0:
            raise InconsistentOccupationField(f"vertex {x} separates {x0} from {y} but V = 0")
    if any(c < 0 for c in v.values()):
        raise InconsistentOccupationField("negative occupation number")
    deg = {x: len(tree.adj[x]) for x in vs}
    alive = set(vs)
    root = x0
    M = {}
    heap = [x for x in vs if deg[x] <= 1 and x != y]
    heapq.heapify(heap)
    while len(alive) > 1:
        if order is None:
            z = heapq.heappop(heap)
        else:
            z = order(sorted(heap))
            heap.remove(z)
            heapq.heapify(heap)
        zs = next(n for n in tree.adj[z] if n in alive)
        start = z == root
        vz = v[z]
        if vz - start < 0:
            raise InconsistentOccupationField(f"start vertex {z} has V = 0")
        M[(z, zs)] = vz
        M[(zs, z)] = vz - start
        if zs != y:
            v[zs] -= vz - start
            if v[zs] < 0 or (start and v[zs] < 1):
                raise InconsistentOccupationField(f"occupation of {zs} went negative")
        if start:
            root = zs
        alive.discard(z)
        deg[zs] -= 1
        if deg[zs] <= 1 and zs != y and zs in alive:
            heapq.heappush(heap, zs)
    return M


def infer_exit_pointers(tree: Tree, V: dict, x0, escape) -> dict:
    """Last-exit pointers implied by ``V`` when the walk ends at ``escape``.

    A visited ``x`` last leaves toward ``escape``; unvisited vertices (and
    the escape vertex itself) point to themselves.
    """
    path = tree.path_between(x0, escape)
    for x in path[:-1]:
        if V.get(x, 0) <= 0:
            raise InconsistentOccupationField(f"escape route passes unvisited vertex {x}")
    parent = {escape: escape}
    stack = [escape]
    while stack:
        x = stack.pop()
        for n in tree.adj[x]:
            if n not in parent:
                parent[n] = x
                stack.append(n)
    return {x: (parent[x] if V.get(x, 0) > 0 else x) for x in tree.vertices}
