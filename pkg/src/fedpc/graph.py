"""Skeletons, partially directed graphs and DAGs over integer variable ids.

Variables are the dense ids ``0..m-1``. ``Skeleton`` and ``Dag`` are
immutable values. ``Pdag`` doubles as its own builder: the orientation
algorithms work on a private copy and hand back the result.
"""

from __future__ import annotations

from collections import deque
from itertools import combinations
from typing import Iterable, Iterator, NamedTuple, Sequence

from .errors import NoOrientation, ShapeMismatch

Edge = tuple[int, int]


def _check_id(x: int, m: int) -> None:
    if not 0 <= x < m:
        raise ValueError(f"variable id {x} out of range for m={m}")


class Skeleton:
    """Symmetric adjacency over ``m`` variables, no self loops."""

    __slots__ = ("m", "_adj")

    def __init__(self, m: int, edges: Iterable[Edge] = ()):
        adj: list[set[int]] = [set() for _ in range(m)]
        for i, j in edges:
            _check_id(i, m)
            _check_id(j, m)
            if i == j:
                raise ValueError(f"self-adjacency at {i}")
            adj[i].add(j)
            adj[j].add(i)
        self.m = m
        self._adj = tuple(frozenset(a) for a in adj)

    @classmethod
    def from_sets(cls, adjacency: Sequence[Iterable[int]]) -> "Skeleton":
        m = len(adjacency)
        sets = [frozenset(a) for a in adjacency]
        if all(x not in sets[x] and all(type(y) is int and 0 <= y < m and x in sets[y] for y in sets[x]) for x in range(m)):
            out = cls.__new__(cls)
            out.m = m
            out._adj = tuple(sets)
            return out
        # not symmetric or carrying odd ids: rebuild (and validate) edge by edge
        return cls(m, ((i, j) for i in range(m) for j in adjacency[i] if i < j))

    @classmethod
    def _trusted(cls, adjacency: Sequence[Iterable[int]]) -> "Skeleton":
        # caller guarantees symmetric, loop-free, in-range adjacency
        out = cls.__new__(cls)
        out.m = len(adjacency)
        out._adj = tuple(frozenset(a) for a in adjacency)
        return out

    @classmethod
    def complete(cls, m: int) -> "Skeleton":
        return cls(m, combinations(range(m), 2))

    def neighbors(self, x: int) -> frozenset[int]:
        return self._adj[x]

    def adjacent(self, i: int, j: int) -> bool:
        return j in self._adj[i]

    def degree(self, x: int) -> int:
        return len(self._adj[x])

    def max_degree(self) -> int:
        return max((len(a) for a in self._adj), default=0)

    def edges(self) -> list[Edge]:
        return [(i, j) for i in range(self.m) for j in sorted(self._adj[i]) if i < j]

    @property
    def n_edges(self) -> int:
        return sum(len(a) for a in self._adj) // 2

    def to_sets(self) -> list[set[int]]:
        """Fresh mutable adjacency lists, for algorithms that delete edges."""
        return [set(a) for a in self._adj]

    def permute(self, perm: Sequence[int]) -> "Skeleton":
        """Relabel variable ``x`` as ``perm[x]``."""
        return Skeleton(self.m, ((perm[i], perm[j]) for i, j in self.edges()))

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Skeleton) and self.m == other.m and self._adj == other._adj

    def __hash__(self) -> int:
        return hash((self.m, self._adj))

    def __repr__(self) -> str:
        return f"Skeleton(m={self.m}, edges={self.edges()})"


class UnshieldedTriple(NamedTuple):
    """``i - k - j`` with ``i`` and ``j`` non-adjacent, stored with ``i < j``."""

    i: int
    k: int
    j: int


def neighbors(s: Skeleton, x: int) -> frozenset[int]:
    return s.neighbors(x)


def unshielded_triples(s: Skeleton) -> list[UnshieldedTriple]:
    """All unshielded triples of ``s``, sorted by ``(i, j, k)``."""
    out = []
    for k in range(s.m):
        for i, j in combinations(sorted(s.neighbors(k)), 2):
            if not s.adjacent(i, j):
                out.append(UnshieldedTriple(i, k, j))
    out.sort(key=lambda t: (t.i, t.j, t.k))
    return out


class Pdag:
    """Partially directed graph: each adjacent pair is ``i -> j``, ``j -> i`` or ``i -- j``."""

    __slots__ = ("m", "_pa", "_ch", "_un")

    def __init__(self, m: int, directed: Iterable[Edge] = (), undirected: Iterable[Edge] = ()):
        self.m = m
        self._pa: list[set[int]] = [set() for _ in range(m)]
        self._ch: list[set[int]] = [set() for _ in range(m)]
        self._un: list[set[int]] = [set() for _ in range(m)]
        for i, j in undirected:
            self._check_free(i, j)
            self._un[i].add(j)
            self._un[j].add(i)
        for i, j in directed:
            self._check_free(i, j)
            self._ch[i].add(j)
            self._pa[j].add(i)

    def _check_free(self, i: int, j: int) -> None:
        _check_id(i, self.m)
        _check_id(j, self.m)
        if i == j:
            raise ValueError(f"self loop at {i}")
        if self.adjacent(i, j):
            raise ValueError(f"pair ({i}, {j}) already carries a mark")

    @classmethod
    def from_skeleton(cls, s: Skeleton) -> "Pdag":
        return cls(s.m, undirected=s.edges())

    def copy(self) -> "Pdag":
        g = Pdag.__new__(Pdag)
        g.m = self.m
        g._pa = [set(a) for a in self._pa]
        g._ch = [set(a) for a in self._ch]
        g._un = [set(a) for a in self._un]
        return g

    # queries
    def parents(self, x: int) -> set[int]:
        return self._pa[x]

    def children(self, x: int) -> set[int]:
        return self._ch[x]

    def undirected_neighbors(self, x: int) -> set[int]:
        return self._un[x]

    def adjacents(self, x: int) -> set[int]:
        return self._pa[x] | self._ch[x] | self._un[x]

    def adjacent(self, i: int, j: int) -> bool:
        return j in self._un[i] or j in self._ch[i] or j in self._pa[i]

    def is_directed(self, i: int, j: int) -> bool:
        return j in self._ch[i]

    def is_undirected(self, i: int, j: int) -> bool:
        return j in self._un[i]

    def directed_edges(self) -> list[Edge]:
        return [(i, j) for i in range(self.m) for j in sorted(self._ch[i])]

    def undirected_edges(self) -> list[Edge]:
        return [(i, j) for i in range(self.m) for j in sorted(self._un[i]) if i < j]

    def skeleton(self) -> Skeleton:
        return Skeleton(self.m, [*self.directed_edges(), *self.undirected_edges()])

    def v_structures(self) -> set[tuple[int, int, int]]:
        """Colliders ``i -> k <- j`` with ``i``, ``j`` non-adjacent, as ``(i, k, j)``, ``i < j``."""
        return _colliders(self.m, self._pa, self.adjacent)

    def has_directed_cycle(self) -> bool:
        return not _acyclic(self.m, self._ch)

    def reaches(self, src: int, dst: int) -> bool:
        """True if a directed path ``src -> ... -> dst`` exists."""
        seen = {src}
        stack = [src]
        while stack:
            x = stack.pop()
            for y in self._ch[x]:
                if y == dst:
                    return True
                if y not in seen:
                    seen.add(y)
                    stack.append(y)
        return False

    # builder operations
    def orient(self, i: int, j: int) -> None:
        """Turn the undirected edge ``i -- j`` into ``i -> j``."""
        if j not in self._un[i]:
            raise ValueError(f"({i}, {j}) is not undirected")
        self._un[i].discard(j)
        self._un[j].discard(i)
        self._ch[i].add(j)
        self._pa[j].add(i)

    def permute(self, perm: Sequence[int]) -> "Pdag":
        return Pdag(
            self.m,
            directed=[(perm[i], perm[j]) for i, j in self.directed_edges()],
            undirected=[(perm[i], perm[j]) for i, j in self.undirected_edges()],
        )

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, Pdag)
            and self.m == other.m
            and self._ch == other._ch
            and self._un == other._un
        )

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"Pdag(m={self.m}, directed={self.directed_edges()}, undirected={self.undirected_edges()})"


class Dag:
    """Directed acyclic graph stored as parent sets."""

    __slots__ = ("m", "_pa", "_ch")

    def __init__(self, m: int, edges: Iterable[Edge] = (), *, check: bool = True):
        pa: list[set[int]] = [set() for _ in range(m)]
        ch: list[set[int]] = [set() for _ in range(m)]
        for i, j in edges:
            _check_id(i, m)
            _check_id(j, m)
            if i == j:
                raise ValueError(f"self loop at {i}")
            pa[j].add(i)
            ch[i].add(j)
        self.m = m
        self._pa = tuple(frozenset(a) for a in pa)
        self._ch = tuple(frozenset(a) for a in ch)
        if check and not _acyclic(m, self._ch):
            raise ValueError("graph contains a directed cycle")

    def parents(self, x: int) -> frozenset[int]:
        return self._pa[x]

    def children(self, x: int) -> frozenset[int]:
        return self._ch[x]

    def has_edge(self, i: int, j: int) -> bool:
        return j in self._ch[i]

    def edges(self) -> list[Edge]:
        return [(i, j) for i in range(self.m) for j in sorted(self._ch[i])]

    @property
    def n_edges(self) -> int:
        return sum(len(c) for c in self._ch)

    def skeleton(self) -> Skeleton:
        return Skeleton(self.m, self.edges())

    def to_pdag(self) -> Pdag:
        return Pdag(self.m, directed=self.edges())

    def v_structures(self) -> set[tuple[int, int, int]]:
        return _colliders(self.m, self._pa, lambda i, j: j in self._ch[i] or j in self._pa[i])

    def topological_order(self) -> list[int]:
        order = _topological(self.m, self._ch)
        if order is None:
            raise ValueError("graph contains a directed cycle")
        return order

    def descendants(self, x: int) -> set[int]:
        out: set[int] = set()
        stack = [x]
        while stack:
            for y in self._ch[stack.pop()]:
                if y not in out:
                    out.add(y)
                    stack.append(y)
        return out

    def permute(self, perm: Sequence[int]) -> "Dag":
        return Dag(self.m, ((perm[i], perm[j]) for i, j in self.edges()), check=False)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Dag) and self.m == other.m and self._ch == other._ch

    def __hash__(self) -> int:
        return hash((self.m, self._ch))

    def __repr__(self) -> str:
        return f"Dag(m={self.m}, edges={self.edges()})"


def _colliders(m, parents, adjacent) -> set[tuple[int, int, int]]:
    out = set()
    for k in range(m):
        for i, j in combinations(sorted(parents[k]), 2):
            if not adjacent(i, j):
                out.add((i, k, j))
    return out


def _topological(m: int, children: Sequence[Iterable[int]]) -> list[int] | None:
    indeg = [0] * m
    for x in range(m):
        for y in children[x]:
            indeg[y] += 1
    queue = deque(x for x in range(m) if indeg[x] == 0)
    order = []
    while queue:
        x = queue.popleft()
        order.append(x)
        for y in sorted(children[x]):
            indeg[y] -= 1
            if indeg[y] == 0:
                queue.append(y)
    return order if len(order) == m else None


def _acyclic(m: int, children: Sequence[Iterable[int]]) -> bool:
    return _topological(m, children) is not None


def is_acyclic(d: Dag | Pdag) -> bool:
    """Kahn's algorithm over the directed marks of ``d``."""
    return _acyclic(d.m, d._ch)


def extend_to_dag(g: Pdag) -> Dag:
    """Orient every undirected edge of ``g`` without adding cycles.

    Uses the Dor-Tarsi sink-elimination procedure, which yields a
    consistent extension (same skeleton, same v-structures) whenever one
    exists. If no eligible sink is left, the smallest remaining undirected
    edge is oriented low-to-high (or high-to-low if that closes a cycle)
    and elimination resumes.
    """
    if g.has_directed_cycle():
        raise NoOrientation("input already contains a directed cycle")
    work = g.copy()
    alive = set(range(g.m))
    # adjacency restricted to alive nodes, maintained incrementally
    pa = [set(s) for s in g._pa]
    ch = [set(s) for s in g._ch]
    un = [set(s) for s in g._un]

    def remove(x: int) -> None:
        alive.discard(x)
        for y in pa[x]:
            ch[y].discard(x)
        for y in un[x]:
            un[y].discard(x)
        for y in ch[x]:
            pa[y].discard(x)
        pa[x].clear()
        un[x].clear()
        ch[x].clear()

    while alive:
        sink = None
        for x in sorted(alive):
            if ch[x]:
                continue
            adj_x = pa[x] | un[x]
            if all(adj_x - {y} <= (pa[y] | ch[y] | un[y]) for y in un[x]):
                sink = x
                break
        if sink is not None:
            for y in sorted(un[sink]):
                work.orient(y, sink)
            remove(sink)
            continue
        pending = sorted((i, j) for i in alive for j in un[i] if i < j)
        if not pending:
            raise NoOrientation("no sink among remaining nodes")
        i, j = pending[0]
        if work.reaches(j, i):
            i, j = j, i
        work.orient(i, j)
        un[i].discard(j)
        un[j].discard(i)
        ch[i].add(j)
        pa[j].add(i)
    dag = Dag(g.m, work.directed_edges(), check=False)
    assert is_acyclic(dag), "extension produced a cycle"
    return dag


def check_same_m(*graphs) -> int:
    ms = {g.m for g in graphs}
    if len(ms) != 1:
        raise ShapeMismatch(f"variable counts differ: {sorted(ms)}")
    return ms.pop()


def to_edge_list(g: Pdag | Dag | Skeleton) -> str:
    """Sorted text form: ``i -> j`` for directed marks, ``i -- j`` for undirected ones."""
    if isinstance(g, Skeleton):
        lines = [(i, j, "--") for i, j in g.edges()]
    elif isinstance(g, Dag):
        lines = [(i, j, "->") for i, j in g.edges()]
    else:
        lines = [(i, j, "->") for i, j in g.directed_edges()]
        lines += [(i, j, "--") for i, j in g.undirected_edges()]
    lines.sort()
    return "".join(f"{i} {mark} {j}\n" for i, j, mark in lines)


def from_edge_list(text: str, m: int) -> Pdag:
    directed, undirected = [], []
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        a, mark, b = line.split()
        if mark not in ("->", "--"):
            raise ValueError(f"unknown edge mark {mark!r}")
        (directed if mark == "->" else undirected).append((int(a), int(b)))
    return Pdag(m, directed, undirected)


def iter_pairs(m: int) -> Iterator[Edge]:
    return combinations(range(m), 2)
