"""The classic (order-dependent) PC algorithm on one dataset.

Pairs are visited in lexicographic order of ``(i, j)`` and conditioning
sets in lexicographic ``combinations`` order, so every run is
deterministic. The layer sweep is shared with the federated skeleton
learner.
"""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterator, Optional

from .citest import CiTester, Engine, make_tester
from .graph import Pdag, Skeleton, extend_to_dag, unshielded_triples


class SepSetTable(Mapping):
    """Separation sets keyed by unordered pair; ``t[i, j] is t[j, i]``."""

    def __init__(self, entries=None):
        self._d: dict[tuple[int, int], frozenset[int]] = {}
        for (i, j), z in dict(entries or {}).items():
            self[i, j] = z

    @staticmethod
    def _key(pair) -> tuple[int, int]:
        i, j = pair
        return (i, j) if i < j else (j, i)

    def __setitem__(self, pair, z) -> None:
        self._d[self._key(pair)] = frozenset(z)

    def __getitem__(self, pair) -> frozenset[int]:
        return self._d[self._key(pair)]

    def __contains__(self, pair) -> bool:
        return self._key(pair) in self._d

    def __iter__(self) -> Iterator[tuple[int, int]]:
        return iter(sorted(self._d))

    def __len__(self) -> int:
        return len(self._d)

    def __repr__(self) -> str:
        return f"SepSetTable({ {k: sorted(v) for k, v in sorted(self._d.items())} })"


def layer_sweep(
    tester: CiTester,
    adj: list[set[int]],
    ell: int,
    sepsets: SepSetTable | None = None,
) -> bool:
    """Run one layer of skeleton search in place on ``adj``.

    Every ordered adjacent pair ``(i, j)`` is tested against each
    ``Z`` of size ``ell`` drawn from the *current* neighbours of ``i``
    minus ``j``; the first independence deletes the edge. Returns True if
    any pair had enough neighbours to be tested.
    """
    eligible = False
    for i in range(len(adj)):
        for j in sorted(adj[i]):
            if j not in adj[i]:
                continue
            others = sorted(adj[i] - {j})
            if len(others) < ell:
                continue
            eligible = True
            for z in combinations(others, ell):
                if tester.test(i, j, z).independent:
                    adj[i].discard(j)
                    adj[j].discard(i)
                    if sepsets is not None:
                        sepsets[i, j] = z
                    break
    return eligible


@dataclass
class SkeletonTrace:
    """Per-layer edge counts of one skeleton search."""

    edges_per_layer: list[int] = field(default_factory=list)

    @property
    def ell_final(self) -> int:
        return len(self.edges_per_layer) - 1


def learn_skeleton(
    data,
    alpha: float = 0.01,
    engine: Engine = "auto",
    *,
    trace: SkeletonTrace | None = None,
) -> tuple[Skeleton, SepSetTable]:
    """PC skeleton search from the complete graph.

    Layer ``ell`` runs, then ``ell`` increments, until every variable has
    fewer than ``ell`` neighbours.
    """
    tester = make_tester(data, engine, alpha)
    if tester.m < 2:
        raise ValueError("skeleton learning needs at least two variables")
    adj = Skeleton.complete(tester.m).to_sets()
    sepsets = SepSetTable()
    ell = 0
    while True:
        layer_sweep(tester, adj, ell, sepsets)
        if trace is not None:
            trace.edges_per_layer.append(sum(len(a) for a in adj) // 2)
        if ell >= max(len(a) for a in adj):
            break
        ell += 1
    return Skeleton.from_sets(adj), sepsets


def orient_v_structures(
    s: Skeleton,
    sepsets: Mapping,
    diagnostics: Optional[dict] = None,
) -> Pdag:
    """Orient ``i -> k <- j`` for each unshielded triple whose pair's sepset omits ``k``.

    ``sepsets`` maps unordered pairs to a separation set or to None. A
    missing or None entry leaves the triple unoriented. When two triples
    disagree about one edge the first, in ``(i, j, k)`` order, wins; an
    orientation that would close a directed cycle is skipped. Both cases
    count as conflicts and only arise from inconsistent CI answers.
    """
    g = Pdag.from_skeleton(s)
    conflicts = 0
    for t in unshielded_triples(s):
        key = (t.i, t.j)
        z = sepsets.get(key) if key in sepsets else None
        if z is None or t.k in z:
            continue
        for a in (t.i, t.j):
            if g.is_undirected(a, t.k):
                if g.reaches(t.k, a):
                    conflicts += 1
                else:
                    g.orient(a, t.k)
            elif g.is_directed(t.k, a):
                conflicts += 1
    if diagnostics is not None:
        diagnostics["conflicts"] = conflicts
    return g


def _creates_cycle(g: Pdag, a: int, b: int) -> bool:
    return g.reaches(b, a)


def _meek_step(g: Pdag) -> Optional[tuple[int, int, str]]:
    """Find one applicable Meek rule instance ``a -- b  =>  a -> b``, lowest ``(a, b)`` first."""
    for a, b in g.undirected_edges():
        for x, y in ((a, b), (b, a)):
            rule = _meek_applies(g, x, y)
            if rule and not _creates_cycle(g, x, y):
                return x, y, rule
    return None


def _meek_applies(g: Pdag, a: int, b: int) -> Optional[str]:
    """Which of R1-R4 (if any) compels ``a -> b`` for the undirected edge ``a -- b``."""
    pa_a = g.parents(a)
    # R1: c -> a -- b, c and b non-adjacent
    for c in pa_a:
        if not g.adjacent(c, b):
            return "R1"
    # R2: a -> c -> b
    for c in g.children(a):
        if g.is_directed(c, b):
            return "R2"
    un_a = g.undirected_neighbors(a)
    # R3: a -- c -> b, a -- d -> b, c and d non-adjacent
    preds = sorted(c for c in un_a if c != b and g.is_directed(c, b))
    for c, d in combinations(preds, 2):
        if not g.adjacent(c, d):
            return "R3"
    # R4: a -- c -> d -> b with c, b non-adjacent and a adjacent to d
    for c in un_a:
        if c == b or g.adjacent(c, b):
            continue
        for d in g.children(c):
            if d != a and g.is_directed(d, b) and g.adjacent(a, d):
                return "R4"
    return None


def apply_meek_rules(g: Pdag, log: Optional[list] = None) -> Pdag:
    """Closure of ``g`` under Meek's rules R1-R4.

    Orientations that would close a directed cycle are skipped, which only
    matters for inputs that are not patterns of any DAG.
    """
    out = g.copy()
    while (step := _meek_step(out)) is not None:
        a, b, rule = step
        out.orient(a, b)
        if log is not None:
            log.append(step)
    return out


def cpdag_from_dag(dag) -> Pdag:
    """Pattern of the DAG (skeleton plus v-structures) closed under Meek's rules."""
    pattern = Pdag.from_skeleton(dag.skeleton())
    for i, k, j in sorted(dag.v_structures()):
        for a in (i, j):
            if pattern.is_undirected(a, k):
                pattern.orient(a, k)
    return apply_meek_rules(pattern)


def pc(data, alpha: float = 0.01, engine: Engine = "auto") -> Pdag:
    skeleton, sepsets = learn_skeleton(data, alpha, engine)
    return apply_meek_rules(orient_v_structures(skeleton, sepsets))


def pc_dag(data, alpha: float = 0.01, engine: Engine = "auto"):
    return extend_to_dag(pc(data, alpha, engine))
