"""Slow, obviously-correct reference implementations used only by the tests.

None of these share code with the package: they work from definitions
(path blocking, Markov equivalence by enumeration, brute-force search).
"""

from __future__ import annotations

import itertools
import math
import random

import numpy as np

from fedpc.graph import Dag, Pdag


def all_dags(m: int):
    """Every labelled DAG on ``m`` nodes (1, 3, 25, 543, 29281 for m = 1..5)."""
    pairs = list(itertools.combinations(range(m), 2))
    for marks in itertools.product((0, 1, 2), repeat=len(pairs)):
        edges = [(i, j) if k == 1 else (j, i) for (i, j), k in zip(pairs, marks) if k]
        if not has_cycle(m, edges):
            yield Dag(m, edges, check=False)


def has_cycle(m: int, edges) -> bool:
    """DFS over every simple directed path."""
    out = {v: [b for a, b in edges if a == v] for v in range(m)}

    def walk(start, v, seen):
        for w in out[v]:
            if w == start:
                return True
            if w not in seen and walk(start, w, seen | {w}):
                return True
        return False

    return any(walk(v, v, {v}) for v in range(m))


def random_dag_edges(m: int, p: float, rng: random.Random):
    order = list(range(m))
    rng.shuffle(order)
    return [(order[a], order[b]) for a in range(m) for b in range(a + 1, m) if rng.random() < p]


def descendants(edges, x):
    out, stack = {x}, [x]
    while stack:
        v = stack.pop()
        for a, b in edges:
            if a == v and b not in out:
                out.add(b)
                stack.append(b)
    return out


def d_separated_by_paths(m: int, edges, i: int, j: int, z) -> bool:
    """Enumerate every simple undirected path and apply the blocking rules."""
    z = set(z)
    directed = set(edges)
    nbrs = {v: set() for v in range(m)}
    for a, b in edges:
        nbrs[a].add(b)
        nbrs[b].add(a)
    desc = {v: descendants(edges, v) for v in range(m)}

    def active(path):
        for a, b, c in zip(path, path[1:], path[2:]):
            collider = (a, b) in directed and (c, b) in directed
            if collider:
                if not (desc[b] & z):
                    return False
            elif b in z:
                return False
        return True

    def paths(v, seen):
        if v == j:
            yield list(seen)
            return
        for w in nbrs[v]:
            if w not in seen:
                seen.append(w)
                yield from paths(w, seen)
                seen.pop()

    return not any(active(p) for p in paths(i, [i]))


def v_structures(m: int, edges, extra_adjacent=()):
    """Colliders a -> k <- b among ``edges``; ``extra_adjacent`` pairs also count as adjacent."""
    e = set(edges)
    more = {frozenset(x) for x in extra_adjacent}
    adj = lambda a, b: (a, b) in e or (b, a) in e or frozenset((a, b)) in more  # noqa: E731
    out = set()
    for k in range(m):
        pa = sorted(a for a, b in e if b == k)
        for a, b in itertools.combinations(pa, 2):
            if not adj(a, b):
                out.add((a, k, b))
    return out


def mec_cpdag(dag: Dag) -> Pdag:
    """CPDAG by brute force: orient an edge iff every Markov-equivalent DAG agrees."""
    m = dag.m
    skel = [(min(a, b), max(a, b)) for a, b in dag.edges()]
    target = v_structures(m, dag.edges())
    members = []
    for bits in itertools.product((0, 1), repeat=len(skel)):
        edges = [(a, b) if s == 0 else (b, a) for (a, b), s in zip(skel, bits)]
        if not has_cycle(m, edges) and v_structures(m, edges) == target:
            members.append(set(edges))
    directed, undirected = [], []
    for a, b in skel:
        if all((a, b) in mem for mem in members):
            directed.append((a, b))
        elif all((b, a) in mem for mem in members):
            directed.append((b, a))
        else:
            undirected.append((a, b))
    return Pdag(m, directed, undirected)


def consistent_extensions(g: Pdag):
    """All DAGs obtained by orienting ``g``'s undirected edges that keep its v-structures and add none."""
    m = g.m
    und = g.undirected_edges()
    dirs = g.directed_edges()
    # v-structures of a partially directed graph: colliders of its directed
    # marks whose tails are non-adjacent in the full skeleton
    target = v_structures(m, dirs, und)
    out = []
    for bits in itertools.product((0, 1), repeat=len(und)):
        edges = dirs + [(a, b) if s == 0 else (b, a) for (a, b), s in zip(und, bits)]
        if not has_cycle(m, edges) and v_structures(m, edges) == target:
            out.append(Dag(m, edges))
    return out


def unshielded_triples_brute(m: int, undirected_edges):
    e = {frozenset(x) for x in undirected_edges}
    out = set()
    for i, k, j in itertools.permutations(range(m), 3):
        if i < j and frozenset((i, k)) in e and frozenset((k, j)) in e and frozenset((i, j)) not in e:
            out.add((i, k, j))
    return out


# -- Meek closure by exhaustive rule application --------------------------


def _state(g: Pdag):
    return (frozenset(g.directed_edges()), frozenset(g.undirected_edges()))


def _rules_fire(d: set, u: set, a: int, b: int) -> bool:
    """Does any of R1-R4 (as stated by Meek) compel a -> b, given a -- b?"""
    nodes = {x for e in d | u for x in e}

    def dir_(x, y):
        return (x, y) in d

    def und(x, y):
        return (min(x, y), max(x, y)) in u

    def adj(x, y):
        return dir_(x, y) or dir_(y, x) or und(x, y)

    for c in nodes:
        # R1: c -> a -- b, c not adjacent to b
        if dir_(c, a) and c != b and not adj(c, b):
            return True
        # R2: a -> c -> b
        if dir_(a, c) and dir_(c, b):
            return True
    for c, e in itertools.permutations(nodes, 2):
        # R3: a -- c -> b, a -- e -> b, c and e not adjacent
        if und(a, c) and und(a, e) and dir_(c, b) and dir_(e, b) and not adj(c, e) and c < e:
            return True
        # R4: a -- c -> e -> b, c not adjacent to b, a adjacent to e
        if und(a, c) and dir_(c, e) and dir_(e, b) and not adj(c, b) and adj(a, e):
            return True
    return False


def meek_fixpoints(g: Pdag, limit: int = 20000):
    """Terminal states reachable by applying single rule instances in every possible order."""
    start = _state(g)
    seen = {start}
    frontier = [start]
    terminal = set()
    while frontier:
        d, u = frontier.pop()
        moves = []
        for a, b in u:
            for x, y in ((a, b), (b, a)):
                if _rules_fire(set(d), set(u), x, y):
                    moves.append((x, y))
        if not moves:
            terminal.add((d, u))
            continue
        for x, y in moves:
            nd = d | {(x, y)}
            nu = u - {(min(x, y), max(x, y))}
            st = (frozenset(nd), frozenset(nu))
            if st not in seen:
                seen.add(st)
                frontier.append(st)
                if len(seen) > limit:
                    raise RuntimeError("state space too large")
    return terminal


# -- statistics -------------------------------------------------------------


def residual_partial_corr(x: np.ndarray, i: int, j: int, z) -> float:
    """Correlate the residuals of x_i and x_j after least-squares regression on z."""
    n = x.shape[0]
    design = np.column_stack([np.ones(n)] + [x[:, v] for v in z])
    ri = x[:, i] - design @ np.linalg.lstsq(design, x[:, i], rcond=None)[0]
    rj = x[:, j] - design @ np.linalg.lstsq(design, x[:, j], rcond=None)[0]
    return float(np.dot(ri, rj) / math.sqrt(np.dot(ri, ri) * np.dot(rj, rj)))


def g_square_by_hand(rows, ci: int, cj: int, cz: int) -> float:
    """G^2 = 2 sum O ln(O/E) with E from the stratum margins; plain Python loops."""
    total = 0.0
    for s in range(cz):
        stratum = [r for r in rows if r[2] == s]
        n = len(stratum)
        if n == 0:
            continue
        for a in range(ci):
            for b in range(cj):
                o = sum(1 for r in stratum if r[0] == a and r[1] == b)
                if o == 0:
                    continue
                ra = sum(1 for r in stratum if r[0] == a)
                cb = sum(1 for r in stratum if r[1] == b)
                total += o * math.log(o * n / (ra * cb))
    return 2.0 * total
