"""Federated edge orientation via consensus separation sets.

The server ships every unshielded triple of the final skeleton, with the
relevant neighbourhoods, to each client. A client searches subsets of
those neighbourhoods for separation sets of the triple's end points and
reports the one with the highest p-value above ``alpha``. The server
keeps, per pair, the report with the highest p-value overall, orients
v-structures from those consensus sets and closes the result under
Meek's rules.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional, Sequence

from .citest import CiTester, Engine, make_tester
from .fed_skeleton import FederationConfig, client_testers, map_testers
from .graph import Pdag, Skeleton, UnshieldedTriple, unshielded_triples
from .pc import apply_meek_rules, orient_v_structures
from .messages import SERVER, CommLog, SepSetReport, SepSetReports, TripleEntry, TripleQuery


def _rank(z: tuple[int, ...]) -> tuple[int, tuple[int, ...]]:
    return (len(z), z)


def _best_sepset(tester: CiTester, pair, candidate_sets, max_size: Optional[int]) -> SepSetReport:
    i, j = pair
    best: Optional[tuple[float, tuple[int, ...]]] = None
    seen: set[tuple[int, ...]] = set()
    for cands in candidate_sets:
        pool = sorted(set(cands) - {i, j})
        top = len(pool) if max_size is None else min(len(pool), max_size)
        for size in range(top + 1):
            for z in combinations(pool, size):
                if z in seen:
                    continue
                seen.add(z)
                r = tester.test(i, j, z)
                if not (r.reliable and r.p_value > tester.alpha):
                    continue
                if best is None or r.p_value > best[0] or (r.p_value == best[0] and _rank(z) < _rank(best[1])):
                    best = (r.p_value, z)
    if best is None:
        return SepSetReport((i, j))
    return SepSetReport((i, j), frozenset(best[1]), best[0])


def client_find_sepset(
    data,
    pair: tuple[int, int],
    candidate_neighbors,
    alpha: float = 0.01,
    *,
    other_neighbors=(),
    max_size: Optional[int] = None,
    engine: Engine = "auto",
) -> SepSetReport:
    """Highest-p separation set for ``pair`` among subsets of the candidate sets.

    Subsets of ``candidate_neighbors`` and, separately, of
    ``other_neighbors`` are tried up to ``max_size`` elements. Ties in
    p-value go to the smaller, then lexicographically smaller, set.
    """
    i, j = pair
    if j in candidate_neighbors:
        raise ValueError("the partner variable may not be a candidate")
    tester = make_tester(data, engine, alpha)
    sets = [candidate_neighbors]
    if other_neighbors:
        sets.append(other_neighbors)
    return _best_sepset(tester, (i, j), sets, max_size)


@dataclass(frozen=True)
class Consensus:
    sepset: Optional[frozenset[int]]
    p_value: Optional[float] = None
    client: Optional[int] = None


def _select(reports: Sequence[SepSetReport]) -> Consensus:
    best = None
    for cid, r in enumerate(reports):
        if not r.present:
            continue
        key = (-r.p_value, _rank(tuple(sorted(r.sepset))), cid)
        if best is None or key < best[0]:
            best = (key, Consensus(r.sepset, r.p_value, cid))
    return best[1] if best else Consensus(None)


def server_select_sepset(reports: Sequence[SepSetReport]) -> Optional[frozenset[int]]:
    """Sepset of the present report with the highest p-value, or None."""
    pairs = {r.pair for r in reports}
    if len(pairs) > 1:
        raise ValueError(f"reports concern different pairs: {sorted(pairs)}")
    return _select(reports).sepset


def identify_v_structures(s_star: Skeleton, consensus, diagnostics: Optional[dict] = None) -> Pdag:
    """Orient ``i -> k <- j`` where the pair's consensus sepset exists and omits ``k``."""
    sepsets = {pair: (c.sepset if isinstance(c, Consensus) else c) for pair, c in dict(consensus).items()}
    return orient_v_structures(s_star, sepsets, diagnostics)


@dataclass
class OrientationResult:
    cpdag: Pdag
    consensus: dict[tuple[int, int], Consensus] = field(default_factory=dict)
    triples: list[UnshieldedTriple] = field(default_factory=list)
    conflicts: int = 0

    def diagnostics(self) -> dict:
        by_pair = {}
        for t in self.triples:
            c = self.consensus.get((t.i, t.j), Consensus(None))
            by_pair.setdefault((t.i, t.j), {"middles": [], "consensus": c})["middles"].append(t.k)
        return {
            "conflicts": self.conflicts,
            "triples": [
                {
                    "pair": list(pair),
                    "middles": sorted(v["middles"]),
                    "sepset": None if v["consensus"].sepset is None else sorted(v["consensus"].sepset),
                    "p_value": v["consensus"].p_value,
                    "client": v["consensus"].client,
                }
                for pair, v in sorted(by_pair.items())
            ],
        }


def triple_query(s_star: Skeleton, candidate_sets: str = "both") -> TripleQuery:
    entries = []
    for t in unshielded_triples(s_star):
        ne_i = s_star.neighbors(t.i) - {t.j}
        ne_j = s_star.neighbors(t.j) - {t.i} if candidate_sets == "both" else frozenset()
        entries.append(TripleEntry(t, frozenset(ne_i), frozenset(ne_j)))
    return TripleQuery(tuple(entries))


def answer_query(tester: CiTester, query: TripleQuery, max_size: Optional[int]) -> SepSetReports:
    """Client side: one report per distinct pair in the query, in query order."""
    out: dict[tuple[int, int], SepSetReport] = {}
    for e in query.entries:
        pair = (e.triple.i, e.triple.j)
        if pair in out:
            continue
        sets = [e.neighbors_i] + ([e.neighbors_j] if e.neighbors_j else [])
        out[pair] = _best_sepset(tester, pair, sets, max_size)
    return SepSetReports(tuple(out.values()))


def fed_orien(
    s_star: Skeleton,
    shards: Sequence,
    config: FederationConfig,
    ell_final: Optional[int] = None,
    log: Optional[CommLog] = None,
    *,
    testers: Optional[Sequence[CiTester]] = None,
    round_offset: int = 0,
) -> OrientationResult:
    testers = list(testers) if testers is not None else client_testers(shards, config)
    log = log if log is not None else CommLog()
    if config.sepset_max_size is not None:
        max_size = config.sepset_max_size
    elif ell_final is not None:
        max_size = ell_final + 1
    else:
        max_size = None

    query = triple_query(s_star, config.candidate_sets)
    triples = [e.triple for e in query.entries]
    consensus: dict[tuple[int, int], Consensus] = {}
    if triples:
        for cid in range(len(testers)):
            log.send(SERVER, cid, round_offset, query)
        batches = map_testers(lambda t: answer_query(t, query, max_size), testers, config.workers)
        for cid, batch in enumerate(batches):
            log.send(cid, SERVER, round_offset, batch)
        for pos, first in enumerate(batches[0].entries):
            consensus[first.pair] = _select([b.entries[pos] for b in batches])
    diag: dict = {}
    pattern = identify_v_structures(s_star, consensus, diag)
    cpdag = apply_meek_rules(pattern)
    return OrientationResult(cpdag, consensus, triples, diag.get("conflicts", 0))
