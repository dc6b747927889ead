"""PC-family baselines for the federated setting.

``pc_all``    PC on the pooled data of all clients (not private; upper reference)
``pc_avg``    PC per client, scores averaged over clients
``pc_best``   PC per client, the client with the lowest SHD
``simple_1``  per-client DAGs merged by directed-edge vote
``simple_2``  per-client skeletons merged by vote, sepsets intersected across clients
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from statistics import fmean
from typing import Optional, Sequence

from .data import Dataset
from .fed_skeleton import FederationConfig, client_testers, map_clients
from .graph import Dag, Pdag, Skeleton, extend_to_dag
from .metrics import StructureScore, score_structure
from .pc import SepSetTable, apply_meek_rules, learn_skeleton, orient_v_structures, pc

BASELINES = ("pc_all", "pc_avg", "pc_best", "simple_1", "simple_2")


@dataclass
class BaselineReport:
    kind: str
    # StructureScore fields; averaged for pc_avg
    score: dict
    seconds: float
    graph: Optional[Dag | Pdag] = None
    per_client: list[StructureScore] = field(default_factory=list)


def mean_score(scores: Sequence[StructureScore]) -> dict:
    return {k: fmean(getattr(s, k) for s in scores) for k in StructureScore.__dataclass_fields__}


def pooled(shards: Sequence):
    """All clients' rows in one dataset (oracle shards: the shared source)."""
    if not isinstance(shards[0], Dataset) and all(s is shards[0] or s == shards[0] for s in shards):
        return shards[0]
    return Dataset.concat(list(shards))


def _vote_dags(dags: Sequence[Dag], keep_ratio: float) -> Pdag:
    n = len(dags)
    votes: dict[tuple[int, int], int] = {}
    for d in dags:
        for e in d.edges():
            votes[e] = votes.get(e, 0) + 1
    directed = []
    for (i, j), v in sorted(votes.items()):
        if v / n <= keep_ratio:
            continue
        back = votes.get((j, i), 0)
        if back / n > keep_ratio and (back > v or (back == v and i > j)):
            # both directions passed: majority wins, ties go low -> high
            continue
        directed.append((i, j))
    return Pdag(dags[0].m, directed)


def _simple_2(testers, config: FederationConfig) -> Dag:
    local = map_clients(lambda t: learn_skeleton(t, config.alpha), testers, config.workers)
    n = len(local)
    m = local[0][0].m
    votes: dict[tuple[int, int], int] = {}
    for s, _ in local:
        for e in s.edges():
            votes[e] = votes.get(e, 0) + 1
    merged = Skeleton(m, sorted(e for e, v in votes.items() if v / n > config.keep_ratio))
    sepsets = SepSetTable()
    for i in range(m):
        for j in range(i + 1, m):
            if merged.adjacent(i, j):
                continue
            # clients that kept the edge stored no sepset and do not take part
            sets = [seps[i, j] for _, seps in local if (i, j) in seps]
            if sets:
                sepsets[i, j] = frozenset.intersection(*sets)
    return extend_to_dag(apply_meek_rules(orient_v_structures(merged, sepsets)))


def run_baseline(kind: str, shards: Sequence, config: FederationConfig, truth: Dag) -> BaselineReport:
    if kind not in BASELINES:
        raise ValueError(f"unknown baseline {kind!r}; choose from {BASELINES}")
    if truth is None:
        raise ValueError(f"baseline {kind!r} needs the true DAG")
    t0 = time.perf_counter()
    testers = client_testers(shards, config)
    per_client: list[StructureScore] = []
    graph = None
    if kind == "pc_all":
        graph = extend_to_dag(pc(pooled(shards), config.alpha, config.test_engine))
        score = score_structure(graph, truth).to_dict()
    elif kind in ("pc_avg", "pc_best", "simple_1"):
        dags = map_clients(lambda t: extend_to_dag(pc(t, config.alpha)), testers, config.workers)
        per_client = [score_structure(d, truth) for d in dags]
        if kind == "pc_avg":
            score = mean_score(per_client)
        elif kind == "pc_best":
            best = min(range(len(dags)), key=lambda c: (per_client[c].shd, c))
            graph = dags[best]
            score = per_client[best].to_dict()
        else:
            graph = _vote_dags(dags, config.keep_ratio)
            score = score_structure(graph, truth).to_dict()
    else:
        graph = _simple_2(testers, config)
        score = score_structure(graph, truth).to_dict()
    return BaselineReport(kind, score, time.perf_counter() - t0, graph, per_client)
