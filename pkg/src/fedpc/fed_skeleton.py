"""Layer-wise federated skeleton learning.

Each round ``ell``: every client refines the current global skeleton with
CI tests of conditioning-set size exactly ``ell`` on its own shard and
reports the result; the server keeps an edge when strictly more than
``keep_ratio`` of the clients kept it, and starts another layer while
``ell`` is below the largest client-side degree.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Literal, Optional, Sequence, TypeVar

from .citest import CiTester, Engine, make_tester
from .graph import Skeleton, check_same_m
from .pc import layer_sweep
from .messages import SERVER, AggregatedSkeleton, CommLog, SkeletonReport

T = TypeVar("T")
R = TypeVar("R")


@dataclass(frozen=True)
class FederationConfig:
    n_clients: int
    alpha: float = 0.01
    keep_ratio: float = 0.30
    seed: int = 0
    test_engine: Engine = "auto"
    # largest conditioning set tried when searching sepsets; None -> ell_final + 1
    sepset_max_size: Optional[int] = None
    # which neighbourhoods the server ships with each unshielded triple
    candidate_sets: Literal["both", "first"] = "both"
    workers: int = 1

    def __post_init__(self):
        if self.n_clients < 1:
            raise ValueError("n_clients must be >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if not 0.0 < self.keep_ratio <= 1.0:
            raise ValueError("keep_ratio must lie in (0, 1]")
        if self.candidate_sets not in ("both", "first"):
            raise ValueError("candidate_sets must be 'both' or 'first'")


def map_clients(fn: Callable[[T], R], items: Sequence[T], workers: int = 1) -> list[R]:
    """Apply ``fn`` to every client; results come back in client order."""
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def map_testers(fn: Callable[[T], R], testers: Sequence[T], workers: int = 1) -> list[R]:
    """``map_clients`` that evaluates ``fn`` once per distinct tester object.

    Clients sharing a tester (identical shards) get the same result object;
    ``fn`` must be a deterministic function of the tester.
    """
    distinct: dict[int, T] = {}
    for t in testers:
        distinct.setdefault(id(t), t)
    done = dict(zip(distinct, map_clients(fn, list(distinct.values()), workers)))
    return [done[id(t)] for t in testers]


def client_testers(shards: Sequence, config: FederationConfig) -> list[CiTester]:
    """One memoizing tester per client, built from its private shard."""
    if len(shards) != config.n_clients:
        raise ValueError(f"config expects {config.n_clients} clients, got {len(shards)} shards")
    built: dict[int, CiTester] = {}
    out = []
    for shard in shards:
        # identical shard objects (oracle runs) share one tester
        key = id(shard)
        if key not in built:
            built[key] = make_tester(shard, config.test_engine, config.alpha)
        out.append(built[key])
    ms = {t.m for t in out}
    if len(ms) != 1:
        raise ValueError(f"shards disagree on the variable count: {sorted(ms)}")
    return out


def client_layer_update(data, init: Skeleton, ell: int, alpha: float = 0.01, engine: Engine = "auto") -> Skeleton:
    """One client's layer-``ell`` pass over a working copy of ``init``."""
    if ell < 0:
        raise ValueError("ell must be >= 0")
    tester = make_tester(data, engine, alpha)
    adj = init.to_sets()
    layer_sweep(tester, adj, ell)
    return Skeleton.from_sets(adj)


def server_aggregate(skeletons: Sequence[Skeleton], keep_ratio: float = 0.30) -> Skeleton:
    """Keep ``(i, j)`` iff ``votes / N > keep_ratio``."""
    if not skeletons:
        raise ValueError("nothing to aggregate")
    m = check_same_m(*skeletons)
    n = len(skeletons)
    # identical report objects (shared testers) are tallied once, with weight
    weight: dict[int, list] = {}
    for s in skeletons:
        weight.setdefault(id(s), [s, 0])[1] += 1
    if len(weight) == 1:
        # unanimous: the single report survives iff its votes clear the bar
        s, w = next(iter(weight.values()))
        return s if w / n > keep_ratio else Skeleton(m)
    votes: dict[tuple[int, int], int] = {}
    for s, w in weight.values():
        for e in s.edges():
            votes[e] = votes.get(e, 0) + w
    return Skeleton(m, sorted(e for e, v in votes.items() if v / n > keep_ratio))


def should_continue(ell: int, client_skeletons: Sequence[Skeleton]) -> bool:
    distinct = {id(s): s for s in client_skeletons}.values()
    return ell < max((s.max_degree() for s in distinct), default=0)


@dataclass
class SkeletonResult:
    skeleton: Skeleton
    ell_final: int
    # aggregated edge count after each layer
    edges_per_layer: list[int] = field(default_factory=list)
    client_edges_per_layer: list[list[int]] = field(default_factory=list)
    snapshots: list[Skeleton] = field(default_factory=list)


def fed_skele(
    shards: Sequence,
    config: FederationConfig,
    log: Optional[CommLog] = None,
    *,
    testers: Optional[Sequence[CiTester]] = None,
) -> SkeletonResult:
    """Federated skeleton search; the result's ``skeleton`` is the final aggregate."""
    testers = list(testers) if testers is not None else client_testers(shards, config)
    log = log if log is not None else CommLog()
    m = testers[0].m
    current = Skeleton.complete(m)
    result = SkeletonResult(current, 0)
    ell = 0
    while True:
        def update(tester, init=current, ell=ell):
            adj = init.to_sets()
            layer_sweep(tester, adj, ell)
            return Skeleton._trusted(adj)

        local = map_testers(update, testers, config.workers)
        reports: dict[int, SkeletonReport] = {}
        for cid, s in enumerate(local):
            log.send(cid, SERVER, ell, reports.setdefault(id(s), SkeletonReport(s)))
        current = server_aggregate(local, config.keep_ratio)
        more = should_continue(ell, local)
        broadcast = AggregatedSkeleton(current, more)
        for cid in range(len(testers)):
            log.send(SERVER, cid, ell, broadcast)
        result.edges_per_layer.append(current.n_edges)
        counts = {id(s): s.n_edges for s in local}
        result.client_edges_per_layer.append([counts[id(s)] for s in local])
        result.snapshots.append(current)
        if not more:
            break
        ell += 1
    result.skeleton = current
    result.ell_final = ell
    return result
