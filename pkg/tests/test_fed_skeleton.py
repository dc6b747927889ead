import itertools
import random

import numpy as np
import pytest

from fedpc.citest import OracleTester
from fedpc.data import CONTINUOUS, Dataset, linear_ground_truth, partition, random_dag, sample_linear_sem, variable_names
from fedpc.errors import ShapeMismatch
from fedpc.fed_skeleton import (
    FederationConfig,
    client_layer_update,
    fed_skele,
    server_aggregate,
    should_continue,
)
from fedpc.graph import Dag, Skeleton
from fedpc.messages import CommLog, audit
from fedpc.pc import SkeletonTrace, layer_sweep, learn_skeleton

from oracles import random_dag_edges


def sem_data(m, n, seed, degree=2.0):
    gt = linear_ground_truth(random_dag(m, degree, seed), seed)
    return gt, sample_linear_sem(gt, n, seed)


def test_config_validation():
    with pytest.raises(ValueError):
        FederationConfig(0)
    with pytest.raises(ValueError):
        FederationConfig(3, alpha=0.0)
    with pytest.raises(ValueError):
        FederationConfig(3, keep_ratio=0.0)
    with pytest.raises(ValueError):
        FederationConfig(3, candidate_sets="union")
    assert FederationConfig(3).keep_ratio == 0.30 and FederationConfig(3).alpha == 0.01


# -- client update ----------------------------------------------------------------


def test_client_update_layer_zero_removes_marginal_independence():
    d = Dag(3, [(0, 1), (2, 1)])
    out = client_layer_update(d, Skeleton.complete(3), 0)
    assert out == Skeleton(3, [(0, 1), (1, 2)])


def test_client_update_beyond_degree_is_identity():
    s = Skeleton(4, [(0, 1), (1, 2)])
    assert client_layer_update(Dag(4), s, 3) == s
    with pytest.raises(ValueError):
        client_layer_update(Dag(4), s, -1)


def test_client_update_uses_only_current_layer():
    d = Dag(4, [(0, 1), (1, 2), (2, 3)])
    t = OracleTester(d)
    client_layer_update(t, Skeleton.complete(4), 1)
    assert all(len(key[2]) == 1 for key in t._memo)


def test_client_update_matches_instrumented_centralized_layers():
    rng = random.Random(2)
    for _ in range(50):
        m = rng.randint(3, 7)
        d = Dag(m, random_dag_edges(m, rng.random() * 0.7, rng))
        adj = Skeleton.complete(m).to_sets()
        current = Skeleton.complete(m)
        ell = 0
        while True:
            layer_sweep(OracleTester(d), adj, ell)
            current = client_layer_update(d, current, ell)
            assert current == Skeleton.from_sets(adj)
            if ell >= max(len(a) for a in adj):
                break
            ell += 1
        assert current == learn_skeleton(d)[0]


# -- aggregation --------------------------------------------------------------------


def test_aggregate_single_client_is_identity():
    s = Skeleton(4, [(0, 1), (2, 3)])
    assert server_aggregate([s], 0.3) == s


def test_aggregate_strict_threshold():
    yes = Skeleton(2, [(0, 1)])
    no = Skeleton(2)
    four = [Skeleton(2, [(0, 1)]) for _ in range(4)] + [Skeleton(2) for _ in range(6)]
    three = [Skeleton(2, [(0, 1)]) for _ in range(3)] + [Skeleton(2) for _ in range(7)]
    assert server_aggregate(four, 0.3) == yes
    assert server_aggregate(three, 0.3) == no
    # shared report objects are weighted by multiplicity
    assert server_aggregate([yes] * 3 + [no] * 7, 0.3) == no
    assert server_aggregate([yes] * 4 + [no] * 6, 0.3) == yes


def test_aggregate_matches_brute_force_counts():
    rng = random.Random(3)
    for _ in range(300):
        m = rng.randint(2, 4)
        n = rng.randint(1, 5)
        pairs = list(itertools.combinations(range(m), 2))
        sks = [Skeleton(m, [p for p in pairs if rng.random() < 0.5]) for _ in range(n)]
        ratio = rng.choice([0.1, 0.2, 0.3, 0.5, 0.6, 1.0])
        want = [p for p in pairs if sum(s.adjacent(*p) for s in sks) / n > ratio]
        agg = server_aggregate(sks, ratio)
        assert agg == Skeleton(m, want)
        union = {e for s in sks for e in s.edges()}
        inter = set.intersection(*(set(s.edges()) for s in sks))
        assert set(agg.edges()) <= union
        if ratio < 1.0:
            assert inter <= set(agg.edges())


def test_aggregate_ratio_extremes():
    sks = [Skeleton(3, [(0, 1)]), Skeleton(3, [(1, 2)]), Skeleton(3, [(0, 1), (0, 2)])]
    union = sorted({e for s in sks for e in s.edges()})
    assert server_aggregate(sks, 1e-9) == Skeleton(3, union)
    assert server_aggregate(sks, 1.0) == Skeleton(3)
    assert server_aggregate([Skeleton.complete(3)] * 3, 1.0) == Skeleton(3)


def test_aggregate_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        server_aggregate([Skeleton(3), Skeleton(4)])


# -- stopping rule --------------------------------------------------------------------


def test_should_continue():
    assert not should_continue(0, [Skeleton(4), Skeleton(4)])
    star = Skeleton(4, [(0, 1), (0, 2), (0, 3)])
    assert should_continue(2, [star]) and not should_continue(3, [star])
    rng = random.Random(4)
    for _ in range(200):
        sks = [Skeleton(5, [p for p in itertools.combinations(range(5), 2) if rng.random() < 0.4]) for _ in range(3)]
        top = max(len([v for v in range(5) if s.adjacent(x, v)]) for s in sks for x in range(5))
        ell = rng.randint(0, 4)
        assert should_continue(ell, sks) == (ell < top)


# -- full subroutine -------------------------------------------------------------------


def test_single_client_equals_centralized_skeleton():
    for seed in range(10):
        _, data = sem_data(10, 1000, seed)
        r = fed_skele([data], FederationConfig(1))
        trace = SkeletonTrace()
        s, _ = learn_skeleton(data, trace=trace)
        assert r.skeleton == s
        assert r.ell_final == trace.ell_final


def test_identical_oracle_clients_recover_true_skeleton():
    rng = random.Random(5)
    for _ in range(100):
        m = rng.randint(2, 6)
        d = Dag(m, random_dag_edges(m, rng.random(), rng))
        r = fed_skele([d] * 3, FederationConfig(3))
        assert r.skeleton == d.skeleton()


def test_independent_columns_give_empty_skeleton_after_layer_zero():
    x = np.random.default_rng(6).normal(size=(3000, 6))
    shards = partition(Dataset(variable_names(6), [CONTINUOUS] * 6, x), 3, 0)
    # one client's type-I error survives the vote (1/3 > 0.30), so the level
    # is set low enough that no test of the 45 fires by chance
    r = fed_skele(shards, FederationConfig(3, alpha=1e-6))
    assert r.skeleton == Skeleton(6) and r.ell_final == 0


def test_rounds_layers_and_monotone_messages():
    _, data = sem_data(12, 3000, 7)
    shards = partition(data, 3, 7)
    log = CommLog()
    r = fed_skele(shards, FederationConfig(3), log)
    assert log.rounds() == r.ell_final + 1 == len(r.edges_per_layer)
    assert log.count("SkeletonReport") == 3 * (r.ell_final + 1)
    assert log.count("AggregatedSkeleton") == 3 * (r.ell_final + 1)
    flags = [m.payload.continue_flag for m in log.messages if m.kind == "AggregatedSkeleton"]
    assert flags[-1] is False and all(flags[:-3])
    assert audit(log) == []
    assert r.snapshots[-1] == r.skeleton


def test_fed_skele_deterministic_and_worker_independent():
    _, data = sem_data(10, 2000, 8)
    shards = partition(data, 5, 8)
    a = fed_skele(shards, FederationConfig(5, seed=1))
    b = fed_skele(list(shards), FederationConfig(5, seed=1, workers=4))
    assert a.skeleton == b.skeleton and a.edges_per_layer == b.edges_per_layer


def test_client_order_does_not_change_skeleton():
    _, data = sem_data(10, 2000, 9)
    shards = partition(data, 3, 9)
    a = fed_skele(shards, FederationConfig(3)).skeleton
    b = fed_skele(shards[::-1], FederationConfig(3)).skeleton
    assert a == b


def test_shard_count_must_match_config():
    with pytest.raises(ValueError):
        fed_skele([Dag(3)] * 2, FederationConfig(3))
