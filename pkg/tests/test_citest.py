import itertools
import math
import random

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedpc.citest import (
    CiQuery,
    CorrelationCache,
    FisherZTester,
    GSquareTester,
    OracleTester,
    d_separated,
    d_separation,
    fisher_z_p_value,
    fisher_z_test,
    g_square_statistic,
    g_square_test,
    make_tester,
    partial_correlation,
)
from fedpc.data import CONTINUOUS, Dataset, discrete
from fedpc.errors import Degenerate, InsufficientSamples
from fedpc.graph import Dag

from oracles import d_separated_by_paths, g_square_by_hand, random_dag_edges, residual_partial_corr


def continuous(x):
    return Dataset([f"X{c}" for c in range(x.shape[1])], [CONTINUOUS] * x.shape[1], x)


def binary(x, card=2):
    return Dataset([f"X{c}" for c in range(x.shape[1])], [discrete(card)] * x.shape[1], x)


def fisher_oracle_p(rho, n, k):
    mpmath.mp.dps = 50
    t = mpmath.sqrt(n - k - 3) * abs(mpmath.atanh(mpmath.mpf(rho)))
    return float(t), float(mpmath.erfc(t / mpmath.sqrt(2)))


# -- queries ------------------------------------------------------------------


def test_query_invariants():
    with pytest.raises(ValueError):
        CiQuery(1, 1)
    with pytest.raises(ValueError):
        CiQuery(0, 1, (0,))
    with pytest.raises(ValueError):
        CiQuery(0, 1, (2, 2))
    with pytest.raises(ValueError):
        CiQuery(0, 1, alpha=1.0)


# -- partial correlation ------------------------------------------------------


def test_empty_conditioning_is_raw_correlation():
    x = np.random.default_rng(0).normal(size=(300, 3))
    c = CorrelationCache.from_data(x)
    assert partial_correlation(c, CiQuery(0, 2)) == c.corr[0, 2]


def test_correlation_cache_invariants():
    x = np.random.default_rng(1).normal(size=(50, 4))
    c = CorrelationCache.from_data(x)
    assert np.allclose(c.corr, c.corr.T)
    assert np.all(np.diag(c.corr) == 1.0)
    assert np.all(np.abs(c.corr) <= 1.0)


def test_sum_column_gives_negative_partial_correlation():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(2000, 2))
    x = np.column_stack([x, x[:, 0] + x[:, 1]])
    c = CorrelationCache.from_data(x)
    rho = partial_correlation(c, CiQuery(0, 1, (2,)))
    assert rho < -0.5
    assert rho == pytest.approx(residual_partial_corr(x, 0, 1, [2]), abs=1e-8)


def test_partial_corr_matches_residual_oracle():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(500, 5))
    x[:, 2] += 0.8 * x[:, 0]
    x[:, 3] += 0.5 * x[:, 2] - 0.7 * x[:, 1]
    x[:, 4] += x[:, 3]
    c = CorrelationCache.from_data(x)
    for i, j in itertools.combinations(range(5), 2):
        rest = [v for v in range(5) if v not in (i, j)]
        for k in range(len(rest) + 1):
            for z in itertools.combinations(rest, k):
                got = partial_correlation(c, CiQuery(i, j, z))
                assert got == pytest.approx(residual_partial_corr(x, i, j, z), abs=1e-8)


def test_independent_columns_small_partial_correlation():
    x = np.random.default_rng(4).normal(size=(5000, 4))
    c = CorrelationCache.from_data(x)
    for z in [(), (2,), (2, 3)]:
        assert abs(partial_correlation(c, CiQuery(0, 1, z))) < 0.1
        assert abs(residual_partial_corr(x, 0, 1, z)) < 0.1


def test_constant_column_is_degenerate():
    x = np.random.default_rng(5).normal(size=(100, 3))
    x[:, 1] = 3.0
    c = CorrelationCache.from_data(x)
    with pytest.raises(Degenerate):
        partial_correlation(c, CiQuery(0, 1))


def test_collinear_conditioning_set_is_unreliable_and_keeps_edge():
    rng = np.random.default_rng(6)
    a = rng.normal(size=200)
    x = np.column_stack([rng.normal(size=200), a, a * 2.0, rng.normal(size=200)])
    c = CorrelationCache.from_data(x)
    # x2 is an exact copy (scaled) of x1, so conditioning on x2 leaves x1 nothing
    r = fisher_z_test(c, CiQuery(1, 3, (2,)))
    assert not r.reliable and not r.independent


# -- Fisher's Z ---------------------------------------------------------------


def test_fisher_golden_value():
    p, t = fisher_z_p_value(0.5, 100, 0)
    t_ref, p_ref = fisher_oracle_p(0.5, 100, 0)
    # the quoted 5.4099 is rounded; sqrt(97) * atanh(0.5) = 5.41004
    assert t == pytest.approx(5.4099, abs=5e-4)
    assert t == pytest.approx(t_ref, rel=1e-12)
    assert p == pytest.approx(p_ref, rel=1e-6)
    assert p == pytest.approx(6.3e-8, rel=0.02)


@settings(max_examples=200)
@given(st.floats(-0.99, 0.99), st.integers(6, 5000), st.integers(0, 2))
def test_fisher_p_matches_high_precision(rho, n, k):
    p, _ = fisher_z_p_value(rho, n, k)
    _, p_ref = fisher_oracle_p(rho, n, k)
    assert p == pytest.approx(p_ref, rel=1e-6, abs=1e-300)


def test_fisher_orthogonal_columns():
    x = np.array([[1.0, 1.0], [-1.0, 1.0], [1.0, -1.0], [-1.0, -1.0]] * 5)
    r = fisher_z_test(CorrelationCache.from_data(x), CiQuery(0, 1, alpha=0.999))
    assert r.statistic == 0.0 and r.p_value == 1.0 and r.independent


def test_fisher_monotone_in_n():
    assert fisher_z_p_value(0.5, 100, 0)[0] < fisher_z_p_value(0.5, 20, 0)[0]
    assert fisher_z_p_value(0.5, 100, 0)[1] > fisher_z_p_value(0.5, 20, 0)[1]


def test_fisher_perfect_correlation_gives_zero():
    assert fisher_z_p_value(1.0, 50, 0) == (0.0, math.inf)
    assert fisher_z_p_value(-1.0, 50, 0)[0] == 0.0


def test_fisher_insufficient_samples():
    c = CorrelationCache(np.eye(3), n=4)
    with pytest.raises(InsufficientSamples):
        fisher_z_test(c, CiQuery(0, 1, (2,)))


def test_fisher_symmetry_permutation_and_determinism():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(400, 5))
    x[:, 1] += 0.3 * x[:, 0] + 0.2 * x[:, 3]
    x[:, 4] += 0.4 * x[:, 1]
    c = CorrelationCache.from_data(x)
    for z in [(2, 3, 4), (3,), (4, 2)]:
        base = fisher_z_test(c, CiQuery(0, 1, z))
        assert fisher_z_test(c, CiQuery(1, 0, z)).p_value == base.p_value
        for perm in itertools.permutations(z):
            assert fisher_z_test(c, CiQuery(0, 1, perm)).p_value == base.p_value
    again = fisher_z_test(CorrelationCache.from_data(x.copy()), CiQuery(0, 1))
    assert again == fisher_z_test(c, CiQuery(0, 1))


# -- G^2 ------------------------------------------------------------------------


def test_g_square_copy_column():
    rng = np.random.default_rng(8)
    a = rng.integers(0, 2, size=100)
    data = binary(np.column_stack([a, a]))
    r = g_square_test(data, CiQuery(0, 1))
    n1 = int(a.sum())
    # hand-computed: two diagonal cells, E = n_a^2 / n
    by_hand = 2.0 * (n1 * math.log(100 / n1) + (100 - n1) * math.log(100 / (100 - n1)))
    assert r.statistic == pytest.approx(by_hand, rel=1e-12)
    assert r.df == 1 and r.p_value < 1e-10 and not r.independent


def test_g_square_matches_hand_counts_stratified():
    rng = np.random.default_rng(9)
    for _ in range(20):
        ci, cj, cz = (int(v) for v in rng.integers(2, 4, size=3))
        n = int(rng.integers(20, 200))
        rows = np.column_stack([rng.integers(0, ci, n), rng.integers(0, cj, n), rng.integers(0, cz, n)])
        g2, _, nominal = g_square_statistic(rows, [ci, cj, cz], 0, 1, (2,))
        assert g2 == pytest.approx(g_square_by_hand(rows.tolist(), ci, cj, cz), rel=1e-9, abs=1e-9)
        assert nominal == (ci - 1) * (cj - 1) * cz


def test_g_square_zero_when_tables_factorize():
    # every (x_i, x_j) combination once per stratum: exact product tables
    rows = [(a, b, s) for s in range(2) for a in range(3) for b in range(2) for _ in range(4)]
    g2, df, _ = g_square_statistic(np.array(rows), [3, 2, 2], 0, 1, (2,))
    assert g2 == pytest.approx(0.0, abs=1e-12) and df == 4


def test_g_square_empty_strata_reduce_df():
    # stratum z=1 never occurs; in stratum z=0 x_j only takes level 0 and 1 of 3
    rows = [(a, b, 0) for a in range(2) for b in range(2) for _ in range(30)]
    g2, df, nominal = g_square_statistic(np.array(rows), [2, 3, 2], 0, 1, (2,))
    assert nominal == 4 and df == 1


def test_g_square_calibration():
    independent = 0
    for seed in range(100):
        x = np.random.default_rng(1000 + seed).integers(0, 2, size=(5000, 2))
        independent += g_square_test(binary(x), CiQuery(0, 1)).independent
    assert independent >= 95


def test_g_square_small_sample_keeps_edge():
    x = np.random.default_rng(10).integers(0, 2, size=(19, 4))
    r = g_square_test(binary(x), CiQuery(0, 1, (2, 3)))  # nominal df 4, needs 20 rows
    assert not r.reliable and not r.independent
    x = np.random.default_rng(10).integers(0, 2, size=(20, 4))
    assert g_square_test(binary(x), CiQuery(0, 1, (2, 3))).reliable


def test_g_square_rejects_continuous():
    with pytest.raises(ValueError):
        g_square_test(continuous(np.zeros((10, 2))), CiQuery(0, 1))


@settings(max_examples=60)
@given(st.integers(0, 10_000), st.integers(10, 300))
def test_result_invariant_holds(seed, n):
    rng = np.random.default_rng(seed)
    x = rng.integers(0, 3, size=(n, 4))
    x[:, 1] = np.where(rng.random(n) < 0.3, x[:, 0], x[:, 1])
    t = GSquareTester(binary(x, 3), alpha=0.05)
    f = FisherZTester(continuous(x + rng.normal(size=x.shape)), alpha=0.05)
    for tester in (t, f):
        for i, j in itertools.combinations(range(4), 2):
            rest = [v for v in range(4) if v not in (i, j)]
            for z in [(), tuple(rest[:1]), tuple(rest)]:
                r = tester.test(i, j, z)
                assert 0.0 <= r.p_value <= 1.0
                if r.reliable:
                    assert r.independent == (r.p_value > 0.05)
                else:
                    assert not r.independent


# -- d-separation ---------------------------------------------------------------


def test_d_separation_examples():
    chain = Dag(3, [(0, 1), (1, 2)])
    assert d_separation(chain, CiQuery(0, 2, (1,))).independent
    assert not d_separation(chain, CiQuery(0, 2)).independent
    collider = Dag(3, [(0, 1), (2, 1)])
    assert d_separation(collider, CiQuery(0, 2)).independent
    r = d_separation(collider, CiQuery(0, 2, (1,)))
    assert not r.independent and r.p_value == 0.0 and r.reliable
    # conditioning on a descendant of the collider opens it
    d = Dag(4, [(0, 1), (2, 1), (1, 3)])
    assert not d_separated(d, 0, 2, (3,))


def test_d_separation_matches_path_enumeration():
    rng = random.Random(12)
    for _ in range(25):
        m = 7
        edges = random_dag_edges(m, rng.choice([0.2, 0.35, 0.5]), rng)
        dag = Dag(m, edges)
        for i, j in itertools.combinations(range(m), 2):
            rest = [v for v in range(m) if v not in (i, j)]
            for k in range(3):
                for z in itertools.combinations(rest, k):
                    want = d_separated_by_paths(m, edges, i, j, z)
                    assert d_separated(dag, i, j, z) == want
                    assert d_separated(dag, j, i, z) == want


# -- testers ----------------------------------------------------------------------


def test_memo_tester_caches_canonical_key():
    t = OracleTester(Dag(4, [(0, 1), (1, 2), (2, 3)]))
    a = t.test(3, 0, (2, 1))
    b = t.test(0, 3, (1, 2))
    assert a is b and t.n_tests == 1


def test_make_tester_dispatch():
    assert make_tester(Dag(2, [(0, 1)])).engine == "oracle"
    assert make_tester(continuous(np.random.default_rng(0).normal(size=(20, 2)))).engine == "fisher_z"
    assert make_tester(binary(np.zeros((20, 2), dtype=int))).engine == "g_square"
    t = OracleTester(Dag(2))
    assert make_tester(t) is t
    with pytest.raises(ValueError):
        make_tester(Dag(2), engine="fisher_z")
