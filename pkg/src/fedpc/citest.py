"""Conditional-independence test engines.

Three engines answer ``X_i _||_ X_j | Z`` queries: Fisher's Z on
partial correlations (continuous data), the G^2 likelihood-ratio test
(discrete data) and exact d-separation in a known DAG (testing oracle).
Each engine is wrapped by a memoizing *tester* bound to one client's
data, which is what the structure-learning code talks to.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Protocol, Sequence

import numpy as np
from scipy.special import chdtrc

from .data import Dataset
from .errors import Degenerate, InsufficientSamples
from .graph import Dag

Engine = Literal["auto", "fisher_z", "g_square", "oracle"]

RIDGE = 1e-10
# relative residual variance below which the conditioning set is taken as singular
SINGULAR_TOL = 1e-12
MIN_ROWS_PER_DF = 5


@dataclass(frozen=True)
class CiQuery:
    i: int
    j: int
    z: tuple[int, ...] = ()
    alpha: float = 0.01

    def __post_init__(self):
        z = tuple(self.z)
        object.__setattr__(self, "z", z)
        if self.i == self.j:
            raise ValueError("CI query needs two distinct variables")
        if self.i in z or self.j in z:
            raise ValueError("tested variables may not appear in the conditioning set")
        if len(set(z)) != len(z):
            raise ValueError("duplicate ids in conditioning set")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")


@dataclass(frozen=True)
class CiResult:
    p_value: float
    independent: bool
    reliable: bool = True
    statistic: float = float("nan")
    df: float | None = None


def _decide(p: float, alpha: float, **extra) -> CiResult:
    return CiResult(p_value=p, independent=p > alpha, reliable=True, **extra)


class CorrelationCache:
    """Sample correlation matrix of a continuous dataset plus its row count."""

    def __init__(self, corr, n: int, constant=None):
        corr = np.array(corr, dtype=np.float64)
        corr.setflags(write=False)
        self.corr = corr
        self.n = int(n)
        self.constant = frozenset(constant or ())

    @classmethod
    def from_data(cls, data: Dataset | np.ndarray) -> "CorrelationCache":
        x = np.asarray(data.values if isinstance(data, Dataset) else data, dtype=np.float64)
        sd = x.std(axis=0)
        constant = {int(c) for c in np.flatnonzero(sd == 0)}
        with np.errstate(invalid="ignore", divide="ignore"):
            corr = np.corrcoef(x, rowvar=False)
        corr = np.atleast_2d(corr)
        for c in constant:
            corr[c, :] = 0.0
            corr[:, c] = 0.0
        np.clip(corr, -1.0, 1.0, out=corr)
        np.fill_diagonal(corr, 1.0)
        return cls(corr, x.shape[0], constant)

    @property
    def m(self) -> int:
        return self.corr.shape[0]


def _partial_corr(c: CorrelationCache, i: int, j: int, z: Sequence[int]) -> tuple[float, bool]:
    """Partial correlation from the Schur complement of the conditioning block.

    Equivalent to inverting the submatrix over ``{i, j} | z`` but stays
    well defined when ``x_i`` or ``x_j`` is an exact linear function of
    the other columns.
    """
    for v in (i, j):
        if v in c.constant:
            raise Degenerate(f"column {v} has zero variance")
    if i > j:
        # canonical order keeps the result bitwise symmetric in (i, j)
        i, j = j, i
    r = c.corr
    if not z:
        return float(r[i, j]), True
    z = sorted(z)
    czz = r[np.ix_(z, z)]
    cz = r[np.ix_(z, [i, j])]
    try:
        beta = np.linalg.solve(czz, cz)
    except np.linalg.LinAlgError:
        try:
            beta = np.linalg.solve(czz + RIDGE * np.eye(len(z)), cz)
        except np.linalg.LinAlgError:
            return 0.0, False
    res = r[np.ix_([i, j], [i, j])] - cz.T @ beta
    vi, vj = res[0, 0], res[1, 1]
    if vi <= SINGULAR_TOL or vj <= SINGULAR_TOL:
        return 0.0, False
    rho = res[0, 1] / math.sqrt(vi * vj)
    return max(-1.0, min(1.0, float(rho))), True


def partial_correlation(c: CorrelationCache, q: CiQuery) -> float:
    return _partial_corr(c, q.i, q.j, q.z)[0]


def fisher_z_p_value(rho: float, n: int, k: int) -> tuple[float, float]:
    """Two-sided p-value and statistic of Fisher's Z for ``k`` conditioning variables."""
    if abs(rho) >= 1.0:
        return 0.0, math.inf
    zeta = 0.5 * math.log((1.0 + rho) / (1.0 - rho))
    t = math.sqrt(n - k - 3) * abs(zeta)
    # 2 * (1 - Phi(t)) without cancellation
    return math.erfc(t / math.sqrt(2.0)), t


def fisher_z_test(c: CorrelationCache, q: CiQuery) -> CiResult:
    k = len(q.z)
    if c.n <= k + 3:
        raise InsufficientSamples(f"Fisher's Z needs n > |z| + 3 (n={c.n}, |z|={k})")
    rho, ok = _partial_corr(c, q.i, q.j, q.z)
    if not ok:
        # singular conditioning: keep the edge
        return CiResult(p_value=0.0, independent=False, reliable=False, statistic=0.0)
    p, t = fisher_z_p_value(rho, c.n, k)
    return _decide(p, q.alpha, statistic=t)


def g_square_statistic(codes: np.ndarray, cards: Sequence[int], i: int, j: int, z: Sequence[int]):
    """G^2 of ``i`` vs ``j`` stratified by ``z``.

    Returns ``(g2, effective_df, nominal_df)``. Within each stratum only
    rows and columns with non-zero margins count towards the degrees of
    freedom, so empty strata contribute nothing.
    """
    ri, rj = int(cards[i]), int(cards[j])
    nominal = (ri - 1) * (rj - 1)
    for v in z:
        nominal *= int(cards[v])
    n = codes.shape[0]
    if z:
        strata = np.zeros(n, dtype=np.int64)
        for v in z:
            strata = strata * int(cards[v]) + codes[:, v]
        _, strata = np.unique(strata, return_inverse=True)
        s = int(strata.max()) + 1 if n else 0
    else:
        strata = np.zeros(n, dtype=np.int64)
        s = 1
    cell = (strata * ri + codes[:, i]) * rj + codes[:, j]
    obs = np.bincount(cell, minlength=s * ri * rj).reshape(s, ri, rj).astype(np.float64)
    row = obs.sum(axis=2)
    col = obs.sum(axis=1)
    tot = row.sum(axis=1)
    nz = obs > 0
    safe_tot = np.where(tot > 0, tot, 1.0)
    expected = row[:, :, None] * col[:, None, :] / safe_tot[:, None, None]
    g2 = 2.0 * float(np.sum(obs[nz] * np.log(obs[nz] / expected[nz])))
    df_s = (np.count_nonzero(row, axis=1) - 1) * (np.count_nonzero(col, axis=1) - 1)
    df = int(np.clip(df_s, 0, None).sum())
    return max(g2, 0.0), df, nominal


def g_square_test(data: Dataset, q: CiQuery) -> CiResult:
    for v in (q.i, q.j, *q.z):
        k = data.kinds[v]
        if k.kind != "discrete" or (k.cardinality or 0) < 2:
            raise ValueError(f"G^2 needs discrete columns with >= 2 states (column {v})")
    return _g_square(data.values, data.cardinalities(), q)


def _g_square(codes: np.ndarray, cards: Sequence[int], q: CiQuery) -> CiResult:
    g2, df, nominal = g_square_statistic(codes, cards, q.i, q.j, q.z)
    if codes.shape[0] < MIN_ROWS_PER_DF * nominal:
        # too little data to trust the test: report dependence
        p = float(chdtrc(df, g2)) if df > 0 else 1.0
        return CiResult(p_value=p, independent=False, reliable=False, statistic=g2, df=df)
    p = float(chdtrc(df, g2)) if df > 0 else 1.0
    return _decide(p, q.alpha, statistic=g2, df=df)


def d_separated(dag: Dag, i: int, j: int, z: Sequence[int]) -> bool:
    """Reachability ("Bayes ball") test for d-separation of ``i`` and ``j`` given ``z``."""
    pa, ch = dag._pa, dag._ch
    zset = set(z)
    # ancestors of z (inclusive): colliders in here are opened
    anc = set(zset)
    stack = list(zset)
    while stack:
        for p in pa[stack.pop()]:
            if p not in anc:
                anc.add(p)
                stack.append(p)
    # "up" = arrived from a child, "down" = arrived from a parent
    seen_up: set[int] = set()
    seen_down: set[int] = set()
    up_stack, down_stack = [i], []
    while up_stack or down_stack:
        if up_stack:
            node = up_stack.pop()
            if node in seen_up:
                continue
            seen_up.add(node)
            if node == j:
                return False
            if node in zset:
                continue
            up_stack.extend(pa[node])
            down_stack.extend(ch[node])
        else:
            node = down_stack.pop()
            if node in seen_down:
                continue
            seen_down.add(node)
            if node == j:
                return False
            if node not in zset:
                down_stack.extend(ch[node])
            if node in anc:
                up_stack.extend(pa[node])
    return True


_SEPARATED = CiResult(p_value=1.0, independent=True, reliable=True)
_CONNECTED = CiResult(p_value=0.0, independent=False, reliable=True)


def d_separation(true_dag: Dag, q: CiQuery) -> CiResult:
    return _SEPARATED if d_separated(true_dag, q.i, q.j, q.z) else _CONNECTED


class CiTester(Protocol):
    """What structure learners need from a client: answers to CI queries."""

    m: int
    alpha: float

    def test(self, i: int, j: int, z: Sequence[int]) -> CiResult: ...


class _MemoTester:
    """Memoizes results on the canonical key ``(min(i,j), max(i,j), sorted z)``."""

    engine: str

    def __init__(self, m: int, alpha: float):
        if not 0.0 < alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        self.m = m
        self.alpha = alpha
        self.n_tests = 0
        self._memo: dict[tuple, CiResult] = {}

    def test(self, i: int, j: int, z: Sequence[int] = ()) -> CiResult:
        if i > j:
            i, j = j, i
        key = (i, j, tuple(sorted(z)))
        hit = self._memo.get(key)
        if hit is None:
            self.n_tests += 1
            hit = self._run(CiQuery(i, j, key[2], self.alpha))
            self._memo[key] = hit
        return hit

    def _run(self, q: CiQuery) -> CiResult:
        raise NotImplementedError


class FisherZTester(_MemoTester):
    engine = "fisher_z"

    def __init__(self, data: Dataset, alpha: float = 0.01):
        super().__init__(data.m, alpha)
        self.cache = CorrelationCache.from_data(data)
        self.n = data.n

    def _run(self, q):
        return fisher_z_test(self.cache, q)


class GSquareTester(_MemoTester):
    engine = "g_square"

    def __init__(self, data: Dataset, alpha: float = 0.01):
        super().__init__(data.m, alpha)
        if not data.is_discrete:
            raise ValueError("G^2 needs an all-discrete dataset")
        self.codes = np.ascontiguousarray(data.values, dtype=np.int64)
        self.cards = data.cardinalities()
        self.n = data.n

    def _run(self, q):
        return _g_square(self.codes, self.cards, q)


class OracleTester(_MemoTester):
    engine = "oracle"

    def __init__(self, dag: Dag, alpha: float = 0.01):
        super().__init__(dag.m, alpha)
        self.dag = dag

    def _run(self, q):
        return d_separation(self.dag, q)


def make_tester(source, engine: Engine = "auto", alpha: float = 0.01) -> CiTester:
    """Bind a CI engine to one client's data.

    ``source`` is a ``Dataset`` (Fisher's Z or G^2, chosen by column type
    when ``engine='auto'``), a ``Dag`` (d-separation oracle) or an object
    that already implements ``test``.
    """
    if hasattr(source, "test") and not isinstance(source, (Dataset, Dag)):
        return source
    if isinstance(source, Dag):
        if engine not in ("auto", "oracle"):
            raise ValueError(f"a DAG source only supports the oracle engine, not {engine!r}")
        return OracleTester(source, alpha)
    if not isinstance(source, Dataset):
        raise TypeError(f"cannot build a CI tester from {type(source).__name__}")
    if engine == "auto":
        if source.is_continuous:
            engine = "fisher_z"
        elif source.is_discrete:
            engine = "g_square"
        else:
            raise ValueError("mixed continuous/discrete data has no default CI engine")
    if engine == "fisher_z":
        return FisherZTester(source, alpha)
    if engine == "g_square":
        return GSquareTester(source, alpha)
    raise ValueError(f"engine {engine!r} needs a DAG source")
