"""Datasets, synthetic ground truths and client partitioning.

All randomness flows through numpy's Philox counter-based generator,
keyed by ``(seed, stream)`` so that each purpose (graph, weights,
samples, partition) draws from its own reproducible stream.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .errors import TooFewSamples
from .graph import Dag

STREAM_DAG = 1
STREAM_WEIGHTS = 2
STREAM_SAMPLES = 3
STREAM_PARTITION = 4

NOISE_SCALE = 0.4
WEIGHT_LOW, WEIGHT_HIGH = 0.5, 2.0


def rng_for(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(stream)])))


@dataclass(frozen=True)
class ColumnKind:
    kind: Literal["continuous", "discrete"]
    cardinality: int | None = None

    def __post_init__(self):
        if self.kind == "discrete" and (self.cardinality is None or self.cardinality < 1):
            raise ValueError("discrete columns need a positive cardinality")
        if self.kind == "continuous" and self.cardinality is not None:
            raise ValueError("continuous columns carry no cardinality")


CONTINUOUS = ColumnKind("continuous")


def discrete(cardinality: int) -> ColumnKind:
    return ColumnKind("discrete", cardinality)


class Dataset:
    """Row-major sample matrix with named, typed columns.

    Discrete columns hold category codes in ``[0, cardinality)``. The
    value array is read-only; row and column selections return new
    datasets.
    """

    def __init__(self, names: Sequence[str], kinds: Sequence[ColumnKind], values):
        names = tuple(names)
        kinds = tuple(kinds)
        all_discrete = all(k.kind == "discrete" for k in kinds)
        arr = np.array(values, dtype=np.int64 if all_discrete and kinds else np.float64)
        if arr.ndim != 2:
            arr = arr.reshape(-1, len(names))
        if arr.shape[1] != len(names) or len(kinds) != len(names):
            raise ValueError("names, kinds and value columns disagree in length")
        if len(set(names)) != len(names):
            raise ValueError("duplicate variable names")
        for c, k in enumerate(kinds):
            if k.kind == "discrete" and arr.shape[0]:
                col = arr[:, c]
                if col.min() < 0 or col.max() >= k.cardinality or np.any(col != np.floor(col)):
                    raise ValueError(f"column {names[c]!r} has codes outside [0, {k.cardinality})")
        arr.setflags(write=False)
        self.names = names
        self.kinds = kinds
        self.values = arr

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]

    @property
    def is_discrete(self) -> bool:
        return all(k.kind == "discrete" for k in self.kinds)

    @property
    def is_continuous(self) -> bool:
        return all(k.kind == "continuous" for k in self.kinds)

    def cardinalities(self) -> list[int]:
        return [k.cardinality or 0 for k in self.kinds]

    def rows(self, index) -> "Dataset":
        return Dataset(self.names, self.kinds, self.values[np.asarray(index, dtype=np.int64)])

    def reorder(self, order: Sequence[int]) -> "Dataset":
        """Columns ``order[0], order[1], ...`` of this dataset, in that order."""
        order = list(order)
        return Dataset([self.names[c] for c in order], [self.kinds[c] for c in order], self.values[:, order])

    @staticmethod
    def concat(parts: Sequence["Dataset"]) -> "Dataset":
        first = parts[0]
        for p in parts[1:]:
            if p.names != first.names or p.kinds != first.kinds:
                raise ValueError("cannot concatenate datasets with different schemas")
        return Dataset(first.names, first.kinds, np.concatenate([p.values for p in parts]))

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, Dataset)
            and self.names == other.names
            and self.kinds == other.kinds
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"Dataset(n={self.n}, m={self.m})"

    # CSV + sidecar schema
    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(self.names) + "\n")
        fmts = ["%d" if k.kind == "discrete" else "%.17g" for k in self.kinds]
        for row in self.values.tolist():
            buf.write(",".join(f % v for f, v in zip(fmts, row)) + "\n")
        return buf.getvalue()

    def schema(self) -> dict:
        return {
            "columns": [
                {"name": name, "kind": k.kind, **({"cardinality": k.cardinality} if k.cardinality else {})}
                for name, k in zip(self.names, self.kinds)
            ]
        }

    @classmethod
    def from_csv(cls, text: str, schema: dict) -> "Dataset":
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        cols = {c["name"]: c for c in schema["columns"]}
        if set(header) != set(cols):
            raise ValueError("CSV header does not match schema columns")
        kinds = [ColumnKind(cols[h]["kind"], cols[h].get("cardinality")) for h in header]
        rows = [[float(v) for v in r] for r in reader if r]
        values = np.array(rows, dtype=np.float64).reshape(len(rows), len(header))
        return cls(header, kinds, values)


def variable_names(m: int) -> list[str]:
    """``X00, X01, ...``: zero padded so lexicographic order equals id order."""
    width = max(2, len(str(m - 1)))
    return [f"X{i:0{width}d}" for i in range(m)]


@dataclass
class GroundTruth:
    dag: Dag
    kind: Literal["linear_sem", "discrete_bn"]
    names: list[str]
    weights: dict[tuple[int, int], float] = field(default_factory=dict)
    # cpts[x] has shape (*parent cards, card_x); parent axes follow parent_order[x]
    cpts: list[np.ndarray] = field(default_factory=list)
    parent_order: list[tuple[int, ...]] = field(default_factory=list)
    states: list[list[str]] = field(default_factory=list)
    noise_scale: float = NOISE_SCALE

    def __post_init__(self):
        if self.kind == "linear_sem" and set(self.weights) != set(self.dag.edges()):
            raise ValueError("weights must cover exactly the DAG edges")
        if self.kind == "discrete_bn":
            for x, table in enumerate(self.cpts):
                if not np.allclose(table.sum(axis=-1), 1.0, atol=1e-9, rtol=0):
                    raise ValueError(f"CPT rows of variable {x} do not sum to 1")

    @property
    def m(self) -> int:
        return self.dag.m


def random_dag(m: int, expected_degree: float, seed: int) -> Dag:
    """Erdos-Renyi DAG over a random causal order.

    Each pair earlier->later in the order is an edge independently with
    probability ``expected_degree / (m - 1)``.
    """
    if m < 2:
        raise ValueError("random_dag needs m >= 2")
    p = min(1.0, max(0.0, expected_degree / (m - 1)))
    rng = rng_for(seed, STREAM_DAG)
    order = rng.permutation(m)
    draws = rng.random((m, m))
    edges = [
        (int(order[a]), int(order[b]))
        for a in range(m)
        for b in range(a + 1, m)
        if draws[a, b] < p
    ]
    return Dag(m, edges)


def random_weights(dag: Dag, seed: int) -> dict[tuple[int, int], float]:
    """Uniform on [-2, -0.5] U [0.5, 2] for each edge, in edge order."""
    rng = rng_for(seed, STREAM_WEIGHTS)
    edges = dag.edges()
    mag = rng.uniform(WEIGHT_LOW, WEIGHT_HIGH, size=len(edges))
    sign = np.where(rng.random(len(edges)) < 0.5, -1.0, 1.0)
    return {e: float(s * w) for e, s, w in zip(edges, sign, mag)}


def linear_ground_truth(dag: Dag, seed: int, weights=None, noise_scale: float = NOISE_SCALE) -> GroundTruth:
    if weights is None:
        weights = random_weights(dag, seed)
    return GroundTruth(dag, "linear_sem", variable_names(dag.m), weights=dict(weights), noise_scale=noise_scale)


def sem_noise_variances(gt: GroundTruth) -> np.ndarray:
    """Per-node Gaussian noise variance.

    Roots get unit variance. A non-root gets ``noise_scale`` times the
    population variance of its weighted parent sum, propagated exactly
    through the covariance of the linear system.
    """
    m = gt.m
    cov = np.zeros((m, m))
    noise = np.ones(m)
    for x in gt.dag.topological_order():
        pa = sorted(gt.dag.parents(x))
        if pa:
            w = np.array([gt.weights[(p, x)] for p in pa])
            # cov of x with every earlier node, via its parents
            cross = w @ cov[pa, :]
            signal = float(w @ cov[np.ix_(pa, pa)] @ w)
            noise[x] = gt.noise_scale * signal if signal > 0 else 1.0
            cov[x, :] = cross
            cov[:, x] = cross
            cov[x, x] = signal + noise[x]
        else:
            cov[x, x] = 1.0
    return noise


def sample_linear_sem(gt: GroundTruth, n: int, seed: int) -> Dataset:
    if gt.kind != "linear_sem":
        raise ValueError("sample_linear_sem needs a linear_sem ground truth")
    rng = rng_for(seed, STREAM_SAMPLES)
    noise_sd = np.sqrt(sem_noise_variances(gt))
    z = rng.standard_normal((n, gt.m))
    x = np.zeros((n, gt.m))
    for v in gt.dag.topological_order():
        col = noise_sd[v] * z[:, v]
        for p in sorted(gt.dag.parents(v)):
            col = col + gt.weights[(p, v)] * x[:, p]
        x[:, v] = col
    return Dataset(gt.names, [CONTINUOUS] * gt.m, x)


def forward_sample(gt: GroundTruth, n: int, seed: int) -> Dataset:
    """Ancestral sampling through the CPTs in topological order."""
    if gt.kind != "discrete_bn":
        raise ValueError("forward_sample needs a discrete_bn ground truth")
    rng = rng_for(seed, STREAM_SAMPLES)
    u = rng.random((n, gt.m))
    x = np.zeros((n, gt.m), dtype=np.int64)
    for v in gt.dag.topological_order():
        table = gt.cpts[v]
        pa = list(gt.parent_order[v])
        rows = table[tuple(x[:, p] for p in pa)] if pa else np.broadcast_to(table, (n, table.shape[-1]))
        cdf = np.cumsum(rows, axis=1)
        cdf[:, -1] = 1.0
        x[:, v] = (u[:, v : v + 1] >= cdf).sum(axis=1)
    card = [t.shape[-1] for t in gt.cpts]
    return Dataset(gt.names, [discrete(c) for c in card], x)


@dataclass(frozen=True)
class PartitionPlan:
    n_clients: int
    shard_sizes: tuple[int, ...]
    assignment: tuple[int, ...]

    def shards(self) -> list[np.ndarray]:
        bounds = np.cumsum((0,) + self.shard_sizes)
        idx = np.asarray(self.assignment)
        return [idx[bounds[c] : bounds[c + 1]] for c in range(self.n_clients)]


def plan_partition(k: int, n_clients: int, seed: int) -> PartitionPlan:
    """Uneven shard sizes, each at least ``floor(k / (2 N))``, summing to ``k``."""
    if n_clients < 1:
        raise ValueError("need at least one client")
    if k < 2 * n_clients:
        raise TooFewSamples(f"{k} rows cannot be split over {n_clients} clients (need >= {2 * n_clients})")
    floor = k // (2 * n_clients)
    slack = k - n_clients * floor
    rng = rng_for(seed, STREAM_PARTITION)
    w = rng.random(n_clients)
    share = slack * w / w.sum()
    base = np.floor(share).astype(np.int64)
    left = slack - int(base.sum())
    # largest remainder, ties to lower client id
    order = sorted(range(n_clients), key=lambda c: (-(share[c] - base[c]), c))
    for c in order[:left]:
        base[c] += 1
    sizes = tuple(int(floor + b) for b in base)
    assignment = tuple(int(i) for i in rng.permutation(k))
    return PartitionPlan(n_clients, sizes, assignment)


def partition(data: Dataset, n_clients: int, seed: int) -> list[Dataset]:
    plan = plan_partition(data.n, n_clients, seed)
    return [data.rows(idx) for idx in plan.shards()]


def truth_edge_list(dag: Dag) -> str:
    return f"m={dag.m}\n" + "".join(f"{i} {j}\n" for i, j in dag.edges())


def parse_truth_edge_list(text: str) -> Dag:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("m="):
        raise ValueError("truth file must start with an 'm=<count>' header")
    m = int(lines[0][2:])
    edges = []
    for ln in lines[1:]:
        a, b = ln.split()
        edges.append((int(a), int(b)))
    return Dag(m, edges)


def schema_json(data: Dataset) -> str:
    return json.dumps(data.schema(), indent=2, sort_keys=True) + "\n"
