"""Experiment manifests and the generate / run / sweep drivers behind the CLI.

A manifest is a JSON object with the keys of ``ExperimentSpec``::

    {
      "data": {"generate": {"model": "linear_sem", "m": 10, "n": 5000, "expected_degree": 2}},
      "n_clients": 3, "alpha": 0.01, "keep_ratio": 0.3, "seeds": [0, 1, 2],
      "algorithms": ["fedpc", "pc_avg"], "output": "out/run"
    }

``data`` is either ``{"generate": {...}}`` with ``model`` one of
``linear_sem``, ``bif`` (plus ``network``: bundled name or file path) or
``oracle`` (clients answer CI queries by d-separation in the true DAG),
or ``{"load": {"csv": ..., "schema": ..., "truth": ...}}``.

Results JSON holds only seed-determined values, so two runs of one
manifest are byte-identical; wall-clock times go to ``timings.json``.
"""

from __future__ import annotations

import json
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from statistics import fmean, median, pstdev
from typing import Any, Optional

from .baselines import BASELINES, run_baseline
from .bif import load_bif
from .citest import OracleTester
from .data import (
    Dataset,
    linear_ground_truth,
    parse_truth_edge_list,
    partition,
    random_dag,
    sample_linear_sem,
    forward_sample,
    schema_json,
    truth_edge_list,
)
from .errors import FedPCError
from .fed_skeleton import FederationConfig
from .graph import Dag
from .metrics import StructureScore, min_max_normalize, score_structure
from .protocol import run_federation

log = logging.getLogger(__name__)

ALGORITHMS = ("fedpc",) + BASELINES
CLIENT_COUNTS = (1, 3, 5, 10, 15)
MODELS = ("linear_sem", "bif", "oracle")
SCORE_KEYS = [f.name for f in fields(StructureScore)]
WORKERS_ENV = "FEDPC_WORKERS"


class SpecError(ValueError):
    """The manifest is unusable; nothing has been run or written."""


def read_manifest(path: str) -> dict:
    """The raw manifest object, not yet validated."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise SpecError(f"cannot read manifest {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise SpecError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise SpecError(f"{path}: manifest must be a JSON object")
    return doc


@dataclass
class ExperimentSpec:
    data: dict = field(default_factory=lambda: {"generate": {"model": "linear_sem", "m": 10, "n": 5000, "expected_degree": 2.0}})
    n_clients: int = 3
    alpha: float = 0.01
    keep_ratio: float = 0.30
    seeds: list = field(default_factory=lambda: [0])
    algorithms: list = field(default_factory=lambda: ["fedpc"])
    output: str = "results"
    engine: str = "auto"
    workers: int = 1

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentSpec":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise SpecError(f"unknown manifest keys: {unknown}")
        spec = cls(**doc)
        spec.validate()
        return spec

    @classmethod
    def load(cls, path: str) -> "ExperimentSpec":
        return cls.from_dict(read_manifest(path))

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def generating(self) -> bool:
        return "generate" in self.data

    def validate(self) -> None:
        if not isinstance(self.data, dict) or len(self.data) != 1 or next(iter(self.data)) not in ("generate", "load"):
            raise SpecError("data must be {'generate': {...}} or {'load': {...}}")
        if self.generating:
            g = self.data["generate"]
            model = g.get("model")
            if model not in MODELS:
                raise SpecError(f"data.generate.model must be one of {MODELS}, got {model!r}")
            if model == "bif":
                if not g.get("network"):
                    raise SpecError("data.generate.network is required for the bif model")
            elif not isinstance(g.get("m"), int) or g["m"] < 2:
                raise SpecError(f"data.generate.m must be an integer >= 2, got {g.get('m')!r}")
            if model != "oracle" and (not isinstance(g.get("n"), int) or g["n"] < 1):
                raise SpecError(f"data.generate.n must be a positive integer, got {g.get('n')!r}")
            if model in ("linear_sem", "oracle") and not float(g.get("expected_degree", 2.0)) >= 0:
                raise SpecError("data.generate.expected_degree must be >= 0")
        else:
            ld = self.data["load"]
            for key in ("csv", "schema"):
                if not ld.get(key):
                    raise SpecError(f"data.load.{key} is required")
            needs_truth = [a for a in self.algorithms if a in BASELINES]
            if needs_truth and not ld.get("truth"):
                raise SpecError(f"algorithms {needs_truth} need a ground truth: set data.load.truth")
        if self.n_clients not in CLIENT_COUNTS:
            raise SpecError(f"n_clients must be one of {CLIENT_COUNTS}, got {self.n_clients!r}")
        if not 0.0 < float(self.alpha) < 1.0:
            raise SpecError("alpha must lie in (0, 1)")
        if not 0.0 < float(self.keep_ratio) <= 1.0:
            raise SpecError("keep_ratio must lie in (0, 1]")
        if not self.seeds or not all(isinstance(s, int) and s >= 0 for s in self.seeds):
            raise SpecError("seeds must be a non-empty list of non-negative integers")
        if not self.algorithms:
            raise SpecError("at least one algorithm is required")
        bad = [a for a in self.algorithms if a not in ALGORITHMS]
        if bad:
            raise SpecError(f"unknown algorithms {bad}; choose from {ALGORITHMS}")
        if self.engine not in ("auto", "fisher_z", "g_square", "oracle"):
            raise SpecError(f"unknown engine {self.engine!r}")
        if not isinstance(self.workers, int) or self.workers < 1:
            raise SpecError("workers must be a positive integer")

    def federation_config(self, seed: int) -> FederationConfig:
        return FederationConfig(
            n_clients=self.n_clients,
            alpha=float(self.alpha),
            keep_ratio=float(self.keep_ratio),
            seed=seed,
            test_engine="oracle" if self.oracle else self.engine,
        )

    @property
    def oracle(self) -> bool:
        return self.generating and self.data["generate"]["model"] == "oracle"


def resolve_workers(requested: int) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            value = int(env)
        except ValueError:
            raise SpecError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
        if value < 1:
            raise SpecError(f"{WORKERS_ENV} must be >= 1")
        return value
    return requested


# -- data -------------------------------------------------------------------


@dataclass
class Prepared:
    """One seed's data: the pooled dataset (None for oracle runs), client shards, truth."""

    seed: int
    data: Optional[Dataset]
    shards: list
    truth: Optional[Dag]


def generate_dataset(spec: ExperimentSpec, seed: int) -> tuple[Optional[Dataset], Dag]:
    g = spec.data["generate"]
    model = g["model"]
    if model == "bif":
        gt = load_bif(g["network"])
        return forward_sample(gt, g["n"], seed), gt.dag
    dag = random_dag(g["m"], float(g.get("expected_degree", 2.0)), seed)
    if model == "oracle":
        return None, dag
    gt = linear_ground_truth(dag, seed)
    return sample_linear_sem(gt, g["n"], seed), dag


def _read(path: str, what: str) -> str:
    try:
        with open(path) as fh:
            return fh.read()
    except OSError as exc:
        raise SpecError(f"cannot read {what} {path}: {exc.strerror}") from exc


def load_dataset(spec: ExperimentSpec) -> tuple[Dataset, Optional[Dag]]:
    ld = spec.data["load"]
    try:
        schema = json.loads(_read(ld["schema"], "schema"))
    except json.JSONDecodeError as exc:
        raise SpecError(f"{ld['schema']}: invalid JSON ({exc})") from exc
    try:
        data = Dataset.from_csv(_read(ld["csv"], "data file"), schema)
    except (ValueError, KeyError) as exc:
        raise SpecError(f"{ld['csv']}: {exc}") from exc
    truth = None
    if ld.get("truth"):
        try:
            truth = parse_truth_edge_list(_read(ld["truth"], "truth file"))
        except ValueError as exc:
            raise SpecError(f"{ld['truth']}: {exc}") from exc
        if truth.m != data.m:
            raise SpecError(f"truth has {truth.m} variables but the data has {data.m}")
    return data, truth


def prepare(spec: ExperimentSpec, seed: int, loaded=None) -> Prepared:
    if spec.generating:
        data, truth = generate_dataset(spec, seed)
    else:
        data, truth = loaded if loaded is not None else load_dataset(spec)
    if data is None:
        oracle = OracleTester(truth, float(spec.alpha))
        return Prepared(seed, None, [oracle] * spec.n_clients, truth)
    return Prepared(seed, data, partition(data, spec.n_clients, seed), truth)


def cmd_generate(spec: ExperimentSpec) -> list[Path]:
    """Write ``seed-<s>/{data.csv, schema.json, truth.txt}`` under ``spec.output``."""
    spec.validate()
    if not spec.generating or spec.oracle:
        raise SpecError("generate needs data.generate with the linear_sem or bif model")
    # build everything first so that a failure leaves no partial files
    outputs = []
    for seed in spec.seeds:
        data, dag = generate_dataset(spec, seed)
        outputs.append((seed, data, dag))
    written = []
    for seed, data, dag in outputs:
        d = Path(spec.output) / f"seed-{seed}"
        d.mkdir(parents=True, exist_ok=True)
        for name, text in (("data.csv", data.to_csv()), ("schema.json", schema_json(data)), ("truth.txt", truth_edge_list(dag))):
            p = d / name
            p.write_text(text)
            written.append(p)
    return written


# -- running ----------------------------------------------------------------


def _score_dict(score) -> dict:
    return score.to_dict() if isinstance(score, StructureScore) else dict(score)


def run_algorithm(algorithm: str, prep: Prepared, spec: ExperimentSpec) -> tuple[dict, float]:
    """One (algorithm, seed) cell; returns the result row and its wall-clock seconds."""
    config = spec.federation_config(prep.seed)
    row: dict[str, Any] = {"algorithm": algorithm, "seed": prep.seed}
    t0 = time.perf_counter()
    try:
        if algorithm == "fedpc":
            res = run_federation(config, prep.shards)
            row["ell_final"] = res.ell_final
            row["edges_per_layer"] = res.skeleton.edges_per_layer
            row["comm"] = res.log.summary()
            row["skeleton"] = [list(e) for e in res.cpdag.skeleton().edges()]
            row["dag"] = [list(e) for e in res.dag.edges()]
            if prep.truth is not None:
                row["score"] = score_structure(res.dag, prep.truth).to_dict()
                row["cpdag_score"] = score_structure(res.cpdag, prep.truth).to_dict()
        else:
            rep = run_baseline(algorithm, prep.shards, config, prep.truth)
            row["score"] = _score_dict(rep.score)
            if rep.graph is not None:
                row["skeleton"] = [list(e) for e in rep.graph.skeleton().edges()]
            if rep.per_client:
                row["per_client_shd"] = [s.shd for s in rep.per_client]
        row["status"] = "ok"
    except (FedPCError, ValueError, ArithmeticError, AssertionError) as exc:
        log.warning("%s seed %d failed: %s", algorithm, prep.seed, exc)
        row["status"] = "error"
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row, time.perf_counter() - t0


def aggregate(rows: list[dict], algorithms) -> list[dict]:
    out = []
    for algo in algorithms:
        ok = [r for r in rows if r["algorithm"] == algo and r["status"] == "ok" and "score" in r]
        if not ok:
            continue
        agg: dict[str, Any] = {"algorithm": algo, "seeds": [r["seed"] for r in ok], "mean": {}, "std": {}, "median": {}}
        for key in SCORE_KEYS:
            vals = [float(r["score"][key]) for r in ok]
            agg["mean"][key] = fmean(vals)
            agg["std"][key] = pstdev(vals) if len(vals) > 1 else 0.0
            agg["median"][key] = median(vals)
        ells = [r["ell_final"] for r in ok if "ell_final" in r]
        if ells:
            agg["ell_final"] = {"mean": fmean(ells), "max": max(ells)}
        out.append(agg)
    return out


def execute(spec: ExperimentSpec) -> tuple[dict, dict]:
    """Run every (algorithm, seed) of ``spec``; returns (results, timings)."""
    spec.validate()
    workers = resolve_workers(spec.workers)
    loaded = None if spec.generating else load_dataset(spec)
    preps = {seed: prepare(spec, seed, loaded) for seed in spec.seeds}
    tasks = [(algo, seed) for seed in spec.seeds for algo in spec.algorithms]

    def one(task):
        algo, seed = task
        return run_algorithm(algo, preps[seed], spec)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            done = list(pool.map(one, tasks))
    else:
        done = [one(t) for t in tasks]
    rows = [r for r, _ in done]
    timings = {
        "runs": [{"algorithm": r["algorithm"], "seed": r["seed"], "seconds": s} for r, s in done],
    }
    results = {
        "spec": spec.to_dict(),
        "rows": rows,
        "aggregate": aggregate(rows, spec.algorithms),
        "failures": sum(r["status"] != "ok" for r in rows),
    }
    return results, timings


def dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


TABLE_COLUMNS = ("reverse", "extra", "miss", "shd", "tpr", "fdr", "precision", "f1")


def results_table(results: dict) -> str:
    """Aligned text table of the aggregate rows (mean over seeds)."""
    head = ["algorithm", *TABLE_COLUMNS, "seeds"]
    body = []
    for agg in results["aggregate"]:
        mean = agg["mean"]
        cells = [agg["algorithm"]]
        for key in TABLE_COLUMNS:
            v = mean[key]
            cells.append(f"{v:.3f}" if key in ("tpr", "fdr", "precision", "f1") else f"{v:.1f}")
        cells.append(str(len(agg["seeds"])))
        body.append(cells)
    widths = [max(len(r[c]) for r in [head, *body]) for c in range(len(head))]
    lines = ["  ".join(cell.rjust(w) if c else cell.ljust(w) for c, (cell, w) in enumerate(zip(r, widths))) for r in [head, *body]]
    lines.insert(1, "  ".join("-" * w for w in widths))
    if results["failures"]:
        lines.append(f"{results['failures']} run(s) failed; see results.json")
    return "\n".join(lines) + "\n"


def write_results(out_dir: str, results: dict, timings: dict, stem: str = "results") -> Path:
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    (d / f"{stem}.json").write_text(dumps(results))
    if "blocks" in results:
        text = "".join(f"{results['parameter']} = {b['value']}\n{results_table(b['results'])}\n" for b in results["blocks"])
    else:
        text = results_table(results)
    (d / f"{stem}.txt").write_text(text)
    (d / "timings.json").write_text(dumps(timings))
    return d / f"{stem}.json"


def cmd_run(spec: ExperimentSpec) -> dict:
    results, timings = execute(spec)
    write_results(spec.output, results, timings)
    return results


SWEEPABLE = ("keep_ratio", "n_clients")


def sweep(spec: ExperimentSpec, parameter: str, values) -> tuple[dict, dict]:
    if parameter not in SWEEPABLE:
        raise SpecError(f"can only sweep {SWEEPABLE}, not {parameter!r}")
    values = list(values)
    if not values:
        raise SpecError("sweep needs at least one value")
    blocks, timing_blocks = [], []
    for v in values:
        sub = replace(spec, **{parameter: v})
        sub.validate()
        res, tim = execute(sub)
        blocks.append({"value": v, "results": res})
        timing_blocks.append({"value": v, **tim})
    doc: dict[str, Any] = {"spec": spec.to_dict(), "parameter": parameter, "values": values, "blocks": blocks}
    if parameter == "keep_ratio":
        # min-max normalised mean SHD across the swept values, per algorithm
        norm = {}
        for algo in spec.algorithms:
            shds = []
            for b in blocks:
                agg = [a for a in b["results"]["aggregate"] if a["algorithm"] == algo]
                shds.append(agg[0]["mean"]["shd"] if agg else math.nan)
            if not any(math.isnan(s) for s in shds):
                norm[algo] = min_max_normalize(shds)
        doc["normalized_shd"] = norm
    # per-layer aggregated edge counts of every fedpc run
    doc["layer_trace"] = [
        {"value": b["value"], "seed": r["seed"], "edges_per_layer": r["edges_per_layer"]}
        for b in blocks
        for r in b["results"]["rows"]
        if r["algorithm"] == "fedpc" and r["status"] == "ok"
    ]
    doc["failures"] = sum(b["results"]["failures"] for b in blocks)
    return doc, {"blocks": timing_blocks}


def cmd_sweep(spec: ExperimentSpec, parameter: str, values) -> dict:
    doc, timings = sweep(spec, parameter, values)
    write_results(spec.output, doc, timings, stem="sweep")
    return doc
