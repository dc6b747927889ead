"""Structure-recovery scores of a learned graph against the true DAG.

Every adjacent pair of either graph lands in exactly one bucket:

    correct              same direction in both
    reverse              adjacent in both, opposite directions
    undirected_mismatch  undirected in the learned graph, directed in the truth
    extra                adjacent in the learned graph only
    miss                 adjacent in the truth only

TP counts correct edges, FP = reverse + extra, FN = miss + reverse +
undirected_mismatch (every true arrowhead that was not recovered).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

from .errors import ShapeMismatch
from .graph import Dag, Pdag


@dataclass(frozen=True)
class StructureScore:
    correct: int
    reverse: int
    extra: int
    miss: int
    undirected_mismatch: int
    shd: int
    tpr: float
    fdr: float
    precision: float
    recall: float
    f1: float

    def to_dict(self) -> dict:
        return asdict(self)


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def _marks(g: Dag | Pdag) -> dict[tuple[int, int], int]:
    """Pair ``(i, j)`` with ``i < j`` to +1 (i -> j), -1 (j -> i) or 0 (undirected)."""
    out = {}
    if isinstance(g, Dag):
        directed, undirected = g.edges(), []
    else:
        directed, undirected = g.directed_edges(), g.undirected_edges()
    for i, j in directed:
        out[(min(i, j), max(i, j))] = 1 if i < j else -1
    for i, j in undirected:
        out[(min(i, j), max(i, j))] = 0
    return out


def score_structure(learned: Dag | Pdag, truth: Dag) -> StructureScore:
    if learned.m != truth.m:
        raise ShapeMismatch(f"learned graph has {learned.m} nodes, truth has {truth.m}")
    got, want = _marks(learned), _marks(truth)
    correct = reverse = extra = miss = undirected = 0
    for pair, mark in got.items():
        if pair not in want:
            extra += 1
        elif mark == 0:
            undirected += 1
        elif mark == want[pair]:
            correct += 1
        else:
            reverse += 1
    miss = sum(1 for pair in want if pair not in got)

    tp, fp, fn = correct, reverse + extra, miss + reverse + undirected
    precision = _ratio(tp, tp + fp)
    recall = _ratio(tp, tp + fn)
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return StructureScore(
        correct=correct,
        reverse=reverse,
        extra=extra,
        miss=miss,
        undirected_mismatch=undirected,
        shd=undirected + reverse + miss + extra,
        tpr=recall,
        fdr=_ratio(fp, tp + fp),
        precision=precision,
        recall=recall,
        f1=f1,
    )


def min_max_normalize(values) -> list[float]:
    """Rescale to [0, 1]; a constant sequence maps to all zeros."""
    values = list(values)
    if not values:
        return []
    lo, hi = min(values), max(values)
    if hi == lo:
        return [0.0 for _ in values]
    return [(v - lo) / (hi - lo) for v in values]
