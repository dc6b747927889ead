"""Variable alignment and orchestration of a federated run.

Message payloads and the communication log live in ``fedpc.messages`` and
are re-exported here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .data import Dataset
from .errors import SchemaMismatch
from .fed_orientation import OrientationResult, fed_orien
from .fed_skeleton import FederationConfig, SkeletonResult, client_testers, fed_skele
from .graph import Dag, Pdag, extend_to_dag
from .messages import (  # noqa: F401  (re-exported)
    MESSAGE_KINDS,
    SERVER,
    AggregatedSkeleton,
    CommLog,
    Message,
    SepSetReport,
    SepSetReports,
    SkeletonReport,
    TripleEntry,
    TripleQuery,
    audit,
)


def align_variables(names_per_client: Sequence[Sequence[str]]) -> dict[str, int]:
    """Map each variable name to its rank in full lexicographic order.

    Every client can compute this locally from its own column names, so the
    server only ever sees integer ids.
    """
    if not names_per_client:
        raise ValueError("no clients")
    reference = set(names_per_client[0])
    for names in names_per_client[1:]:
        diff = reference.symmetric_difference(names)
        if diff:
            raise SchemaMismatch(diff)
    for names in names_per_client:
        if len(set(names)) != len(names):
            raise ValueError("duplicate variable names within a client")
    return {name: k for k, name in enumerate(sorted(reference))}


@dataclass
class FederationResult:
    cpdag: Pdag
    dag: Dag
    log: CommLog
    skeleton: SkeletonResult
    orientation: OrientationResult
    # variable names in id order (empty for oracle runs)
    names: list[str] = field(default_factory=list)

    @property
    def ell_final(self) -> int:
        return self.skeleton.ell_final

    def __iter__(self):
        return iter((self.cpdag, self.dag, self.log))


def run_federation(config: FederationConfig, client_datasets: Sequence) -> FederationResult:
    """FedSkele followed by FedOrien over aligned client shards.

    Dataset shards are reordered to the aligned id space first, and the
    learned graphs are mapped back to the first client's column order so
    that ids line up with the caller's ground truth.
    """
    if not client_datasets:
        raise ValueError("need at least one client")
    shards = list(client_datasets)
    names: list[str] = []
    back = None
    if all(isinstance(s, Dataset) for s in shards):
        for s in shards:
            if s.n == 0:
                raise ValueError("every client needs at least one row")
        ids = align_variables([s.names for s in shards])
        names = sorted(ids, key=ids.get)
        shards = [s.reorder([s.names.index(n) for n in names]) for s in shards]
        first = client_datasets[0].names
        # aligned id k -> original column index of the first client
        back = [first.index(n) for n in names]

    log = CommLog()
    testers = client_testers(shards, config)
    skel = fed_skele(shards, config, log, testers=testers)
    orient = fed_orien(
        skel.skeleton, shards, config, skel.ell_final, log,
        testers=testers, round_offset=skel.ell_final + 1,
    )
    cpdag = orient.cpdag
    dag = extend_to_dag(cpdag)
    problems = audit(log)
    assert not problems, problems
    if back is not None and back != list(range(len(back))):
        cpdag = cpdag.permute(back)
        dag = dag.permute(back)
        names = list(client_datasets[0].names)
    return FederationResult(cpdag, dag, log, skel, orient, names)
