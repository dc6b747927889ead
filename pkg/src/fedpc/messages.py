"""Message payloads exchanged between clients and the server, and their wire form.

Only four payload kinds exist. None of them can carry sample rows:
skeletons travel as bit-packed upper triangles, everything else as
little-endian integer ids and float64 p-values.

Wire layouts (all integers ``uint32`` little endian)::

    SkeletonReport      bits of (i, j), i < j, row-major, MSB first; ceil(m(m-1)/16) bytes
    AggregatedSkeleton  SkeletonReport bytes, then one flag byte (1 = another layer follows)
    TripleQuery         count, then per entry: i, k, j, |ne_i|, ne_i..., |ne_j|, ne_j...
    SepSetReport        count, then per entry: i, j, present (uint8)
                        [, p_value (float64), |Z|, Z...]
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import ClassVar, Optional, Union

import numpy as np

from .graph import Skeleton, UnshieldedTriple

SERVER = -1
UP, DOWN = "up", "down"


def packed_size(m: int) -> int:
    return (m * (m - 1) // 2 + 7) // 8


def pack_skeleton(s: Skeleton) -> bytes:
    n_bits = s.m * (s.m - 1) // 2
    acc = 0
    for i in range(s.m):
        ne = s.neighbors(i)
        for j in range(i + 1, s.m):
            acc = (acc << 1) | (j in ne)
    pad = packed_size(s.m) * 8 - n_bits
    return (acc << pad).to_bytes(packed_size(s.m), "big")


def unpack_skeleton(data: bytes, m: int) -> Skeleton:
    if len(data) != packed_size(m):
        raise ValueError(f"expected {packed_size(m)} bytes for m={m}, got {len(data)}")
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8))[: m * (m - 1) // 2]
    iu, ju = np.triu_indices(m, k=1)
    return Skeleton(m, [(int(i), int(j)) for i, j, b in zip(iu, ju, bits) if b])


class _Wire:
    """Encoding computed once per (immutable) payload instance."""

    def encode(self) -> bytes:
        wire = self.__dict__.get("_wire")
        if wire is None:
            wire = self._encode()
            object.__setattr__(self, "_wire", wire)
        return wire


@dataclass(frozen=True)
class SkeletonReport(_Wire):
    kind: ClassVar[str] = "SkeletonReport"
    skeleton: Skeleton

    def _encode(self) -> bytes:
        return pack_skeleton(self.skeleton)

    @classmethod
    def decode(cls, data: bytes, m: int) -> "SkeletonReport":
        return cls(unpack_skeleton(data, m))


@dataclass(frozen=True)
class AggregatedSkeleton(_Wire):
    kind: ClassVar[str] = "AggregatedSkeleton"
    skeleton: Skeleton
    continue_flag: bool

    def _encode(self) -> bytes:
        return pack_skeleton(self.skeleton) + bytes([1 if self.continue_flag else 0])

    @classmethod
    def decode(cls, data: bytes, m: int) -> "AggregatedSkeleton":
        return cls(unpack_skeleton(data[:-1], m), bool(data[-1]))


@dataclass(frozen=True)
class TripleEntry:
    triple: UnshieldedTriple
    neighbors_i: frozenset[int]
    neighbors_j: frozenset[int] = frozenset()


@dataclass(frozen=True)
class TripleQuery(_Wire):
    kind: ClassVar[str] = "TripleQuery"
    entries: tuple[TripleEntry, ...]

    def _encode(self) -> bytes:
        out = [struct.pack("<I", len(self.entries))]
        for e in self.entries:
            ni, nj = sorted(e.neighbors_i), sorted(e.neighbors_j)
            out.append(struct.pack(f"<4I{len(ni)}II{len(nj)}I", *e.triple, len(ni), *ni, len(nj), *nj))
        return b"".join(out)

    @classmethod
    def decode(cls, data: bytes, m: int = 0) -> "TripleQuery":
        (count,), off = struct.unpack_from("<I", data), 4
        entries = []
        for _ in range(count):
            i, k, j, ni = struct.unpack_from("<4I", data, off)
            off += 16
            set_i = struct.unpack_from(f"<{ni}I", data, off)
            off += 4 * ni
            (nj,) = struct.unpack_from("<I", data, off)
            off += 4
            set_j = struct.unpack_from(f"<{nj}I", data, off)
            off += 4 * nj
            entries.append(TripleEntry(UnshieldedTriple(i, k, j), frozenset(set_i), frozenset(set_j)))
        return cls(tuple(entries))


@dataclass(frozen=True)
class SepSetReport:
    """One client's best separation set for one pair, or nothing."""

    pair: tuple[int, int]
    sepset: Optional[frozenset[int]] = None
    p_value: Optional[float] = None

    @property
    def present(self) -> bool:
        return self.sepset is not None


@dataclass(frozen=True)
class SepSetReports(_Wire):
    kind: ClassVar[str] = "SepSetReport"
    entries: tuple[SepSetReport, ...]

    def _encode(self) -> bytes:
        out = [struct.pack("<I", len(self.entries))]
        for r in self.entries:
            i, j = r.pair
            if r.present:
                z = sorted(r.sepset)
                out.append(struct.pack(f"<IIBdI{len(z)}I", i, j, 1, r.p_value, len(z), *z))
            else:
                out.append(struct.pack("<IIB", i, j, 0))
        return b"".join(out)

    @classmethod
    def decode(cls, data: bytes, m: int = 0) -> "SepSetReports":
        (count,), off = struct.unpack_from("<I", data), 4
        entries = []
        for _ in range(count):
            i, j, present = struct.unpack_from("<IIB", data, off)
            off += 9
            if present:
                p, size = struct.unpack_from("<dI", data, off)
                off += 12
                z = struct.unpack_from(f"<{size}I", data, off)
                off += 4 * size
                entries.append(SepSetReport((i, j), frozenset(z), p))
            else:
                entries.append(SepSetReport((i, j)))
        return cls(tuple(entries))


Payload = Union[SkeletonReport, AggregatedSkeleton, TripleQuery, SepSetReports]
PAYLOAD_TYPES = (SkeletonReport, AggregatedSkeleton, TripleQuery, SepSetReports)
MESSAGE_KINDS = frozenset(t.kind for t in PAYLOAD_TYPES)
_DECODERS = {t.kind: t.decode for t in PAYLOAD_TYPES}


def decode(kind: str, data: bytes, m: int) -> Payload:
    return _DECODERS[kind](data, m)


@dataclass(frozen=True)
class Message:
    sender: int
    receiver: int
    round: int
    payload: Payload
    size_bytes: int

    @classmethod
    def build(cls, sender: int, receiver: int, round: int, payload: Payload) -> "Message":
        if not isinstance(payload, PAYLOAD_TYPES):
            raise TypeError(f"{type(payload).__name__} is not a protocol payload")
        return cls(sender, receiver, round, payload, len(payload.encode()))

    @property
    def kind(self) -> str:
        return self.payload.kind

    @property
    def direction(self) -> str:
        return UP if self.receiver == SERVER else DOWN


@dataclass
class CommLog:
    """Every message of a run, in send order, with running byte totals."""

    messages: list[Message] = field(default_factory=list)
    up_bytes: int = 0
    down_bytes: int = 0

    def send(self, sender: int, receiver: int, round: int, payload: Payload) -> Message:
        msg = Message.build(sender, receiver, round, payload)
        self.messages.append(msg)
        if msg.direction == UP:
            self.up_bytes += msg.size_bytes
        else:
            self.down_bytes += msg.size_bytes
        return msg

    @property
    def total_bytes(self) -> int:
        return self.up_bytes + self.down_bytes

    def rounds(self) -> int:
        return 1 + max((m.round for m in self.messages), default=-1)

    def count(self, kind: str) -> int:
        return sum(1 for m in self.messages if m.kind == kind)

    def entries(self) -> list[dict]:
        return [
            {
                "round": m.round,
                "kind": m.kind,
                "direction": m.direction,
                "bytes": m.size_bytes,
                "sender": "server" if m.sender == SERVER else m.sender,
                "receiver": "server" if m.receiver == SERVER else m.receiver,
            }
            for m in self.messages
        ]

    def summary(self) -> dict:
        kinds = sorted({m.kind for m in self.messages})
        return {
            "rounds": self.rounds(),
            "messages": len(self.messages),
            "up_bytes": self.up_bytes,
            "down_bytes": self.down_bytes,
            "total_bytes": self.total_bytes,
            "by_kind": {k: sum(m.size_bytes for m in self.messages if m.kind == k) for k in kinds},
        }

    def to_json(self) -> str:
        doc = {"entries": self.entries(), "totals": {"up": self.up_bytes, "down": self.down_bytes}}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _int_set(x) -> bool:
    return isinstance(x, frozenset) and all(type(v) is int for v in x)


def _carries_rows(payload) -> bool:
    """True unless ``payload`` holds nothing but graphs, ids, p-values and flags."""
    if isinstance(payload, SkeletonReport):
        return type(payload.skeleton) is not Skeleton
    if isinstance(payload, AggregatedSkeleton):
        return type(payload.skeleton) is not Skeleton or type(payload.continue_flag) is not bool
    if isinstance(payload, TripleQuery):
        return not all(
            type(e) is TripleEntry
            and type(e.triple) is UnshieldedTriple
            and all(type(v) is int for v in e.triple)
            and _int_set(e.neighbors_i)
            and _int_set(e.neighbors_j)
            for e in payload.entries
        )
    if isinstance(payload, SepSetReports):
        return not all(
            type(r) is SepSetReport
            and all(type(v) is int for v in r.pair)
            and (r.sepset is None or _int_set(r.sepset))
            and (r.p_value is None or isinstance(r.p_value, float))
            for r in payload.entries
        )
    # arrays, datasets and anything unknown might hold data
    return True


def audit(log: CommLog) -> list[str]:
    """Privacy and accounting violations found in ``log`` (empty when clean)."""
    problems = []
    # payloads broadcast to several clients are inspected once
    checked: dict[int, tuple[bool, bool, int]] = {}
    up = down = 0
    for idx, msg in enumerate(log.messages):
        p = msg.payload
        verdict = checked.get(id(p))
        if verdict is None:
            declared = isinstance(p, PAYLOAD_TYPES) and p.kind in MESSAGE_KINDS
            verdict = (declared, declared and not _carries_rows(p), len(p.encode()) if declared else -1)
            checked[id(p)] = verdict
        declared, clean, size = verdict
        if not declared:
            problems.append(f"message {idx}: undeclared kind {getattr(p, 'kind', type(p).__name__)!r}")
        elif not clean:
            problems.append(f"message {idx}: payload may contain data rows")
        if msg.size_bytes != size:
            problems.append(f"message {idx}: size_bytes disagrees with the encoding")
        if msg.direction == UP:
            up += msg.size_bytes
        else:
            down += msg.size_bytes
    if (up, down) != (log.up_bytes, log.down_bytes):
        problems.append("byte totals disagree with per-message sums")
    return problems
