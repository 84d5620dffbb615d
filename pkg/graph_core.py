"""
EvoSeed – Graph Core
Append-only temporal directed graph, immutable per-trial snapshots and
temporal CSV ingestion/export.
"""

import bisect
import csv
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable, Optional, TextIO

import networkx as nx
import numpy as np

logger = logging.getLogger(__name__)


class GraphError(ValueError):
    """Raised when a mutation or query violates the temporal graph rules."""


@dataclass(frozen=True)
class NodeRecord:
    """A user; ids are dense and follow join order."""

    id: int
    join_trial: int
    degree: int = 0

    def to_dict(self) -> dict:
        return {"id": self.id, "join_trial": self.join_trial, "degree": self.degree}

    @classmethod
    def from_dict(cls, data: dict) -> "NodeRecord":
        return cls(
            id=int(data["id"]),
            join_trial=int(data["join_trial"]),
            degree=int(data.get("degree", 0)),
        )


@dataclass(frozen=True)
class EdgeRecord:
    """A directed relationship; both directions of a bidirectional tie share `tie`."""

    id: int
    src: int
    dst: int
    establish_trial: int
    tie: int

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "src": self.src,
            "dst": self.dst,
            "establish_trial": self.establish_trial,
            "tie": self.tie,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EdgeRecord":
        return cls(
            id=int(data["id"]),
            src=int(data["src"]),
            dst=int(data["dst"]),
            establish_trial=int(data["establish_trial"]),
            tie=int(data["tie"]),
        )


def _frozen(values: list, dtype=np.int64) -> np.ndarray:
    arr = np.asarray(values, dtype=dtype)
    arr.flags.writeable = False
    return arr


def _csr(keys: np.ndarray, size: int) -> tuple[np.ndarray, np.ndarray]:
    """Group edge ids by key (stable), returning (indptr, edge ids)."""
    order = np.argsort(keys, kind="stable")
    counts = np.bincount(keys, minlength=size) if size else np.zeros(0, dtype=np.int64)
    indptr = np.zeros(size + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return indptr, order.astype(np.int64)


class GraphSnapshot:
    """
    Read-only view of G^r: every node with join_trial <= r and every edge with
    establish_trial <= r. Arrays are shared prefixes of the graph's storage
    and are never written, so snapshots can be handed to parallel workers.
    """

    def __init__(
        self,
        trial: int,
        join: np.ndarray,
        src: np.ndarray,
        dst: np.ndarray,
        establish: np.ndarray,
        tie_u: np.ndarray,
        tie_v: np.ndarray,
    ):
        self.trial = trial
        self.node_count = int(join.shape[0])
        self.edge_count = int(src.shape[0])
        self.tie_count = int(tie_u.shape[0])
        self.join = join
        self.src = src
        self.dst = dst
        self.establish = establish
        self._tie_u = tie_u
        self._tie_v = tie_v

    def __repr__(self) -> str:
        return (
            f"GraphSnapshot(trial={self.trial}, nodes={self.node_count}, "
            f"edges={self.edge_count}, ties={self.tie_count})"
        )

    # ─── Adjacency ───────────────────────────────────────────────

    @cached_property
    def _out(self) -> tuple[np.ndarray, np.ndarray]:
        return _csr(self.src, self.node_count)

    @cached_property
    def _in(self) -> tuple[np.ndarray, np.ndarray]:
        return _csr(self.dst, self.node_count)

    @property
    def out_indptr(self) -> np.ndarray:
        return self._out[0]

    @property
    def out_eids(self) -> np.ndarray:
        return self._out[1]

    @property
    def in_indptr(self) -> np.ndarray:
        return self._in[0]

    @property
    def in_eids(self) -> np.ndarray:
        return self._in[1]

    def out_edges(self, node: int) -> np.ndarray:
        indptr, eids = self._out
        return eids[indptr[node]:indptr[node + 1]]

    def in_edges(self, node: int) -> np.ndarray:
        indptr, eids = self._in
        return eids[indptr[node]:indptr[node + 1]]

    def successors(self, node: int) -> np.ndarray:
        return self.dst[self.out_edges(node)]

    def predecessors(self, node: int) -> np.ndarray:
        return self.src[self.in_edges(node)]

    def neighbors(self, node: int) -> np.ndarray:
        """Nodes adjacent in either direction, sorted, without repeats."""
        return np.union1d(self.successors(node), self.predecessors(node))

    def has_node(self, node: int) -> bool:
        return 0 <= node < self.node_count

    # ─── Degrees ─────────────────────────────────────────────────

    @cached_property
    def _degrees(self) -> np.ndarray:
        deg = np.bincount(self._tie_u, minlength=self.node_count)
        deg = deg + np.bincount(self._tie_v, minlength=self.node_count)
        deg = deg.astype(np.int64)
        deg.flags.writeable = False
        return deg

    def degrees(self) -> np.ndarray:
        """Social-tie degree of every node at this trial."""
        return self._degrees

    def degree(self, node: int) -> int:
        return int(self._degrees[node])

    def to_networkx(self) -> nx.DiGraph:
        """Directed networkx view; edges carry their id as `eid`."""
        g = nx.DiGraph()
        g.add_nodes_from(range(self.node_count))
        g.add_edges_from(
            (int(u), int(v), {"eid": i})
            for i, (u, v) in enumerate(zip(self.src.tolist(), self.dst.tolist()))
        )
        return g


class EvolvingGraph:
    """
    Temporal directed graph that only grows.

    All mutations happen at a trial >= every trial recorded so far, which keeps
    node ids in join order and edge ids in establishment order; a snapshot is
    therefore a prefix of the storage.
    """

    def __init__(self):
        self._join: list[int] = []
        self._degree: list[int] = []
        self._src: list[int] = []
        self._dst: list[int] = []
        self._etrial: list[int] = []
        self._etie: list[int] = []
        self._tie_u: list[int] = []
        self._tie_v: list[int] = []
        self._tie_trial: list[int] = []
        self._tie_bi: list[bool] = []
        self._pairs: set[tuple[int, int]] = set()
        self._max_trial = 0
        self._arrays: Optional[tuple] = None

    # ─── Queries ─────────────────────────────────────────────────

    @property
    def node_count(self) -> int:
        return len(self._join)

    @property
    def edge_count(self) -> int:
        return len(self._src)

    @property
    def tie_count(self) -> int:
        return len(self._tie_u)

    @property
    def max_trial(self) -> int:
        return self._max_trial

    @property
    def total_degree(self) -> int:
        return 2 * len(self._tie_u)

    def node(self, node_id: int) -> NodeRecord:
        return NodeRecord(node_id, self._join[node_id], self._degree[node_id])

    def edge(self, edge_id: int) -> EdgeRecord:
        return EdgeRecord(
            edge_id,
            self._src[edge_id],
            self._dst[edge_id],
            self._etrial[edge_id],
            self._etie[edge_id],
        )

    @property
    def nodes(self) -> list[NodeRecord]:
        return [self.node(i) for i in range(self.node_count)]

    @property
    def edges(self) -> list[EdgeRecord]:
        return [self.edge(i) for i in range(self.edge_count)]

    def degree(self, node_id: int) -> int:
        return self._degree[node_id]

    def degrees(self) -> list[int]:
        """Current degrees (live list copy)."""
        return list(self._degree)

    def has_pair(self, src: int, dst: int) -> bool:
        return (src, dst) in self._pairs

    def ties(self) -> Iterable[tuple[int, int, int, bool]]:
        """(u, v, trial, bidirectional) per social tie in creation order."""
        return zip(self._tie_u, self._tie_v, self._tie_trial, self._tie_bi)

    # ─── Mutation ────────────────────────────────────────────────

    def add_node(self, join_trial: int) -> int:
        """Append a node and return its dense id."""
        if join_trial < 0:
            raise GraphError(f"join trial must be non-negative, got {join_trial}")
        if join_trial < self._max_trial:
            raise GraphError(
                f"join trial {join_trial} precedes recorded trial {self._max_trial}"
            )
        self._join.append(join_trial)
        self._degree.append(0)
        self._max_trial = join_trial
        self._arrays = None
        return len(self._join) - 1

    def add_edge(
        self, src: int, dst: int, establish_trial: int, bidirectional: bool = True
    ) -> list[int]:
        """Record one social tie as one directed edge, or two when bidirectional."""
        if src == dst:
            raise GraphError(f"self-loop on node {src}")
        for endpoint in (src, dst):
            if not 0 <= endpoint < self.node_count:
                raise GraphError(f"unknown endpoint {endpoint}")
            if self._join[endpoint] > establish_trial:
                raise GraphError(
                    f"edge at trial {establish_trial} precedes join of node {endpoint}"
                )
        if establish_trial < self._max_trial:
            raise GraphError(
                f"establish trial {establish_trial} precedes recorded trial {self._max_trial}"
            )
        if (src, dst) in self._pairs or (bidirectional and (dst, src) in self._pairs):
            raise GraphError(f"duplicate edge {src}->{dst}")

        tie = len(self._tie_u)
        directions = [(src, dst), (dst, src)] if bidirectional else [(src, dst)]
        ids = []
        for u, v in directions:
            ids.append(len(self._src))
            self._src.append(u)
            self._dst.append(v)
            self._etrial.append(establish_trial)
            self._etie.append(tie)
            self._pairs.add((u, v))
        self._tie_u.append(src)
        self._tie_v.append(dst)
        self._tie_trial.append(establish_trial)
        self._tie_bi.append(bidirectional)
        self._degree[src] += 1
        self._degree[dst] += 1
        self._max_trial = establish_trial
        self._arrays = None
        return ids

    def advance_to(self, trial: int) -> None:
        """Record that `trial` has been reached, even if nothing joined during it."""
        if trial < self._max_trial:
            raise GraphError(f"trial {trial} precedes recorded trial {self._max_trial}")
        self._max_trial = trial

    # ─── Snapshots ───────────────────────────────────────────────

    def _frozen_arrays(self) -> tuple:
        if self._arrays is None:
            self._arrays = (
                _frozen(self._join),
                _frozen(self._src),
                _frozen(self._dst),
                _frozen(self._etrial),
                _frozen(self._tie_u),
                _frozen(self._tie_v),
                _frozen(self._tie_trial),
            )
        return self._arrays

    def snapshot(self, trial: int) -> GraphSnapshot:
        """Immutable view G^trial."""
        if trial < 0 or trial > self._max_trial:
            raise GraphError(f"snapshot trial {trial} outside [0, {self._max_trial}]")
        join, src, dst, etrial, tie_u, tie_v, tie_trial = self._frozen_arrays()
        n = bisect.bisect_right(self._join, trial)
        m = bisect.bisect_right(self._etrial, trial)
        t = bisect.bisect_right(self._tie_trial, trial)
        return GraphSnapshot(trial, join[:n], src[:m], dst[:m], etrial[:m], tie_u[:t], tie_v[:t])

    def clone(self) -> "EvolvingGraph":
        other = EvolvingGraph()
        for name in (
            "_join", "_degree", "_src", "_dst", "_etrial", "_etie",
            "_tie_u", "_tie_v", "_tie_trial", "_tie_bi",
        ):
            setattr(other, name, list(getattr(self, name)))
        other._pairs = set(self._pairs)
        other._max_trial = self._max_trial
        return other


# ─── Temporal CSV ────────────────────────────────────────────────


@dataclass
class RejectedRow:
    line_no: int
    reason: str
    text: str


@dataclass
class IngestReport:
    """Result of an ingestion: the graph, its label map and every rejected row."""

    graph: EvolvingGraph
    labels: dict[str, int] = field(default_factory=dict)
    rejected: list[RejectedRow] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.rejected


def make_bucketing(origin: float = 0.0, span: float = 1.0) -> Callable[[float], int]:
    """Map a timestamp to trial floor((t - origin) / span), e.g. one bucket per year."""
    if span <= 0:
        raise ValueError("bucket span must be positive")

    def bucket(t: float) -> int:
        return int(math.floor((t - origin) / span))

    return bucket


def _decodes(text: str) -> bool:
    """False for rows read with errors='surrogateescape' that held invalid UTF-8."""
    try:
        text.encode("utf-8")
    except UnicodeEncodeError:
        return False
    return True


def _data_lines(lines: Iterable[str]) -> Iterable[tuple[int, str]]:
    for line_no, raw in enumerate(lines, start=1):
        text = raw.strip()
        if text and not text.startswith("#"):
            yield line_no, text


def time_origin(lines: Iterable[str]) -> float:
    """Earliest parsable timestamp among node and edge rows (0.0 when none)."""
    earliest = math.inf
    for _, text in _data_lines(lines):
        if not _decodes(text):
            continue
        row = [c.strip() for c in next(csv.reader([text]))]
        column = {"node": 2, "edge": 3}.get(row[0].lower())
        if column is None or len(row) <= column:
            continue
        try:
            earliest = min(earliest, float(row[column]))
        except ValueError:
            continue
    return 0.0 if math.isinf(earliest) else earliest


def ingest_temporal_csv(
    lines: Iterable[str],
    bucket: Optional[Callable[[float], int]] = None,
    bidirectional: bool = True,
) -> IngestReport:
    """
    Build an EvolvingGraph from `node,<id>,<time>` and `edge,<src>,<dst>,<time>[,bi|uni]` rows.

    Rows may appear in any order; nodes get dense ids by (trial, file order).
    Bad rows are collected in the report, never raised.
    """
    bucket = bucket or make_bucketing()
    report = IngestReport(graph=EvolvingGraph())

    node_rows: list[tuple[int, int, str]] = []  # (trial, line_no, label)
    edge_rows: list[tuple[int, int, str, str, bool, str]] = []
    seen_labels: set[str] = set()

    def reject(line_no: int, reason: str, text: str):
        report.rejected.append(RejectedRow(line_no, reason, text))

    for line_no, text in _data_lines(lines):
        if not _decodes(text):
            reject(line_no, "malformed: not valid UTF-8", text.encode("utf-8", "surrogateescape").decode("utf-8", "replace"))
            continue
        row = [c.strip() for c in next(csv.reader([text]))]
        kind = row[0].lower()
        try:
            if kind == "node":
                if len(row) != 3:
                    raise ValueError("node rows need 3 fields")
                trial = bucket(float(row[2]))
                if trial < 0:
                    raise ValueError(f"time maps to negative trial {trial}")
                if row[1] in seen_labels:
                    raise ValueError(f"duplicate node {row[1]}")
                seen_labels.add(row[1])
                node_rows.append((trial, line_no, row[1]))
            elif kind == "edge":
                if len(row) not in (4, 5):
                    raise ValueError("edge rows need 4 or 5 fields")
                trial = bucket(float(row[3]))
                if trial < 0:
                    raise ValueError(f"time maps to negative trial {trial}")
                bi = bidirectional
                if len(row) == 5:
                    if row[4] not in ("bi", "uni"):
                        raise ValueError(f"direction must be bi or uni, got {row[4]}")
                    bi = row[4] == "bi"
                edge_rows.append((trial, line_no, row[1], row[2], bi, text))
            else:
                raise ValueError(f"unknown record kind {row[0]!r}")
        except ValueError as e:
            reject(line_no, f"malformed: {e}", text)

    node_rows.sort()
    join_of: dict[str, int] = {label: trial for trial, _, label in node_rows}
    edges_by_trial: dict[int, list] = {}
    for trial, line_no, a, b, bi, text in sorted(edge_rows, key=lambda r: (r[0], r[1])):
        missing = [x for x in (a, b) if x not in join_of]
        if missing:
            reject(line_no, f"unknown endpoint {missing[0]}", text)
            continue
        if max(join_of[a], join_of[b]) > trial:
            reject(line_no, "edge before endpoint join", text)
            continue
        edges_by_trial.setdefault(trial, []).append((line_no, a, b, bi, text))

    graph = report.graph
    trials = sorted({t for t, _, _ in node_rows} | set(edges_by_trial))
    node_iter = iter(node_rows)
    pending = next(node_iter, None)
    for trial in trials:
        while pending is not None and pending[0] == trial:
            report.labels[pending[2]] = graph.add_node(trial)
            pending = next(node_iter, None)
        for line_no, a, b, bi, text in edges_by_trial.get(trial, []):
            try:
                graph.add_edge(report.labels[a], report.labels[b], trial, bidirectional=bi)
            except GraphError as e:
                reject(line_no, str(e), text)

    report.rejected.sort(key=lambda r: r.line_no)
    if report.rejected:
        logger.warning("ingest rejected %d row(s)", len(report.rejected))
    logger.info(
        "ingested %d nodes, %d ties over %d trials",
        graph.node_count, graph.tie_count, graph.max_trial + 1,
    )
    return report


def export_temporal_csv(graph: EvolvingGraph, stream: TextIO) -> None:
    """Write the graph in arrival order; ingest(export(g)) reproduces g exactly."""
    writer = csv.writer(stream, lineterminator="\n")
    stream.write("# EvoSeed temporal edge list: node,id,trial / edge,src,dst,trial,bi|uni\n")
    ties = list(graph.ties())
    ti = 0
    ni = 0
    trials = sorted({graph.node(i).join_trial for i in range(graph.node_count)}
                    | {t[2] for t in ties})
    for trial in trials:
        while ni < graph.node_count and graph.node(ni).join_trial == trial:
            writer.writerow(["node", ni, trial])
            ni += 1
        while ti < len(ties) and ties[ti][2] == trial:
            u, v, _, bi = ties[ti]
            writer.writerow(["edge", u, v, trial, "bi" if bi else "uni"])
            ti += 1
