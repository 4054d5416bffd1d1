"""Attributed-graph containers, JSONL dataset ingestion and validation.

A graph is a set of nodes carrying d-dimensional real attributes plus a set
of weighted undirected edges stored once per unordered pair. Datasets are
ordered lists of graph records; record order is stable and is what ties Gram
rows back to inputs downstream.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError, SchemaError, ValidationError


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class AttributedGraph:
    """Undirected graph with continuous node attributes and edge weights.

    attributes: (n, d) float array, one row per node.
    edges: (E, 2) int array of unordered pairs, each stored once.
    weights: (E,) float array, defaults to all ones.
    """

    attributes: np.ndarray
    edges: np.ndarray
    weights: np.ndarray = None

    def __post_init__(self):
        attrs = np.asarray(self.attributes, dtype=float)
        if attrs.ndim != 2 or attrs.shape[0] < 1 or attrs.shape[1] < 1:
            raise ValidationError(f"attributes must be (n, d) with n, d >= 1, got {attrs.shape}")
        if not np.all(np.isfinite(attrs)):
            raise ValidationError("attributes contain non-finite values")
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        weights = self.weights
        if weights is None:
            weights = np.ones(len(edges))
        weights = np.asarray(weights, dtype=float).reshape(-1)
        if len(weights) != len(edges):
            raise ValidationError("edge and weight counts differ")
        if not np.all(np.isfinite(weights)):
            raise ValidationError("edge weights contain non-finite values")
        n = attrs.shape[0]
        if len(edges):
            bad = (edges < 0) | (edges >= n)
            if bad.any():
                offender = int(edges[bad][0])
                raise ValidationError(f"edge endpoint {offender} out of range for {n} nodes")
            loops = edges[:, 0] == edges[:, 1]
            if loops.any():
                raise ValidationError(f"self-loop at node {int(edges[loops][0, 0])}")
            lo = np.minimum(edges[:, 0], edges[:, 1])
            hi = np.maximum(edges[:, 0], edges[:, 1])
            keys = lo * n + hi
            if len(np.unique(keys)) != len(keys):
                raise ValidationError("duplicate undirected edge")
        degrees = np.zeros(n, dtype=np.int64)
        if len(edges):
            np.add.at(degrees, edges[:, 0], 1)
            np.add.at(degrees, edges[:, 1], 1)
        object.__setattr__(self, "attributes", _readonly(attrs))
        object.__setattr__(self, "edges", _readonly(edges))
        object.__setattr__(self, "weights", _readonly(weights))
        object.__setattr__(self, "_degrees", _readonly(degrees))

    @property
    def node_count(self) -> int:
        return self.attributes.shape[0]

    @property
    def attr_dim(self) -> int:
        return self.attributes.shape[1]

    @property
    def edge_count(self) -> int:
        return self.edges.shape[0]

    @property
    def degrees(self) -> np.ndarray:
        return self._degrees


def degree(graph: AttributedGraph, u: int) -> int:
    """Number of distinct neighbors of node ``u``."""
    if not 0 <= u < graph.node_count:
        raise IndexError(f"node {u} out of range for {graph.node_count} nodes")
    return int(graph.degrees[u])


@dataclass(frozen=True)
class GraphRecord:
    graph: AttributedGraph
    scalars: np.ndarray
    target: float | None
    id: str

    def __post_init__(self):
        scalars = np.asarray(self.scalars, dtype=float).reshape(-1)
        if not np.all(np.isfinite(scalars)):
            raise ValidationError(f"record {self.id!r}: non-finite scalar covariate")
        if self.target is not None and not np.isfinite(self.target):
            raise ValidationError(f"record {self.id!r}: non-finite target")
        object.__setattr__(self, "scalars", _readonly(scalars))


@dataclass(frozen=True)
class Dataset:
    """Ordered list of records sharing one attribute and scalar dimension."""

    records: tuple[GraphRecord, ...]
    attr_dim: int = field(init=False)
    scalar_dim: int = field(init=False)

    def __post_init__(self):
        records = tuple(self.records)
        if not records:
            raise SchemaError("dataset has no records")
        d = records[0].graph.attr_dim
        m = records[0].scalars.shape[0]
        for rec in records:
            if rec.graph.attr_dim != d:
                raise SchemaError(
                    f"record {rec.id!r}: attribute dimension {rec.graph.attr_dim} != {d}"
                )
            if rec.scalars.shape[0] != m:
                raise SchemaError(
                    f"record {rec.id!r}: scalar count {rec.scalars.shape[0]} != {m}"
                )
        object.__setattr__(self, "records", records)
        object.__setattr__(self, "attr_dim", d)
        object.__setattr__(self, "scalar_dim", m)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def ids(self) -> list[str]:
        return [rec.id for rec in self.records]

    @property
    def has_targets(self) -> bool:
        return all(rec.target is not None for rec in self.records)

    def targets(self) -> np.ndarray:
        missing = [rec.id for rec in self.records if rec.target is None]
        if missing:
            raise SchemaError(f"records without targets: {missing[:5]}")
        return np.array([rec.target for rec in self.records], dtype=float)

    def scalar_matrix(self) -> np.ndarray:
        return np.array([rec.scalars for rec in self.records], dtype=float)

    def node_counts(self) -> np.ndarray:
        return np.array([rec.graph.node_count for rec in self.records], dtype=np.int64)


def _record_from_obj(obj: dict, line: int) -> GraphRecord:
    if not isinstance(obj, dict):
        raise ParseError(f"expected a JSON object, got {type(obj).__name__}", line=line)
    try:
        nodes = obj["nodes"]
    except KeyError as exc:
        raise ParseError(f"missing field {exc}", line=line) from exc
    edges_raw = obj.get("edges", [])
    rec_id = str(obj.get("id", f"record-{line}"))
    try:
        attrs = np.asarray(nodes, dtype=float)
    except ValueError as exc:
        raise ParseError(f"malformed node attributes: {exc}", line=line) from exc
    if attrs.ndim == 1:
        attrs = attrs.reshape(-1, 1)
    pairs = []
    weights = []
    for e in edges_raw:
        if len(e) not in (2, 3):
            raise ParseError(f"edge entry {e!r} must be [u, v] or [u, v, w]", line=line)
        u, v = e[0], e[1]
        if not (float(u).is_integer() and float(v).is_integer()):
            raise ParseError(f"edge endpoints must be integers, got {e!r}", line=line)
        pairs.append((int(u), int(v)))
        weights.append(float(e[2]) if len(e) == 3 else 1.0)
    edges = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    try:
        graph = AttributedGraph(attrs, edges, np.asarray(weights))
    except ValidationError as exc:
        raise ValidationError(f"record {rec_id!r} (line {line}): {exc}") from exc
    target = obj.get("target")
    return GraphRecord(
        graph=graph,
        scalars=np.asarray(obj.get("scalars", []), dtype=float),
        target=None if target is None else float(target),
        id=rec_id,
    )


def load_dataset(path, format: str = "jsonl") -> Dataset:
    """Load a dataset; one JSON object per line per the documented schema."""
    if format != "jsonl":
        raise ValueError(f"unsupported format {format!r}")
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(str(exc), line=lineno) from exc
            records.append(_record_from_obj(obj, lineno))
    return Dataset(records=tuple(records))


def save_dataset(dataset: Dataset, path) -> None:
    """Write JSONL that reloads bit-exactly (shortest round-trip floats)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in dataset:
            g = rec.graph
            edges = [
                [int(u), int(v), float(w)]
                for (u, v), w in zip(g.edges.tolist(), g.weights.tolist())
            ]
            obj = {
                "id": rec.id,
                "nodes": g.attributes.tolist(),
                "edges": edges,
                "scalars": rec.scalars.tolist(),
            }
            if rec.target is not None:
                obj["target"] = rec.target
            fh.write(json.dumps(obj) + "\n")


@dataclass(frozen=True)
class StandardizationStats:
    """Per-dimension attribute mean/scale estimated on a training set."""

    mean: np.ndarray
    std: np.ndarray

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, obj: dict) -> "StandardizationStats":
        return cls(mean=np.asarray(obj["mean"], float), std=np.asarray(obj["std"], float))


def compute_standardization(dataset: Dataset) -> StandardizationStats:
    """Mean and standard deviation over all nodes of all graphs.

    Dimensions with zero spread keep scale 1 so they are centered only.
    """
    stacked = np.vstack([rec.graph.attributes for rec in dataset])
    mean = stacked.mean(axis=0)
    std = stacked.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return StandardizationStats(mean=mean, std=std)


def apply_standardization(dataset: Dataset, stats: StandardizationStats) -> Dataset:
    records = []
    for rec in dataset:
        g = rec.graph
        scaled = (g.attributes - stats.mean) / stats.std
        records.append(
            GraphRecord(
                graph=AttributedGraph(scaled, g.edges, g.weights),
                scalars=rec.scalars,
                target=rec.target,
                id=rec.id,
            )
        )
    return Dataset(records=tuple(records))
