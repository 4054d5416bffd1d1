"""Continuous Weisfeiler-Lehman node embeddings.

One iteration replaces each node's attribute vector by the average of the
vector itself and the degree-normalized weighted sum of its neighbors'
vectors. Nodes without neighbors are left unchanged. The embedding of a
graph concatenates a chosen subset of iterates column-wise, iteration 0
being the raw attributes.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .binio import read_container, write_container
from .errors import ShapeError, ValidationError
from .graphs import AttributedGraph

WL_CACHE_MAGIC = "SWWL-E1"


@dataclass(frozen=True)
class WlConfig:
    """Which iterations to keep, e.g. (0, 1, 2, 3) or (0, T, 2T, 3T)."""

    iterations: tuple[int, ...]
    isolated_node_policy: str = "identity"

    def __post_init__(self):
        iters = tuple(int(h) for h in self.iterations)
        if not iters:
            raise ValidationError("iterations list is empty")
        if any(h < 0 for h in iters):
            raise ValidationError("iterations must be nonnegative")
        if any(b <= a for a, b in zip(iters, iters[1:])):
            raise ValidationError("iterations must be strictly increasing")
        if self.isolated_node_policy != "identity":
            raise ValidationError(
                f"unknown isolated node policy {self.isolated_node_policy!r}"
            )
        object.__setattr__(self, "iterations", iters)

    @property
    def block_count(self) -> int:
        return len(self.iterations)


@dataclass(frozen=True)
class WlEmbedding:
    """Per-node embedding matrix, one d-wide column block per kept iteration."""

    values: np.ndarray
    config: WlConfig
    graph_id: str

    def block(self, position: int) -> np.ndarray:
        """Columns of the kept iteration at ``position`` in the config list."""
        k = self.config.block_count
        d = self.values.shape[1] // k
        return self.values[:, position * d : (position + 1) * d]


def sqrt_skip_iterations(mean_node_count: float, blocks: int = 4) -> tuple[int, ...]:
    """Iteration schedule 0, T, 2T, ... with T about sqrt(mean node count)."""
    step = max(1, round(float(mean_node_count) ** 0.5))
    return tuple(step * k for k in range(blocks))


def _neighbor_operator(graph: AttributedGraph):
    """Weighted adjacency (CSR) and inverse-degree column for the update."""
    n = graph.node_count
    edges = graph.edges
    if len(edges) == 0:
        return None, np.zeros((n, 1))
    rows = np.concatenate([edges[:, 0], edges[:, 1]])
    cols = np.concatenate([edges[:, 1], edges[:, 0]])
    vals = np.concatenate([graph.weights, graph.weights])
    adj = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    inv_deg = np.zeros((n, 1))
    nz = graph.degrees > 0
    inv_deg[nz, 0] = 1.0 / graph.degrees[nz]
    return adj, inv_deg


def _warn_nonpositive_weights(graph: AttributedGraph) -> None:
    if len(graph.weights) and np.any(graph.weights <= 0):
        warnings.warn(
            "graph has non-positive edge weights; the update formula accepts "
            "them but the result is no longer a neighborhood average",
            stacklevel=3,
        )


def _iterate(current: np.ndarray, adj, inv_deg: np.ndarray) -> np.ndarray:
    if adj is None:
        return current.copy()
    out = 0.5 * (current + inv_deg * (adj @ current))
    isolated = inv_deg[:, 0] == 0
    if isolated.any():
        out[isolated] = current[isolated]
    return out


def wl_iterate(graph: AttributedGraph, current: np.ndarray) -> np.ndarray:
    """One neighborhood-averaging step applied to ``current`` node vectors."""
    current = np.asarray(current, dtype=float)
    if current.ndim != 2 or current.shape[0] != graph.node_count:
        raise ShapeError(
            f"expected ({graph.node_count}, d) matrix, got {current.shape}"
        )
    if not np.all(np.isfinite(current)):
        raise ShapeError("current iterate contains non-finite values")
    _warn_nonpositive_weights(graph)
    adj, inv_deg = _neighbor_operator(graph)
    return _iterate(current, adj, inv_deg)


def embed(graph: AttributedGraph, config: WlConfig, graph_id: str = "") -> WlEmbedding:
    """Run the iteration up to max(kept) and concatenate the kept iterates."""
    _warn_nonpositive_weights(graph)
    adj, inv_deg = _neighbor_operator(graph)
    kept = set(config.iterations)
    last = max(config.iterations)
    blocks = []
    current = np.asarray(graph.attributes, dtype=float)
    for h in range(last + 1):
        if h in kept:
            blocks.append(current if h > 0 else current.copy())
        if h < last:
            current = _iterate(current, adj, inv_deg)
    values = np.hstack(blocks)
    return WlEmbedding(values=values, config=config, graph_id=graph_id)


def save_wl_embedding(embedding: WlEmbedding, path) -> None:
    header = {
        "graph_id": embedding.graph_id,
        "iterations": list(embedding.config.iterations),
        "d": embedding.values.shape[1] // embedding.config.block_count,
        "node_count": embedding.values.shape[0],
    }
    write_container(path, WL_CACHE_MAGIC, header, {"values": embedding.values})


def load_wl_embedding(path) -> WlEmbedding:
    header, arrays = read_container(path, WL_CACHE_MAGIC)
    config = WlConfig(iterations=tuple(header["iterations"]))
    return WlEmbedding(
        values=arrays["values"], config=config, graph_id=header["graph_id"]
    )
