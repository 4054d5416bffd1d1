"""Dataset-level drivers tying graphs, WL iterations and embeddings together.

One projection set is sampled per configuration and shared by every graph,
training and test alike; the per-record work (WL iterations, projections,
quantiles) is independent across graphs and can run on a thread pool.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .graphs import Dataset, StandardizationStats, apply_standardization
from .sliced import (
    EmpiricalMeasure,
    PqEmbedding,
    ProjectionSet,
    QuantileGrid,
    pq_embed,
    sample_projection_blocks,
    sample_projections,
)
from .wl import WlConfig, embed as wl_embed


@dataclass(frozen=True)
class EmbedResult:
    """Per-record projected quantile embeddings for one configuration.

    ``per_iteration`` is populated for the anisotropic variant: entry h lists
    every record's embedding of kept iteration h alone.
    """

    embeddings: list[PqEmbedding]
    per_iteration: list[list[PqEmbedding]] | None
    wl_config: WlConfig
    projections: ProjectionSet


def embed_dataset(
    dataset: Dataset,
    wl_config: WlConfig,
    *,
    seed: int,
    n_projections: int,
    n_quantiles: int,
    r: float = 2.0,
    standardization: StandardizationStats | None = None,
    per_iteration: bool = False,
    jobs: int = 1,
) -> EmbedResult:
    """Embed every record of a dataset under one shared projection set."""
    if standardization is not None:
        dataset = apply_standardization(dataset, standardization)
    dim = wl_config.block_count * dataset.attr_dim
    projections = sample_projections(seed, n_projections, dim)
    block_sets = None
    if per_iteration:
        block_sets = sample_projection_blocks(
            seed, n_projections, dataset.attr_dim, wl_config.block_count
        )
    grid = QuantileGrid(n_quantiles)
    standardized = standardization is not None

    def one(record):
        wl = wl_embed(record.graph, wl_config, graph_id=record.id)
        emb = pq_embed(
            EmpiricalMeasure(wl.values), projections, grid, r=r, graph_id=record.id
        ).with_provenance(iterations=wl_config.iterations, standardized=standardized)
        per_iter = None
        if block_sets is not None:
            per_iter = [
                pq_embed(
                    EmpiricalMeasure(wl.block(pos)), block_sets[pos], grid, r=r,
                    graph_id=record.id,
                ).with_provenance(
                    iterations=wl_config.iterations, standardized=standardized
                )
                for pos in range(wl_config.block_count)
            ]
        return emb, per_iter

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, dataset.records))
    else:
        results = [one(rec) for rec in dataset.records]

    embeddings = [emb for emb, _ in results]
    per_iter_lists = None
    if per_iteration:
        k = wl_config.block_count
        per_iter_lists = [[res[1][pos] for res in results] for pos in range(k)]
    return EmbedResult(
        embeddings=embeddings,
        per_iteration=per_iter_lists,
        wl_config=wl_config,
        projections=projections,
    )
