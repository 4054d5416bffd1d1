"""Sliced-Wasserstein Weisfeiler-Lehman graph kernels and robust GP regression.

The pipeline has three cacheable stages: continuous Weisfeiler-Lehman node
embeddings, projected quantile embeddings of their empirical distributions,
and pairwise kernel assembly whose cost no longer depends on graph size.
A robust Gaussian process with a Student-t predictive distribution sits on
top for regression with scalar covariates.
"""

__version__ = "0.1.0"

from .graphs import (
    AttributedGraph,
    Dataset,
    GraphRecord,
    StandardizationStats,
    apply_standardization,
    compute_standardization,
    degree,
    load_dataset,
    save_dataset,
)
from .wl import WlConfig, WlEmbedding, embed, sqrt_skip_iterations, wl_iterate
from .sliced import (
    EmpiricalMeasure,
    PqEmbedding,
    PqFingerprint,
    ProjectionSet,
    QuantileGrid,
    interp_quantiles,
    pq_embed,
    sample_projection_blocks,
    sample_projections,
    step_quantiles,
    sw_estimate,
    sw_exact_1d,
    w_exact_tiny,
)
from .kernels import (
    GramMatrix,
    KernelConfig,
    assemble_gram,
    assemble_gram_aniso,
    aswwl_kernel,
    check_psd,
    matern52,
    swwl_kernel,
    tensorized_kernel,
)
from .gp import (
    GpModel,
    GpSettings,
    PredictiveDistribution,
    TrainDistances,
    build_train_distances,
    fit,
    load_model,
    marginal_posterior,
    posterior_parts,
    predict,
    q2,
    rmse,
    save_model,
)
from .pipeline import EmbedResult, embed_dataset

__all__ = [
    "AttributedGraph",
    "Dataset",
    "EmbedResult",
    "EmpiricalMeasure",
    "GpModel",
    "GpSettings",
    "GramMatrix",
    "GraphRecord",
    "KernelConfig",
    "PqEmbedding",
    "PqFingerprint",
    "PredictiveDistribution",
    "ProjectionSet",
    "QuantileGrid",
    "StandardizationStats",
    "TrainDistances",
    "WlConfig",
    "WlEmbedding",
    "apply_standardization",
    "assemble_gram",
    "assemble_gram_aniso",
    "aswwl_kernel",
    "build_train_distances",
    "check_psd",
    "compute_standardization",
    "degree",
    "embed",
    "embed_dataset",
    "fit",
    "interp_quantiles",
    "load_dataset",
    "load_model",
    "marginal_posterior",
    "matern52",
    "pq_embed",
    "posterior_parts",
    "predict",
    "q2",
    "rmse",
    "sample_projection_blocks",
    "sample_projections",
    "save_dataset",
    "save_model",
    "sqrt_skip_iterations",
    "step_quantiles",
    "sw_estimate",
    "sw_exact_1d",
    "swwl_kernel",
    "tensorized_kernel",
    "w_exact_tiny",
    "wl_iterate",
]
