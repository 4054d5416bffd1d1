"""Robust Gaussian process regression on the tensorized graph kernel.

The correlation between two inputs is the product of a graph factor
exp(-(d/range_0)^2), with d the estimated sliced Wasserstein distance
between cached embeddings, and one Matern-5/2 factor per scalar covariate.
Range parameters are estimated by maximizing the marginal posterior: the
constant mean and the variance are integrated out under the reference prior
(giving the profile likelihood in |R|, h'R^-1h and the projected residual
S^2), and the ranges carry a jointly-robust prior that pushes the fit away
from both the identity and the all-ones correlation matrix. Predictions
follow a Student-t distribution with N-1 degrees of freedom.

All determinants and solves go through a single Cholesky factorization; a
candidate whose factorization fails is scored as -inf rather than aborting
the search.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.optimize
import scipy.spatial.distance
import scipy.stats

from .binio import read_container, write_container
from .errors import (
    CholeskyError,
    ConfigMismatchError,
    ConstantTargetError,
    LengthMismatchError,
    OptimizationError,
    ValidationError,
)
from .kernels import correlation_from_distances, scalar_abs_distances
from .sliced import PqFingerprint

MODEL_MAGIC = "SWWL-M1"

JR_PRIOR_A = 0.2
DEFAULT_NUGGET = 1e-8


def jr_prior_rate(n: int, n_ranges: int, a: float = JR_PRIOR_A) -> float:
    """Exponential rate b = N**(-1/L) * (a + L) of the jointly-robust prior."""
    return n ** (-1.0 / n_ranges) * (a + n_ranges)


@dataclass(frozen=True)
class TrainDistances:
    """Cached pairwise distances: one squared graph matrix, m |delta| stacks."""

    sw_sq: np.ndarray | None
    scalar_abs: np.ndarray | None

    @property
    def n_ranges(self) -> int:
        m = 0 if self.scalar_abs is None else self.scalar_abs.shape[0]
        return (0 if self.sw_sq is None else 1) + m

    @property
    def size(self) -> int:
        if self.sw_sq is not None:
            return self.sw_sq.shape[0]
        return self.scalar_abs.shape[1]

    def mean_scales(self) -> np.ndarray:
        """Mean off-diagonal distance per coordinate (prior scales C_l)."""
        n = self.size
        off = ~np.eye(n, dtype=bool)
        scales = []
        if self.sw_sq is not None:
            scales.append(float(np.sqrt(np.maximum(self.sw_sq, 0.0))[off].mean()))
        if self.scalar_abs is not None:
            for dist in self.scalar_abs:
                scales.append(float(dist[off].mean()))
        return np.array(scales)


def build_train_distances(
    features: np.ndarray | None, scalars: np.ndarray | None
) -> TrainDistances:
    sw_sq = None
    if features is not None:
        feats = np.asarray(features, dtype=float)
        diffs = scipy.spatial.distance.pdist(feats, "sqeuclidean")
        sw_sq = scipy.spatial.distance.squareform(diffs)
    scalar_abs = None
    if scalars is not None and np.asarray(scalars).size:
        scalar_abs = scalar_abs_distances(np.asarray(scalars, dtype=float))
    if sw_sq is None and scalar_abs is None:
        raise ValidationError("need graph features or scalar covariates")
    return TrainDistances(sw_sq=sw_sq, scalar_abs=scalar_abs)


def _correlation(distances: TrainDistances, ranges: np.ndarray) -> np.ndarray:
    ranges = np.asarray(ranges, dtype=float)
    if distances.sw_sq is not None:
        gamma = 1.0 / (ranges[0] * ranges[0])
        return correlation_from_distances(
            distances.sw_sq, distances.scalar_abs, gamma, ranges[1:]
        )
    return correlation_from_distances(None, distances.scalar_abs, 1.0, ranges)


@dataclass(frozen=True)
class PosteriorParts:
    """Pieces of one marginal-posterior evaluation, for audits and tests."""

    value: float
    log_likelihood: float
    log_prior: float
    s2: float
    log_det: float
    h_rinv_h: float
    theta_hat: float
    flag: str | None = None


def _profile_parts(chol: np.ndarray, y: np.ndarray):
    """Profile statistics from a lower Cholesky factor of R."""
    n = len(y)
    h = np.ones(n)
    rinv_y = scipy.linalg.cho_solve((chol, True), y)
    rinv_h = scipy.linalg.cho_solve((chol, True), h)
    h_rinv_h = float(h @ rinv_h)
    h_rinv_y = float(h @ rinv_y)
    y_rinv_y = float(y @ rinv_y)
    s2 = y_rinv_y - h_rinv_y * h_rinv_y / h_rinv_h
    log_det = 2.0 * float(np.sum(np.log(np.diag(chol))))
    theta_hat = h_rinv_y / h_rinv_h
    return s2, log_det, h_rinv_h, theta_hat, rinv_y, rinv_h


def posterior_parts(
    log_ranges: np.ndarray,
    distances: TrainDistances,
    targets: np.ndarray,
    nugget: float = DEFAULT_NUGGET,
) -> PosteriorParts:
    """Log marginal posterior of the ranges, up to a range-free constant."""
    y = np.asarray(targets, dtype=float).reshape(-1)
    n = len(y)
    if n < 2:
        raise ValidationError(f"need at least 2 targets, got {n}")
    ranges = np.exp(np.asarray(log_ranges, dtype=float).reshape(-1))
    if len(ranges) != distances.n_ranges:
        raise LengthMismatchError(
            f"{len(ranges)} ranges for {distances.n_ranges} coordinates"
        )
    corr = _correlation(distances, ranges) + nugget * np.eye(n)
    try:
        chol = np.linalg.cholesky(corr)
    except np.linalg.LinAlgError:
        return PosteriorParts(
            value=-np.inf, log_likelihood=-np.inf, log_prior=0.0, s2=np.nan,
            log_det=np.nan, h_rinv_h=np.nan, theta_hat=np.nan, flag="CholeskyFailure",
        )
    s2, log_det, h_rinv_h, theta_hat, _, _ = _profile_parts(chol, y)
    if not np.isfinite(s2) or s2 <= 0:
        return PosteriorParts(
            value=-np.inf, log_likelihood=-np.inf, log_prior=0.0, s2=s2,
            log_det=log_det, h_rinv_h=h_rinv_h, theta_hat=theta_hat,
            flag="ConstantTarget",
        )
    log_lik = -0.5 * log_det - 0.5 * np.log(h_rinv_h) - 0.5 * (n - 1) * np.log(s2)
    scales = distances.mean_scales()
    rate_sum = float(np.sum(scales / ranges))
    if rate_sum > 0:
        b = jr_prior_rate(n, distances.n_ranges)
        log_prior = JR_PRIOR_A * np.log(rate_sum) - b * rate_sum
    else:
        log_prior = 0.0  # degenerate geometry: all distances vanish
    return PosteriorParts(
        value=float(log_lik + log_prior),
        log_likelihood=float(log_lik),
        log_prior=float(log_prior),
        s2=float(s2),
        log_det=float(log_det),
        h_rinv_h=float(h_rinv_h),
        theta_hat=float(theta_hat),
    )


def marginal_posterior(
    log_ranges: np.ndarray,
    distances: TrainDistances,
    targets: np.ndarray,
    nugget: float = DEFAULT_NUGGET,
) -> float:
    return posterior_parts(log_ranges, distances, targets, nugget).value


@dataclass(frozen=True)
class GpModel:
    """Trained state: fitted ranges, factorization and solve caches.

    The training features and scalars are kept so that prediction only needs
    the new inputs' embeddings.
    """

    ranges: np.ndarray
    nugget: float
    theta_hat: float
    sigma2_hat: float
    dof: int
    chol: np.ndarray
    rinv_centered_y: np.ndarray
    rinv_h: np.ndarray
    targets: np.ndarray
    train_features: np.ndarray | None
    train_scalars: np.ndarray | None
    train_ids: tuple[str, ...]
    fingerprint: PqFingerprint | None
    prior_scales: np.ndarray

    @property
    def size(self) -> int:
        return len(self.targets)

    @property
    def h_rinv_h(self) -> float:
        return float(np.sum(self.rinv_h))


@dataclass(frozen=True)
class GpSettings:
    nugget: float = DEFAULT_NUGGET
    multistarts: int = 5
    max_evals: int = 400
    seed: int = 0


@dataclass(frozen=True)
class PredictiveDistribution:
    """Student-t predictive law: mean vector, PSD scale matrix, dof."""

    mean: np.ndarray
    scale: np.ndarray
    dof: int

    def scale_diagonal(self) -> np.ndarray:
        return np.diag(self.scale) if self.scale.size else np.zeros(0)

    def standard_errors(self) -> np.ndarray:
        return np.sqrt(np.maximum(self.scale_diagonal(), 0.0))

    def interval(self, level: float = 0.95) -> tuple[np.ndarray, np.ndarray]:
        half = scipy.stats.t.ppf(0.5 + level / 2.0, self.dof) * self.standard_errors()
        return self.mean - half, self.mean + half


def _floor_psd(matrix: np.ndarray) -> np.ndarray:
    """Symmetrize and clip negative eigenvalues at zero."""
    if matrix.size == 0:
        return matrix
    sym = 0.5 * (matrix + matrix.T)
    eigvals, eigvecs = np.linalg.eigh(sym)
    if eigvals[0] >= 0:
        return sym
    return (eigvecs * np.maximum(eigvals, 0.0)) @ eigvecs.T


def fit(
    features: np.ndarray | None,
    scalars: np.ndarray | None,
    targets: np.ndarray,
    *,
    ids: tuple[str, ...] | None = None,
    fingerprint: PqFingerprint | None = None,
    settings: GpSettings = GpSettings(),
) -> GpModel:
    """Estimate ranges by multistart Nelder-Mead on the log marginal posterior.

    Starts are centered on the mean pairwise distance of each coordinate;
    candidates whose correlation matrix cannot be factorized score -inf and
    simply lose the comparison.
    """
    y = np.asarray(targets, dtype=float).reshape(-1)
    n = len(y)
    if n < 3:
        raise ValidationError(f"need at least 3 training records, got {n}")
    if np.ptp(y) == 0.0:
        raise ConstantTargetError("all training targets are identical")
    distances = build_train_distances(features, scalars)
    if distances.size != n:
        raise LengthMismatchError(f"{distances.size} inputs for {n} targets")
    scales = distances.mean_scales()
    start_center = np.log(np.where(scales > 0, scales, 1.0))
    rng = np.random.Generator(np.random.Philox(key=int(settings.seed)))
    penalty = 1e300  # finite stand-in for -inf so the simplex stays well defined

    def objective(log_ranges):
        value = marginal_posterior(log_ranges, distances, y, settings.nugget)
        return -value if np.isfinite(value) else penalty

    best_value = -np.inf
    best_log_ranges = None
    for k in range(max(1, settings.multistarts)):
        x0 = start_center if k == 0 else start_center + rng.uniform(-2.0, 2.0, len(scales))
        res = scipy.optimize.minimize(
            objective,
            x0,
            method="Nelder-Mead",
            options={"xatol": 1e-4, "fatol": 1e-7, "maxfev": settings.max_evals},
        )
        if res.fun >= penalty:
            continue
        if -res.fun > best_value:
            best_value = -res.fun
            best_log_ranges = res.x
    if best_log_ranges is None:
        raise OptimizationError(
            "every optimizer start failed: the correlation matrix could not be "
            "factorized for any candidate ranges; duplicated inputs or a zero "
            "nugget are the usual cause (try raising the nugget)"
        )
    ranges = np.exp(best_log_ranges)
    corr = _correlation(distances, ranges) + settings.nugget * np.eye(n)
    try:
        chol = np.linalg.cholesky(corr)
    except np.linalg.LinAlgError as exc:
        raise CholeskyError(
            "correlation matrix is not positive definite at the optimum; "
            "try raising the nugget"
        ) from exc
    s2, _, _, theta_hat, rinv_y, rinv_h = _profile_parts(chol, y)
    if s2 <= 0:
        raise ConstantTargetError("projected residual variance is zero")
    sigma2_hat = s2 / (n - 1)
    rinv_centered_y = rinv_y - theta_hat * rinv_h
    return GpModel(
        ranges=ranges,
        nugget=settings.nugget,
        theta_hat=float(theta_hat),
        sigma2_hat=float(sigma2_hat),
        dof=n - 1,
        chol=chol,
        rinv_centered_y=rinv_centered_y,
        rinv_h=rinv_h,
        targets=y,
        train_features=None if features is None else np.asarray(features, float),
        train_scalars=None if scalars is None or not np.asarray(scalars).size
        else np.asarray(scalars, float),
        train_ids=tuple(ids) if ids is not None else tuple(str(i) for i in range(n)),
        fingerprint=fingerprint,
        prior_scales=scales,
    )


def _cross_correlation(
    model: GpModel, features: np.ndarray | None, scalars: np.ndarray | None
) -> np.ndarray:
    sw_sq = None
    if model.train_features is not None:
        if features is None:
            raise ConfigMismatchError("model was trained with graph features")
        sw_sq = scipy.spatial.distance.cdist(
            np.asarray(features, float), model.train_features, "sqeuclidean"
        )
    scalar_abs = None
    if model.train_scalars is not None:
        if scalars is None or np.asarray(scalars).shape[1] != model.train_scalars.shape[1]:
            raise LengthMismatchError("scalar covariate count differs from training")
        scalar_abs = scalar_abs_distances(np.asarray(scalars, float), model.train_scalars)
    gamma = None
    if sw_sq is not None:
        gamma = 1.0 / (model.ranges[0] * model.ranges[0])
        lengthscales = model.ranges[1:]
        return correlation_from_distances(sw_sq, scalar_abs, gamma, lengthscales)
    return correlation_from_distances(None, scalar_abs, 1.0, model.ranges)


def predict(
    model: GpModel,
    features: np.ndarray | None,
    scalars: np.ndarray | None = None,
    fingerprint: PqFingerprint | None = None,
) -> PredictiveDistribution:
    """Student-t predictive distribution at new inputs.

    Refuses embeddings whose fingerprint differs from the training one; the
    projection directions define the feature space and must be shared.
    """
    if model.fingerprint is not None and fingerprint is not None:
        if model.fingerprint != fingerprint:
            raise ConfigMismatchError(
                "test embeddings were built under a different configuration "
                f"({fingerprint}) than the model ({model.fingerprint})"
            )
    n_test = 0
    if features is not None:
        features = np.asarray(features, dtype=float)
        n_test = features.shape[0]
    elif scalars is not None:
        n_test = np.asarray(scalars).shape[0]
    if n_test == 0:
        return PredictiveDistribution(
            mean=np.zeros(0), scale=np.zeros((0, 0)), dof=model.dof
        )
    cross = _cross_correlation(model, features, scalars)  # (N*, N)
    mean = model.theta_hat + cross @ model.rinv_centered_y
    rinv_cross_t = scipy.linalg.cho_solve((model.chol, True), cross.T)  # (N, N*)
    if model.train_features is not None:
        test_sq = scipy.spatial.distance.cdist(features, features, "sqeuclidean")
        scalar_abs = None
        if model.train_scalars is not None:
            scalar_abs = scalar_abs_distances(np.asarray(scalars, float))
        gamma = 1.0 / (model.ranges[0] * model.ranges[0])
        corr_test = correlation_from_distances(
            test_sq, scalar_abs, gamma, model.ranges[1:]
        )
    else:
        corr_test = correlation_from_distances(
            None, scalar_abs_distances(np.asarray(scalars, float)), 1.0, model.ranges
        )
    cbar = corr_test - cross @ rinv_cross_t
    trend_gap = 1.0 - cross @ model.rinv_h  # h* - R* R^-1 h
    cbar = cbar + np.outer(trend_gap, trend_gap) / model.h_rinv_h
    scale = model.sigma2_hat * _floor_psd(cbar)
    return PredictiveDistribution(mean=mean, scale=scale, dof=model.dof)


def rmse(predicted: np.ndarray, truth: np.ndarray) -> float:
    predicted = np.asarray(predicted, dtype=float).reshape(-1)
    truth = np.asarray(truth, dtype=float).reshape(-1)
    if predicted.shape != truth.shape:
        raise LengthMismatchError(f"{predicted.shape[0]} predictions for {truth.shape[0]} truths")
    if predicted.size == 0:
        raise LengthMismatchError("need at least one value")
    return float(np.sqrt(np.mean((predicted - truth) ** 2)))


def q2(predicted: np.ndarray, truth: np.ndarray) -> float:
    """Coefficient of predictivity 1 - SSE/SST; 1 is perfect, 0 matches the mean."""
    predicted = np.asarray(predicted, dtype=float).reshape(-1)
    truth = np.asarray(truth, dtype=float).reshape(-1)
    if predicted.shape != truth.shape:
        raise LengthMismatchError(f"{predicted.shape[0]} predictions for {truth.shape[0]} truths")
    if predicted.size == 0:
        raise LengthMismatchError("need at least one value")
    sse = float(np.sum((predicted - truth) ** 2))
    sst = float(np.sum((truth - truth.mean()) ** 2))
    if sst == 0.0:
        return 1.0 if sse == 0.0 else -np.inf
    return 1.0 - sse / sst


def save_model(model: GpModel, path) -> None:
    header = {
        "n": model.size,
        "n_ranges": len(model.ranges),
        "nugget": model.nugget,
        "theta_hat": model.theta_hat,
        "sigma2_hat": model.sigma2_hat,
        "dof": model.dof,
        "train_ids": list(model.train_ids),
        "fingerprint": None if model.fingerprint is None else model.fingerprint.to_dict(),
        "swwl_precision_mapping": "gamma = 1 / range[0]**2",
    }
    arrays = {
        "ranges": model.ranges,
        "prior_scales": model.prior_scales,
        "chol": model.chol,
        "rinv_centered_y": model.rinv_centered_y,
        "rinv_h": model.rinv_h,
        "targets": model.targets,
    }
    if model.train_features is not None:
        arrays["train_features"] = model.train_features
    if model.train_scalars is not None:
        arrays["train_scalars"] = model.train_scalars
    write_container(path, MODEL_MAGIC, header, arrays)


def load_model(path) -> GpModel:
    header, arrays = read_container(path, MODEL_MAGIC)
    fp = header.get("fingerprint")
    return GpModel(
        ranges=arrays["ranges"],
        nugget=float(header["nugget"]),
        theta_hat=float(header["theta_hat"]),
        sigma2_hat=float(header["sigma2_hat"]),
        dof=int(header["dof"]),
        chol=arrays["chol"],
        rinv_centered_y=arrays["rinv_centered_y"],
        rinv_h=arrays["rinv_h"],
        targets=arrays["targets"],
        train_features=arrays.get("train_features"),
        train_scalars=arrays.get("train_scalars"),
        train_ids=tuple(header["train_ids"]),
        fingerprint=None if fp is None else PqFingerprint.from_dict(fp),
        prior_scales=arrays["prior_scales"],
    )


def write_predictions_csv(
    path,
    ids: list[str],
    dist: PredictiveDistribution,
    level: float = 0.95,
) -> None:
    """Prediction table with mean, Student-t scale and interval bounds."""
    lo, hi = dist.interval(level) if dist.mean.size else (np.zeros(0), np.zeros(0))
    sd = dist.standard_errors()
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "mean", "scale", "lo95", "hi95"])
        for i, rec_id in enumerate(ids):
            writer.writerow(
                [
                    rec_id,
                    f"{dist.mean[i]:.17g}",
                    f"{sd[i]:.17g}",
                    f"{lo[i]:.17g}",
                    f"{hi[i]:.17g}",
                ]
            )
