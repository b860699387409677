"""
PCA + one-against-all SVM pipeline.

Each window's feature matrix is summarized by the eigenvalues of its 6x6
column covariance. The eigenvalue vectors are standardized and fed to three
class-vs-rest soft-margin SVMs with a Gaussian kernel, trained by SMO.
A window none of the three SVMs claims is non-classified.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from sklearn.model_selection import StratifiedKFold

from .. import config
from ..data.features import NUM_FEATURES, build_feature_matrix
from ..data.phasor_model import EventClass, EventRecord
from ..errors import InvalidInputError
from ..utils import derive_seed
from .base_pipeline import BasePipeline, Prediction

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SvmHyperParams:
    """Soft-margin SVM settings."""

    c: float = config.SVM_C
    sigma: float = config.SVM_SIGMA
    tol: float = config.SVM_TOL
    max_passes: int = config.SVM_MAX_PASSES

    def __post_init__(self):
        if self.c <= 0 or self.sigma <= 0 or self.tol <= 0 or self.max_passes <= 0:
            raise InvalidInputError("SVM hyperparameters must all be positive")


@dataclass(frozen=True, eq=False)
class BinarySvmModel:
    """A trained binary SVM; only support vectors (alpha > 0) are kept."""

    support_vectors: np.ndarray
    alphas: np.ndarray
    labels: np.ndarray
    bias: float
    sigma: float
    converged: bool = True
    iterations: int = 0
    objective_trace: Tuple[float, ...] = field(default=(), repr=False)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "support_vectors": self.support_vectors.tolist(),
            "alphas": self.alphas.tolist(),
            "labels": self.labels.tolist(),
            "bias": self.bias,
            "sigma": self.sigma,
            "converged": self.converged,
            "iterations": self.iterations,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "BinarySvmModel":
        alphas = np.asarray(data["alphas"], dtype=float)
        vectors = np.asarray(data["support_vectors"], dtype=float)
        return cls(
            support_vectors=vectors.reshape(len(alphas), -1) if len(alphas) else np.empty((0, 0)),
            alphas=alphas,
            labels=np.asarray(data["labels"], dtype=float),
            bias=float(data["bias"]),
            sigma=float(data["sigma"]),
            converged=bool(data["converged"]),
            iterations=int(data["iterations"]),
        )


@dataclass(frozen=True, eq=False)
class MultiSvmModel:
    """Three class-vs-rest SVMs ordered by class code, plus input standardization."""

    models: Tuple[BinarySvmModel, ...]
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        if len(self.models) != len(EventClass):
            raise InvalidInputError(f"Expected {len(EventClass)} binary models, got {len(self.models)}")

    @property
    def converged(self) -> bool:
        return all(m.converged for m in self.models)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "models": [m.to_dict() for m in self.models],
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "MultiSvmModel":
        return cls(
            models=tuple(BinarySvmModel.from_dict(m) for m in data["models"]),
            mean=np.asarray(data["mean"], dtype=float),
            std=np.asarray(data["std"], dtype=float),
        )


# ---------------------------------------------------------------- PCA


def _covariance(m: np.ndarray) -> np.ndarray:
    # Correctly rounded sums make the result independent of row order.
    rows = m.shape[0]
    mean = np.array([math.fsum(col) / rows for col in m.T])
    centered = m - mean
    cov = np.empty((m.shape[1], m.shape[1]))
    for i in range(m.shape[1]):
        for j in range(i, m.shape[1]):
            cov[i, j] = cov[j, i] = math.fsum(centered[:, i] * centered[:, j]) / (rows - 1)
    return cov


def _off_diagonal_norm(a: np.ndarray) -> float:
    return math.sqrt(2.0 * float(np.sum(np.triu(a, 1) ** 2)))


def jacobi_eigenvalues(
    a: np.ndarray,
    tol: float = config.JACOBI_TOLERANCE,
    max_sweeps: int = config.JACOBI_MAX_SWEEPS,
) -> np.ndarray:
    """
    Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.

    Args:
        a: Symmetric square matrix
        tol: Stop once the off-diagonal Frobenius norm is below this value
        max_sweeps: Sweep limit

    Returns:
        Eigenvalues in diagonal order (unsorted)
    """
    a = np.array(a, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise InvalidInputError(f"Expected a square matrix, got {a.shape}")

    for sweep in range(max_sweeps):
        if _off_diagonal_norm(a) < tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                app, aqq = a[p, p], a[q, q]
                if sweep > 3 and abs(app) + 100 * abs(apq) == abs(app) and abs(aqq) + 100 * abs(apq) == abs(aqq):
                    a[p, q] = a[q, p] = 0.0
                    continue
                theta = (aqq - app) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 1.0 / (2.0 * theta)
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                col_p, col_q = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p, row_q = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = a[q, p] = 0.0
    else:
        if _off_diagonal_norm(a) >= tol:
            logger.warning("Jacobi eigensolver hit %d sweeps without converging", max_sweeps)
    return np.diag(a).copy()


def pca_eigenvalues(m: np.ndarray, k: int = config.PCA_COMPONENTS) -> np.ndarray:
    """
    Dominant eigenvalues of a feature matrix's column covariance.

    Args:
        m: Feature matrix, rows are observations
        k: Number of eigenvalues to keep (1..6)

    Returns:
        The k largest eigenvalues, descending, negatives clamped to 0
    """
    m = np.asarray(m, dtype=float)
    if not 1 <= k <= NUM_FEATURES:
        raise InvalidInputError(f"k must be in [1, {NUM_FEATURES}], got {k}")
    if m.ndim != 2 or m.shape[1] != NUM_FEATURES or m.shape[0] < 2:
        raise InvalidInputError(f"Expected an n x {NUM_FEATURES} matrix with n >= 2, got {m.shape}")
    eigenvalues = np.sort(jacobi_eigenvalues(_covariance(m)))[::-1]
    return np.maximum(eigenvalues[:k], 0.0)


def eigen_features(records: Sequence[EventRecord], k: int = config.PCA_COMPONENTS) -> np.ndarray:
    """Stack the eigenvalue summary of every record into an N x k array."""
    return np.array([pca_eigenvalues(build_feature_matrix(r), k) for r in records]).reshape(len(records), k)


# ---------------------------------------------------------------- SVM


def gaussian_kernel(a: np.ndarray, b: np.ndarray, sigma: float) -> np.ndarray:
    """
    Pairwise Gaussian kernel exp(-|a_i - b_j|^2 / (2 sigma^2)).

    Args:
        a: N x d array
        b: M x d array
        sigma: Kernel width

    Returns:
        N x M kernel matrix
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    sq = np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=-1)
    return np.exp(-sq / (2.0 * sigma * sigma))


def dual_objective(alphas: np.ndarray, y: np.ndarray, kernel: np.ndarray) -> float:
    """SVM dual objective sum(alpha) - 1/2 sum_ij alpha_i alpha_j y_i y_j K_ij."""
    ay = alphas * y
    return float(np.sum(alphas) - 0.5 * ay @ kernel @ ay)


def _violating_pair(alphas, y, g, c):
    up = ((y > 0) & (alphas < c)) | ((y < 0) & (alphas > 0))
    low = ((y < 0) & (alphas < c)) | ((y > 0) & (alphas > 0))
    g_up = np.where(up, g, -np.inf)
    g_low = np.where(low, g, np.inf)
    i, j = int(np.argmax(g_up)), int(np.argmin(g_low))
    return i, j, g_up[i], g_low[j]


def smo_train(
    x: np.ndarray,
    y: np.ndarray,
    h: SvmHyperParams = SvmHyperParams(),
    record_objective: bool = False,
) -> BinarySvmModel:
    """
    Train a binary soft-margin Gaussian-kernel SVM by sequential minimal optimization.

    Each step updates the maximal violating pair analytically; training stops
    when the violation gap drops below h.tol, which puts every example within
    h.tol of its KKT condition. After h.max_passes * n steps the current
    iterate is returned with converged=False.

    Args:
        x: N x d training inputs
        y: N labels in {-1, +1}
        h: Hyperparameters
        record_objective: Keep the dual objective after every step

    Returns:
        BinarySvmModel
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float)
    if x.shape[0] != y.shape[0]:
        raise InvalidInputError(f"{x.shape[0]} inputs but {y.shape[0]} labels")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise InvalidInputError("SVM labels must be -1 or +1")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise InvalidInputError("SVM training needs at least one example of each label")

    n = len(y)
    c = h.c
    kernel = gaussian_kernel(x, x, h.sigma)
    alphas = np.zeros(n)
    # g_t = y_t - sum_s alpha_s y_s K_ts
    g = y.copy()
    trace = []
    converged = False
    iterations = 0

    for iterations in range(1, h.max_passes * n + 1):
        i, j, g_max, g_min = _violating_pair(alphas, y, g, c)
        if g_max - g_min < h.tol:
            converged = True
            iterations -= 1
            break
        curvature = max(kernel[i, i] + kernel[j, j] - 2.0 * kernel[i, j], 1e-12)
        bound_i = c - alphas[i] if y[i] > 0 else alphas[i]
        bound_j = alphas[j] if y[j] > 0 else c - alphas[j]
        step = min((g_max - g_min) / curvature, bound_i, bound_j)

        new_i = alphas[i] + y[i] * step
        new_j = alphas[j] - y[j] * step
        if step == bound_i:
            new_i = c if y[i] > 0 else 0.0
        if step == bound_j:
            new_j = 0.0 if y[j] > 0 else c
        alphas[i], alphas[j] = new_i, new_j
        g -= step * (kernel[:, i] - kernel[:, j])

        if record_objective:
            trace.append(dual_objective(alphas, y, kernel))
    else:
        _, _, g_max, g_min = _violating_pair(alphas, y, g, c)
        converged = g_max - g_min < h.tol

    if not converged:
        logger.warning(
            "SMO stopped after %d steps with violation gap %.3g > tol %.3g",
            iterations, g_max - g_min, h.tol,
        )
    else:
        logger.debug("SMO converged in %d steps (n=%d)", iterations, n)

    free = (alphas > 0) & (alphas < c)
    bias = float(np.mean(g[free])) if np.any(free) else float(0.5 * (g_max + g_min))
    support = alphas > 0
    return BinarySvmModel(
        support_vectors=x[support].copy(),
        alphas=alphas[support].copy(),
        labels=y[support].copy(),
        bias=bias,
        sigma=h.sigma,
        converged=converged,
        iterations=iterations,
        objective_trace=tuple(trace),
    )


def decision_function(model: BinarySvmModel, x: np.ndarray) -> np.ndarray:
    """
    Decision values f(x) = sum_i alpha_i y_i K(sv_i, x) + b.

    Args:
        model: Trained binary SVM
        x: M x d inputs (or one d-vector)

    Returns:
        M decision values
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if len(model.alphas) == 0:
        return np.full(x.shape[0], model.bias)
    kernel = gaussian_kernel(x, model.support_vectors, model.sigma)
    return kernel @ (model.alphas * model.labels) + model.bias


def constant_svm(sign: float, dim: int, sigma: float) -> BinarySvmModel:
    """A model without support vectors whose decision value is always sign (+1 or -1)."""
    return BinarySvmModel(
        support_vectors=np.empty((0, dim)),
        alphas=np.empty(0),
        labels=np.empty(0),
        bias=float(sign),
        sigma=sigma,
    )


def ova_train(
    eigen_vectors: np.ndarray,
    labels: np.ndarray,
    h: SvmHyperParams = SvmHyperParams(),
    jobs: int = 1,
) -> MultiSvmModel:
    """
    Train one class-vs-rest SVM per event class on standardized inputs.

    Args:
        eigen_vectors: N x k eigenvalue summaries
        labels: N class codes (1..3)
        h: Hyperparameters shared by the three SVMs
        jobs: Parallel workers for the three trainings

    Returns:
        MultiSvmModel
    """
    x = np.atleast_2d(np.asarray(eigen_vectors, dtype=float))
    labels = np.asarray(labels, dtype=int)
    mean = x.mean(axis=0)
    std = np.maximum(x.std(axis=0), config.STD_FLOOR)
    z = (x - mean) / std
    targets = [np.where(labels == int(label), 1.0, -1.0) for label in EventClass]
    trainable = [i for i, y in enumerate(targets) if np.any(y > 0) and np.any(y < 0)]
    trained = Parallel(n_jobs=jobs)(delayed(smo_train)(z, targets[i], h) for i in trainable)
    models = dict(zip(trainable, trained))
    for i, label in enumerate(EventClass):
        if i not in models:
            sign = float(targets[i][0])
            logger.warning(
                "No %s examples for class %d; its SVM always answers %+d",
                "negative" if sign > 0 else "positive", int(label), int(sign),
            )
            models[i] = constant_svm(sign, z.shape[1], h.sigma)
    return MultiSvmModel(models=tuple(models[i] for i in range(len(EventClass))), mean=mean, std=std)


def ova_decide(decision_values: Sequence[float]) -> Prediction:
    """
    One-against-all rule: the class with the largest positive decision value.

    Ties go to the lowest class code; all values <= 0 give None
    (non-classified).

    Args:
        decision_values: One value per class, ordered by class code

    Returns:
        EventClass or None
    """
    values = np.asarray(decision_values, dtype=float)
    if np.all(values <= 0):
        return None
    return EventClass(int(np.argmax(values)) + 1)


def ova_decision_values(model: MultiSvmModel, x: np.ndarray) -> np.ndarray:
    """Decision value of each class-vs-rest SVM for one eigenvalue vector."""
    z = (np.asarray(x, dtype=float) - model.mean) / model.std
    return np.array([decision_function(m, z)[0] for m in model.models])


def ova_predict(model: MultiSvmModel, x: np.ndarray) -> Prediction:
    """
    Classify one eigenvalue vector.

    Args:
        model: Trained one-against-all model
        x: Raw (unstandardized) eigenvalue vector

    Returns:
        EventClass or None (non-classified)
    """
    return ova_decide(ova_decision_values(model, x))


def select_hyperparams(
    eigen_vectors: np.ndarray,
    labels: np.ndarray,
    seed: int,
    base: SvmHyperParams = SvmHyperParams(),
    c_grid: Sequence[float] = config.SVM_GRID_C,
    sigma_grid: Sequence[float] = config.SVM_GRID_SIGMA,
    folds: int = config.SVM_GRID_FOLDS,
) -> SvmHyperParams:
    """
    Pick (c, sigma) by stratified k-fold accuracy on the training side.

    Args:
        eigen_vectors: N x k training inputs
        labels: N class codes
        seed: Fold assignment seed
        base: Hyperparameters whose tol/max_passes are kept
        c_grid: Candidate box constraints
        sigma_grid: Candidate kernel widths
        folds: Number of folds

    Returns:
        Best hyperparameters; ties keep the earlier grid point
    """
    x = np.asarray(eigen_vectors, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if min(np.sum(labels == int(c)) for c in EventClass) < folds:
        logger.warning("Too few records per class for %d-fold grid search; keeping defaults", folds)
        return base

    splitter = StratifiedKFold(n_splits=folds, shuffle=True, random_state=derive_seed(seed, folds))
    splits = list(splitter.split(x, labels))
    best, best_score = base, -1.0
    for c in c_grid:
        for sigma in sigma_grid:
            h = SvmHyperParams(c=c, sigma=sigma, tol=base.tol, max_passes=base.max_passes)
            correct = 0
            for train_idx, test_idx in splits:
                model = ova_train(x[train_idx], labels[train_idx], h)
                correct += sum(
                    ova_predict(model, x[t]) == EventClass(int(labels[t])) for t in test_idx
                )
            score = correct / len(labels)
            logger.debug("Grid c=%g sigma=%g accuracy=%.4f", c, sigma, score)
            if score > best_score:
                best, best_score = h, score
    logger.info("Selected c=%g sigma=%g (cv accuracy %.4f)", best.c, best.sigma, best_score)
    return best


class PcaSvmPipeline(BasePipeline):
    """PCA eigenvalue summary followed by one-against-all Gaussian SVMs."""

    method = config.METHOD_PCA_SVM

    def __init__(
        self,
        seed: int,
        hyper: SvmHyperParams = SvmHyperParams(),
        k: int = config.PCA_COMPONENTS,
        grid_search: bool = False,
        jobs: int = 1,
    ):
        super().__init__(seed)
        if not 1 <= k <= NUM_FEATURES:
            raise InvalidInputError(f"k must be in [1, {NUM_FEATURES}], got {k}")
        self.hyper = hyper
        self.k = k
        self.grid_search = grid_search
        self.jobs = jobs
        self.model: Optional[MultiSvmModel] = None

    def fit(self, records: Sequence[EventRecord]) -> "PcaSvmPipeline":
        x = eigen_features(records, self.k)
        labels = np.array([int(r.label) for r in records], dtype=int)
        if self.grid_search:
            self.hyper = select_hyperparams(x, labels, self.seed, base=self.hyper)
        self.model = ova_train(x, labels, self.hyper, jobs=self.jobs)
        self.is_fitted = True
        logger.info(
            "Trained pca-svm on %d records (support vectors %s, converged=%s)",
            len(records), [len(m.alphas) for m in self.model.models], self.model.converged,
        )
        return self

    def predict(self, record: EventRecord) -> Prediction:
        if self.model is None:
            raise InvalidInputError("Pipeline is not fitted")
        return ova_predict(self.model, pca_eigenvalues(build_feature_matrix(record), self.k))

    @property
    def converged(self) -> bool:
        return self.model is None or self.model.converged

    def to_dict(self) -> Dict[str, Any]:
        return {
            "hyper": {
                "c": self.hyper.c,
                "sigma": self.hyper.sigma,
                "tol": self.hyper.tol,
                "max_passes": self.hyper.max_passes,
            },
            "k": self.k,
            "model": self.model.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any], seed: int = 0) -> "PcaSvmPipeline":
        pipeline = cls(seed=seed, hyper=SvmHyperParams(**data["hyper"]), k=int(data["k"]))
        pipeline.model = MultiSvmModel.from_dict(data["model"])
        pipeline.is_fitted = True
        return pipeline
