"""
Regression tools for 2D-to-3D shape instantiation
SIMPLS partial least squares, the Gaussian kernel and kernel PLS built on it
"""

import logging
import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg
from scipy.spatial.distance import cdist

from tools.errors import ConfigError, RankError, ShapeError
from tools.ssm import CENTER_ONLY, NormalizationStats

logger = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1
PLSR = "plsr"
KPLSR = "kplsr"
REGRESSOR_KINDS = (PLSR, KPLSR)

# SIMPLS stops when the leading singular value falls below this fraction of ||S0||
SINGULAR_TOL = 1e-12


def _matrix(values, name):
    values = np.asarray(getattr(values, "values", values), dtype=float)
    if values.ndim != 2:
        raise ShapeError(f"{name} must be a 2D matrix, got shape {values.shape}")
    return values


@dataclass(frozen=True)
class PlsModel:
    """
    Fitted SIMPLS model

    Attributes:
    -----------
    n_components : int
        M
    x_stats, y_stats : NormalizationStats
        Center-only statistics of the training predictor and response
    weights : ndarray (p, M)
        Unit-norm weights R
    scores : ndarray (N, M)
        Mutually orthogonal scores T = X0 R
    x_loadings : ndarray (p, M)
        C, with c_i = X0^T t_i / (t_i^T t_i)
    y_loadings : ndarray (q, M)
        Y0^T t_i / (t_i^T t_i), so that B = R Q^T
    coefficients : ndarray (p, q)
        B = R (T^T T)^-1 T^T Y0
    """
    n_components: int
    x_stats: NormalizationStats
    y_stats: NormalizationStats
    weights: np.ndarray
    scores: np.ndarray
    x_loadings: np.ndarray
    y_loadings: np.ndarray
    coefficients: np.ndarray
    info: dict = field(default_factory=dict, compare=False)

    @property
    def n_features(self):
        return self.weights.shape[0]

    @property
    def n_targets(self):
        return self.y_loadings.shape[0]

    def truncate(self, m):
        """Model using only the first m components"""
        if not 1 <= m <= self.n_components:
            raise RankError(f"cannot truncate a {self.n_components}-component model to {m}", component=m)
        return replace(
            self,
            n_components=m,
            weights=self.weights[:, :m],
            scores=self.scores[:, :m],
            x_loadings=self.x_loadings[:, :m],
            y_loadings=self.y_loadings[:, :m],
            coefficients=_coefficients(self.weights, self.y_loadings, m),
        )


@dataclass(frozen=True)
class KernelConfig:
    """Gaussian ratio and the width W = ratio * max(K) it resolves to"""
    ratio: float
    width: float = None

    def __post_init__(self):
        if not np.isfinite(self.ratio) or self.ratio <= 0:
            raise ConfigError(f"Gaussian ratio must be > 0, got {self.ratio}")


@dataclass(frozen=True)
class KplsrModel:
    training_rows: np.ndarray
    kernel_cfg: KernelConfig
    kernel_column_means: np.ndarray
    inner: PlsModel
    info: dict = field(default_factory=dict, compare=False)

    @property
    def n_components(self):
        return self.inner.n_components

    @property
    def n_features(self):
        return self.training_rows.shape[1]

    def truncate(self, m):
        return replace(self, inner=self.inner.truncate(m))


def _coefficients(weights, y_loadings, m):
    return weights[:, :m] @ y_loadings[:, :m].T


def _fix_sign(vector):
    pivot = vector[np.argmax(np.abs(vector))]
    return -vector if pivot < 0 else vector


def simpls_fit(X, Y, M):
    """
    SIMPLS partial least squares

    Parameters:
    -----------
    X : DesignMatrix or ndarray (N, p)
        Predictor rows
    Y : DesignMatrix or ndarray (N, q)
        Response rows
    M : int
        Number of latent components, at most min(N - 1, p)

    Returns:
    --------
    PlsModel
    """
    start = time.perf_counter()
    x = _matrix(X, "X")
    y = _matrix(Y, "Y")
    n, p = x.shape
    if y.shape[0] != n:
        raise ShapeError(f"X has {n} rows but Y has {y.shape[0]}")
    M = int(M)
    limit = min(n - 1, p)
    if M < 1:
        raise RankError(f"number of components must be >= 1, got {M}", component=M)
    if M > limit:
        raise RankError(f"component {limit + 1} exceeds the rank limit min(N-1, p) = {limit}", component=limit + 1)

    x_means, y_means = x.mean(axis=0), y.mean(axis=0)
    x0, y0 = x - x_means, y - y_means
    s0 = x0.T @ y0
    scale = linalg.norm(s0)
    if scale == 0:
        raise RankError("zero cross-covariance between predictor and response", component=1)

    weights = np.zeros((p, M))
    scores = np.zeros((n, M))
    x_loadings = np.zeros((p, M))
    y_loadings = np.zeros((y.shape[1], M))

    s = s0
    for i in range(M):
        if i > 0:
            # orthogonal projector onto the complement of span(C) applied to S0
            basis, _ = linalg.qr(x_loadings[:, :i], mode="economic")
            s = s0 - basis @ (basis.T @ s0)
        u, sv, _ = linalg.svd(s, full_matrices=False)
        if sv[0] <= SINGULAR_TOL * scale:
            raise RankError(f"component {i + 1} has a vanishing cross-covariance", component=i + 1)
        r = _fix_sign(u[:, 0])
        t = x0 @ r
        tt = t @ t
        if tt == 0:
            raise RankError(f"component {i + 1} produced a zero score vector", component=i + 1)
        weights[:, i] = r
        scores[:, i] = t
        x_loadings[:, i] = x0.T @ t / tt
        y_loadings[:, i] = y0.T @ t / tt

    model = PlsModel(
        n_components=M,
        x_stats=NormalizationStats(x_means, np.zeros(p), CENTER_ONLY),
        y_stats=NormalizationStats(y_means, np.zeros(y.shape[1]), CENTER_ONLY),
        weights=weights,
        scores=scores,
        x_loadings=x_loadings,
        y_loadings=y_loadings,
        coefficients=_coefficients(weights, y_loadings, M),
        info={"fit_seconds": time.perf_counter() - start},
    )
    logger.debug("SIMPLS fitted %d components on %d x %d predictors", M, n, p)
    return model


def plsr_predict(model, x_new):
    """
    Predict response rows, y = (x - x_means) B + y_means

    Parameters:
    -----------
    model : PlsModel
    x_new : array_like (p,) or (n, p)

    Returns:
    --------
    ndarray (q,) or (n, q)
    """
    x_new = np.asarray(x_new, dtype=float)
    if x_new.shape[-1] != model.n_features:
        raise ShapeError(f"predictor has length {x_new.shape[-1]}, model expects {model.n_features}")
    return (x_new - model.x_stats.column_means) @ model.coefficients + model.y_stats.column_means


def gaussian_kernel(rows, ratio):
    """
    Gaussian kernel with the self-normalizing width W = ratio * max(K)

    Parameters:
    -----------
    rows : array_like (N, p)
    ratio : float
        Gaussian ratio > 0

    Returns:
    --------
    tuple : (K_space ndarray (N, N), KernelConfig with resolved width)
    """
    cfg = KernelConfig(float(ratio))
    rows = _matrix(rows, "rows")
    centered = rows - rows.mean(axis=0)
    distances = cdist(centered, centered, "sqeuclidean")
    k_max = distances.max()
    if k_max == 0:
        return np.ones_like(distances), KernelConfig(cfg.ratio, 0.0)
    width = cfg.ratio * k_max
    return np.exp(-distances / width), KernelConfig(cfg.ratio, width)


def _check_conflicting_duplicates(x, y):
    _, inverse, counts = np.unique(x, axis=0, return_inverse=True, return_counts=True)
    inverse = np.asarray(inverse).ravel()
    conflicts = []
    for group in np.flatnonzero(counts > 1):
        members = np.flatnonzero(inverse == group)
        if not np.all(y[members] == y[members[0]]):
            conflicts.append(members.tolist())
    if conflicts:
        message = f"duplicate predictor rows with different responses: {conflicts}"
        logger.warning(message)
        warnings.warn(message, RuntimeWarning, stacklevel=3)
    return conflicts


def kplsr_fit(X, Y, M, ratio):
    """
    Kernel PLS: SIMPLS on the Gaussian kernel matrix of the predictor rows

    Parameters:
    -----------
    X : DesignMatrix or ndarray (N, p)
    Y : DesignMatrix or ndarray (N, q)
    M : int
        Components, at most N - 1
    ratio : float
        Gaussian ratio

    Returns:
    --------
    KplsrModel
    """
    start = time.perf_counter()
    x = _matrix(X, "X")
    y = _matrix(Y, "Y")
    if y.shape[0] != x.shape[0]:
        raise ShapeError(f"X has {x.shape[0]} rows but Y has {y.shape[0]}")
    conflicts = _check_conflicting_duplicates(x, y)
    k_space, kernel_cfg = gaussian_kernel(x, ratio)
    inner = simpls_fit(k_space, y, M)
    return KplsrModel(
        training_rows=x.copy(),
        kernel_cfg=kernel_cfg,
        kernel_column_means=inner.x_stats.column_means,
        inner=inner,
        info={"fit_seconds": time.perf_counter() - start, "conflicting_duplicates": conflicts},
    )


def kernel_rows(model, x_new):
    """Kernel row(s) between new predictors and the training rows, using the training width"""
    x_new = np.asarray(x_new, dtype=float)
    if x_new.shape[-1] != model.n_features:
        raise ShapeError(f"predictor has length {x_new.shape[-1]}, model expects {model.n_features}")
    # distances about the training mean, as in gaussian_kernel
    center = model.training_rows.mean(axis=0)
    distances = cdist(np.atleast_2d(x_new) - center, model.training_rows - center, "sqeuclidean")
    if model.kernel_cfg.width == 0:
        kernel = np.ones_like(distances)
    else:
        kernel = np.exp(-distances / model.kernel_cfg.width)
    return kernel[0] if x_new.ndim == 1 else kernel


def kplsr_predict(model, x_new):
    """Predict response rows from raw predictor rows through the test kernel"""
    return plsr_predict(model.inner, kernel_rows(model, x_new))


def fit_regressor(kind, X, Y, M, ratio=1.0):
    if kind == PLSR:
        return simpls_fit(X, Y, M)
    if kind == KPLSR:
        return kplsr_fit(X, Y, M, ratio)
    raise ConfigError(f"unknown regressor '{kind}', expected one of {REGRESSOR_KINDS}")


def predict(model, x_new):
    if isinstance(model, KplsrModel):
        return kplsr_predict(model, x_new)
    return plsr_predict(model, x_new)


def _pls_to_dict(model):
    return {
        "n_components": model.n_components,
        "x_means": model.x_stats.column_means.tolist(),
        "y_means": model.y_stats.column_means.tolist(),
        "weights": model.weights.tolist(),
        "scores": model.scores.tolist(),
        "x_loadings": model.x_loadings.tolist(),
        "y_loadings": model.y_loadings.tolist(),
    }


def _pls_from_dict(data):
    weights = np.asarray(data["weights"], dtype=float)
    y_loadings = np.asarray(data["y_loadings"], dtype=float)
    m = int(data["n_components"])
    x_means = np.asarray(data["x_means"], dtype=float)
    y_means = np.asarray(data["y_means"], dtype=float)
    return PlsModel(
        n_components=m,
        x_stats=NormalizationStats(x_means, np.zeros_like(x_means), CENTER_ONLY),
        y_stats=NormalizationStats(y_means, np.zeros_like(y_means), CENTER_ONLY),
        weights=weights,
        scores=np.asarray(data["scores"], dtype=float),
        x_loadings=np.asarray(data["x_loadings"], dtype=float),
        y_loadings=y_loadings,
        coefficients=_coefficients(weights, y_loadings, m),
    )


def model_to_dict(model, extra=None):
    """Versioned JSON-ready document for a PlsModel or KplsrModel"""
    document = {"version": MODEL_FORMAT_VERSION}
    if isinstance(model, KplsrModel):
        document.update({
            "kind": KPLSR,
            "training_rows": model.training_rows.tolist(),
            "ratio": model.kernel_cfg.ratio,
            "width": model.kernel_cfg.width,
            "kernel_column_means": model.kernel_column_means.tolist(),
            "inner": _pls_to_dict(model.inner),
        })
    else:
        document.update({"kind": PLSR, "inner": _pls_to_dict(model)})
    if extra:
        document["extra"] = extra
    return document


def model_from_dict(document):
    if document.get("version") != MODEL_FORMAT_VERSION:
        raise ShapeError(f"unsupported model format version {document.get('version')!r}")
    try:
        inner = _pls_from_dict(document["inner"])
        if document["kind"] == PLSR:
            return inner
        if document["kind"] == KPLSR:
            return KplsrModel(
                training_rows=np.asarray(document["training_rows"], dtype=float),
                kernel_cfg=KernelConfig(float(document["ratio"]), float(document["width"])),
                kernel_column_means=np.asarray(document["kernel_column_means"], dtype=float),
                inner=inner,
            )
    except KeyError as e:
        raise ShapeError(f"model document is missing {e}")
    raise ShapeError(f"unknown model kind {document.get('kind')!r}")
