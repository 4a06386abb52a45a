"""
Sparse principal component analysis for statistical shape models
PCA via thin SVD, the LARS-EN elastic-net subproblem, the alternating SPCA
loop and per-vertex contributions used to place the scan plane
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from sklearn.linear_model import lars_path_gram

from tools.errors import ConfigError, ShapeError, ZeroVarianceError

logger = logging.getLogger(__name__)

DEFAULT_RIDGE_LAMBDA = 1e-4
DEFAULT_SPARSITY_FRACTION = 0.075
STATUS_CONVERGED = "converged"
STATUS_MAX_ITER = "max-iter"


def _fix_signs(columns):
    """Flip each column so its largest-magnitude entry is positive"""
    columns = np.array(columns, dtype=float)
    if columns.size == 0:
        return columns
    idx = np.argmax(np.abs(columns), axis=0)
    signs = np.sign(columns[idx, np.arange(columns.shape[1])])
    signs[signs == 0] = 1.0
    return columns * signs


def _values(matrix):
    return np.asarray(getattr(matrix, "values", matrix), dtype=float)


@dataclass(frozen=True)
class PcaResult:
    """
    Thin SVD of a normalized design matrix, Y_norm = U D V^T

    Attributes:
    -----------
    components : ndarray (N, r)
        Principal component scores Z = U D
    loadings : ndarray (d, r)
        Orthonormal loading columns V
    singular_values : ndarray (r,)
        Non-increasing diagonal of D
    """
    components: np.ndarray
    loadings: np.ndarray
    singular_values: np.ndarray

    @property
    def explained_variance_ratio(self):
        total = np.sum(self.singular_values ** 2)
        if total == 0:
            return np.zeros_like(self.singular_values)
        return self.singular_values ** 2 / total


@dataclass(frozen=True)
class SpcaConfig:
    """
    SPCA settings

    Sparsity is given either as per-component L1 penalties (l1_penalty) or as
    per-component counts of non-zero vertices (nonzero_target), a vertex being
    coordinates_per_vertex consecutive variables. With neither set, the count
    defaults to sparsity_fraction of the vertex count.
    """
    k: int = 1
    ridge_lambda: float = DEFAULT_RIDGE_LAMBDA
    l1_penalty: object = None
    nonzero_target: object = None
    sparsity_fraction: float = DEFAULT_SPARSITY_FRACTION
    max_iter: int = 200
    tol: float = 1e-6
    coordinates_per_vertex: int = 3

    def __post_init__(self):
        if int(self.k) < 1:
            raise ConfigError(f"k must be a positive integer, got {self.k}")
        if self.ridge_lambda < 0:
            raise ConfigError(f"ridge lambda must be >= 0, got {self.ridge_lambda}")
        if self.l1_penalty is not None and self.nonzero_target is not None:
            raise ConfigError("give either l1_penalty or nonzero_target, not both")
        if int(self.max_iter) < 1:
            raise ConfigError(f"max_iter must be positive, got {self.max_iter}")
        if self.tol <= 0:
            raise ConfigError(f"tol must be positive, got {self.tol}")
        if not 0 < self.sparsity_fraction <= 1:
            raise ConfigError(f"sparsity_fraction must be in (0, 1], got {self.sparsity_fraction}")
        if int(self.coordinates_per_vertex) < 1:
            raise ConfigError(f"coordinates_per_vertex must be positive, got {self.coordinates_per_vertex}")

    @property
    def mode(self):
        return "penalty" if self.l1_penalty is not None else "count"

    def _per_component(self, value, cast):
        values = np.atleast_1d(value)
        if values.size == 1:
            values = np.repeat(values, self.k)
        if values.size != self.k:
            raise ConfigError(f"expected {self.k} sparsity values, got {values.size}")
        return [cast(v) for v in values]

    def resolve(self, n_rows, n_variables):
        """Validate against the data size and return the per-component sparsity list"""
        if self.k > min(n_rows - 1, n_variables):
            raise ShapeError(
                f"k={self.k} exceeds min(N-1, d) = {min(n_rows - 1, n_variables)}"
            )
        if self.l1_penalty is not None:
            penalties = self._per_component(self.l1_penalty, float)
            if any(p < 0 for p in penalties):
                raise ConfigError("L1 penalties must be >= 0")
            return penalties
        group = int(self.coordinates_per_vertex)
        if n_variables % group:
            raise ShapeError(f"{n_variables} variables do not split into vertices of {group} coordinates")
        if self.nonzero_target is not None:
            targets = self._per_component(self.nonzero_target, int)
        else:
            targets = [max(1, int(round(self.sparsity_fraction * (n_variables // group))))] * self.k
        if any(t < 1 for t in targets):
            raise ConfigError("non-zero targets must be >= 1")
        return targets


@dataclass(frozen=True)
class SparseLoadings:
    """Normalized sparse loadings B = [beta_1 .. beta_k] and their supports"""
    loadings: np.ndarray
    support: tuple
    status: str = STATUS_CONVERGED
    n_iter: int = 0
    objective_history: tuple = ()
    adjusted_variance: np.ndarray = None
    info: dict = field(default_factory=dict, compare=False)

    @property
    def converged(self):
        return self.status == STATUS_CONVERGED

    @property
    def k(self):
        return self.loadings.shape[1]

    def to_dict(self):
        return {
            "loadings": self.loadings.tolist(),
            "support": [s.tolist() for s in self.support],
            "status": self.status,
            "n_iter": self.n_iter,
        }


@dataclass(frozen=True)
class VertexContribution:
    """Per-vertex summed absolute loading; selected are the non-zero vertices"""
    contributions: np.ndarray
    selected: np.ndarray

    def to_dict(self):
        return {
            "contributions": self.contributions.tolist(),
            "selected": self.selected.tolist(),
        }


def pca(y_norm):
    """
    PCA of a centered matrix via thin SVD

    Loading signs follow the largest-magnitude-entry-positive rule.

    Parameters:
    -----------
    y_norm : DesignMatrix or ndarray (N, d)

    Returns:
    --------
    PcaResult
    """
    values = _values(y_norm)
    u, s, vt = linalg.svd(values, full_matrices=False)
    v = vt.T
    idx = np.argmax(np.abs(v), axis=0)
    signs = np.sign(v[idx, np.arange(v.shape[1])])
    signs[signs == 0] = 1.0
    v = v * signs
    u = u * signs
    return PcaResult(components=u * s, loadings=v, singular_values=s)


class DenseGram:
    """An explicit d x d gram matrix"""

    def __init__(self, gram):
        self.gram = gram

    @property
    def size(self):
        return self.gram.shape[0]

    @property
    def trace(self):
        return float(np.trace(self.gram))

    def apply(self, x):
        return self.gram @ x

    def columns(self, index, coefs):
        """G[:, index] @ coefs"""
        return self.gram[:, index] @ coefs

    def block(self, index):
        return self.gram[np.ix_(index, index)]

    def ridge(self, alpha, ridge_lambda):
        """(G + lambda I)^-1 G alpha, the least-norm solution when lambda = 0"""
        if ridge_lambda == 0:
            return linalg.lstsq(self.gram, self.gram @ alpha)[0]
        shifted = self.gram + ridge_lambda * np.eye(self.size)
        return linalg.solve(shifted, self.gram @ alpha, assume_a="sym")


class FactoredGram:
    """
    G = V diag(s^2) V^T held as thin-SVD factors

    Products and principal blocks cost O(N d) per column instead of forming
    the d x d matrix.
    """

    def __init__(self, loadings, singular_values):
        self.v = loadings
        self.s2 = singular_values ** 2

    @classmethod
    def from_pca(cls, result):
        return cls(result.loadings, result.singular_values)

    @property
    def size(self):
        return self.v.shape[0]

    @property
    def trace(self):
        return float(self.s2.sum())

    def _scale(self, projected):
        return projected * (self.s2 if projected.ndim == 1 else self.s2[:, None])

    def apply(self, x):
        return self.v @ self._scale(self.v.T @ x)

    def columns(self, index, coefs):
        return self.v @ self._scale(self.v[index].T @ coefs)

    def block(self, index):
        rows = self.v[index]
        return (rows * self.s2) @ rows.T

    def ridge(self, alpha, ridge_lambda):
        if ridge_lambda == 0:
            shrink = (self.s2 > np.finfo(float).eps * self.s2.max()).astype(float)
        else:
            shrink = self.s2 / (self.s2 + ridge_lambda)
        return self.v @ (shrink * (self.v.T @ alpha))


def _check_gram(gram):
    gram = np.asarray(gram, dtype=float)
    if gram.ndim != 2 or gram.shape[0] != gram.shape[1]:
        raise ShapeError(f"gram must be square, got shape {gram.shape}")
    scale = max(1.0, float(np.max(np.abs(gram))) if gram.size else 1.0)
    if not np.allclose(gram, gram.T, rtol=0.0, atol=1e-10 * scale):
        raise ShapeError("gram matrix is not symmetric")
    return gram


def _group_counts(index, coefs, group_size):
    return np.array([np.unique(index[np.flatnonzero(c)] // group_size).size for c in coefs.T])


def _lars_on_working_set(gram, xy, ridge_lambda, alpha_min, nonzero_target=None, group_size=1, warm=None):
    """
    Lasso path of LARS-EN restricted to a growing working set of variables

    The restricted path is the full path while no outside variable exceeds the
    correlation bound at any breakpoint up to the stop. Correlations are
    piecewise linear between breakpoints, so checking the breakpoints is
    enough. Violators join the set and the path is recomputed.

    Returns:
    --------
    tuple : (beta ndarray (d,), sklearn alpha at the returned point)
    """
    d = xy.size
    count_mode = nonzero_target is not None
    if count_mode:
        n_start = 2 * group_size * nonzero_target + 64
        max_steps = 2 * group_size * nonzero_target + 50
    else:
        n_start = 64 + (2 * warm.size if warm is not None else 0)
    working = np.argsort(-np.abs(xy), kind="stable")[:min(d, n_start)]
    if warm is not None:
        working = np.union1d(working, warm)
    working = np.sort(working)
    slack = 1e-12 * float(np.abs(xy).max())

    while True:
        block = gram.block(working) + ridge_lambda * np.eye(working.size)
        steps = max_steps if count_mode else max(500, 4 * working.size)
        alphas, _, coefs = lars_path_gram(
            Xy=xy[working], Gram=block, n_samples=1, alpha_min=alpha_min, method="lasso", max_iter=steps,
        )
        stop = coefs.shape[1] - 1
        if count_mode:
            over = np.flatnonzero(_group_counts(working, coefs, group_size) > nonzero_target)
            if over.size:
                stop = max(over[0] - 1, 0)

        outside = np.setdiff1d(np.arange(d), working, assume_unique=True)
        if outside.size == 0:
            break
        fitted = gram.columns(working, coefs[:, :stop + 1])
        correlation = np.abs(xy[outside, None] - fitted[outside])
        bound = alphas[:stop + 1] * (1.0 + 1e-9) + slack
        violators = outside[np.any(correlation > bound, axis=1)]
        if violators.size == 0:
            break
        logger.debug("LARS working set of %d grows by %d variables", working.size, violators.size)
        working = np.union1d(working, violators)

    beta = np.zeros(d)
    beta[working] = coefs[:, stop]
    return beta, float(alphas[stop])


def _solve_elastic_net(gram, alpha, ridge_lambda, l1_penalty=None, nonzero_target=None, group_size=1, warm=None):
    """Elastic-net step on a DenseGram or FactoredGram; returns (beta, lambda1 of the solution)"""
    d = gram.size
    no_l1 = l1_penalty is not None and l1_penalty == 0
    if no_l1 or nonzero_target is not None and nonzero_target >= d // group_size:
        return gram.ridge(alpha, ridge_lambda), 0.0

    xy = gram.apply(alpha)
    if not np.any(xy):
        return np.zeros(d), float(l1_penalty or 0.0)

    # sklearn's lasso objective halves the quadratic, so its alpha is lambda1 / 2
    if l1_penalty is not None:
        beta, _ = _lars_on_working_set(gram, xy, ridge_lambda, float(l1_penalty) / 2.0, warm=warm)
        return beta, float(l1_penalty)
    beta, path_alpha = _lars_on_working_set(gram, xy, ridge_lambda, 0.0, int(nonzero_target), group_size)
    return beta, 2.0 * path_alpha


def elastic_net(gram, target_alpha, ridge_lambda=DEFAULT_RIDGE_LAMBDA, l1_penalty=None, nonzero_target=None,
                group_size=1):
    """
    Minimize (a - b)^T G (a - b) + lambda ||b||^2 + lambda1 ||b||_1 with LARS-EN

    Parameters:
    -----------
    gram : ndarray (d, d), DenseGram or FactoredGram
        Y_norm^T Y_norm, symmetric positive semidefinite
    target_alpha : ndarray (d,)
    ridge_lambda : float
        Ridge weight lambda >= 0
    l1_penalty : float, optional
        lambda1; the solution is read off the path at this penalty
    nonzero_target : int, optional
        Return the largest path solution with at most this many non-zero groups
    group_size : int
        Consecutive variables counted as one group by nonzero_target

    Returns:
    --------
    ndarray (d,) unnormalized coefficient vector beta
    """
    if not isinstance(gram, (DenseGram, FactoredGram)):
        gram = DenseGram(_check_gram(gram))
    alpha = np.asarray(target_alpha, dtype=float).ravel()
    d = gram.size
    if alpha.shape[0] != d:
        raise ShapeError(f"target has length {alpha.shape[0]}, gram is {d} x {d}")
    if ridge_lambda < 0:
        raise ConfigError(f"ridge lambda must be >= 0, got {ridge_lambda}")
    if (l1_penalty is None) == (nonzero_target is None):
        raise ConfigError("give exactly one of l1_penalty or nonzero_target")
    if group_size < 1 or d % group_size:
        raise ShapeError(f"{d} variables do not split into groups of {group_size}")
    beta, _ = _solve_elastic_net(gram, alpha, ridge_lambda, l1_penalty, nonzero_target, group_size)
    return beta


def _criterion(gram, alphas, betas, ridge_lambda, penalties):
    """Reconstruction criterion summed over components"""
    total = 0.0
    for j, penalty in enumerate(penalties):
        a, b = alphas[:, j], betas[:, j]
        gb = gram.apply(b)
        total += gram.trace - 2.0 * a @ gb + b @ gb + ridge_lambda * b @ b + penalty * np.abs(b).sum()
    return float(total)


def _normalize(vector):
    norm = np.linalg.norm(vector)
    return vector / norm if norm > 0 else np.zeros_like(vector)


def adjusted_variance(y_norm, loadings):
    """Variance explained by sparse components after removing their correlation"""
    scores = _values(y_norm) @ loadings
    _, r = linalg.qr(scores, mode="economic")
    return np.diag(r) ** 2


def spca(y_norm, cfg=None):
    """
    Sparse PCA by alternating elastic-net and projection updates

    A starts from the first k PCA loadings and B from zero. Each sweep solves
    beta_j by LARS-EN against alpha_j, then sets alpha_j to the normalized
    projection of G beta_j onto the complement of alpha_1 .. alpha_{j-1}.
    Stops once ||beta_new - beta_old|| < tol for every component or at max_iter.

    In count mode the first sweep reads lambda1_j off the path where the
    vertex count reaches its target. Later sweeps keep that lambda1_j fixed,
    and the returned loadings are read off the count path of the final alpha_j.
    G is only applied through the thin SVD of y_norm.

    Parameters:
    -----------
    y_norm : DesignMatrix or ndarray (N, d)
        Centered and normalized response matrix
    cfg : SpcaConfig, optional

    Returns:
    --------
    SparseLoadings
    """
    cfg = cfg or SpcaConfig()
    values = _values(y_norm)
    n_rows, d = values.shape
    sparsity = cfg.resolve(n_rows, d)

    base = pca(values)
    if not np.any(base.singular_values):
        raise ZeroVarianceError("response matrix has zero variance; there is no mode of variation to sparsify")
    gram = FactoredGram.from_pca(base)
    group = int(cfg.coordinates_per_vertex)

    alphas = base.loadings[:, :cfg.k].copy()
    betas = np.zeros((d, cfg.k))
    normalized = np.zeros((d, cfg.k))
    penalties = list(sparsity) if cfg.mode == "penalty" else [None] * cfg.k
    history = []
    status = STATUS_MAX_ITER
    n_iter = 0

    for n_iter in range(1, cfg.max_iter + 1):
        previous = normalized.copy()
        for j in range(cfg.k):
            if penalties[j] is None:
                betas[:, j], penalties[j] = _solve_elastic_net(
                    gram, alphas[:, j], cfg.ridge_lambda, nonzero_target=sparsity[j], group_size=group)
            else:
                betas[:, j], _ = _solve_elastic_net(
                    gram, alphas[:, j], cfg.ridge_lambda, l1_penalty=penalties[j],
                    warm=np.flatnonzero(betas[:, j]))
            normalized[:, j] = _normalize(betas[:, j])

            update = gram.apply(normalized[:, j])
            if j > 0:
                prior = alphas[:, :j]
                update = update - prior @ (prior.T @ update)
            if np.linalg.norm(update) > 0:
                alphas[:, j] = _normalize(update)

        history.append(_criterion(gram, alphas, betas, cfg.ridge_lambda, penalties))
        change = np.linalg.norm(normalized - previous, axis=0).max()
        logger.debug("SPCA sweep %d: max loading change %.3e, criterion %.6e", n_iter, change, history[-1])
        if change < cfg.tol:
            status = STATUS_CONVERGED
            break

    if status != STATUS_CONVERGED:
        logger.warning("SPCA stopped at max_iter=%d without meeting tol=%g", cfg.max_iter, cfg.tol)
    else:
        logger.info("SPCA converged after %d sweeps", n_iter)

    if cfg.mode == "count":
        for j in range(cfg.k):
            beta, _ = _solve_elastic_net(gram, alphas[:, j], cfg.ridge_lambda,
                                         nonzero_target=sparsity[j], group_size=group)
            normalized[:, j] = _normalize(beta)

    loadings = _fix_signs(normalized)
    support = tuple(np.flatnonzero(loadings[:, j]) for j in range(cfg.k))
    return SparseLoadings(
        loadings=loadings,
        support=support,
        status=status,
        n_iter=n_iter,
        objective_history=tuple(history),
        adjusted_variance=adjusted_variance(values, loadings),
        info={"mode": cfg.mode, "sparsity": sparsity, "ridge_lambda": cfg.ridge_lambda,
              "l1_penalty": [float(p) for p in penalties]},
    )


def vertex_contributions(sl, component_index=0):
    """
    Per-vertex contribution |b_x| + |b_y| + |b_z| of one sparse loading

    Parameters:
    -----------
    sl : SparseLoadings or ndarray (d,) / (d, k)
    component_index : int
        Zero-based component

    Returns:
    --------
    VertexContribution
    """
    loadings = sl.loadings if isinstance(sl, SparseLoadings) else np.asarray(sl, dtype=float)
    if loadings.ndim == 1:
        loadings = loadings[:, None]
    if not 0 <= component_index < loadings.shape[1]:
        raise ShapeError(f"component {component_index} outside 0..{loadings.shape[1] - 1}")
    beta = loadings[:, component_index]
    if beta.size % 3:
        raise ShapeError(f"loading length {beta.size} is not a multiple of 3")
    contributions = np.abs(beta).reshape(-1, 3).sum(axis=1)
    return VertexContribution(contributions, np.flatnonzero(contributions > 0))


def thresholded_pca_contributions(pca_result, n_vertices, component_index=0):
    """
    Baseline selection: keep the n_vertices with the largest summed |V| entries

    Returns:
    --------
    VertexContribution with contributions zeroed outside the kept vertices
    """
    full = vertex_contributions(pca_result.loadings, component_index).contributions
    n_vertices = int(min(max(n_vertices, 0), full.size))
    keep = np.argsort(-full, kind="stable")[:n_vertices]
    contributions = np.zeros_like(full)
    contributions[keep] = full[keep]
    return VertexContribution(contributions, np.flatnonzero(contributions > 0))
