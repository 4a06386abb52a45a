"""
Validation harness for 2D-to-3D shape instantiation
Leave-one-out cross-validation and the robustness studies built on it:
component sweeps, scan plane deviations, rigid re-registration of the
predictor, boundary time frames and informative-vertex selection
"""

import logging
import concurrent.futures
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from tqdm import tqdm

from tools.errors import ConfigError, NoIntersectionError, RankError, ShapeError, ShapeToolkitError
from tools.regress import KPLSR, PLSR, REGRESSOR_KINDS, fit_regressor, predict
from tools.scanplane import (
    DEVIATION_PRESET, PlanePerturbation, build_contour_sequence, fit_weighted_plane, perturb_plane,
)
from tools.spca import SpcaConfig, pca, spca, thresholded_pca_contributions, vertex_contributions
from tools.ssm import (
    CENTER_AND_NORMALIZE, center_normalize, flatten, mean_distance_error,
    one_sided_variation, shape_variation, vertex_distances,
)

logger = logging.getLogger(__name__)

DEFAULT_COMPONENT_GRIDS = {PLSR: tuple(range(1, 9)), KPLSR: tuple(range(1, 19))}
DEFAULT_RATIO_GRID = (0.1, 0.3, 1.0, 3.0, 10.0)
COMPONENT_MODES = ("per-subject", "per-frame")


@dataclass(frozen=True)
class RegressorConfig:
    """
    Regressor settings for a validation run

    n_components=None selects the count (and for KPLSR with a ratio_grid,
    the Gaussian ratio) by LOOCV over the grids, either once per subject or
    inside every fold ('per-frame').
    """
    kind: str = KPLSR
    n_components: int = None
    ratio: float = 1.0
    component_grid: tuple = None
    ratio_grid: tuple = None
    component_mode: str = "per-subject"
    label: str = None

    def __post_init__(self):
        if self.kind not in REGRESSOR_KINDS:
            raise ConfigError(f"unknown regressor '{self.kind}', expected one of {REGRESSOR_KINDS}")
        if self.component_mode not in COMPONENT_MODES:
            raise ConfigError(f"unknown component mode '{self.component_mode}', expected one of {COMPONENT_MODES}")
        if self.n_components is not None and int(self.n_components) < 1:
            raise ConfigError(f"n_components must be >= 1, got {self.n_components}")
        if self.ratio <= 0:
            raise ConfigError(f"Gaussian ratio must be > 0, got {self.ratio}")
        if self.component_grid is not None and len(self.component_grid) == 0:
            raise ConfigError("component grid is empty")
        if self.ratio_grid is not None and len(self.ratio_grid) == 0:
            raise ConfigError("ratio grid is empty")

    @property
    def name(self):
        return self.label or self.kind

    @property
    def components(self):
        if self.component_grid is not None:
            return tuple(int(m) for m in self.component_grid)
        return DEFAULT_COMPONENT_GRIDS[self.kind]

    @property
    def ratios(self):
        if self.kind != KPLSR:
            return (self.ratio,)
        return tuple(float(r) for r in self.ratio_grid) if self.ratio_grid else (self.ratio,)


@dataclass(frozen=True)
class RigidTransform2D:
    """Rotation about the in-plane origin followed by a translation, per 2D vertex"""
    angle_deg: float = 30.0
    translation: tuple = (40.0, -25.0)

    @property
    def matrix(self):
        angle = np.deg2rad(self.angle_deg)
        return np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])

    def apply(self, points):
        return np.asarray(points, dtype=float) @ self.matrix.T + np.asarray(self.translation, dtype=float)

    @property
    def is_identity(self):
        return self.angle_deg == 0 and tuple(self.translation) == (0.0, 0.0)


@dataclass
class LoocvReport:
    """
    Per-frame leave-one-out results for one or more regressors

    Attributes:
    -----------
    per_frame_errors : dict
        Regressor name -> (N,) mean distance errors in mm, NaN for failed folds
    shape_variations : ndarray (N,)
        Interior-frame shape variation, NaN at the first and last frame
    one_sided_variations : dict
        Frame index -> neighbour distance at the first and last frame
    config_used : dict
        Regressor name -> per-frame {'n_components', 'ratio'} settings
    boundary_frames : tuple
        Flagged boundary frame indices
    failures : dict
        Regressor name -> {frame: message}
    """
    per_frame_errors: dict
    shape_variations: np.ndarray
    one_sided_variations: dict
    config_used: dict
    boundary_frames: tuple = ()
    failures: dict = field(default_factory=dict)
    vertex_errors: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)

    @property
    def n_frames(self):
        return self.shape_variations.shape[0]

    @property
    def regressors(self):
        return list(self.per_frame_errors)

    def mean_error(self, name=None):
        name = name or self.regressors[0]
        return float(np.nanmean(self.per_frame_errors[name]))

    def to_frame(self):
        """Plot-ready table: frame, error_<regressor>..., shape_variation, boundary"""
        table = pd.DataFrame({"frame": np.arange(self.n_frames)})
        for name, errors in self.per_frame_errors.items():
            table[f"error_{name}"] = errors
        table["shape_variation"] = self.shape_variations
        table["boundary"] = table["frame"].isin(self.boundary_frames)
        return table

    def to_dict(self, include_timing=True):
        document = {
            "per_frame_errors": {k: _nan_list(v) for k, v in self.per_frame_errors.items()},
            "shape_variations": _nan_list(self.shape_variations),
            "one_sided_variations": {str(k): v for k, v in self.one_sided_variations.items()},
            "config_used": self.config_used,
            "boundary_frames": list(self.boundary_frames),
            "failures": {k: {str(f): m for f, m in v.items()} for k, v in self.failures.items()},
            "info": self.info,
        }
        if include_timing:
            document["timing"] = self.timing
        return document


@dataclass
class StudyGrid:
    """Result tensor over named axes; failed cells are NaN and listed in failures"""
    name: str
    axes: dict
    values: np.ndarray
    failures: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        expected = tuple(len(v) for v in self.axes.values())
        if self.values.shape != expected:
            raise ShapeError(f"study values have shape {self.values.shape}, axes imply {expected}")

    def to_frame(self):
        """Long-form table with one row per cell"""
        index = pd.MultiIndex.from_product(list(self.axes.values()), names=list(self.axes))
        return pd.DataFrame({"error": self.values.ravel()}, index=index).reset_index()

    def to_dict(self):
        return {
            "name": self.name,
            "axes": {k: [_plain(v) for v in values] for k, values in self.axes.items()},
            "values": _nan_list(self.values),
            "failures": {"|".join(str(c) for c in cell): msg for cell, msg in self.failures.items()},
            "info": self.info,
        }


def _plain(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    return value


def _nan_list(values):
    """JSON-safe nested list with NaN as None"""
    array = np.asarray(values, dtype=float)
    return np.where(np.isnan(array), None, array).tolist()


def boundary_frames(n_frames, boundary_spec="half", count=2):
    """
    Indices of boundary time frames

    Parameters:
    -----------
    n_frames : int
    boundary_spec : str or iterable of int
        'half': first and last `count` frames; 'full': also the middle frame +- 1;
        'none': no frames; or explicit indices
    count : int
    """
    if isinstance(boundary_spec, str):
        if boundary_spec == "none":
            return ()
        if boundary_spec not in ("half", "full"):
            raise ConfigError(f"unknown boundary spec '{boundary_spec}'")
        frames = set(range(min(count, n_frames))) | set(range(max(n_frames - count, 0), n_frames))
        if boundary_spec == "full":
            middle = n_frames // 2
            frames |= {f for f in (middle - 1, middle, middle + 1) if 0 <= f < n_frames}
        return tuple(sorted(frames))
    frames = tuple(sorted({int(f) for f in boundary_spec}))
    if frames and (frames[0] < 0 or frames[-1] >= n_frames):
        raise ConfigError(f"boundary frames {frames} outside 0..{n_frames - 1}")
    return frames


def _rank_limit(kind, x_train):
    n, p = x_train.shape
    return n - 1 if kind == KPLSR else min(n - 1, p)


def _is_constant(y_train):
    return np.ptp(y_train, axis=0).max() == 0


def _fit_largest(kind, x_train, y_train, top, ratio):
    """Fit at the largest component count up to `top` that the data supports"""
    m = min(top, _rank_limit(kind, x_train))
    while m >= 1:
        try:
            return fit_regressor(kind, x_train, y_train, m, ratio)
        except RankError as e:
            if e.component is None or e.component <= 1:
                raise
            m = min(m, e.component) - 1
    raise RankError(f"no feasible component count up to {top}", component=1)


def _sweep_matrices(x, y, kind, components, ratio):
    """
    LOOCV errors for every component count, fitting once per fold and truncating

    Returns:
    --------
    tuple : (errors ndarray (len(components), N), failures {(m, frame): message})
    """
    n = x.shape[0]
    errors = np.full((len(components), n), np.nan)
    failures = {}
    top = max(components)
    for i in range(n):
        train = np.delete(np.arange(n), i)
        x_train, y_train = x[train], y[train]
        if _is_constant(y_train):
            errors[:, i] = mean_distance_error(y_train[0], y[i])
            continue
        try:
            model = _fit_largest(kind, x_train, y_train, top, ratio)
        except (ShapeToolkitError, np.linalg.LinAlgError) as e:
            for m in components:
                failures[(m, i)] = str(e)
            continue
        for row, m in enumerate(components):
            if m > model.n_components:
                failures[(m, i)] = f"rank error at component {model.n_components + 1}"
                continue
            errors[row, i] = mean_distance_error(predict(model.truncate(m), x[i]), y[i])
    return errors, failures


def _select(x, y, cfg):
    """Grid search of (n_components, ratio) by mean LOOCV error"""
    best = None
    for ratio in cfg.ratios:
        errors, _ = _sweep_matrices(x, y, cfg.kind, cfg.components, ratio)
        with np.errstate(all="ignore"):
            means = np.array([np.nanmean(row) if np.any(np.isfinite(row)) else np.nan for row in errors])
        if not np.any(np.isfinite(means)):
            continue
        row = int(np.nanargmin(means))
        if best is None or means[row] < best[2]:
            best = (cfg.components[row], ratio, float(means[row]))
    if best is None:
        raise RankError(f"no component count in {cfg.components} could be fitted", component=min(cfg.components))
    return best


def select_components(ssm3d, ssm2d, cfg):
    """
    Component count (and Gaussian ratio) with the lowest mean LOOCV error

    Returns:
    --------
    tuple : (n_components, ratio, mean error)
    """
    x = flatten(ssm2d).values
    y = flatten(ssm3d).values
    return _select(x, y, cfg)


def _run_fold(i, x, y, cfg, keep_vertex_errors):
    n = x.shape[0]
    train = np.delete(np.arange(n), i)
    x_train, y_train = x[train], y[train]
    result = {"frame": i, "training_rows": x_train.shape[0]}

    if _is_constant(y_train):
        prediction = y_train.mean(axis=0)
        result["settings"] = {"n_components": 0, "ratio": None, "constant_target": True}
    else:
        m, ratio = cfg.n_components, cfg.ratio
        if cfg.component_mode == "per-frame" and m is None:
            if x_train.shape[0] < 3:
                raise ShapeError("per-frame selection needs at least 3 training frames")
            m, ratio, _ = _select(x_train, y_train, cfg)
        model = fit_regressor(cfg.kind, x_train, y_train, m, ratio)
        prediction = predict(model, x[i])
        result["settings"] = {"n_components": int(m), "ratio": ratio if cfg.kind == KPLSR else None}
        result["fit_seconds"] = model.info.get("fit_seconds")

    result["error"] = mean_distance_error(prediction, y[i])
    if keep_vertex_errors:
        result["vertex_errors"] = vertex_distances(prediction, y[i])
    return result


def _loocv_single(x, y, cfg, max_workers, keep_vertex_errors, progress):
    n = x.shape[0]
    if cfg.n_components is None and cfg.component_mode == "per-subject":
        m, ratio, score = _select(x, y, cfg)
        logger.info("%s: selected %d components (ratio %s), LOOCV mean %.4f mm", cfg.name, m, ratio, score)
        cfg = replace(cfg, n_components=m, ratio=ratio)

    errors = np.full(n, np.nan)
    settings = [None] * n
    failures = {}
    vertex_errors = np.full((n, y.shape[1] // 3), np.nan) if keep_vertex_errors else None
    fit_times = []

    with concurrent.futures.ThreadPoolExecutor(max_workers=max_workers) as executor:
        future_to_frame = {executor.submit(_run_fold, i, x, y, cfg, keep_vertex_errors): i for i in range(n)}
        with tqdm(total=n, desc=f"LOOCV {cfg.name}", disable=not progress, leave=False) as bar:
            for future in concurrent.futures.as_completed(future_to_frame):
                i = future_to_frame[future]
                bar.update(1)
                try:
                    result = future.result()
                except (ShapeToolkitError, np.linalg.LinAlgError) as e:
                    failures[i] = str(e)
                    logger.warning("%s: fold %d failed: %s", cfg.name, i, e)
                    continue
                if result["training_rows"] != n - 1:
                    raise ShapeError(f"fold {i} trained on {result['training_rows']} rows")
                errors[i] = result["error"]
                settings[i] = result["settings"]
                if result.get("fit_seconds") is not None:
                    fit_times.append(result["fit_seconds"])
                if keep_vertex_errors:
                    vertex_errors[i] = result["vertex_errors"]

    timing = {"fit_seconds_mean": float(np.mean(fit_times)) if fit_times else None}
    return errors, settings, failures, vertex_errors, timing


def loocv(ssm3d, ssm2d, regressor_cfg, boundary_spec="half", max_workers=None,
          keep_vertex_errors=False, progress=False):
    """
    Leave-one-out cross-validation over time frames

    Each frame in turn is held out: the regressor is trained on the other
    N - 1 synchronized (contour, mesh) pairs and predicts the held-out mesh
    from its contour. Fold failures are recorded and the run continues.

    Parameters:
    -----------
    ssm3d : ShapeSequence3D
    ssm2d : ContourSequence2D
    regressor_cfg : RegressorConfig or list of RegressorConfig
    boundary_spec : str or iterable of int
        See boundary_frames
    max_workers : int, optional
        Threads for independent folds
    keep_vertex_errors : bool
        Also keep per-vertex distances of every held-out prediction
    progress : bool
        Show a tqdm progress bar

    Returns:
    --------
    LoocvReport
    """
    n = ssm3d.n_frames
    if ssm2d.n_frames != n:
        raise ShapeError(f"sequences are not synchronized: {n} meshes vs {ssm2d.n_frames} contours")
    if n < 3:
        raise ShapeError(f"leave-one-out needs at least 3 frames, got {n}")
    configs = [regressor_cfg] if isinstance(regressor_cfg, RegressorConfig) else list(regressor_cfg)
    names = [c.name for c in configs]
    if len(set(names)) != len(names):
        raise ConfigError(f"regressor labels must be unique, got {names}")

    x = flatten(ssm2d).values
    y = flatten(ssm3d).values

    variations = np.full(n, np.nan)
    for t in range(1, n - 1):
        variations[t] = shape_variation(ssm3d, t)
    one_sided = {t: one_sided_variation(ssm3d, t) for t in sorted({0, n - 1})}

    report = LoocvReport(
        per_frame_errors={},
        shape_variations=variations,
        one_sided_variations=one_sided,
        config_used={},
        boundary_frames=boundary_frames(n, boundary_spec),
        info={"n_frames": n, "n_predictor": x.shape[1], "n_response": y.shape[1]},
    )
    for cfg in configs:
        errors, settings, failures, vertex_errors, timing = _loocv_single(
            x, y, cfg, max_workers, keep_vertex_errors, progress
        )
        report.per_frame_errors[cfg.name] = errors
        report.config_used[cfg.name] = settings
        report.failures[cfg.name] = failures
        report.timing[cfg.name] = timing
        if keep_vertex_errors:
            report.vertex_errors[cfg.name] = vertex_errors
        logger.info("%s: LOOCV mean error %.4f mm over %d frames (%d failed)",
                    cfg.name, np.nanmean(errors) if np.any(np.isfinite(errors)) else np.nan, n, len(failures))
    return report


def sweep_components(ssm3d, ssm2d, regressor_kind, components=None, ratio=1.0):
    """
    LOOCV error for every component count in a range

    Rank failures are recorded per cell; the rest of the grid completes.

    Returns:
    --------
    StudyGrid with axes ('n_components', 'frame'); info holds per-frame mean
    and standard deviation across component counts
    """
    if regressor_kind not in REGRESSOR_KINDS:
        raise ConfigError(f"unknown regressor '{regressor_kind}'")
    components = tuple(int(m) for m in (components or DEFAULT_COMPONENT_GRIDS[regressor_kind]))
    if not components or min(components) < 1:
        raise ConfigError(f"component range must be non-empty and >= 1, got {components}")
    if ssm2d.n_frames != ssm3d.n_frames:
        raise ShapeError("sequences are not synchronized")
    x = flatten(ssm2d).values
    y = flatten(ssm3d).values
    errors, failures = _sweep_matrices(x, y, regressor_kind, components, ratio)

    with np.errstate(all="ignore"):
        finite = np.isfinite(errors)
        counts = finite.sum(axis=0)
        mean = np.where(counts > 0, np.nansum(errors, axis=0) / np.maximum(counts, 1), np.nan)
        std = np.array([np.std(col[np.isfinite(col)]) if np.any(np.isfinite(col)) else np.nan
                        for col in errors.T])
    return StudyGrid(
        name=f"components-{regressor_kind}",
        axes={"n_components": list(components), "frame": list(range(x.shape[0]))},
        values=errors,
        failures=failures,
        info={"kind": regressor_kind, "ratio": ratio,
              "frame_mean": _nan_list(mean), "frame_std": _nan_list(std)},
    )


def deviation_study(ssm3d, plane, perturbations=None, numX=64, regressor_cfg=None, max_workers=None):
    """
    LOOCV with the 2D model rebuilt from deviated scan planes

    Parameters:
    -----------
    ssm3d : ShapeSequence3D
    plane : ScanPlane
        Optimal plane
    perturbations : list of PlanePerturbation or (rx, ry, tz), optional
        Defaults to the 13-plane deviation preset
    numX : int
    regressor_cfg : RegressorConfig

    Returns:
    --------
    StudyGrid with axes ('perturbation', 'frame'); info holds mean and std per perturbation
    """
    regressor_cfg = regressor_cfg or RegressorConfig()
    perturbations = [p if isinstance(p, PlanePerturbation) else PlanePerturbation(*p)
                     for p in (perturbations or DEVIATION_PRESET)]
    n = ssm3d.n_frames
    values = np.full((len(perturbations), n), np.nan)
    failures = {}
    summary = {}
    for row, deviation in enumerate(perturbations):
        deviated = plane if deviation.is_identity else perturb_plane(plane, deviation)
        try:
            contours = build_contour_sequence(ssm3d, deviated, numX, max_workers=max_workers)
        except NoIntersectionError as e:
            failures[(deviation.label,)] = str(e)
            logger.warning("Deviation %s skipped: %s", deviation.label, e)
            continue
        report = loocv(ssm3d, contours, regressor_cfg, max_workers=max_workers)
        values[row] = report.per_frame_errors[regressor_cfg.name]
        for frame, message in report.failures[regressor_cfg.name].items():
            failures[(deviation.label, frame)] = message
        summary[deviation.label] = {
            "mean": float(np.nanmean(values[row])),
            "std": float(np.nanstd(values[row])),
        }
    return StudyGrid(
        name="plane-deviation",
        axes={"perturbation": [p.label for p in perturbations], "frame": list(range(n))},
        values=values,
        failures=failures,
        info={"summary": summary, "regressor": regressor_cfg.name, "numX": numX},
    )


def registration_study(ssm3d, ssm2d, rigid_transform=None, regressor_cfgs=None, max_workers=None):
    """
    Paired LOOCV on the original and a rigidly transformed 2D model

    The same rigid transform is applied to every vertex of every contour
    frame, training and test alike.

    Returns:
    --------
    StudyGrid with axes ('regressor', 'variant', 'frame')
    """
    rigid_transform = rigid_transform or RigidTransform2D()
    configs = regressor_cfgs or [RegressorConfig(PLSR, n_components=2), RegressorConfig(KPLSR, n_components=5)]
    transformed = ssm2d.with_frames(np.stack([rigid_transform.apply(f) for f in ssm2d.frames]))
    original_report = loocv(ssm3d, ssm2d, configs, max_workers=max_workers)
    moved_report = loocv(ssm3d, transformed, configs, max_workers=max_workers)

    names = [c.name for c in configs]
    values = np.stack([
        np.stack([original_report.per_frame_errors[name], moved_report.per_frame_errors[name]])
        for name in names
    ])
    failures = {}
    for variant, report in (("original", original_report), ("transformed", moved_report)):
        for name in names:
            for frame, message in report.failures[name].items():
                failures[(name, variant, frame)] = message
    return StudyGrid(
        name="registration",
        axes={"regressor": names, "variant": ["original", "transformed"], "frame": list(range(ssm3d.n_frames))},
        values=values,
        failures=failures,
        info={"angle_deg": rigid_transform.angle_deg, "translation": list(rigid_transform.translation)},
    )


def boundary_analysis(report, boundary_spec=None):
    """
    Mean error on boundary versus interior frames, per regressor

    Parameters:
    -----------
    report : LoocvReport
    boundary_spec : str or iterable of int, optional
        Defaults to the report's own boundary frames

    Returns:
    --------
    dict : regressor -> {'boundary_mean', 'interior_mean', 'overall_mean', 'ratio', 'boundary_frames'}
    """
    n = report.n_frames
    flagged = report.boundary_frames if boundary_spec is None else boundary_frames(n, boundary_spec)
    mask = np.zeros(n, dtype=bool)
    mask[list(flagged)] = True

    def _mean(values):
        values = values[np.isfinite(values)]
        return float(values.mean()) if values.size else float("nan")

    summary = {}
    for name, errors in report.per_frame_errors.items():
        boundary_mean = _mean(errors[mask])
        interior_mean = _mean(errors[~mask])
        summary[name] = {
            "boundary_mean": boundary_mean,
            "interior_mean": interior_mean,
            "overall_mean": _mean(errors),
            "ratio": boundary_mean / interior_mean if interior_mean and np.isfinite(interior_mean) else float("nan"),
            "boundary_frames": list(flagged),
        }
    return summary


def informative_vertex_study(ssm3d, spca_cfg=None, numX=64, regressor_cfg=None, max_workers=None):
    """
    Compare scan planes placed from SPCA vertices and from thresholded PCA vertices

    Both selections keep the same number of vertices; each plane slices the
    sequence and is scored by LOOCV.

    Returns:
    --------
    dict : method -> {'n_vertices', 'plane', 'mean_error', 'errors'}
    """
    regressor_cfg = regressor_cfg or RegressorConfig()
    y_norm, _ = center_normalize(flatten(ssm3d), CENTER_AND_NORMALIZE)
    sparse = spca(y_norm, spca_cfg or SpcaConfig())
    sparse_contribution = vertex_contributions(sparse, 0)
    baseline = thresholded_pca_contributions(pca(y_norm), sparse_contribution.selected.size)
    mean_shape = ssm3d.frames.mean(axis=0)

    results = {}
    for method, contribution in (("spca", sparse_contribution), ("thresholded-pca", baseline)):
        entry = {"n_vertices": int(contribution.selected.size)}
        try:
            plane = fit_weighted_plane(mean_shape, contribution.contributions)
            contours = build_contour_sequence(ssm3d, plane, numX, max_workers=max_workers)
            report = loocv(ssm3d, contours, regressor_cfg, max_workers=max_workers)
        except ShapeToolkitError as e:
            logger.warning("Informative-vertex study, %s: %s", method, e)
            entry.update({"plane": None, "mean_error": float("nan"), "errors": None, "failure": str(e)})
        else:
            errors = report.per_frame_errors[regressor_cfg.name]
            entry.update({
                "plane": plane.to_dict(),
                "mean_error": float(np.nanmean(errors)),
                "errors": _nan_list(errors),
            })
        results[method] = entry
    return results
