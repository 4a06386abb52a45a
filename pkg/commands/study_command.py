"""
Study command
Runs the selected validation studies and writes JSON, CSV and HTML reports
"""

import logging
from functools import cached_property

import numpy as np
import pandas as pd

from commands.common import load_contours, load_meshes, load_plane, resolve_config, write_report
from pipeline_config import STUDIES
from tools.regress import KPLSR, PLSR
from tools.scanplane import build_contour_sequence, optimal_scan_plane
from tools.validate import (
    boundary_analysis, deviation_study, informative_vertex_study, loocv, registration_study, sweep_components,
)
from utils import (
    create_boundary_figure, create_contribution_figure, create_deviation_figure, create_error_figure,
    create_informative_figure, create_registration_figure, create_sweep_figure,
)

logger = logging.getLogger(__name__)

# Exit status when a study produced no usable result at all
HARD_FAILURE = 4


def _all_failed(values):
    return not np.any(np.isfinite(np.asarray(values, dtype=float)))


class StudyInputs:
    """
    Lazily resolved inputs shared by the studies of one run

    The plane and contours come from the config when given and are derived
    from the mesh sequence otherwise.
    """

    def __init__(self, cfg):
        self.cfg = cfg

    @cached_property
    def meshes(self):
        return load_meshes(self.cfg, allow_phantom=True)

    @cached_property
    def plane(self):
        if self.cfg.raw["inputs"].get("plane"):
            return load_plane(self.cfg)
        plane, _, _ = optimal_scan_plane(self.meshes, self.cfg.spca_config())
        logger.info("Using the optimal scan plane through %d informative vertices", plane.info["n_informative"])
        return plane

    @cached_property
    def contours(self):
        if self.cfg.raw["inputs"].get("contour_manifest"):
            return load_contours(self.cfg)
        return build_contour_sequence(self.meshes, self.plane, self.cfg.numx, max_workers=self.cfg.max_workers)

    @cached_property
    def loocv_report(self):
        validation = self.cfg.raw["validation"]
        return loocv(
            self.meshes,
            self.contours,
            [self.cfg.regressor_config(PLSR), self.cfg.regressor_config(KPLSR)],
            boundary_spec=validation["boundary"],
            max_workers=self.cfg.max_workers,
            keep_vertex_errors=bool(validation["keep_vertex_errors"]),
            progress=True,
        )


def run_loocv(cfg, inputs):
    report = inputs.loocv_report
    figures = [create_error_figure(report)]
    mean_shape = inputs.meshes.frames.mean(axis=0)
    for name, errors in report.vertex_errors.items():
        figures.append(create_contribution_figure(
            mean_shape, inputs.meshes.connectivity, np.nanmean(errors, axis=0),
            title=f"Per-vertex LOOCV error ({name})", colorbar_title="mm",
        ))
    write_report(cfg, "loocv", report.to_dict(include_timing=cfg.timing), report.to_frame(), figures,
                 plot_type="Leave-one-out cross-validation")
    for name in report.regressors:
        print(f"  {name}: mean error {report.mean_error(name):.4f} mm "
              f"({len(report.failures[name])} failed folds)")
    return any(_all_failed(errors) for errors in report.per_frame_errors.values())


def run_boundary(cfg, inputs):
    summary = boundary_analysis(inputs.loocv_report)
    table = pd.DataFrame.from_dict(summary, orient="index").rename_axis("regressor").reset_index()
    table["boundary_frames"] = table["boundary_frames"].apply(lambda frames: " ".join(str(f) for f in frames))
    write_report(cfg, "boundary", {"summary": summary}, table, [create_boundary_figure(summary)],
                 plot_type="Boundary time frames")
    for name, entry in summary.items():
        print(f"  {name}: boundary {entry['boundary_mean']:.4f} mm, interior {entry['interior_mean']:.4f} mm")
    return any(_all_failed([entry["overall_mean"]]) for entry in summary.values())


def run_components(cfg, inputs):
    ratio = float(cfg.raw["regressor"]["ratio"])
    grids = [sweep_components(inputs.meshes, inputs.contours, kind, cfg.component_grid(kind), ratio)
             for kind in (PLSR, KPLSR)]
    table = pd.concat([grid.to_frame().assign(kind=grid.info["kind"]) for grid in grids], ignore_index=True)
    write_report(cfg, "components", {"grids": [grid.to_dict() for grid in grids]}, table,
                 [create_sweep_figure(grids)], plot_type="Component sweep")
    return any(_all_failed(grid.values) for grid in grids)


def run_deviation(cfg, inputs):
    grid = deviation_study(inputs.meshes, inputs.plane, cfg.perturbations(), cfg.numx,
                           cfg.regressor_config(), max_workers=cfg.max_workers)
    write_report(cfg, "deviation", grid.to_dict(), grid.to_frame(), [create_deviation_figure(grid)],
                 plot_type="Scan plane deviation")
    for label, entry in grid.info["summary"].items():
        print(f"  {label}: {entry['mean']:.4f} +- {entry['std']:.4f} mm")
    return _all_failed(grid.values)


def run_registration(cfg, inputs):
    counts = cfg.raw["studies"]["registration_components"]
    configs = [cfg.regressor_config(kind, n_components=int(counts[kind])) for kind in (PLSR, KPLSR)]
    grid = registration_study(inputs.meshes, inputs.contours, cfg.rigid_transform(), configs,
                              max_workers=cfg.max_workers)
    write_report(cfg, "registration", grid.to_dict(), grid.to_frame(), [create_registration_figure(grid)],
                 plot_type="Rigid transform of the 2D model")
    return _all_failed(grid.values)


def run_informative(cfg, inputs):
    results = informative_vertex_study(inputs.meshes, cfg.spca_config(), cfg.numx, cfg.regressor_config(),
                                       max_workers=cfg.max_workers)
    table = pd.DataFrame([
        {"method": method, "n_vertices": entry["n_vertices"], "mean_error": entry["mean_error"]}
        for method, entry in results.items()
    ])
    write_report(cfg, "informative-vertices", {"results": results}, table, [create_informative_figure(results)],
                 plot_type="Informative vertex selection")
    for method, entry in results.items():
        print(f"  {method}: {entry['n_vertices']} vertices, mean error {entry['mean_error']:.4f} mm")
    return all(_all_failed([entry["mean_error"]]) for entry in results.values())


STUDY_RUNNERS = {
    "loocv": run_loocv,
    "components": run_components,
    "deviation": run_deviation,
    "registration": run_registration,
    "boundary": run_boundary,
    "informative-vertices": run_informative,
}


def cmd_study(args):
    """Run the configured studies in order; exit 4 if any of them failed outright"""
    cfg = resolve_config(args)
    selected = list(args.studies) if getattr(args, "studies", None) else cfg.studies
    if not selected:
        print("No studies selected; nothing to do (set studies.selected or pass --study)")
        return 0

    inputs = StudyInputs(cfg)
    failed = []
    for name in selected:
        print(f"Running {name} study")
        if STUDY_RUNNERS[name](cfg, inputs):
            logger.error("Study %s produced no usable result", name)
            failed.append(name)
    if failed:
        print(f"Hard failures in: {', '.join(failed)}")
        return HARD_FAILURE
    return 0


def register_study_command(subparsers):
    parser = subparsers.add_parser("study", help="run validation studies")
    parser.add_argument("--study", dest="studies", action="append", choices=STUDIES,
                        help="study to run (repeatable); defaults to studies.selected")
    parser.add_argument("--meshes", help="mesh-sequence manifest; a phantom is generated when absent")
    parser.add_argument("--contours", help="contour-sequence manifest; built from the plane when absent")
    parser.add_argument("--plane", help="plane JSON; the optimal plane is computed when absent")
    parser.set_defaults(func=cmd_study)
    return parser
