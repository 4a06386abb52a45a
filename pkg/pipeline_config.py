"""
Pipeline configuration for the shape instantiation toolkit
Loads a JSON or YAML config, fills missing sections from the defaults and
applies command-line overrides
"""

import copy
import json
import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path

import yaml

from tools.errors import ConfigError
from tools.phantom import PhantomSpec
from tools.regress import KPLSR, REGRESSOR_KINDS
from tools.scanplane import DEVIATION_PRESET, PlanePerturbation
from tools.spca import SpcaConfig
from tools.validate import DEFAULT_RATIO_GRID, RegressorConfig, RigidTransform2D

logger = logging.getLogger(__name__)

CONFIG_VERSION = 1
STUDIES = ("loocv", "components", "deviation", "registration", "boundary", "informative-vertices")

# Subcommand flags that point at input files
INPUT_FLAGS = {"meshes": "mesh_manifest", "contours": "contour_manifest", "plane": "plane", "model": "model"}

# Default configuration
DEFAULT_CONFIG = {
    "version": CONFIG_VERSION,
    "seed": 0,
    "inputs": {
        "mesh_manifest": None,
        "contour_manifest": None,
        "plane": None,
        "model": None,
    },
    "phantom": {
        "base_shape": "ellipsoid",
        "n_frames": 20,
        "n_vertices": 1000,
        "deformation": "sinusoidal-radial",
        "amplitude": 7.0,
        "cycle": "half",
        "semi_axes": [60.0, 40.0, 30.0],
        "bump_scale": 0.05,
        "band_center": 0.3,
        "band_width": 0.1,
        "band_phase_lag": 0.1,
        "band_lobes": 7,
        "cap_start": 0.35,
    },
    "spca": {
        "k": 1,
        "ridge_lambda": 1e-4,
        "l1_penalty": None,
        "nonzero_target": None,
        "sparsity_fraction": 0.075,
        "max_iter": 200,
        "tol": 1e-6,
    },
    "plane": {
        "perturbation": [0.0, 0.0, 0.0],
    },
    "slice": {
        "numx": 64,
    },
    "regressor": {
        "kind": KPLSR,
        "components": None,
        "ratio": 1.0,
        "plsr_components": list(range(1, 9)),
        "kplsr_components": list(range(1, 19)),
        "ratio_grid": list(DEFAULT_RATIO_GRID),
        "component_mode": "per-subject",
    },
    "validation": {
        "boundary": "half",
        "max_workers": None,
        "keep_vertex_errors": False,
    },
    "studies": {
        "selected": [],
        "perturbations": [list(p) for p in DEVIATION_PRESET],
        "rigid_transform": {"angle_deg": 30.0, "translation": [40.0, -25.0]},
        "registration_components": {"plsr": 2, "kplsr": 5},
    },
    "output": {
        "directory": "results",
        "html_report": True,
        "timing": True,
    },
}


def _merge(defaults, overrides, path=""):
    """Recursively overlay overrides on defaults, rejecting unknown keys"""
    merged = copy.deepcopy(defaults)
    for key, value in overrides.items():
        where = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(f"unknown config key '{where}'")
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key '{where}' must be a mapping")
            merged[key] = _merge(defaults[key], value, where)
        else:
            merged[key] = value
    return merged


def load_config(config_path=None):
    """
    Load a pipeline config or return the defaults

    Parameters:
    -----------
    config_path : str or Path, optional
        JSON or YAML document with a 'version' field

    Returns:
    --------
    dict : complete config with every default section present
    """
    if config_path is None:
        return copy.deepcopy(DEFAULT_CONFIG)

    config_path = Path(config_path)
    if not config_path.exists():
        raise ConfigError(f"config file {config_path} does not exist")
    try:
        with open(config_path, "r") as f:
            document = yaml.safe_load(f)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        where = f" at line {mark.line + 1}" if mark is not None else ""
        raise ConfigError(f"cannot parse {config_path}{where}: {e}")

    if document is None:
        document = {}
    if not isinstance(document, dict):
        raise ConfigError(f"{config_path} must contain a mapping at the top level")
    version = document.get("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {version!r}, expected {CONFIG_VERSION}")

    config = _merge(DEFAULT_CONFIG, document)
    logger.info("Loaded config from %s", config_path)
    return config


def parse_components(text):
    """'5' -> 5, '1-8' -> (1, ..., 8), '2,4,6' -> (2, 4, 6)"""
    text = str(text).strip()
    try:
        if "-" in text:
            low, high = (int(v) for v in text.split("-", 1))
            if low < 1 or high < low:
                raise ConfigError(f"invalid component range '{text}'")
            return tuple(range(low, high + 1))
        if "," in text:
            return tuple(int(v) for v in text.split(","))
        return int(text)
    except ValueError:
        raise ConfigError(f"invalid --components value '{text}'")


def parse_ratio(text):
    """'1.0' -> 1.0, '0.1,1,10' -> (0.1, 1.0, 10.0)"""
    try:
        values = tuple(float(v) for v in str(text).split(","))
    except ValueError:
        raise ConfigError(f"invalid --ratio value '{text}'")
    if any(v <= 0 for v in values):
        raise ConfigError("Gaussian ratios must be > 0")
    return values[0] if len(values) == 1 else values


def apply_overrides(config, args):
    """Apply command-line flags on top of a loaded config"""
    config = copy.deepcopy(config)
    if getattr(args, "seed", None) is not None:
        config["seed"] = int(args.seed)
    if getattr(args, "regressor", None) is not None:
        config["regressor"]["kind"] = args.regressor
    if getattr(args, "components", None) is not None:
        components = parse_components(args.components)
        if isinstance(components, int):
            config["regressor"]["components"] = components
        else:
            config["regressor"]["components"] = None
            config["regressor"][f"{config['regressor']['kind']}_components"] = list(components)
    if getattr(args, "ratio", None) is not None:
        ratio = parse_ratio(args.ratio)
        if isinstance(ratio, tuple):
            config["regressor"]["ratio_grid"] = list(ratio)
        else:
            config["regressor"]["ratio"] = ratio
            config["regressor"]["ratio_grid"] = None
    if getattr(args, "numx", None) is not None:
        config["slice"]["numx"] = int(args.numx)
    if getattr(args, "out", None) is not None:
        config["output"]["directory"] = str(args.out)
    if getattr(args, "no_timing", False):
        config["output"]["timing"] = False
    for flag, key in INPUT_FLAGS.items():
        if getattr(args, flag, None) is not None:
            config["inputs"][key] = str(getattr(args, flag))
    return config


def config_digest(config):
    """SHA-256 of the canonical JSON form of a config, output location excluded"""
    relevant = {k: v for k, v in config.items() if k != "output"}
    canonical = json.dumps(relevant, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _component_grid(value):
    if value is None:
        return None
    return tuple(int(v) for v in value)


@dataclass(frozen=True)
class PipelineConfig:
    """Typed view of a merged config dict"""
    raw: dict

    def __post_init__(self):
        regressor = self.raw["regressor"]
        if regressor["kind"] not in REGRESSOR_KINDS:
            raise ConfigError(f"unknown regressor '{regressor['kind']}'")
        if int(self.raw["slice"]["numx"]) < 3:
            raise ConfigError(f"numx must be >= 3, got {self.raw['slice']['numx']}")
        for study in self.studies:
            if study not in STUDIES:
                raise ConfigError(f"unknown study '{study}', expected some of {STUDIES}")
        for key in ("plsr_components", "kplsr_components"):
            grid = regressor.get(key)
            if grid is not None and len(grid) == 0:
                raise ConfigError(f"regressor.{key} is empty")

    @classmethod
    def from_dict(cls, config):
        return cls(_merge(DEFAULT_CONFIG, config))

    @property
    def seed(self):
        return int(self.raw["seed"])

    @property
    def numx(self):
        return int(self.raw["slice"]["numx"])

    @property
    def studies(self):
        return list(self.raw["studies"]["selected"] or [])

    @property
    def output_dir(self):
        return Path(self.raw["output"]["directory"])

    @property
    def timing(self):
        return bool(self.raw["output"]["timing"])

    @property
    def html_report(self):
        return bool(self.raw["output"]["html_report"])

    @property
    def max_workers(self):
        return self.raw["validation"]["max_workers"]

    @property
    def digest(self):
        return config_digest(self.raw)

    def require_path(self, key):
        """Existing input path from the inputs section"""
        value = self.raw["inputs"].get(key)
        if not value:
            raise ConfigError(f"inputs.{key} is required for this command")
        path = Path(value)
        if not path.exists():
            raise ConfigError(f"inputs.{key} points to missing file {path}")
        return path

    def phantom_spec(self):
        section = dict(self.raw["phantom"])
        section["semi_axes"] = tuple(section["semi_axes"])
        try:
            return PhantomSpec(seed=self.seed, **section)
        except TypeError as e:
            raise ConfigError(f"invalid phantom section: {e}")

    def spca_config(self):
        return SpcaConfig(**self.raw["spca"])

    def perturbation(self):
        return PlanePerturbation(*self.raw["plane"]["perturbation"])

    def perturbations(self):
        return [PlanePerturbation(*p) for p in self.raw["studies"]["perturbations"]]

    def rigid_transform(self):
        section = self.raw["studies"]["rigid_transform"]
        return RigidTransform2D(float(section["angle_deg"]), tuple(section["translation"]))

    def component_grid(self, kind):
        return _component_grid(self.raw["regressor"].get(f"{kind}_components"))

    def regressor_config(self, kind=None, n_components=None):
        section = self.raw["regressor"]
        kind = kind or section["kind"]
        ratio_grid = section.get("ratio_grid")
        return RegressorConfig(
            kind=kind,
            n_components=n_components if n_components is not None else section["components"],
            ratio=float(section["ratio"]),
            component_grid=self.component_grid(kind),
            ratio_grid=tuple(ratio_grid) if ratio_grid else None,
            component_mode=section["component_mode"],
        )
