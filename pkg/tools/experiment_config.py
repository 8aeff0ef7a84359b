"""
Experiment Config - Versioned JSON schema for reproducible runs

Validation goes through pydantic; any failure is re-raised as ConfigError
carrying the dotted path of the offending field.
"""

import hashlib
import json
from pathlib import Path
from typing import Annotated, Any, Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from dynamics.expansive import CurveSpec, ExpansiveSystem
from dynamics.heisenberg import DEFAULT_NILROTATION, NilRotation, fiber_section_cloud
from dynamics.measures import FunctionSpec, ParticleCloud, cloud_on_curve, cloud_on_graph, derive_seed, sample_haar
from dynamics.torus_skew import (
    DEFAULT_ALPHA,
    RotationSystem,
    SkewSystem,
    furstenberg_system,
    horizontal_cloud,
    motivating_system,
)
from utils.errors import ConfigError
from utils.logger import setup_logger

logger = setup_logger(__name__)

CONFIG_FORMAT = 1

ExperimentKind = Literal[
    "distance_profile",
    "cocycle_met",
    "heisenberg",
    "expansive_s",
    "coboundary",
    "example_5_5",
    "invariant_suite",
]

# which system types each experiment kind can run on
KIND_SYSTEMS: Dict[str, Tuple[str, ...]] = {
    "distance_profile": ("rotation", "skew", "expansive", "nilrotation"),
    "cocycle_met": ("skew",),
    "heisenberg": ("nilrotation",),
    "expansive_s": ("expansive",),
    "coboundary": ("expansive",),
    "example_5_5": ("expansive",),
    "invariant_suite": ("rotation", "skew", "expansive", "nilrotation"),
}


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class FunctionModel(_Strict):
    winding: int = 0
    harmonics: List[Tuple[Union[int, List[int]], float, float]] = Field(default_factory=list)
    arity: Optional[int] = None

    def to_spec(self, arity: Optional[int] = None) -> FunctionSpec:
        return FunctionSpec.from_dict(self.model_dump(), arity=arity)


class RotationModel(_Strict):
    type: Literal["rotation"]
    alpha: List[float] = Field(default_factory=lambda: [DEFAULT_ALPHA], min_length=1)


class SkewModel(_Strict):
    type: Literal["skew"]
    preset: Optional[Literal["motivating", "furstenberg"]] = None
    alpha: float = DEFAULT_ALPHA
    skews: List[FunctionModel] = Field(default_factory=list)
    windings: List[int] = Field(default_factory=list)
    amplitudes: Optional[List[float]] = None
    furstenberg: bool = False


class ExpansiveModel(_Strict):
    type: Literal["expansive"]
    alpha: float = DEFAULT_ALPHA
    p: int = 2
    f: FunctionModel = Field(default_factory=lambda: FunctionModel(winding=1))


class NilRotationModel(_Strict):
    type: Literal["nilrotation"]
    xu: float = DEFAULT_NILROTATION[0]
    yu: float = DEFAULT_NILROTATION[1]
    zu: float = DEFAULT_NILROTATION[2]


SystemModel = Annotated[
    Union[RotationModel, SkewModel, ExpansiveModel, NilRotationModel],
    Field(discriminator="type"),
]


class CloudModel(_Strict):
    constructor: Literal["haar", "horizontal", "curve", "graph", "fiber_section", "point_mass"] = "haar"
    size: int = Field(default=10_000, ge=1)
    mode: Literal["iid", "stratified"] = "stratified"
    seed: Optional[int] = None
    heights: Optional[List[float]] = None
    gamma: Optional[FunctionModel] = None
    curves: Optional[List[FunctionModel]] = None
    z0: float = 0.0
    point: Optional[List[float]] = None


class MetricModel(_Strict):
    K: Optional[int] = Field(default=None, ge=1)
    s: Optional[float] = Field(default=None, ge=0)
    family_size: int = Field(default=0, ge=0)
    family_seed: int = 0
    support: Optional[List[int]] = None


class ScheduleModel(_Strict):
    n_max: int = Field(default=100, ge=1)
    stride: int = Field(default=1, ge=1)
    times: Optional[List[int]] = None
    windows: Optional[List[int]] = None
    rotation_t: Optional[float] = None


class CocycleModel(_Strict):
    generator: Literal["derivative", "constant", "entrywise"] = "derivative"
    n_list: List[int] = Field(default_factory=lambda: [1_000, 10_000, 100_000])
    starts: int = Field(default=10, ge=1)
    haar_sample_size: int = Field(default=10_000, ge=100)
    constant: Optional[Dict[str, float]] = None
    entries: Optional[Dict[str, FunctionModel]] = None
    lemma_samples: int = Field(default=0, ge=0)
    lemma_max_dim: int = Field(default=5, ge=2)


class ExpansiveParams(_Strict):
    epsilon: float = Field(default=0.01, gt=0)
    epsilon_out: Optional[float] = Field(default=None, gt=0)
    grid_n: int = Field(default=10_000, ge=1000)
    n_trunc: int = Field(default=40, ge=1)
    curve: Optional[FunctionModel] = None
    coboundary_constant: float = 0.0
    extract_n: int = Field(default=25, ge=0)
    extract_bins: int = Field(default=200, ge=2)
    check_points: int = Field(default=1000, ge=1)
    check_n_max: int = Field(default=40, ge=0)


class InvariantParams(_Strict):
    rotation_steps: int = Field(default=1000, ge=1)
    rotation_size: int = Field(default=2000, ge=1)
    exact_samples: int = Field(default=50, ge=1)
    perturbation_samples: int = Field(default=50, ge=1)
    group_samples: int = Field(default=100, ge=1)


class CalibrationModel(_Strict):
    size: Optional[int] = Field(default=None, ge=1)
    repeats: Optional[int] = Field(default=None, ge=3)
    mode: Optional[Literal["iid", "stratified"]] = None


class ExperimentConfig(_Strict):
    format: Literal[1]
    name: str = "experiment"
    kind: ExperimentKind
    seed: int = 0
    system: SystemModel
    cloud: CloudModel = Field(default_factory=CloudModel)
    metric: MetricModel = Field(default_factory=MetricModel)
    schedule: ScheduleModel = Field(default_factory=ScheduleModel)
    cocycle: CocycleModel = Field(default_factory=CocycleModel)
    expansive: ExpansiveParams = Field(default_factory=ExpansiveParams)
    invariants: InvariantParams = Field(default_factory=InvariantParams)
    calibration: CalibrationModel = Field(default_factory=CalibrationModel)
    checks: Dict[str, float] = Field(default_factory=dict)

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()

    def role_seed(self, role: str) -> int:
        """Independent seed per logical role (cloud, family, ...) derived from the master seed."""
        return derive_seed(self.seed, role)


def _field_path(loc: Tuple[Any, ...]) -> str:
    return ".".join(str(part) for part in loc)


def parse_experiment_config(data: Dict[str, Any]) -> ExperimentConfig:
    """
    Validate a config dictionary

    Raises:
        ConfigError: naming the first offending field path
    """
    try:
        config = ExperimentConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        path = _field_path(first["loc"])
        raise ConfigError(first["msg"], field_path=path) from e

    allowed = KIND_SYSTEMS[config.kind]
    if config.system.type not in allowed:
        raise ConfigError(
            f"kind '{config.kind}' needs one of {list(allowed)}, got '{config.system.type}'",
            field_path="system.type",
        )
    return config


def load_experiment_config(path: Union[str, Path]) -> ExperimentConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise ConfigError(f"Config file not found: {path}", field_path="") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e.msg} at line {e.lineno})", field_path="") from e
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object", field_path="")
    config = parse_experiment_config(data)
    logger.info(f"Loaded experiment '{config.name}' ({config.kind}) from {path}")
    return config


# --- builders ---------------------------------------------------------------


def resolve_metric(config: ExperimentConfig, settings, dim: int) -> Dict[str, Any]:
    """Metric parameters with per-dimension defaults from the settings filling the gaps."""
    defaults = settings.metric_defaults(dim)
    metric = config.metric
    return {
        "K": metric.K if metric.K is not None else int(defaults["K"]),
        "s": metric.s if metric.s is not None else float(defaults["s"]),
        "family_size": metric.family_size,
        "family_seed": metric.family_seed if metric.family_seed else config.role_seed("family"),
        "support": metric.support,
    }


def build_system(model: SystemModel):
    """
    Instantiate the dynamical system a config describes

    Library-level ValueErrors (rational alpha, arity mismatch, |p| < 2) are
    reported as ConfigErrors against the system section.
    """
    try:
        if model.type == "rotation":
            return RotationSystem(tuple(model.alpha))
        if model.type == "skew":
            if model.preset == "motivating":
                return motivating_system(model.alpha)
            if model.preset == "furstenberg":
                return furstenberg_system(model.windings, model.alpha, model.amplitudes)
            skews = tuple(f.to_spec(arity=k + 1) for k, f in enumerate(model.skews))
            return SkewSystem(model.alpha, skews, model.furstenberg)
        if model.type == "expansive":
            return ExpansiveSystem(model.alpha, model.p, model.f.to_spec(arity=1))
        return NilRotation(model.xu, model.yu, model.zu)
    except ValueError as e:
        raise ConfigError(str(e), field_path="system") from e


def build_cloud(config: ExperimentConfig, system, curve: Optional[CurveSpec] = None) -> ParticleCloud:
    """
    The initial cloud; seeds come from the 'cloud' role unless given explicitly

    ``curve`` overrides the configured gamma for curve clouds (used when an
    experiment constructs its own curve).
    """
    spec = config.cloud
    seed = spec.seed if spec.seed is not None else config.role_seed("cloud")
    try:
        if spec.constructor == "haar":
            return sample_haar(system.space, spec.size, seed, spec.mode)
        if spec.constructor == "horizontal":
            return horizontal_cloud(system.space.dim, spec.size, spec.heights, seed, spec.mode)
        if spec.constructor == "curve":
            gamma = curve.gamma if curve is not None else (spec.gamma or FunctionModel()).to_spec(arity=1)
            return cloud_on_curve(gamma, spec.size, seed, spec.mode)
        if spec.constructor == "graph":
            curves = [f.to_spec(arity=1) for f in spec.curves or []]
            return cloud_on_graph(curves, spec.size, seed, spec.mode)
        if spec.constructor == "fiber_section":
            return fiber_section_cloud(spec.z0, spec.size, seed)
        if spec.point is None:
            raise ValueError("point_mass needs 'point'")
        return ParticleCloud.point_mass(spec.point, system.space)
    except ValueError as e:
        raise ConfigError(str(e), field_path="cloud") from e
