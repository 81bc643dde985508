from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple
import json
import yaml
from pydantic import Field, NonNegativeInt, PositiveFloat, PositiveInt, model_validator
from models.base.flow import FlowConfig, Learner
from models.base.quadrature import QuadratureSpec
from models.base.vi import VIConfig
from models.base_model import BaseConfigModel
from models.config_processor import deep_merge_dicts

SUBCOMMANDS = ("gaussian", "three-point", "sinkhorn-limit", "flow", "vi", "verify")
MAX_SEED = (1 << 64) - 1


def settings_key(subcommand: str) -> str:
    """Config section of a subcommand (`three-point` -> `three_point`)."""
    return {"sinkhorn-limit": "sinkhorn"}.get(subcommand, subcommand.replace("-", "_"))


class GaussianSettings(BaseConfigModel):
    lambda_: float = Field(0.5, alias="lambda", gt=0, le=1)
    eta: PositiveFloat = 0.2
    c0: PositiveFloat = 2.2
    upsilon: float = Field(0.9, gt=0)
    steps: PositiveInt = 100
    t_max: PositiveFloat = 5.0
    t_step: PositiveFloat = 0.1

    def execute(self, config: "RunConfig") -> int:
        from modules.commands.gaussian import cmd_gaussian

        return cmd_gaussian(config)


class ThreePointSettings(BaseConfigModel):
    trials: PositiveInt = 1000
    quad_trials: NonNegativeInt = 100
    sigma_range: Tuple[PositiveFloat, PositiveFloat] = (0.2, 5.0)
    quad_sigma_range: Tuple[PositiveFloat, PositiveFloat] = (0.5, 2.0)
    quad: QuadratureSpec = Field(default_factory=QuadratureSpec)

    def execute(self, config: "RunConfig") -> int:
        from modules.commands.three_point import cmd_three_point

        return cmd_three_point(config)


def _sinkhorn_quad() -> QuadratureSpec:
    return QuadratureSpec(nodes=64, panels=32, domain=(-8.0, 8.0))


class SinkhornSettings(BaseConfigModel):
    epsilons: List[PositiveFloat] = Field(default_factory=lambda: [0.2, 0.1, 0.05, 0.025])
    slope: PositiveFloat = 1.3
    probe_radius: PositiveFloat = 2.0
    probe_count: PositiveInt = 9
    tolerance: PositiveFloat = 1e-10
    quad: QuadratureSpec = Field(default_factory=_sinkhorn_quad)

    def execute(self, config: "RunConfig") -> int:
        from modules.commands.sinkhorn import cmd_sinkhorn_limit

        return cmd_sinkhorn_limit(config)


class FlowMode(Enum):
    ORACLE = "oracle"
    ORACLE_DISTILL = "oracle-distill"
    LOGISTIC = "logistic"
    SCORE = "score"
    BLOCKS = "blocks"

    def __str__(self):
        return self.value


_MODE_LEARNERS = {
    FlowMode.ORACLE: (Learner.ORACLE, False),
    FlowMode.ORACLE_DISTILL: (Learner.ORACLE, True),
    FlowMode.LOGISTIC: (Learner.LOGISTIC, True),
    FlowMode.SCORE: (Learner.SCORE, True),
    FlowMode.BLOCKS: (Learner.LOGISTIC, True),
}


class FlowSettings(FlowConfig):
    """FlowConfig plus what only the command needs; `mode` fixes learner and distillation."""

    mode: FlowMode = FlowMode.ORACLE_DISTILL
    target_equals_reference: bool = False
    probe_points: PositiveInt = 121
    histogram_bins: PositiveInt = 60
    histogram_samples: PositiveInt = 10000
    permutations: NonNegativeInt = 200
    measure_b0: bool = True
    dump_weights: bool = False

    def flow_config(self, seed: int, quad_nodes: Optional[int] = None) -> FlowConfig:
        learner, distill = _MODE_LEARNERS[self.mode]
        data = self.model_dump(include=set(FlowConfig.model_fields), by_alias=True)
        data.update(learner=learner, distill=distill, rng_seed=seed)
        if self.target_equals_reference:
            data["target"] = data["reference"]
        if self.mode is FlowMode.BLOCKS and self.block_size is None:
            data["block_size"] = 5
        if quad_nodes is not None:
            data["quad"] = {**data["quad"], "nodes": quad_nodes}
        return FlowConfig.model_validate(data)

    def execute(self, config: "RunConfig") -> int:
        from modules.commands.flow import cmd_flow

        return cmd_flow(config)


class VISettings(VIConfig):
    starts: List[Tuple[float, PositiveFloat]] = Field(default_factory=list)

    def vi_config(self, seed: int, quad_nodes: Optional[int] = None) -> VIConfig:
        data = self.model_dump(include=set(VIConfig.model_fields), by_alias=True)
        data["expectation"] = {**data["expectation"], "seed": seed}
        if quad_nodes is not None:
            data["expectation"]["nodes"] = quad_nodes
        return VIConfig.model_validate(data)

    def execute(self, config: "RunConfig") -> int:
        from modules.commands.vi import cmd_vi

        return cmd_vi(config)


class VerifySettings(BaseConfigModel):
    filter: Optional[str] = None
    full: bool = False

    def execute(self, config: "RunConfig") -> int:
        from modules.verify.checks import cmd_verify

        return cmd_verify(config)


class RunConfig(BaseConfigModel):
    subcommand: Literal["gaussian", "three-point", "sinkhorn-limit", "flow", "vi", "verify"]
    seed: int = Field(0, ge=0, le=MAX_SEED)
    output_dir: Path
    quad_nodes: Optional[int] = Field(None, ge=32)
    jobs: PositiveInt = 1

    gaussian: Optional[GaussianSettings] = None
    three_point: Optional[ThreePointSettings] = None
    sinkhorn: Optional[SinkhornSettings] = None
    flow: Optional[FlowSettings] = None
    vi: Optional[VISettings] = None
    verify: Optional[VerifySettings] = None

    @model_validator(mode="before")
    @classmethod
    def ensure_sections(cls, values):
        """Fills in the output directory and the settings section of the subcommand"""
        if not isinstance(values, dict):
            return values
        values = dict(values)
        subcommand = values.get("subcommand")
        if subcommand in SUBCOMMANDS:
            if not values.get("output_dir"):
                values["output_dir"] = f"outputs/{subcommand}"
            key = settings_key(subcommand)
            if values.get(key) is None:
                values[key] = {}
        return values

    @property
    def settings(self) -> BaseConfigModel:
        return getattr(self, settings_key(self.subcommand))

    @classmethod
    def from_yaml(cls, yaml_content: str, overrides: Optional[Dict[str, Any]] = None) -> "RunConfig":
        """Parses YAML (or JSON) content and merges `overrides` on top."""
        data = yaml.safe_load(yaml_content) or {}
        return cls.model_validate(deep_merge_dicts(data, overrides))

    @classmethod
    def from_file(cls, path: Optional[Path], overrides: Optional[Dict[str, Any]] = None) -> "RunConfig":
        if path is None:
            return cls.model_validate(deep_merge_dicts({}, overrides))
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Config file {path} does not exist")
        return cls.from_yaml(path.read_text(), overrides)

    def merge(self, overrides: Dict[str, Any]) -> "RunConfig":
        """Returns a new RunConfig with `overrides` deep-merged over this one."""
        data = json.loads(self.model_dump_json(by_alias=True))
        return RunConfig.model_validate(deep_merge_dicts(data, overrides))

    def _echo_data(self) -> dict:
        return json.loads(self.model_dump_json(by_alias=True, exclude_none=True))

    def dump_json(self, output_path: Optional[Path] = None) -> str:
        """Dump the resolved configuration to a JSON string or file."""
        json_str = json.dumps(self._echo_data(), indent=2) + "\n"
        if output_path:
            output_path.write_text(json_str)
        return json_str

    def dump_yaml(self, output_path: Optional[Path] = None) -> str:
        """Dump the resolved configuration to a YAML string or file."""
        yaml_str = yaml.dump(self._echo_data(), default_flow_style=False, sort_keys=False)
        if output_path:
            output_path.write_text(yaml_str)
        return yaml_str

    def echo(self) -> Path:
        """Writes config.json and config.yaml into the output directory."""
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.dump_json(self.output_dir / "config.json")
        self.dump_yaml(self.output_dir / "config.yaml")
        return self.output_dir
