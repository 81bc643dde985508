from enum import Enum
from typing import Any, List, Literal, Optional, Tuple
from pydantic import Field, NonNegativeInt, PositiveFloat, PositiveInt
from models.base_model import BaseConfigModel, NumericModel
from models.base.quadrature import GridSpec, QuadratureSpec
from models.base.schedule import AdaptiveSchedule, StepSchedule
from models.base.student import StudentConfig

TRACE_HEADER = ("k", "eta", "kl", "bg", "min_hess", "sup_map_err", "mmd", "avg_identity_residual")
CONSTANTS_HEADER = ("k", "min_hess", "max_hess", "xi_norm_sq")
PROFILE_HEADER = ("k", "y", "psi_prime", "psi_double_prime")
DISTILL_HEADER = ("k", "loss")


class Learner(Enum):
    ORACLE = "oracle"
    LOGISTIC = "logistic"
    SCORE = "score"

    def __str__(self):
        return self.value


class TargetSpec(BaseConfigModel):
    kind: Literal["gaussian", "mixture", "logistic"] = "mixture"
    mean: float = 0.0
    std: PositiveFloat = 1.0
    means: Tuple[float, float] = (2.0, -2.0)
    weight: float = Field(0.5, gt=0, lt=1)
    location: float = 0.0


def standard_normal_spec() -> TargetSpec:
    return TargetSpec(kind="gaussian", mean=0.0, std=1.0)


class FlowConfig(BaseConfigModel):
    target: TargetSpec = Field(default_factory=TargetSpec)
    reference: TargetSpec = Field(default_factory=standard_normal_spec)
    schedule: StepSchedule = Field(default_factory=AdaptiveSchedule)
    T: PositiveInt = 10
    grid: GridSpec = Field(default_factory=GridSpec)
    quad: QuadratureSpec = Field(default_factory=QuadratureSpec)
    learner: Learner = Learner.ORACLE
    distill: bool = True
    student: StudentConfig = Field(default_factory=StudentConfig)
    distill_samples: PositiveInt = 500
    distill_domain: Tuple[float, float] = (-3.0, 3.0)
    sample_count: PositiveInt = 10000
    mmd_samples: NonNegativeInt = 0
    mmd_bandwidth: Optional[PositiveFloat] = None
    profile_points: NonNegativeInt = 0
    block_size: Optional[PositiveInt] = None
    base_coefficient: PositiveFloat = 1.0
    max_order: int = Field(48, ge=3)
    strict_monotone: bool = False
    rng_seed: NonNegativeInt = 0


class FlowRecord(NumericModel):
    k: NonNegativeInt
    eta: float
    kl: float
    bg: float
    min_hess: float
    sup_map_err: float
    mmd: Optional[float] = None
    avg_identity_residual: float = 0.0

    def row(self) -> tuple:
        return (
            self.k,
            self.eta,
            self.kl,
            self.bg,
            self.min_hess,
            self.sup_map_err,
            self.mmd,
            self.avg_identity_residual,
        )


class FlowTrace(NumericModel):
    """
    Records k = 0..T-1 describe rho_k and the step taken from it; the last
    record describes the final iterate and has eta = 0.
    """

    records: List[FlowRecord] = Field(default_factory=list)
    constants: List[tuple] = Field(default_factory=list)
    profiles: List[tuple] = Field(default_factory=list)
    distill_losses: List[tuple] = Field(default_factory=list)
    stacks: List[Any] = Field(default_factory=list, exclude=True)
    # y -> x map of the last iterate (composed across blocks)
    final_map: Optional[Any] = Field(None, exclude=True)
    failure: Optional[str] = None

    @property
    def complete(self) -> bool:
        return self.failure is None

    @property
    def steps(self) -> List[FlowRecord]:
        return [r for r in self.records if r.eta > 0]

    @property
    def final(self) -> Optional[FlowRecord]:
        return self.records[-1] if self.records else None

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.records]


class RegretReport(NumericModel):
    regret_sum: float
    per_step: List[float]


class AverageIterateBound(NumericModel):
    kl_average: float
    bound: float

    @property
    def slack(self) -> float:
        return self.bound - self.kl_average
