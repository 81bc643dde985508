from enum import Enum
from typing import Literal, Optional
from pydantic import Field, NonNegativeInt, PositiveFloat, PositiveInt
from models.base_model import BaseConfigModel, NumericModel

VI_TRACE_HEADER = ("k", "m", "s", "eta", "err1", "err2")
VI_SWEEP_HEADER = ("start",) + VI_TRACE_HEADER


class ExpectationMode(Enum):
    EXACT = "exact"
    MC = "mc"

    def __str__(self):
        return self.value


class ExpectationSpec(BaseConfigModel):
    """Gauss-Hermite (exact) or seeded Monte Carlo expectations over N(0, 1)"""

    mode: ExpectationMode = ExpectationMode.EXACT
    nodes: int = Field(64, ge=2)
    sample_count: PositiveInt = 1000
    seed: NonNegativeInt = 0


class VIState(NumericModel):
    m: float
    s: PositiveFloat
    k: NonNegativeInt = 0


class VIRecord(NumericModel):
    state: VIState
    err1: float
    err2: float
    eta: float

    def row(self) -> tuple:
        return (self.state.k, self.state.m, self.state.s, self.eta, self.err1, self.err2)


class VIConfig(BaseConfigModel):
    target: Literal["logistic", "gaussian"] = "logistic"
    location: float = 0.0
    lambda_: PositiveFloat = Field(1.0, alias="lambda")
    m0: float = 10.0
    s0: PositiveFloat = 1.0
    T: NonNegativeInt = 50
    eta: Optional[PositiveFloat] = None
    expectation: ExpectationSpec = Field(default_factory=ExpectationSpec)
