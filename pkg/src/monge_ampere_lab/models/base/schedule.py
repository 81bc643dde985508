"""
Step-size schedules for the flow
"""
from enum import Enum
from typing import Annotated, Literal, Union
import numpy as np
from pydantic import Field, PositiveFloat, PositiveInt
from models.base_model import BaseConfigModel


class AdaptiveMode(Enum):
    MIN = "min"
    PAPER_MAX = "paper-max"

    def __str__(self):
        return self.value


class ConstantSchedule(BaseConfigModel):
    kind: Literal["constant"] = "constant"
    eta: PositiveFloat = 0.1

    def eta_at(self, k: int) -> float:
        return self.eta


class InverseSqrtTSchedule(BaseConfigModel):
    """eta_k = T^{-1/2} for a horizon T"""

    kind: Literal["inverse-sqrt-t"] = "inverse-sqrt-t"
    T: PositiveInt

    def eta_at(self, k: int) -> float:
        return float(self.T**-0.5)


class LogarithmicSchedule(BaseConfigModel):
    """eta_k = M / ((k + 1) lambda)"""

    kind: Literal["logarithmic"] = "logarithmic"
    lambda_: PositiveFloat = Field(1.0, alias="lambda")
    M: PositiveFloat = 1.0

    def eta_at(self, k: int) -> float:
        return self.M / ((k + 1) * self.lambda_)


class LastIterateSchedule(BaseConfigModel):
    """
    eta_k = C M B0 log T / (lambda T).

    B0 is B_G(e^{-f} | rho_0); the flow command measures it on the initial
    iterate when it is not given.
    """

    kind: Literal["last-iterate"] = "last-iterate"
    C: PositiveFloat = 1.0
    M: PositiveFloat = 1.0
    lambda_: PositiveFloat = Field(1.0, alias="lambda")
    B0: PositiveFloat = 1.0
    T: int = Field(2, ge=2)

    def eta_at(self, k: int) -> float:
        return self.C * self.M * self.B0 * float(np.log(self.T)) / (self.lambda_ * self.T)


class AdaptiveSchedule(BaseConfigModel):
    """Step sizes read off the flow grid that keep psi'' positive there (mode min)"""

    kind: Literal["adaptive"] = "adaptive"
    floor: PositiveFloat = 0.4
    safety: float = Field(0.5, gt=0, lt=1)
    mode: AdaptiveMode = AdaptiveMode.MIN

    def eta_at(self, k: int) -> float:
        raise TypeError("adaptive step sizes depend on the residual; use adaptive_step")


StepSchedule = Annotated[
    Union[
        ConstantSchedule,
        InverseSqrtTSchedule,
        LogarithmicSchedule,
        LastIterateSchedule,
        AdaptiveSchedule,
    ],
    Field(discriminator="kind"),
]
