from typing import Literal
from pydantic import Field, PositiveFloat
from models.base_model import NumericModel

CONTINUOUS_HEADER = ("t", "sigma_riccati", "sigma_fp", "ratio")
DISCRETE_HEADER = ("k", "c", "bound")
THREE_POINT_HEADER = ("trial", "lhs", "bg1", "bg2", "bgpi", "residual")
CONVEXITY_HEADER = ("trial", "kl", "bound", "gap")
SINKHORN_HEADER = ("epsilon", "max_residual")
SINKHORN_IDENTITY_HEADER = ("epsilon", "max_residual", "closed_form_gap")


class GaussianFlowParams(NumericModel):
    """Constants of an issued contraction certificate for the discrete slope map"""

    lambda_: float = Field(alias="lambda", gt=0, le=1)
    eta: PositiveFloat
    c0: PositiveFloat
    upsilon: float = Field(gt=0, lt=1)
    delta: PositiveFloat

    @property
    def fixed_point(self) -> float:
        return 1.0 / self.lambda_

    @property
    def basin(self) -> tuple[float, float]:
        """Interval every iterate c_k stays in."""
        return ((1 - self.upsilon) / (2 * self.eta), (1 + self.upsilon) / (2 * self.eta))

    def bound(self, k: int) -> float:
        return self.upsilon**k * abs(self.c0 - self.fixed_point)


class CertificateRejection(NumericModel):
    hypothesis: Literal["lambda", "eta", "upsilon", "delta", "c0"]
    detail: str


class GaussianTriple(NumericModel):
    """Standard deviations of e^{-g}, rho_1, rho_2 and pi (all centred)"""

    sigma_g: PositiveFloat
    sigma_1: PositiveFloat
    sigma_2: PositiveFloat
    sigma_pi: PositiveFloat


class ThreePointTerms(NumericModel):
    lhs: float
    bg_pi_rho1: float
    bg_pi_rho2: float
    bg_gpi: float

    @property
    def residual(self) -> float:
        return abs(self.lhs - (self.bg_pi_rho1 - self.bg_pi_rho2 + self.bg_gpi))
