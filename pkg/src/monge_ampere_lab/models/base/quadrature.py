from functools import cached_property
from typing import Tuple
import numpy as np
from pydantic import Field, model_validator
from models.base_model import NumericModel


class QuadratureSpec(NumericModel):
    """Composite Gauss-Legendre rule on a finite interval

    `nodes` is the node count per panel; the interval is split into `panels`
    equal panels.
    """

    nodes: int = Field(64, ge=32)
    panels: int = Field(8, ge=1)
    domain: Tuple[float, float] = (-8.0, 8.0)

    @model_validator(mode="after")
    def check_domain(self):
        lower, upper = self.domain
        if not np.isfinite(lower) or not np.isfinite(upper) or upper <= lower:
            raise ValueError(f"invalid quadrature domain {self.domain}")
        return self

    @cached_property
    def rule(self) -> Tuple[np.ndarray, np.ndarray]:
        base_x, base_w = np.polynomial.legendre.leggauss(self.nodes)
        lower, upper = self.domain
        edges = np.linspace(lower, upper, self.panels + 1)
        half = 0.5 * (edges[1:] - edges[:-1])
        mid = 0.5 * (edges[1:] + edges[:-1])
        x = (mid[:, None] + half[:, None] * base_x[None, :]).ravel()
        w = (half[:, None] * base_w[None, :]).ravel()
        x.setflags(write=False)
        w.setflags(write=False)
        return x, w

    @property
    def points(self) -> np.ndarray:
        return self.rule[0]

    @property
    def weights(self) -> np.ndarray:
        return self.rule[1]

    def covers(self, interval: Tuple[float, float]) -> bool:
        return self.domain[0] <= interval[0] and interval[1] <= self.domain[1]

    def integrate(self, values: np.ndarray) -> float:
        return float(np.dot(self.weights, values))


class GridSpec(NumericModel):
    """Equispaced grid, by default the 1000 points on [-3, 3] used for step sizes"""

    lower: float = -3.0
    upper: float = 3.0
    points: int = Field(1000, ge=1)

    @model_validator(mode="after")
    def check_bounds(self):
        if self.points > 1 and self.upper <= self.lower:
            raise ValueError("grid upper bound must exceed lower bound")
        return self

    @cached_property
    def values(self) -> np.ndarray:
        grid = np.linspace(self.lower, self.upper, self.points)
        grid.setflags(write=False)
        return grid
