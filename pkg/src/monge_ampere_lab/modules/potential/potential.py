"""
Brenier potentials as residual stacks.

psi_k(y) = c0 y^2 / 2 + sum_i eta_i Delta_i(y). A residual may depend on the
potential it was pushed onto (the analytic update reads psi_k' and psi_k'');
such residuals declare how many extra Taylor orders of their parent they
consume (`order_lift`), and evaluation walks the layers once, raising the
order of the base jet just enough for every layer above it.
"""
from abc import ABC, abstractmethod
from typing import Any, ClassVar, Optional, Sequence, Tuple
import numpy as np
from pydantic import Field
from helpers.errors import ArgumentError, NumericError, PotentialEvaluationError
from models.base_model import NumericModel
from modules.potential.jet import Jet, Jet3

DEFAULT_MAX_ORDER = 48


class EvaluationCounter:
    """Counts residual-layer evaluations performed by taylor_eval"""

    def __init__(self):
        self.layer_evaluations = 0


class ResidualFn(ABC):
    """A residual Delta pushed onto a potential stack

    Subclasses return the order-`order` Taylor jet of Delta at y. When
    `order_lift` > 0 they receive the parent potential's jet at order
    `order + order_lift`.
    """

    order_lift: ClassVar[int] = 0
    parent: Optional["PotentialStack"] = None

    @abstractmethod
    def taylor(self, y: np.ndarray, parent_jet: Optional[Jet], order: int) -> Jet: ...

    def evaluate(self, y, order: int = 3) -> Jet:
        y = np.asarray(y, dtype=float)
        parent_jet = None
        if self.parent is not None:
            parent_jet = taylor_eval(self.parent, y, order + self.order_lift)
        return self.taylor(y, parent_jet, order)

    def jet(self, y) -> Jet3:
        return self.evaluate(y, 3).to_jet3()


class ZeroResidual(ResidualFn):
    def taylor(self, y, parent_jet, order):
        return Jet.constant(np.zeros(np.shape(y)), order)


class PolynomialResidual(ResidualFn):
    """Delta(y) = sum_i a_i y^i"""

    def __init__(self, coefficients: Sequence[float]):
        self.coefficients = tuple(float(a) for a in coefficients)

    def taylor(self, y, parent_jet, order):
        return Jet.variable(y, order).polynomial(self.coefficients)


class SumResidual(ResidualFn):
    """Pointwise sum of residuals sharing a parent"""

    def __init__(self, parts: Sequence[ResidualFn]):
        self.parts = tuple(parts)
        parents = {id(p.parent) for p in self.parts if p.parent is not None}
        if len(parents) > 1:
            raise ArgumentError("summed residuals must share their parent potential")
        self.parent = next((p.parent for p in self.parts if p.parent is not None), None)
        self.order_lift = max((p.order_lift for p in self.parts), default=0)

    def taylor(self, y, parent_jet, order):
        total = Jet.constant(np.zeros(np.shape(y)), order)
        for part in self.parts:
            part_parent = None
            if parent_jet is not None:
                part_parent = parent_jet.truncate(order + part.order_lift)
            total = total + part.taylor(y, part_parent, order)
        return total


class Layer(NumericModel):
    eta: float = Field(gt=0)
    residual: Any
    # The stack this layer was pushed onto.
    base: Optional["PotentialStack"] = None


class PotentialStack(NumericModel):
    base_coefficient: float = Field(1.0, gt=0)
    layers: Tuple[Layer, ...] = ()
    grid: Optional[np.ndarray] = None
    convex_on_grid: Optional[bool] = None
    max_order: int = Field(DEFAULT_MAX_ORDER, ge=3)

    @classmethod
    def identity(cls, base_coefficient: float = 1.0, grid=None, **kwargs) -> "PotentialStack":
        stack = cls(base_coefficient=base_coefficient, **kwargs)
        return stack.with_grid(grid) if grid is not None else stack

    @property
    def depth(self) -> int:
        return len(self.layers)

    def with_grid(self, grid) -> "PotentialStack":
        grid = np.asarray(grid, dtype=float)
        margin = convexity_margin(self, grid)
        return self.model_copy(update={"grid": grid, "convex_on_grid": bool(margin > 0)})

    def required_order(self, order: int) -> int:
        return order + sum(layer.residual.order_lift for layer in self.layers)

    def derivatives(self, y, upto: int = 2) -> Tuple[np.ndarray, ...]:
        """psi and its derivatives up to `upto` at y, as plain arrays."""
        jet = taylor_eval(self, y, upto)
        return tuple(_plain(jet.derivative(j)) for j in range(upto + 1))

    def value(self, y):
        return self.derivatives(y, 0)[0]

    def gradient(self, y):
        return self.derivatives(y, 1)[1]

    def hessian(self, y):
        return self.derivatives(y, 2)[2]


Layer.model_rebuild()


def _plain(value: np.ndarray):
    return float(value) if np.ndim(value) == 0 else value


def _base_jet(c0: float, y: np.ndarray, order: int) -> Jet:
    coeffs = np.zeros((order + 1,) + y.shape)
    coeffs[0] = 0.5 * c0 * y**2
    if order >= 1:
        coeffs[1] = c0 * y
    if order >= 2:
        coeffs[2] = 0.5 * c0
    return Jet(coeffs)


def taylor_eval(
    stack: PotentialStack,
    y,
    order: int,
    counter: Optional[EvaluationCounter] = None,
) -> Jet:
    """
    Order-`order` Taylor jet of psi_k at y (scalar or array).

    Raises:
        PotentialEvaluationError: a layer returned a non-finite jet (carries the
            layer index), or the stack needs more Taylor orders than max_order.
    """
    y = np.asarray(y, dtype=float)
    lifts = [layer.residual.order_lift for layer in stack.layers]
    needed = [order] * (len(lifts) + 1)
    for i in range(len(lifts) - 1, -1, -1):
        needed[i] = needed[i + 1] + lifts[i]
    if needed[0] > stack.max_order:
        raise PotentialEvaluationError(
            f"evaluating {len(lifts)} layers needs Taylor order {needed[0]} "
            f"> max_order {stack.max_order}; distill residuals to flatten the stack"
        )

    psi = _base_jet(stack.base_coefficient, y, needed[0])
    for i, layer in enumerate(stack.layers):
        residual = layer.residual
        parent_jet = None
        if residual.order_lift > 0 or residual.parent is not None:
            if residual.parent is None or residual.parent is layer.base:
                parent_jet = psi
            else:
                parent_jet = taylor_eval(residual.parent, y, needed[i], counter)
        delta = residual.taylor(y, parent_jet, needed[i + 1])
        if counter is not None:
            counter.layer_evaluations += 1
        if not delta.isfinite():
            raise PotentialEvaluationError("non-finite residual jet", layer_index=i)
        psi = psi.truncate(needed[i + 1]) + layer.eta * delta
        if not psi.isfinite():
            raise PotentialEvaluationError("non-finite potential jet", layer_index=i)
    return psi


def jet_eval(stack: PotentialStack, y) -> Jet3:
    """(psi_k, psi_k', psi_k'', psi_k''') at y with chain-rule-exact derivatives."""
    y_arr = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y_arr)):
        raise ArgumentError("jet_eval needs finite evaluation points")
    return taylor_eval(stack, y_arr, 3).to_jet3()


def push_residual(stack: PotentialStack, delta: ResidualFn, eta: float) -> PotentialStack:
    """psi_{k+1} = psi_k + eta * Delta as a new stack; `stack` is left untouched."""
    if not np.isfinite(eta) or eta <= 0:
        raise ArgumentError(f"step size must be positive, got {eta!r}")
    layer = Layer(eta=float(eta), residual=delta, base=stack)
    pushed = stack.model_copy(update={"layers": stack.layers + (layer,), "convex_on_grid": None})
    if stack.grid is not None:
        pushed = pushed.with_grid(stack.grid)
    return pushed


def convexity_margin(stack: PotentialStack, grid) -> float:
    """min over the grid of psi_k''"""
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if grid.size == 0:
        raise ArgumentError("convexity margin needs a non-empty grid")
    return float(np.min(stack.hessian(grid)))


def invert_gradient(
    stack: PotentialStack,
    targets,
    lower: float = -8.0,
    upper: float = 8.0,
    table_points: int = 2001,
    tol: float = 1e-12,
    max_iter: int = 60,
    max_expansions: int = 30,
) -> np.ndarray:
    """
    Solves psi_k'(y) = x elementwise.

    psi_k' is tabulated on [lower, upper] (the interval doubles until it
    brackets every target), each target is bracketed by its table cell and
    then refined by Newton steps that fall back to bisection whenever they
    leave the bracket.

    Raises:
        NumericError: psi_k' is not increasing on the table, or no bracket
            contains a target
    """
    targets = np.asarray(targets, dtype=float)
    flat = targets.ravel()
    for _ in range(max_expansions):
        table_y = np.linspace(lower, upper, table_points)
        table_x = stack.gradient(table_y)
        if table_x[0] <= flat.min(initial=np.inf) and flat.max(initial=-np.inf) <= table_x[-1]:
            break
        width = upper - lower
        lower, upper = lower - width / 2, upper + width / 2
    else:
        raise NumericError("could not bracket the targets while inverting psi'")
    if np.any(np.diff(table_x) <= 0):
        raise NumericError("psi' is not strictly increasing on the inversion table")

    cell = np.clip(np.searchsorted(table_x, flat) - 1, 0, table_points - 2)
    lo, hi = table_y[cell], table_y[cell + 1]
    x_lo, x_hi = table_x[cell], table_x[cell + 1]
    y = lo + (flat - x_lo) * (hi - lo) / (x_hi - x_lo)
    for _ in range(max_iter):
        _, grad, hess = stack.derivatives(y, 2)
        residual = grad - flat
        lo = np.where(residual < 0, y, lo)
        hi = np.where(residual > 0, y, hi)
        step = residual / hess
        candidate = y - step
        outside = (candidate <= lo) | (candidate >= hi) | ~np.isfinite(candidate)
        candidate = np.where(outside, 0.5 * (lo + hi), candidate)
        done = np.max(np.abs(candidate - y), initial=0.0) <= tol * max(1.0, np.max(np.abs(y), initial=0.0))
        y = candidate
        if done:
            break
    return y.reshape(targets.shape)
