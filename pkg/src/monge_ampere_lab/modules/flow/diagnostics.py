"""
Per-iterate diagnostics of the flow.

Everything is computed in reference coordinates y: with x = psi_k'(y) the
model density satisfies log rho_k(x) = -g(y) - log psi_k''(y), so KL and B_G
need no density inversion except for the map z = (psi_k')^{-1}(psi_star'(y)).
"""
from typing import Callable, Optional, Sequence, Tuple, Union
import numpy as np
from helpers.errors import ConvexityError
from models.base.flow import AverageIterateBound, FlowTrace, RegretReport
from models.base.quadrature import QuadratureSpec
from modules.divergence.density import Density1D
from modules.flow.targets import Target1D
from modules.potential.potential import PotentialStack, invert_gradient, taylor_eval


class TransportMap:
    """
    Composition of potential gradients, y -> psi_n' o ... o psi_1'(y).

    A single stage is the usual flow map; block-refreshed runs chain one
    stage per block.
    """

    def __init__(self, stages: Sequence[PotentialStack]):
        self.stages = tuple(stages)

    def __call__(self, y) -> np.ndarray:
        x = np.asarray(y, dtype=float)
        for stage in self.stages:
            x = stage.gradient(x)
        return x

    def value_and_slope(self, y) -> Tuple[np.ndarray, np.ndarray]:
        x = np.asarray(y, dtype=float)
        slope = np.ones_like(x)
        for stage in self.stages:
            _, grad, hess = stage.derivatives(x, 2)
            slope = slope * hess
            x = grad
        return x, slope

    def inverse(self, x) -> np.ndarray:
        y = np.asarray(x, dtype=float)
        for stage in reversed(self.stages):
            y = invert_gradient(stage, y)
        return y


def as_transport(psi: Union[PotentialStack, TransportMap]) -> TransportMap:
    return psi if isinstance(psi, TransportMap) else TransportMap([psi])


def reference_weights(reference: Target1D, quad: QuadratureSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Quadrature nodes y and weights of E_{Y ~ e^{-g}}."""
    y = quad.points
    return y, quad.weights * reference.density(y)


def _require_positive(slope: np.ndarray, y: np.ndarray, weight: np.ndarray) -> None:
    bad = (slope <= 0) & (weight > 0)
    if np.any(bad):
        raise ConvexityError("transport map is not increasing on the quadrature domain", y=float(y[bad][0]))


def model_kl(
    psi: Union[PotentialStack, TransportMap],
    target: Target1D,
    reference: Target1D,
    quad: QuadratureSpec,
) -> float:
    """KL(rho_k | e^{-f}) = E_g[ f(T(Y)) - g(Y) - log T'(Y) ] for the model map T."""
    y, weight = reference_weights(reference, quad)
    x, slope = as_transport(psi).value_and_slope(y)
    _require_positive(slope, y, weight)
    integrand = target.neg_log_density(x) - reference.neg_log_density(y) - np.log(slope)
    return float(np.dot(weight, integrand))


def bregman_bg_potential(
    psi: PotentialStack,
    optimal: Callable[[np.ndarray], np.ndarray],
    reference: Target1D,
    quad: QuadratureSpec,
) -> float:
    """
    B_G(e^{-f} | rho_k) = E_g[ psi_k(Y) - psi_k(Z) - T*(Y) (Y - Z) ], Z = (psi_k')^{-1}(T*(Y)).

    Uses the stack's own values, so no antiderivative is needed.
    """
    y, weight = reference_weights(reference, quad)
    mapped = optimal(y)
    z = invert_gradient(psi, mapped)
    gap = psi.value(y) - psi.value(z) - mapped * (y - z)
    return float(np.dot(weight, gap))


def transport_density(transport: TransportMap, reference: Target1D, tail: float = 1e-12) -> Density1D:
    """Density1D of T_# e^{-g} for a composed map."""
    lo, hi = reference.quantile(np.array([tail, 1.0 - tail]))

    def log_density(x):
        y = transport.inverse(x)
        _, slope = transport.value_and_slope(y)
        return reference.log_density(y) - np.log(slope)

    return Density1D(
        log_density=log_density,
        cdf=lambda x: reference.cdf(transport.inverse(x)),
        quantile=lambda u: transport(reference.quantile(u)),
        support_hint=(float(transport(lo)), float(transport(hi))),
        name=f"pushforward(stages={len(transport.stages)})",
    )


def sup_map_error(psi: Union[PotentialStack, TransportMap], optimal_on_grid: np.ndarray, grid) -> float:
    return float(np.max(np.abs(as_transport(psi)(grid) - optimal_on_grid)))


def xi_field(psi: PotentialStack, target: Target1D, g_ref: Target1D, y) -> np.ndarray:
    """
    xi_k(y) = d/dy[(f + log rho_k)(psi_k'(y))] = psi_k'' f'(psi_k') - g'(y) - psi_k'''/psi_k''.

    Equals -Delta_k'(y) for the analytic residual.

    Raises:
        ConvexityError: psi_k'' <= 0 at some y
    """
    y = np.asarray(y, dtype=float)
    jet = taylor_eval(psi, y, 3)
    grad, hess, third = jet.derivative(1), jet.derivative(2), jet.derivative(3)
    if np.any(hess <= 0):
        bad = np.atleast_1d(y)[np.atleast_1d(hess) <= 0][0]
        raise ConvexityError("xi needs psi'' > 0", y=float(bad))
    value = hess * target.d1(grad) - g_ref.d1(y) - third / hess
    return float(value) if np.ndim(value) == 0 else value


def xi_norm_sq(psi: PotentialStack, target: Target1D, g_ref: Target1D, quad: QuadratureSpec) -> float:
    """int xi_k^2 against e^{-g}"""
    y, weight = reference_weights(g_ref, quad)
    xi = xi_field(psi, target, g_ref, y)
    return float(np.dot(weight, xi * xi))


def hypothesis_constants(
    psi: PotentialStack, target: Target1D, reference: Target1D, grid, quad: QuadratureSpec
) -> Tuple[float, float, float]:
    """(min psi'' on grid, max psi'' on grid, int xi^2 e^{-g})"""
    hess = psi.hessian(np.asarray(grid, dtype=float))
    return float(np.min(hess)), float(np.max(hess)), xi_norm_sq(psi, target, reference, quad)


def expected_increment(
    before: PotentialStack, after: PotentialStack, reference: Target1D, quad: QuadratureSpec
) -> float:
    """E_g[psi_{k+1} - psi_k]"""
    y, weight = reference_weights(reference, quad)
    return float(np.dot(weight, after.value(y) - before.value(y)))


def identity_residual(increment: float, eta: float, kl: float) -> float:
    """|E_g[psi_{k+1} - psi_k] + eta KL(rho_k | e^{-f})|"""
    return abs(increment + eta * kl)


def pushforward_samples(
    psi: Union[PotentialStack, TransportMap], reference: Target1D, n: int, rng: np.random.Generator
) -> np.ndarray:
    return as_transport(psi)(reference.sample(n, rng))


def regret_report(trace: FlowTrace, comparator_kl: float = 0.0) -> RegretReport:
    """sum_k (KL_k - comparator_kl) over the step records"""
    per_step = [record.kl - comparator_kl for record in trace.steps]
    return RegretReport(regret_sum=float(np.sum(per_step)), per_step=per_step)


def average_iterate_bound(
    trace: FlowTrace,
    target: Target1D,
    reference: Target1D,
    quad: QuadratureSpec,
    x_quad: Optional[QuadratureSpec] = None,
) -> AverageIterateBound:
    """
    KL of the eta-weighted mixture of rho_0..rho_{T-1} against S_T^{-1} E_g[psi_0 - psi_T].

    The mixture density is evaluated in x by inverting every psi_k'.
    """
    x_quad = x_quad or quad
    etas = np.array([record.eta for record in trace.steps])
    stacks = trace.stacks[: etas.size + 1]
    total = float(etas.sum())
    x, w = x_quad.points, x_quad.weights
    mixture = np.zeros_like(x)
    for eta, stack in zip(etas, stacks[:-1]):
        y = invert_gradient(stack, x)
        mixture += eta * reference.density(y) / stack.hessian(y)
    mixture /= total
    positive = mixture > 0
    kl = float(np.dot(w[positive], mixture[positive] * (np.log(mixture[positive]) + target.neg_log_density(x[positive]))))
    bound = expected_increment(stacks[-1], stacks[0], reference, quad) / total
    return AverageIterateBound(kl_average=kl, bound=bound)
