"""
Scaling limit of one entropic (Sinkhorn) potential update.

For a convex potential psi the update

    V(y) = eps log int [ e^{xy/eps} / int e^{(xy' - psi(y'))/eps - g(y')} dy' ] e^{-f(x)} dx

satisfies (V - psi)/eps -> -f(psi') + g + log psi'' as eps -> 0. Both
integrals are evaluated with the composite Gauss-Legendre rule in log space.
"""
from typing import Optional, Sequence
import numpy as np
from scipy.special import logsumexp
from helpers.errors import ArgumentError, NumericError
from logger.logger import logger
from models.base.quadrature import QuadratureSpec
from modules.flow.targets import Target1D
from modules.potential.potential import PotentialStack

DEFAULT_PROBES = np.linspace(-2.0, 2.0, 9)


def sinkhorn_update(
    psi: PotentialStack,
    epsilon: float,
    f: Target1D,
    g: Target1D,
    quad: QuadratureSpec,
    probes: np.ndarray,
    tolerance: float = 1e-10,
) -> np.ndarray:
    """
    V(y) at the probe points.

    Raises:
        NumericError: the integrands still carry more than `tolerance` of
            their mass at the ends of the quadrature domain
    """
    nodes, weights = quad.points, quad.weights
    log_w = np.log(weights)
    psi_nodes = psi.value(nodes)

    # inner(x) = log int exp((x y' - psi(y'))/eps - g(y')) dy', rows x, columns y'
    inner_terms = (
        np.outer(nodes, nodes) - psi_nodes[None, :]
    ) / epsilon - g.neg_log_density(nodes)[None, :] + log_w[None, :]
    inner = logsumexp(inner_terms, axis=1)

    # outer(y) = log int exp(x y / eps - inner(x) - f(x)) dx
    outer_base = -inner - f.neg_log_density(nodes) + log_w
    outer_terms = np.outer(probes, nodes) / epsilon + outer_base[None, :]
    outer = logsumexp(outer_terms, axis=1)

    tail_outer = np.exp(np.maximum(outer_terms[:, 0], outer_terms[:, -1]) - outer)
    share = np.exp(outer_terms - outer[:, None]).max(axis=0)
    tail_inner = np.exp(np.maximum(inner_terms[:, 0], inner_terms[:, -1]) - inner) * share
    tail = float(max(tail_outer.max(), tail_inner.max()))
    if not np.isfinite(tail) or tail > tolerance:
        raise NumericError(
            f"quadrature domain {quad.domain} truncates {tail:.3e} of the integrand mass at eps={epsilon}"
        )
    return epsilon * outer


def sinkhorn_residual(
    psi: PotentialStack,
    epsilon: float,
    f: Target1D,
    g: Target1D,
    quad: QuadratureSpec,
    probes: Optional[Sequence[float]] = None,
    tolerance: float = 1e-10,
) -> float:
    """max over probes of |(V(y) - psi(y))/eps - (-f(psi'(y)) + g(y) + log psi''(y))|"""
    if not epsilon > 0:
        raise ArgumentError(f"epsilon must be positive, got {epsilon!r}")
    return float(np.max(np.abs(sinkhorn_residual_profile(psi, epsilon, f, g, quad, probes, tolerance))))


def sinkhorn_residual_profile(
    psi: PotentialStack,
    epsilon: float,
    f: Target1D,
    g: Target1D,
    quad: QuadratureSpec,
    probes: Optional[Sequence[float]] = None,
    tolerance: float = 1e-10,
) -> np.ndarray:
    """Signed residual at each probe."""
    probes = DEFAULT_PROBES if probes is None else np.asarray(probes, dtype=float)
    value, grad, hess = psi.derivatives(probes, 2)
    if np.any(hess <= 0):
        raise ArgumentError("the Sinkhorn limit needs a strictly convex potential")
    updated = sinkhorn_update(psi, epsilon, f, g, quad, probes, tolerance)
    drift = -f.neg_log_density(grad) + g.neg_log_density(probes) + np.log(hess)
    residual = (updated - value) / epsilon - drift
    logger.debug(f"Sinkhorn residual at eps={epsilon}: max {np.max(np.abs(residual)):.3e}")
    return residual


def identity_residual_closed_form(epsilon: float, y) -> np.ndarray:
    """
    Exact residual for psi = y^2/2 and f = g = N(0, 1).

    It is O(eps), not zero: the entropic update blurs the identity map.
    """
    y = np.asarray(y, dtype=float)
    spread = 1.0 + epsilon + epsilon**2
    return 0.5 * np.log((1.0 + epsilon) ** 2 / spread) - 0.5 * y**2 * epsilon / spread
