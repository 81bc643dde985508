"""
Divergences between one-dimensional densities.

Brenier maps are monotone rearrangements (quantile o cdf), so KL, W2 and the
Bregman divergence B_G of G(rho) = W2^2(rho, e^{-g}) / 2 reduce to 1D
quadratures.
"""
from typing import Callable
import numpy as np
from scipy.integrate import simpson
from scipy.special import ndtr
from helpers.errors import NumericError
from logger.logger import logger
from models.base.gaussian import ThreePointTerms
from models.base.quadrature import QuadratureSpec
from modules.divergence.density import Density1D
from modules.flow.targets import Target1D
from modules.potential.potential import PotentialStack

_TOP = np.nextafter(1.0, 0.0)
_TINY = np.finfo(float).tiny
KL_FLOOR = -1e-9


def _clip_unit(u: np.ndarray) -> np.ndarray:
    return np.clip(u, _TINY, _TOP)


def kl_quadrature(rho: Density1D, pi: Density1D, quad: QuadratureSpec) -> float:
    """
    KL(rho | pi) = int rho log(rho / pi) over the quadrature domain.

    Raises:
        NumericError: rho has mass where pi underflows
    """
    x, w = quad.points, quad.weights
    log_rho = rho.log_density(x)
    log_pi = pi.log_density(x)
    mass = np.exp(log_rho)
    mismatch = (mass * w > 1e-300) & ~np.isfinite(log_pi)
    if np.any(mismatch):
        raise NumericError(f"{rho.name} has mass where {pi.name} vanishes (x={x[mismatch][0]!r})")
    integrand = np.where(mass > 0, mass * (log_rho - log_pi), 0.0)
    value = float(np.dot(w, integrand))
    if KL_FLOOR <= value < 0:
        value = 0.0
    return value


def brenier_map_1d(source: Density1D, target: Density1D) -> Callable[[np.ndarray], np.ndarray]:
    """T = Q_target o F_source, the monotone map pushing source to target."""

    def transport(y):
        return target.quantile(_clip_unit(source.cdf(np.asarray(y, dtype=float))))

    return transport


def antiderivative(fn: Callable, points, anchor: float = 0.0, nodes: int = 201) -> np.ndarray:
    """int_anchor^p fn(s) ds for each p, by composite Simpson on `nodes` points."""
    points = np.asarray(points, dtype=float)
    t = np.linspace(0.0, 1.0, nodes)
    path = anchor + (points.ravel()[:, None] - anchor) * t[None, :]
    values = fn(path.ravel()).reshape(path.shape)
    integral = simpson(values, x=t, axis=1) * (points.ravel() - anchor)
    return integral.reshape(points.shape)


def bregman_bg(
    rho2: Density1D,
    rho1: Density1D,
    g_ref: Density1D,
    quad: QuadratureSpec,
    anchor: float = 0.0,
) -> float:
    """
    B_G(rho2 | rho1) = E_g[ phi_1(T2(Y)) + psi_1(Y) - Y T2(Y) ].

    T_i maps e^{-g} to rho_i, psi_1 is the Simpson antiderivative of T1 from
    `anchor` and phi_1(x) = x z - psi_1(z) with z = T1^{-1}(x) = Q_g(F_rho1(x)).
    Changing the anchor shifts psi_1 and phi_1 by opposite constants.
    """
    y, w = quad.points, quad.weights
    weight = w * g_ref.density(y)
    t1 = brenier_map_1d(g_ref, rho1)
    t2 = brenier_map_1d(g_ref, rho2)(y)
    z = g_ref.quantile(_clip_unit(rho1.cdf(t2)))
    if not np.all(np.isfinite(z)):
        raise NumericError("could not invert the Brenier map of rho1")
    psi_y = antiderivative(t1, y, anchor)
    psi_z = antiderivative(t1, z, anchor)
    conjugate = t2 * z - psi_z
    value = float(np.dot(weight, conjugate + psi_y - y * t2))
    logger.debug(f"B_G({rho2.name} | {rho1.name}) = {value:.6e}")
    return value


def w2_1d(rho: Density1D, pi: Density1D, quad: QuadratureSpec) -> float:
    """
    W2 = (int_0^1 (Q_rho(u) - Q_pi(u))^2 du)^{1/2}, with u = Phi(t) so the
    quadrature runs over standard normal t.
    """
    t, weight = standard_normal_nodes(quad)
    u = _clip_unit(ndtr(t))
    gap = rho.quantile(u) - pi.quantile(u)
    value = float(np.dot(weight, gap * gap))
    if not np.isfinite(value):
        raise NumericError("quantile evaluation failed while computing W2")
    return float(np.sqrt(max(value, 0.0)))


def relative_convexity_gap(
    pi: Density1D,
    rho: Density1D,
    g_ref: Density1D,
    lambda_g: float,
    beta: float,
    quad: QuadratureSpec,
) -> float:
    """KL(pi | rho) - (lambda_g / beta) B_G(pi | rho)"""
    return kl_quadrature(pi, rho, quad) - (lambda_g / beta) * bregman_bg(pi, rho, g_ref, quad)


def linearized_wasserstein(
    psi1: PotentialStack, psi2: PotentialStack, reference: Target1D, quad: QuadratureSpec
) -> float:
    """int (psi2' - psi1')^2 / psi1'' e^{-g}: second-order surrogate of B_G between the two pushforwards."""
    y, w = quad.points, quad.weights
    _, grad1, hess1 = psi1.derivatives(y, 2)
    grad2 = psi2.gradient(y)
    weight = w * reference.density(y)
    return float(np.dot(weight, (grad2 - grad1) ** 2 / hess1))


def standard_normal_nodes(quad: QuadratureSpec) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature nodes and N(0, 1)-weighted weights on the quadrature domain."""
    t, w = quad.points, quad.weights
    return t, w * np.exp(-0.5 * t * t) / np.sqrt(2.0 * np.pi)



def pullback_density(pi: Density1D, rho: Density1D, g_ref: Density1D) -> Density1D:
    """
    (T^{-1})_# pi for the Brenier map T from e^{-g} to rho.

    T'(y) = e^{-g(y)} / rho(T(y)), so log density = log pi(T y) - g(y) - log rho(T y).
    """
    forward = brenier_map_1d(g_ref, rho)
    backward = brenier_map_1d(rho, g_ref)

    def log_density(y):
        x = forward(y)
        return pi.log_density(x) + g_ref.log_density(y) - rho.log_density(x)

    lo, hi = pi.support_hint
    return Density1D(
        log_density=log_density,
        cdf=lambda y: pi.cdf(forward(y)),
        quantile=lambda u: backward(pi.quantile(u)),
        support_hint=(float(backward(np.array(lo))), float(backward(np.array(hi)))),
        name=f"pullback({pi.name} by {rho.name})",
    )


def three_point_quadrature(
    pi: Density1D, rho1: Density1D, rho2: Density1D, g_ref: Density1D, quad: QuadratureSpec
) -> ThreePointTerms:
    """
    Every term of the three-point identity by quadrature:

        int (psi_2 - psi_1)(pi_1 - e^{-g}) = B_G(pi|rho1) - B_G(pi|rho2) + B_{G_pi}(pi_1|pi_2)

    with psi_i the Brenier potential from e^{-g} to rho_i and pi_i the pullback
    of pi along it; B_{G_pi} uses pi as the reference measure.
    """
    y, w = quad.points, quad.weights
    pi1 = pullback_density(pi, rho1, g_ref)
    pi2 = pullback_density(pi, rho2, g_ref)
    psi1 = antiderivative(brenier_map_1d(g_ref, rho1), y)
    psi2 = antiderivative(brenier_map_1d(g_ref, rho2), y)
    lhs = float(np.dot(w, (psi2 - psi1) * (pi1.density(y) - g_ref.density(y))))
    return ThreePointTerms(
        lhs=lhs,
        bg_pi_rho1=bregman_bg(pi, rho1, g_ref, quad),
        bg_pi_rho2=bregman_bg(pi, rho2, g_ref, quad),
        bg_gpi=bregman_bg(pi1, pi2, pi, quad),
    )
