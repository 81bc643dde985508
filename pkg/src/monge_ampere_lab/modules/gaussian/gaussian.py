"""
Closed-form univariate Gaussian dynamics.

The continuous flow started at N(0, lambda^2) towards N(0, 1) keeps linear
maps, and its slope solves a Riccati equation; the discrete flow iterates the
slope map c -> c - eta (c^2 - 1/lambda^2). Independent ODE integrators ship
next to the closed forms.
"""
from typing import Iterator, Sequence, Tuple, Union
import numpy as np
from helpers.errors import ArgumentError
from logger.logger import logger
from models.base.gaussian import (
    CertificateRejection,
    GaussianFlowParams,
    GaussianTriple,
    ThreePointTerms,
)

ArrayLike = Union[float, np.ndarray]


def _check_times(t: ArrayLike) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or not np.all(np.isfinite(t)):
        raise ArgumentError("times must be finite and non-negative")
    return t


def _plain(value):
    return float(value) if np.ndim(value) == 0 else value


def riccati_sigma(t: ArrayLike, lambda_: float) -> ArrayLike:
    """
    sigma_t = tanh(t / lambda + artanh(lambda)).

    Raises:
        ArgumentError: lambda outside (0, 1), or negative t. lambda = 1 is the
            fixed point sigma = 1 and is handled by `riccati_path`.
    """
    t = _check_times(t)
    if not 0 < lambda_ < 1:
        raise ArgumentError(f"riccati_sigma needs 0 < lambda < 1, got {lambda_!r}")
    return _plain(np.tanh(t / lambda_ + np.arctanh(lambda_)))


def riccati_path(t: ArrayLike, lambda_: float) -> ArrayLike:
    """riccati_sigma extended to lambda = 1, where the reference already is the target."""
    if lambda_ == 1:
        t = _check_times(t)
        return _plain(np.ones_like(t))
    return riccati_sigma(t, lambda_)


def _rk4(rhs, y0: float, times: Sequence[float], step: float) -> np.ndarray:
    times = _check_times(times)
    order = np.argsort(times, kind="stable")
    out = np.empty_like(times)
    y, now = float(y0), 0.0
    for idx in order:
        end = times[idx]
        while now < end:
            h = min(step, end - now)
            k1 = rhs(y)
            k2 = rhs(y + 0.5 * h * k1)
            k3 = rhs(y + 0.5 * h * k2)
            k4 = rhs(y + h * k3)
            y += h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
            now += h
        out[idx] = y
    return out


def riccati_sigma_rk4(times: ArrayLike, lambda_: float, step: float = 1e-4) -> ArrayLike:
    """sigma_t = lambda c_t with c' = -c^2 + 1/lambda^2, c_0 = 1, by classical RK4."""
    if not 0 < lambda_ <= 1:
        raise ArgumentError(f"lambda must lie in (0, 1], got {lambda_!r}")
    inv_sq = 1.0 / lambda_**2
    c = _rk4(lambda c: -c * c + inv_sq, 1.0, np.atleast_1d(times), step)
    return _plain(lambda_ * c if np.ndim(times) else lambda_ * c[0])


def fokker_planck_sigma_sq(t: ArrayLike, lambda_: float) -> ArrayLike:
    """Variance of the Ornstein-Uhlenbeck flow started at N(0, lambda^2)."""
    t = _check_times(t)
    return _plain(1.0 - (1.0 - lambda_**2) * np.exp(-2.0 * t))


def fokker_planck_sigma_sq_euler(times: ArrayLike, lambda_: float, step: float = 1e-4) -> ArrayLike:
    """Explicit Euler integration of v' = 2 - 2v, v_0 = lambda^2."""
    times = np.atleast_1d(_check_times(times))
    order = np.argsort(times, kind="stable")
    out = np.empty_like(times)
    v, now = lambda_**2, 0.0
    for idx in order:
        end = times[idx]
        while now < end:
            h = min(step, end - now)
            v += h * (2.0 - 2.0 * v)
            now += h
        out[idx] = v
    return _plain(out if out.size > 1 else out[0])


def variance_ratio(t: ArrayLike, lambda_: float) -> ArrayLike:
    """(1 - sigma_F,t^2) / (1 - sigma_t^2), with 1 - tanh^2 taken as sech^2 so large t stays accurate."""
    t = _check_times(t)
    if not 0 < lambda_ < 1:
        raise ArgumentError(f"variance_ratio needs 0 < lambda < 1, got {lambda_!r}")
    argument = t / lambda_ + np.arctanh(lambda_)
    numerator = (1.0 - lambda_**2) * np.exp(-2.0 * t)
    with np.errstate(over="ignore"):
        return _plain(numerator * np.cosh(argument) ** 2)


def discrete_gaussian_step(c: ArrayLike, eta: float, lambda_: float) -> ArrayLike:
    return c - eta * (c * c - 1.0 / lambda_**2)


def contraction_certificate(
    lambda_: float, eta: float, c0: float, upsilon: float
) -> Union[GaussianFlowParams, CertificateRejection]:
    """
    Checks the contraction hypotheses for the constant-step slope map.

    Returns the certified constants, or a rejection naming the first
    hypothesis that fails; a rejection is a result, not an error.
    """
    if not 0 < lambda_ <= 1:
        return CertificateRejection(hypothesis="lambda", detail=f"lambda={lambda_!r} is outside (0, 1]")
    if not 0 < eta < lambda_:
        return CertificateRejection(hypothesis="eta", detail=f"eta={eta!r} is outside (0, lambda={lambda_!r})")
    floor = abs(1.0 - 2.0 * eta / lambda_)
    if not floor < upsilon < 1:
        return CertificateRejection(
            hypothesis="upsilon", detail=f"upsilon={upsilon!r} is outside ({floor!r}, 1)"
        )
    delta = min(2 * eta - lambda_ * (1 - upsilon), lambda_ * (1 + upsilon) - 2 * eta) / (2 * eta * lambda_)
    if not delta > 0:
        return CertificateRejection(hypothesis="delta", detail=f"basin radius delta={delta!r} is not positive")
    if not abs(c0 - 1.0 / lambda_) < delta:
        return CertificateRejection(
            hypothesis="c0", detail=f"|c0 - 1/lambda| = {abs(c0 - 1.0 / lambda_)!r} is not below delta={delta!r}"
        )
    logger.debug(f"Contraction certificate issued: lambda={lambda_}, eta={eta}, delta={delta}")
    return GaussianFlowParams(lambda_=lambda_, eta=eta, c0=c0, upsilon=upsilon, delta=delta)


def slope_iterates(c0: float, eta: float, lambda_: float, steps: int) -> Iterator[Tuple[int, float]]:
    c = float(c0)
    yield 0, c
    for k in range(1, steps + 1):
        c = float(discrete_gaussian_step(c, eta, lambda_))
        yield k, c


def contraction_sweep(params: GaussianFlowParams, steps: int) -> list[tuple[int, float, float]]:
    """(k, c_k, upsilon^k |c_0 - 1/lambda|) rows of a certified run"""
    return [
        (k, c, params.bound(k))
        for k, c in slope_iterates(params.c0, params.eta, params.lambda_, steps)
    ]


def gaussian_three_point(triple: GaussianTriple) -> ThreePointTerms:
    g, s1, s2, sp = triple.sigma_g, triple.sigma_1, triple.sigma_2, triple.sigma_pi
    return ThreePointTerms(
        lhs=0.5 * g * (s1 - s2) * (1.0 - sp**2 / s1**2),
        bg_pi_rho1=0.5 * (g / s1) * (sp - s1) ** 2,
        bg_pi_rho2=0.5 * (g / s2) * (sp - s2) ** 2,
        bg_gpi=0.5 * g * sp**2 * s2 * (1.0 / s1 - 1.0 / s2) ** 2,
    )


def gaussian_kl(mean_1: float, std_1: float, mean_2: float, std_2: float) -> float:
    """KL(N(mean_1, std_1^2) | N(mean_2, std_2^2))"""
    if std_1 <= 0 or std_2 <= 0:
        raise ArgumentError("standard deviations must be positive")
    return float(np.log(std_2 / std_1) + (std_1**2 + (mean_1 - mean_2) ** 2) / (2 * std_2**2) - 0.5)


def gaussian_bg(sigma_g: float, sigma_rho: float, sigma_pi: float) -> float:
    """B_G(pi | rho) for centred Gaussians and reference N(0, sigma_g^2)"""
    return 0.5 * (sigma_g / sigma_rho) * (sigma_pi - sigma_rho) ** 2


def gaussian_relative_convexity_gap(sigma_g: float, sigma_rho: float, sigma_pi: float) -> float:
    """KL(pi|rho) - (lambda_g / beta) B_G(pi|rho) with lambda_g = 1/sigma_g^2, beta = sigma_rho/sigma_g."""
    lambda_g = 1.0 / sigma_g**2
    beta = sigma_rho / sigma_g
    return gaussian_kl(0.0, sigma_pi, 0.0, sigma_rho) - (lambda_g / beta) * gaussian_bg(sigma_g, sigma_rho, sigma_pi)
