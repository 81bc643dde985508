"""
Analytic one-dimensional densities used by the divergences
"""
from typing import Callable, Tuple
import numpy as np
from helpers.errors import ArgumentError
from models.base_model import NumericModel
from modules.flow.targets import GaussianTarget, MixtureTarget, Target1D
from modules.potential.potential import PotentialStack, invert_gradient

ScalarFn = Callable[[np.ndarray], np.ndarray]


class Density1D(NumericModel):
    log_density: ScalarFn
    cdf: ScalarFn
    quantile: ScalarFn
    support_hint: Tuple[float, float]
    name: str = "density"

    def density(self, x):
        return np.exp(self.log_density(np.asarray(x, dtype=float)))


def density_from_target(target: Target1D, name: str = "") -> Density1D:
    if not target.has_cdf:
        raise ArgumentError(f"{target!r} has no cdf and cannot be used as a Density1D")
    return Density1D(
        log_density=target.log_density,
        cdf=target.cdf,
        quantile=target.quantile,
        support_hint=target.support_hint,
        name=name or repr(target),
    )


def gaussian_density(mean: float = 0.0, std: float = 1.0) -> Density1D:
    return density_from_target(GaussianTarget(mean, std))


def mixture_density(means: Tuple[float, float] = (2.0, -2.0), weight: float = 0.5) -> Density1D:
    return density_from_target(MixtureTarget(means, weight))


def pushforward_density(stack: PotentialStack, reference: Target1D, tail: float = 1e-12) -> Density1D:
    """
    rho = (psi_k')_# e^{-g}.

    log rho(x) = -g(y) - log psi_k''(y) with y = (psi_k')^{-1}(x); the CDF is
    F_g o (psi_k')^{-1} and the quantile psi_k' o Q_g.
    """
    lo, hi = reference.quantile(np.array([tail, 1.0 - tail]))

    def log_density(x):
        y = invert_gradient(stack, x)
        return reference.log_density(y) - np.log(stack.hessian(y))

    def cdf(x):
        return reference.cdf(invert_gradient(stack, x))

    def quantile(u):
        return stack.gradient(reference.quantile(u))

    return Density1D(
        log_density=log_density,
        cdf=cdf,
        quantile=quantile,
        support_hint=(float(stack.gradient(lo)), float(stack.gradient(hi))),
        name=f"pushforward(depth={stack.depth})",
    )
