"""
One-dimensional targets and references.

A target carries its normalised negative log-density f as a function of
Taylor jets, so f(psi_k'(y)) can be differentiated through a potential stack
to any order. CDF, quantile and sampler are provided where they exist.
"""
from abc import ABC, abstractmethod
from typing import Callable, Optional, Tuple
import numpy as np
from scipy.special import expit, logit, ndtr, ndtri
from helpers.errors import ArgumentError
from helpers.quadrature import invert_monotone
from modules.potential.jet import Jet, Jet3

HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


class Target1D(ABC):
    """A distribution e^{-f} on the real line"""

    support_hint: Tuple[float, float] = (-8.0, 8.0)

    @abstractmethod
    def taylor(self, u: Jet) -> Jet:
        """Jet of f(u) from the jet u."""

    def neg_log_density(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return _plain(self.taylor(Jet.constant(x, 0)).value)

    def log_density(self, x):
        return -self.neg_log_density(x)

    def density(self, x):
        return np.exp(self.log_density(x))

    def jet(self, x) -> Jet3:
        """(f, f', f'', f''') at x"""
        return self.taylor(Jet.variable(np.asarray(x, dtype=float), 3)).to_jet3()

    def d1(self, x):
        return self.taylor(Jet.variable(np.asarray(x, dtype=float), 1)).derivative(1)

    def d2(self, x):
        return self.taylor(Jet.variable(np.asarray(x, dtype=float), 2)).derivative(2)

    def score(self, x):
        """(log e^{-f})' = -f'"""
        return -self.d1(x)

    @property
    def has_cdf(self) -> bool:
        return False

    def cdf(self, x):
        raise NotImplementedError(f"{type(self).__name__} has no cdf")

    def quantile(self, u):
        raise NotImplementedError(f"{type(self).__name__} has no quantile")

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} cannot be sampled")


def _plain(value):
    return float(value) if np.ndim(value) == 0 else value


class GaussianTarget(Target1D):
    def __init__(self, mean: float = 0.0, std: float = 1.0):
        if not std > 0:
            raise ArgumentError(f"standard deviation must be positive, got {std!r}")
        self.mean = float(mean)
        self.std = float(std)
        self.support_hint = (self.mean - 12 * self.std, self.mean + 12 * self.std)

    def __repr__(self):
        return f"GaussianTarget(mean={self.mean}, std={self.std})"

    def taylor(self, u: Jet) -> Jet:
        z = (u - self.mean) * (1.0 / self.std)
        return z * z * 0.5 + (np.log(self.std) + HALF_LOG_2PI)

    @property
    def has_cdf(self) -> bool:
        return True

    def cdf(self, x):
        return ndtr((np.asarray(x, dtype=float) - self.mean) / self.std)

    def quantile(self, u):
        return self.mean + self.std * ndtri(np.asarray(u, dtype=float))

    def sample(self, n, rng):
        return rng.normal(self.mean, self.std, size=n)


class MixtureTarget(Target1D):
    """
    w N(a, 1) + (1 - w) N(b, 1).

    f(u) = (u - a)^2/2 + log(2 pi)/2 - log w - softplus((b - a) u + (a^2 - b^2)/2 + log((1 - w)/w))
    """

    def __init__(self, means: Tuple[float, float] = (2.0, -2.0), weight: float = 0.5):
        if not 0 < weight < 1:
            raise ArgumentError(f"mixture weight must lie in (0, 1), got {weight!r}")
        self.a, self.b = (float(m) for m in means)
        self.weight = float(weight)
        low, high = min(self.a, self.b), max(self.a, self.b)
        self.support_hint = (low - 12.0, high + 12.0)

    def __repr__(self):
        return f"MixtureTarget(means=({self.a}, {self.b}), weight={self.weight})"

    def taylor(self, u: Jet) -> Jet:
        a, b, w = self.a, self.b, self.weight
        shift = 0.5 * (a * a - b * b) + np.log((1 - w) / w)
        logit_b = u * (b - a) + shift
        centred = u - a
        return centred * centred * 0.5 + (HALF_LOG_2PI - np.log(w)) - logit_b.softplus()

    @property
    def has_cdf(self) -> bool:
        return True

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return self.weight * ndtr(x - self.a) + (1 - self.weight) * ndtr(x - self.b)

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        low, high = min(self.a, self.b), max(self.a, self.b)
        return invert_monotone(self.cdf, u, low - 1.0, high + 1.0)

    def sample(self, n, rng):
        pick = rng.random(n) < self.weight
        return np.where(pick, self.a, self.b) + rng.standard_normal(n)


class LogisticTarget(Target1D):
    """Logistic distribution with unit scale: f(x) = 2 softplus(x - loc) - (x - loc)"""

    def __init__(self, location: float = 0.0):
        self.location = float(location)
        self.support_hint = (self.location - 40.0, self.location + 40.0)

    def __repr__(self):
        return f"LogisticTarget(location={self.location})"

    def taylor(self, u: Jet) -> Jet:
        z = u - self.location
        return z.softplus() * 2.0 - z

    def d1(self, x):
        return 2.0 * expit(np.asarray(x, dtype=float) - self.location) - 1.0

    def d2(self, x):
        s = expit(np.asarray(x, dtype=float) - self.location)
        return 2.0 * s * (1.0 - s)

    @property
    def has_cdf(self) -> bool:
        return True

    def cdf(self, x):
        return expit(np.asarray(x, dtype=float) - self.location)

    def quantile(self, u):
        return self.location + logit(np.asarray(u, dtype=float))

    def sample(self, n, rng):
        return rng.logistic(self.location, 1.0, size=n)


class SampledTarget(Target1D):
    """
    A distribution known through a sampler only.

    Used as the reference of a refreshed block: its samples are the current
    model samples, and it has no density.
    """

    def __init__(self, sampler: Callable[[int, np.random.Generator], np.ndarray], name: str = "sampled"):
        self.sampler = sampler
        self.name = name

    def __repr__(self):
        return f"SampledTarget({self.name})"

    def taylor(self, u: Jet) -> Jet:
        raise NotImplementedError("a sampled reference has no density")

    def sample(self, n, rng):
        return np.asarray(self.sampler(n, rng), dtype=float)


def standard_normal() -> GaussianTarget:
    return GaussianTarget(0.0, 1.0)


def mixture_target(means: Tuple[float, float] = (2.0, -2.0), weight: float = 0.5) -> MixtureTarget:
    """Normalised two-component unit-variance Gaussian location mixture."""
    return MixtureTarget(means, weight)


def optimal_map(reference: Target1D, target: Target1D) -> Callable[[np.ndarray], np.ndarray]:
    """psi_star' = Q_target o F_reference (monotone rearrangement)"""
    if not (reference.has_cdf and target.has_cdf):
        raise ArgumentError("the optimal map needs a cdf for the reference and a quantile for the target")
    top = np.nextafter(1.0, 0.0)

    def transport(y):
        u = np.clip(reference.cdf(y), np.finfo(float).tiny, top)
        return target.quantile(u)

    return transport


def build_target(spec) -> Target1D:
    """Target1D from a TargetSpec-like object (kind, mean, std, means, weight, location)."""
    kind = spec.kind
    if kind == "gaussian":
        return GaussianTarget(spec.mean, spec.std)
    if kind == "mixture":
        return MixtureTarget(tuple(spec.means), spec.weight)
    if kind == "logistic":
        return LogisticTarget(spec.location)
    raise ArgumentError(f"unknown target kind {kind!r}")


def reference_sampler(reference: Target1D, transport: Optional[Callable] = None):
    """Sampler of transport(Y), Y ~ reference."""

    def sampler(n: int, rng: np.random.Generator) -> np.ndarray:
        y = reference.sample(n, rng)
        return y if transport is None else transport(y)

    return sampler
