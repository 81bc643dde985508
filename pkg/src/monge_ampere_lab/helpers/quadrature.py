"""
Quadrature rules and monotone inversion shared by the numeric modules
"""
from functools import lru_cache
from typing import Callable, Tuple
import numpy as np
from helpers.errors import NumericError


@lru_cache(maxsize=None)
def gauss_hermite_rule(nodes: int = 64) -> Tuple[np.ndarray, np.ndarray]:
    """
    Probabilists' Gauss-Hermite rule normalised for expectations.

    Returns:
        tuple[np.ndarray, np.ndarray]: nodes z_j and weights w_j with
        sum_j w_j h(z_j) ~ E[h(Z)], Z ~ N(0, 1)
    """
    z, w = np.polynomial.hermite_e.hermegauss(nodes)
    w = w / np.sqrt(2.0 * np.pi)
    z.setflags(write=False)
    w.setflags(write=False)
    return z, w


def invert_monotone(
    fn: Callable[[np.ndarray], np.ndarray],
    targets: np.ndarray,
    lower: float,
    upper: float,
    tol: float = 1e-12,
    max_expansions: int = 60,
    max_iter: int = 200,
) -> np.ndarray:
    """
    Solve fn(x) = target for a nondecreasing fn, elementwise, by bisection.

    The bracket starts at [lower, upper] and doubles its half-width around
    its centre until it contains every target.

    Raises:
        NumericError: the bracket cannot be expanded to contain a target
    """
    targets = np.asarray(targets, dtype=float)
    flat = targets.ravel()
    centre = 0.5 * (lower + upper)
    half = max(0.5 * (upper - lower), 1e-3)
    lo = np.full(flat.shape, centre - half)
    hi = np.full(flat.shape, centre + half)

    for _ in range(max_expansions):
        low_bad = fn(lo) > flat
        high_bad = fn(hi) < flat
        if not (low_bad.any() or high_bad.any()):
            break
        width = hi - lo
        lo = np.where(low_bad, lo - width, lo)
        hi = np.where(high_bad, hi + width, hi)
    else:
        raise NumericError(
            f"could not bracket {int((fn(lo) > flat).sum() + (fn(hi) < flat).sum())} "
            "targets while inverting a monotone map"
        )

    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        below = fn(mid) < flat
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.max(hi - lo, initial=0.0) <= tol * max(1.0, np.max(np.abs(mid), initial=0.0)):
            break
    return (0.5 * (lo + hi)).reshape(targets.shape)
