"""
Univariate Gaussian variational inference by the G_eta fixed-point map.

G_eta(m, s) = (m - (eta s / lambda) E f'((s/lambda) Y + m),
               s - (eta / lambda^2) (s^2 E f''((s/lambda) Y + m) - 1)),  Y ~ N(0, lambda^2).

(s/lambda) Y has the law of s Z with Z ~ N(0, 1), so every expectation below is
taken over standard normal nodes.
"""
from typing import Callable, List, Sequence, Tuple
import numpy as np
from scipy.special import expit
from helpers.errors import ArgumentError, StepSizeError
from helpers.helper import make_rng
from helpers.quadrature import gauss_hermite_rule
from logger.logger import logger
from models.base.vi import ExpectationMode, ExpectationSpec, VIConfig, VIRecord, VIState
from models.base_model import NumericModel


class VITargetScalar(NumericModel):
    """f' and f'' of the target's negative log-density"""

    f_d1: Callable[[np.ndarray], np.ndarray]
    f_d2: Callable[[np.ndarray], np.ndarray]
    name: str = ""


def logistic_vi_target(location: float = 0.0) -> VITargetScalar:
    """f'(x) = 2 sigma(x - a) - 1, f''(x) = 2 sigma (1 - sigma)"""

    def f_d1(x):
        return 2.0 * expit(np.asarray(x, dtype=float) - location) - 1.0

    def f_d2(x):
        p = expit(np.asarray(x, dtype=float) - location)
        return 2.0 * p * (1.0 - p)

    return VITargetScalar(f_d1=f_d1, f_d2=f_d2, name=f"logistic({location})")


def gaussian_vi_target(mean: float = 0.0, std: float = 1.0) -> VITargetScalar:
    if std <= 0:
        raise ArgumentError(f"std must be positive, got {std!r}")
    precision = 1.0 / std**2

    def f_d1(x):
        return (np.asarray(x, dtype=float) - mean) * precision

    def f_d2(x):
        return np.full(np.shape(x), precision)

    return VITargetScalar(f_d1=f_d1, f_d2=f_d2, name=f"gaussian({mean}, {std})")


def build_vi_target(cfg: VIConfig) -> VITargetScalar:
    if cfg.target == "logistic":
        return logistic_vi_target(cfg.location)
    return gaussian_vi_target(cfg.location, 1.0)


def standard_nodes(spec: ExpectationSpec, k: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of E over Z ~ N(0, 1); Monte Carlo draws are seeded per iteration."""
    if spec.mode is ExpectationMode.EXACT:
        return gauss_hermite_rule(spec.nodes)
    z = make_rng(spec.seed, k).standard_normal(spec.sample_count)
    return z, np.full(z.size, 1.0 / z.size)


def gaussian_moments(state: VIState, target: VITargetScalar, spec: ExpectationSpec) -> Tuple[float, float]:
    """(E f'(X), E f''(X)) for X ~ N(m, s^2)"""
    z, w = standard_nodes(spec, state.k)
    x = state.s * z + state.m
    return float(np.dot(w, target.f_d1(x))), float(np.dot(w, target.f_d2(x)))


def vi_step(
    state: VIState,
    eta: float,
    lambda_: float,
    target: VITargetScalar,
    spec: ExpectationSpec,
) -> VIState:
    """
    Raises:
        ArgumentError: eta <= 0
        StepSizeError: the update leaves s <= 0
    """
    if not eta > 0:
        raise ArgumentError(f"eta must be positive, got {eta!r}")
    grad_mean, curvature = gaussian_moments(state, target, spec)
    m = state.m - eta * state.s / lambda_ * grad_mean
    s = state.s - eta / lambda_**2 * (state.s**2 * curvature - 1.0)
    if not s > 0:
        raise StepSizeError(f"step eta={eta!r} drives s to {s!r}; use the adaptive step size")
    return VIState(m=m, s=s, k=state.k + 1)


def vi_adaptive_eta(prev: VIState, lambda_: float, target: VITargetScalar, spec: ExpectationSpec) -> float:
    """eta = s / 2 / (1 + |s^2 E f''(s Z + m) - 1|)"""
    _, curvature = gaussian_moments(prev, target, spec)
    return 0.5 * prev.s / (1.0 + abs(prev.s**2 * curvature - 1.0))


def stationarity_errors(state: VIState, target: VITargetScalar, spec: ExpectationSpec) -> Tuple[float, float]:
    """(E f'(X), E f''(X) - s^{-2}) for X ~ N(m, s^2); both vanish at a stationary point."""
    grad_mean, curvature = gaussian_moments(state, target, spec)
    return grad_mean, curvature - state.s**-2


def vi_run(cfg: VIConfig, target: VITargetScalar = None) -> List[VIRecord]:
    """
    Trajectory of cfg.T updates from (m0, s0). The first record is the initial
    state with eta = 0; later records carry the step that produced them.
    """
    target = target or build_vi_target(cfg)
    spec = cfg.expectation
    state = VIState(m=cfg.m0, s=cfg.s0, k=0)
    records = [VIRecord(state=state, eta=0.0, **_errors(state, target, spec))]
    for _ in range(cfg.T):
        eta = cfg.eta if cfg.eta is not None else vi_adaptive_eta(state, cfg.lambda_, target, spec)
        state = vi_step(state, eta, cfg.lambda_, target, spec)
        records.append(VIRecord(state=state, eta=eta, **_errors(state, target, spec)))
    last = records[-1]
    logger.output(f"VI {target.name}: k={last.state.k} m={last.state.m:.6f} s={last.state.s:.6f} err1={last.err1:.2e} err2={last.err2:.2e}")
    return records


def _errors(state: VIState, target: VITargetScalar, spec: ExpectationSpec) -> dict:
    err1, err2 = stationarity_errors(state, target, spec)
    return {"err1": err1, "err2": err2}


def vi_sweep(cfg: VIConfig, starts: Sequence[Tuple[float, float]]) -> List[Tuple[int, List[VIRecord]]]:
    """vi_run from each (m0, s0) in `starts`"""
    target = build_vi_target(cfg)
    return [
        (index, vi_run(cfg.with_updates(m0=m0, s0=s0), target))
        for index, (m0, s0) in enumerate(starts)
    ]
