"""
Discretised parabolic Monge-Ampere flow in one dimension.

psi_{k+1} = psi_k + eta_k Delta_k with Delta_k = -f(psi_k') + g + log psi_k''
(oracle), its distilled student, or one of the sample-based learners.
"""
from typing import List, Optional, Tuple, Union
import numpy as np
from helpers.errors import ArgumentError, ConvexityError, LabError
from helpers.helper import derive_seed, make_rng
from logger.logger import logger
from models.base.flow import FlowConfig, FlowRecord, FlowTrace, Learner
from models.base.schedule import AdaptiveMode, AdaptiveSchedule, StepSchedule
from models.base.student import StudentConfig
from modules.divergence.density import density_from_target
from modules.divergence.divergence import bregman_bg
from modules.divergence.mmd import mmd_sq
from modules.flow.diagnostics import (
    TransportMap,
    bregman_bg_potential,
    expected_increment,
    hypothesis_constants,
    identity_residual,
    model_kl,
    pushforward_samples,
    sup_map_error,
    transport_density,
)
from modules.flow.targets import SampledTarget, Target1D, build_target, optimal_map, reference_sampler
from modules.neural.learners import (
    StudentResidual,
    alg1_residual,
    alg2_residual,
    check_monotone,
    derivative_matching_loss,
    score_fit,
)
from modules.neural.network import StudentNet, train
from modules.potential.jet import Jet, Jet3
from modules.potential.potential import PotentialStack, ResidualFn, push_residual

# stream indices passed to derive_seed / make_rng
_DISTILL_STREAM = 11
_LEARNER_STREAM = 12
_MMD_STREAM = 13
_TARGET_STREAM = 14


class AnalyticDelta(ResidualFn):
    """Delta_k(y) = -f(psi_k'(y)) + g(y) + log psi_k''(y)"""

    order_lift = 2

    def __init__(self, target: Target1D, reference: Target1D, parent: PotentialStack):
        self.target = target
        self.reference = reference
        self.parent = parent

    def taylor(self, y, parent_jet, order):
        grad = parent_jet.differentiate()
        hess = grad.differentiate()
        if np.any(hess.value <= 0):
            bad = np.atleast_1d(y)[np.atleast_1d(hess.value) <= 0][0]
            raise ConvexityError("oracle residual needs psi'' > 0", y=float(bad))
        return (
            -self.target.taylor(grad.truncate(order))
            + self.reference.taylor(Jet.variable(y, order))
            + hess.log()
        )


def oracle_delta(psi: PotentialStack, target: Target1D, g_ref: Target1D, y) -> Jet3:
    """
    Raises:
        ConvexityError: psi'' <= 0 at y
    """
    return AnalyticDelta(target, g_ref, psi).jet(np.asarray(y, dtype=float))


def adaptive_step(
    psi: PotentialStack,
    delta: ResidualFn,
    grid,
    floor: float = 0.4,
    safety: float = 0.5,
    mode: Union[AdaptiveMode, str] = AdaptiveMode.MIN,
) -> float:
    """
    Step size from the ratios -psi''/Delta'' over grid points where Delta'' < 0.

    `min` keeps psi_{k+1}'' > (1 - safety) psi_k'' on the grid; `paper-max`
    takes the largest ratio instead. Without a negative Delta'' both return
    safety * floor.
    """
    mode = AdaptiveMode(mode)
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if grid.size == 0:
        raise ArgumentError("adaptive_step needs a non-empty grid")
    hess = np.atleast_1d(psi.hessian(grid))
    delta_hess = np.atleast_1d(delta.evaluate(grid, 2).derivative(2))
    falling = delta_hess < 0
    if not np.any(falling):
        return safety * floor
    ratios = -hess[falling] / delta_hess[falling]
    if mode is AdaptiveMode.MIN:
        return float(safety * min(float(np.min(ratios)), floor))
    return float(safety * max(float(np.max(ratios)), floor))


def resolve_eta(schedule: StepSchedule, k: int, psi: PotentialStack, delta: ResidualFn, grid) -> float:
    if isinstance(schedule, AdaptiveSchedule):
        return adaptive_step(psi, delta, grid, schedule.floor, schedule.safety, schedule.mode)
    return float(schedule.eta_at(k))


def oracle_step(
    psi: PotentialStack,
    target: Target1D,
    g_ref: Target1D,
    schedule: StepSchedule,
    grid,
    k: int = 0,
) -> Tuple[PotentialStack, float]:
    """
    One analytic update with the scheduled step.

    Raises:
        ConvexityError: psi_{k+1}'' <= 0 somewhere on the grid
    """
    delta = AnalyticDelta(target, g_ref, psi)
    eta = resolve_eta(schedule, k, psi, delta, grid)
    pushed = push_residual(psi, delta, eta)
    _require_convex(pushed, grid)
    return pushed, eta


def _require_convex(stack: PotentialStack, grid) -> None:
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    hess = np.atleast_1d(stack.hessian(grid))
    if np.any(hess <= 0):
        raise ConvexityError(f"psi'' lost positivity after {stack.depth} steps", y=float(grid[hess <= 0][0]))


def _distill(
    delta: ResidualFn,
    cfg: StudentConfig,
    sample_count: int,
    domain: Tuple[float, float],
    rng_seed: int,
) -> Tuple[StudentNet, float]:
    rng = make_rng(rng_seed, 0)
    z = rng.uniform(domain[0], domain[1], size=sample_count)
    slopes = np.asarray(delta.evaluate(z, 1).derivative(1), dtype=float)
    net = StudentNet.initialise(cfg.widths, make_rng(rng_seed, 1))
    net, loss = train(net, z, derivative_matching_loss(slopes), cfg, name="distill")
    anchor = float(delta.evaluate(np.zeros(1), 0).value[0])
    return net.shifted(anchor - float(net(np.zeros(1))[0])), loss


def distill(
    delta: ResidualFn,
    cfg: StudentConfig,
    sample_count: int = 500,
    domain: Tuple[float, float] = (-3.0, 3.0),
    rng_seed: int = 0,
) -> StudentNet:
    """
    Student matching Delta' in mean squared error on Unif(domain), shifted so
    that student(0) = Delta(0).

    Raises:
        TrainingError: the matching loss diverges
    """
    net, loss = _distill(delta, cfg, sample_count, domain, rng_seed)
    logger.debug(f"distilled residual: matching loss {loss:.3e}")
    return net


class _FlowState:
    """Per-run objects shared by the step loop and the diagnostics"""

    def __init__(self, cfg: FlowConfig):
        self.cfg = cfg
        self.target = build_target(cfg.target)
        self.reference = build_target(cfg.reference)
        self.grid = cfg.grid.values
        self.quad = cfg.quad
        self.optimal = optimal_map(self.reference, self.target)
        self.optimal_grid = self.optimal(self.grid)
        self.target_samples: Optional[np.ndarray] = None
        self.target_score: Optional[StudentNet] = None
        self.mmd_targets: Optional[np.ndarray] = None
        if cfg.learner is not Learner.ORACLE:
            self.target_samples = self.target.sample(cfg.sample_count, make_rng(cfg.rng_seed, _TARGET_STREAM))
        if cfg.learner is Learner.SCORE:
            self.target_score = score_fit(self.target_samples, cfg.student, derive_seed(cfg.rng_seed, _TARGET_STREAM, 1))
        if cfg.mmd_samples > 0:
            self.mmd_targets = self.target.sample(cfg.mmd_samples, make_rng(cfg.rng_seed, _MMD_STREAM))


def _mmd(state: _FlowState, transport, k: int) -> Optional[float]:
    if state.mmd_targets is None:
        return None
    pushed = pushforward_samples(
        transport, state.reference, state.cfg.mmd_samples, make_rng(state.cfg.rng_seed, _MMD_STREAM, k + 1)
    )
    return mmd_sq(pushed, state.mmd_targets, state.cfg.mmd_bandwidth)


def _profile_rows(psi: PotentialStack, cfg: FlowConfig, k: int) -> List[tuple]:
    if cfg.profile_points == 0:
        return []
    ys = np.linspace(cfg.grid.lower, cfg.grid.upper, cfg.profile_points)
    _, grad, hess = psi.derivatives(ys, 2)
    return [(k, float(y), float(a), float(b)) for y, a, b in zip(ys, grad, hess)]


def _residual(state: _FlowState, psi: PotentialStack, reference: Target1D, k: int) -> ResidualFn:
    cfg = state.cfg
    seed = derive_seed(cfg.rng_seed, _LEARNER_STREAM, k)
    if cfg.learner is Learner.LOGISTIC:
        return alg1_residual(psi, state.target_samples, reference, cfg.student, seed)
    if cfg.learner is Learner.SCORE:
        return alg2_residual(psi, state.target_samples, reference, cfg.student, seed, state.target_score)
    return AnalyticDelta(state.target, reference, psi)


def _push(state: _FlowState, psi: PotentialStack, delta: ResidualFn, k: int, distill_log: List[tuple]):
    """
    Optionally distils, then schedules and pushes one residual; returns
    (psi_{k+1}, eta). An adaptive step reads the residual that is pushed.
    """
    cfg = state.cfg
    if cfg.distill:
        net, loss = _distill(
            delta, cfg.student, cfg.distill_samples, cfg.distill_domain, derive_seed(cfg.rng_seed, _DISTILL_STREAM, k)
        )
        distill_log.append((k, loss))
        delta = StudentResidual(net, loss)
    eta = resolve_eta(cfg.schedule, k, psi, delta, state.grid)
    pushed = push_residual(psi, delta, eta)
    if cfg.learner is Learner.SCORE:
        check_monotone(pushed, cfg.strict_monotone)
    elif not pushed.convex_on_grid:
        _require_convex(pushed, state.grid)
    return pushed, eta


def flow_run(cfg: FlowConfig) -> FlowTrace:
    """
    Runs cfg.T steps and records diagnostics of every iterate.

    A LabError raised mid-run ends the loop; the trace holds the records
    produced so far and the error text in `failure`.
    """
    state = _FlowState(cfg)
    psi = PotentialStack.identity(cfg.base_coefficient, grid=state.grid, max_order=cfg.max_order)
    records: List[FlowRecord] = []
    constants: List[tuple] = []
    profiles: List[tuple] = []
    distill_log: List[tuple] = []
    stacks = [psi]
    failure = None
    try:
        for k in range(cfg.T + 1):
            kl = model_kl(psi, state.target, state.reference, state.quad)
            bg = bregman_bg_potential(psi, state.optimal, state.reference, state.quad)
            min_hess, max_hess, xi_sq = hypothesis_constants(psi, state.target, state.reference, state.grid, state.quad)
            constants.append((k, min_hess, max_hess, xi_sq))
            profiles.extend(_profile_rows(psi, cfg, k))
            mmd = _mmd(state, psi, k)
            sup_err = sup_map_error(psi, state.optimal_grid, state.grid)
            if k == cfg.T:
                records.append(FlowRecord(k=k, eta=0.0, kl=kl, bg=bg, min_hess=min_hess, sup_map_err=sup_err, mmd=mmd))
                break
            delta = _residual(state, psi, state.reference, k)
            pushed, eta = _push(state, psi, delta, k, distill_log)
            residual = identity_residual(expected_increment(psi, pushed, state.reference, state.quad), eta, kl)
            records.append(
                FlowRecord(
                    k=k,
                    eta=eta,
                    kl=kl,
                    bg=bg,
                    min_hess=min_hess,
                    sup_map_err=sup_err,
                    mmd=mmd,
                    avg_identity_residual=residual,
                )
            )
            logger.output(f"k={k} eta={eta:.4f} kl={kl:.6f} bg={bg:.6f} sup_err={sup_err:.4f}")
            psi = pushed
            stacks.append(psi)
    except LabError as error:
        failure = f"{type(error).__name__}: {error}"
        logger.error(f"flow stopped after {len(records)} records: {failure}")
    return FlowTrace(
        records=records,
        constants=constants,
        profiles=profiles,
        distill_losses=distill_log,
        stacks=stacks,
        final_map=TransportMap([psi]),
        failure=failure,
    )


def _transport_kl(transport: TransportMap, state: _FlowState) -> float:
    return model_kl(transport, state.target, state.reference, state.quad)


def _transport_bg(transport: TransportMap, state: _FlowState) -> float:
    target_density = density_from_target(state.target, "target")
    return bregman_bg(target_density, transport_density(transport, state.reference), state.reference, state.quad)


def block_refresh_run(cfg: FlowConfig, block_size: Optional[int] = None) -> FlowTrace:
    """
    Flow with a sample-based learner whose reference is refreshed every
    `block_size` steps: the current model samples become the new reference
    and the stack restarts from the identity. Diagnostics follow the composed
    map y -> psi_n' o ... o psi_1'(y).
    """
    block_size = block_size or cfg.block_size
    if block_size is None or block_size < 1:
        raise ArgumentError("block_refresh_run needs a positive block size")
    if block_size >= cfg.T:
        return flow_run(cfg)
    if cfg.learner is Learner.ORACLE:
        raise ArgumentError("block refresh needs a sample-based learner (logistic or score)")

    state = _FlowState(cfg)
    frozen: List[PotentialStack] = []
    psi = PotentialStack.identity(cfg.base_coefficient, grid=state.grid, max_order=cfg.max_order)
    block_reference: Target1D = state.reference
    identity_samples = state.reference.sample(cfg.sample_count, make_rng(cfg.rng_seed, _TARGET_STREAM, 2))
    records: List[FlowRecord] = []
    distill_log: List[tuple] = []
    stacks = [psi]
    failure = None
    try:
        for k in range(cfg.T + 1):
            if k > 0 and k % block_size == 0 and k < cfg.T:
                frozen.append(psi)
                composed = TransportMap(frozen)
                _, slope = composed.value_and_slope(state.grid)
                if np.any(slope <= 0):
                    raise ConvexityError("composed map is not increasing on the grid", y=float(state.grid[slope <= 0][0]))
                block_reference = SampledTarget(
                    reference_sampler(state.reference, composed), name=f"block-{len(frozen)}"
                )
                identity_samples = composed(identity_samples)
                psi = PotentialStack.identity(cfg.base_coefficient, grid=state.grid, max_order=cfg.max_order)
                logger.info(f"block {len(frozen)} frozen at k={k}; reference refreshed")
            transport = TransportMap(frozen + [psi])
            kl = _transport_kl(transport, state)
            bg = _transport_bg(transport, state)
            _, slope = transport.value_and_slope(state.grid)
            min_hess = float(np.min(slope))
            mmd = _mmd(state, transport, k)
            sup_err = sup_map_error(transport, state.optimal_grid, state.grid)
            if k == cfg.T:
                records.append(FlowRecord(k=k, eta=0.0, kl=kl, bg=bg, min_hess=min_hess, sup_map_err=sup_err, mmd=mmd))
                break
            delta = _residual(state, psi, block_reference, k)
            pushed, eta = _push(state, psi, delta, k, distill_log)
            increment = float(np.mean(pushed.value(identity_samples) - psi.value(identity_samples)))
            records.append(
                FlowRecord(
                    k=k,
                    eta=eta,
                    kl=kl,
                    bg=bg,
                    min_hess=min_hess,
                    sup_map_err=sup_err,
                    mmd=mmd,
                    avg_identity_residual=identity_residual(increment, eta, kl),
                )
            )
            logger.output(f"k={k} eta={eta:.4f} kl={kl:.6f} sup_err={sup_err:.4f}")
            psi = pushed
            stacks.append(psi)
    except LabError as error:
        failure = f"{type(error).__name__}: {error}"
        logger.error(f"block flow stopped after {len(records)} records: {failure}")
    return FlowTrace(
        records=records,
        distill_losses=distill_log,
        stacks=stacks,
        final_map=TransportMap(frozen + [psi]),
        failure=failure,
    )
