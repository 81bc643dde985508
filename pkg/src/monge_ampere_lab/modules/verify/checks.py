"""
Invariant suite behind the `verify` subcommand.

Each check returns (passed, detail). Checks marked slow train networks or run
long flows and only run with `full`.
"""
import time
from typing import Callable, List, NamedTuple, Optional, Tuple
import numpy as np
from helpers.errors import LabError
from helpers.helper import make_rng, write_csv
from logger.logger import logger
from models.base.flow import FlowConfig, Learner
from models.base.gaussian import CertificateRejection
from models.base.schedule import AdaptiveSchedule, InverseSqrtTSchedule, LogarithmicSchedule
from models.base.student import StudentConfig
from models.base.verify import VERIFY_HEADER, CheckResult
from models.base.vi import ExpectationSpec, VIConfig
from models.config import RunConfig, SinkhornSettings, ThreePointSettings, VerifySettings
from modules.commands.sinkhorn import identity_rows, limit_rows
from modules.commands.three_point import quadrature_terms, random_triples
from modules.divergence.density import gaussian_density
from modules.divergence.divergence import relative_convexity_gap
from modules.divergence.mmd import mmd_permutation_test
from modules.flow.diagnostics import average_iterate_bound, regret_report
from modules.flow.flow import flow_run
from modules.flow.targets import build_target
from modules.gaussian.gaussian import (
    contraction_certificate,
    gaussian_relative_convexity_gap,
    gaussian_three_point,
    riccati_sigma,
    riccati_sigma_rk4,
    slope_iterates,
    variance_ratio,
)
from modules.neural.learners import logistic_fit, logistic_loss, score_fit, score_matching_loss
from modules.neural.network import StudentNet, backward_tangent, forward_tangent
from modules.vi.vi import vi_run

Outcome = Tuple[bool, str]


class Check(NamedTuple):
    name: str
    run: Callable[[int], Outcome]
    slow: bool = False


def _certified_tuple(rng: np.random.Generator):
    """A random (lambda, eta, c0, upsilon) that passes the certificate, or None."""
    lambda_ = rng.uniform(0.2, 1.0)
    eta = rng.uniform(0.05, 0.95) * lambda_
    upsilon = rng.uniform(abs(1.0 - 2.0 * eta / lambda_), 1.0)
    centred = contraction_certificate(lambda_, eta, 1.0 / lambda_, upsilon)
    if isinstance(centred, CertificateRejection):
        return None
    c0 = centred.fixed_point + 0.99 * centred.delta * rng.uniform(-1.0, 1.0)
    certificate = contraction_certificate(lambda_, eta, c0, upsilon)
    return None if isinstance(certificate, CertificateRejection) else certificate


def check_gaussian_contraction(seed: int) -> Outcome:
    rng = make_rng(seed, 100)
    checked, violations, attempts = 0, 0, 0
    while checked < 200 and attempts < 10000:
        attempts += 1
        certificate = _certified_tuple(rng)
        if certificate is None:
            continue
        checked += 1
        low, high = certificate.basin
        for k, c in slope_iterates(certificate.c0, certificate.eta, certificate.lambda_, 100):
            if abs(c - certificate.fixed_point) > certificate.bound(k) + 1e-12 or not low <= c <= high:
                violations += 1
                break
    passed = violations == 0 and checked == 200
    return passed, f"{violations} violations over {checked} certified runs"


def check_riccati(seed: int) -> Outcome:
    times = np.round(np.arange(1.0, 5.0 + 1e-9, 0.1), 12)
    ratio = variance_ratio(times, 0.5)
    increasing = bool(ratio[0] > 1 and np.all(np.diff(ratio) > 0))
    gap = float(np.max(np.abs(riccati_sigma(times, 0.5) - riccati_sigma_rk4(times, 0.5))))
    return increasing and gap < 1e-6, f"ratio increasing={increasing}, RK4 gap {gap:.2e}"


def check_three_point_closed_form(seed: int) -> Outcome:
    triples = random_triples(make_rng(seed, 101), 1000, ThreePointSettings().sigma_range)
    terms = [gaussian_three_point(triple) for triple in triples]
    worst = max(t.residual / max(1.0, abs(t.lhs)) for t in terms)
    return worst < 1e-12, f"max scaled residual {worst:.2e}"


def check_three_point_quadrature(seed: int) -> Outcome:
    settings = ThreePointSettings()
    triples = random_triples(make_rng(seed, 102), settings.quad_trials, settings.quad_sigma_range)
    worst = max(quadrature_terms(triple, settings.quad).residual for triple in triples)
    return worst < 1e-5, f"max residual {worst:.2e} over {len(triples)} triples"


def check_relative_convexity(seed: int) -> Outcome:
    draws = make_rng(seed, 103).uniform(0.2, 5.0, size=(1000, 3))
    closed = min(gaussian_relative_convexity_gap(a, b, c) for a, b, c in draws)
    settings = ThreePointSettings()
    numeric = min(
        relative_convexity_gap(
            gaussian_density(0.0, t.sigma_pi),
            gaussian_density(0.0, t.sigma_1),
            gaussian_density(0.0, t.sigma_g),
            1.0 / t.sigma_g**2,
            t.sigma_1 / t.sigma_g,
            settings.quad,
        )
        for t in random_triples(make_rng(seed, 108), settings.quad_trials, settings.quad_sigma_range)
    )
    return min(closed, numeric) >= -1e-6, f"min gap {closed:.2e} (closed form), {numeric:.2e} (quadrature)"


def check_sinkhorn(seed: int) -> Outcome:
    settings = SinkhornSettings()
    residuals = [value for _, value in limit_rows(settings, settings.quad)]
    decreasing = all(b < a for a, b in zip(residuals, residuals[1:]))
    gap = max(row[2] for row in identity_rows(settings, settings.quad))
    return decreasing and gap < 1e-6, f"residuals {['%.3e' % r for r in residuals]}, identity gap {gap:.2e}"


def check_flow_identity(seed: int) -> Outcome:
    cfg = FlowConfig(T=5, distill=False, learner=Learner.ORACLE, rng_seed=seed)
    trace = flow_run(cfg)
    if not trace.complete:
        return False, trace.failure
    worst = max(r.avg_identity_residual for r in trace.steps)
    bound = average_iterate_bound(trace, build_target(cfg.target), build_target(cfg.reference), cfg.quad)
    passed = worst < 1e-5 and bound.slack >= -1e-5
    return passed, f"max identity residual {worst:.2e}, average-iterate slack {bound.slack:.2e}"


def check_flow_distill(seed: int) -> Outcome:
    trace = flow_run(FlowConfig(T=10, schedule=AdaptiveSchedule(), distill=True, rng_seed=seed))
    if not trace.complete:
        return False, trace.failure
    first, last = trace.records[0], trace.final
    passed = last.sup_map_err < 0.2 and last.kl < first.kl / 10
    return passed, f"sup map error {last.sup_map_err:.4f}, KL {first.kl:.4f} -> {last.kl:.4f}"


def _learner_flow(seed: int, learner: Learner):
    cfg = FlowConfig(T=10, learner=learner, distill=True, sample_count=10000, rng_seed=seed)
    return cfg, flow_run(cfg)


def check_flow_logistic(seed: int) -> Outcome:
    cfg, trace = _learner_flow(seed, Learner.LOGISTIC)
    if not trace.complete:
        return False, trace.failure
    target, reference = build_target(cfg.target), build_target(cfg.reference)
    pushed = trace.final_map(reference.sample(10000, make_rng(seed, 109)))
    test = mmd_permutation_test(pushed, target.sample(10000, make_rng(seed, 110)), None, 200, make_rng(seed, 111))
    passed = trace.final.sup_map_err < 0.25 and not test.rejects(0.01)
    return passed, f"sup map error {trace.final.sup_map_err:.4f}, MMD p-value {test.p_value:.3f}"


def check_flow_score(seed: int) -> Outcome:
    _, trace = _learner_flow(seed, Learner.SCORE)
    if not trace.complete:
        return False, trace.failure
    return trace.final.sup_map_err < 0.25, f"sup map error {trace.final.sup_map_err:.4f}"


def _scaled_regret(cfg: FlowConfig, scale: Callable[[float], float]) -> Tuple[Optional[float], str]:
    trace = flow_run(cfg)
    if not trace.complete:
        return None, str(trace.failure)
    return regret_report(trace).regret_sum / scale(cfg.T), ""


def _no_growth(scaled: List[float]) -> bool:
    return all(b <= 1.2 * a for a, b in zip(scaled, scaled[1:]))


def check_flow_regret(seed: int) -> Outcome:
    """
    Scaled regret stays bounded along T = 16, 64, 256 with distilled residuals.

    T=16 also runs with exact oracle residuals (an undistilled stack needs
    Taylor order 2T + 3); that value must open a bounded sequence with the
    distilled T=64 and T=256 values too.
    """
    student = StudentConfig(epochs=500)
    details, passed = [], True
    for label, scale, schedule_for in (
        ("inverse-sqrt-t", np.sqrt, lambda T: InverseSqrtTSchedule(T=T)),
        ("logarithmic", np.log, lambda T: LogarithmicSchedule()),
    ):
        oracle_cfg = FlowConfig(T=16, schedule=schedule_for(16), max_order=2 * 16 + 24, rng_seed=seed)
        oracle, failure = _scaled_regret(oracle_cfg, scale)
        if oracle is None:
            return False, f"{label} oracle T=16: {failure}"
        distilled = []
        for T in (16, 64, 256):
            cfg = FlowConfig(T=T, schedule=schedule_for(T), distill=True, student=student, rng_seed=seed)
            value, failure = _scaled_regret(cfg, scale)
            if value is None:
                return False, f"{label} distilled T={T}: {failure}"
            distilled.append(value)
        passed &= _no_growth(distilled) and _no_growth([oracle] + distilled[1:])
        details.append(f"{label} oracle16 {oracle:.3f} distilled {['%.3f' % s for s in distilled]}")
    return passed, "; ".join(details)


def check_vi_logistic(seed: int) -> Outcome:
    records = vi_run(VIConfig(target="logistic", m0=10.0, s0=1.0, T=50))
    last = records[-1]
    return abs(last.err1) < 0.02 and abs(last.err2) < 0.02, f"err1 {last.err1:.2e}, err2 {last.err2:.2e}"


def check_vi_gaussian(seed: int) -> Outcome:
    records = vi_run(VIConfig(target="gaussian", location=1.5, m0=-2.0, s0=0.5, T=200, expectation=ExpectationSpec()))
    last = records[-1].state
    gap = max(abs(last.m - 1.5), abs(last.s - 1.0))
    return gap < 1e-6, f"final (m, s) = ({last.m:.8f}, {last.s:.8f})"


def _finite_difference_gap(net: StudentNet, inputs, loss_fn) -> float:
    value, slope, cache = forward_tangent(net, inputs)
    _, g_value, g_slope = loss_fn(value, slope)
    analytic = backward_tangent(net, cache, g_value, g_slope)
    numeric = np.empty_like(analytic)
    for i in range(net.params.size):
        shift = np.zeros_like(net.params)
        shift[i] = 1e-5
        up = loss_fn(*forward_tangent(net.with_params(net.params + shift), inputs)[:2])[0]
        down = loss_fn(*forward_tangent(net.with_params(net.params - shift), inputs)[:2])[0]
        numeric[i] = (up - down) / 2e-5
    return float(np.max(np.abs(analytic - numeric)) / max(1.0, np.max(np.abs(numeric))))


def check_gradients(seed: int) -> Outcome:
    rng = make_rng(seed, 104)
    net = StudentNet.initialise((1, 4, 3, 1), rng)
    inputs = rng.normal(size=16)
    labels = (rng.uniform(size=16) < 0.5).astype(float)
    gaps = [
        _finite_difference_gap(net, inputs, logistic_loss(labels)),
        _finite_difference_gap(net, inputs, score_matching_loss),
    ]
    return max(gaps) < 1e-4, f"relative gaps {['%.2e' % g for g in gaps]}"


def check_logistic_learner(seed: int) -> Outcome:
    model = make_rng(seed, 105).normal(0.0, 1.0, size=5000)
    target = make_rng(seed, 106).normal(1.0, 1.0, size=5000)
    net = logistic_fit(target, model, StudentConfig(), seed)
    probes = np.linspace(-2.0, 3.0, 51)
    gap = float(np.max(np.abs(net(probes) - (0.5 - probes))))
    return gap < 0.15, f"sup error against 0.5 - x: {gap:.3f}"


def check_score_learner(seed: int) -> Outcome:
    samples = make_rng(seed, 107).normal(0.0, 1.0, size=5000)
    net = score_fit(samples, StudentConfig(), seed)
    probes = np.linspace(-2.0, 2.0, 41)
    gap = float(np.max(np.abs(net(probes) + probes)))
    return gap < 0.15, f"sup error against -x: {gap:.3f}"


CHECKS: List[Check] = [
    Check("gaussian.contraction", check_gaussian_contraction),
    Check("gaussian.riccati", check_riccati),
    Check("three_point.closed_form", check_three_point_closed_form),
    Check("three_point.quadrature", check_three_point_quadrature),
    Check("divergence.relative_convexity", check_relative_convexity),
    Check("sinkhorn.limit", check_sinkhorn),
    Check("flow.identity", check_flow_identity),
    Check("flow.distill", check_flow_distill, slow=True),
    Check("flow.regret", check_flow_regret, slow=True),
    Check("flow.logistic", check_flow_logistic, slow=True),
    Check("flow.score", check_flow_score, slow=True),
    Check("neural.gradients", check_gradients),
    Check("neural.logistic", check_logistic_learner, slow=True),
    Check("neural.score", check_score_learner, slow=True),
    Check("vi.logistic", check_vi_logistic),
    Check("vi.gaussian", check_vi_gaussian),
]


def select_checks(name_filter: Optional[str], full: bool) -> List[Check]:
    """Checks whose name contains `name_filter`; slow ones only when `full`."""
    return [
        check
        for check in CHECKS
        if (full or not check.slow) and (not name_filter or name_filter in check.name)
    ]


def run_check(check: Check, seed: int) -> CheckResult:
    start = time.perf_counter()
    try:
        passed, detail = check.run(seed)
    except LabError as error:
        passed, detail = False, f"{type(error).__name__}: {error}"
    return CheckResult(name=check.name, passed=bool(passed), detail=detail, seconds=time.perf_counter() - start)


def run_suite(checks: List[Check], seed: int) -> List[CheckResult]:
    results = []
    for check in checks:
        logger.info(f"Running {check.name}")
        result = run_check(check, seed)
        if result.passed:
            logger.success(f"{check.name}: {result.detail}")
        else:
            logger.error(f"{check.name}: {result.detail}")
        results.append(result)
    return results


def format_table(results: List[CheckResult]) -> str:
    width = max((len(r.name) for r in results), default=5)
    lines = [f"{'check'.ljust(width)}  result  seconds"]
    for r in results:
        lines.append(f"{r.name.ljust(width)}  {'PASS' if r.passed else 'FAIL':6}  {r.seconds:7.2f}")
    return "\n".join(lines)


def cmd_verify(config: RunConfig) -> int:
    settings: VerifySettings = config.settings
    logger.section("verify")
    checks = select_checks(settings.filter, settings.full)
    if not checks:
        logger.warning(f"no checks match filter {settings.filter!r}")
        return 0
    results = run_suite(checks, config.seed)
    write_csv(config.output_dir / "verify.csv", VERIFY_HEADER, [r.row() for r in results])
    logger.output("\n" + format_table(results))
    failed = [r.name for r in results if not r.passed]
    if failed:
        logger.error(f"{len(failed)} of {len(results)} checks failed: {', '.join(failed)}")
        return 1
    logger.success(f"all {len(results)} checks passed")
    return 0
