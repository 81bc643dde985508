import numpy as np
import pytest
from scipy.stats import chisquare
import modules.flow.flow as flow_module
from helpers.errors import ArgumentError, ConvexityError
from models.base.flow import FlowConfig, Learner, TargetSpec
from models.base.quadrature import GridSpec
from models.base.schedule import AdaptiveSchedule, ConstantSchedule, InverseSqrtTSchedule
from models.base.student import StudentConfig
from modules.divergence.density import pushforward_density
from modules.flow.diagnostics import (
    TransportMap,
    average_iterate_bound,
    bregman_bg_potential,
    hypothesis_constants,
    model_kl,
    pushforward_samples,
    regret_report,
    sup_map_error,
    xi_field,
)
from modules.flow.flow import (
    AnalyticDelta,
    adaptive_step,
    block_refresh_run,
    distill,
    flow_run,
    oracle_delta,
    oracle_step,
)
from modules.flow.targets import GaussianTarget, build_target, optimal_map
from modules.gaussian.gaussian import discrete_gaussian_step, gaussian_kl
from modules.neural.network import forward_tangent
from modules.potential.potential import PolynomialResidual, PotentialStack, SumResidual, ZeroResidual, push_residual


def small_config(**changes) -> FlowConfig:
    base = {"T": 3, "distill": False, "learner": Learner.ORACLE, "grid": GridSpec(points=121)}
    base.update(changes)
    return FlowConfig(**base)


def test_oracle_delta_vanishes_at_fixed_point(normal):
    """Identity map between equal Gaussians is stationary"""
    jet = oracle_delta(PotentialStack.identity(), normal, normal, np.linspace(-2, 2, 5))
    for derivative in jet.astuple():
        np.testing.assert_allclose(derivative, 0.0, atol=1e-14)


def test_oracle_delta_value(normal):
    """c0 = 2 at y = 1 gives -2 + 0.5 + log 2"""
    jet = oracle_delta(PotentialStack.identity(2.0), normal, normal, 1.0)
    assert np.isclose(jet.v, -1.5 + np.log(2.0))


def test_oracle_step_reduces_to_slope_map():
    """One Gaussian step reproduces the discrete slope map"""
    lambda_, c0, eta = 0.5, 2.5, 0.1
    grid = np.linspace(-3, 3, 31)
    psi, used = oracle_step(
        PotentialStack.identity(c0), GaussianTarget(0.0, 1.0), GaussianTarget(0.0, lambda_), ConstantSchedule(eta=eta), grid
    )
    assert used == eta
    np.testing.assert_allclose(psi.hessian(grid), discrete_gaussian_step(c0, eta, lambda_), rtol=1e-12)


def test_oracle_step_loses_convexity(normal):
    """A large step past the fixed point is a convexity error"""
    with pytest.raises(ConvexityError):
        oracle_step(PotentialStack.identity(3.0), normal, normal, ConstantSchedule(eta=0.5), np.linspace(-1, 1, 5))


def test_oracle_delta_needs_convexity(normal):
    """The residual is undefined where psi'' <= 0"""
    concave = push_residual(PotentialStack.identity(), PolynomialResidual([0.0, 0.0, -1.0]), 1.0)
    with pytest.raises(ConvexityError):
        oracle_delta(concave, normal, normal, np.array([0.0, 1.0]))


def test_adaptive_step_without_negative_curvature(normal):
    """Returns safety * floor when Delta'' never falls"""
    assert adaptive_step(PotentialStack.identity(), ZeroResidual(), np.linspace(-1, 1, 11)) == 0.2


def test_adaptive_step_modes():
    """min caps the ratio at the floor, paper-max takes the largest ratio"""
    delta = PolynomialResidual([0.0, 0.0, -0.5])
    grid = np.linspace(-1, 1, 11)
    assert np.isclose(adaptive_step(PotentialStack.identity(), delta, grid, mode="min"), 0.2)
    assert np.isclose(adaptive_step(PotentialStack.identity(), delta, grid, mode="paper-max"), 0.5)
    with pytest.raises(ArgumentError):
        adaptive_step(PotentialStack.identity(), delta, [])


def test_transport_map_composition():
    """Two linear stages compose and invert"""
    transport = TransportMap([PotentialStack.identity(2.0), PotentialStack.identity(1.5)])
    y = np.array([-1.0, 0.5])
    x, slope = transport.value_and_slope(y)
    np.testing.assert_allclose(x, 3.0 * y)
    np.testing.assert_allclose(slope, 3.0)
    np.testing.assert_allclose(transport.inverse(x), y, atol=1e-12)


def test_model_kl_of_linear_map(quad, normal):
    """KL of N(0, c^2) against N(0, 1)"""
    assert np.isclose(model_kl(PotentialStack.identity(1.5), normal, normal, quad), gaussian_kl(0, 1.5, 0, 1), atol=1e-10)


def test_bregman_potential_zero_at_optimum(quad, normal):
    """B_G vanishes when psi already is the optimal potential"""
    assert abs(bregman_bg_potential(PotentialStack.identity(), optimal_map(normal, normal), normal, quad)) < 1e-12


def test_xi_field_is_minus_delta_slope(mixture, normal):
    """xi = -Delta' for the analytic residual"""
    psi = PotentialStack.identity(1.3)
    y = np.linspace(-2, 2, 7)
    np.testing.assert_allclose(xi_field(psi, mixture, normal, y), -oracle_delta(psi, mixture, normal, y).d1, atol=1e-12)


def test_sup_map_error(normal):
    """Distance of 2y to the identity on the grid"""
    grid = np.linspace(-3, 3, 7)
    assert np.isclose(sup_map_error(PotentialStack.identity(2.0), grid, grid), 3.0)


def test_flow_target_equals_reference():
    """Stationary flow keeps KL at zero"""
    spec = TargetSpec(kind="gaussian")
    trace = flow_run(small_config(target=spec))
    assert trace.complete
    assert [r.k for r in trace.records] == [0, 1, 2, 3]
    np.testing.assert_allclose(trace.column("kl"), 0.0, atol=1e-12)
    assert trace.final.eta == 0.0


def test_oracle_flow_on_mixture():
    """KL decreases and every step satisfies the identity"""
    trace = flow_run(small_config(T=4))
    assert trace.complete
    kls = trace.column("kl")
    assert all(b < a for a, b in zip(kls, kls[1:]))
    assert max(r.avg_identity_residual for r in trace.steps) < 1e-5
    assert len(trace.constants) == 5
    assert len(trace.stacks) == 5


def test_average_iterate_and_regret():
    """The averaged iterate satisfies its bound; regret sums the step KLs"""
    cfg = small_config(T=3)
    trace = flow_run(cfg)
    bound = average_iterate_bound(trace, build_target(cfg.target), build_target(cfg.reference), cfg.quad)
    assert bound.slack >= -1e-5
    report = regret_report(trace)
    assert np.isclose(report.regret_sum, sum(trace.column("kl")[:-1]))
    assert len(report.per_step) == 3


def test_flow_records_failure():
    """A convexity loss ends the run and is reported"""
    narrow = TargetSpec(kind="gaussian", std=0.5)
    trace = flow_run(small_config(T=3, target=narrow, schedule=ConstantSchedule(eta=1.0)))
    assert not trace.complete
    assert trace.failure.startswith("ConvexityError")
    assert trace.records == []


def test_profiles_and_mmd():
    """Optional per-step outputs"""
    trace = flow_run(small_config(T=1, profile_points=5, mmd_samples=200))
    assert len(trace.profiles) == 10
    assert all(r.mmd is not None for r in trace.records)


def test_block_refresh_arguments():
    """Blocks need a learner; long blocks fall back to the plain flow"""
    with pytest.raises(ArgumentError):
        block_refresh_run(small_config(T=4), block_size=2)
    trace = block_refresh_run(small_config(T=2), block_size=5)
    assert trace.complete and len(trace.records) == 3


def test_distill_matches_anchor(normal):
    """The student is shifted so student(0) = Delta(0)"""
    delta = PolynomialResidual([0.3, 0.0, -0.2])
    net = distill(delta, StudentConfig(hidden_widths=(8,), epochs=50), sample_count=64)
    assert np.isclose(net(np.zeros(1))[0], 0.3)


@pytest.mark.slow
def test_oracle_distill_flow():
    """Ten distilled oracle steps approach the optimal map"""
    trace = flow_run(FlowConfig(T=10, schedule=AdaptiveSchedule(), distill=True))
    assert trace.complete
    assert trace.final.sup_map_err < 0.2
    assert trace.final.kl < trace.records[0].kl / 10


@pytest.mark.slow
def test_logistic_flow():
    """Ten logistic steps track the optimal map on [-3, 3]"""
    trace = flow_run(FlowConfig(T=10, learner=Learner.LOGISTIC, distill=True, sample_count=10000))
    assert trace.complete
    assert trace.final.sup_map_err < 0.25


@pytest.mark.slow
def test_block_refresh_flow():
    """Block-refreshed logistic flow composes its stages"""
    trace = block_refresh_run(FlowConfig(T=6, learner=Learner.LOGISTIC, distill=True, block_size=3))
    assert trace.complete
    assert len(trace.final_map.stages) == 2
    assert trace.final.kl < trace.records[0].kl


def test_hypothesis_constants_of_linear_map(quad, normal):
    """psi = c y^2/2 towards N(0, 1): m = M = c and xi = (c^2 - 1) y"""
    grid = np.linspace(-2, 2, 9)
    m, big_m, xi_sq = hypothesis_constants(PotentialStack.identity(1.5), normal, normal, grid, quad)
    assert m == pytest.approx(1.5)
    assert big_m == pytest.approx(1.5)
    assert xi_sq == pytest.approx((1.5**2 - 1.0) ** 2, rel=1e-8)


def test_pushforward_samples(normal, rng):
    """Samples of psi'_# e^{-g} for a linear map have the scaled spread"""
    samples = pushforward_samples(PotentialStack.identity(2.0), normal, 20000, rng)
    assert samples.shape == (20000,)
    assert np.std(samples) == pytest.approx(2.0, rel=0.03)


def test_adaptive_step_sized_on_distilled_residual(monkeypatch):
    """With distillation the adaptive step is read off the residual that is pushed"""
    student = PolynomialResidual([0.0, 0.0, -10.0])
    monkeypatch.setattr(flow_module, "_distill", lambda *args: (None, 0.0))
    monkeypatch.setattr(flow_module, "StudentResidual", lambda net, loss: student)
    cfg = small_config(T=1, distill=True, schedule=AdaptiveSchedule())
    trace = flow_run(cfg)
    assert trace.complete
    grid = cfg.grid.values
    expected = adaptive_step(PotentialStack.identity(cfg.base_coefficient), student, grid)
    assert trace.records[0].eta == pytest.approx(expected)
    assert np.min(trace.stacks[1].hessian(grid)) > 0
    assert trace.distill_losses == [(0, 0.0)]


def test_repeated_push_agrees_with_summed_residual_to_first_order(normal):
    """Two oracle pushes and one push of the doubled residual differ by O(eta^2)"""
    target = GaussianTarget(0.0, 0.8)
    base = PotentialStack.identity(1.5)
    ys = np.linspace(-2.0, 2.0, 9)
    gaps = []
    for eta in (0.02, 0.01):
        first = AnalyticDelta(target, normal, base)
        stepped = push_residual(base, first, eta)
        chained = push_residual(stepped, AnalyticDelta(target, normal, stepped), eta)
        summed = push_residual(base, SumResidual([first, first]), eta)
        gaps.append(np.max(np.abs(chained.gradient(ys) - summed.gradient(ys))))
    assert 3.0 < gaps[0] / gaps[1] < 5.0


def test_constant_offset_only_shifts_the_potential(mixture, normal, quad):
    """Dropping normalising constants moves psi by eta * c and leaves psi' and the KL alone"""
    base = PotentialStack.identity()
    delta = AnalyticDelta(mixture, normal, base)
    offset = 0.5 * np.log(2.0 * np.pi)
    plain = push_residual(base, delta, 0.1)
    shifted = push_residual(base, SumResidual([delta, PolynomialResidual([offset])]), 0.1)
    ys = np.linspace(-3.0, 3.0, 13)
    np.testing.assert_allclose(shifted.value(ys) - plain.value(ys), 0.1 * offset, rtol=1e-12)
    np.testing.assert_allclose(shifted.gradient(ys), plain.gradient(ys), rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(shifted.hessian(ys), plain.hessian(ys), rtol=1e-12, atol=1e-14)
    assert model_kl(shifted, mixture, normal, quad) == pytest.approx(model_kl(plain, mixture, normal, quad), abs=1e-12)


def test_bregman_contracts_under_small_constant_steps():
    """B_G(e^{-f} | rho_k) shrinks at least like 1 - eta / M up to 0.1 eta"""
    eta = 0.05
    trace = flow_run(small_config(T=6, schedule=ConstantSchedule(eta=eta)))
    assert trace.complete
    bgs = trace.column("bg")
    for k in range(6):
        big_m = trace.constants[k][2]
        assert bgs[k + 1] <= (1.0 - eta / big_m + 0.1 * eta) * bgs[k]


@pytest.mark.slow
def test_pushforward_histogram_matches_density(normal):
    """1e5 pushed samples fall in equiprobable bins of rho_k as often as expected"""
    psi = push_residual(PotentialStack.identity(), PolynomialResidual([0, 0, 0, 0.1, 0.02]), 1.0)
    density = pushforward_density(psi, normal)
    edges = density.quantile(np.linspace(0.0, 1.0, 21)[1:-1])
    samples = pushforward_samples(psi, normal, 100_000, np.random.default_rng(31))
    counts = np.bincount(np.searchsorted(edges, samples), minlength=20)
    assert chisquare(counts, np.full(20, 100_000 / 20)).pvalue > 0.01


def test_distill_is_deterministic():
    """A fixed seed gives bit-identical students"""
    delta = PolynomialResidual([0.1, 0.2, -0.3])
    cfg = StudentConfig(hidden_widths=(8,), epochs=30)
    first = distill(delta, cfg, sample_count=64, rng_seed=3)
    second = distill(delta, cfg, sample_count=64, rng_seed=3)
    assert np.array_equal(first.params, second.params)
    assert first.output_shift == second.output_shift
    assert not np.array_equal(first.params, distill(delta, cfg, sample_count=64, rng_seed=4).params)


@pytest.mark.slow
def test_distill_half_square():
    """Delta = y^2/2 distils to a student with slope y on [-3, 3]"""
    net = distill(PolynomialResidual([0.0, 0.0, 0.5]), StudentConfig(), sample_count=500)
    ys = np.linspace(-3.0, 3.0, 61)
    value, slope, _ = forward_tangent(net, ys)
    assert np.max(np.abs(slope - ys)) < 0.05
    assert value[30] == pytest.approx(0.0, abs=1e-12)


@pytest.mark.slow
def test_distilled_regret_tracks_oracle():
    """At small T the distilled regret stays close to the exact oracle regret"""
    schedule = InverseSqrtTSchedule(T=4)
    oracle = flow_run(FlowConfig(T=4, schedule=schedule))
    distilled = flow_run(FlowConfig(T=4, schedule=schedule, distill=True, student=StudentConfig(epochs=500)))
    assert oracle.complete and distilled.complete
    exact = regret_report(oracle).regret_sum
    assert regret_report(distilled).regret_sum == pytest.approx(exact, rel=0.1)
