import numpy as np
import pytest
from helpers.errors import ArgumentError, StepSizeError
from models.base.vi import ExpectationMode, ExpectationSpec, VIConfig, VIState
from modules.vi.vi import (
    build_vi_target,
    gaussian_moments,
    gaussian_vi_target,
    logistic_vi_target,
    stationarity_errors,
    vi_adaptive_eta,
    vi_run,
    vi_step,
    vi_sweep,
)


def test_logistic_target_derivatives():
    """f' and f'' of the logistic negative log-density against finite differences"""
    target = logistic_vi_target(0.7)
    x = np.linspace(-3, 3, 13)
    h = 1e-6
    assert np.isclose(target.f_d1(np.array(0.7)), 0.0)
    np.testing.assert_allclose(target.f_d2(x), (target.f_d1(x + h) - target.f_d1(x - h)) / (2 * h), rtol=1e-6)


def test_gaussian_target_rejects_bad_std():
    """std must be positive"""
    with pytest.raises(ArgumentError):
        gaussian_vi_target(0.0, 0.0)


def test_moments_of_gaussian_target():
    """E f'(X) = m - mu and E f''(X) = 1 exactly"""
    target = gaussian_vi_target(1.5)
    grad_mean, curvature = gaussian_moments(VIState(m=0.5, s=2.0), target, ExpectationSpec())
    assert np.isclose(grad_mean, -1.0)
    assert np.isclose(curvature, 1.0)


def test_stationary_point_has_zero_errors():
    """N(mu, 1) is the fixed point for a N(mu, 1) target"""
    err1, err2 = stationarity_errors(VIState(m=1.5, s=1.0), gaussian_vi_target(1.5), ExpectationSpec())
    assert abs(err1) < 1e-12 and abs(err2) < 1e-12


def test_step_is_closed_form_for_gaussians():
    """One update of the Gaussian target moves (m, s) by the explicit formulas"""
    state = VIState(m=-2.0, s=0.5)
    eta, lambda_ = 0.1, 1.0
    after = vi_step(state, eta, lambda_, gaussian_vi_target(1.5), ExpectationSpec())
    assert np.isclose(after.m, -2.0 - eta * 0.5 * (-3.5))
    assert np.isclose(after.s, 0.5 - eta * (0.25 - 1.0))
    assert after.k == 1


@pytest.mark.parametrize("eta", [0.0, -0.1, float("nan")])
def test_step_rejects_non_positive_eta(eta):
    """eta <= 0 is an argument error"""
    with pytest.raises(ArgumentError):
        vi_step(VIState(m=0.0, s=1.0), eta, 1.0, gaussian_vi_target(), ExpectationSpec())


def test_step_that_kills_the_scale():
    """A step that leaves s <= 0 is reported"""
    with pytest.raises(StepSizeError):
        vi_step(VIState(m=0.0, s=3.0), 1.0, 1.0, gaussian_vi_target(), ExpectationSpec())


def test_adaptive_eta():
    """s / 2 / (1 + |s^2 E f'' - 1|)"""
    eta = vi_adaptive_eta(VIState(m=0.0, s=2.0), 1.0, gaussian_vi_target(), ExpectationSpec())
    assert np.isclose(eta, 1.0 / 4.0)


def test_gaussian_run_converges():
    """The adaptive run reaches N(1.5, 1)"""
    records = vi_run(VIConfig(target="gaussian", location=1.5, m0=-2.0, s0=0.5, T=200))
    assert len(records) == 201
    assert records[0].eta == 0.0
    final = records[-1].state
    assert abs(final.m - 1.5) < 1e-6
    assert abs(final.s - 1.0) < 1e-6


def test_logistic_run_reaches_stationarity():
    """From m0 = 10 both stationarity errors fall below 0.02 within 50 steps"""
    records = vi_run(VIConfig(target="logistic", m0=10.0, s0=1.0, T=50))
    assert abs(records[-1].err1) < 0.02
    assert abs(records[-1].err2) < 0.02
    assert abs(records[-1].err1) < abs(records[0].err1)


def test_fixed_eta_run():
    """A fixed eta is recorded on every step"""
    records = vi_run(VIConfig(target="gaussian", m0=0.0, s0=1.0, T=3, eta=0.2))
    assert [r.eta for r in records] == [0.0, 0.2, 0.2, 0.2]


def test_monte_carlo_is_deterministic():
    """Seeded Monte Carlo expectations repeat"""
    spec = ExpectationSpec(mode=ExpectationMode.MC, sample_count=200, seed=9)
    cfg = VIConfig(target="logistic", m0=2.0, s0=1.0, T=5, expectation=spec)
    first = [r.row() for r in vi_run(cfg)]
    second = [r.row() for r in vi_run(cfg)]
    assert first == second
    other = vi_run(cfg.with_updates(expectation=spec.with_updates(seed=10)))
    assert other[-1].state.m != vi_run(cfg)[-1].state.m


def test_sweep_runs_each_start():
    """One trajectory per starting point"""
    cfg = VIConfig(target="gaussian", location=1.0, T=10)
    sweep = vi_sweep(cfg, [(0.0, 1.0), (3.0, 0.5)])
    assert [index for index, _ in sweep] == [0, 1]
    assert sweep[1][1][0].state.m == 3.0
    assert sweep[1][1][0].state.s == 0.5


def test_build_target_uses_location():
    """The Gaussian target is centred at the location"""
    target = build_vi_target(VIConfig(target="gaussian", location=2.0))
    assert np.isclose(target.f_d1(np.array(2.0)), 0.0)


def test_adaptive_runs_keep_the_scale_positive():
    """Adaptive steps keep s > 0 from 100 random starts on the logistic target"""
    rng = np.random.default_rng(17)
    target = logistic_vi_target(0.5)
    for m0, s0 in zip(rng.uniform(-10.0, 10.0, 100), rng.uniform(0.05, 5.0, 100)):
        records = vi_run(VIConfig(target="logistic", location=0.5, m0=m0, s0=s0, T=30), target)
        assert all(r.state.s > 0 for r in records)


def test_even_target_keeps_a_centred_mean():
    """m0 = 0 on a symmetric target gives m_k = 0 in exact mode"""
    records = vi_run(VIConfig(target="logistic", location=0.0, m0=0.0, s0=2.5, T=50))
    assert max(abs(r.state.m) for r in records) < 1e-12


@pytest.mark.parametrize("eta", [0.01, 0.3, 1.0, 1.9, 5.0])
def test_fixed_point_for_every_step_size(eta):
    """N(mu, 1) does not move under a N(mu, 1) target whatever eta is"""
    state = VIState(m=1.5, s=1.0, k=3)
    after = vi_step(state, eta, 1.0, gaussian_vi_target(1.5), ExpectationSpec())
    assert after.m == pytest.approx(1.5, abs=1e-12)
    assert after.s == pytest.approx(1.0, abs=1e-12)


@pytest.mark.slow
def test_monte_carlo_moments_approach_quadrature():
    """1e6 seeded draws reproduce the Gauss-Hermite moments"""
    state = VIState(m=0.7, s=1.3)
    target = logistic_vi_target(0.2)
    exact = gaussian_moments(state, target, ExpectationSpec())
    sampled = gaussian_moments(state, target, ExpectationSpec(mode=ExpectationMode.MC, sample_count=1_000_000, seed=4))
    np.testing.assert_allclose(sampled, exact, atol=3e-3)
