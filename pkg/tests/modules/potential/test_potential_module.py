import numpy as np
import pytest
from helpers.errors import ArgumentError, NumericError, PotentialEvaluationError
from modules.potential.jet import Jet, Jet3
from modules.potential.potential import (
    EvaluationCounter,
    PolynomialResidual,
    PotentialStack,
    SumResidual,
    ZeroResidual,
    convexity_margin,
    invert_gradient,
    jet_eval,
    push_residual,
    taylor_eval,
)


def test_jet_composite_derivatives():
    """exp(sin-free polynomial) and log derivatives match hand differentiation"""
    y = np.array([-0.7, 0.3, 1.2])
    u = Jet.variable(y, 3)
    jet = (u * u).exp()
    e = np.exp(y**2)
    np.testing.assert_allclose(jet.derivative(1), 2 * y * e, rtol=1e-12)
    np.testing.assert_allclose(jet.derivative(2), (2 + 4 * y**2) * e, rtol=1e-12)
    np.testing.assert_allclose(jet.derivative(3), (12 * y + 8 * y**3) * e, rtol=1e-12)

    logged = (u * u + 1.0).log()
    np.testing.assert_allclose(logged.derivative(1), 2 * y / (1 + y**2), rtol=1e-12)
    np.testing.assert_allclose(logged.derivative(2), (2 - 2 * y**2) / (1 + y**2) ** 2, rtol=1e-12)


def test_jet_chain_rule_random_polynomials():
    """Jets of f o g agree with the Jet3 chain rule for cubic f and g"""
    rng = np.random.default_rng(0)
    for _ in range(20):
        f, g = rng.normal(size=4), rng.normal(size=4)
        y = rng.normal()
        inner = Jet.variable(y, 3).polynomial(g)
        composed = inner.polynomial(f).to_jet3()
        outer = Jet.variable(float(inner.value), 3).polynomial(f).to_jet3()
        expected = inner.to_jet3().chain(outer)
        np.testing.assert_allclose(composed.astuple(), expected.astuple(), rtol=1e-10, atol=1e-12)


def test_jet_sigmoid_and_softplus():
    """softplus' is the sigmoid and sigmoid' = s(1 - s)"""
    y = np.linspace(-4.0, 4.0, 9)
    u = Jet.variable(y, 2)
    s = 1.0 / (1.0 + np.exp(-y))
    np.testing.assert_allclose(u.softplus().derivative(1), s, rtol=1e-12)
    np.testing.assert_allclose(u.sigmoid().derivative(1), s * (1 - s), rtol=1e-12)


def test_jet_truncate_cannot_raise_order():
    """Truncation only lowers the order"""
    jet = Jet.variable(1.0, 2)
    assert jet.truncate(1).order == 1
    with pytest.raises(ValueError):
        jet.truncate(5)


def test_identity_stack():
    """Base c0 = 1 at y = 2 gives (2, 2, 1, 0)"""
    jet = jet_eval(PotentialStack.identity(), 2.0)
    assert jet.astuple() == (2.0, 2.0, 1.0, 0.0)


def test_one_cubic_layer():
    """y^2/2 + 0.5 y^3 at y = 1 gives (1, 2.5, 4, 3)"""
    stack = push_residual(PotentialStack.identity(), PolynomialResidual([0, 0, 0, 1]), 0.5)
    np.testing.assert_allclose(jet_eval(stack, 1.0).astuple(), (1.0, 2.5, 4.0, 3.0))


def test_push_leaves_parent_untouched():
    """Pushing returns a new stack"""
    base = PotentialStack.identity()
    pushed = push_residual(base, ZeroResidual(), 0.1)
    assert base.depth == 0 and pushed.depth == 1


def test_push_clears_convexity():
    """Cancelling the base quadratic loses convexity on the grid"""
    base = PotentialStack.identity(grid=np.linspace(-1, 1, 5))
    assert base.convex_on_grid
    flat = push_residual(base, PolynomialResidual([0, 0, -0.5]), 1.0)
    assert flat.convex_on_grid is False
    np.testing.assert_allclose(flat.hessian(np.array([0.0, 0.5])), 0.0, atol=1e-15)


def test_push_rejects_bad_eta():
    """Step sizes must be positive and finite"""
    with pytest.raises(ArgumentError):
        push_residual(PotentialStack.identity(), ZeroResidual(), 0.0)
    with pytest.raises(ArgumentError):
        push_residual(PotentialStack.identity(), ZeroResidual(), np.nan)


def test_convexity_margin():
    """psi'' = 1 - 0.5 on the grid"""
    stack = push_residual(PotentialStack.identity(), PolynomialResidual([0, 0, -0.25]), 1.0)
    assert convexity_margin(PotentialStack.identity(), [-1, 0, 1]) == 1.0
    assert np.isclose(convexity_margin(stack, [-1, 0, 1]), 0.5)
    with pytest.raises(ArgumentError):
        convexity_margin(stack, [])


def test_sum_residual():
    """Summed residuals evaluate pointwise"""
    total = SumResidual([PolynomialResidual([1.0]), PolynomialResidual([0.0, 2.0])])
    np.testing.assert_allclose(total.jet(np.array([0.5])).astuple(), ([2.0], [2.0], [0.0], [0.0]))


def test_push_is_additive_in_residuals():
    """Pushing Delta1 then Delta2 with one step equals pushing Delta1 + Delta2"""
    rng = np.random.default_rng(5)
    ys = np.linspace(-2.0, 2.0, 9)
    for _ in range(5):
        first, second = (PolynomialResidual(0.1 * rng.normal(size=4)) for _ in range(2))
        eta = rng.uniform(0.05, 1.0)
        base = PotentialStack.identity(1.5)
        chained = push_residual(push_residual(base, first, eta), second, eta)
        summed = push_residual(base, SumResidual([first, second]), eta)
        for a, b in zip(jet_eval(chained, ys).astuple(), jet_eval(summed, ys).astuple()):
            np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


def test_evaluation_counter():
    """Each layer is evaluated once per call"""
    stack = PotentialStack.identity()
    for _ in range(4):
        stack = push_residual(stack, PolynomialResidual([0, 0, 0, 0.01]), 0.1)
    counter = EvaluationCounter()
    taylor_eval(stack, np.linspace(-1, 1, 7), 3, counter)
    assert counter.layer_evaluations == 4


def test_max_order_cap():
    """A stack needing more Taylor orders than the cap is rejected"""

    class Lifted(PolynomialResidual):
        order_lift = 2

    stack = PotentialStack.identity(max_order=6)
    for _ in range(3):
        stack = push_residual(stack, Lifted([0.0]), 0.1)
    with pytest.raises(PotentialEvaluationError):
        jet_eval(stack, 0.0)


def test_non_finite_layer():
    """A non-finite residual names its layer"""

    class Broken(ZeroResidual):
        def taylor(self, y, parent_jet, order):
            return Jet.constant(np.full(np.shape(y), np.nan), order)

    stack = push_residual(push_residual(PotentialStack.identity(), ZeroResidual(), 0.1), Broken(), 0.1)
    with pytest.raises(PotentialEvaluationError, match="layer 1"):
        stack.value(0.0)


def test_jet_eval_rejects_nan():
    """Evaluation points must be finite"""
    with pytest.raises(ArgumentError):
        jet_eval(PotentialStack.identity(), np.nan)


def test_invert_gradient():
    """psi'(y) = y + 0.3 y^3 is inverted to tight tolerance"""
    stack = push_residual(PotentialStack.identity(), PolynomialResidual([0, 0, 0, 0, 0.075]), 1.0)
    targets = np.array([-20.0, -1.0, 0.0, 0.4, 35.0])
    y = invert_gradient(stack, targets)
    np.testing.assert_allclose(stack.gradient(y), targets, atol=1e-9)


def test_invert_gradient_non_monotone():
    """A non-monotone gradient cannot be inverted"""
    stack = push_residual(PotentialStack.identity(), PolynomialResidual([0, 0, -1.0]), 1.0)
    with pytest.raises(NumericError):
        invert_gradient(stack, np.array([0.5]))


def test_jet3_arithmetic():
    """Jet3 products follow the Leibniz rule"""
    a = Jet3(1.0, 2.0, 0.0, 0.0)
    b = Jet3(3.0, 1.0, 0.0, 0.0)
    assert (a * b).astuple() == (3.0, 7.0, 4.0, 0.0)
    assert (2.0 * a).astuple() == (2.0, 4.0, 0.0, 0.0)
