"""
Sample-based learners for the flow residual.

logistic_fit estimates log(rho_model / pi_target) with the balanced
logistic loss (target label 0, model label 1); score_fit estimates a score
by implicit score matching. Their outputs enter potential stacks through
the composite residuals below.
"""
from typing import Optional, Sequence
import numpy as np
from scipy.special import expit
from helpers.errors import ArgumentError, MonotonicityError
from helpers.helper import derive_seed, make_rng
from logger.logger import logger
from models.base.student import StudentConfig
from modules.flow.targets import Target1D
from modules.neural.network import StudentNet, mlp_taylor, softplus, train
from modules.potential.jet import Jet
from modules.potential.potential import PotentialStack, ResidualFn, push_residual

TARGET_LABEL = 0.0
MODEL_LABEL = 1.0


def logistic_loss(labels: np.ndarray):
    """mean(L log(1 + e^{-h}) + (1 - L) log(1 + e^{h})) = mean(softplus(h) - L h)"""

    def loss(value, slope):
        n = value.size
        total = float(np.mean(softplus(value) - labels * value))
        return total, (expit(value) - labels) / n, np.zeros_like(slope)

    return loss


def score_matching_loss(value, slope):
    """Implicit Fisher objective mean(sigma' + sigma^2 / 2)"""
    n = value.size
    total = float(np.mean(slope + 0.5 * value * value))
    return total, value / n, np.full_like(slope, 1.0 / n)


def derivative_matching_loss(targets: np.ndarray):
    """mean((target' - student')^2)"""

    def loss(value, slope):
        n = value.size
        gap = targets - slope
        return float(np.mean(gap * gap)), np.zeros_like(value), -2.0 * gap / n

    return loss


def _fresh_net(cfg: StudentConfig, rng_seed: int) -> StudentNet:
    return StudentNet.initialise(cfg.widths, make_rng(rng_seed, 0))


def logistic_fit(
    target_samples: Sequence[float],
    model_samples: Sequence[float],
    cfg: StudentConfig,
    rng_seed: int,
) -> StudentNet:
    """
    Classifier h with h ~ log(rho_model / pi_target).

    Raises:
        ArgumentError: an empty sample
        TrainingError: the loss diverges
    """
    target_samples = np.asarray(target_samples, dtype=float).ravel()
    model_samples = np.asarray(model_samples, dtype=float).ravel()
    if target_samples.size == 0 or model_samples.size == 0:
        raise ArgumentError("logistic_fit needs target and model samples")
    inputs = np.concatenate([target_samples, model_samples])
    labels = np.concatenate(
        [np.full(target_samples.size, TARGET_LABEL), np.full(model_samples.size, MODEL_LABEL)]
    )
    net, loss = train(_fresh_net(cfg, rng_seed), inputs, logistic_loss(labels), cfg, name="logistic")
    logger.debug(f"logistic fit on {inputs.size} samples: loss {loss:.6f}")
    return net


def score_fit(samples: Sequence[float], cfg: StudentConfig, rng_seed: int) -> StudentNet:
    """
    Score estimate sigma ~ (log rho)' by implicit score matching.

    Raises:
        ArgumentError: empty sample
        TrainingError: the loss diverges
    """
    samples = np.asarray(samples, dtype=float).ravel()
    if samples.size == 0:
        raise ArgumentError("score_fit needs samples")
    net, loss = train(_fresh_net(cfg, rng_seed), samples, score_matching_loss, cfg, name="score")
    logger.debug(f"score fit on {samples.size} samples: loss {loss:.6f}")
    return net


class StudentResidual(ResidualFn):
    """Delta = student network (no dependence on the parent potential)"""

    def __init__(self, net: StudentNet, loss: Optional[float] = None):
        self.net = net
        self.loss = loss

    def taylor(self, y, parent_jet, order):
        return mlp_taylor(self.net, Jet.variable(y, order))


class NegatedClassifierComposite(ResidualFn):
    """Delta = -h o psi_k'"""

    order_lift = 1

    def __init__(self, classifier: StudentNet, parent: PotentialStack):
        self.classifier = classifier
        self.parent = parent

    def taylor(self, y, parent_jet, order):
        return -mlp_taylor(self.classifier, parent_jet.differentiate())


class ScoreDifferenceComposite(ResidualFn):
    """
    Delta = -M o psi_k' with M' = m = sigma_model - sigma_target.

    Delta' = -psi_k'' m(psi_k'); the value needs M itself, integrated from 0
    with Gauss-Legendre.
    """

    order_lift = 1

    def __init__(
        self,
        model_score: StudentNet,
        target_score: StudentNet,
        parent: PotentialStack,
        quad_nodes: int = 64,
    ):
        self.model_score = model_score
        self.target_score = target_score
        self.parent = parent
        nodes, weights = np.polynomial.legendre.leggauss(quad_nodes)
        self._nodes = 0.5 * (nodes + 1.0)
        self._weights = 0.5 * weights

    def difference(self, u) -> np.ndarray:
        return self.model_score(u) - self.target_score(u)

    def primitive(self, u) -> np.ndarray:
        """M(u) = int_0^u m(s) ds"""
        u = np.asarray(u, dtype=float)
        samples = self.difference(u[..., None] * self._nodes)
        return u * (samples @ self._weights)

    def taylor(self, y, parent_jet, order):
        grad = parent_jet.differentiate()
        coeffs = np.zeros((order + 1,) + np.shape(y))
        coeffs[0] = -self.primitive(grad.value)
        if order > 0:
            hess = grad.differentiate()
            inner = mlp_taylor(self.model_score, grad.truncate(order - 1)) - mlp_taylor(
                self.target_score, grad.truncate(order - 1)
            )
            slope = (inner * hess).coeffs
            coeffs[1:] = -slope / np.arange(1, order + 1).reshape((-1,) + (1,) * np.ndim(y))
        return Jet(coeffs)


def model_samples(psi: PotentialStack, g_ref: Target1D, n: int, rng: np.random.Generator) -> np.ndarray:
    """psi'(Y_i) with Y_i ~ e^{-g}"""
    return psi.gradient(g_ref.sample(n, rng))


def alg1_residual(
    psi: PotentialStack,
    target_samples: Sequence[float],
    g_ref: Target1D,
    cfg: StudentConfig,
    rng_seed: int,
) -> NegatedClassifierComposite:
    target_samples = np.asarray(target_samples, dtype=float)
    pushed = model_samples(psi, g_ref, target_samples.size, make_rng(rng_seed, 1))
    classifier = logistic_fit(target_samples, pushed, cfg, derive_seed(rng_seed, 2))
    return NegatedClassifierComposite(classifier, psi)


def alg1_step(
    psi: PotentialStack,
    target_samples: Sequence[float],
    g_ref: Target1D,
    eta: float,
    cfg: StudentConfig,
    rng_seed: int,
) -> PotentialStack:
    """psi_{k+1} = psi_k - eta h_k o psi_k'"""
    return push_residual(psi, alg1_residual(psi, target_samples, g_ref, cfg, rng_seed), eta)


def alg2_residual(
    psi: PotentialStack,
    target_samples: Sequence[float],
    g_ref: Target1D,
    cfg: StudentConfig,
    rng_seed: int,
    target_score: Optional[StudentNet] = None,
) -> ScoreDifferenceComposite:
    target_samples = np.asarray(target_samples, dtype=float)
    if target_score is None:
        target_score = score_fit(target_samples, cfg, derive_seed(rng_seed, 3))
    pushed = model_samples(psi, g_ref, target_samples.size, make_rng(rng_seed, 1))
    model_score = score_fit(pushed, cfg, derive_seed(rng_seed, 2))
    return ScoreDifferenceComposite(model_score, target_score, psi)


def check_monotone(stack: PotentialStack, strict: bool = False) -> bool:
    """
    Reports (or, when strict, raises on) loss of monotonicity of psi' on the stack's grid.

    Raises:
        MonotonicityError: strict and psi'' <= 0 somewhere on the grid
    """
    if stack.convex_on_grid is not False:
        return True
    message = f"map lost monotonicity on the grid after {stack.depth} layers"
    if strict:
        raise MonotonicityError(message)
    logger.warning(message)
    return False


def alg2_step(
    psi: PotentialStack,
    target_samples: Sequence[float],
    g_ref: Target1D,
    eta: float,
    cfg: StudentConfig,
    rng_seed: int,
    target_score: Optional[StudentNet] = None,
    strict: bool = False,
) -> PotentialStack:
    """n_{k+1} = n_k - eta n_k' (m_k o n_k) with n = psi'"""
    residual = alg2_residual(psi, target_samples, g_ref, cfg, rng_seed, target_score)
    pushed = push_residual(psi, residual, eta)
    check_monotone(pushed, strict)
    return pushed
