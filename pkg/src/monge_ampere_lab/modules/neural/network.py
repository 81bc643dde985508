"""
Scalar softplus networks trained with full-batch Adam.

The forward pass carries the input tangent (value and d/dx) so losses may
depend on the network's derivative; the backward pass is written out by hand
for that pair. `mlp_taylor` propagates a full Taylor jet through the same
weights for use inside potential stacks.
"""
from pathlib import Path
from typing import Callable, List, Optional, Tuple
import numpy as np
from pydantic import Field, NonNegativeInt, PositiveFloat
from scipy.special import expit
from helpers.errors import TrainingError
from helpers.helper import write_csv
from logger.logger import logger
from models.base.student import StudentConfig
from models.base_model import NumericModel
from modules.potential.jet import Jet, Jet3

# (value, d/dx) -> (dL/dvalue, dL/d(d/dx)) and the loss
LossFn = Callable[[np.ndarray, np.ndarray], Tuple[float, np.ndarray, np.ndarray]]


def softplus(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


class StudentNet(NumericModel):
    widths: Tuple[int, ...]
    params: np.ndarray
    output_shift: float = 0.0

    @classmethod
    def initialise(cls, widths, rng: np.random.Generator) -> "StudentNet":
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases."""
        chunks = []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            chunks.append(rng.uniform(-bound, bound, size=fan_out * fan_in))
            chunks.append(rng.uniform(-bound, bound, size=fan_out))
        return cls(widths=tuple(widths), params=np.concatenate(chunks))

    @property
    def size(self) -> int:
        return parameter_count(self.widths)

    def layers(self, params: Optional[np.ndarray] = None) -> List[Tuple[np.ndarray, np.ndarray]]:
        """(W, b) views, W shaped (fan_out, fan_in)."""
        params = self.params if params is None else params
        out, offset = [], 0
        for fan_in, fan_out in zip(self.widths[:-1], self.widths[1:]):
            weight = params[offset : offset + fan_in * fan_out].reshape(fan_out, fan_in)
            offset += fan_in * fan_out
            bias = params[offset : offset + fan_out]
            offset += fan_out
            out.append((weight, bias))
        return out

    def with_params(self, params: np.ndarray) -> "StudentNet":
        return self.model_copy(update={"params": params})

    def shifted(self, shift: float) -> "StudentNet":
        return self.model_copy(update={"output_shift": self.output_shift + float(shift)})

    def __call__(self, x) -> np.ndarray:
        value, _ = forward_tangent(self, np.asarray(x, dtype=float))[:2]
        return value


def parameter_count(widths) -> int:
    return int(sum(a * b + b for a, b in zip(widths[:-1], widths[1:])))


def forward_tangent(net: StudentNet, x: np.ndarray, params: Optional[np.ndarray] = None):
    """
    Value and input derivative at x (1-D), plus the cache the backward pass needs.
    """
    x = np.asarray(x, dtype=float)
    flat = x.ravel()
    a = flat[:, None]
    da = np.ones_like(a)
    cache = []
    layers = net.layers(params)
    for weight, bias in layers[:-1]:
        z = a @ weight.T + bias
        dz = da @ weight.T
        s = expit(z)
        cache.append((a, da, z, dz, s))
        a = softplus(z)
        da = s * dz
    weight, bias = layers[-1]
    cache.append((a, da, None, None, None))
    value = (a @ weight.T + bias)[:, 0] + net.output_shift
    slope = (da @ weight.T)[:, 0]
    return value.reshape(x.shape), slope.reshape(x.shape), cache


def backward_tangent(
    net: StudentNet,
    cache,
    grad_value: np.ndarray,
    grad_slope: np.ndarray,
    params: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Gradient of the loss with respect to the flat parameters."""
    layers = net.layers(params)
    grads: List[np.ndarray] = []
    g_v = grad_value.ravel()[:, None]
    g_d = grad_slope.ravel()[:, None]

    a, da, _, _, _ = cache[-1]
    weight, _ = layers[-1]
    grads.append(np.concatenate([(g_v.T @ a + g_d.T @ da).ravel(), g_v.sum(axis=0)]))
    g_a = g_v @ weight
    g_da = g_d @ weight

    for (weight, _), (a_prev, da_prev, _, dz, s) in zip(reversed(layers[:-1]), reversed(cache[:-1])):
        g_z = g_a * s + g_da * dz * s * (1.0 - s)
        g_dz = g_da * s
        grads.append(np.concatenate([(g_z.T @ a_prev + g_dz.T @ da_prev).ravel(), g_z.sum(axis=0)]))
        g_a = g_z @ weight
        g_da = g_dz @ weight

    return np.concatenate(list(reversed(grads)))


def mlp_taylor(net: StudentNet, u: Jet) -> Jet:
    """Taylor jet of net(u) for an input jet u of any order and batch shape."""
    a = u.coeffs[..., None]
    layers = net.layers()
    for index, (weight, bias) in enumerate(layers):
        z = a @ weight.T
        z[0] = z[0] + bias
        if index == len(layers) - 1:
            a = z
        else:
            a = Jet(z).softplus().coeffs
    out = a[..., 0]
    out[0] = out[0] + net.output_shift
    return Jet(out)


def mlp_forward_jet(net: StudentNet, y) -> Jet3:
    """(net, net', net'', net''') at y"""
    return mlp_taylor(net, Jet.variable(np.asarray(y, dtype=float), 3)).to_jet3()


class AdamState(NumericModel):
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: NonNegativeInt = 0
    lr: PositiveFloat = 1e-3
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    eps_stab: PositiveFloat = 1e-8

    @classmethod
    def zeros(cls, size: int, cfg: Optional[StudentConfig] = None) -> "AdamState":
        cfg = cfg or StudentConfig()
        return cls(
            first_moment=np.zeros(size),
            second_moment=np.zeros(size),
            lr=cfg.lr,
            beta1=cfg.beta1,
            beta2=cfg.beta2,
            eps_stab=cfg.eps,
        )


def adam_step(weights: np.ndarray, grads: np.ndarray, state: AdamState) -> Tuple[np.ndarray, AdamState]:
    """
    One bias-corrected Adam update; inputs are not modified.

    Raises:
        TrainingError: non-finite gradient
    """
    if not np.all(np.isfinite(grads)):
        raise TrainingError("non-finite gradient", epoch=state.step_count)
    step = state.step_count + 1
    first = state.beta1 * state.first_moment + (1 - state.beta1) * grads
    second = state.beta2 * state.second_moment + (1 - state.beta2) * grads * grads
    first_hat = first / (1 - state.beta1**step)
    second_hat = second / (1 - state.beta2**step)
    updated = weights - state.lr * first_hat / (np.sqrt(second_hat) + state.eps_stab)
    return updated, state.model_copy(
        update={"first_moment": first, "second_moment": second, "step_count": step}
    )


def train(
    net: StudentNet,
    inputs: np.ndarray,
    loss_fn: LossFn,
    cfg: StudentConfig,
    name: str = "student",
) -> Tuple[StudentNet, float]:
    """
    Full-batch Adam on loss_fn(value, slope).

    Stops early once the best loss has improved by less than
    cfg.min_improvement over cfg.patience epochs.

    Raises:
        TrainingError: the loss or its gradient is not finite
    """
    params = net.params.copy()
    state = AdamState.zeros(params.size, cfg)
    best, best_epoch, stopped_at = np.inf, 0, None
    loss = np.inf
    for epoch in range(cfg.epochs):
        value, slope, cache = forward_tangent(net, inputs, params)
        loss, g_value, g_slope = loss_fn(value, slope)
        if not np.isfinite(loss):
            raise TrainingError(f"{name} loss diverged ({loss!r})", epoch=epoch)
        grads = backward_tangent(net, cache, g_value, g_slope, params)
        params, state = adam_step(params, grads, state)
        if loss < best - cfg.min_improvement:
            best, best_epoch = loss, epoch
        elif epoch - best_epoch >= cfg.patience:
            stopped_at = epoch
            break
    if stopped_at is not None:
        logger.debug(f"{name}: stopped early at epoch {stopped_at} with loss {loss:.6e}")
    else:
        logger.debug(f"{name}: finished {cfg.epochs} epochs with loss {loss:.6e}")
    return net.with_params(params), float(loss)


def dump_weights(net: StudentNet, path: Path) -> Path:
    """Writes `layer,row,col,value` rows; biases use col = -1."""
    rows = []
    for index, (weight, bias) in enumerate(net.layers()):
        for row in range(weight.shape[0]):
            for col in range(weight.shape[1]):
                rows.append((index, row, col, float(weight[row, col])))
            rows.append((index, row, -1, float(bias[row])))
    return write_csv(path, ("layer", "row", "col", "value"), rows)
