"""
Truncated Taylor jets of scalar functions.

A `Jet` stores normalised Taylor coefficients c_j = f^(j)(y) / j! for
j = 0..order, vectorised over any batch shape (coefficient axis first).
Arithmetic and the elementary functions below propagate the coefficients
exactly, so derivatives of composites come out to roundoff. `Jet3` is the
public order-3 view (value and three derivatives).
"""
from dataclasses import dataclass
from math import factorial
from typing import Callable, Union
import numpy as np
from scipy.special import expit

ArrayLike = Union[float, np.ndarray]


def series_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    order = min(a.shape[0], b.shape[0]) - 1
    out = np.empty(np.broadcast_shapes(a[: order + 1].shape, b[: order + 1].shape))
    for k in range(order + 1):
        out[k] = np.sum(a[: k + 1] * b[k::-1], axis=0)
    return out


def series_div(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    order = min(a.shape[0], b.shape[0]) - 1
    shape = np.broadcast_shapes(a[: order + 1].shape, b[: order + 1].shape)
    q = np.zeros(shape)
    for k in range(order + 1):
        acc = a[k] - np.sum(b[1 : k + 1] * q[k - 1 :: -1][:k], axis=0) if k else a[0]
        q[k] = acc / b[0]
    return q


def series_exp(a: np.ndarray) -> np.ndarray:
    e = np.zeros_like(a, dtype=float)
    e[0] = np.exp(a[0])
    for k in range(1, a.shape[0]):
        j = np.arange(1, k + 1).reshape((-1,) + (1,) * (a.ndim - 1))
        e[k] = np.sum(j * a[1 : k + 1] * e[k - 1 :: -1][:k], axis=0) / k
    return e


def series_log(a: np.ndarray) -> np.ndarray:
    out = np.zeros_like(a, dtype=float)
    out[0] = np.log(a[0])
    for k in range(1, a.shape[0]):
        acc = a[k].astype(float)
        if k > 1:
            j = np.arange(1, k).reshape((-1,) + (1,) * (a.ndim - 1))
            acc = acc - np.sum(j * out[1:k] * a[k - 1 : 0 : -1], axis=0) / k
        out[k] = acc / a[0]
    return out


def _ode_series(a: np.ndarray, q0: np.ndarray, rhs: Callable[[np.ndarray, int], np.ndarray]) -> np.ndarray:
    # Coefficients of q(a(t)) where dq/da = rhs(q); rhs(q, m) gives the m-th
    # coefficient of rhs(q) using q[0..m] only.
    q = np.zeros_like(a, dtype=float)
    r = np.zeros_like(a, dtype=float)
    q[0] = q0
    for k in range(1, a.shape[0]):
        r[k - 1] = rhs(q, k - 1)
        j = np.arange(1, k + 1).reshape((-1,) + (1,) * (a.ndim - 1))
        q[k] = np.sum(j * a[1 : k + 1] * r[k - 1 :: -1][:k], axis=0) / k
    return q


def series_sigmoid(a: np.ndarray) -> np.ndarray:
    def rhs(q: np.ndarray, m: int) -> np.ndarray:
        return q[m] - np.sum(q[: m + 1] * q[m::-1], axis=0)

    return _ode_series(a, expit(a[0]), rhs)


def series_softplus(a: np.ndarray) -> np.ndarray:
    """softplus(a) = log(1 + e^a), computed overflow-safely from the sigmoid series."""
    q = series_sigmoid(a)
    s = np.zeros_like(a, dtype=float)
    s[0] = np.logaddexp(0.0, a[0])
    for k in range(1, a.shape[0]):
        j = np.arange(1, k + 1).reshape((-1,) + (1,) * (a.ndim - 1))
        s[k] = np.sum(j * a[1 : k + 1] * q[k - 1 :: -1][:k], axis=0) / k
    return s


def series_differentiate(a: np.ndarray) -> np.ndarray:
    j = np.arange(1, a.shape[0]).reshape((-1,) + (1,) * (a.ndim - 1))
    return a[1:] * j


@dataclass(frozen=True)
class Jet:
    coeffs: np.ndarray

    @classmethod
    def variable(cls, y: ArrayLike, order: int) -> "Jet":
        y = np.asarray(y, dtype=float)
        coeffs = np.zeros((order + 1,) + y.shape)
        coeffs[0] = y
        if order >= 1:
            coeffs[1] = 1.0
        return cls(coeffs)

    @classmethod
    def constant(cls, value: ArrayLike, order: int) -> "Jet":
        value = np.asarray(value, dtype=float)
        coeffs = np.zeros((order + 1,) + value.shape)
        coeffs[0] = value
        return cls(coeffs)

    @classmethod
    def from_derivatives(cls, *derivatives: ArrayLike) -> "Jet":
        arrays = np.broadcast_arrays(*[np.asarray(d, dtype=float) for d in derivatives])
        coeffs = np.stack([arr / factorial(j) for j, arr in enumerate(arrays)])
        return cls(coeffs)

    @property
    def order(self) -> int:
        return self.coeffs.shape[0] - 1

    @property
    def shape(self) -> tuple:
        return self.coeffs.shape[1:]

    @property
    def value(self) -> np.ndarray:
        return self.coeffs[0]

    def derivative(self, j: int) -> np.ndarray:
        if j > self.order:
            raise ValueError(f"derivative {j} requested from an order-{self.order} jet")
        return self.coeffs[j] * factorial(j)

    def truncate(self, order: int) -> "Jet":
        if order > self.order:
            raise ValueError(f"cannot raise jet order {self.order} to {order}")
        return Jet(self.coeffs[: order + 1])

    def differentiate(self) -> "Jet":
        return Jet(series_differentiate(self.coeffs))

    def isfinite(self) -> bool:
        return bool(np.all(np.isfinite(self.coeffs)))

    def to_jet3(self) -> "Jet3":
        return Jet3(*(_scalar_or_array(self.derivative(j)) for j in range(4)))

    def _coerce(self, other) -> np.ndarray:
        if isinstance(other, Jet):
            return other.coeffs
        return Jet.constant(other, self.order).coeffs

    def __add__(self, other) -> "Jet":
        b = self._coerce(other)
        n = min(self.coeffs.shape[0], b.shape[0])
        return Jet(self.coeffs[:n] + b[:n])

    __radd__ = __add__

    def __neg__(self) -> "Jet":
        return Jet(-self.coeffs)

    def __sub__(self, other) -> "Jet":
        return self + (-other if isinstance(other, Jet) else -np.asarray(other))

    def __rsub__(self, other) -> "Jet":
        return (-self) + other

    def __mul__(self, other) -> "Jet":
        if isinstance(other, Jet):
            return Jet(series_mul(self.coeffs, other.coeffs))
        return Jet(self.coeffs * np.asarray(other, dtype=float))

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Jet":
        if isinstance(other, Jet):
            return Jet(series_div(self.coeffs, other.coeffs))
        return Jet(self.coeffs / np.asarray(other, dtype=float))

    def __rtruediv__(self, other) -> "Jet":
        return Jet(series_div(self._coerce(other), self.coeffs))

    def __pow__(self, power: int) -> "Jet":
        if not isinstance(power, int) or power < 0:
            raise ValueError("jets support non-negative integer powers only")
        result = Jet.constant(np.ones(self.shape), self.order)
        for _ in range(power):
            result = result * self
        return result

    def exp(self) -> "Jet":
        return Jet(series_exp(self.coeffs))

    def log(self) -> "Jet":
        return Jet(series_log(self.coeffs))

    def sigmoid(self) -> "Jet":
        return Jet(series_sigmoid(self.coeffs))

    def softplus(self) -> "Jet":
        return Jet(series_softplus(self.coeffs))

    def polynomial(self, coefficients) -> "Jet":
        """Evaluates sum_i a_i u^i (power basis) at this jet by Horner's rule."""
        result = Jet.constant(np.zeros(self.shape), self.order)
        for a in reversed(list(coefficients)):
            result = result * self + a
        return result


def _scalar_or_array(value: np.ndarray):
    return float(value) if np.ndim(value) == 0 else value


@dataclass(frozen=True)
class Jet3:
    """Value and derivatives up to order 3 of a scalar function at a point"""

    v: ArrayLike
    d1: ArrayLike
    d2: ArrayLike
    d3: ArrayLike

    def to_jet(self) -> Jet:
        return Jet.from_derivatives(self.v, self.d1, self.d2, self.d3)

    def astuple(self) -> tuple:
        return (self.v, self.d1, self.d2, self.d3)

    def isfinite(self) -> bool:
        return bool(all(np.all(np.isfinite(x)) for x in self.astuple()))

    def __add__(self, other: "Jet3") -> "Jet3":
        return (self.to_jet() + other.to_jet()).to_jet3()

    def __sub__(self, other: "Jet3") -> "Jet3":
        return (self.to_jet() - other.to_jet()).to_jet3()

    def __mul__(self, other) -> "Jet3":
        if isinstance(other, Jet3):
            return (self.to_jet() * other.to_jet()).to_jet3()
        return Jet3(*(x * other for x in self.astuple()))

    __rmul__ = __mul__

    def chain(self, outer: "Jet3") -> "Jet3":
        """
        Jet of F(u(y)) from this jet of u and the jet of F taken at u(y).

        h' = F1 u1, h'' = F2 u1^2 + F1 u2, h''' = F3 u1^3 + 3 F2 u1 u2 + F1 u3.
        """
        u1, u2, u3 = self.d1, self.d2, self.d3
        f0, f1, f2, f3 = outer.astuple()
        return Jet3(
            f0,
            f1 * u1,
            f2 * u1**2 + f1 * u2,
            f3 * u1**3 + 3.0 * f2 * u1 * u2 + f1 * u3,
        )
