"""TAP and naive mean-field objectives with analytic derivatives.

Scaling convention: ``tap_value`` / ``mf_value`` are per-spin free energies F.
Gradients and Hessians are stored for the *scaled* objective f_n = n F, which
is the convention that makes the gradient read
``arctanh(m) - beta Y m + beta^2 [1 - Q(m)] m`` with no 1/n factors. Use
``tap_value_scaled`` when pairing values with those derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .model import Instance

BOUNDARY_EPS = 1e-12  # magnetizations are clamped to |m_i| <= 1 - BOUNDARY_EPS


@dataclass(frozen=True)
class Magnetization:
    """Interior point of [-1,1]^n; `clamped` records whether clamping fired."""

    m: np.ndarray
    clamped: bool = False

    @classmethod
    def of(cls, values: np.ndarray) -> "Magnetization":
        values = np.asarray(values, dtype=float)
        bound = 1.0 - BOUNDARY_EPS
        clamped = bool(np.any(np.abs(values) > bound))
        if clamped:
            values = np.clip(values, -bound, bound)
        return cls(m=values, clamped=clamped)

    @property
    def n(self) -> int:
        return len(self.m)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.m, dtype=dtype)


def magnetization_values(m) -> np.ndarray:
    """Clamped coordinate array from a Magnetization or a raw array."""
    if isinstance(m, Magnetization):
        return m.m
    return Magnetization.of(m).m


@dataclass(frozen=True)
class SpinStatistics:
    """The four per-spin statistics (Q, M, A, E) classifying critical points."""

    q: float
    phi: float  # overlap with x (or with all-ones after the gauge)
    a: float  # mean of m_i * arctanh(m_i)
    e: float  # energy statistic; equals F at critical points


@dataclass(frozen=True)
class TapContext:
    """Problem data for free-energy evaluations: temperatures plus Y (and x)."""

    beta: float
    lam: float
    Y: np.ndarray
    x: np.ndarray | None = None  # direction of the bias; all-ones gauge if None

    def __post_init__(self):
        if self.beta <= 0:
            raise ParameterError(f"beta must be positive, got {self.beta}")

    @classmethod
    def from_instance(cls, inst: Instance, beta: float | None = None) -> "TapContext":
        # beta = lam is the Bayes-correct temperature for an instance
        return cls(beta=inst.lam if beta is None else beta, lam=inst.lam, Y=inst.Y, x=inst.x)

    @property
    def n(self) -> int:
        return self.Y.shape[0]

    def bias_direction(self) -> np.ndarray:
        return self.x if self.x is not None else np.ones(self.n)


def binary_entropy(m: np.ndarray) -> np.ndarray:
    """h(m) = -sum of p log p over p = (1 +- m)/2, with h(+-1) = 0."""
    m = np.asarray(m, dtype=float)
    p = (1.0 + m) / 2.0
    q = (1.0 - m) / 2.0
    with np.errstate(divide="ignore", invalid="ignore"):
        out = -(np.where(p > 0, p * np.log(p), 0.0) + np.where(q > 0, q * np.log(q), 0.0))
    return out


def overlap_q(m) -> float:
    m = magnetization_values(m)
    return float(m @ m) / len(m)


def tap_value(ctx: TapContext, m) -> float:
    """Per-spin TAP free energy (entropy + interaction + Onsager correction)."""
    m = magnetization_values(m)
    n = len(m)
    q = float(m @ m) / n
    entropy = binary_entropy(m).sum() / n
    interaction = (ctx.beta / (2 * n)) * float(m @ (ctx.Y @ m))
    onsager = (ctx.beta**2 / 4.0) * (1.0 - q) ** 2
    return -entropy - interaction - onsager


def tap_value_scaled(ctx: TapContext, m) -> float:
    """n times the per-spin TAP free energy (matches tap_gradient's scaling)."""
    m = magnetization_values(m)
    return len(m) * tap_value(ctx, m)


def tap_gradient(ctx: TapContext, m) -> np.ndarray:
    """Gradient of the scaled TAP free energy f_n = n F."""
    m = magnetization_values(m)
    q = float(m @ m) / len(m)
    return np.arctanh(m) - ctx.beta * (ctx.Y @ m) + ctx.beta**2 * (1.0 - q) * m


def tap_hessian(ctx: TapContext, m) -> np.ndarray:
    """Hessian of f_n, including the rank-one -(2 beta^2/n) m m^T term."""
    m = magnetization_values(m)
    n = len(m)
    q = float(m @ m) / n
    h = np.diag(1.0 / (1.0 - m * m)) - ctx.beta * ctx.Y
    h += ctx.beta**2 * (1.0 - q) * np.eye(n)
    h -= (2.0 * ctx.beta**2 / n) * np.outer(m, m)
    return h


def tap_equations_residual(ctx: TapContext, m) -> np.ndarray:
    """m - tanh(beta Y m - beta^2 [1-Q] m); zero exactly at TAP solutions."""
    m = magnetization_values(m)
    q = float(m @ m) / len(m)
    return m - np.tanh(ctx.beta * (ctx.Y @ m) - ctx.beta**2 * (1.0 - q) * m)


def spin_statistics(m, x: np.ndarray, beta: float) -> SpinStatistics:
    """(Q, M, A, E) of a magnetization relative to the signal direction x."""
    m = magnetization_values(m)
    n = len(m)
    at = np.arctanh(m)
    q = float(m @ m) / n
    phi = float(np.dot(x, m)) / n
    a = float(np.dot(m, at)) / n
    e = -(binary_entropy(m).sum() + 0.5 * float(np.dot(m, at))) / n
    e -= (beta**2 / 4.0) * (1.0 - q * q)
    return SpinStatistics(q=q, phi=phi, a=a, e=e)


def mf_value(ctx: TapContext, m) -> float:
    """Per-spin naive mean-field free energy (no Onsager correction)."""
    m = magnetization_values(m)
    n = len(m)
    entropy = binary_entropy(m).sum() / n
    return -entropy - (ctx.lam / (2 * n)) * float(m @ (ctx.Y @ m))


def mf_fixed_point_residual(ctx: TapContext, m) -> np.ndarray:
    """m - tanh(lam Y m); zero at mean-field fixed points."""
    m = magnetization_values(m)
    return m - np.tanh(ctx.lam * (ctx.Y @ m))


def onsager_L(beta: float, m) -> float:
    """beta^2 (1-Q)^2 / 2 + (1/n) sum log 1/(1 - m_i^2); always >= 0."""
    m = magnetization_values(m)
    n = len(m)
    q = float(m @ m) / n
    return beta**2 * (1.0 - q) ** 2 / 2.0 - float(np.log1p(-m * m).sum()) / n


def critical_field(ctx: TapContext, m) -> np.ndarray:
    """The field u(m) that beta W m must equal for m to be a critical point.

    u = arctanh(m) - (beta lam / n) <x, m> x + beta^2 [1-Q] m, so that the
    scaled gradient decomposes as g_n = u - beta W m.
    """
    m = magnetization_values(m)
    n = len(m)
    x = ctx.bias_direction()
    q = float(m @ m) / n
    return (
        np.arctanh(m)
        - (ctx.beta * ctx.lam / n) * float(np.dot(x, m)) * x
        + ctx.beta**2 * (1.0 - q) * m
    )
