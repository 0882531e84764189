"""Free-convolution spectral theory of the conditional TAP Hessian.

The bulk law of the Hessian conditioned on a vanishing gradient is the
additive free convolution of the empirical law of the diagonal D(m) with a
semicircle of radius 2 beta. Its Stieltjes transform solves

    g(z) = (1/n) sum_i 1 / (d_i - z - beta^2 g(z)),

which is solved here by damped fixed-point iteration with Newton polish on
the upper half plane, and by bracketed smallest-real-root selection on the
real axis left of the support.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DomainError, ParameterError
from .free_energy import TapContext, critical_field, magnetization_values
from .model import Instance
from .numerics import RngStream, sample_goe

REAL_AXIS_EPS = 1e-6  # imaginary offset for the continuous extension
SUPPORT_THRESHOLD = 1e-9  # density below this is treated as zero


@dataclass(frozen=True)
class SpectralMeasure:
    """Free convolution of the diagonal law with the semicircle of radius 2 beta."""

    d: np.ndarray
    beta: float
    abscissa: np.ndarray
    density: np.ndarray
    support: tuple[float, float]
    g0: float  # Stieltjes value at z=0 (NaN if the support crosses 0)


@dataclass(frozen=True)
class ConditionalHessianSample:
    """One draw of the conditional Hessian law Z = D - beta W + Delta."""

    Z: np.ndarray
    w_draw: np.ndarray
    d: np.ndarray


@dataclass(frozen=True)
class LogPotential:
    """B(0) = integral of log x against the measure, and its closed-form bound."""

    b0: float
    l_bound: float  # R(1-q), the Onsager surrogate L(m) for TAP-form diagonals

    @property
    def gap(self) -> float:
        return self.l_bound - self.b0


def _fixed_point_map(g, d, z, beta):
    return np.mean(1.0 / (d[:, None] - z - beta**2 * g), axis=0) if np.ndim(g) else float(
        np.mean(1.0 / (d - z - beta**2 * g))
    )


def _solve_upper_half(d, beta, z, tol, g_init=None, max_iter=200_000):
    """Herglotz solution (Im g >= 0) at a single z with Im z > 0."""
    g = complex(0.0, 1.0) if g_init is None else complex(g_init)
    if g.imag < 0:
        g = g.conjugate()
    damping = 0.5
    for k in range(max_iter):
        f = np.mean(1.0 / (d - z - beta**2 * g))
        residual = abs(f - g)
        if residual <= tol:
            return g
        g = (1 - damping) * f + damping * g
        if g.imag < 0:
            g = complex(g.real, 0.0)
        # Newton polish once the iteration is in the basin
        if residual < 1e-6 and k % 8 == 0:
            denom = d - z - beta**2 * g
            fprime = beta**2 * np.mean(1.0 / denom**2)
            h = g - np.mean(1.0 / denom)
            step_denom = 1.0 - fprime
            if abs(step_denom) > 1e-14:
                cand = g - h / step_denom
                if cand.imag >= 0:
                    g = cand
    raise ConvergenceError(
        f"Stieltjes iteration failed at z={z}: residual {residual}", residual=residual
    )


def stieltjes(d, beta, z, tol: float = 1e-12, g_init=None) -> complex:
    """Stieltjes transform of the free convolution at z.

    Points on the real axis use the continuous extension, evaluated at
    z + i*eps with Richardson extrapolation eps -> 0; for real z left of the
    support this agrees with the smallest-real-root branch.
    """
    d = np.asarray(d, dtype=float)
    if beta <= 0:
        raise ParameterError(f"beta must be positive, got {beta}")
    z = complex(z)
    if z.imag > 0:
        return _solve_upper_half(d, beta, z, tol, g_init)
    if z.imag < 0:  # reflection g(conj z) = conj g(z)
        return complex(np.conj(_solve_upper_half(d, beta, z.conjugate(), tol, g_init)))
    eps = REAL_AXIS_EPS
    g1 = _solve_upper_half(d, beta, z + 1j * eps, tol, g_init)
    g2 = _solve_upper_half(d, beta, z + 0.5j * eps, tol, g1)
    return 2.0 * g2 - g1


def stieltjes_smallest_root(d, beta, z: float, tol: float = 1e-13) -> float:
    """Smallest real root of the fixed-point equation at real z (z <= support min).

    Raises DomainError when no real root exists, i.e. when z lies inside the
    support of the measure.
    """
    from scipy.optimize import brentq

    d = np.asarray(d, dtype=float)
    p1 = (d.min() - z) / beta**2  # first pole of the right-hand side
    if p1 <= 0 and z >= d.min():
        raise DomainError(f"z={z} is not left of the diagonal atoms")

    def f(g):
        return float(np.mean(1.0 / (d - z - beta**2 * g)))

    def fprime(g):
        return float(beta**2 * np.mean(1.0 / (d - z - beta**2 * g) ** 2))

    # locate the unique stationary point of f(g) - g on (-inf, p1)
    hi = p1 - 1e-12 * max(1.0, abs(p1))
    while fprime(hi) <= 1.0:
        hi = p1 - 0.1 * (p1 - hi)  # pathological; pole guarantees f' -> inf
    lo = min(-10.0, p1 - 10.0)
    while fprime(lo) >= 1.0:
        lo = p1 - 2.0 * (p1 - lo)
    g_flat = brentq(lambda g: fprime(g) - 1.0, lo, hi, xtol=1e-15)
    if f(g_flat) > g_flat:
        raise DomainError(
            "fixed-point equation has no real root at z="
            f"{z}: the measure's support crosses z (supported-on-[0,inf) "
            "hypothesis violated)"
        )
    # smallest root lies left of the stationary point; bracket and solve
    left = g_flat - 1.0
    while f(left) - left > 0:
        left = g_flat - 2.0 * (g_flat - left)
    root = brentq(lambda g: g - f(g), left, g_flat, xtol=1e-16, rtol=8.9e-16)
    if abs(root - f(root)) > max(tol, 1e-10 * max(1.0, abs(root))):
        raise ConvergenceError("smallest-root polish failed", residual=abs(root - f(root)))
    return float(root)


def density(
    d,
    beta: float,
    grid: np.ndarray | None = None,
    npoints: int = 2001,
    tol: float = 1e-12,
) -> SpectralMeasure:
    """Density f = Im g / pi on a grid, with support estimate and g(0).

    The default grid covers [min d - 2 beta - 1, max d + 2 beta + 1].
    """
    d = np.asarray(d, dtype=float)
    if grid is None:
        grid = np.linspace(d.min() - 2 * beta - 1.0, d.max() + 2 * beta + 1.0, npoints)
    grid = np.asarray(grid, dtype=float)
    vals = np.empty(len(grid))
    g_warm = None
    for i, z in enumerate(grid):
        g1 = _solve_upper_half(d, beta, z + 1j * REAL_AXIS_EPS, tol, g_warm)
        g2 = _solve_upper_half(d, beta, z + 0.5j * REAL_AXIS_EPS, tol, g1)
        g_warm = g1
        vals[i] = max((2.0 * g2 - g1).imag, 0.0) / np.pi
    above = vals > SUPPORT_THRESHOLD
    if above.any():
        support = (float(grid[above][0]), float(grid[above][-1]))
    else:
        support = (np.nan, np.nan)
    try:
        g0 = stieltjes_smallest_root(d, beta, 0.0)
    except (DomainError, ConvergenceError):
        g0 = np.nan
    return SpectralMeasure(
        d=d, beta=beta, abscissa=grid, density=vals, support=support, g0=float(g0)
    )


def measure_cdf(measure: SpectralMeasure, at: np.ndarray) -> np.ndarray:
    """CDF of the free convolution from its density grid (trapezoid rule)."""
    z, f = measure.abscissa, measure.density
    steps = np.diff(z)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * steps)])
    total = cum[-1]
    if total <= 0:
        raise DomainError("density integrates to zero; grid does not cover the support")
    return np.interp(at, z, cum / total, left=0.0, right=1.0)


def ks_distance(eigenvalues: np.ndarray, measure: SpectralMeasure) -> float:
    """Kolmogorov-Smirnov distance between eigenvalues and the measure."""
    eigs = np.sort(np.asarray(eigenvalues, dtype=float))
    n = len(eigs)
    cdf = measure_cdf(measure, eigs)
    upper = np.abs(cdf - np.arange(1, n + 1) / n).max()
    lower = np.abs(cdf - np.arange(0, n) / n).max()
    return float(max(upper, lower))


def log_potential(d, beta: float, q: float) -> LogPotential:
    """B(0) = R(g(0)) with R(g) = beta^2 g^2/2 + (1/n) sum log(d_i - beta^2 g).

    B(0) equals the integral of log x against the measure when it is supported
    on [0, inf); R(1-q) is the closed-form bound L(m) when d has the TAP form
    d_i = 1/(1-m_i^2) + beta^2 (1-q). Raises DomainError when the support
    crosses 0.
    """
    d = np.asarray(d, dtype=float)
    g0 = stieltjes_smallest_root(d, beta, 0.0)

    def r_of(g):
        inside = d - beta**2 * g
        if np.any(inside <= 0):
            raise DomainError("R(g) undefined: some d_i - beta^2 g <= 0")
        return float(beta**2 * g * g / 2.0 + np.log(inside).mean())

    return LogPotential(b0=r_of(g0), l_bound=r_of(1.0 - q))


def conditional_hessian_diagonal(ctx: TapContext, m) -> np.ndarray:
    """Diagonal entries d_i = 1/(1-m_i^2) + beta^2 [1-Q(m)]."""
    m = magnetization_values(m)
    q = float(m @ m) / len(m)
    return 1.0 / (1.0 - m * m) + ctx.beta**2 * (1.0 - q)


def sample_conditional_hessian(
    ctx: TapContext | Instance, m, rng: RngStream
) -> ConditionalHessianSample:
    """Draw from the conditional law of the Hessian given a vanishing gradient.

    Assembles Z = D - beta W + Delta with a fresh GOE draw; Delta carries the
    conditioning algebra (projection terms along m, the rank-one bias and
    magnetization terms, and the coupling to the field u(m)), and has rank at
    most 8.
    """
    if isinstance(ctx, Instance):
        ctx = TapContext.from_instance(ctx)
    m = magnetization_values(m)
    n = len(m)
    beta = ctx.beta
    mm = float(m @ m)
    if mm <= 0:
        raise ParameterError("conditional Hessian requires Q(m) > 0")
    w = sample_goe(n, rng)
    d = conditional_hessian_diagonal(ctx, m)
    u = critical_field(ctx, m)
    x = ctx.bias_direction()

    wm = w @ m
    z = -beta * w
    z[np.diag_indices(n)] += d
    z += (beta / mm) * (np.outer(wm, m) + np.outer(m, wm))
    z -= (beta * float(m @ wm) / mm**2) * np.outer(m, m)
    z -= (ctx.beta * ctx.lam / n) * np.outer(x, x)
    z -= (2.0 * beta**2 / n) * np.outer(m, m)
    z -= (np.outer(m, u) + np.outer(u, m)) / mm
    z += (float(m @ u) / mm**2) * np.outer(m, m)
    return ConditionalHessianSample(Z=z, w_draw=w, d=d)
