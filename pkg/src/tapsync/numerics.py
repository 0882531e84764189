"""Seedable numerical primitives shared by every other module.

All sampling goes through :class:`RngStream`, a counter-based (Philox)
generator keyed by ``(seed, stream_id)``: the same pair always reproduces the
same sequence, and distinct stream ids give independent streams regardless of
scheduling, so Monte Carlo loops can be parallelized by stream id.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import linalg as sla
from scipy import optimize as sopt

from .errors import BracketError, ConvergenceError, NumericsError, ParameterError

MAX_QUADRATURE_ORDER = 512

# Iterate norm beyond which a convex minimization is declared divergent
# (infimum -inf along a recession direction).
DIVERGENCE_NORM = 1e6


@dataclass(frozen=True)
class RngStream:
    """Counter-based random stream identified by (seed, stream_id)."""

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        """Fresh generator; calling twice replays the same sequence."""
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def substream(self, stream_id: int) -> "RngStream":
        """Derived stream for a parallel task; offsets keep ids disjoint."""
        return RngStream(self.seed, self.stream_id * 1_000_003 + stream_id + 1)


@dataclass(frozen=True)
class Quadrature:
    """Gauss-Hermite nodes/weights normalized against the standard Gaussian.

    weights sum to 1, so ``sum(w * f(nodes))`` approximates ``E[f(G)]`` for
    ``G ~ N(0, 1)``, exactly for polynomials up to degree ``2*order - 1``.
    """

    nodes: np.ndarray
    weights: np.ndarray

    @property
    def order(self) -> int:
        return len(self.nodes)


def gauss_hermite(order: int) -> Quadrature:
    """Probabilists' Gauss-Hermite rule with unit total weight.

    Built by the Golub-Welsch eigendecomposition of the Jacobi matrix; the
    closed-form weight formula in numpy's hermegauss overflows past order
    ~370, while this stays stable through the full supported range.
    """
    if not (1 <= order <= MAX_QUADRATURE_ORDER):
        raise ParameterError(
            f"quadrature order must be in [1, {MAX_QUADRATURE_ORDER}], got {order}"
        )
    if order == 1:
        nodes, weights = np.zeros(1), np.ones(1)
    else:
        offdiag = np.sqrt(np.arange(1, order, dtype=float))
        nodes, vecs = sla.eigh_tridiagonal(np.zeros(order), offdiag)
        weights = vecs[0, :] ** 2
        weights /= weights.sum()
        # exact evenness: average out the eigensolver's asymmetry
        nodes = (nodes - nodes[::-1]) / 2.0
        weights = (weights + weights[::-1]) / 2.0
    nodes.flags.writeable = False
    weights.flags.writeable = False
    return Quadrature(nodes=nodes, weights=weights)


def expect_gaussian(
    f: Callable[[np.ndarray], np.ndarray],
    mean: float,
    variance: float,
    quad: Quadrature,
) -> float:
    """Quadrature estimate of E[f(X)] for X ~ N(mean, variance)."""
    if variance <= 0:
        raise ParameterError(f"variance must be positive, got {variance}")
    x = mean + np.sqrt(variance) * quad.nodes
    values = np.asarray(f(x), dtype=float)
    if not np.all(np.isfinite(values)):
        bad = x[~np.isfinite(values)][0]
        raise NumericsError(f"integrand non-finite at node x={bad}")
    return float(np.dot(quad.weights, values))


def sample_goe(n: int, rng: RngStream) -> np.ndarray:
    """Symmetric matrix, independent N(0, 1/n) above the diagonal, N(0, 2/n) on it."""
    if n < 1:
        raise ParameterError(f"n must be positive, got {n}")
    gen = rng.generator()
    a = gen.normal(0.0, 1.0, size=(n, n)) / np.sqrt(n)
    w = (a + a.T) / np.sqrt(2.0)
    # (a + a.T)/sqrt(2) already has off-diagonal variance 1/n, diagonal 2/n
    return w


def power_iteration(
    a: np.ndarray,
    tol: float = 1e-10,
    max_iter: int = 50_000,
    rng: RngStream | None = None,
) -> tuple[float, np.ndarray]:
    """Dominant algebraic eigenpair of a symmetric matrix.

    Iterates on ``a + c*I`` with c chosen to make the shift positive definite,
    so the top *algebraic* eigenvalue of ``a`` wins even when a large negative
    eigenvalue dominates in magnitude. The shift is sized from a short
    unshifted norm estimate: a crude bound like the max row sum would be
    orders of magnitude above the spectrum for large random matrices and
    slow convergence to a crawl.
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    gen = (rng or RngStream(0)).generator()
    v = gen.normal(size=n)
    v /= np.linalg.norm(v)
    rho = 0.0
    for _ in range(25):  # spectral-radius estimate (always an underestimate)
        w = a @ v
        rho = np.linalg.norm(w)
        if rho == 0.0:
            return 0.0, v  # zero matrix: any unit vector
        v = w / rho
    shift = 1.0 + 1.25 * rho
    # fresh start: the estimate phase may have collapsed v onto a negative
    # extreme eigenvector, which the residual test cannot reject
    v = gen.normal(size=n)
    v /= np.linalg.norm(v)
    theta = 0.0
    for _ in range(max_iter):
        w = a @ v + shift * v
        norm = np.linalg.norm(w)
        if norm == 0.0:  # v in the kernel of the shifted matrix: impossible for PD
            raise ConvergenceError("power iteration produced a zero vector", residual=np.inf)
        v = w / norm
        av = a @ v
        theta = float(v @ av)
        residual = float(np.linalg.norm(av - theta * v))
        if residual <= tol:
            return theta, v
    raise ConvergenceError(
        f"power iteration did not reach tol={tol} in {max_iter} iterations",
        residual=residual,
    )


def log_abs_det(a: np.ndarray) -> float:
    """log|det a| for symmetric a via LDL^T; -inf if exactly singular."""
    a = np.asarray(a, dtype=float)
    if a.shape[0] != a.shape[1]:
        raise ParameterError(f"matrix must be square, got shape {a.shape}")
    _, d, _ = sla.ldl(a)
    # d is block diagonal with 1x1 and 2x2 blocks; accumulate log|det| blockwise
    n = d.shape[0]
    total = 0.0
    i = 0
    while i < n:
        if i + 1 < n and d[i + 1, i] != 0.0:
            det2 = d[i, i] * d[i + 1, i + 1] - d[i, i + 1] * d[i + 1, i]
            if det2 == 0.0:
                return -np.inf
            total += np.log(abs(det2))
            i += 2
        else:
            if d[i, i] == 0.0:
                return -np.inf
            total += np.log(abs(d[i, i]))
            i += 1
    return total


@dataclass(frozen=True)
class MinimizeResult:
    argmin: np.ndarray
    value: float
    converged: bool
    diverged: bool  # iterate norm exceeded DIVERGENCE_NORM: infimum is -inf
    grad_norm: float


def _fd_hessian(gradient, x, scale=1e-6):
    k = len(x)
    h = np.empty((k, k))
    for j in range(k):
        step = scale * max(1.0, abs(x[j]))
        xp = x.copy()
        xm = x.copy()
        xp[j] += step
        xm[j] -= step
        h[:, j] = (gradient(xp) - gradient(xm)) / (2 * step)
    return (h + h.T) / 2


def minimize_convex(
    objective: Callable[[np.ndarray], float],
    gradient: Callable[[np.ndarray], np.ndarray],
    init: Sequence[float],
    tol: float = 1e-10,
    max_iter: int = 500,
    hessian: Callable[[np.ndarray], np.ndarray] | None = None,
) -> MinimizeResult:
    """Damped Newton for smooth convex objectives on R^k (k small).

    Divergence (iterate norm above ``DIVERGENCE_NORM``) is reported through
    the ``diverged`` flag, which callers interpret as infimum -inf; it is not
    an error.
    """
    x = np.asarray(init, dtype=float).copy()
    fx = float(objective(x))
    if not np.isfinite(fx):
        raise NumericsError(f"objective non-finite at init {x}")
    ridge = 0.0
    for _ in range(max_iter):
        g = np.asarray(gradient(x), dtype=float)
        gnorm = float(np.linalg.norm(g))
        if gnorm <= tol:
            return MinimizeResult(x, fx, True, False, gnorm)
        if np.linalg.norm(x) > DIVERGENCE_NORM:
            return MinimizeResult(x, fx, False, True, gnorm)
        h = hessian(x) if hessian is not None else _fd_hessian(gradient, x)
        step = None
        ridge = max(ridge, 1e-12)
        for _ in range(60):
            try:
                candidate = np.linalg.solve(h + ridge * np.eye(len(x)), -g)
            except np.linalg.LinAlgError:
                ridge *= 10
                continue
            slope = np.dot(candidate, g)
            # tolerate sign noise when the slope underflows float resolution
            if slope < 1e-13 * np.linalg.norm(candidate) * gnorm:
                step = candidate
                break
            ridge *= 10
        if step is None:
            step = -g  # gradient fallback
        # backtracking line search (Armijo)
        t = 1.0
        accepted = False
        for _ in range(30):
            xn = x + t * step
            fn = float(objective(xn))
            if np.isfinite(fn) and fn <= fx + 1e-4 * t * np.dot(g, step):
                accepted = True
                break
            t /= 2
        if not accepted:
            # near the optimum the objective comparison drowns in rounding;
            # accept a full step if it still shrinks the gradient
            xn = x + step
            gn = np.asarray(gradient(xn), dtype=float)
            if np.isfinite(gn).all() and np.linalg.norm(gn) < gnorm:
                x, fx = xn, float(objective(xn))
                continue
            return MinimizeResult(x, fx, gnorm <= tol, False, gnorm)
        x, fx = xn, fn
        ridge /= 4
    g = np.asarray(gradient(x), dtype=float)
    gnorm = float(np.linalg.norm(g))
    if np.linalg.norm(x) > DIVERGENCE_NORM:
        return MinimizeResult(x, fx, False, True, gnorm)
    return MinimizeResult(x, fx, gnorm <= tol, False, gnorm)


def find_root(
    f: Callable[[float], float],
    bracket: tuple[float, float],
    tol: float = 1e-12,
) -> float:
    """Root of a continuous scalar function inside a sign-changing bracket."""
    lo, hi = bracket
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return float(lo)
    if fhi == 0.0:
        return float(hi)
    if np.sign(flo) == np.sign(fhi):
        raise BracketError(f"no sign change on [{lo}, {hi}]: f={flo}, {fhi}")
    root = sopt.brentq(f, lo, hi, xtol=1e-15, rtol=8.9e-16)
    if abs(f(root)) > tol:
        raise ConvergenceError(f"|f(root)|={abs(f(root))} exceeds tol={tol}", residual=abs(f(root)))
    return float(root)
