"""Solvers: spectral initialization, AMP, TAP descent, mean field, annealing.

All solvers are deterministic given (instance, RngStream, config). Restarts
and seeds parallelize by substream; a single run is sequential.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse.linalg import eigsh

from .errors import ParameterError
from .free_energy import (
    Magnetization,
    SpinStatistics,
    TapContext,
    magnetization_values,
    spin_statistics,
    tap_equations_residual,
    tap_gradient,
    tap_hessian,
    tap_value,
)
from .model import Instance
from .numerics import RngStream, power_iteration

Z_SAFEGUARD = 30.0  # |arctanh(m_i)| cap during reparameterized descent
DENSE_EIG_CUTOFF = 600


@dataclass
class SolverTrace:
    """Per-iteration record of a solver run."""

    iterates_kept: list = field(default_factory=list)
    overlap: list = field(default_factory=list)
    q: list = field(default_factory=list)
    free_energy: list = field(default_factory=list)
    residual: list = field(default_factory=list)
    converged: bool = False

    def append(self, k, overlap, q, free_energy, residual):
        self.iterates_kept.append(k)
        self.overlap.append(overlap)
        self.q.append(q)
        self.free_energy.append(free_energy)
        self.residual.append(residual)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "overlap", "q", "free_energy", "residual"])
            for row in zip(
                self.iterates_kept, self.overlap, self.q, self.free_energy, self.residual
            ):
                writer.writerow([repr(v) for v in row])


@dataclass(frozen=True)
class CriticalPoint:
    m: Magnetization
    stats: SpinStatistics
    grad_norm: float
    hessian_min_eig: float
    multiplicity_hint: int
    converged: bool


def amp_normalization(lam: float) -> float:
    """Scale c0 so the initializer's effective SNR matches the principal
    eigenvector overlap 1 - lam^-2 of the deformed GOE."""
    return lam * np.sqrt(max(0.0, 1.0 - lam**-2))


def spectral_init(
    inst: Instance,
    mode: str = "sign",
    c0: float | None = None,
    tol: float = 1e-10,
    rng: RngStream | None = None,
) -> Magnetization:
    """Initializer from the principal eigenvector of Y.

    "sign" takes sign(v1) pulled slightly inside the cube; "amp" takes
    tanh(c0 sqrt(n) v1), the first line of the message-passing iteration.
    """
    _, v1 = power_iteration(inst.Y, tol=tol, rng=rng or RngStream(0, 977))
    if mode == "sign":
        return Magnetization.of(np.sign(v1) * (1.0 - 1e-6))
    if mode == "amp":
        scale = amp_normalization(inst.lam) if c0 is None else c0
        return Magnetization.of(np.tanh(scale * np.sqrt(inst.n) * v1))
    raise ParameterError(f"unknown spectral init mode {mode!r}")


def amp_solve(
    inst: Instance,
    k_max: int = 200,
    rng: RngStream | None = None,
    init: Magnetization | None = None,
    tol: float = 1e-7,
) -> tuple[Magnetization, SolverTrace]:
    """Message passing m^{k+1} = tanh(lam Y m^k - lam^2 [1-Q(m^k)] m^{k-1}).

    Starts from the spectral initializer (memory term m^{-1} = 0) and stops
    when ||m^{k+1} - m^k||_2 / sqrt(n) <= tol. Overlap collapse at lam <= 1 is
    reported through the trace, never raised.
    """
    lam, n = inst.lam, inst.n
    ctx = TapContext.from_instance(inst)
    m = magnetization_values(init if init is not None else spectral_init(inst, "amp", rng=rng))
    m_prev = np.zeros(n)
    trace = SolverTrace()
    trace.append(
        0,
        float(np.dot(m, inst.x)) / n,
        float(m @ m) / n,
        tap_value(ctx, m),
        np.inf,
    )
    for k in range(1, k_max + 1):
        q = float(m @ m) / n
        m_next = np.tanh(lam * (inst.Y @ m) - lam**2 * (1.0 - q) * m_prev)
        step = float(np.linalg.norm(m_next - m)) / np.sqrt(n)
        m_prev, m = m, m_next
        trace.append(
            k,
            float(np.dot(m, inst.x)) / n,
            float(m @ m) / n,
            tap_value(ctx, m),
            step,
        )
        if step <= tol:
            trace.converged = True
            break
    return Magnetization.of(m), trace


def _hessian_min_eig(ctx: TapContext, m: np.ndarray) -> float:
    h = tap_hessian(ctx, m)
    if len(m) <= DENSE_EIG_CUTOFF:
        return float(np.linalg.eigvalsh(h)[0])
    return float(eigsh(h, k=1, which="SA", return_eigenvectors=False)[0])


def _newton_refine(
    ctx: TapContext, m0: np.ndarray, tol: float, max_iter: int = 200
) -> tuple[np.ndarray, float, bool]:
    """Newton iteration on g_n(m) = 0 with interior safeguard and ||g|| descent."""
    bound = 1.0 - 1e-12
    m = np.clip(np.asarray(m0, dtype=float), -bound, bound)
    g = tap_gradient(ctx, m)
    gnorm = float(np.abs(g).max())
    ridge = 0.0
    for _ in range(max_iter):
        if gnorm <= tol:
            return m, gnorm, True
        h = tap_hessian(ctx, m)
        if ridge > 0:
            h = h + ridge * np.eye(len(m))
        try:
            step = np.linalg.solve(h, -g)
        except np.linalg.LinAlgError:
            ridge = max(2 * ridge, 1e-8)
            continue
        # pull the step back so the iterate stays strictly interior
        t = 1.0
        hit = np.abs(m + step) >= bound
        if np.any(hit):
            room = (bound * np.sign(step[hit]) - m[hit]) / step[hit]
            t = min(1.0, 0.9 * float(room.min()))
        accepted = False
        for _ in range(50):
            mn = np.clip(m + t * step, -bound, bound)
            gn = tap_gradient(ctx, mn)
            gn_norm = float(np.abs(gn).max())
            if gn_norm < gnorm:
                accepted = True
                break
            t /= 2
        if not accepted:
            ridge = max(4 * ridge, 1e-8)
            if ridge > 1e12:
                return m, gnorm, gnorm <= tol
            continue
        m, g, gnorm = mn, gn, gn_norm
        ridge /= 4
    return m, gnorm, gnorm <= tol


def tap_minimize(
    target: Instance | TapContext,
    init: Magnetization | np.ndarray,
    tol: float = 1e-10,
    max_descent: int = 2000,
    descent_tol: float = 1e-7,
    compute_min_eig: bool = True,
) -> tuple[CriticalPoint, SolverTrace]:
    """Minimize the TAP free energy from a given interior initializer.

    Descends F in arctanh coordinates (m = tanh z, |z_i| <= 30) with
    backtracking line search -- every accepted step weakly decreases F -- and
    then polishes the endpoint with Newton on the scaled gradient.
    """
    ctx = TapContext.from_instance(target) if isinstance(target, Instance) else target
    x = ctx.bias_direction()
    n = ctx.n
    m = magnetization_values(init)
    z = np.clip(np.arctanh(m), -Z_SAFEGUARD, Z_SAFEGUARD)
    m = np.tanh(z)
    trace = SolverTrace()
    f = tap_value(ctx, m)
    step_size = 1.0
    for k in range(max_descent):
        g_n = tap_gradient(ctx, m)
        grad_z = g_n * (1.0 - m * m) / n  # chain rule through m = tanh z
        gnorm = float(np.linalg.norm(grad_z))
        trace.append(k, float(np.dot(m, x)) / n, float(m @ m) / n, f, gnorm)
        if gnorm <= descent_tol:
            break
        accepted = False
        t = step_size
        for _ in range(60):
            zn = np.clip(z - t * grad_z * n, -Z_SAFEGUARD, Z_SAFEGUARD)
            mn = np.tanh(zn)
            fn = tap_value(ctx, mn)
            if fn <= f:
                accepted = True
                break
            t /= 2
        if not accepted:
            cp = _finish_point(ctx, m, x, tol, trace, converged=False, compute_min_eig=compute_min_eig)
            return cp, trace
        z, m, f = zn, mn, fn
        step_size = min(2 * t, 64.0)

    m, gnorm, ok = _newton_refine(ctx, m, tol)
    trace.append(
        len(trace.iterates_kept),
        float(np.dot(m, x)) / n,
        float(m @ m) / n,
        tap_value(ctx, m),
        gnorm,
    )
    cp = _finish_point(ctx, m, x, tol, trace, converged=ok, compute_min_eig=compute_min_eig)
    trace.converged = ok
    return cp, trace


def _finish_point(ctx, m, x, tol, trace, converged, compute_min_eig, basins=1):
    gnorm = float(np.abs(tap_gradient(ctx, m)).max())
    min_eig = _hessian_min_eig(ctx, m) if compute_min_eig else np.nan
    return CriticalPoint(
        m=Magnetization.of(m),
        stats=spin_statistics(m, x, ctx.beta),
        grad_norm=gnorm,
        hessian_min_eig=min_eig,
        multiplicity_hint=basins,
        converged=converged,
    )


def mf_solve(
    inst: Instance | TapContext,
    init: Magnetization | np.ndarray,
    damping: float = 0.5,
    tol: float = 1e-8,
    max_iter: int = 20_000,
) -> tuple[Magnetization, SolverTrace]:
    """Damped mean-field iteration m <- (1-g) tanh(lam Y m) + g m.

    If the residual cycles instead of contracting, the best-residual iterate
    is returned with the trace flagged unconverged.
    """
    if not 0 <= damping < 1:
        raise ParameterError(f"damping must be in [0,1), got {damping}")
    ctx = TapContext.from_instance(inst) if isinstance(inst, Instance) else inst
    x = ctx.bias_direction()
    n = ctx.n
    m = magnetization_values(init)
    trace = SolverTrace()
    best_m, best_res = m, np.inf
    stall = 0
    for k in range(max_iter):
        target = np.tanh(ctx.lam * (ctx.Y @ m))
        res = float(np.abs(m - target).max())
        trace.append(k, float(np.dot(m, x)) / n, float(m @ m) / n, None, res)
        if res < best_res * (1 - 1e-12):
            best_m, best_res, stall = m, res, 0
        else:
            stall += 1
        if res <= tol:
            trace.converged = True
            return Magnetization.of(m), trace
        if stall > 200:  # cycling: residual has stopped improving
            return Magnetization.of(best_m), trace
        m = (1 - damping) * target + damping * m
    return Magnetization.of(best_m), trace


def enumerate_critical_points(
    target: Instance | TapContext,
    restarts: int,
    tol: float = 1e-10,
    dedupe_radius: float = 1e-5,
    rng: RngStream | None = None,
) -> list[CriticalPoint]:
    """Multistart Newton census of TAP critical points (small n).

    Initializers: the zero point, the spectral sign initializer when lam > 0,
    and `restarts` uniform draws in arctanh coordinates. Solutions are deduped
    within l2 distance dedupe_radius * sqrt(n), treating m and -m as one pair
    (the representative has nonnegative overlap with the bias direction).
    """
    ctx = TapContext.from_instance(target) if isinstance(target, Instance) else target
    x = ctx.bias_direction()
    n = ctx.n
    rng = rng or RngStream(0, 4242)
    gen = rng.generator()

    inits = [np.zeros(n)]
    if ctx.lam > 0 and isinstance(target, Instance):
        inits.append(magnetization_values(spectral_init(target, "sign", rng=rng.substream(1))))
    for _ in range(restarts):
        z = gen.uniform(-3.0, 3.0, size=n)
        inits.append(np.tanh(z))

    found: list[np.ndarray] = []
    hits: list[int] = []
    for m0 in inits:
        m, gnorm, ok = _newton_refine(ctx, m0, tol)
        if not ok:
            continue
        if np.dot(m, x) < 0:  # canonical sign of the +- pair
            m = -m
        matched = False
        for i, prev in enumerate(found):
            if np.linalg.norm(m - prev) <= dedupe_radius * np.sqrt(n):
                hits[i] += 1
                matched = True
                break
        if not matched:
            found.append(m)
            hits.append(1)

    points = [
        _finish_point(ctx, m, x, tol, None, converged=True, compute_min_eig=True, basins=c)
        for m, c in zip(found, hits)
    ]
    points.sort(key=lambda p: p.stats.e)
    return points


def anneal_ground_state(
    w: np.ndarray,
    rng: RngStream,
    sweeps: int = 1500,
    beta_init: float = 0.2,
    beta_final: float = 50.0,
) -> tuple[float, np.ndarray]:
    """Simulated annealing for the SK Hamiltonian H(s) = -<s, W s>/2.

    Sequential Metropolis sweeps with a geometric temperature ladder; local
    fields are updated in O(n) per accepted flip. Returns the best energy per
    spin seen and the corresponding configuration (an upper bound on the
    ground state energy).
    """
    n = w.shape[0]
    gen = rng.generator()
    sigma = np.where(gen.random(n) < 0.5, -1.0, 1.0)
    h = w @ sigma
    energy = -0.5 * float(sigma @ h)
    best_energy, best_sigma = energy, sigma.copy()
    betas = np.geomspace(beta_init, beta_final, sweeps)
    diag = np.diag(w).copy()
    for beta in betas:
        order = gen.permutation(n)
        u = gen.random(n)
        for idx, i in enumerate(order):
            delta = 2.0 * sigma[i] * h[i] - 2.0 * diag[i]
            if delta <= 0.0 or u[idx] < np.exp(-beta * delta):
                h -= 2.0 * sigma[i] * w[:, i]
                sigma[i] = -sigma[i]
                energy += delta
        if energy < best_energy:
            best_energy, best_sigma = energy, sigma.copy()
    return best_energy / n, best_sigma
