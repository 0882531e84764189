"""Z2 synchronization instances, the exact small-n posterior, and matrix MSE.

The observation is ``Y = (lam/n) x x^T + W`` with ``x`` uniform on {-1,+1}^n
and ``W`` a GOE matrix. The posterior of ``x`` given ``Y`` is the biased SK
Gibbs measure at inverse temperature ``beta = lam`` (the Bayes-correct
temperature), which is what :func:`exact_posterior` enumerates.

Note on the diagonal of Y: the GOE diagonal (variance 2/n) is kept. It only
shifts ``<sigma, Y sigma>`` by a sigma-independent constant, which cancels in
the posterior; estimators here receive Y as-is.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CapacityError, ParameterError
from .numerics import RngStream, sample_goe

ENUMERATION_CAP = 22  # 2^22 ~ 4M weights: tractable and overflow-safe in log space
_MAGIC = b"Z2SYNC01"


@dataclass(frozen=True)
class Instance:
    """One synthesized synchronization problem."""

    n: int
    lam: float
    x: np.ndarray  # signs, shape (n,)
    W: np.ndarray  # noise, symmetric (n, n)
    Y: np.ndarray  # observation, symmetric (n, n)
    seed: tuple[int, int] | None = None  # provenance only


@dataclass(frozen=True)
class PosteriorSummary:
    """Posterior mean of x x^T and the log partition function."""

    X_bayes: np.ndarray
    log_partition: float


def generate(n: int, lam: float, rng: RngStream) -> Instance:
    """Draw x uniformly, W from the GOE, and assemble Y."""
    if n < 1:
        raise ParameterError(f"n must be positive, got {n}")
    if lam < 0:
        raise ParameterError(f"lambda must be nonnegative, got {lam}")
    gen = rng.generator()
    x = np.where(gen.random(n) < 0.5, -1.0, 1.0)
    w = sample_goe(n, rng.substream(1))
    y = (lam / n) * np.outer(x, x) + w
    return Instance(n=n, lam=lam, x=x, W=w, Y=y, seed=(rng.seed, rng.stream_id))


def _sign_block(start: int, count: int, n_free: int) -> np.ndarray:
    """Rows are the +-1 patterns of consecutive integers in [start, start+count)."""
    codes = np.arange(start, start + count, dtype=np.uint64)[:, None]
    bits = (codes >> np.arange(n_free, dtype=np.uint64)[None, :]) & np.uint64(1)
    return 2.0 * bits.astype(float) - 1.0


def exact_posterior(inst: Instance, chunk: int = 1 << 15) -> PosteriorSummary:
    """E[x x^T | Y] by enumeration over half the cube (global sign symmetry).

    Weights exp(lam <s, Y s>/2) are handled in log space with a global max
    shift. Only available up to n = 22.
    """
    n = inst.n
    if n > ENUMERATION_CAP:
        raise CapacityError(f"exact posterior limited to n <= {ENUMERATION_CAP}, got n={n}")
    lam, y = inst.lam, inst.Y
    n_free = n - 1  # last spin pinned to +1; sigma and -sigma carry equal weight
    total = 1 << n_free

    # pass 1: log-weights for every configuration in the half cube
    logw = np.empty(total)
    for start in range(0, total, chunk):
        count = min(chunk, total - start)
        s = np.empty((count, n))
        s[:, :n_free] = _sign_block(start, count, n_free)
        s[:, n_free] = 1.0
        logw[start : start + count] = 0.5 * lam * np.einsum("ij,ij->i", s @ y, s)
    shift = logw.max()

    # pass 2: accumulate sum_s w(s) s s^T with shifted weights
    weight_sum = 0.0
    acc = np.zeros((n, n))
    for start in range(0, total, chunk):
        count = min(chunk, total - start)
        s = np.empty((count, n))
        s[:, :n_free] = _sign_block(start, count, n_free)
        s[:, n_free] = 1.0
        w = np.exp(logw[start : start + count] - shift)
        weight_sum += w.sum()
        acc += (s * w[:, None]).T @ s
    x_bayes = acc / weight_sum
    # sigma_i^2 = 1 makes the diagonal exactly 1; enforce it to remove
    # summation-order rounding between acc's diagonal and weight_sum
    np.fill_diagonal(x_bayes, 1.0)
    x_bayes = np.clip(x_bayes, -1.0, 1.0)
    # the full-cube partition function doubles the half-cube sum
    log_partition = shift + np.log(weight_sum) + np.log(2.0)
    return PosteriorSummary(X_bayes=x_bayes, log_partition=float(log_partition))


def matrix_mse(estimate: np.ndarray, inst: Instance) -> float:
    """(1/n^2) ||estimate - x x^T||_F^2."""
    estimate = np.asarray(estimate, dtype=float)
    if estimate.shape != (inst.n, inst.n):
        raise ParameterError(
            f"estimate shape {estimate.shape} does not match n={inst.n}"
        )
    diff = estimate - np.outer(inst.x, inst.x)
    return float(np.sum(diff * diff)) / inst.n**2


def mmse_asymptote(lam: float) -> float:
    """Large-n matrix MMSE, 1 - q_star(lam)^2."""
    from .complexity import solve_q_star

    if lam < 0:
        raise ParameterError(f"lambda must be nonnegative, got {lam}")
    q = solve_q_star(lam).q_star
    return 1.0 - q * q


def save_instance(inst: Instance, path: str | Path) -> None:
    """Binary container: header (n, lambda, seed), x as a bit vector, lower W."""
    path = Path(path)
    seed, stream = inst.seed if inst.seed is not None else (0, 0)
    n = inst.n
    bits = np.packbits((inst.x > 0).astype(np.uint8))
    tril = inst.W[np.tril_indices(n)]
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<QdQQ", n, inst.lam, seed, stream))
        fh.write(bits.tobytes())
        fh.write(tril.astype("<f8").tobytes())


def load_instance(path: str | Path) -> Instance:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _MAGIC:
            raise ParameterError(f"not an instance file (magic {magic!r})")
        n, lam, seed, stream = struct.unpack("<QdQQ", fh.read(32))
        n = int(n)
        nbytes = (n + 7) // 8
        bits = np.unpackbits(np.frombuffer(fh.read(nbytes), dtype=np.uint8))[:n]
        x = 2.0 * bits.astype(float) - 1.0
        tril = np.frombuffer(fh.read(8 * n * (n + 1) // 2), dtype="<f8")
    w = np.zeros((n, n))
    w[np.tril_indices(n)] = tril
    w = w + np.tril(w, -1).T
    y = (lam / n) * np.outer(x, x) + w
    return Instance(n=n, lam=lam, x=x, W=w, Y=y, seed=(int(seed), int(stream)))
