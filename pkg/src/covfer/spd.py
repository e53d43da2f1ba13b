"""Symmetric positive-definite matrix machinery.

The eigensolver is a classical cyclic-by-rows Jacobi iteration compiled
with numba: single-threaded scalar code with strict IEEE semantics, so
results are bit-identical across runs and independent of BLAS threading.
The surrounding layers avoid BLAS matmuls on any result path (einsum in
default mode is single-threaded) for the same reason.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numba
import numpy as np

from .errors import (
    AsymmetricInput,
    BadShape,
    DimMismatch,
    NoConvergence,
    NonPositiveEigenvalue,
    ShapeMismatch,
)

OFFDIAG_TOL = 1e-12  # converged when max|off-diag| <= tol * ||X||_F
MAX_SWEEPS = 100
DEFAULT_EPSILON = 1e-4


class EigenPair(NamedTuple):
    eigenvalues: np.ndarray  # (d,) descending
    eigenvectors: np.ndarray  # (d, d), column i pairs with eigenvalue i


def mirror_upper(m: np.ndarray) -> np.ndarray:
    """Exactly symmetric copy: the upper triangle is authoritative."""
    return np.triu(m) + np.triu(m, 1).T


def symmetry_gap(m: np.ndarray) -> float:
    """Relative Frobenius asymmetry of a square matrix."""
    denom = np.linalg.norm(m)
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(m - m.T) / denom)


@numba.njit(cache=True, fastmath=False)
def _jacobi_kernel(a, ut, threshold, max_sweeps):  # pragma: no cover - compiled
    """Cyclic-by-rows Jacobi on a symmetric matrix, in place.

    ``ut`` accumulates the transposed eigenvector matrix (its rows become
    eigenvectors), which keeps every update contiguous; the symmetric
    column halves of ``a`` are mirrored from its freshly rotated rows.
    Returns the number of completed sweeps, or -1 if the off-diagonal mass
    never fell below the threshold.
    """
    d = a.shape[0]
    for sweep in range(max_sweeps):
        off = 0.0
        for i in range(d):
            for j in range(i + 1, d):
                v = abs(a[i, j])
                if v > off:
                    off = v
        if off <= threshold:
            return sweep
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = a[p, q]
                if abs(apq) <= threshold:
                    continue  # already below the convergence bar
                app = a[p, p]
                aqq = a[q, q]
                tau = (aqq - app) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                for k in range(d):
                    akp = a[p, k]
                    akq = a[q, k]
                    a[p, k] = c * akp - s * akq
                    a[q, k] = s * akp + c * akq
                for k in range(d):
                    a[k, p] = a[p, k]
                    a[k, q] = a[q, k]
                a[p, p] = app - t * apq
                a[q, q] = aqq + t * apq
                a[p, q] = 0.0
                a[q, p] = 0.0
                for k in range(d):
                    ukp = ut[p, k]
                    ukq = ut[q, k]
                    ut[p, k] = c * ukp - s * ukq
                    ut[q, k] = s * ukp + c * ukq
    off = 0.0
    for i in range(d):
        for j in range(i + 1, d):
            v = abs(a[i, j])
            if v > off:
                off = v
    return max_sweeps if off <= threshold else -1


def sym_eig(x: np.ndarray, max_sweeps: int = MAX_SWEEPS) -> EigenPair:
    """Full eigendecomposition of a symmetric matrix by cyclic Jacobi.

    Converges when the largest off-diagonal magnitude drops below
    1e-12 times the input's Frobenius norm.  Output is deterministic:
    eigenvalues sorted descending (stable for ties) and each eigenvector's
    largest-magnitude entry made non-negative.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise BadShape(f"expected a square matrix, got {x.shape}")
    if symmetry_gap(x) > 1e-8:
        raise AsymmetricInput("matrix is not symmetric")
    d = x.shape[0]
    a = mirror_upper((x + x.T) / 2.0)
    ut = np.eye(d)

    threshold = OFFDIAG_TOL * float(np.linalg.norm(a))
    if _jacobi_kernel(a, ut, threshold, max_sweeps) < 0:
        raise NoConvergence(f"Jacobi did not converge in {max_sweeps} sweeps")

    order = np.argsort(-np.diag(a), kind="stable")
    values = np.diag(a)[order].copy()
    vectors = ut.T[:, order].copy()
    lead = np.argmax(np.abs(vectors), axis=0)
    flip = vectors[lead, np.arange(d)] < 0.0
    vectors[:, flip] *= -1.0
    return EigenPair(values, vectors)


def _rebuild(values: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    """U diag(values) U^T with exact output symmetry."""
    m = np.einsum("ik,k,jk->ij", vectors, values, vectors)
    return mirror_upper(m)


# --------------------------------------------------------------------------
# manifold layers
# --------------------------------------------------------------------------


def bimap(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Bilinear reduction W X W^T; maps SPD to SPD when W has full row
    rank."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise ShapeMismatch(f"input must be square, got {x.shape}")
    if w.ndim != 2 or w.shape[1] != x.shape[0]:
        raise ShapeMismatch(f"weight {w.shape} does not act on dim {x.shape[0]}")
    if w.shape[0] > w.shape[1]:
        raise ShapeMismatch(f"weight {w.shape} must not increase dimension")
    wx = np.einsum("ab,bc->ac", w, x)
    return mirror_upper(np.einsum("ab,cb->ac", wx, w))


def reeig(x: np.ndarray, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """Eigenvalue rectification: floor the spectrum at epsilon."""
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    values, vectors = sym_eig(x)
    return _rebuild(np.maximum(values, epsilon), vectors)


def logeig(x: np.ndarray) -> np.ndarray:
    """Matrix logarithm of a positive-definite matrix via its spectrum."""
    values, vectors = sym_eig(x)
    if values[-1] <= 0.0:
        raise NonPositiveEigenvalue(f"min eigenvalue {values[-1]:.3e} is not > 0")
    return _rebuild(np.log(values), vectors)


def expeig(x: np.ndarray) -> np.ndarray:
    """Matrix exponential of a symmetric matrix (inverse of logeig)."""
    values, vectors = sym_eig(x)
    return _rebuild(np.exp(values), vectors)


def affine_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Geodesic distance ||log(A^{-1/2} B A^{-1/2})||_F between PD
    matrices; invariant under congruence by any invertible matrix."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimMismatch(f"dimension mismatch: {a.shape} vs {b.shape}")
    values, vectors = sym_eig(a)
    if values[-1] <= 0.0:
        raise NonPositiveEigenvalue("first argument is not positive definite")
    inv_sqrt = _rebuild(1.0 / np.sqrt(values), vectors)
    t = np.einsum("ab,bc->ac", inv_sqrt, b)
    whitened = mirror_upper(np.einsum("ab,bc->ac", t, inv_sqrt))
    wvals, _ = sym_eig(whitened)
    if wvals[-1] <= 0.0:
        raise NonPositiveEigenvalue("second argument is not positive definite")
    return float(np.sqrt(np.sum(np.log(wvals) ** 2)))


def init_stiefel(d_out: int, d_in: int, seed) -> np.ndarray:
    """Seeded random point on the compact Stiefel manifold: a (d_out, d_in)
    matrix with orthonormal rows, via Gram-Schmidt with one
    reorthogonalization pass (BLAS-free, hence bit-reproducible)."""
    if d_out < 1 or d_out > d_in:
        raise BadShape(f"need 1 <= d_out <= d_in, got {d_out} x {d_in}")
    rng = np.random.Generator(np.random.PCG64(seed))
    g = rng.standard_normal((d_in, d_out))
    q = np.empty_like(g)
    for j in range(d_out):
        v = g[:, j].copy()
        for _ in range(2):  # second pass restores orthogonality losses
            if j:
                proj = np.einsum("ik,i->k", q[:, :j], v)
                v = v - np.einsum("ik,k->i", q[:, :j], proj)
        norm = np.sqrt(np.einsum("i,i->", v, v))
        if norm == 0.0:  # vanishing probability; keep going deterministically
            v = np.zeros(d_in)
            v[j] = 1.0
            norm = 1.0
        q[:, j] = v / norm
    return q.T.copy()


# --------------------------------------------------------------------------
# reduction chains
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SpdChainConfig:
    """Dimension schedule for a bilinear reduction chain, e.g. the
    (512, 250, 100, 50) ladder used for 512-channel covariances."""

    dims: tuple[int, ...]
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        object.__setattr__(self, "dims", dims)
        if not dims or any(d < 1 for d in dims):
            raise BadShape(f"invalid dimension schedule {dims}")
        if any(a <= b for a, b in zip(dims, dims[1:])):
            raise BadShape(f"schedule must be strictly decreasing: {dims}")
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")

    @property
    def n_layers(self) -> int:
        return len(self.dims) - 1

    @property
    def output_dim(self) -> int:
        return self.dims[-1]


def init_chain(config: SpdChainConfig, seed: int) -> list[np.ndarray]:
    """One Stiefel weight per reduction stage, deterministically derived
    from the master seed."""
    weights = []
    for k in range(config.n_layers):
        layer_seed = np.random.SeedSequence(entropy=seed, spawn_key=(k,))
        weights.append(init_stiefel(config.dims[k + 1], config.dims[k], layer_seed))
    return weights


def spd_reduce(
    x: np.ndarray, config: SpdChainConfig, weights: list[np.ndarray]
) -> np.ndarray:
    """Reduce an SPD matrix through bimap+reeig stages, then flatten the
    manifold with one final logeig.  An empty schedule still rectifies
    before the log so the input only needs to be PSD."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (config.dims[0], config.dims[0]):
        raise ShapeMismatch(f"input {x.shape} does not match schedule {config.dims}")
    if len(weights) != config.n_layers:
        raise ShapeMismatch(
            f"{len(weights)} weights for {config.n_layers} reduction stages"
        )
    if config.n_layers == 0:
        x = reeig(x, config.epsilon)
    for k, w in enumerate(weights):
        if w.shape != (config.dims[k + 1], config.dims[k]):
            raise ShapeMismatch(f"layer {k} weight has shape {w.shape}")
        x = reeig(bimap(x, w), config.epsilon)
    return logeig(x)


def save_chain(weights, config: SpdChainConfig, directory, stem: str = "spd") -> None:
    """FMAP tensor per layer plus a sidecar with the schedule and epsilon."""
    from . import formats

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for k, w in enumerate(weights):
        formats.write_fmap(w, directory / f"{stem}_layer{k}.fmap")
    formats.write_sidecar(
        {
            "dims": ",".join(str(d) for d in config.dims),
            "epsilon": repr(config.epsilon),
            "layers": str(len(weights)),
        },
        directory / f"{stem}.txt",
    )


def load_chain(directory, stem: str = "spd"):
    """Inverse of save_chain.  Weights come back at float32 precision, so
    row orthonormality holds only to about 1e-6."""
    from . import formats

    directory = Path(directory)
    side = formats.read_sidecar(directory / f"{stem}.txt")
    dims = tuple(int(t) for t in side["dims"].split(","))
    config = SpdChainConfig(dims=dims, epsilon=float(side["epsilon"]))
    weights = []
    for k in range(int(side["layers"])):
        w = formats.read_fmap(directory / f"{stem}_layer{k}.fmap")
        weights.append(np.asarray(w, dtype=np.float64))
    return config, weights
