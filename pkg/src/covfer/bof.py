"""Bag-of-features over flattened symmetric matrices.

Flattening keeps the upper triangle with off-diagonal entries scaled by
sqrt(2), which makes the Euclidean distance between vectors equal the
Frobenius distance between the source matrices; k-means therefore clusters
in the log-Euclidean geometry of the descriptors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    AsymmetricInput,
    EmptyInput,
    InconsistentLength,
    LengthMismatch,
    MissingStream,
    TooFewDescriptors,
)
from .spd import symmetry_gap

CODEBOOK_SIZES = (16, 32, 64, 128, 256, 512, 1024)
MAX_LLOYD_ITERATIONS = 300


def flat_length(d: int) -> int:
    return d * (d + 1) // 2


def flatten(m: np.ndarray) -> np.ndarray:
    """Symmetric (d, d) matrix -> vector of length d(d+1)/2, an isometry
    from Frobenius to Euclidean norm."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise AsymmetricInput(f"expected a square matrix, got {m.shape}")
    if symmetry_gap(m) > 1e-8:
        raise AsymmetricInput("matrix is not symmetric")
    d = m.shape[0]
    iu, ju = np.triu_indices(d)
    scale = np.where(iu == ju, 1.0, np.sqrt(2.0))
    return m[iu, ju] * scale


def unflatten(vec: np.ndarray) -> np.ndarray:
    """Inverse of flatten."""
    vec = np.asarray(vec, dtype=np.float64)
    length = vec.shape[0]
    d = int((np.sqrt(8 * length + 1) - 1) / 2)
    if flat_length(d) != length:
        raise LengthMismatch(f"{length} is not a triangular number")
    iu, ju = np.triu_indices(d)
    scale = np.where(iu == ju, 1.0, np.sqrt(2.0))
    m = np.zeros((d, d))
    m[iu, ju] = vec / scale
    return np.triu(m) + np.triu(m, 1).T


@dataclass
class Codebook:
    centroids: np.ndarray  # (k, length)
    kind: str  # "deep" or "shallow"
    seed: int
    stream: str = ""
    objective_trace: tuple[float, ...] = field(default=(), repr=False)

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def length(self) -> int:
        return self.centroids.shape[1]


def _sq_distances(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """(n, k) squared Euclidean distances, BLAS-free for reproducibility."""
    cross = np.einsum("nl,kl->nk", x, centers)
    xx = np.einsum("nl,nl->n", x, x)
    cc = np.einsum("kl,kl->k", centers, centers)
    d2 = xx[:, None] + cc[None, :] - 2.0 * cross
    return np.maximum(d2, 0.0)


def _plus_plus_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(x)
    centers = np.empty((k, x.shape[1]))
    first = int(rng.integers(n))
    centers[0] = x[first]
    d2 = _sq_distances(x, centers[:1])[:, 0]
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            raise TooFewDescriptors(
                f"fewer than {k} distinct descriptors for k-means++ seeding"
            )
        r = rng.random() * total
        idx = int(np.searchsorted(np.cumsum(d2), r, side="right"))
        idx = min(idx, n - 1)
        centers[j] = x[idx]
        d2 = np.minimum(d2, _sq_distances(x, centers[j : j + 1])[:, 0])
    return centers


def train_codebook(
    descriptors,
    k: int,
    seed: int,
    kind: str = "deep",
    stream: str = "",
) -> Codebook:
    """k-means with k-means++ seeding and Lloyd iterations to an assignment
    fixpoint (or 300 iterations).  Clusters that empty out are re-seeded to
    the point farthest from its assigned centroid.  Deterministic per
    seed."""
    try:
        x = np.asarray(descriptors, dtype=np.float64)
    except ValueError as exc:
        raise InconsistentLength("descriptors must share one length") from exc
    if x.ndim != 2:
        raise InconsistentLength("descriptors must share one length")
    n = len(x)
    if n < k:
        raise TooFewDescriptors(f"{n} descriptors cannot fill {k} codewords")

    rng = np.random.Generator(np.random.PCG64(seed))
    centers = _plus_plus_init(x, k, rng)
    trace: list[float] = []
    assign = np.full(n, -1, dtype=np.int64)

    for _ in range(MAX_LLOYD_ITERATIONS):
        d2 = _sq_distances(x, centers)
        new_assign = np.argmin(d2, axis=1)  # ties resolve to the lowest index
        trace.append(float(d2[np.arange(n), new_assign].sum()))
        stole = False

        counts = np.bincount(new_assign, minlength=k)
        sums = np.zeros_like(centers)
        np.add.at(sums, new_assign, x)
        nonempty = counts > 0
        centers[nonempty] = sums[nonempty] / counts[nonempty, None]

        if not nonempty.all():
            cost = d2[np.arange(n), new_assign].copy()
            for empty in np.flatnonzero(~nonempty):
                worst = int(np.argmax(cost))
                centers[empty] = x[worst]
                new_assign[worst] = empty
                cost[worst] = -1.0  # not claimable by another empty cluster
                stole = True

        if not stole and np.array_equal(new_assign, assign):
            break
        assign = new_assign

    return Codebook(
        centroids=centers,
        kind=kind,
        seed=int(seed),
        stream=stream,
        objective_trace=tuple(trace),
    )


def kmeans_objective(descriptors, centroids: np.ndarray) -> float:
    x = np.asarray(descriptors, dtype=np.float64)
    return float(_sq_distances(x, centroids).min(axis=1).sum())


def quantize(descriptors, codebook: Codebook) -> np.ndarray:
    """Hard-assignment histogram over the codebook, L1-normalized so it is
    independent of how many descriptors the sample produced."""
    x = np.asarray(descriptors, dtype=np.float64)
    if x.ndim != 2 or len(x) == 0:
        raise EmptyInput("need at least one descriptor to quantize")
    if x.shape[1] != codebook.length:
        raise LengthMismatch(
            f"descriptor length {x.shape[1]} != codebook length {codebook.length}"
        )
    words = np.argmin(_sq_distances(x, codebook.centroids), axis=1)
    hist = np.bincount(words, minlength=codebook.k).astype(np.float64)
    return hist / hist.sum()


def fuse(histograms: Mapping[str, np.ndarray], order: Sequence[str]) -> np.ndarray:
    """Serial concatenation of per-stream histograms in the configured
    order; each block keeps its own L1 normalization."""
    blocks = []
    for name in order:
        if name not in histograms:
            raise MissingStream(f"no histogram for stream {name!r}")
        blocks.append(np.asarray(histograms[name], dtype=np.float64))
    return np.concatenate(blocks)


def save_codebook(codebook: Codebook, path_prefix) -> None:
    from . import formats

    prefix = Path(path_prefix)
    formats.write_fmap(codebook.centroids, prefix.with_suffix(".fmap"))
    formats.write_sidecar(
        {
            "kind": codebook.kind,
            "stream": codebook.stream,
            "seed": str(codebook.seed),
            "k": str(codebook.k),
            "length": str(codebook.length),
        },
        prefix.with_suffix(".txt"),
    )


def load_codebook(path_prefix) -> Codebook:
    from . import formats

    prefix = Path(path_prefix)
    centroids = np.asarray(formats.read_fmap(prefix.with_suffix(".fmap")), dtype=np.float64)
    side = formats.read_sidecar(prefix.with_suffix(".txt"))
    return Codebook(
        centroids=centroids,
        kind=side.get("kind", "deep"),
        seed=int(side.get("seed", "0")),
        stream=side.get("stream", ""),
    )
