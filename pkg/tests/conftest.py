"""Shared fixtures and independent oracles used across the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from covfer.mesh import TriMesh


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def random_spd(d: int, rng: np.random.Generator, log_spread: float = 1.5) -> np.ndarray:
    """Random SPD matrix with eigenvalues in exp([-log_spread, log_spread])."""
    g = rng.standard_normal((d, d))
    q, r = np.linalg.qr(g)
    q = q * np.sign(np.diag(r))
    vals = np.exp(rng.uniform(-log_spread, log_spread, size=d))
    m = (q * vals) @ q.T
    return (m + m.T) / 2.0


def matrix_exp_oracle(a: np.ndarray) -> np.ndarray:
    """Scaling-and-squaring Taylor exponential, independent of any
    eigendecomposition."""
    a = np.asarray(a, dtype=np.float64)
    norm = np.linalg.norm(a, ord=np.inf)
    squarings = max(0, int(np.ceil(np.log2(max(norm, 1e-300)))) + 1)
    b = a / (2.0**squarings)
    result = np.eye(a.shape[0])
    term = np.eye(a.shape[0])
    for k in range(1, 30):
        term = term @ b / k
        result = result + term
    for _ in range(squarings):
        result = result @ result
    return result


def cubic_eigvals_oracle(a: np.ndarray) -> np.ndarray:
    """Closed-form eigenvalues of a symmetric 3x3 matrix via the
    trigonometric solution of its characteristic cubic, polished with one
    Newton step per root.  Returns them sorted descending."""
    a = np.asarray(a, dtype=np.float64)
    p1 = a[0, 1] ** 2 + a[0, 2] ** 2 + a[1, 2] ** 2
    if p1 == 0.0:
        return np.sort(np.diag(a))[::-1]
    q = np.trace(a) / 3.0
    p2 = sum((a[i, i] - q) ** 2 for i in range(3)) + 2.0 * p1
    p = np.sqrt(p2 / 6.0)
    b = (a - q * np.eye(3)) / p
    det_b = (
        b[0, 0] * (b[1, 1] * b[2, 2] - b[1, 2] * b[2, 1])
        - b[0, 1] * (b[1, 0] * b[2, 2] - b[1, 2] * b[2, 0])
        + b[0, 2] * (b[1, 0] * b[2, 1] - b[1, 1] * b[2, 0])
    )
    r = min(1.0, max(-1.0, det_b / 2.0))
    phi = np.arccos(r) / 3.0
    eig1 = q + 2.0 * p * np.cos(phi)
    eig3 = q + 2.0 * p * np.cos(phi + 2.0 * np.pi / 3.0)
    eig2 = 3.0 * q - eig1 - eig3

    # characteristic polynomial coefficients for the Newton polish
    c2 = -np.trace(a)
    c1 = (
        a[0, 0] * a[1, 1] + a[0, 0] * a[2, 2] + a[1, 1] * a[2, 2]
        - a[0, 1] ** 2 - a[0, 2] ** 2 - a[1, 2] ** 2
    )
    det_a = (
        a[0, 0] * (a[1, 1] * a[2, 2] - a[1, 2] * a[2, 1])
        - a[0, 1] * (a[1, 0] * a[2, 2] - a[1, 2] * a[2, 0])
        + a[0, 2] * (a[1, 0] * a[2, 1] - a[1, 1] * a[2, 0])
    )
    c0 = -det_a

    def polish(x: float) -> float:
        for _ in range(2):
            f = ((x + c2) * x + c1) * x + c0
            df = (3.0 * x + 2.0 * c2) * x + c1
            if df != 0.0:
                x = x - f / df
        return x

    return np.sort([polish(eig1), polish(eig2), polish(eig3)])[::-1]


def grid_mesh(nx: int = 25, ny: int = 25, spacing: float = 0.1, height=None) -> TriMesh:
    """Rectangular grid in the xy-plane; ``height`` maps (x, y) -> z."""
    xs = np.arange(nx) * spacing
    ys = np.arange(ny) * spacing
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    gz = height(gx, gy) if height is not None else np.zeros_like(gx)
    verts = np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])
    faces = []
    for i in range(nx - 1):
        for j in range(ny - 1):
            v00 = i * ny + j
            v01 = v00 + 1
            v10 = v00 + ny
            v11 = v10 + 1
            faces.append((v00, v10, v11))
            faces.append((v00, v11, v01))
    return TriMesh(verts, np.asarray(faces, dtype=np.int64))


def grid_interior_mask(nx: int, ny: int, margin: int = 3) -> np.ndarray:
    mask = np.zeros(nx * ny, dtype=bool)
    for i in range(margin, nx - margin):
        for j in range(margin, ny - margin):
            mask[i * ny + j] = True
    return mask


def cylinder_mesh(
    radius: float = 2.0, length: float = 8.0, n_around: int = 48, n_along: int = 24
) -> TriMesh:
    """Open cylinder along the x axis, outward windings."""
    verts = []
    for i in range(n_along):
        x = -length / 2.0 + length * i / (n_along - 1)
        for j in range(n_around):
            theta = 2.0 * np.pi * j / n_around
            verts.append((x, radius * np.cos(theta), radius * np.sin(theta)))
    faces = []
    for i in range(n_along - 1):
        for j in range(n_around):
            jn = (j + 1) % n_around
            v00 = i * n_around + j
            v01 = i * n_around + jn
            v10 = (i + 1) * n_around + j
            v11 = (i + 1) * n_around + jn
            faces.append((v00, v01, v11))
            faces.append((v00, v11, v10))
    return TriMesh(np.asarray(verts), np.asarray(faces, dtype=np.int64))


def cylinder_interior_mask(n_around: int, n_along: int, margin: int = 3) -> np.ndarray:
    mask = np.zeros(n_along * n_around, dtype=bool)
    for i in range(margin, n_along - margin):
        mask[i * n_around : (i + 1) * n_around] = True
    return mask


@pytest.fixture(scope="session")
def unit_icosphere():
    from covfer.mesh import icosphere

    return icosphere(subdivisions=3)
