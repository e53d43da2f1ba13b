"""Surface patches and their 6x6 geometric covariance descriptors.

Each face is summarized by a fixed number of patches (default 40) found by
farthest-point sampling.  Every patch point contributes the feature vector
(x, y, z, curvedness, mean curvature, distance-from-origin) and the patch
is described by the population covariance of those vectors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CurvaturesMissing, PatchTooSmall, TooFewVertices
from .mesh import TriMesh, nose_anchor

DEFAULT_PATCH_COUNT = 40
DEFAULT_RADIUS_FRACTION = 0.15
MIN_PATCH_POINTS = 12  # a 6x6 covariance needs this many samples to be usable
RIDGE_SCALE = 1e-6
RIDGE_FLOOR = 1e-12
FEATURE_DIM = 6


@dataclass
class Patch:
    center: np.ndarray  # the reference point (a mesh vertex)
    radius: float
    point_ids: np.ndarray  # member vertex indices, sorted


def bounding_sphere(mesh: TriMesh) -> tuple[np.ndarray, float]:
    """Centroid-anchored bounding sphere of the vertex set."""
    center = mesh.vertices.mean(axis=0)
    radius = float(np.linalg.norm(mesh.vertices - center, axis=1).max())
    return center, radius


def sample_patch_centers(
    mesh: TriMesh,
    count: int = DEFAULT_PATCH_COUNT,
    fraction: float = DEFAULT_RADIUS_FRACTION,
) -> list[Patch]:
    """Farthest-point sampling of patch centers, seeded at the vertex
    nearest the nose anchor.  Patch radius is ``fraction`` of the whole
    face's bounding-sphere radius; ties go to the lowest vertex index, so
    the result is deterministic."""
    verts = mesh.vertices
    n = len(verts)
    if n < count:
        raise TooFewVertices(f"{n} vertices cannot seed {count} patches")
    _, sphere_radius = bounding_sphere(mesh)
    radius = fraction * sphere_radius

    anchor = nose_anchor(mesh)
    seed = int(np.argmin(np.linalg.norm(verts - anchor, axis=1)))
    chosen = [seed]
    min_dist = np.linalg.norm(verts - verts[seed], axis=1)
    while len(chosen) < count:
        nxt = int(np.argmax(min_dist))
        chosen.append(nxt)
        np.minimum(min_dist, np.linalg.norm(verts - verts[nxt], axis=1), out=min_dist)

    patches = []
    for idx in chosen:
        dist = np.linalg.norm(verts - verts[idx], axis=1)
        members = np.flatnonzero(dist <= radius)
        patches.append(Patch(center=verts[idx].copy(), radius=radius, point_ids=members))
    return patches


def point_features(mesh: TriMesh, point_ids: np.ndarray) -> np.ndarray:
    """(n, 6) feature rows [x, y, z, C, M, D] for the given vertices."""
    if not mesh.has_curvatures():
        raise CurvaturesMissing("estimate curvatures before extracting features")
    v = mesh.vertices[point_ids]
    return np.column_stack(
        [
            v,
            mesh.curvedness[point_ids],
            mesh.mean_curv[point_ids],
            np.linalg.norm(v, axis=1),
        ]
    )


def feature_covariance(features: np.ndarray) -> np.ndarray:
    """Population covariance (divisor n) of feature rows, exactly
    symmetric, no ridge."""
    f = np.asarray(features, dtype=np.float64)
    mu = f.mean(axis=0)
    dev = f - mu
    cov = np.einsum("nc,nd->cd", dev, dev) / len(f)
    return np.triu(cov) + np.triu(cov, 1).T


def covariance_ridge(cov: np.ndarray) -> float:
    return RIDGE_SCALE * float(np.trace(cov)) / cov.shape[0] + RIDGE_FLOOR


def patch_covariance(mesh: TriMesh, patch: Patch) -> np.ndarray:
    """Ridge-stabilized 6x6 covariance descriptor of one patch."""
    if len(patch.point_ids) < MIN_PATCH_POINTS:
        raise PatchTooSmall(
            f"patch has {len(patch.point_ids)} points (< {MIN_PATCH_POINTS})"
        )
    cov = feature_covariance(point_features(mesh, patch.point_ids))
    return cov + covariance_ridge(cov) * np.eye(FEATURE_DIM)


def shallow_descriptors(
    mesh: TriMesh,
    count: int = DEFAULT_PATCH_COUNT,
    fraction: float = DEFAULT_RADIUS_FRACTION,
) -> list[np.ndarray]:
    """All patch covariance descriptors of a face, in sampling order."""
    return [
        patch_covariance(mesh, patch)
        for patch in sample_patch_centers(mesh, count, fraction)
    ]
