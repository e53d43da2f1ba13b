"""Triangle-mesh preprocessing, principal curvatures, and 2D map rendering.

Geometry conventions: the face is viewed along +z (the viewer side), face
windings are assumed coherent, and a surface bulging toward its normal has
positive curvature, so a sphere with outward normals has mean curvature
+1/r everywhere.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .errors import (
    CurvaturesMissing,
    DegenerateNeighborhood,
    EmptyAfterCrop,
    EmptyMesh,
)

MAP_SIZE = 224


@dataclass
class TriMesh:
    """Indexed triangle mesh with optional per-vertex differential fields."""

    vertices: np.ndarray  # (n, 3) float64
    faces: np.ndarray  # (m, 3) int64
    normals: np.ndarray | None = None
    k1: np.ndarray | None = None  # larger principal curvature
    k2: np.ndarray | None = None
    mean_curv: np.ndarray | None = None  # (k1 + k2) / 2
    curvedness: np.ndarray | None = None  # sqrt((k1^2 + k2^2) / 2)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_faces(self) -> int:
        return len(self.faces)

    def edges(self) -> np.ndarray:
        """Unique undirected edges as an (e, 2) index array."""
        if not len(self.faces):
            return np.zeros((0, 2), dtype=np.int64)
        pairs = np.concatenate(
            [self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]]
        )
        pairs.sort(axis=1)
        return np.unique(pairs, axis=0)

    def bbox_diagonal(self) -> float:
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return float(np.linalg.norm(hi - lo))

    def has_curvatures(self) -> bool:
        return self.k1 is not None and self.k2 is not None


@dataclass
class MapImage:
    """Square 2D map rendered from a mesh; ``kind`` is 'depth' or
    'principal_curvature'."""

    pixels: np.ndarray  # (MAP_SIZE, MAP_SIZE) float64, background exactly 0
    kind: str

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass
class PreprocessParams:
    smooth_iterations: int = 3
    smooth_lambda: float = 0.6  # must stay in [0, 1] so smoothing contracts
    crop: bool = True
    crop_factor: float = 0.95
    nose_fraction: float = 0.10
    crop_center: np.ndarray | None = None  # overrides the nose-proxy anchor
    crop_radius: float | None = None
    hole_max_edges: int = 12
    median_passes: int = 1


def icosphere(subdivisions: int = 3, radius: float = 1.0) -> TriMesh:
    """Geodesic sphere from a subdivided icosahedron, outward windings."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = [
        (-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
        (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
        (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [np.asarray(v, dtype=np.float64) for v in verts]
    verts = [v / np.linalg.norm(v) for v in verts]

    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(a: int, b: int) -> int:
            key = (a, b) if a < b else (b, a)
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces

    return TriMesh(np.asarray(verts) * radius, np.asarray(faces, dtype=np.int64))


# --------------------------------------------------------------------------
# topology helpers
# --------------------------------------------------------------------------


def adjacency_csr(mesh: TriMesh) -> tuple[np.ndarray, np.ndarray]:
    """1-ring adjacency in CSR form: (indptr, indices), neighbors sorted."""
    n = mesh.num_vertices
    edges = mesh.edges()
    if not len(edges):
        return np.zeros(n + 1, dtype=np.int64), np.zeros(0, dtype=np.int64)
    rows = np.concatenate([edges[:, 0], edges[:, 1]])
    cols = np.concatenate([edges[:, 1], edges[:, 0]])
    order = np.lexsort((cols, rows))
    rows, cols = rows[order], cols[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
    return indptr, cols


def vertex_adjacency(mesh: TriMesh) -> list[np.ndarray]:
    """1-ring neighbor indices per vertex, each sorted ascending."""
    indptr, indices = adjacency_csr(mesh)
    return [indices[indptr[i] : indptr[i + 1]] for i in range(mesh.num_vertices)]


def median_edge_length(mesh: TriMesh) -> float:
    edges = mesh.edges()
    if not len(edges):
        raise EmptyMesh("mesh has no edges")
    lengths = np.linalg.norm(
        mesh.vertices[edges[:, 0]] - mesh.vertices[edges[:, 1]], axis=1
    )
    return float(np.median(lengths))


def boundary_loops(mesh: TriMesh) -> list[list[int]]:
    """Closed loops of boundary vertices, following face winding."""
    directed: dict[tuple[int, int], None] = {}
    for a, b, c in mesh.faces:
        for edge in ((int(a), int(b)), (int(b), int(c)), (int(c), int(a))):
            directed[edge] = None
    boundary = {
        (a, b): None for (a, b) in directed if (b, a) not in directed
    }
    succ: dict[int, int] = {}
    for a, b in boundary:
        succ[a] = b  # manifold boundaries have a single outgoing edge

    loops: list[list[int]] = []
    seen: set[int] = set()
    for start in sorted(succ):
        if start in seen:
            continue
        loop = [start]
        seen.add(start)
        cur = succ[start]
        while cur != start and cur not in seen and cur in succ:
            loop.append(cur)
            seen.add(cur)
            cur = succ[cur]
        if cur == start and len(loop) >= 3:
            loops.append(loop)
    return loops


def nose_anchor(mesh: TriMesh, fraction: float = 0.10) -> np.ndarray:
    """Centroid of the highest-z vertex decile, a landmark-free stand-in
    for the nose region of a +z-facing scan."""
    n = mesh.num_vertices
    count = max(1, int(np.ceil(fraction * n)))
    order = np.argsort(mesh.vertices[:, 2], kind="stable")
    return mesh.vertices[order[-count:]].mean(axis=0)


# --------------------------------------------------------------------------
# preprocessing
# --------------------------------------------------------------------------


def preprocess(mesh: TriMesh, params: PreprocessParams | None = None) -> TriMesh:
    """Clean a raw scan: Laplacian spike smoothing, sphere crop around the
    nose proxy, isolated-vertex removal, small-hole fill, and a one-ring
    median filter on vertex depth.  Derived per-vertex fields are dropped
    because positions change."""
    params = params or PreprocessParams()
    if not 0.0 <= params.smooth_lambda <= 1.0:
        raise ValueError("smooth_lambda must lie in [0, 1]")

    verts = mesh.vertices.copy()
    faces = mesh.faces.copy()

    if params.smooth_iterations > 0:
        verts = _smooth(verts, faces, params.smooth_iterations, params.smooth_lambda)

    if params.crop:
        center = (
            np.asarray(params.crop_center, dtype=np.float64)
            if params.crop_center is not None
            else nose_anchor(TriMesh(verts, faces), params.nose_fraction)
        )
        if params.crop_radius is not None:
            radius = float(params.crop_radius)
        else:
            radius = params.crop_factor * float(
                np.linalg.norm(verts - center, axis=1).max()
            )
        inside = np.linalg.norm(verts - center, axis=1) <= radius
        keep = inside[faces].any(axis=1)  # drop faces fully outside
        faces = faces[keep]
        if not len(faces):
            raise EmptyAfterCrop("crop sphere removed all faces")
        verts, faces = _drop_isolated(verts, faces)

    if params.hole_max_edges > 0 and len(faces):
        verts, faces = _fill_small_holes(verts, faces, params.hole_max_edges)

    if params.median_passes > 0 and len(faces):
        neigh = vertex_adjacency(TriMesh(verts, faces))
        for _ in range(params.median_passes):
            z = verts[:, 2]
            new_z = z.copy()
            for i, nb in enumerate(neigh):
                if len(nb):
                    new_z[i] = np.median(np.append(z[nb], z[i]))
            verts = verts.copy()
            verts[:, 2] = new_z

    return TriMesh(verts, faces)


def _smooth(verts, faces, iterations, lam):
    neigh = vertex_adjacency(TriMesh(verts, faces))
    for _ in range(iterations):
        means = verts.copy()
        for i, nb in enumerate(neigh):
            if len(nb):
                means[i] = verts[nb].mean(axis=0)
        verts = (1.0 - lam) * verts + lam * means
    return verts


def _drop_isolated(verts, faces):
    used = np.zeros(len(verts), dtype=bool)
    used[faces.ravel()] = True
    remap = -np.ones(len(verts), dtype=np.int64)
    remap[used] = np.arange(int(used.sum()))
    return verts[used], remap[faces]


def _fill_small_holes(verts, faces, max_edges):
    loops = boundary_loops(TriMesh(verts, faces))
    new_verts = [verts]
    new_faces = [faces]
    next_id = len(verts)
    for loop in loops:
        if len(loop) > max_edges:
            continue  # the outer face boundary stays open
        centroid = verts[loop].mean(axis=0)
        new_verts.append(centroid[None, :])
        fan = []
        for i, a in enumerate(loop):
            b = loop[(i + 1) % len(loop)]
            fan.append((b, a, next_id))  # reversed edge keeps winding coherent
        new_faces.append(np.asarray(fan, dtype=np.int64))
        next_id += 1
    return np.concatenate(new_verts), np.concatenate(new_faces)


# --------------------------------------------------------------------------
# principal curvatures by local cubic fitting
# --------------------------------------------------------------------------

_CUBIC_TERMS = 9  # u, w, u^2/2, uw, w^2/2, u^3, u^2 w, u w^2, w^3
_QUAD_TERMS = 5


def vertex_normals(mesh: TriMesh) -> np.ndarray:
    """Area-weighted vertex normals from face windings."""
    v = mesh.vertices
    f = mesh.faces
    fn = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
    normals = np.zeros_like(v)
    for col in range(3):
        np.add.at(normals, f[:, col], fn)
    norms = np.linalg.norm(normals, axis=1)
    norms[norms == 0.0] = 1.0
    return normals / norms[:, None]


def estimate_curvatures(mesh: TriMesh, ring_radius: float | None = None) -> TriMesh:
    """Per-vertex principal curvatures k1 >= k2 from a least-squares cubic
    height field over the two-ring plus radius neighborhood, read off the
    Weingarten matrix of the fitted patch.

    Vertices with fewer than 9 neighbors fall back to a quadratic fit;
    fewer than 5 raises DegenerateNeighborhood.
    """
    if not mesh.num_faces:
        raise EmptyMesh("cannot estimate curvatures without faces")
    if ring_radius is None:
        ring_radius = 2.5 * median_edge_length(mesh)

    verts = mesh.vertices
    n = len(verts)
    normals = vertex_normals(mesh)
    neigh = _fit_neighborhoods(mesh, ring_radius)

    indptr, flat = neigh
    counts = np.diff(indptr)
    bad = np.flatnonzero(counts < _QUAD_TERMS)
    if len(bad):
        raise DegenerateNeighborhood(
            f"vertex {int(bad[0])} has {int(counts[bad[0]])} neighbors (< 5)"
        )

    # tangent frames; eigenvalues do not depend on the in-plane choice
    t1 = np.where(
        (np.abs(normals[:, 0]) < 0.9)[:, None],
        np.cross(normals, [1.0, 0.0, 0.0]),
        np.cross(normals, [0.0, 1.0, 0.0]),
    )
    t1 /= np.linalg.norm(t1, axis=1)[:, None]
    t2 = np.cross(normals, t1)

    max_k = int(counts.max())
    idx = np.zeros((n, max_k), dtype=np.int64)
    mask = np.zeros((n, max_k), dtype=bool)
    row = np.repeat(np.arange(n), counts)
    col = np.arange(len(flat)) - np.repeat(indptr[:-1], counts)
    idx[row, col] = flat
    mask[row, col] = True

    d = verts[idx] - verts[:, None, :]
    u = np.einsum("nkc,nc->nk", d, t1)
    w = np.einsum("nkc,nc->nk", d, t2)
    h = np.einsum("nkc,nc->nk", d, normals)

    # normalize the patch extent so the fit is conditioned identically at
    # any mesh scale; curvatures are rescaled back afterwards
    scale = np.einsum("nk,nk->n", np.sqrt(u * u + w * w + h * h), mask) / counts
    scale[scale == 0.0] = 1.0
    u = u / scale[:, None]
    w = w / scale[:, None]
    h = h / scale[:, None]

    basis = np.stack(
        [u, w, 0.5 * u * u, u * w, 0.5 * w * w, u**3, u * u * w, u * w * w, w**3],
        axis=-1,
    )
    basis[~mask] = 0.0
    h = np.where(mask, h, 0.0)

    coeffs = np.zeros((n, _CUBIC_TERMS))
    for terms, rows in (
        (_CUBIC_TERMS, np.flatnonzero(counts >= _CUBIC_TERMS)),
        (_QUAD_TERMS, np.flatnonzero((counts >= _QUAD_TERMS) & (counts < _CUBIC_TERMS))),
    ):
        if not len(rows):
            continue
        b = basis[rows, :, :terms]
        ata = np.einsum("nkc,nkd->ncd", b, b)
        ath = np.einsum("nkc,nk->nc", b, h[rows])
        coeffs[rows, :terms] = _solve_regularized(ata, ath)

    p1, p2 = coeffs[:, 0], coeffs[:, 1]
    fuu, fuw, fww = coeffs[:, 2], coeffs[:, 3], coeffs[:, 4]
    grad = 1.0 + p1 * p1 + p2 * p2
    root = np.sqrt(grad)
    e1, ff, g1 = 1.0 + p1 * p1, p1 * p2, 1.0 + p2 * p2
    ll, mm, nn = fuu / root, fuw / root, fww / root

    det_i = e1 * g1 - ff * ff
    trace_s = (g1 * ll - 2.0 * ff * mm + e1 * nn) / det_i
    det_s = (ll * nn - mm * mm) / det_i
    disc = np.sqrt(np.maximum(trace_s * trace_s - 4.0 * det_s, 0.0))
    ka = 0.5 * (trace_s + disc)
    kb = 0.5 * (trace_s - disc)

    # sign: bulging toward the normal is positive; undo the patch rescale
    k1 = -kb / scale
    k2 = -ka / scale

    mean_curv = 0.5 * (k1 + k2)
    curvedness = np.sqrt(0.5 * (k1 * k1 + k2 * k2))
    return dataclasses.replace(
        mesh, normals=normals, k1=k1, k2=k2, mean_curv=mean_curv, curvedness=curvedness
    )


def _fit_neighborhoods(mesh: TriMesh, radius: float) -> tuple[np.ndarray, np.ndarray]:
    """Two-ring union radius-ball neighbors, excluding the vertex itself,
    as a CSR (indptr, indices) pair with sorted neighbor lists."""
    indptr, indices = adjacency_csr(mesh)
    verts = mesh.vertices
    n = len(verts)
    deg = np.diff(indptr)

    # second ring: for every directed edge (i -> j), attach all of N(j)
    src = np.repeat(np.arange(n), deg)
    reps = deg[indices]
    ring2_rows = np.repeat(src, reps)
    starts = indptr[indices]
    pos = np.arange(int(reps.sum())) - np.repeat(np.cumsum(reps) - reps, reps)
    ring2_cols = indices[np.repeat(starts, reps) + pos]

    ball_rows, ball_cols = _radius_pairs(verts, radius)

    rows = np.concatenate([src, ring2_rows, ball_rows])
    cols = np.concatenate([indices, ring2_cols, ball_cols])
    keep = rows != cols
    keys = np.unique(rows[keep] * np.int64(n) + cols[keep])
    out_rows = keys // n
    out_indices = keys % n
    out_indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(out_rows, minlength=n), out=out_indptr[1:])
    return out_indptr, out_indices


def _radius_pairs(verts: np.ndarray, radius: float):
    """All index pairs (i, j) with ||v_i - v_j|| <= radius, via uniform
    grid binning; avoids the O(n^2) distance matrix."""
    n = len(verts)
    cell = np.floor(verts / radius).astype(np.int64)
    cell -= cell.min(axis=0)
    dims = cell.max(axis=0) + 1
    key = (cell[:, 0] * dims[1] + cell[:, 1]) * dims[2] + cell[:, 2]
    order = np.argsort(key, kind="stable")
    sorted_keys = key[order]

    rows_parts, cols_parts = [], []
    all_idx = np.arange(n)
    for dx in (-1, 0, 1):
        for dy in (-1, 0, 1):
            for dz in (-1, 0, 1):
                target = key + (dx * dims[1] + dy) * dims[2] + dz
                lo = np.searchsorted(sorted_keys, target, side="left")
                hi = np.searchsorted(sorted_keys, target, side="right")
                lengths = hi - lo
                if not lengths.any():
                    continue
                rows = np.repeat(all_idx, lengths)
                pos = np.arange(int(lengths.sum())) - np.repeat(
                    np.cumsum(lengths) - lengths, lengths
                )
                cols = order[np.repeat(lo, lengths) + pos]
                rows_parts.append(rows)
                cols_parts.append(cols)

    rows = np.concatenate(rows_parts)
    cols = np.concatenate(cols_parts)
    diff = verts[rows] - verts[cols]
    near = np.einsum("pc,pc->p", diff, diff) <= radius * radius
    return rows[near], cols[near]


def _solve_regularized(ata, ath):
    rhs = ath[..., None]
    try:
        return np.linalg.solve(ata, rhs)[..., 0]
    except np.linalg.LinAlgError:
        # singular patches (perfectly collinear neighborhoods): damp slightly
        tr = np.trace(ata, axis1=-2, axis2=-1)
        eye = np.eye(ata.shape[-1])
        damped = ata + (1e-12 * tr[:, None, None] + 1e-300) * eye
        return np.linalg.solve(damped, rhs)[..., 0]


# --------------------------------------------------------------------------
# orthographic map rendering
# --------------------------------------------------------------------------


def render_depth_map(mesh: TriMesh) -> MapImage:
    """Orthographic +z depth map: nearest-surface height, min-max scaled to
    [0,1] over the foreground, background exactly 0."""
    zbuf, _ = _rasterize(mesh, values=None)
    fg = np.isfinite(zbuf)
    pixels = np.zeros((MAP_SIZE, MAP_SIZE))
    if fg.any():
        z = zbuf[fg]
        lo, hi = z.min(), z.max()
        pixels[fg] = (z - lo) / (hi - lo) if hi > lo else 1.0
    return MapImage(pixels=pixels, kind="depth")


def render_curvature_map(mesh: TriMesh) -> MapImage:
    """Orthographic map of the interpolated larger principal curvature,
    affinely rescaled to [0,1] over the foreground.  Near-constant fields
    (relative spread below 5%) map to a flat 0.5 instead of amplifying
    noise to full range."""
    if mesh.k1 is None:
        raise CurvaturesMissing("run estimate_curvatures first")
    zbuf, vbuf = _rasterize(mesh, values=mesh.k1)
    fg = np.isfinite(zbuf)
    pixels = np.zeros((MAP_SIZE, MAP_SIZE))
    if fg.any():
        vals = vbuf[fg]
        lo, hi = vals.min(), vals.max()
        span = hi - lo
        if span <= max(1e-12, 0.05 * max(abs(lo), abs(hi))):
            pixels[fg] = 0.5
        else:
            pixels[fg] = (vals - lo) / span
    return MapImage(pixels=pixels, kind="principal_curvature")


def _rasterize(mesh: TriMesh, values: np.ndarray | None):
    """Z-buffer rasterization over a square viewport bounding the xy extent.
    Returns (zbuf, value_buffer); uncovered pixels are -inf/NaN."""
    if not mesh.num_faces:
        raise EmptyMesh("cannot rasterize a mesh without faces")
    verts = mesh.vertices
    lo = verts[:, :2].min(axis=0)
    hi = verts[:, :2].max(axis=0)
    side = float(max(hi[0] - lo[0], hi[1] - lo[1]))
    if side <= 0.0:
        raise EmptyMesh("mesh has zero xy extent")
    cx, cy = (lo + hi) / 2.0
    step = side / MAP_SIZE
    x0 = cx - side / 2.0
    y1 = cy + side / 2.0  # row 0 is the top of the image

    # continuous pixel coordinates: column j center maps to px == j
    px = (verts[:, 0] - x0) / step - 0.5
    py = (y1 - verts[:, 1]) / step - 0.5
    pz = verts[:, 2]

    zbuf = np.full((MAP_SIZE, MAP_SIZE), -np.inf)
    vbuf = np.full((MAP_SIZE, MAP_SIZE), np.nan)
    vals = values if values is not None else pz

    for tri in mesh.faces:
        tx, ty, tz = px[tri], py[tri], pz[tri]
        denom = (ty[1] - ty[2]) * (tx[0] - tx[2]) + (tx[2] - tx[1]) * (ty[0] - ty[2])
        if abs(denom) < 1e-30:
            continue  # degenerate in projection
        c0 = max(0, int(np.ceil(tx.min())))
        c1 = min(MAP_SIZE - 1, int(np.floor(tx.max())))
        r0 = max(0, int(np.ceil(ty.min())))
        r1 = min(MAP_SIZE - 1, int(np.floor(ty.max())))
        if c0 > c1 or r0 > r1:
            continue
        cols = np.arange(c0, c1 + 1)
        rows = np.arange(r0, r1 + 1)
        gx, gy = np.meshgrid(cols, rows)
        l0 = ((ty[1] - ty[2]) * (gx - tx[2]) + (tx[2] - tx[1]) * (gy - ty[2])) / denom
        l1 = ((ty[2] - ty[0]) * (gx - tx[2]) + (tx[0] - tx[2]) * (gy - ty[2])) / denom
        l2 = 1.0 - l0 - l1
        eps = -1e-9
        covered = (l0 >= eps) & (l1 >= eps) & (l2 >= eps)
        if not covered.any():
            continue
        # difference form is exact for constant fields (no 1-ulp spread)
        z = tz[2] + l0 * (tz[0] - tz[2]) + l1 * (tz[1] - tz[2])
        v0, v1, v2 = vals[tri[0]], vals[tri[1]], vals[tri[2]]
        val = v2 + l0 * (v0 - v2) + l1 * (v1 - v2)
        window_z = zbuf[r0 : r1 + 1, c0 : c1 + 1]
        window_v = vbuf[r0 : r1 + 1, c0 : c1 + 1]
        update = covered & (z > window_z)
        window_z[update] = z[update]
        window_v[update] = val[update]

    return zbuf, vbuf
