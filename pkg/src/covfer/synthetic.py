"""Synthetic dataset generator.

Licensed face scans cannot ship with the repository, so end-to-end runs
and CI use generated stand-ins: deformed icospheres whose dent patterns
encode the expression class (plus a milder subject-specific pattern), and
low-rank random feature tensors whose pixel covariance is class
dependent.  Everything derives from one master seed, so a rerun writes
bit-identical files.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import formats
from .formats import EXPRESSION_LABELS, ManifestEntry
from .mesh import TriMesh, icosphere

TENSOR_STREAM = "synthetic-deep"
TENSOR_CHANNELS = 32
TENSOR_SIDE = 14
TENSOR_RANK = 4


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(entropy=seed, spawn_key=key))
    )


def _dents(rng: np.random.Generator, count, amp_range, sigma_range):
    centers = rng.standard_normal((count, 3))
    centers /= np.linalg.norm(centers, axis=1)[:, None]
    amps = rng.uniform(*amp_range, size=count)
    sigmas = rng.uniform(*sigma_range, size=count)
    return centers, amps, sigmas


def _dent_field(dirs: np.ndarray, dents) -> np.ndarray:
    centers, amps, sigmas = dents
    field = np.zeros(len(dirs))
    for center, amp, sigma in zip(centers, amps, sigmas):
        d2 = np.einsum("vc,vc->v", dirs - center, dirs - center)
        field += amp * np.exp(-d2 / (2.0 * sigma * sigma))
    return field


def generate_synthetic(
    out_dir, seed: int, subjects: int = 30, classes: int = 6
) -> Path:
    """Write meshes, feature tensors and a manifest; returns the manifest
    path.  One sample per (subject, class)."""
    if not 2 <= classes <= len(EXPRESSION_LABELS):
        raise ValueError(f"classes must lie in [2, {len(EXPRESSION_LABELS)}]")
    labels = EXPRESSION_LABELS[:classes]
    out_dir = Path(out_dir)
    (out_dir / "meshes").mkdir(parents=True, exist_ok=True)
    (out_dir / "tensors").mkdir(parents=True, exist_ok=True)

    base = icosphere(subdivisions=4)
    dirs = base.vertices / np.linalg.norm(base.vertices, axis=1)[:, None]

    class_dents = [
        _dents(_rng(seed, 1, ci), 3, (0.10, 0.18), (0.22, 0.40))
        for ci in range(classes)
    ]
    class_fields = [_dent_field(dirs, d) for d in class_dents]
    class_bases = [
        _rng(seed, 4, ci).standard_normal((TENSOR_CHANNELS, TENSOR_RANK)) * 0.9
        for ci in range(classes)
    ]

    n_pix = TENSOR_SIDE * TENSOR_SIDE
    entries: list[ManifestEntry] = []
    for si in range(subjects):
        subject_id = f"subj{si:03d}"
        subject_field = _dent_field(
            dirs, _dents(_rng(seed, 2, si), 2, (0.015, 0.035), (0.20, 0.40))
        )
        subject_vec = _rng(seed, 5, si).standard_normal(TENSOR_CHANNELS) * 0.35
        for ci, label in enumerate(labels):
            sample_id = f"s{si:03d}_{label}"
            noise_rng = _rng(seed, 3, si, ci)

            radii = 1.0 - class_fields[ci] - subject_field
            radii = radii + noise_rng.standard_normal(len(dirs)) * 0.002
            radii = np.clip(radii, 0.7, None)
            mesh = TriMesh(dirs * radii[:, None], base.faces)
            mesh_path = out_dir / "meshes" / f"{sample_id}.obj"
            formats.write_obj(mesh, mesh_path)

            tensor_rng = _rng(seed, 6, si, ci)
            z = tensor_rng.standard_normal((TENSOR_RANK, n_pix))
            zs = tensor_rng.standard_normal(n_pix)
            eps = tensor_rng.standard_normal((TENSOR_CHANNELS, n_pix)) * 0.5
            pixels = (
                np.einsum("cr,rn->cn", class_bases[ci], z)
                + subject_vec[:, None] * zs[None, :]
                + eps
            )
            tensor = pixels.reshape(TENSOR_CHANNELS, TENSOR_SIDE, TENSOR_SIDE)
            tensor_path = out_dir / "tensors" / f"{sample_id}.fmap"
            formats.write_fmap(tensor, tensor_path)

            entries.append(
                ManifestEntry(
                    sample_id=sample_id,
                    subject_id=subject_id,
                    label=label,
                    mesh_path=mesh_path,
                    tensor_paths={TENSOR_STREAM: tensor_path},
                )
            )

    manifest_path = out_dir / "manifest.tsv"
    formats.write_manifest(entries, manifest_path)
    return manifest_path
