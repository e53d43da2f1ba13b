"""Covariance pooling of CNN feature tensors.

A (c, h, w) activation tensor is treated as h*w observations in R^c; a
region of the spatial grid is pooled into the population covariance of its
pixel vectors.  Pooled matrices are strongly rank-deficient whenever the
region has fewer pixels than channels (e.g. 196 pixels against 512
channels), so a trace-scaled ridge is always added.
"""

from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np

from .errors import BadShape, RegionOutOfBounds, RegionTooSmall

RIDGE_SCALE = 1e-4  # rank-deficient deep covariances need a stronger ridge
RIDGE_FLOOR = 1e-12
DEFAULT_LEVELS = (1, 2)


class Region(NamedTuple):
    row: int
    col: int
    height: int
    width: int


def region_covariance(tensor: np.ndarray, region: Region | None = None) -> np.ndarray:
    """Population covariance of the region's pixel vectors, two-pass
    (mean first, then centered outer products), exactly symmetric, no
    ridge."""
    t = np.asarray(tensor, dtype=np.float64)
    if t.ndim != 3:
        raise BadShape(f"expected a (c, h, w) tensor, got shape {t.shape}")
    c, h, w = t.shape
    region = region or Region(0, 0, h, w)
    if (
        region.row < 0
        or region.col < 0
        or region.row + region.height > h
        or region.col + region.width > w
    ):
        raise RegionOutOfBounds(f"region {region} outside {h}x{w} map")
    n = region.height * region.width
    if n < 2:
        raise RegionTooSmall(f"region {region} has {n} pixels (< 2)")

    obs = t[
        :, region.row : region.row + region.height, region.col : region.col + region.width
    ].reshape(c, n)
    mu = obs.mean(axis=1)
    dev = obs - mu[:, None]
    cov = np.einsum("cn,dn->cd", dev, dev) / n
    return np.triu(cov) + np.triu(cov, 1).T


def pool_covariance(tensor: np.ndarray, region: Region | None = None) -> np.ndarray:
    """Ridge-stabilized covariance descriptor of one spatial region."""
    cov = region_covariance(tensor, region)
    c = cov.shape[0]
    ridge = RIDGE_SCALE * float(np.trace(cov)) / c + RIDGE_FLOOR
    return cov + ridge * np.eye(c)


def validate_levels(levels: Sequence[int]) -> tuple[int, ...]:
    lv = tuple(sorted(set(int(g) for g in levels)))
    if not lv or lv[0] < 1:
        raise ValueError(f"grid levels must be positive integers, got {levels}")
    if 1 not in lv:
        raise ValueError("grid levels must include the global level 1")
    return lv


def tile_grid(height: int, width: int, g: int) -> list[Region]:
    """g x g balanced integer tiling, row-major."""
    rows = _split(height, g)
    cols = _split(width, g)
    tiles = []
    r = 0
    for rh in rows:
        c = 0
        for cw in cols:
            tiles.append(Region(r, c, rh, cw))
            c += cw
        r += rh
    return tiles


def _split(extent: int, g: int) -> list[int]:
    base, extra = divmod(extent, g)
    return [base + 1] * extra + [base] * (g - extra)


def pool_regions(
    tensor: np.ndarray, levels: Sequence[int] = DEFAULT_LEVELS
) -> list[np.ndarray]:
    """One pooled descriptor per tile: the global region first, then the
    row-major tiles of each finer grid level in ascending order."""
    levels = validate_levels(levels)
    t = np.asarray(tensor, dtype=np.float64)
    if t.ndim != 3:
        raise BadShape(f"expected a (c, h, w) tensor, got shape {t.shape}")
    _, h, w = t.shape
    out = [pool_covariance(t)]
    for g in levels:
        if g == 1:
            continue
        for region in tile_grid(h, w, g):
            if region.height < 2 or region.width < 2:
                raise RegionTooSmall(
                    f"level {g} tiles a {h}x{w} map below 2-pixel extents"
                )
            out.append(pool_covariance(t, region))
    return out
