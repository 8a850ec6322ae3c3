"""Occupied-voxel counting as a proxy for sparse-voxel memory.

Sparse convolution backbones allocate features per occupied voxel, so the
number of distinct occupied cells is what a smaller voxel size inflates and
what splitting a scan into patches caps.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import ValidationError
from .geometry import PointCloud, Scene
from .patches import PatchGridSpec, partition


def voxel_keys(points: np.ndarray, voxel_size, z_range, origin) -> np.ndarray:
    """Integer ``(M, 3)`` voxel coordinates of the points whose z lies in ``z_range``."""
    vs = np.asarray(voxel_size, dtype=np.float64)
    if vs.shape != (3,) or not np.all(vs > 0):
        raise ValidationError(f"voxel sizes must be three positive numbers, got {voxel_size}")
    z0, z1 = z_range
    pts = np.asarray(points, dtype=np.float64)
    pts = pts[(pts[:, 2] >= z0) & (pts[:, 2] < z1)]
    return np.floor((pts[:, :3] - np.asarray(origin, dtype=np.float64)) / vs).astype(np.int64)


def estimate_voxels(cloud: PointCloud, voxel_size, z_range=(-2.0, 4.0), origin=None) -> int:
    """Number of distinct occupied voxels.

    The grid is half-open and anchored at ``(range.x_min, range.y_min, z_min)``
    unless ``origin`` is given; pass the scene's origin when counting patches so
    all patches share one global lattice.
    """
    if origin is None:
        origin = (cloud.range.x_min, cloud.range.y_min, z_range[0])
    keys = voxel_keys(cloud.points, voxel_size, z_range, origin)
    if keys.shape[0] == 0:
        return 0
    return int(np.unique(keys, axis=0).shape[0])


def patch_voxel_counts(scene: Scene, grid: PatchGridSpec, voxel_size, z_range=(-2.0, 4.0),
                       shared_origin: bool = True) -> list[int]:
    """Occupied voxels of each patch in row-major order."""
    r = grid.scene_range
    origin = (r.x_min, r.y_min, z_range[0]) if shared_origin else None
    return [estimate_voxels(p.cloud, voxel_size, z_range, origin) for p in partition(scene, grid)]


def memory_table(scene: Scene, grid: PatchGridSpec, voxel_sizes: Sequence,
                 z_range=(-2.0, 4.0)) -> list[dict]:
    """Full-scene and largest-patch voxel counts for each voxel size."""
    rows = []
    for vs in voxel_sizes:
        per_patch = patch_voxel_counts(scene, grid, vs, z_range)
        rows.append({"voxel_size": [float(v) for v in vs],
                     "full_scene_voxels": estimate_voxels(scene.cloud, vs, z_range),
                     "max_patch_voxels": max(per_patch),
                     "sum_patch_voxels": int(sum(per_patch))})
    return rows
