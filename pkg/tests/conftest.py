"""Shared fixtures and independent oracles.

The oracles here deliberately avoid the package's own geometry code: they
work point by point in plain Python or by Monte-Carlo sampling.
"""

import math

import numpy as np
import pytest
from hypothesis import settings

from lidarssl.geometry import Box3D, PointCloud, Provenance, Rect, Scene

settings.register_profile("ci", max_examples=60, deadline=None)
settings.load_profile("ci")


def random_box(rng, extent=10.0, class_id=1, size=(0.5, 5.0)) -> Box3D:
    l, w, h = rng.uniform(*size, 3)
    return Box3D(float(rng.uniform(-extent, extent)), float(rng.uniform(-extent, extent)),
                 float(rng.uniform(-1, 1)), float(l), float(w), float(h),
                 float(rng.uniform(-math.pi, math.pi)), class_id)


def inside_box_oracle(x, y, z, box: Box3D) -> bool:
    """Rotate the point into the box frame one coordinate at a time."""
    dx, dy = x - box.cx, y - box.cy
    u = math.cos(-box.yaw) * dx - math.sin(-box.yaw) * dy
    v = math.sin(-box.yaw) * dx + math.cos(-box.yaw) * dy
    return (-box.l / 2 <= u < box.l / 2 and -box.w / 2 <= v < box.w / 2
            and box.cz - box.h / 2 <= z < box.cz + box.h / 2)


def _local(xy, box):
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    d = xy - np.array([box.cx, box.cy])
    return d @ np.array([c, s]), d @ np.array([-s, c])


def mc_bev_iou(a: Box3D, b: Box3D, n=1_000_000, seed=0) -> float:
    rng = np.random.default_rng(seed)
    ra, rb = math.hypot(a.l, a.w) / 2, math.hypot(b.l, b.w) / 2
    lo = np.array([min(a.cx - ra, b.cx - rb), min(a.cy - ra, b.cy - rb)])
    hi = np.array([max(a.cx + ra, b.cx + rb), max(a.cy + ra, b.cy + rb)])
    xy = rng.uniform(lo, hi, size=(n, 2))
    ua, va = _local(xy, a)
    ub, vb = _local(xy, b)
    in_a = (np.abs(ua) < a.l / 2) & (np.abs(va) < a.w / 2)
    in_b = (np.abs(ub) < b.l / 2) & (np.abs(vb) < b.w / 2)
    union = (in_a | in_b).sum()
    return float((in_a & in_b).sum() / union) if union else 0.0


def mc_iou_3d(a: Box3D, b: Box3D, n=1_000_000, seed=0) -> float:
    rng = np.random.default_rng(seed)
    ra, rb = math.hypot(a.l, a.w) / 2, math.hypot(b.l, b.w) / 2
    lo = np.array([min(a.cx - ra, b.cx - rb), min(a.cy - ra, b.cy - rb), min(a.z_min, b.z_min)])
    hi = np.array([max(a.cx + ra, b.cx + rb), max(a.cy + ra, b.cy + rb), max(a.z_max, b.z_max)])
    p = rng.uniform(lo, hi, size=(n, 3))
    ua, va = _local(p[:, :2], a)
    ub, vb = _local(p[:, :2], b)
    in_a = (np.abs(ua) < a.l / 2) & (np.abs(va) < a.w / 2) & (np.abs(p[:, 2] - a.cz) < a.h / 2)
    in_b = (np.abs(ub) < b.l / 2) & (np.abs(vb) < b.w / 2) & (np.abs(p[:, 2] - b.cz) < b.h / 2)
    union = (in_a | in_b).sum()
    return float((in_a & in_b).sum() / union) if union else 0.0


def overlapping_pair(rng):
    """Two random boxes close enough to overlap most of the time."""
    a = random_box(rng, extent=1.0, size=(1.0, 4.0))
    b = random_box(rng, extent=1.0, size=(1.0, 4.0))
    return a, b


def make_scene(points, boxes=(), rng=Rect(-32.0, 32.0, -32.0, 32.0),
               provenance=Provenance.SYNTHETIC, scene_id="s"):
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 4)
    return Scene(PointCloud(pts, rng), tuple(boxes), provenance, scene_id)


def uniform_points(rng, n, rect=Rect(-32.0, 32.0, -32.0, 32.0), z=(-1.0, 3.0)):
    return np.column_stack([rng.uniform(rect.x_min, rect.x_max, n), rng.uniform(rect.y_min, rect.y_max, n),
                            rng.uniform(*z, n), rng.uniform(0, 1, n)])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
