"""Seeded synthetic LiDAR scenes for desk-scale experiments.

Objects are non-overlapping boxes resting on a ground plane at ``z = 0``.
Ground returns sit slightly below the plane so they never fall inside a box.
Point density follows ``density / (1 + (r / decay_range)**2)`` with ``r`` the
distance to the sensor at the origin, a cheap stand-in for LiDAR sparsity.
Coordinates are rounded to float32 so scenes survive a trip through the
binary point format bit-for-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .classes import CYCLIST, PEDESTRIAN, SIZE_PRIORS, VEHICLE
from .errors import PlacementFailed, ValidationError
from .geometry import Box3D, PointCloud, Provenance, Rect, Scene, bev_iou


@dataclass(frozen=True)
class SyntheticWorldSpec:
    extent: Rect = Rect(-32.0, 32.0, -32.0, 32.0)
    class_counts: dict = field(default_factory=lambda: {VEHICLE: (8, 14), PEDESTRIAN: (3, 8),
                                                        CYCLIST: (2, 5)})
    size_priors: dict = field(default_factory=lambda: dict(SIZE_PRIORS))
    size_jitter: float = 0.08
    ground_density: float = 1.5
    object_density: float = 60.0
    decay_range: float = 20.0
    min_range: float = 3.0
    edge_margin: float = 0.5
    max_attempts: int = 500
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "extent", Rect(*map(float, self.extent)))
        if self.extent.is_degenerate:
            raise ValidationError(f"degenerate extent {self.extent}")
        if self.ground_density < 0 or self.object_density < 0:
            raise ValidationError("densities must be >= 0")
        if self.decay_range <= 0 or self.size_jitter < 0 or self.max_attempts < 1:
            raise ValidationError("decay_range, size_jitter and max_attempts out of range")

    def falloff(self, r):
        return 1.0 / (1.0 + (np.asarray(r) / self.decay_range) ** 2)


def _f32(a: np.ndarray) -> np.ndarray:
    return np.asarray(a, dtype=np.float32).astype(np.float64)


def _place_objects(spec: SyntheticWorldSpec, rng: np.random.Generator) -> list[Box3D]:
    ext = spec.extent
    boxes: list[Box3D] = []
    for cls in sorted(spec.class_counts):
        lo, hi = spec.class_counts[cls]
        count = int(rng.integers(lo, hi + 1))
        prior = spec.size_priors[cls]
        for _ in range(count):
            for _attempt in range(spec.max_attempts):
                l, w, h = (float(v) for v in np.asarray(prior) * np.exp(rng.normal(0, spec.size_jitter, 3)))
                rad = 0.5 * math.hypot(l, w) + spec.edge_margin
                if ext.width <= 2 * rad or ext.height <= 2 * rad:
                    raise PlacementFailed(f"extent {ext} too small for class {cls}")
                cx = float(rng.uniform(ext.x_min + rad, ext.x_max - rad))
                cy = float(rng.uniform(ext.y_min + rad, ext.y_max - rad))
                yaw = float(rng.uniform(-math.pi, math.pi))
                if math.hypot(cx, cy) < spec.min_range + rad:
                    continue
                box = Box3D(cx, cy, 0.5 * h, l, w, h, yaw, cls)
                if all(bev_iou(box, b) == 0.0 for b in boxes):
                    boxes.append(box)
                    break
            else:
                raise PlacementFailed(
                    f"could not place a class-{cls} object after {spec.max_attempts} attempts")
    return boxes


def _surface_points(box: Box3D, n: int, rng: np.random.Generator) -> np.ndarray:
    # top face plus four sides, area weighted, pulled 3% toward the center
    l, w, h = box.l, box.w, box.h
    areas = np.array([l * w, l * h, l * h, w * h, w * h])
    face = rng.choice(5, size=n, p=areas / areas.sum())
    u = rng.uniform(-0.5, 0.5, size=(n, 3))
    local = u * np.array([l, w, h])
    local[face == 0, 2] = 0.5 * h
    local[face == 1, 1] = 0.5 * w
    local[face == 2, 1] = -0.5 * w
    local[face == 3, 0] = 0.5 * l
    local[face == 4, 0] = -0.5 * l
    local *= 0.97
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    pts = np.empty((n, 4))
    pts[:, 0] = box.cx + c * local[:, 0] - s * local[:, 1]
    pts[:, 1] = box.cy + s * local[:, 0] + c * local[:, 1]
    pts[:, 2] = box.cz + local[:, 2]
    pts[:, 3] = rng.uniform(0.2, 1.0, size=n)
    return pts


def _ground_points(spec: SyntheticWorldSpec, rng: np.random.Generator) -> np.ndarray:
    ext = spec.extent
    n = int(rng.poisson(spec.ground_density * ext.area))
    xy = np.column_stack([rng.uniform(ext.x_min, ext.x_max, n), rng.uniform(ext.y_min, ext.y_max, n)])
    keep = rng.random(n) < spec.falloff(np.hypot(xy[:, 0], xy[:, 1]))
    xy = xy[keep]
    m = xy.shape[0]
    z = -rng.uniform(0.02, 0.2, m)
    return np.column_stack([xy, z, rng.uniform(0.0, 0.3, m)])


def generate_scene(spec: SyntheticWorldSpec, scene_id: str = "") -> Scene:
    """Draw one synthetic scan; identical specs give identical scenes."""
    rng = np.random.default_rng(spec.seed)
    boxes = _place_objects(spec, rng)
    chunks = [_ground_points(spec, rng)]
    for box in boxes:
        surface = box.l * box.w + 2.0 * (box.l + box.w) * box.h
        lam = spec.object_density * surface * float(spec.falloff(math.hypot(box.cx, box.cy)))
        chunks.append(_surface_points(box, max(1, int(rng.poisson(lam))), rng))
    points = _f32(np.concatenate(chunks))
    points = points[spec.extent.contains(points[:, :2])]
    return Scene(PointCloud(points, spec.extent), tuple(boxes), Provenance.SYNTHETIC, scene_id)


def scene_seeds(seed: int, count: int, stream: int = 0) -> list[int]:
    """Independent per-scene seeds derived from one global seed."""
    ss = np.random.SeedSequence([seed, stream])
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in ss.spawn(count)]


def generate_dataset(spec: SyntheticWorldSpec, num_labeled: int, num_unlabeled: int,
                     seed: int = 0) -> tuple[list[Scene], list[Scene], list[tuple[Box3D, ...]]]:
    """Labeled scenes, unlabeled scenes (boxes stripped) and the held-out unlabeled boxes."""
    seeds = scene_seeds(seed, num_labeled + num_unlabeled)
    labeled, unlabeled, held_out = [], [], []
    for i, s in enumerate(seeds):
        sid = f"scene_{i:04d}"
        scene = generate_scene(replace(spec, seed=s), sid)
        if i < num_labeled:
            labeled.append(scene.replace(provenance=Provenance.LABELED))
        else:
            unlabeled.append(scene.replace(boxes=(), provenance=Provenance.UNLABELED))
            held_out.append(scene.boxes)
    return labeled, unlabeled, held_out

