"""Checkerboard scene mixing on a BEV pillar grid.

Two scenes are cut into the same grid of square pillars and the output takes
pillar ``(j, k)`` from scene A when ``j + k`` is even and from scene B when it
is odd, so every pair of edge-adjacent pillars comes from different scans.
Boxes travel with the pillar holding their center and keep their full extent;
only their points get truncated.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .errors import BoxOutOfRange, RangeMismatch, ValidationError
from .geometry import Box3D, PointCloud, Provenance, Rect, Scene, Transform2D, apply_transform


@dataclass(frozen=True)
class PillarGridSpec:
    """Grid of ``pillar_size`` squares anchored at the range min-corner.

    When the range is not a multiple of ``pillar_size`` the last row and column
    are narrower cells rather than being dropped.
    """

    scene_range: Rect
    pillar_size: float = 5.0

    def __post_init__(self):
        object.__setattr__(self, "scene_range", Rect(*map(float, self.scene_range)))
        if not (self.pillar_size > 0 and math.isfinite(self.pillar_size)):
            raise ValidationError(f"pillar_size must be positive, got {self.pillar_size}")
        if self.scene_range.is_degenerate:
            raise ValidationError(f"degenerate scene range {self.scene_range}")

    @classmethod
    def from_count(cls, scene_range: Rect, m: int) -> "PillarGridSpec":
        r = Rect(*scene_range)
        if m < 1:
            raise ValidationError(f"m must be >= 1, got {m}")
        return cls(r, max(r.width, r.height) / m)

    def _count(self, extent: float) -> int:
        return max(1, math.ceil(extent / self.pillar_size - 1e-9))

    @property
    def shape(self) -> tuple[int, int]:
        """``(rows, cols)``; rows run along y."""
        return self._count(self.scene_range.height), self._count(self.scene_range.width)

    @property
    def m(self) -> int:
        rows, cols = self.shape
        if rows != cols:
            raise ValidationError(f"non-square pillar grid {self.shape}")
        return rows

    def index(self, xy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Half-open ``(row, col)`` of each xy; callers ensure points are in range."""
        xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
        rows, cols = self.shape
        r = self.scene_range
        col = np.floor((xy[:, 0] - r.x_min) / self.pillar_size).astype(np.int64)
        row = np.floor((xy[:, 1] - r.y_min) / self.pillar_size).astype(np.int64)
        return np.clip(row, 0, rows - 1), np.clip(col, 0, cols - 1)

    def cell(self, row: int, col: int) -> Rect:
        r = self.scene_range
        x0 = r.x_min + col * self.pillar_size
        y0 = r.y_min + row * self.pillar_size
        return Rect(x0, min(x0 + self.pillar_size, r.x_max), y0, min(y0 + self.pillar_size, r.y_max))


def pillar_sources(spec: PillarGridSpec, parity_swap: bool = False) -> np.ndarray:
    """``(rows, cols)`` array holding 0 where scene A supplies the pillar, 1 for scene B."""
    rows, cols = spec.shape
    j, k = np.indices((rows, cols))
    return (j + k + int(parity_swap)) % 2


def assign_boxes_to_pillars(boxes, spec: PillarGridSpec) -> dict[tuple[int, int], list[Box3D]]:
    """Group boxes by the pillar containing their center."""
    boxes = list(boxes)
    out: dict[tuple[int, int], list[Box3D]] = defaultdict(list)
    if not boxes:
        return dict(out)
    centers = np.array([[b.cx, b.cy] for b in boxes])
    bad = ~spec.scene_range.contains(centers)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise BoxOutOfRange(f"box {i} center {tuple(centers[i])} outside {spec.scene_range}")
    rows, cols = spec.index(centers)
    for b, j, k in zip(boxes, rows, cols):
        out[(int(j), int(k))].append(b)
    return dict(out)


@dataclass(frozen=True, eq=False)
class MixPair:
    scene_a: Scene
    scene_b: Scene
    pre_aug_a: Transform2D = field(default_factory=Transform2D)
    pre_aug_b: Transform2D = field(default_factory=Transform2D)
    parity_swap: bool = False
    seed: int = 0


def random_pre_augmentation(rng: np.random.Generator,
                            rotation: tuple[float, float] = (-math.pi / 4, math.pi / 4),
                            flip_prob: float = 0.5,
                            scale: tuple[float, float] = (0.95, 1.05)) -> Transform2D:
    """Draw a random rotation, flip and scaling."""
    rot = float(rng.uniform(*rotation))
    fx, fy = (bool(v) for v in rng.random(2) < flip_prob)
    s = float(rng.uniform(*scale))
    return Transform2D(rotation=rot, flip_x=fx, flip_y=fy, scale=s)


def random_mix_pair(scene_a: Scene, scene_b: Scene, seed: int, randomize_swap: bool = True,
                    **aug_kwargs) -> MixPair:
    """Seeded :class:`MixPair` with independent pre-augmentation for each scene."""
    rng = np.random.default_rng(seed)
    aug_a = random_pre_augmentation(rng, **aug_kwargs)
    aug_b = random_pre_augmentation(rng, **aug_kwargs)
    swap = bool(rng.integers(2)) if randomize_swap else False
    return MixPair(scene_a, scene_b, aug_a, aug_b, swap, seed)


def _crop(scene: Scene, rng: Rect) -> Scene:
    pts = scene.cloud.points
    keep = rng.contains(pts[:, :2])
    boxes = tuple(b for b in scene.boxes if rng.contains_point(b.cx, b.cy))
    return scene.replace(cloud=PointCloud(pts[keep], rng), boxes=boxes)


def prepare(scene: Scene, t: Transform2D, spec: PillarGridSpec) -> Scene:
    """Apply the pre-mix augmentation and drop everything outside the grid."""
    return _crop(apply_transform(scene, t), spec.scene_range)


def pillar_mix(pair: MixPair, spec: PillarGridSpec) -> Scene:
    """Interleave the pillars of ``pair.scene_a`` and ``pair.scene_b``.

    Output points are ordered by pillar (row-major) and keep their source order
    within a pillar. Boxes are ordered the same way.
    """
    if pair.scene_a.cloud.range != pair.scene_b.cloud.range:
        raise RangeMismatch(
            f"scene ranges differ: {pair.scene_a.cloud.range} vs {pair.scene_b.cloud.range}")
    a = prepare(pair.scene_a, pair.pre_aug_a, spec)
    b = prepare(pair.scene_b, pair.pre_aug_b, spec)
    src = pillar_sources(spec, pair.parity_swap)
    cols = spec.shape[1]

    chunks, keys = [], []
    for which, s in ((0, a), (1, b)):
        j, k = spec.index(s.cloud.points[:, :2])
        sel = src[j, k] == which
        chunks.append(s.cloud.points[sel])
        keys.append(j[sel] * cols + k[sel])
    key = np.concatenate(keys)
    order = np.argsort(key, kind="stable")
    points = np.concatenate(chunks)[order]

    boxes, bkeys = [], []
    for which, s in ((0, a), (1, b)):
        for (j, k), group in assign_boxes_to_pillars(s.boxes, spec).items():
            if src[j, k] == which:
                boxes.extend(group)
                bkeys.extend([j * cols + k] * len(group))
    border = np.argsort(np.asarray(bkeys, dtype=np.int64), kind="stable")
    boxes = [boxes[i] for i in border]

    return Scene(PointCloud(points, spec.scene_range), tuple(boxes), Provenance.MIXED,
                 f"mix({pair.scene_a.scene_id},{pair.scene_b.scene_id})")
