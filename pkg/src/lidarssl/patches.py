"""Partial-scene processing: split a scene into N x N patches and back.

The pipeline for one scene is::

    patches = partition(scene, spec)
    patches = [patch_shift(quadrant_align(p), canon) for p in patches]
    ...run a detector on each patch.as_scene()...
    boxes = fovea_select(list(zip(patches, predictions)))

Each patch keeps its scene-frame cell (the *fovea*) and the transform that
moved it into the canonical frame, so predictions can always be mapped back.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (PointOutOfRange, RangeMismatch, RangeOverflow, UnsupportedGrid,
                     ValidationError)
from .geometry import Box3D, PointCloud, Provenance, Rect, Scene, Transform2D


def grid_edges(lo: float, hi: float, n: int) -> np.ndarray:
    """``n + 1`` cell edges from ``lo`` to ``hi``; both endpoints are exact."""
    edges = lo + (hi - lo) * (np.arange(n + 1) / n)
    edges[0], edges[-1] = lo, hi
    return edges


@dataclass(frozen=True)
class PatchGridSpec:
    n: int = 4
    delta: float = 2.0
    scene_range: Rect = Rect(-51.2, 51.2, -51.2, 51.2)

    def __post_init__(self):
        object.__setattr__(self, "scene_range", Rect(*map(float, self.scene_range)))
        if int(self.n) != self.n or self.n < 1:
            raise ValidationError(f"n must be a positive integer, got {self.n}")
        if not (self.delta >= 0 and math.isfinite(self.delta)):
            raise ValidationError(f"delta must be >= 0, got {self.delta}")
        if self.scene_range.is_degenerate:
            raise ValidationError(f"degenerate scene range {self.scene_range}")

    @property
    def origin_centered(self) -> bool:
        r = self.scene_range
        return r.x_min == -r.x_max and r.y_min == -r.y_max

    def cells(self) -> list[tuple[tuple[int, int], Rect]]:
        """Row-major ``((row, col), cell)``; rows run along y, columns along x."""
        r = self.scene_range
        ex = grid_edges(r.x_min, r.x_max, self.n)
        ey = grid_edges(r.y_min, r.y_max, self.n)
        return [((j, c), Rect(float(ex[c]), float(ex[c + 1]), float(ey[j]), float(ey[j + 1])))
                for j in range(self.n) for c in range(self.n)]

    def canonical_range(self) -> Rect:
        """Smallest origin-anchored square that holds any aligned, expanded patch."""
        side = max(self.scene_range.width, self.scene_range.height) / self.n + 2.0 * self.delta
        return Rect(0.0, side, 0.0, side)


def _quadrant(cell: Rect) -> int:
    sx = 1 if cell.x_min >= 0 else (-1 if cell.x_max <= 0 else 0)
    sy = 1 if cell.y_min >= 0 else (-1 if cell.y_max <= 0 else 0)
    return {(1, 1): 1, (-1, 1): 2, (-1, -1): 3, (1, -1): 4}.get((sx, sy), 0)


@dataclass(frozen=True, eq=False)
class Patch:
    """One grid cell of a scene plus its delta-expanded context.

    ``cell`` is the fovea in the scene frame and never changes; ``fovea`` and
    ``expanded`` follow the patch through alignment. ``owned[i]`` is True when
    ``boxes[i]`` has its center inside the fovea.
    """

    index: tuple[int, int]
    quadrant: int
    cell: Rect
    fovea: Rect
    expanded: Rect
    cloud: PointCloud
    boxes: tuple[Box3D, ...]
    owned: tuple[bool, ...]
    canonical_transform: Transform2D = Transform2D()
    provenance: Provenance = Provenance.SYNTHETIC
    scene_id: str = ""

    @property
    def num_owned(self) -> int:
        return sum(self.owned)

    def as_scene(self) -> Scene:
        return Scene(self.cloud, self.boxes, self.provenance,
                     f"{self.scene_id}/p{self.index[0]}{self.index[1]}")

    def transformed(self, t: Transform2D) -> "Patch":
        if t.is_identity:
            return self
        cloud = PointCloud(t.apply_points(self.cloud.points), t.apply_rect(self.cloud.range))
        return dataclasses.replace(
            self,
            fovea=t.apply_rect(self.fovea),
            expanded=t.apply_rect(self.expanded),
            cloud=cloud,
            boxes=tuple(t.apply_box(b) for b in self.boxes),
            canonical_transform=self.canonical_transform.then(t),
        )


def partition(scene: Scene, spec: PatchGridSpec) -> list[Patch]:
    """Split ``scene`` into ``n * n`` patches in row-major order.

    A point belongs to every expanded rectangle containing it, so with
    ``delta > 0`` points near internal edges are shared by up to four patches.
    Boxes follow their centers the same way.
    """
    rng = spec.scene_range
    if not scene.cloud.range.is_within(rng):
        raise RangeMismatch(f"scene range {scene.cloud.range} exceeds grid range {rng}")
    xy = scene.cloud.points[:, :2]
    outside = ~rng.contains(xy)
    if outside.any():
        i = int(np.flatnonzero(outside)[0])
        raise PointOutOfRange(f"point {i} at {tuple(xy[i])} lies outside {rng}")

    centers = np.array([[b.cx, b.cy] for b in scene.boxes]).reshape(-1, 2)
    patches = []
    for index, cell in spec.cells():
        expanded = cell.expand(spec.delta).clip(rng)
        pmask = expanded.contains(xy)
        visible = np.flatnonzero(expanded.contains(centers))
        owned = cell.contains(centers[visible])
        patches.append(Patch(
            index=index,
            quadrant=_quadrant(cell),
            cell=cell,
            fovea=cell,
            expanded=expanded,
            cloud=PointCloud(scene.cloud.points[pmask], expanded),
            boxes=tuple(scene.boxes[i] for i in visible),
            owned=tuple(bool(o) for o in owned),
            provenance=scene.provenance,
            scene_id=scene.scene_id,
        ))
    return patches


class AlignMode(str, enum.Enum):
    ROTATE = "rotate"
    FLIP = "flip"


_ROTATIONS = {1: 0.0, 2: -0.5 * math.pi, 3: -math.pi, 4: 0.5 * math.pi}
_FLIPS = {1: (False, False), 2: (True, False), 3: (True, True), 4: (False, True)}


def quadrant_transform(quadrant: int, mode: AlignMode | str = AlignMode.ROTATE) -> Transform2D:
    """Transform taking the given quadrant onto the first one."""
    if quadrant not in _ROTATIONS:
        raise UnsupportedGrid(f"patch straddles an axis (quadrant {quadrant})")
    if AlignMode(mode) is AlignMode.ROTATE:
        return Transform2D(rotation=_ROTATIONS[quadrant])
    fx, fy = _FLIPS[quadrant]
    return Transform2D(flip_x=fx, flip_y=fy)


def quadrant_align(patch: Patch, mode: AlignMode | str = AlignMode.ROTATE) -> Patch:
    """Move a scene-frame patch into the first quadrant about the sensor origin.

    Rotate mode turns anticlockwise by 0, 90, 180 or 270 degrees for quadrants
    1, 4, 3, 2. Flip mode mirrors the x and/or y axis instead, which suits
    sensors that are mirror- but not rotation-symmetric. The fovea always lands
    in the closed first quadrant; the delta margin may poke across the axes.
    """
    if not patch.canonical_transform.is_identity:
        raise ValidationError("quadrant_align expects a patch still in the scene frame")
    return patch.transformed(quadrant_transform(patch.quadrant, mode))


def patch_shift(patch: Patch, canonical_range: Rect) -> Patch:
    """Translate the patch so its expanded rectangle starts at the canonical min-corner."""
    canonical_range = Rect(*canonical_range)
    e = patch.expanded
    if e.width > canonical_range.width + 1e-9 or e.height > canonical_range.height + 1e-9:
        raise RangeOverflow(f"expanded patch {e} does not fit into {canonical_range}")
    t = Transform2D(translation=(canonical_range.x_min - e.x_min, canonical_range.y_min - e.y_min))
    return patch.transformed(t)


def canonical_patches(scene: Scene, spec: PatchGridSpec, mode: AlignMode | str = AlignMode.ROTATE,
                      canonical_range: Rect | None = None) -> list[Patch]:
    """partition -> quadrant_align -> patch_shift for every patch of ``scene``."""
    if not spec.origin_centered:
        raise UnsupportedGrid("quadrant alignment needs an origin-centered scene range")
    canon = spec.canonical_range() if canonical_range is None else canonical_range
    return [patch_shift(quadrant_align(p, mode), canon) for p in partition(scene, spec)]


def merge_predictions(per_patch_predictions: Sequence[tuple[Patch, Sequence[Box3D]]],
                      fovea: bool = True) -> list[Box3D]:
    """Map canonical-frame predictions back to the scene frame and concatenate.

    With ``fovea=True`` a prediction survives only if its back-mapped center
    lies in the fovea of the patch that produced it. Foveas tile the scene, so
    no cross-patch suppression is needed. ``fovea=False`` keeps everything,
    duplicates included.
    """
    out = []
    for patch, preds in per_patch_predictions:
        inv = patch.canonical_transform.inverse()
        for box in preds:
            back = inv.apply_box(box) if not inv.is_identity else box
            if not fovea or patch.cell.contains_point(back.cx, back.cy):
                out.append(back)
    return out


def fovea_select(per_patch_predictions: Sequence[tuple[Patch, Sequence[Box3D]]]) -> list[Box3D]:
    return merge_predictions(per_patch_predictions, fovea=True)


def filter_trainable_patches(patches: Sequence[Patch], min_gt: int) -> list[Patch]:
    """Keep patches owning strictly more than ``min_gt`` ground-truth boxes."""
    if min_gt < 0:
        raise ValidationError(f"min_gt must be >= 0, got {min_gt}")
    return [p for p in patches if p.num_owned > min_gt]


def patch_normalizer(patches: Sequence[Patch], alpha: float = 3.0) -> float:
    """Scene-level classification-loss divisor ``alpha * total owned boxes``, at least 1."""
    if not alpha > 0:
        raise ValidationError(f"alpha must be positive, got {alpha}")
    return max(alpha * sum(p.num_owned for p in patches), 1.0)


class NormalizerMode(str, enum.Enum):
    FOREGROUND_COUNT = "foreground_count"
    PATCH_NORMALIZER = "patch_normalizer"
    AVG_NEGATIVES = "avg_negatives"


@dataclass(frozen=True)
class NormalizerSpec:
    mode: NormalizerMode = NormalizerMode.PATCH_NORMALIZER
    alpha: float = 3.0

    def __post_init__(self):
        object.__setattr__(self, "mode", NormalizerMode(self.mode))
        if not self.alpha > 0:
            raise ValidationError(f"alpha must be positive, got {self.alpha}")
