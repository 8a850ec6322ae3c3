"""Domain types and exact geometric primitives.

Coordinates are meters in a right-handed frame with z up. Every region test
in the package is half-open: a rectangle ``[x_min, x_max) x [y_min, y_max)``
contains its min faces and excludes its max faces, so grids built from
shared edges assign each point to exactly one cell.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import DegenerateBox, InvalidScene, InvalidTransform

TWO_PI = 2.0 * math.pi


def normalize_yaw(yaw: float) -> float:
    """Wrap an angle into [-pi, pi). Values already in range are returned untouched."""
    if -math.pi <= yaw < math.pi:
        return yaw
    r = math.fmod(yaw + math.pi, TWO_PI)
    if r < 0.0:
        r += TWO_PI
    r -= math.pi
    if r >= math.pi:
        r -= TWO_PI
    return r


class Rect(NamedTuple):
    """Axis-aligned BEV rectangle ``(x_min, x_max, y_min, y_max)``."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    def contains(self, xy) -> np.ndarray:
        """Half-open membership mask for an ``(N, 2+)`` array (or a single point)."""
        xy = np.asarray(xy, dtype=np.float64)
        x, y = xy[..., 0], xy[..., 1]
        return (x >= self.x_min) & (x < self.x_max) & (y >= self.y_min) & (y < self.y_max)

    def contains_point(self, x: float, y: float) -> bool:
        return self.x_min <= x < self.x_max and self.y_min <= y < self.y_max

    def is_within(self, other: "Rect", tol: float = 0.0) -> bool:
        return (self.x_min >= other.x_min - tol and self.x_max <= other.x_max + tol
                and self.y_min >= other.y_min - tol and self.y_max <= other.y_max + tol)

    def expand(self, delta: float) -> "Rect":
        return Rect(self.x_min - delta, self.x_max + delta, self.y_min - delta, self.y_max + delta)

    def clip(self, bounds: "Rect") -> "Rect":
        return Rect(max(self.x_min, bounds.x_min), min(self.x_max, bounds.x_max),
                    max(self.y_min, bounds.y_min), min(self.y_max, bounds.y_max))

    def corners(self) -> np.ndarray:
        return np.array([[self.x_min, self.y_min], [self.x_max, self.y_min],
                         [self.x_max, self.y_max], [self.x_min, self.y_max]])

    @property
    def is_degenerate(self) -> bool:
        return not (self.x_max > self.x_min and self.y_max > self.y_min)


class Provenance(str, enum.Enum):
    LABELED = "labeled"
    UNLABELED = "unlabeled"
    PSEUDO_LABELED = "pseudo_labeled"
    MIXED = "mixed"
    SYNTHETIC = "synthetic"


@dataclass(frozen=True)
class Box3D:
    """7-DoF box: center, dimensions (length along heading, width, height) and yaw.

    ``score`` is set for predictions and pseudo labels only. ``tag`` is free-form
    provenance metadata (e.g. ``"pasted:gt"``) carried through transforms.
    """

    cx: float
    cy: float
    cz: float
    l: float
    w: float
    h: float
    yaw: float = 0.0
    class_id: int = 1
    score: float | None = None
    tag: str | None = None

    def __post_init__(self):
        vals = (self.cx, self.cy, self.cz, self.l, self.w, self.h, self.yaw)
        if not all(math.isfinite(v) for v in vals):
            raise DegenerateBox(f"non-finite box parameters: {vals}")
        if not (self.l > 0 and self.w > 0 and self.h > 0):
            raise DegenerateBox(f"box dimensions must be positive, got {(self.l, self.w, self.h)}")
        if self.score is not None and not (0.0 <= self.score <= 1.0):
            raise DegenerateBox(f"score must lie in [0, 1], got {self.score}")
        object.__setattr__(self, "yaw", normalize_yaw(float(self.yaw)))

    @property
    def center(self) -> np.ndarray:
        return np.array([self.cx, self.cy, self.cz])

    @property
    def bev_area(self) -> float:
        return self.l * self.w

    @property
    def volume(self) -> float:
        return self.l * self.w * self.h

    @property
    def z_min(self) -> float:
        return self.cz - 0.5 * self.h

    @property
    def z_max(self) -> float:
        return self.cz + 0.5 * self.h

    def replace(self, **changes) -> "Box3D":
        return dataclasses.replace(self, **changes)

    def as_array(self) -> np.ndarray:
        return np.array([self.cx, self.cy, self.cz, self.l, self.w, self.h, self.yaw])


def boxes_to_array(boxes: Sequence[Box3D]) -> np.ndarray:
    """Stack boxes into an ``(N, 7)`` array of ``cx, cy, cz, l, w, h, yaw``."""
    if len(boxes) == 0:
        return np.zeros((0, 7))
    return np.array([[b.cx, b.cy, b.cz, b.l, b.w, b.h, b.yaw] for b in boxes], dtype=np.float64)


@dataclass(frozen=True, eq=False)
class PointCloud:
    """``(N, 4)`` float64 array of ``x, y, z, intensity`` plus its BEV range.

    Points are expected inside ``range`` (half-open). The check is available via
    :meth:`out_of_range_mask` rather than enforced on construction, because
    rigid transforms legitimately move min-face points onto max faces.
    """

    points: np.ndarray
    range: Rect

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 4:
            if pts.size == 0:
                pts = pts.reshape(0, 4)
            else:
                raise InvalidScene(f"points must have shape (N, 4), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise InvalidScene("point coordinates must be finite")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "range", Rect(*map(float, self.range)))

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def xyz(self) -> np.ndarray:
        return self.points[:, :3]

    def out_of_range_mask(self) -> np.ndarray:
        return ~self.range.contains(self.points[:, :2])

    def subset(self, index, rng: Rect | None = None) -> "PointCloud":
        return PointCloud(self.points[index], self.range if rng is None else rng)

    @classmethod
    def empty(cls, rng: Rect) -> "PointCloud":
        return cls(np.zeros((0, 4)), rng)


@dataclass(frozen=True, eq=False)
class Scene:
    cloud: PointCloud
    boxes: tuple[Box3D, ...] = ()
    provenance: Provenance = Provenance.SYNTHETIC
    scene_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(self.boxes))
        object.__setattr__(self, "provenance", Provenance(self.provenance))
        if self.provenance is Provenance.LABELED and any(b.score is not None for b in self.boxes):
            raise InvalidScene("labeled scenes must not carry scored boxes")
        if self.provenance is Provenance.PSEUDO_LABELED and any(b.score is None for b in self.boxes):
            raise InvalidScene("pseudo-labeled scenes require a score on every box")

    def replace(self, **changes) -> "Scene":
        return dataclasses.replace(self, **changes)


_QUARTER_TURN = ((1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0))


def _cos_sin(angle: float) -> tuple[float, float]:
    # exact values for multiples of pi/2 keep quadrant alignment free of rounding
    k = round(angle / (0.5 * math.pi))
    if abs(angle - k * 0.5 * math.pi) < 1e-12:
        return _QUARTER_TURN[k % 4]
    return math.cos(angle), math.sin(angle)


@dataclass(frozen=True)
class Transform2D:
    """BEV similarity transform applied as flip, then rotate, then scale, then translate.

    ``flip_x`` mirrors the x coordinate (x -> -x), ``flip_y`` mirrors y. Rotation
    is anticlockwise about the origin. ``z`` is scaled but never flipped or shifted.
    """

    rotation: float = 0.0
    flip_x: bool = False
    flip_y: bool = False
    scale: float = 1.0
    translation: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        tx, ty = self.translation
        object.__setattr__(self, "translation", (float(tx), float(ty)))
        vals = (self.rotation, self.scale, tx, ty)
        if not all(math.isfinite(float(v)) for v in vals):
            raise InvalidTransform(f"non-finite transform parameters: {vals}")
        if not self.scale > 0:
            raise InvalidTransform(f"scale must be positive, got {self.scale}")

    @property
    def is_identity(self) -> bool:
        return (self.rotation == 0.0 and not self.flip_x and not self.flip_y
                and self.scale == 1.0 and self.translation == (0.0, 0.0))

    @property
    def flip_det(self) -> int:
        return -1 if self.flip_x != self.flip_y else 1

    def linear(self) -> np.ndarray:
        """2x2 matrix ``scale * R(rotation) @ F``."""
        c, s = _cos_sin(self.rotation)
        fx = -1.0 if self.flip_x else 1.0
        fy = -1.0 if self.flip_y else 1.0
        return self.scale * np.array([[c * fx, -s * fy], [s * fx, c * fy]])

    def apply_xy(self, xy: np.ndarray) -> np.ndarray:
        xy = np.asarray(xy, dtype=np.float64)
        out = xy @ self.linear().T
        out += np.asarray(self.translation)
        return out

    def apply_yaw(self, yaw: float) -> float:
        if self.flip_x and self.flip_y:
            yaw = yaw + math.pi
        elif self.flip_x:
            yaw = math.pi - yaw
        elif self.flip_y:
            yaw = -yaw
        return normalize_yaw(yaw + self.rotation)

    def inverse(self) -> "Transform2D":
        # F R(-t) = R(t*) F  with t* = t for a single-axis flip, -t otherwise
        rot = self.rotation if self.flip_det < 0 else -self.rotation
        inv_scale = 1.0 / self.scale
        partial = Transform2D(rot, self.flip_x, self.flip_y, inv_scale)
        tx, ty = partial.apply_xy(np.asarray(self.translation))
        return Transform2D(rot, self.flip_x, self.flip_y, inv_scale, (-tx, -ty))

    def then(self, other: "Transform2D") -> "Transform2D":
        """Transform equivalent to applying ``self`` first and ``other`` second."""
        rot = other.rotation + other.flip_det * self.rotation
        tx, ty = other.apply_xy(np.asarray(self.translation))
        return Transform2D(
            rotation=normalize_yaw(rot),
            flip_x=self.flip_x != other.flip_x,
            flip_y=self.flip_y != other.flip_y,
            scale=self.scale * other.scale,
            translation=(tx, ty),
        )

    def apply_rect(self, rect: Rect) -> Rect:
        c = self.apply_xy(rect.corners())
        return Rect(float(c[:, 0].min()), float(c[:, 0].max()), float(c[:, 1].min()), float(c[:, 1].max()))

    def apply_box(self, box: Box3D) -> Box3D:
        (cx, cy), = self.apply_xy(np.array([[box.cx, box.cy]]))
        s = self.scale
        return box.replace(cx=float(cx), cy=float(cy), cz=box.cz * s, l=box.l * s, w=box.w * s,
                           h=box.h * s, yaw=self.apply_yaw(box.yaw))

    def apply_points(self, points: np.ndarray) -> np.ndarray:
        out = np.array(points, dtype=np.float64, copy=True)
        if out.shape[0]:
            out[:, :2] = self.apply_xy(out[:, :2])
            out[:, 2] *= self.scale
        return out


def apply_transform(scene: Scene, t: Transform2D) -> Scene:
    """Map every point, box and the range of ``scene`` through ``t``."""
    if t.is_identity:
        return scene
    cloud = PointCloud(t.apply_points(scene.cloud.points), t.apply_rect(scene.cloud.range))
    return scene.replace(cloud=cloud, boxes=tuple(t.apply_box(b) for b in scene.boxes))


def transform_boxes(boxes: Iterable[Box3D], t: Transform2D) -> list[Box3D]:
    if t.is_identity:
        return list(boxes)
    return [t.apply_box(b) for b in boxes]


# ---------------------------------------------------------------------------
# containment
# ---------------------------------------------------------------------------

def points_in_box_mask(points: np.ndarray, box: Box3D) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.shape[0] == 0:
        return np.zeros(0, dtype=bool)
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    dx = pts[:, 0] - box.cx
    dy = pts[:, 1] - box.cy
    lx = c * dx + s * dy
    ly = -s * dx + c * dy
    hl, hw = 0.5 * box.l, 0.5 * box.w
    return ((lx >= -hl) & (lx < hl) & (ly >= -hw) & (ly < hw)
            & (pts[:, 2] >= box.z_min) & (pts[:, 2] < box.z_max))


def points_in_box(cloud: PointCloud, box: Box3D) -> np.ndarray:
    """Indices of points inside the yaw-rotated cuboid (min faces inclusive)."""
    return np.flatnonzero(points_in_box_mask(cloud.points, box))


def points_in_any_box_mask(points: np.ndarray, boxes: Sequence[Box3D]) -> np.ndarray:
    mask = np.zeros(np.asarray(points).shape[0], dtype=bool)
    for b in boxes:
        mask |= points_in_box_mask(points, b)
    return mask


# ---------------------------------------------------------------------------
# rotated IoU
# ---------------------------------------------------------------------------

def box_corners_bev(box: Box3D) -> np.ndarray:
    """Footprint corners ``(4, 2)`` in anticlockwise order."""
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    hl, hw = 0.5 * box.l, 0.5 * box.w
    local = ((hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw))
    return np.array([(box.cx + c * x - s * y, box.cy + s * x + c * y) for x, y in local])


def _corners_list(box: Box3D) -> list[tuple[float, float]]:
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    hl, hw = 0.5 * box.l, 0.5 * box.w
    return [(box.cx + c * x - s * y, box.cy + s * x + c * y)
            for x, y in ((hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw))]


def clip_convex(subject: list, clip: list) -> list:
    """Sutherland-Hodgman clipping of ``subject`` by the anticlockwise convex ``clip``."""
    out = subject
    n = len(clip)
    for i in range(n):
        if not out:
            break
        ax, ay = clip[i]
        bx, by = clip[(i + 1) % n]
        ex, ey = bx - ax, by - ay
        inp = out
        out = []
        px, py = inp[-1]
        pside = ex * (py - ay) - ey * (px - ax)
        for qx, qy in inp:
            qside = ex * (qy - ay) - ey * (qx - ax)
            if qside >= 0.0:
                if pside < 0.0:
                    t = pside / (pside - qside)
                    out.append((px + t * (qx - px), py + t * (qy - py)))
                out.append((qx, qy))
            elif pside >= 0.0:
                t = pside / (pside - qside)
                out.append((px + t * (qx - px), py + t * (qy - py)))
            px, py, pside = qx, qy, qside
    return out


def polygon_area(poly: list) -> float:
    n = len(poly)
    if n < 3:
        return 0.0
    acc = 0.0
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        acc += x0 * y1 - x1 * y0
    return 0.5 * abs(acc)


def _same_footprint(a: Box3D, b: Box3D) -> bool:
    return a.cx == b.cx and a.cy == b.cy and a.l == b.l and a.w == b.w and a.yaw == b.yaw


def bev_intersection(a: Box3D, b: Box3D) -> float:
    ra = 0.5 * math.hypot(a.l, a.w)
    rb = 0.5 * math.hypot(b.l, b.w)
    if math.hypot(a.cx - b.cx, a.cy - b.cy) >= ra + rb:
        return 0.0
    if _same_footprint(a, b):
        return a.bev_area
    inter = polygon_area(clip_convex(_corners_list(a), _corners_list(b)))
    return min(inter, a.bev_area, b.bev_area)


def visible_part(box: Box3D, rect: Rect) -> tuple[float, Box3D | None]:
    """Share of the footprint inside ``rect`` and the tightest box around that share.

    The second item keeps the box's heading, height and labels; it is None
    when nothing is visible.
    """
    poly = clip_convex(_corners_list(box), [tuple(c) for c in Rect(*rect).corners()])
    frac = min(polygon_area(poly) / box.bev_area, 1.0)
    if frac <= 0.0:
        return 0.0, None
    if frac == 1.0:
        return 1.0, box
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    d = np.asarray(poly) - (box.cx, box.cy)
    a = d @ np.array([c, s])
    b = d @ np.array([-s, c])
    ma, mb = 0.5 * (a.min() + a.max()), 0.5 * (b.min() + b.max())
    return frac, box.replace(cx=box.cx + c * ma - s * mb, cy=box.cy + s * ma + c * mb,
                             l=max(a.max() - a.min(), 1e-6), w=max(b.max() - b.min(), 1e-6))


def visible_fraction(box: Box3D, rect: Rect) -> float:
    """Share of the box footprint lying inside ``rect`` (1 when fully inside)."""
    return visible_part(box, rect)[0]


def _check_area(box: Box3D) -> None:
    if not box.bev_area > 0.0:
        raise DegenerateBox(f"zero-area footprint: {box}")


def bev_iou(a: Box3D, b: Box3D) -> float:
    """Rotated-rectangle IoU in the x-y plane."""
    _check_area(a)
    _check_area(b)
    inter = bev_intersection(a, b)
    if inter <= 0.0:
        return 0.0
    union = a.bev_area + b.bev_area - inter
    return float(min(max(inter / union, 0.0), 1.0))


def z_overlap(a: Box3D, b: Box3D) -> float:
    return max(0.0, min(a.z_max, b.z_max) - max(a.z_min, b.z_min))


def iou_3d(a: Box3D, b: Box3D) -> float:
    """Volumetric IoU for gravity-aligned boxes: BEV intersection times z overlap."""
    _check_area(a)
    _check_area(b)
    if not (a.volume > 0.0 and b.volume > 0.0):
        raise DegenerateBox("zero-volume box")
    dz = z_overlap(a, b)
    if dz <= 0.0:
        return 0.0
    if _same_footprint(a, b) and a.cz == b.cz and a.h == b.h:
        return 1.0
    inter = bev_intersection(a, b) * dz
    if inter <= 0.0:
        return 0.0
    union = a.volume + b.volume - inter
    return float(min(max(inter / union, 0.0), 1.0))


def iou_matrix(boxes_a: Sequence[Box3D], boxes_b: Sequence[Box3D], metric: str = "bev") -> np.ndarray:
    """Pairwise IoU ``(len(a), len(b))``; pairs whose bounding circles miss are skipped."""
    fn = bev_iou if metric == "bev" else iou_3d
    out = np.zeros((len(boxes_a), len(boxes_b)))
    if not len(boxes_a) or not len(boxes_b):
        return out
    A, B = boxes_to_array(boxes_a), boxes_to_array(boxes_b)
    ra = 0.5 * np.hypot(A[:, 3], A[:, 4])
    rb = 0.5 * np.hypot(B[:, 3], B[:, 4])
    d = np.hypot(A[:, None, 0] - B[None, :, 0], A[:, None, 1] - B[None, :, 1])
    for i, j in zip(*np.nonzero(d < ra[:, None] + rb[None, :])):
        out[i, j] = fn(boxes_a[i], boxes_b[j])
    return out


def overlaps_any(box: Box3D, others: Sequence[Box3D]) -> bool:
    """True if ``box`` has positive BEV IoU with any box in ``others``."""
    return any(bev_iou(box, o) > 0.0 for o in others)


__all__ = [
    "Box3D", "PointCloud", "Provenance", "Rect", "Scene", "Transform2D",
    "apply_transform", "bev_intersection", "bev_iou", "box_corners_bev", "boxes_to_array",
    "clip_convex", "iou_3d", "iou_matrix", "normalize_yaw", "overlaps_any", "points_in_any_box_mask",
    "points_in_box", "points_in_box_mask", "polygon_area", "transform_boxes", "visible_fraction",
    "visible_part", "z_overlap",
]
