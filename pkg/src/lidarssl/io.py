"""Scene files on disk.

A scene is stored as two files sharing a stem:

* ``<stem>.bin``: little-endian float32, four values per point
  (x, y, z, intensity), the usual KITTI velodyne layout;
* ``<stem>.jsonl``: one JSON object per box with keys
  ``cx, cy, cz, l, w, h, yaw, class`` and optional ``score`` and ``tag``.

The label file may be absent for unlabeled scans.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import InvalidScene
from .geometry import Box3D, PointCloud, Provenance, Rect, Scene

POINT_DTYPE = np.dtype("<f4")


def write_points(path, points: np.ndarray) -> None:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 4)
    Path(path).write_bytes(pts.astype(POINT_DTYPE).tobytes())


def read_points(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) % 16:
        raise InvalidScene(f"{path}: {len(raw)} bytes is not a multiple of 16")
    return np.frombuffer(raw, dtype=POINT_DTYPE).reshape(-1, 4).astype(np.float64)


def box_to_record(box: Box3D) -> dict:
    rec = {"cx": box.cx, "cy": box.cy, "cz": box.cz, "l": box.l, "w": box.w, "h": box.h,
           "yaw": box.yaw, "class": box.class_id}
    if box.score is not None:
        rec["score"] = box.score
    if box.tag is not None:
        rec["tag"] = box.tag
    return rec


def record_to_box(rec: dict) -> Box3D:
    try:
        return Box3D(float(rec["cx"]), float(rec["cy"]), float(rec["cz"]), float(rec["l"]),
                     float(rec["w"]), float(rec["h"]), float(rec["yaw"]), int(rec["class"]),
                     None if rec.get("score") is None else float(rec["score"]), rec.get("tag"))
    except KeyError as e:
        raise InvalidScene(f"label record missing field {e}") from None


def write_labels(path, boxes: Iterable[Box3D]) -> None:
    lines = [json.dumps(box_to_record(b)) for b in boxes]
    Path(path).write_text("".join(line + "\n" for line in lines))


def read_labels(path) -> list[Box3D]:
    boxes = []
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            boxes.append(record_to_box(json.loads(line)))
        except (ValueError, TypeError) as e:
            raise InvalidScene(f"{path}:{n}: {e}") from None
    return boxes


def tight_range(points: np.ndarray) -> Rect:
    """Smallest half-open rectangle containing every point."""
    if len(points) == 0:
        return Rect(0.0, 1.0, 0.0, 1.0)
    x, y = points[:, 0], points[:, 1]
    return Rect(float(x.min()), math.nextafter(float(x.max()), math.inf),
                float(y.min()), math.nextafter(float(y.max()), math.inf))


def write_scene(stem, scene: Scene) -> None:
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    write_points(stem.with_suffix(".bin"), scene.cloud.points)
    write_labels(stem.with_suffix(".jsonl"), scene.boxes)


def read_scene(stem, scene_range: Rect | None = None, provenance: Provenance | str | None = None,
               labels=None) -> Scene:
    """Load ``<stem>.bin`` and, if present, ``<stem>.jsonl`` (or an explicit ``labels`` path).

    Without ``provenance`` the scene is ``pseudo_labeled`` when every box is
    scored, ``labeled`` when no box is, and ``mixed`` otherwise.
    """
    stem = Path(stem)
    if stem.suffix in (".bin", ".jsonl"):
        stem = stem.with_suffix("")
    points = read_points(stem.with_suffix(".bin"))
    label_path = Path(labels) if labels is not None else stem.with_suffix(".jsonl")
    boxes = read_labels(label_path) if label_path.exists() else []
    if provenance is None:
        scored = [b.score is not None for b in boxes]
        if not boxes:
            provenance = Provenance.UNLABELED if labels is None and not label_path.exists() \
                else Provenance.LABELED
        elif all(scored):
            provenance = Provenance.PSEUDO_LABELED
        elif not any(scored):
            provenance = Provenance.LABELED
        else:
            provenance = Provenance.MIXED
    rng = tight_range(points) if scene_range is None else Rect(*scene_range)
    return Scene(PointCloud(points, rng), tuple(boxes), provenance, stem.name)


def list_scenes(directory) -> list[Path]:
    """Sorted stems of every ``.bin`` file in ``directory``."""
    return sorted(p.with_suffix("") for p in Path(directory).glob("*.bin"))
