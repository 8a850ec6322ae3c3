"""Copy-paste object augmentation from ground-truth and pseudo-label databases.

Objects are cropped with their points into a class-indexed database and
pasted back, at their original coordinates, into other frames. Which
(database, target frame) combinations are allowed is a :class:`PastePolicy`
choice, which covers classic gt-sampling, PseudoAugment-style sampling and
the full four-direction scheme with the same code path.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .classes import CYCLIST, PEDESTRIAN, VEHICLE
from .errors import DirectionForbidden, ProvenanceMismatch, ValidationError
from .geometry import (Box3D, PointCloud, Provenance, Scene, bev_iou, points_in_any_box_mask,
                       points_in_box)
from .io import box_to_record, read_points, record_to_box, write_points


class DatabaseKind(str, enum.Enum):
    GT = "gt"
    PSEUDO = "pseudo"


class Frame(str, enum.Enum):
    LABELED = "labeled"
    UNLABELED = "unlabeled"


class Direction(str, enum.Enum):
    GT_TO_LABELED = "gt->labeled"
    GT_TO_UNLABELED = "gt->unlabeled"
    PSEUDO_TO_LABELED = "pseudo->labeled"
    PSEUDO_TO_UNLABELED = "pseudo->unlabeled"

    @classmethod
    def of(cls, kind: DatabaseKind, frame: Frame) -> "Direction":
        return cls(f"{DatabaseKind(kind).value}->{Frame(frame).value}")


GT_SAMPLING = frozenset({Direction.GT_TO_LABELED})
PSEUDO_AUGMENT = frozenset({Direction.GT_TO_LABELED, Direction.PSEUDO_TO_LABELED,
                            Direction.GT_TO_UNLABELED})
SEMI_SAMPLING = frozenset(Direction)

# direction sets of the sampling ablation, keyed by experiment letter
ABLATION_DIRECTIONS = {
    "a": GT_SAMPLING,
    "b": frozenset({Direction.GT_TO_LABELED, Direction.PSEUDO_TO_LABELED}),
    "c": frozenset({Direction.GT_TO_LABELED, Direction.GT_TO_UNLABELED}),
    "d": frozenset({Direction.GT_TO_LABELED, Direction.PSEUDO_TO_UNLABELED}),
    "e": PSEUDO_AUGMENT,
    "f": SEMI_SAMPLING,
}


def frame_of(scene: Scene) -> Frame:
    if scene.provenance in (Provenance.LABELED, Provenance.SYNTHETIC):
        return Frame.LABELED
    return Frame.UNLABELED


@dataclass(frozen=True, eq=False)
class ObjectSample:
    box: Box3D
    points: np.ndarray
    source: DatabaseKind
    source_scene_id: str = ""
    sample_id: str = ""

    @property
    def score(self) -> float | None:
        return self.box.score


@dataclass
class SampleDatabase:
    kind: DatabaseKind
    by_class: dict[int, list[ObjectSample]] = field(default_factory=dict)

    def __len__(self) -> int:
        return sum(len(v) for v in self.by_class.values())

    def samples(self) -> list[ObjectSample]:
        return [s for cls in sorted(self.by_class) for s in self.by_class[cls]]


def build_database(scenes: Sequence[Scene], kind: DatabaseKind | str,
                   score_threshold: float | None = None) -> SampleDatabase:
    """Crop every qualifying box of ``scenes`` with the points inside it.

    Pseudo databases need pseudo-labeled scenes and a ``score_threshold``;
    boxes scoring below it are skipped. Boxes with no points are kept in the
    database but are never drawn by :func:`paste`.
    """
    kind = DatabaseKind(kind)
    if kind is DatabaseKind.PSEUDO and score_threshold is None:
        raise ValidationError("a pseudo database needs a score threshold")
    db = SampleDatabase(kind)
    for scene in scenes:
        if kind is DatabaseKind.PSEUDO and scene.provenance is not Provenance.PSEUDO_LABELED:
            raise ProvenanceMismatch(f"scene {scene.scene_id!r} is {scene.provenance.value}, "
                                     "pseudo samples need pseudo-labeled scenes")
        if kind is DatabaseKind.GT and scene.provenance not in (Provenance.LABELED,
                                                                Provenance.SYNTHETIC):
            raise ProvenanceMismatch(f"scene {scene.scene_id!r} is {scene.provenance.value}, "
                                     "ground-truth samples need labeled scenes")
        for i, box in enumerate(scene.boxes):
            if kind is DatabaseKind.PSEUDO and box.score < score_threshold:
                continue
            idx = points_in_box(scene.cloud, box)
            db.by_class.setdefault(box.class_id, []).append(ObjectSample(
                box=box, points=scene.cloud.points[idx].copy(), source=kind,
                source_scene_id=scene.scene_id, sample_id=f"{scene.scene_id}_{i:04d}"))
    return db


@dataclass(frozen=True)
class PastePolicy:
    per_class_target_count: Mapping[int, int] = field(
        default_factory=lambda: {VEHICLE: 15, PEDESTRIAN: 10, CYCLIST: 10})
    directions: frozenset = SEMI_SAMPLING
    max_attempts: int = 100
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "directions", frozenset(Direction(d) for d in self.directions))
        if self.max_attempts < 1:
            raise ValidationError(f"max_attempts must be >= 1, got {self.max_attempts}")
        if any(v < 0 for v in self.per_class_target_count.values()):
            raise ValidationError("per-class target counts must be >= 0")


def _pasted_box(sample: ObjectSample, target: Scene) -> Box3D:
    tag = f"pasted:{sample.source.value}"
    if target.provenance is Provenance.LABELED:
        return sample.box.replace(score=None, tag=tag)
    if target.provenance is Provenance.PSEUDO_LABELED and sample.box.score is None:
        return sample.box.replace(score=1.0, tag=tag)
    return sample.box.replace(tag=tag)


def paste(target: Scene, db: SampleDatabase, policy: PastePolicy,
          rng: np.random.Generator | None = None) -> Scene:
    """Paste database samples into ``target`` until per-class targets are met.

    For each class (ascending id) candidates are drawn without replacement;
    a draw counts as one attempt and is accepted only if its points lie in the
    target range and its box has zero BEV IoU with every box already present
    or pasted. Target points inside accepted boxes are removed before the
    sample points are appended.
    """
    direction = Direction.of(db.kind, frame_of(target))
    if direction not in policy.directions:
        raise DirectionForbidden(f"{direction.value} is not enabled by the paste policy")
    rng = np.random.default_rng(policy.seed) if rng is None else rng
    return _paste_from_pool(target, db.by_class, policy, rng)


def _paste_from_pool(target: Scene, pool: Mapping[int, Sequence[ObjectSample]], policy: PastePolicy,
                     rng: np.random.Generator) -> Scene:
    present = list(target.boxes)
    accepted: list[ObjectSample] = []
    rect = target.cloud.range
    for cls in sorted(policy.per_class_target_count):
        need = policy.per_class_target_count[cls] - sum(b.class_id == cls for b in present)
        candidates = [s for s in pool.get(cls, ()) if len(s.points)]
        if need <= 0 or not candidates:
            continue
        attempts = 0
        for i in rng.permutation(len(candidates)):
            if need == 0 or attempts >= policy.max_attempts:
                break
            attempts += 1
            s = candidates[i]
            if not rect.contains(s.points[:, :2]).all() or not rect.contains_point(s.box.cx, s.box.cy):
                continue
            if any(bev_iou(s.box, b) > 0.0 for b in present):
                continue
            present.append(s.box)
            accepted.append(s)
            need -= 1

    if not accepted:
        return target
    pts = target.cloud.points
    keep = ~points_in_any_box_mask(pts, [s.box for s in accepted])
    points = np.concatenate([pts[keep]] + [s.points for s in accepted])
    boxes = tuple(target.boxes) + tuple(_pasted_box(s, target) for s in accepted)
    return target.replace(cloud=PointCloud(points, rect), boxes=boxes)


def semi_sample(target: Scene, databases: Sequence[SampleDatabase], policy: PastePolicy,
                rng: np.random.Generator | None = None) -> Scene:
    """Paste from the databases whose direction the policy allows for this target.

    Allowed databases are pooled per class and drawn from together, so one
    source cannot use up a class quota before the others get a draw.
    """
    rng = np.random.default_rng(policy.seed) if rng is None else rng
    frame = frame_of(target)
    pool: dict[int, list[ObjectSample]] = {}
    for db in databases:
        if Direction.of(db.kind, frame) in policy.directions:
            for cls in sorted(db.by_class):
                pool.setdefault(cls, []).extend(db.by_class[cls])
    return _paste_from_pool(target, pool, policy, rng)


INDEX_NAME = "index.json"


def save_database(db: SampleDatabase, directory) -> Path:
    """Write ``index.json`` plus one point blob per sample under ``samples/``."""
    directory = Path(directory)
    (directory / "samples").mkdir(parents=True, exist_ok=True)
    classes = {}
    for cls in sorted(db.by_class):
        entries = []
        for n, s in enumerate(db.by_class[cls]):
            sid = s.sample_id or f"{cls}_{n:06d}"
            blob = f"samples/{sid}.bin"
            write_points(directory / blob, s.points)
            entries.append({"sample_id": sid, "box": box_to_record(s.box), "score": s.box.score,
                            "source_scene_id": s.source_scene_id, "num_points": len(s.points),
                            "blob": blob})
        classes[str(cls)] = entries
    index = {"schema_version": 1, "kind": db.kind.value, "classes": classes}
    path = directory / INDEX_NAME
    path.write_text(json.dumps(index, indent=1, sort_keys=True) + "\n")
    return path


def load_database(directory) -> SampleDatabase:
    directory = Path(directory)
    index = json.loads((directory / INDEX_NAME).read_text())
    kind = DatabaseKind(index["kind"])
    db = SampleDatabase(kind)
    for cls, entries in index["classes"].items():
        db.by_class[int(cls)] = [
            ObjectSample(record_to_box(e["box"]), read_points(directory / e["blob"]), kind,
                         e["source_scene_id"], e["sample_id"])
            for e in entries
        ]
    return db
