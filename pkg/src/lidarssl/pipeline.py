"""Two-phase semi-supervised data pipeline.

Phase 1 (teacher pass), per unlabeled scene::

    canonical patches -> mock teacher per patch -> fovea merge -> score filter

gives pseudo-labeled scenes, and the confident ones (second threshold) feed a
pseudo-label object database next to the ground-truth database.

Phase 2 (student data pass) mixes pseudo-labeled scenes pairwise by pillars,
then pastes objects into labeled, pseudo-labeled and mixed frames as the
paste policy allows. The result is the augmented training set plus a JSON
report.

Data layout under ``data_dir``::

    labeled/<id>.bin + <id>.jsonl      annotated scans
    unlabeled/<id>.bin [+ <id>.jsonl]  raw scans; labels, when present, are held
                                       out and only seen by the mock teacher
                                       and the evaluator

Every random draw is seeded from ``(config.seed, stage, scene index)``, so the
output does not depend on the worker count.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .config import PipelineConfig
from .errors import ValidationError
from .eval3d import metrics_report
from .geometry import Box3D, PointCloud, Provenance, Scene, visible_fraction
from .io import list_scenes, read_scene, write_labels, write_scene
from .patches import (Patch, PatchGridSpec, canonical_patches, filter_trainable_patches, merge_predictions,
                      patch_normalizer, partition)
from .pillarmix import pillar_mix, random_mix_pair
from .pseudo import filter_with_policy, mock_detect
from .sampling import DatabaseKind, build_database, save_database, semi_sample
from .synthetic import generate_dataset
from .voxels import memory_table

log = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1

# stream ids for seed derivation
_TEACHER, _PAIRING, _MIX, _PASTE = 1, 2, 3, 4


def derive_seed(*key: int) -> int:
    return int(np.random.SeedSequence([int(k) for k in key]).generate_state(1, dtype=np.uint64)[0])


@dataclass
class TeacherOutput:
    scene_id: str
    fovea: list[Box3D]
    vanilla: list[Box3D]
    pseudo: list[Box3D]
    num_patches: int
    trainable_patches: int
    normalizer: float


def patch_view(patch: Patch, boxes: Sequence[Box3D]) -> tuple[Scene, list[int]]:
    """What a detector running on ``patch`` can see of the scene-frame ``boxes``.

    Unlike ``patch.boxes`` (centers inside the expanded rectangle) this keeps
    every object with some footprint inside it, in the canonical frame, and
    returns their indices into ``boxes``.
    """
    t = patch.canonical_transform
    moved = [t.apply_box(b) for b in boxes]
    keep = [i for i, b in enumerate(moved) if visible_fraction(b, patch.cloud.range) > 0.0]
    return Scene(patch.cloud, tuple(moved[i] for i in keep), Provenance.SYNTHETIC,
                 patch.as_scene().scene_id), keep


def teacher_pass(scene: Scene, held_out: Sequence[Box3D], config: PipelineConfig,
                 scene_index: int) -> TeacherOutput:
    """Run the mock teacher on every canonical patch of one unlabeled scene.

    Each held-out object gets one noise stream shared by all patches that see
    it, so overlapping patches agree on fully visible objects.
    """
    view = scene.replace(boxes=tuple(held_out), provenance=Provenance.SYNTHETIC)
    patches = canonical_patches(view, config.patch_grid(), config.patch.align_mode)
    spec = config.teacher_spec()
    per_patch = []
    obj = [derive_seed(config.seed, _TEACHER, scene_index, 0, i) for i in range(len(held_out))]
    for k, patch in enumerate(patches):
        seen, idx = patch_view(patch, held_out)
        seed = derive_seed(config.seed, _TEACHER, scene_index, 1, k)
        per_patch.append((patch, mock_detect(seen, spec, seed, [obj[i] for i in idx])))
    fovea = merge_predictions(per_patch, fovea=True)
    vanilla = merge_predictions(per_patch, fovea=False)
    pseudo = filter_with_policy(fovea, config.threshold_policy(), use="label")
    trainable = filter_trainable_patches(patches, config.patch.min_gt)
    return TeacherOutput(scene.scene_id, fovea, vanilla, pseudo, len(patches), len(trainable),
                         patch_normalizer(patches, config.normalizer.alpha))


def _student_scene(target: Scene, databases, config: PipelineConfig, index: int) -> Scene:
    rng = np.random.default_rng(derive_seed(config.seed, _PASTE, index))
    return semi_sample(target, databases, config.paste_policy(), rng)


def _mixed_scene(a: Scene, b: Scene, config: PipelineConfig, index: int) -> Scene:
    mx = config.pillarmix
    pair = random_mix_pair(a, b, derive_seed(config.seed, _MIX, index), mx.randomize_swap,
                           rotation=tuple(mx.rotation), flip_prob=mx.flip_prob,
                           scale=tuple(mx.scale))
    return pillar_mix(pair, config.pillar_grid())


def _run_many(fn: Callable, args: list[tuple], workers: int) -> list:
    if workers <= 1 or len(args) <= 1:
        return [fn(*a) for a in args]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, *zip(*args)))


def _crop_to(scene: Scene, config: PipelineConfig) -> Scene:
    rect = config.range_rect
    keep = rect.contains(scene.cloud.points[:, :2])
    if not keep.all():
        log.warning("%s: dropping %d points outside %s", scene.scene_id, int((~keep).sum()), rect)
    boxes = tuple(b for b in scene.boxes if rect.contains_point(b.cx, b.cy))
    return scene.replace(cloud=PointCloud(scene.cloud.points[keep], rect), boxes=boxes)


def load_data(data_dir, config: PipelineConfig):
    """Read ``labeled/`` and ``unlabeled/`` scene files; returns (labeled, unlabeled, held_out)."""
    data_dir = Path(data_dir)
    lab_dir, unl_dir = data_dir / "labeled", data_dir / "unlabeled"
    for d in (lab_dir, unl_dir):
        if not d.is_dir():
            raise FileNotFoundError(f"missing input directory {d}")
    labeled = [_crop_to(read_scene(s, config.range_rect, Provenance.LABELED), config)
               for s in list_scenes(lab_dir)]
    unlabeled, held_out = [], []
    for stem in list_scenes(unl_dir):
        raw = _crop_to(read_scene(stem, config.range_rect, Provenance.UNLABELED), config)
        unlabeled.append(raw.replace(boxes=()))
        held_out.append(raw.boxes if stem.with_suffix(".jsonl").exists() else None)
    if not unlabeled:
        raise FileNotFoundError(f"no scenes in {unl_dir}")
    return labeled, unlabeled, held_out


def synthetic_data(config: PipelineConfig):
    s = config.synthetic
    n_lab = s.num_labeled
    world = config.world_spec()
    return generate_dataset(world, n_lab, s.num_scenes - n_lab, seed=config.seed)


def _pasted_counts(scenes: Sequence[Scene]) -> dict:
    counts = {"gt": 0, "pseudo": 0}
    for sc in scenes:
        for b in sc.boxes:
            if b.tag == "pasted:gt":
                counts["gt"] += 1
            elif b.tag == "pasted:pseudo":
                counts["pseudo"] += 1
    return counts


def run_pipeline(config: PipelineConfig, data_dir=None, out_dir=None,
                 workers: int | None = None) -> dict:
    """Run both phases and return the report (also written to ``out_dir``).

    Without ``data_dir`` the scenes are generated from the synthetic section
    of the config.
    """
    config.validate()
    workers = config.workers if workers is None else workers
    if workers < 1:
        raise ValidationError(f"workers must be >= 1, got {workers}")

    if data_dir is None:
        labeled, unlabeled, held_out = synthetic_data(config)
        held_out = list(held_out)
        log.info("generated %d labeled and %d unlabeled scenes", len(labeled), len(unlabeled))
    else:
        labeled, unlabeled, held_out = load_data(data_dir, config)
        log.info("read %d labeled and %d unlabeled scenes from %s", len(labeled), len(unlabeled),
                 data_dir)

    # phase 1: teacher pass
    teacher = _run_many(teacher_pass, [(sc, ho or (), config, i)
                                       for i, (sc, ho) in enumerate(zip(unlabeled, held_out))],
                        workers)
    pseudo_scenes = [sc.replace(boxes=tuple(t.pseudo), provenance=Provenance.PSEUDO_LABELED)
                     for sc, t in zip(unlabeled, teacher)]
    log.info("teacher kept %d of %d fovea predictions", sum(len(t.pseudo) for t in teacher),
             sum(len(t.fovea) for t in teacher))

    gt_db = build_database(labeled, DatabaseKind.GT)
    pseudo_db = build_database(pseudo_scenes, DatabaseKind.PSEUDO,
                               score_threshold=config.thresholds.lambda2)
    log.info("databases: %d gt samples, %d pseudo samples", len(gt_db), len(pseudo_db))

    # phase 2: student data
    mixed = []
    if len(pseudo_scenes) >= 2:
        n = len(pseudo_scenes)
        perm = np.random.default_rng(derive_seed(config.seed, _PAIRING)).permutation(n)
        pairs = [(pseudo_scenes[perm[i]], pseudo_scenes[perm[(i + 1) % n]], config, i)
                 for i in range(n)]
        mixed = _run_many(_mixed_scene, pairs, workers)
    targets = list(labeled) + pseudo_scenes + mixed
    train = _run_many(_student_scene, [(t, (gt_db, pseudo_db), config, i)
                                       for i, t in enumerate(targets)], workers)
    log.info("training set: %d scenes", len(train))

    report = build_report(config, labeled, unlabeled, held_out, teacher, gt_db, pseudo_db,
                          mixed, train)
    if out_dir is not None:
        write_outputs(Path(out_dir), report, train, pseudo_scenes, gt_db, pseudo_db)
    return report


def _metrics(preds_per_scene, held_out, config: PipelineConfig):
    frames = [(p, ho) for p, ho in zip(preds_per_scene, held_out) if ho is not None]
    if not frames or not any(len(g) for _, g in frames):
        return None
    return metrics_report(frames, config.eval.iou_threshold, config.eval.metric)


def build_report(config, labeled, unlabeled, held_out, teacher, gt_db, pseudo_db, mixed,
                 train) -> dict:
    cfg = config.to_dict()
    cfg.pop("workers")  # execution detail; reports must not depend on it
    ref = (labeled or unlabeled)[0]
    if ref is unlabeled[0] and held_out[0]:
        ref = ref.replace(boxes=held_out[0], provenance=Provenance.SYNTHETIC)
    patches = partition(ref, config.patch_grid())
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "config": cfg,
        "counts": {
            "labeled_scenes": len(labeled),
            "unlabeled_scenes": len(unlabeled),
            "labeled_boxes": sum(len(s.boxes) for s in labeled),
            "teacher_predictions_vanilla": sum(len(t.vanilla) for t in teacher),
            "teacher_predictions_fovea": sum(len(t.fovea) for t in teacher),
            "pseudo_labels": sum(len(t.pseudo) for t in teacher),
            "gt_database": len(gt_db),
            "pseudo_database": len(pseudo_db),
            "mixed_scenes": len(mixed),
            "mixed_boxes": sum(len(s.boxes) for s in mixed),
            "training_scenes": len(train),
            "training_boxes": sum(len(s.boxes) for s in train),
            "pasted": _pasted_counts(train),
        },
        "metrics": {
            "pseudo_labels": _metrics([t.pseudo for t in teacher], held_out, config),
            "teacher_fovea": _metrics([t.fovea for t in teacher], held_out, config),
            "teacher_vanilla": _metrics([t.vanilla for t in teacher], held_out, config),
        },
        "patches": {
            "scenes": [{"scene_id": t.scene_id, "patches": t.num_patches,
                        "trainable": t.trainable_patches, "normalizer": t.normalizer}
                       for t in teacher],
            "reference_owned": [p.num_owned for p in patches],
        },
        "memory": {
            "scene_id": ref.scene_id,
            "rows": memory_table(ref, PatchGridSpec(config.patch.n, 0.0, config.range_rect),
                                 config.memory.voxel_sizes, tuple(config.memory.z_range)),
        },
    }


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_outputs(out_dir: Path, report: dict, train, pseudo_scenes, gt_db, pseudo_db) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, sc in enumerate(train):
        write_scene(out_dir / "train" / f"{i:05d}", sc)
    (out_dir / "pseudo_labels").mkdir(exist_ok=True)
    for sc in pseudo_scenes:
        write_labels(out_dir / "pseudo_labels" / f"{sc.scene_id}.jsonl", sc.boxes)
    save_database(gt_db, out_dir / "db" / "gt")
    save_database(pseudo_db, out_dir / "db" / "pseudo")
    (out_dir / "report.json").write_text(dump_json(report))
    log.info("wrote outputs to %s", out_dir)
