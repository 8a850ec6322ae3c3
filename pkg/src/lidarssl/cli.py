"""Command-line entry point: ``lidarssl <command> [options]``.

Every command reads the JSON config given by ``--config`` (defaults
otherwise), prints a JSON summary to stdout (or ``--output``) and exits with
0 on success, 2 on invalid input and 1 on missing files.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .config import PipelineConfig
from .errors import ValidationError
from .eval3d import metrics_report
from .geometry import Provenance
from .io import list_scenes, read_labels, read_scene, write_labels, write_scene
from .patches import AlignMode, PatchGridSpec, canonical_patches, partition
from .pillarmix import pillar_mix, random_mix_pair
from .pipeline import dump_json, run_pipeline, teacher_pass
from .sampling import (DatabaseKind, build_database, load_database, save_database,
                       semi_sample)
from .synthetic import generate_dataset
from .voxels import memory_table

log = logging.getLogger("lidarssl")


def _load_config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg.validate()


def _out_dir(args) -> Path:
    if args.out_dir is None:
        raise ValidationError(f"{args.command} writes files; pass --out-dir")
    d = Path(args.out_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _scene(path, cfg: PipelineConfig, provenance=None):
    return read_scene(path, cfg.range_rect, provenance)


def cmd_gen(args, cfg):
    out = _out_dir(args)
    n = args.num_scenes if args.num_scenes is not None else cfg.synthetic.num_scenes
    frac = args.labeled_fraction if args.labeled_fraction is not None else cfg.synthetic.labeled_fraction
    n_lab = int(round(n * frac))
    labeled, unlabeled, held_out = generate_dataset(cfg.world_spec(), n_lab, n - n_lab, cfg.seed)
    for sc in labeled:
        write_scene(out / "labeled" / sc.scene_id, sc)
    (out / "unlabeled").mkdir(parents=True, exist_ok=True)
    for sc, boxes in zip(unlabeled, held_out):
        write_scene(out / "unlabeled" / sc.scene_id, sc)
        stem = out / "unlabeled" / sc.scene_id
        if args.held_out:
            write_labels(stem.with_suffix(".jsonl"), boxes)
        else:
            stem.with_suffix(".jsonl").unlink()
    return {"labeled": [s.scene_id for s in labeled], "unlabeled": [s.scene_id for s in unlabeled],
            "points": int(sum(len(s.cloud) for s in (*labeled, *unlabeled))),
            "boxes": int(sum(len(s.boxes) for s in labeled) + sum(len(b) for b in held_out))}


def cmd_partition(args, cfg):
    scene = _scene(args.scene, cfg, Provenance.SYNTHETIC)
    grid = cfg.patch_grid()
    patches = (partition(scene, grid) if args.no_align
               else canonical_patches(scene, grid, AlignMode(cfg.patch.align_mode)))
    out = _out_dir(args) if args.out_dir else None
    rows = []
    for p in patches:
        name = f"{scene.scene_id}_p{p.index[0]}{p.index[1]}"
        if out is not None:
            write_scene(out / name, p.as_scene())
        t = p.canonical_transform
        rows.append({"patch": name, "quadrant": p.quadrant, "points": len(p.cloud),
                     "boxes": len(p.boxes), "owned": p.num_owned, "cell": list(p.cell),
                     "transform": {"rotation": t.rotation, "flip_x": t.flip_x, "flip_y": t.flip_y,
                                   "translation": list(t.translation)}})
    return {"scene": scene.scene_id, "n": grid.n, "delta": grid.delta, "patches": rows}


def cmd_mix(args, cfg):
    a = _scene(args.scene_a, cfg)
    b = _scene(args.scene_b, cfg)
    mx = cfg.pillarmix
    pair = random_mix_pair(a, b, cfg.seed, mx.randomize_swap, rotation=tuple(mx.rotation),
                           flip_prob=mx.flip_prob, scale=tuple(mx.scale))
    mixed = pillar_mix(pair, cfg.pillar_grid())
    name = f"mix_{a.scene_id}_{b.scene_id}"
    write_scene(_out_dir(args) / name, mixed)
    return {"scene": name, "points": len(mixed.cloud), "boxes": len(mixed.boxes),
            "parity_swap": pair.parity_swap, "pillar_grid": list(cfg.pillar_grid().shape)}


def _expand(paths) -> list[Path]:
    stems = []
    for p in map(Path, paths):
        stems.extend(list_scenes(p) if p.is_dir() else [p])
    return stems


def cmd_sample_db(args, cfg):
    kind = DatabaseKind(args.kind)
    prov = Provenance.LABELED if kind is DatabaseKind.GT else Provenance.PSEUDO_LABELED
    scenes = [_scene(s, cfg, prov) for s in _expand(args.scenes)]
    thr = args.threshold
    if kind is DatabaseKind.PSEUDO and thr is None:
        thr = cfg.thresholds.lambda2
    db = build_database(scenes, kind, thr)
    save_database(db, _out_dir(args))
    return {"kind": kind.value, "scenes": len(scenes), "samples": len(db),
            "per_class": {str(c): len(v) for c, v in sorted(db.by_class.items())}}


def cmd_paste(args, cfg):
    target = _scene(args.target, cfg, args.provenance)
    dbs = [load_database(d) for d in args.db]
    rng = np.random.default_rng(cfg.seed)
    out = semi_sample(target, dbs, cfg.paste_policy(), rng)
    write_scene(_out_dir(args) / target.scene_id, out)
    pasted = [b for b in out.boxes if b.tag and b.tag.startswith("pasted:")]
    return {"scene": target.scene_id, "boxes_before": len(target.boxes), "boxes_after": len(out.boxes),
            "pasted_gt": sum(b.tag == "pasted:gt" for b in pasted),
            "pasted_pseudo": sum(b.tag == "pasted:pseudo" for b in pasted)}


def cmd_pseudo_label(args, cfg):
    out = _out_dir(args)
    rows = []
    for i, stem in enumerate(_expand(args.scenes)):
        scene = _scene(stem, cfg, Provenance.UNLABELED)
        t = teacher_pass(scene.replace(boxes=()), scene.boxes, cfg, i)
        write_labels(out / f"{scene.scene_id}.jsonl", t.pseudo)
        rows.append({"scene": scene.scene_id, "fovea_predictions": len(t.fovea),
                     "vanilla_predictions": len(t.vanilla), "pseudo_labels": len(t.pseudo)})
    return {"lambda1": cfg.thresholds.lambda1, "scenes": rows}


def _label_files(path) -> dict[str, Path]:
    p = Path(path)
    files = sorted(p.glob("*.jsonl")) if p.is_dir() else [p]
    return {f.stem: f for f in files}


def cmd_eval(args, cfg):
    preds, gts = _label_files(args.pred), _label_files(args.gt)
    missing = sorted(set(gts) - set(preds))
    if missing:
        log.warning("no predictions for %d scenes; counted as empty", len(missing))
    frames = [(read_labels(preds[k]) if k in preds else [], read_labels(gts[k])) for k in sorted(gts)]
    thr = args.iou if args.iou is not None else cfg.eval.iou_threshold
    return metrics_report(frames, thr, args.metric or cfg.eval.metric)


def cmd_estimate_mem(args, cfg):
    scene = _scene(args.scene, cfg, Provenance.SYNTHETIC)
    grid = PatchGridSpec(cfg.patch.n, 0.0, cfg.range_rect)
    return {"scene": scene.scene_id, "points": len(scene.cloud),
            "rows": memory_table(scene, grid, cfg.memory.voxel_sizes, tuple(cfg.memory.z_range))}


def cmd_pipeline(args, cfg):
    return run_pipeline(cfg, args.data_dir, args.out_dir, args.workers)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (defaults when omitted)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out-dir", help="directory for written files")
    common.add_argument("--output", help="write the JSON summary here instead of stdout")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="lidarssl", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="write a synthetic labeled/unlabeled dataset")
    p.add_argument("--num-scenes", type=int)
    p.add_argument("--labeled-fraction", type=float)
    p.add_argument("--no-held-out", dest="held_out", action="store_false",
                   help="do not keep labels of unlabeled scenes")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("partition", parents=[common], help="split a scene into canonical patches")
    p.add_argument("scene")
    p.add_argument("--no-align", action="store_true", help="keep patches in the scene frame")
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("mix", parents=[common], help="PillarMix two scenes")
    p.add_argument("scene_a")
    p.add_argument("scene_b")
    p.set_defaults(func=cmd_mix)

    p = sub.add_parser("sample-db", parents=[common], help="build an object sample database")
    p.add_argument("scenes", nargs="+", help="scene stems or directories")
    p.add_argument("--kind", choices=[k.value for k in DatabaseKind], default="gt")
    p.add_argument("--threshold", type=float, help="score threshold for pseudo databases")
    p.set_defaults(func=cmd_sample_db)

    p = sub.add_parser("paste", parents=[common], help="paste database objects into a scene")
    p.add_argument("target")
    p.add_argument("--db", action="append", required=True, help="database directory (repeatable)")
    p.add_argument("--provenance", choices=[v.value for v in Provenance],
                   help="target provenance (inferred from its labels by default)")
    p.set_defaults(func=cmd_paste)

    p = sub.add_parser("pseudo-label", parents=[common],
                       help="run the mock teacher over scenes and write pseudo labels; "
                            "labels beside the points feed only the mock teacher")
    p.add_argument("scenes", nargs="+")
    p.set_defaults(func=cmd_pseudo_label)

    p = sub.add_parser("eval", parents=[common], help="AP/APH of predictions against labels")
    p.add_argument("--pred", required=True, help="prediction .jsonl file or directory")
    p.add_argument("--gt", required=True, help="ground-truth .jsonl file or directory")
    p.add_argument("--iou", type=float)
    p.add_argument("--metric", choices=["bev", "iou3d"])
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("estimate-mem", parents=[common], help="occupied-voxel memory table")
    p.add_argument("scene")
    p.set_defaults(func=cmd_estimate_mem)

    p = sub.add_parser("pipeline", parents=[common], help="run the two-phase pipeline")
    p.add_argument("--data-dir", help="labeled/ + unlabeled/ scene files (synthetic when omitted)")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_pipeline)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load_config(args)
        result = args.func(args, cfg)
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    text = dump_json(result)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
