"""
The whole run, end to end
=========================

Synthetic data, teacher pass over patches, pseudo labels, PillarMix,
pasting and the final metrics. Everything is seeded, so the same config
always writes the same bytes. The same run is available as
``lidarssl pipeline --out-dir run``.
"""
import json
import sys

from lidarssl.config import PipelineConfig
from lidarssl.pipeline import run_pipeline

cfg = PipelineConfig(seed=int(sys.argv[1]) if len(sys.argv) > 1 else 0)
report = run_pipeline(cfg)

print(json.dumps(report["counts"], indent=1))
for name in ("teacher_vanilla", "teacher_fovea", "pseudo_labels"):
    m = report["metrics"][name]["overall"]
    print(f"{name:16s} mAP {m['map']:.3f}  mAPH {m['maph']:.3f}")
for row in report["memory"]["rows"]:
    print("voxels at", row["voxel_size"], ":", row["full_scene_voxels"], "scene,",
          row["max_patch_voxels"], "largest patch")
