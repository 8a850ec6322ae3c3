"""
Cutting a scene into patches
============================

A 64 m square scene is split into a 4x4 grid of 16 m cells. Each patch
also keeps a 2 m margin of context. Patches are rotated into one quadrant
and shifted to a common origin, so a detector only ever sees one canonical
layout. Predictions are mapped back, and the fovea rule keeps each object
once.
"""
from lidarssl.geometry import Rect
from lidarssl.patches import (PatchGridSpec, canonical_patches, filter_trainable_patches,
                              merge_predictions, patch_normalizer, partition)
from lidarssl.synthetic import SyntheticWorldSpec, generate_scene

scene = generate_scene(SyntheticWorldSpec(seed=3), "demo")
print(f"scene: {len(scene.cloud)} points, {len(scene.boxes)} objects")

spec = PatchGridSpec(4, 2.0, Rect(-32, 32, -32, 32))
raw = partition(scene, spec)
print("points per patch (with margin):", [len(p.cloud) for p in raw])
print("objects owned per patch       :", [sum(p.owned) for p in raw])

canon = canonical_patches(scene, spec)
print("canonical range:", spec.canonical_range())

# pretend the detector is perfect: it returns every box it can see
echo = [(p, list(p.boxes)) for p in canon]
vanilla = merge_predictions(echo, fovea=False)
fovea = merge_predictions(echo, fovea=True)
print(f"vanilla merge: {len(vanilla)} boxes (duplicates from margins), fovea: {len(fovea)}")

# patches with too few labeled objects are skipped for training; this toy
# scene is sparse, so the bar is 1 instead of the default 4
kept = filter_trainable_patches(raw, min_gt=1)
print(f"trainable patches: {len(kept)} of {len(raw)}, loss normalizer {patch_normalizer(kept):.1f}")
