"""
Region proposal loss on a patch
===============================

Anchors sit on a lattice over one canonical patch. Each is matched to
ground truth by BEV IoU, and then the focal plus smooth-L1 loss is computed
for a fake network output. The classification term can be divided by the
anchor count, or by a per-patch normalizer tied to the scene object count.
"""
import numpy as np

from lidarssl.geometry import Box3D, Rect
from lidarssl.patches import NormalizerMode, NormalizerSpec
from lidarssl.rpn_loss import DetectorOutput, assign_anchors, make_anchor_grid, rpn_loss

grid = make_anchor_grid(Rect(0, 20, 0, 20), stride=1.0)
gts = [Box3D(5.0, 5.0, 0.8, 4.2, 1.9, 1.6, 0.1, 1), Box3D(14.0, 12.0, 0.9, 0.8, 0.7, 1.7, 1.2, 2)]
asg = assign_anchors(grid, gts)
print(f"{len(grid.anchors)} anchors, {asg.num_fg} foreground, {(asg.cls_target < 0).sum()} ignored")

rng = np.random.default_rng(0)
n, k = len(grid.anchors), len(grid.classes)
out = DetectorOutput(rng.normal(-2.0, 1.0, (n, k)), asg.reg_target + rng.normal(0, 0.1, (n, 7)))

for norm in (NormalizerSpec(NormalizerMode.FOREGROUND_COUNT),
             NormalizerSpec(NormalizerMode.PATCH_NORMALIZER, 3.0)):
    res = rpn_loss(out, asg, norm, scene_gt_total=12)
    print(f"{norm.mode.value:18s} cls {res.cls_loss:.4f} (/{res.cls_normalizer:.0f})  reg {res.reg_loss:.4f}")
