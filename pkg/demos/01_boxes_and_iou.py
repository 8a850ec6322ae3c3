"""
Rotated boxes, containment and IoU
==================================

Two cars side by side, one of them turned 30 degrees. We look at how much
they overlap from above (BEV) and in 3D, and which points fall inside.
"""
import math

import numpy as np

from lidarssl.geometry import Box3D, bev_iou, iou_3d, points_in_box_mask

# center x, y, z, then length, width, height, then yaw
a = Box3D(0.0, 0.0, 0.8, 4.0, 2.0, 1.6, 0.0)
b = Box3D(1.0, 0.5, 1.0, 4.0, 2.0, 1.6, math.radians(30))

print("BEV IoU:", round(bev_iou(a, b), 4))
print("3D IoU :", round(iou_3d(a, b), 4))

# identical boxes overlap completely, disjoint ones not at all
print("self   :", bev_iou(a, a), " far away:", bev_iou(a, a.replace(cx=50.0)))

# a small random cloud around the two boxes
rng = np.random.default_rng(0)
pts = np.column_stack([rng.uniform(-4, 4, (2000, 2)), rng.uniform(-0.5, 2.5, 2000), np.zeros(2000)])
in_a, in_b = points_in_box_mask(pts, a), points_in_box_mask(pts, b)
print(f"points in a: {in_a.sum()}, in b: {in_b.sum()}, in both: {(in_a & in_b).sum()}")
