"""Anchor-head loss with a pluggable classification normalizer.

The loss is a sigmoid focal loss over non-ignored anchors plus a smooth-L1
box regression over foreground anchors::

    loss = sum(focal) / cls_normalizer + sum(smooth_l1[fg]) / max(N_fg, 1)

Only the classification divisor depends on :class:`NormalizerMode`:
``foreground_count`` uses ``max(N_fg, 1)``, ``patch_normalizer`` uses
``max(alpha * scene_gt_total, 1)`` (shared by all patches of a scan) and
``avg_negatives`` uses the number of background anchors.

Gradients are returned in closed form; they exist to verify the loss, not to
train anything.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .classes import SIZE_PRIORS
from .errors import ShapeError, ValidationError
from .geometry import Box3D, Rect, iou_matrix
from .patches import NormalizerMode, NormalizerSpec

FOCAL_GAMMA = 2.0
FOCAL_ALPHA = 0.25
SMOOTH_L1_BETA = 1.0 / 9.0


@dataclass(frozen=True, eq=False)
class AnchorGrid:
    anchors: tuple[Box3D, ...]
    stride: float
    classes: tuple[int, ...]

    def __post_init__(self):
        if not self.anchors:
            raise ValidationError("anchor grid is empty")

    def __len__(self) -> int:
        return len(self.anchors)

    def class_column(self, class_id: int) -> int:
        return self.classes.index(class_id)


def make_anchor_grid(rect: Rect, stride: float, class_sizes: dict | None = None,
                     rotations: Sequence[float] = (0.0, math.pi / 2)) -> AnchorGrid:
    """One anchor per class and rotation at every lattice cell center.

    Anchor order is (y, x, class, rotation) with the last index fastest.
    """
    sizes = dict(SIZE_PRIORS if class_sizes is None else class_sizes)
    rect = Rect(*rect)
    nx = max(1, int(round(rect.width / stride)))
    ny = max(1, int(round(rect.height / stride)))
    anchors = []
    for iy in range(ny):
        y = rect.y_min + (iy + 0.5) * stride
        for ix in range(nx):
            x = rect.x_min + (ix + 0.5) * stride
            for cls in sorted(sizes):
                l, w, h = sizes[cls]
                for rot in rotations:
                    anchors.append(Box3D(x, y, 0.5 * h, l, w, h, rot, cls))
    return AnchorGrid(tuple(anchors), stride, tuple(sorted(sizes)))


@dataclass(frozen=True, eq=False)
class AnchorAssignment:
    """``cls_target`` is 0 for background, a class id for foreground, -1 for ignored."""

    cls_target: np.ndarray
    reg_target: np.ndarray
    fg_mask: np.ndarray
    matched_gt: np.ndarray

    @property
    def num_fg(self) -> int:
        return int(self.fg_mask.sum())

    @property
    def num_bg(self) -> int:
        return int((self.cls_target == 0).sum())


def encode_box(anchor: Box3D, gt: Box3D) -> np.ndarray:
    """Residual of ``gt`` w.r.t. ``anchor``: xy over anchor diagonal, z over height, log dims."""
    diag = math.hypot(anchor.l, anchor.w)
    return np.array([(gt.cx - anchor.cx) / diag, (gt.cy - anchor.cy) / diag,
                     (gt.cz - anchor.cz) / anchor.h, math.log(gt.l / anchor.l),
                     math.log(gt.w / anchor.w), math.log(gt.h / anchor.h), gt.yaw - anchor.yaw])


def decode_box(anchor: Box3D, residual: Sequence[float], class_id: int | None = None) -> Box3D:
    dx, dy, dz, dl, dw, dh, dyaw = (float(v) for v in residual)
    diag = math.hypot(anchor.l, anchor.w)
    return Box3D(anchor.cx + dx * diag, anchor.cy + dy * diag, anchor.cz + dz * anchor.h,
                 anchor.l * math.exp(dl), anchor.w * math.exp(dw), anchor.h * math.exp(dh),
                 anchor.yaw + dyaw, anchor.class_id if class_id is None else class_id)


def assign_anchors(grid: AnchorGrid, gt: Sequence[Box3D], fg_iou: float = 0.6,
                   bg_iou: float = 0.45) -> AnchorAssignment:
    """Max-IoU assignment of anchors to same-class ground truth (BEV IoU).

    An anchor is foreground when its best IoU reaches ``fg_iou`` or when it is
    the best anchor of some ground-truth box (IoU > 0); background below
    ``bg_iou``; ignored in between.
    """
    if not fg_iou > bg_iou:
        raise ValidationError(f"fg_iou ({fg_iou}) must exceed bg_iou ({bg_iou})")
    n = len(grid)
    cls_target = np.zeros(n, dtype=np.int64)
    reg_target = np.zeros((n, 7))
    matched = np.full(n, -1, dtype=np.int64)
    if not gt:
        return AnchorAssignment(cls_target, reg_target, np.zeros(n, dtype=bool), matched)

    ious = iou_matrix(grid.anchors, gt, "bev")
    a_cls = np.array([a.class_id for a in grid.anchors])
    g_cls = np.array([g.class_id for g in gt])
    ious[a_cls[:, None] != g_cls[None, :]] = 0.0

    best_gt = np.argmax(ious, axis=1)
    best_iou = ious[np.arange(n), best_gt]
    fg = best_iou >= fg_iou
    matched[fg] = best_gt[fg]
    for j in range(len(gt)):
        i = int(np.argmax(ious[:, j]))
        if ious[i, j] > 0.0:
            fg[i] = True
            matched[i] = j
    bg = (best_iou < bg_iou) & ~fg
    cls_target[:] = -1
    cls_target[bg] = 0
    for i in np.flatnonzero(fg):
        g = gt[matched[i]]
        cls_target[i] = g.class_id
        reg_target[i] = encode_box(grid.anchors[i], g)
    return AnchorAssignment(cls_target, reg_target, fg, matched)


@dataclass(frozen=True, eq=False)
class DetectorOutput:
    cls_logits: np.ndarray
    reg_pred: np.ndarray


@dataclass(frozen=True, eq=False)
class RPNLoss:
    loss: float
    cls_loss: float
    reg_loss: float
    cls_normalizer: float
    reg_normalizer: float
    grad_cls_logits: np.ndarray
    grad_reg_pred: np.ndarray


def classification_normalizer(norm: NormalizerSpec, asg: AnchorAssignment,
                              scene_gt_total: int = 0) -> float:
    if norm.mode is NormalizerMode.FOREGROUND_COUNT:
        return float(max(asg.num_fg, 1))
    if norm.mode is NormalizerMode.PATCH_NORMALIZER:
        if scene_gt_total < 0:
            raise ValidationError("scene_gt_total must be >= 0")
        return max(norm.alpha * scene_gt_total, 1.0)
    return float(max(asg.num_bg, 1))


def _log_sigmoid(x: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, -x)


def focal_loss(logits: np.ndarray, targets: np.ndarray, gamma: float = FOCAL_GAMMA,
               alpha: float = FOCAL_ALPHA) -> tuple[np.ndarray, np.ndarray]:
    """Elementwise sigmoid focal loss and its derivative w.r.t. the logits."""
    p = np.exp(_log_sigmoid(logits))
    log_p = _log_sigmoid(logits)
    log_q = _log_sigmoid(-logits)
    q = 1.0 - p
    pos = targets > 0.5
    loss = np.where(pos, -alpha * q ** gamma * log_p, -(1.0 - alpha) * p ** gamma * log_q)
    grad_pos = alpha * q ** gamma * (gamma * p * log_p - q)
    grad_neg = (1.0 - alpha) * p ** gamma * (p - gamma * q * log_q)
    return loss, np.where(pos, grad_pos, grad_neg)


def smooth_l1(diff: np.ndarray, beta: float = SMOOTH_L1_BETA) -> tuple[np.ndarray, np.ndarray]:
    ad = np.abs(diff)
    small = ad < beta
    loss = np.where(small, 0.5 * diff * diff / beta, ad - 0.5 * beta)
    grad = np.where(small, diff / beta, np.sign(diff))
    return loss, grad


def rpn_loss(out: DetectorOutput, asg: AnchorAssignment, norm: NormalizerSpec,
             scene_gt_total: int = 0, classes: Sequence[int] | None = None) -> RPNLoss:
    """Loss value and exact gradients for one patch (or scene).

    ``classes`` maps logit columns to class ids (default ``1..K``).
    ``scene_gt_total`` is the number of ground-truth boxes over all patches of
    the scan; it is only read in ``patch_normalizer`` mode.
    """
    logits = np.asarray(out.cls_logits, dtype=np.float64)
    reg = np.asarray(out.reg_pred, dtype=np.float64)
    n = asg.cls_target.shape[0]
    if logits.ndim != 2 or logits.shape[0] != n or reg.shape != (n, 7):
        raise ShapeError(f"outputs {logits.shape}/{reg.shape} do not match {n} anchors")
    k = logits.shape[1]
    classes = list(range(1, k + 1)) if classes is None else list(classes)
    if len(classes) != k:
        raise ShapeError(f"{k} logit columns but {len(classes)} classes")

    targets = np.zeros_like(logits)
    for col, cls in enumerate(classes):
        targets[:, col] = asg.cls_target == cls
    valid = (asg.cls_target >= 0)[:, None]
    fl, dfl = focal_loss(logits, targets)
    cls_norm = classification_normalizer(norm, asg, scene_gt_total)
    cls_sum = float(np.sum(fl, where=valid))

    fg = asg.fg_mask[:, None]
    sl, dsl = smooth_l1(reg - asg.reg_target)
    reg_norm = float(max(asg.num_fg, 1))
    reg_sum = float(np.sum(sl, where=fg))

    cls_loss = cls_sum / cls_norm
    reg_loss = reg_sum / reg_norm
    return RPNLoss(
        loss=cls_loss + reg_loss,
        cls_loss=cls_loss,
        reg_loss=reg_loss,
        cls_normalizer=cls_norm,
        reg_normalizer=reg_norm,
        grad_cls_logits=np.where(valid, dfl, 0.0) / cls_norm,
        grad_reg_pred=np.where(fg, dsl, 0.0) / reg_norm,
    )
