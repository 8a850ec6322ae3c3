"""Detection metrics: greedy matching, 101-point AP and heading-weighted APH."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .classes import class_name
from .errors import MissingScore, NotDefined
from .geometry import Box3D, iou_matrix


class IoUMetric(str, enum.Enum):
    BEV = "bev"
    IOU3D = "iou3d"


def heading_accuracy(yaw_pred: float, yaw_gt: float) -> float:
    """``1 - wrapped |dyaw| / pi``; 1 for a perfect heading, 0 when reversed."""
    d = abs(yaw_pred - yaw_gt) % (2.0 * math.pi)
    return 1.0 - min(d, 2.0 * math.pi - d) / math.pi


@dataclass
class MatchResult:
    tp: list[tuple[int, int, float, float]] = field(default_factory=list)
    fp: list[int] = field(default_factory=list)
    fn: list[int] = field(default_factory=list)

    @property
    def precision(self) -> float:
        n = len(self.tp) + len(self.fp)
        return len(self.tp) / n if n else 1.0

    @property
    def recall(self) -> float:
        n = len(self.tp) + len(self.fn)
        return len(self.tp) / n if n else 1.0


def _score_order(preds: Sequence[Box3D]) -> list[int]:
    for i, p in enumerate(preds):
        if p.score is None:
            raise MissingScore(f"prediction {i} has no score")
    return sorted(range(len(preds)), key=lambda i: -preds[i].score)


def match(preds: Sequence[Box3D], gts: Sequence[Box3D], iou_thresh: float = 0.7,
          metric: IoUMetric | str = IoUMetric.IOU3D) -> MatchResult:
    """Greedy matching in descending score order.

    Each prediction takes the unmatched ground-truth box of its class with
    the highest IoU, provided that IoU reaches ``iou_thresh``. Equal scores
    keep input order.
    """
    metric = IoUMetric(metric)
    order = _score_order(preds)
    ious = iou_matrix(preds, gts, "bev" if metric is IoUMetric.BEV else "3d")
    same = np.array([[p.class_id == g.class_id for g in gts] for p in preds]).reshape(ious.shape)
    ious = np.where(same, ious, -1.0)
    taken = np.zeros(len(gts), dtype=bool)
    res = MatchResult()
    for i in order:
        row = np.where(taken, -1.0, ious[i])
        j = int(np.argmax(row)) if len(gts) else -1
        if j >= 0 and row[j] >= iou_thresh:
            taken[j] = True
            res.tp.append((i, j, float(row[j]), heading_accuracy(preds[i].yaw, gts[j].yaw)))
        else:
            res.fp.append(i)
    res.fn = [j for j in range(len(gts)) if not taken[j]]
    return res


RECALL_POINTS = np.arange(101) / 100.0  # i/100 exactly, so recall k/n compares exactly


def interpolated_ap(precision: np.ndarray, recall: np.ndarray) -> float:
    """Mean of the max-to-the-right precision sampled at 101 recall levels."""
    if len(precision) == 0:
        return 0.0
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, RECALL_POINTS, side="left")
    vals = np.where(idx < len(recall), envelope[np.minimum(idx, len(recall) - 1)], 0.0)
    return float(vals.mean())


@dataclass
class APResult:
    ap: float
    aph: float
    precision: float
    recall: float
    num_gt: int
    num_pred: int
    num_tp: int

    def as_dict(self) -> dict:
        return {"ap": self.ap, "aph": self.aph, "precision": self.precision, "recall": self.recall,
                "num_gt": self.num_gt, "num_pred": self.num_pred, "num_tp": self.num_tp}


def average_precision(frames: Sequence[tuple[Sequence[Box3D], Sequence[Box3D]]],
                      iou_thresh: float = 0.7, metric: IoUMetric | str = IoUMetric.IOU3D,
                      class_id: int | None = None) -> APResult:
    """AP and APH over ``(preds, gts)`` frames, optionally restricted to one class.

    Predictions from all frames are ranked by score together (ties keep frame
    then input order). APH credits each true positive with its heading accuracy
    in the precision numerator; recall is unweighted.
    """
    scores, hits, headings = [], [], []
    num_gt = 0
    for preds, gts in frames:
        if class_id is not None:
            preds = [p for p in preds if p.class_id == class_id]
            gts = [g for g in gts if g.class_id == class_id]
        num_gt += len(gts)
        m = match(preds, gts, iou_thresh, metric)
        tp_of = {i: h for i, _, _, h in m.tp}
        for i, p in enumerate(preds):
            scores.append(p.score)
            hits.append(i in tp_of)
            headings.append(tp_of.get(i, 0.0))
    if num_gt == 0:
        raise NotDefined("average precision is undefined without ground-truth boxes")
    order = np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")
    hit = np.asarray(hits, dtype=np.float64)[order]
    head = np.asarray(headings, dtype=np.float64)[order]
    rank = np.arange(1, len(hit) + 1)
    ctp = np.cumsum(hit)
    recall = ctp / num_gt
    ap = interpolated_ap(ctp / rank, recall)
    aph = interpolated_ap(np.cumsum(head) / rank, recall)
    n_tp = int(hit.sum())
    return APResult(ap, aph, n_tp / len(hit) if len(hit) else 1.0, n_tp / num_gt,
                    num_gt, len(hit), n_tp)


def metrics_report(frames: Sequence[tuple[Sequence[Box3D], Sequence[Box3D]]],
                   iou_thresh: float = 0.7, metric: IoUMetric | str = IoUMetric.IOU3D) -> dict:
    """Per-class and overall metrics as plain JSON-ready dicts.

    Classes without ground truth report ``null`` AP/APH. ``overall`` is the mean
    over classes with ground truth, in the style of mAP.
    """
    classes = sorted({b.class_id for preds, gts in frames for b in (*preds, *gts)})
    per_class = {}
    defined = []
    for cls in classes:
        try:
            r = average_precision(frames, iou_thresh, metric, cls)
            per_class[class_name(cls)] = r.as_dict()
            defined.append(r)
        except NotDefined:
            n_pred = sum(p.class_id == cls for preds, _ in frames for p in preds)
            per_class[class_name(cls)] = {"ap": None, "aph": None, "precision": 0.0,
                                          "recall": None, "num_gt": 0, "num_pred": n_pred,
                                          "num_tp": 0}
    overall = None
    if defined:
        overall = {"map": float(np.mean([r.ap for r in defined])),
                   "maph": float(np.mean([r.aph for r in defined]))}
    return {"iou_threshold": iou_thresh, "metric": IoUMetric(metric).value,
            "classes": per_class, "overall": overall}
