"""Pseudo-label filtering and a seeded stand-in teacher.

Two thresholds are used on teacher output: ``lambda1`` decides which
predictions become pseudo labels for direct supervision, the stricter
``lambda2`` decides which ones are cropped into the pseudo sample database.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .classes import SIZE_PRIORS
from .errors import MissingScore, ValidationError
from .geometry import Box3D, Scene, visible_part


def _check_score(name: str, value: float) -> None:
    if not (0.0 <= value <= 1.0):
        raise ValidationError(f"{name} must lie in [0, 1], got {value}")


@dataclass(frozen=True)
class ThresholdPolicy:
    lambda1: float = 0.5
    lambda2: float = 0.8
    per_class_overrides: Mapping[int, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        _check_score("lambda1", self.lambda1)
        _check_score("lambda2", self.lambda2)
        for cls, (l1, l2) in self.per_class_overrides.items():
            _check_score(f"lambda1[{cls}]", l1)
            _check_score(f"lambda2[{cls}]", l2)

    def labeling_threshold(self, class_id: int) -> float:
        if class_id in self.per_class_overrides:
            return self.per_class_overrides[class_id][0]
        return self.lambda1

    def sampling_threshold(self, class_id: int) -> float:
        if class_id in self.per_class_overrides:
            return self.per_class_overrides[class_id][1]
        return self.lambda2


def filter_pseudo_labels(boxes: Sequence[Box3D], threshold: float) -> list[Box3D]:
    """Keep boxes with ``score >= threshold`` in their original order."""
    out = []
    for i, b in enumerate(boxes):
        if b.score is None:
            raise MissingScore(f"box {i} has no score")
        if b.score >= threshold:
            out.append(b)
    return out


def filter_with_policy(boxes: Sequence[Box3D], policy: ThresholdPolicy,
                       use: str = "label") -> list[Box3D]:
    """Per-class filtering; ``use`` is ``"label"`` (lambda1) or ``"sample"`` (lambda2)."""
    pick = policy.labeling_threshold if use == "label" else policy.sampling_threshold
    out = []
    for i, b in enumerate(boxes):
        if b.score is None:
            raise MissingScore(f"box {i} has no score")
        if b.score >= pick(b.class_id):
            out.append(b)
    return out


@dataclass(frozen=True)
class MockDetectorSpec:
    """Noise model of the stand-in teacher.

    ``dim_noise_sigma`` is relative (log-space). ``false_positive_rate`` is the
    Poisson mean of spurious boxes per call. Scores follow
    ``clip(1 - score_kappa * perturbation, 0.05, 1)`` where ``perturbation`` is
    center error over BEV diagonal plus mean absolute log size ratio plus
    heading error over pi. False positives score in ``fp_score_range``.

    Two knobs model objects cut by the edge of the scene range (a patch
    border, when run on patches). ``truncation_noise`` multiplies all sigmas
    of a box by ``1 + truncation_noise * (1 - visible)``, with ``visible`` the
    share of its footprint inside the range. With ``amodal=False`` the
    detector only boxes what it sees: predictions are centered on the
    visible part of a cut object, which then scores low against the full box.
    Boxes with nothing visible are not detected in either case.
    """

    center_noise_sigma: float = 0.0
    dim_noise_sigma: float = 0.0
    yaw_noise_sigma: float = 0.0
    z_noise_sigma: float = 0.0
    drop_rate: float = 0.0
    false_positive_rate: float = 0.0
    score_kappa: float = 2.0
    fp_score_range: tuple[float, float] = (0.05, 0.4)
    seed: int = 0
    truncation_noise: float = 0.0
    amodal: bool = True

    def __post_init__(self):
        for name in ("center_noise_sigma", "dim_noise_sigma", "yaw_noise_sigma", "z_noise_sigma",
                     "score_kappa", "truncation_noise"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise ValidationError(f"{name} must be finite and >= 0, got {v}")
        for name in ("drop_rate", "false_positive_rate"):
            _check_score(name, getattr(self, name))
        lo, hi = self.fp_score_range
        if not 0.0 <= lo <= hi <= 1.0:
            raise ValidationError(f"bad fp_score_range {self.fp_score_range}")


def perturbation_magnitude(gt: Box3D, pred: Box3D) -> float:
    center = math.hypot(math.hypot(pred.cx - gt.cx, pred.cy - gt.cy), pred.cz - gt.cz)
    dims = (abs(math.log(pred.l / gt.l)) + abs(math.log(pred.w / gt.w))
            + abs(math.log(pred.h / gt.h))) / 3.0
    dyaw = abs(pred.yaw - gt.yaw) % (2 * math.pi)
    dyaw = min(dyaw, 2 * math.pi - dyaw)
    return center / math.hypot(gt.l, gt.w) + dims + dyaw / math.pi


def mock_detect(scene: Scene, spec: MockDetectorSpec, seed: int | None = None,
                object_seeds: Sequence[int] | None = None) -> list[Box3D]:
    """Noisy, scored copies of the scene's boxes plus Poisson false positives.

    Every ground-truth box consumes the same random draws whatever the noise
    levels, so sweeping a sigma with a fixed seed scales one fixed perturbation.
    Center noise is drawn in the ground plane along the box's own length and
    width axes, so it turns with the scene; ``z_noise_sigma`` is the vertical
    counterpart.

    ``object_seeds`` gives box ``i`` its own stream. Calls that see the same
    object (overlapping patches) then perturb it identically, like a
    deterministic detector looking at the same points; only truncation
    differs between them.
    """
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    if object_seeds is not None and len(object_seeds) != len(scene.boxes):
        raise ValidationError(f"{len(object_seeds)} object seeds for {len(scene.boxes)} boxes")
    out = []
    for i, gt in enumerate(scene.boxes):
        box_rng = rng if object_seeds is None else np.random.default_rng(object_seeds[i])
        u = box_rng.random()
        zc = box_rng.standard_normal(3)
        zd = box_rng.standard_normal(3)
        zy = box_rng.standard_normal()
        if u < spec.drop_rate:
            continue
        gain, seen = 1.0, gt
        if spec.truncation_noise > 0 or not spec.amodal:
            visible, part = visible_part(gt, scene.cloud.range)
            if part is None:
                continue
            gain += spec.truncation_noise * (1.0 - visible)
            seen = gt if spec.amodal else part
        sc, sd = gain * spec.center_noise_sigma, gain * spec.dim_noise_sigma
        c, s = math.cos(gt.yaw), math.sin(gt.yaw)
        pred = Box3D(
            cx=seen.cx + sc * (c * zc[0] - s * zc[1]), cy=seen.cy + sc * (s * zc[0] + c * zc[1]),
            cz=seen.cz + gain * spec.z_noise_sigma * zc[2],
            l=seen.l * math.exp(sd * zd[0]), w=seen.w * math.exp(sd * zd[1]),
            h=seen.h * math.exp(sd * zd[2]),
            yaw=gt.yaw + gain * spec.yaw_noise_sigma * zy, class_id=gt.class_id,
        )
        score = 1.0 - spec.score_kappa * perturbation_magnitude(gt, pred)
        out.append(pred.replace(score=float(min(max(score, 0.05), 1.0))))

    n_fp = int(rng.poisson(spec.false_positive_rate)) if spec.false_positive_rate > 0 else 0
    r = scene.cloud.range
    classes = sorted({b.class_id for b in scene.boxes} or SIZE_PRIORS)
    for _ in range(n_fp):
        cls = classes[int(rng.integers(len(classes)))]
        l, w, h = SIZE_PRIORS.get(cls, (1.0, 1.0, 1.0))
        out.append(Box3D(
            cx=float(rng.uniform(r.x_min, r.x_max)), cy=float(rng.uniform(r.y_min, r.y_max)),
            cz=0.5 * h, l=l, w=w, h=h, yaw=float(rng.uniform(-math.pi, math.pi)),
            class_id=cls, score=float(rng.uniform(*spec.fp_score_range)),
        ))
    return out
