"""Pipeline configuration: defaults, JSON round-trip and validation.

The file format is a JSON object with one section per stage::

    {"seed": 0, "scene_range": [-32, 32, -32, 32],
     "patch": {"n": 4, "delta": 2.0, ...}, "thresholds": {"lambda1": 0.5, ...}, ...}

Missing keys take their defaults; unknown keys are validation errors.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .geometry import Rect
from .patches import AlignMode, NormalizerMode, NormalizerSpec, PatchGridSpec
from .pillarmix import PillarGridSpec
from .pseudo import MockDetectorSpec, ThresholdPolicy
from .sampling import Direction, PastePolicy
from .synthetic import SyntheticWorldSpec


@dataclass
class PatchSection:
    n: int = 4
    delta: float = 2.0
    align_mode: str = "rotate"
    min_gt: int = 4


@dataclass
class MixSection:
    pillar_size: float = 5.0
    randomize_swap: bool = True
    rotation: list = field(default_factory=lambda: [-math.pi / 4, math.pi / 4])
    flip_prob: float = 0.5
    scale: list = field(default_factory=lambda: [0.95, 1.05])


@dataclass
class ThresholdSection:
    lambda1: float = 0.5
    lambda2: float = 0.8


@dataclass
class NormalizerSection:
    mode: str = "patch_normalizer"
    alpha: float = 3.0


@dataclass
class MemorySection:
    voxel_sizes: list = field(default_factory=lambda: [[0.1, 0.1, 0.15], [0.05, 0.05, 0.05],
                                                       [0.035, 0.035, 0.035]])
    z_range: list = field(default_factory=lambda: [-2.0, 4.0])


@dataclass
class PasteSection:
    target_counts: dict = field(default_factory=lambda: {"1": 15, "2": 10, "3": 10})
    directions: list = field(default_factory=lambda: sorted(d.value for d in Direction))
    max_attempts: int = 100


@dataclass
class TeacherSection:
    center_noise_sigma: float = 0.3
    dim_noise_sigma: float = 0.03
    yaw_noise_sigma: float = 0.05
    z_noise_sigma: float = 0.05
    drop_rate: float = 0.05
    false_positive_rate: float = 0.5
    score_kappa: float = 2.0
    truncation_noise: float = 1.0
    amodal: bool = False


@dataclass
class SyntheticSection:
    num_scenes: int = 10
    labeled_fraction: float = 0.2
    ground_density: float = 1.5
    object_density: float = 60.0
    decay_range: float = 20.0
    vehicles: list = field(default_factory=lambda: [8, 14])
    pedestrians: list = field(default_factory=lambda: [3, 8])
    cyclists: list = field(default_factory=lambda: [2, 5])

    @property
    def num_labeled(self) -> int:
        return int(round(self.num_scenes * self.labeled_fraction))


@dataclass
class EvalSection:
    iou_threshold: float = 0.7
    metric: str = "iou3d"


_SECTIONS = {
    "patch": PatchSection, "pillarmix": MixSection, "thresholds": ThresholdSection,
    "normalizer": NormalizerSection, "memory": MemorySection, "paste": PasteSection,
    "teacher": TeacherSection, "synthetic": SyntheticSection, "eval": EvalSection,
}


@dataclass
class PipelineConfig:
    seed: int = 0
    workers: int = 1
    scene_range: list = field(default_factory=lambda: [-32.0, 32.0, -32.0, 32.0])
    patch: PatchSection = field(default_factory=PatchSection)
    pillarmix: MixSection = field(default_factory=MixSection)
    thresholds: ThresholdSection = field(default_factory=ThresholdSection)
    normalizer: NormalizerSection = field(default_factory=NormalizerSection)
    memory: MemorySection = field(default_factory=MemorySection)
    paste: PasteSection = field(default_factory=PasteSection)
    teacher: TeacherSection = field(default_factory=TeacherSection)
    synthetic: SyntheticSection = field(default_factory=SyntheticSection)
    eval: EvalSection = field(default_factory=EvalSection)

    # -- serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        problems = []
        kwargs = {}
        top = {f.name for f in dataclasses.fields(cls)}
        for key, value in data.items():
            if key not in top:
                problems.append(f"unknown key {key!r}")
            elif key in _SECTIONS:
                section = _SECTIONS[key]
                names = {f.name for f in dataclasses.fields(section)}
                if not isinstance(value, dict):
                    problems.append(f"section {key!r} must be an object")
                    continue
                bad = sorted(set(value) - names)
                problems.extend(f"unknown key {key}.{b}" for b in bad)
                kwargs[key] = section(**{k: v for k, v in value.items() if k in names})
            else:
                kwargs[key] = value
        if problems:
            raise ConfigError(problems)
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            raise ConfigError([f"{path}: invalid JSON ({e})"]) from None
        return cls.from_dict(data)

    # -- validation --------------------------------------------------------

    def problems(self) -> list[str]:
        p = []

        def check(cond, msg):
            if not cond:
                p.append(msg)

        check(isinstance(self.seed, int) and self.seed >= 0, "seed must be a non-negative integer")
        check(isinstance(self.workers, int) and self.workers >= 1, "workers must be >= 1")
        r = self.scene_range
        check(len(r) == 4 and r[1] > r[0] and r[3] > r[2], "scene_range must be [x0, x1, y0, y1]")
        if len(r) == 4:
            check(r[0] == -r[1] and r[2] == -r[3], "scene_range must be centered on the sensor")
        check(isinstance(self.patch.n, int) and self.patch.n >= 2 and self.patch.n % 2 == 0,
              "patch.n must be an even integer >= 2")
        check(self.patch.delta >= 0, "patch.delta must be >= 0")
        check(self.patch.align_mode in {m.value for m in AlignMode}, "patch.align_mode must be rotate|flip")
        check(isinstance(self.patch.min_gt, int) and self.patch.min_gt >= 0, "patch.min_gt must be >= 0")
        check(self.pillarmix.pillar_size > 0, "pillarmix.pillar_size must be positive")
        check(0 <= self.pillarmix.flip_prob <= 1, "pillarmix.flip_prob must lie in [0, 1]")
        check(len(self.pillarmix.scale) == 2 and 0 < self.pillarmix.scale[0] <= self.pillarmix.scale[1],
              "pillarmix.scale must be [lo, hi] with 0 < lo <= hi")
        check(len(self.pillarmix.rotation) == 2 and self.pillarmix.rotation[0] <= self.pillarmix.rotation[1],
              "pillarmix.rotation must be [lo, hi]")
        for name in ("lambda1", "lambda2"):
            check(0 <= getattr(self.thresholds, name) <= 1, f"thresholds.{name} must lie in [0, 1]")
        check(self.normalizer.mode in {m.value for m in NormalizerMode}, "normalizer.mode is not a known mode")
        check(self.normalizer.alpha > 0, "normalizer.alpha must be positive")
        check(all(len(v) == 3 and min(v) > 0 for v in self.memory.voxel_sizes),
              "memory.voxel_sizes must be positive triples")
        check(len(self.memory.z_range) == 2 and self.memory.z_range[0] < self.memory.z_range[1],
              "memory.z_range must be [lo, hi]")
        check(all(int(v) >= 0 for v in self.paste.target_counts.values()), "paste.target_counts must be >= 0")
        known = {d.value for d in Direction}
        check(set(self.paste.directions) <= known, f"paste.directions must be drawn from {sorted(known)}")
        check(self.paste.max_attempts >= 1, "paste.max_attempts must be >= 1")
        t = self.teacher
        check(min(t.center_noise_sigma, t.dim_noise_sigma, t.yaw_noise_sigma, t.z_noise_sigma, t.score_kappa,
                  t.truncation_noise) >= 0,
              "teacher sigmas, score_kappa and truncation_noise must be >= 0")
        check(0 <= t.drop_rate <= 1 and 0 <= t.false_positive_rate <= 1,
              "teacher.drop_rate and teacher.false_positive_rate must lie in [0, 1]")
        s = self.synthetic
        check(s.num_scenes >= 1, "synthetic.num_scenes must be >= 1")
        check(0 <= s.labeled_fraction <= 1, "synthetic.labeled_fraction must lie in [0, 1]")
        check(min(s.ground_density, s.object_density) >= 0 and s.decay_range > 0,
              "synthetic densities must be >= 0 and decay_range > 0")
        for name in ("vehicles", "pedestrians", "cyclists"):
            lo_hi = getattr(s, name)
            check(len(lo_hi) == 2 and 0 <= lo_hi[0] <= lo_hi[1], f"synthetic.{name} must be [min, max]")
        check(0 < self.eval.iou_threshold <= 1, "eval.iou_threshold must lie in (0, 1]")
        check(self.eval.metric in ("bev", "iou3d"), "eval.metric must be bev|iou3d")
        return p

    def validate(self) -> "PipelineConfig":
        p = self.problems()
        if p:
            raise ConfigError(p)
        return self

    # -- builders ------------------------------------------------------------

    @property
    def range_rect(self) -> Rect:
        return Rect(*map(float, self.scene_range))

    def patch_grid(self) -> PatchGridSpec:
        return PatchGridSpec(self.patch.n, float(self.patch.delta), self.range_rect)

    def pillar_grid(self) -> PillarGridSpec:
        return PillarGridSpec(self.range_rect, float(self.pillarmix.pillar_size))

    def threshold_policy(self) -> ThresholdPolicy:
        return ThresholdPolicy(self.thresholds.lambda1, self.thresholds.lambda2)

    def normalizer_spec(self) -> NormalizerSpec:
        return NormalizerSpec(self.normalizer.mode, self.normalizer.alpha)

    def paste_policy(self, seed: int = 0) -> PastePolicy:
        return PastePolicy({int(k): int(v) for k, v in self.paste.target_counts.items()},
                           frozenset(self.paste.directions), self.paste.max_attempts, seed)

    def teacher_spec(self, seed: int = 0) -> MockDetectorSpec:
        t = self.teacher
        return MockDetectorSpec(t.center_noise_sigma, t.dim_noise_sigma, t.yaw_noise_sigma,
                                t.z_noise_sigma, t.drop_rate, t.false_positive_rate,
                                t.score_kappa, seed=seed, truncation_noise=t.truncation_noise,
                                amodal=t.amodal)

    def world_spec(self, seed: int = 0) -> SyntheticWorldSpec:
        s = self.synthetic
        return SyntheticWorldSpec(
            extent=self.range_rect,
            class_counts={1: tuple(s.vehicles), 2: tuple(s.pedestrians), 3: tuple(s.cyclists)},
            ground_density=s.ground_density, object_density=s.object_density,
            decay_range=s.decay_range, seed=seed)
