"""Partial-scene LiDAR detection toolkit for semi-supervised experiments.

Scenes are split into patches that a detector can afford at small voxel
sizes, mixed pillar by pillar, augmented by copy-paste from ground-truth and
pseudo-label databases, and scored with 3D AP/APH. A seeded mock teacher and
synthetic scenes make the whole loop runnable on a laptop.
"""

from .classes import CLASS_NAMES, CYCLIST, PEDESTRIAN, VEHICLE
from .config import PipelineConfig
from .errors import (ConfigError, LidarSSLError, NotDefined, PlacementFailed, ValidationError)
from .eval3d import IoUMetric, average_precision, heading_accuracy, match, metrics_report
from .geometry import (Box3D, PointCloud, Provenance, Rect, Scene, Transform2D, bev_iou,
                       iou_3d, points_in_box, points_in_box_mask)
from .io import read_scene, write_scene
from .patches import (AlignMode, NormalizerMode, NormalizerSpec, Patch, PatchGridSpec,
                      canonical_patches, fovea_select, partition, patch_normalizer, patch_shift,
                      quadrant_align)
from .pillarmix import MixPair, PillarGridSpec, pillar_mix
from .pipeline import run_pipeline
from .pseudo import MockDetectorSpec, ThresholdPolicy, filter_pseudo_labels, mock_detect
from .rpn_loss import rpn_loss
from .sampling import DatabaseKind, Direction, PastePolicy, build_database, paste, semi_sample
from .synthetic import SyntheticWorldSpec, generate_scene
from .voxels import estimate_voxels

__version__ = "0.1.0"
