"""Serialized data models: scene files, run configuration, metrics and reports."""

import math
from enum import Enum
from typing import Dict, List, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

SCENE_VERSION = "wabe-splat/1"
UNIT_NORM_TOLERANCE = 1e-12
MIN_QUATERNION_NORM = 1e-8

Vec3 = List[float]


class StrictModel(BaseModel):
    """Base for file formats: unknown fields are rejected, numbers must be finite."""

    model_config = ConfigDict(extra="forbid")

    @model_validator(mode="after")
    def _finite_numbers(self):
        for name, value in self:
            _check_finite(value, name)
        return self


def _check_finite(value, path: str) -> None:
    if isinstance(value, float) and not math.isfinite(value):
        raise ValueError(f"{path} must be finite, got {value}")
    if isinstance(value, (list, tuple)):
        for i, v in enumerate(value):
            _check_finite(v, f"{path}[{i}]")


def _fixed_length(value: list, n: int, name: str) -> list:
    if len(value) != n:
        raise ValueError(f"{name} must have {n} components, got {len(value)}")
    return value


class RigidPoseRecord(StrictModel):
    """Head pose: unit quaternion (w, x, y, z) and translation."""

    rotation: List[float] = Field(default_factory=lambda: [1.0, 0.0, 0.0, 0.0])
    translation: Vec3 = Field(default_factory=lambda: [0.0, 0.0, 0.0])

    @field_validator("rotation")
    @classmethod
    def _quaternion(cls, v):
        _fixed_length(v, 4, "rotation")
        norm = math.sqrt(sum(c * c for c in v))
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"rotation must be a unit quaternion, got norm {norm}")
        return v

    @field_validator("translation")
    @classmethod
    def _translation(cls, v):
        return _fixed_length(v, 3, "translation")


class RigRecord(StrictModel):
    base_vertices: List[Vec3]
    triangles: List[List[int]]
    blendshapes: List[List[Vec3]] = Field(default_factory=list)
    poses: Dict[str, RigidPoseRecord] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _indices(self):
        n = len(self.base_vertices)
        for i, tri in enumerate(self.triangles):
            if len(tri) != 3 or any(not 0 <= v < n for v in tri):
                raise ValueError(f"triangles[{i}] must hold 3 vertex indices in [0, {n}), got {tri}")
        for b, shape in enumerate(self.blendshapes):
            if len(shape) != n:
                raise ValueError(f"blendshapes[{b}] has {len(shape)} deltas, expected {n}")
        return self


class Gaussian3D(StrictModel):
    """One splat in its parent triangle's frame."""

    position: Vec3
    rotation: List[float]
    log_scale: Vec3
    opacity_logit: float
    color: Vec3
    parent_triangle: int

    @field_validator("rotation")
    @classmethod
    def _rotation(cls, v):
        _fixed_length(v, 4, "rotation")
        norm = math.sqrt(sum(c * c for c in v))
        if not math.isfinite(norm) or norm < MIN_QUATERNION_NORM:
            raise ValueError(f"rotation must be a non-zero quaternion, got {v}")
        if abs(norm - 1.0) > UNIT_NORM_TOLERANCE:
            v = [c / norm for c in v]
        return v

    @field_validator("color")
    @classmethod
    def _color(cls, v):
        _fixed_length(v, 3, "color")
        if any(c < 0.0 or c > 1.0 for c in v):
            raise ValueError(f"color components must lie in [0, 1], got {v}")
        return v


class CameraRecord(StrictModel):
    fx: float = Field(gt=0)
    fy: float = Field(gt=0)
    cx: float
    cy: float
    rotation: List[Vec3] = Field(default_factory=lambda: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    translation: Vec3 = Field(default_factory=lambda: [0.0, 0.0, 0.0])
    width: int = Field(gt=0)
    height: int = Field(gt=0)


class TimelineEntry(StrictModel):
    """Expression weights and pose at one timestep; ``pose`` may name a rig pose."""

    time: int
    expression_weights: List[float] = Field(default_factory=list)
    pose: Union[str, RigidPoseRecord] = Field(default_factory=RigidPoseRecord)


class SceneFile(StrictModel):
    """Complete avatar scene: rig, bound Gaussians, cameras and timeline."""

    version: str = SCENE_VERSION
    rig: RigRecord
    gaussians: List[Gaussian3D] = Field(default_factory=list)
    cameras: List[CameraRecord] = Field(default_factory=list)
    timeline: List[TimelineEntry] = Field(default_factory=list)

    @field_validator("version")
    @classmethod
    def _version(cls, v):
        if v != SCENE_VERSION:
            raise ValueError(f"Unsupported scene version '{v}', expected '{SCENE_VERSION}'")
        return v

    @model_validator(mode="after")
    def _references(self):
        m = len(self.rig.triangles)
        for i, g in enumerate(self.gaussians):
            if not 0 <= g.parent_triangle < m:
                raise ValueError(f"gaussians[{i}].parent_triangle={g.parent_triangle} out of range [0, {m})")
        b = len(self.rig.blendshapes)
        for i, entry in enumerate(self.timeline):
            if len(entry.expression_weights) != b:
                raise ValueError(f"timeline[{i}].expression_weights has {len(entry.expression_weights)} "
                                 f"values, rig has {b} blendshapes")
            if isinstance(entry.pose, str) and entry.pose not in self.rig.poses:
                raise ValueError(f"timeline[{i}].pose names unknown rig pose '{entry.pose}'")
        return self


class LossWeights(StrictModel):
    """Weights of the total objective."""

    lambda1: float = Field(default=10.0, ge=0)  # reconstruction
    lambda2: float = Field(default=0.01, ge=0)  # discriminator
    lambda3: float = Field(default=0.01, ge=0)  # generator
    lambda4: float = Field(default=10.0, ge=0)  # binding constraint


class EditSpec(StrictModel):
    """Editor oracle settings; see ``docs/configuration.md`` for the preset catalog."""

    prompt_id: int = 0
    jitter_sigma: float = Field(default=0.0, ge=0)
    seed: int = 0


class BlendPolicy(str, Enum):
    DETACHED = "detached"
    FULL = "full"


class TrainConfig(StrictModel):
    beta_wabe: float = Field(default=6.0, ge=0)
    weights: LossWeights = Field(default_factory=LossWeights)
    learning_rate: float = Field(default=1e-2, ge=0)
    iterations: int = Field(default=1000, ge=0)
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    adversarial_enabled: bool = True
    wabe_enabled: bool = True
    wabe_weight_gradient: BlendPolicy = BlendPolicy.DETACHED
    editor: EditSpec = Field(default_factory=EditSpec)
    discriminator_lr_scale: float = Field(default=0.1, ge=0)
    discriminator_seed: Optional[int] = None
    checkpoint_every: int = Field(default=100, ge=0)
    sh_degree: int = 0
    tile_size: int = Field(default=16, gt=0)
    threads: int = Field(default=1, gt=0)

    @field_validator("sh_degree")
    @classmethod
    def _sh_degree(cls, v):
        if v != 0:
            raise ValueError("Only constant color (sh_degree 0) is supported")
        return v


class RunConfig(StrictModel):
    """Configuration file for the ``edit`` subcommand."""

    version: str = SCENE_VERSION
    scene: str
    train: TrainConfig = Field(default_factory=TrainConfig)


class StepMetrics(BaseModel):
    """One line of the metrics history."""

    iteration: int
    view: int
    time: int
    neighbor_time: int
    l1: float
    dssim: float
    recon: float
    const: float
    g_loss: Optional[float] = None
    d_loss: Optional[float] = None
    total: float
    wall_clock: float


class GradcheckReport(BaseModel):
    mode: str
    policy: str
    max_rel_error: Dict[str, float]
    worst_index: Dict[str, int] = Field(default_factory=dict)
    tolerance: float = 1e-4

    @property
    def worst(self) -> float:
        return max(self.max_rel_error.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.worst < self.tolerance


class ViewMetrics(BaseModel):
    view: int
    psnr: float
    ssim: float
    flicker_excess: float


class EvalReport(BaseModel):
    views: List[ViewMetrics]
    psnr: float
    ssim: float
    flicker_excess: float


class DriftReport(BaseModel):
    """Color drift of occluded Gaussians for one blending setting."""

    mode: str
    drift: List[float]  # per channel

    @property
    def worst(self) -> float:
        return max(self.drift)


class OcclusionAblationReport(BaseModel):
    wabe: DriftReport
    standard: DriftReport

    @property
    def ratio(self) -> float:
        return self.standard.worst / max(self.wabe.worst, 1e-12)


class AdversarialRun(BaseModel):
    seed: int
    psnr_adversarial: float
    psnr_plain: float


class AdversarialAblationReport(BaseModel):
    runs: List[AdversarialRun]
    discriminator_frozen_when_disabled: bool

    @property
    def wins(self) -> int:
        return sum(r.psnr_adversarial >= r.psnr_plain for r in self.runs)


class GradcheckSummary(BaseModel):
    scene: str
    reports: List[GradcheckReport]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.reports)
