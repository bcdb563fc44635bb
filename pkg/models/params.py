"""Pipeline parameters and the pipeline configuration file"""
import json
import math
from pathlib import Path
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class Params(BaseModel):
    """Base for parameter groups: immutable, unknown keys rejected"""

    model_config = ConfigDict(extra="forbid", frozen=True)


class LcpParams(Params):
    inlier_distance: float = Field(0.005, gt=0, description="LCP inlier radius δ, meters")


class IcpParams(Params):
    max_iters: int = Field(30, ge=1)
    convergence_eps: float = Field(1e-6, gt=0, description="translation (m) and rotation (rad) update threshold")
    rejection_factor: float = Field(3.0, gt=0, description="pairs farther than factor·δ are dropped")
    max_normal_angle: float = Field(math.radians(60.0), gt=0, le=math.pi, description="radians")
    min_correspondences: int = Field(6, ge=6)


class PsoParams(Params):
    num_particles: int = Field(15, ge=2)
    num_iterations: int = Field(3, ge=1)
    inertia_weight: float = Field(0.72, ge=0)
    cognitive_weight: float = Field(1.49, ge=0)
    social_weight: float = Field(1.49, ge=0)
    velocity_clamp_fraction: float = Field(0.25, gt=0, description="fraction of each joint range per iteration")
    rng_seed: int = 0


class CostParams(Params):
    collision_penalty: float = Field(1e6, gt=0, description="λ_c, cost units per meter of penetration")
    collision_voxel_size: float = Field(0.004, gt=0, description="per-link SDF resolution, meters")
    lcp: LcpParams = LcpParams()


class RoiParams(Params):
    margin_fraction: float = Field(0.2, ge=0, description="added to each side, fraction of hand dims")


class SdfParams(Params):
    voxel_size: float = Field(0.002, gt=0)
    margin_voxels: int = Field(5, ge=5)
    surface_spacing_fraction: float = Field(0.5, gt=0, le=1, description="surface sample spacing / voxel size")


class SegmentationParams(Params):
    epsilon: float = Field(0.003, description="points with SDF below this are hand points, meters")
    normal_neighbors: int = Field(10, ge=3)


class HeuristicParams(Params):
    rate: float = Field(50.0, gt=0, description="λ, 1/meters")
    decay: float = Field(0.5, gt=0, le=1, description="γ applied to a point's weight when drawn")


class PpfParams(Params):
    distance_step: float = Field(0.005, gt=0, description="meters")
    angle_step: float = Field(math.radians(12.0), gt=0, description="radians")


class RegistrationParams(Params):
    model_samples: int = Field(1000, ge=4)
    n_bases: int = Field(20, ge=0)
    rejection_budget_factor: int = Field(50, ge=1)
    coplanarity_tol: float = Field(0.003, gt=0)
    min_spread_fraction: float = Field(0.25, ge=0, lt=1, description="of the object cloud bounding-box diagonal")
    congruence_distance_tol: float = Field(0.004, gt=0)
    congruence_ratio_tol: float = Field(0.05, gt=0)
    congruence_normal_tol: float = Field(math.radians(30.0), gt=0, le=math.pi)
    max_congruent_per_base: Optional[int] = Field(None, ge=1, description="cap on congruent sets per base, None keeps all")
    collinearity_tol: float = Field(1e-3, gt=0, description="minimum triangle height ratio of the first three points")
    rng_seed: int = 0


class ClusterParams(Params):
    translation_radius: float = Field(0.01, gt=0)
    rotation_radius: float = Field(math.radians(20.0), gt=0)
    merge_translation: float = Field(0.003, gt=0)
    merge_rotation: float = Field(math.radians(5.0), gt=0)
    top_k: int = Field(100, gt=0)


class PhysicsParams(Params):
    max_penetration: float = Field(0.005, gt=0)
    max_separation: float = Field(0.01, gt=0)


class RenderParams(Params):
    discrepancy_cap: float = Field(0.02, gt=0, description="per-pixel cap, meters")
    retain_fraction: float = Field(1.0 / 3.0, gt=0, le=1)


class NoiseModel(Params):
    depth_sigma: float = Field(0.0, ge=0)
    dropout_rate: float = Field(0.0, ge=0, lt=1)


class SyntheticParams(Params):
    n_per_combination: int = Field(50, ge=1)
    n_azimuth: int = Field(18, ge=1)
    n_elevation: int = Field(12, ge=1)
    radii: List[float] = Field(default_factory=lambda: [0.3, 0.6, 0.9])
    min_radius: float = Field(0.3, gt=0)
    max_radius: float = Field(0.9, gt=0)
    width: int = Field(640, gt=0)
    height: int = Field(480, gt=0)
    fx: float = Field(615.0, gt=0)
    fy: float = Field(615.0, gt=0)
    close_step: float = Field(math.radians(0.5), gt=0)
    contact_tolerance: float = Field(0.001, gt=0)
    placement_attempts: int = Field(100, ge=1)
    placement_expand: float = Field(0.01, ge=0)
    object_sdf_voxel: float = Field(0.002, gt=0)
    max_scene_attempts_factor: int = Field(10, ge=1, description="grasp attempts per requested scene")
    noise: NoiseModel = NoiseModel()

    @field_validator("radii")
    @classmethod
    def validate_radii(cls, radii: List[float]) -> List[float]:
        """Validate that at least one radius is given and all are positive"""
        if not radii or min(radii) <= 0:
            raise ValueError("Viewpoint radii must be positive")
        return radii

    @model_validator(mode="after")
    def validate_radius_bounds(self) -> "SyntheticParams":
        """Validate that every radius lies within the configured bounds"""
        if self.min_radius > self.max_radius:
            raise ValueError("min_radius must not exceed max_radius")
        if min(self.radii) < self.min_radius or max(self.radii) > self.max_radius:
            raise ValueError("Viewpoint radii must lie within [min_radius, max_radius]")
        return self


class EvaluationParams(Params):
    epsilon: float = Field(0.005, gt=0, description="ADI success threshold, meters")
    adi_samples: int = Field(512, ge=1)
    curve_min: float = Field(0.001, gt=0)
    curve_max: float = Field(0.02, gt=0)
    curve_step: float = Field(0.001, gt=0)
    wrist_prior_translation_noise: float = Field(0.0, ge=0, description="meters")
    wrist_prior_rotation_noise: float = Field(0.0, ge=0, description="radians")

    @model_validator(mode="after")
    def validate_curve_range(self) -> "EvaluationParams":
        """Validate that the recall curve spans a non-empty range"""
        if self.curve_min >= self.curve_max:
            raise ValueError("curve_min must be below curve_max")
        return self

    def curve_epsilons(self) -> List[float]:
        count = int(round((self.curve_max - self.curve_min) / self.curve_step)) + 1
        return [round(self.curve_min + i * self.curve_step, 9) for i in range(count)]


class PipelineConfig(Params):
    """Every tunable of the pipeline, with the documented defaults"""

    seed: int = 0
    workers: int = Field(1, ge=1)
    lcp: LcpParams = LcpParams()
    icp: IcpParams = IcpParams()
    pso: PsoParams = PsoParams()
    cost: CostParams = CostParams()
    roi: RoiParams = RoiParams()
    sdf: SdfParams = SdfParams()
    segmentation: SegmentationParams = SegmentationParams()
    heuristic: HeuristicParams = HeuristicParams()
    ppf: PpfParams = PpfParams()
    registration: RegistrationParams = RegistrationParams()
    cluster: ClusterParams = ClusterParams()
    physics: PhysicsParams = PhysicsParams()
    render: RenderParams = RenderParams()
    evaluation: EvaluationParams = EvaluationParams()
    synthetic: SyntheticParams = SyntheticParams()

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        """Load a configuration file; missing keys take their defaults

        Raises:
            pydantic.ValidationError: unknown keys or values violating an invariant
        """
        return cls.model_validate_json(Path(path).read_text(encoding="utf-8"))

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(self.model_dump(mode="json"), indent=2) + "\n", encoding="utf-8")

    def with_overrides(self, seed=None, workers=None) -> "PipelineConfig":
        """Apply command-line overrides; the seed fans out to every seeded stage"""
        data = self.model_dump()
        if seed is not None:
            data["seed"] = seed
            data["pso"]["rng_seed"] = seed
            data["registration"]["rng_seed"] = seed
        if workers is not None:
            data["workers"] = workers
        return PipelineConfig.model_validate(data)
