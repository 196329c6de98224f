"""Relative-offset geometric constraints for 6D object pose estimation.

The package turns depth + mask observations into anchored constraint
encodings, recovers poses from them in closed form, evaluates the standard
distance metrics, and generates deterministic synthetic scenes to exercise
all of it.
"""

from .encoding import (
    ConstraintForm,
    GeoEncoding,
    GeoTargets,
    InputMode,
    SceneObservation,
    TargetMode,
    constraint_residual,
    decode_translation,
    encode_input,
    encode_targets,
    naive_offset_residual,
)
from .errors import (
    ConfigError,
    DegenerateConfigurationError,
    EmptyInputError,
    EmptyObjectError,
    FormatError,
    InvalidDepthError,
    MissingPoseError,
    ModeMismatchError,
    Offset6DError,
)
from .geometry import (
    CameraIntrinsics,
    CamPoint,
    ObjPoint,
    RigidPose,
    backproject,
    backproject_pixels,
    compose,
    inverse_transform,
    inverse_transform_points,
    invert,
    nearest_rotation,
    project,
    project_points,
    transform,
    transform_points,
)
from .metrics import (
    LossDecomposition,
    MetricConfig,
    ObjectModel,
    accuracy_at_threshold,
    add,
    add_loss,
    add_s,
    add_selective,
    auc,
    decompose_add_loss,
    weighted_add_loss,
)
from .refpoint import (
    DepthMap,
    InstanceMask,
    ReferencePoint,
    RefStrategy,
    Roi,
    make_reference,
    ref_center_meandepth,
    ref_center_nearest,
    ref_mean_visible,
    roi_from_mask,
)
from .solver import (
    ConditionFlag,
    SolveReport,
    rotation_geodesic_error,
    solve_from_constraints,
    solve_procrustes,
)
from .synth import (
    BoxModel,
    BoxVolume,
    CylinderModel,
    DistributionReport,
    FileModel,
    GaussianVolume,
    SceneSpec,
    SphereModel,
    SyntheticScene,
    distribution_report,
    make_model,
    model_for_spec,
    render_scene,
    sample_rotation_uniform,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
