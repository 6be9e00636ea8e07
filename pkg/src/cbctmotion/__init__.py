"""Simulation and detection of rigid-motion artifacts in short-scan dental CBCT.

The package simulates motion-corrupted cone-beam scans by perturbing
projection matrices, reconstructs 194-degree Parker-weighted FDK short-scan
volumes, and classifies each volume as motion-affected or clean via slice
scoring and volume averaging.
"""

from .errors import (
    BehindSourceError,
    ConfigurationError,
    IntegrityError,
    TruncationWarning,
    ValidationError,
)
from .geometry import (
    FrameGeometry,
    ScanGeometry,
    ShortScanView,
    Trajectory,
    build_circular_trajectory,
    decompose_projection,
    fan_angle,
    parker_weights,
    project_point,
    select_short_scan_views,
    short_scan_span,
)
from .motion import (
    MotionSpec,
    RigidMotionFrame,
    SCENARIO_NAMES,
    apply_motion,
    label_views,
    max_displacement,
    sample_motion,
    scenario_spec,
)
from .phantom import (
    AugmentSpec,
    PhantomSpec,
    Primitive,
    augment,
    default_phantom,
    rasterize,
    sample_attenuation,
)
from .projector import ProjectionStack, forward_project, integrate_ray
from .recon import cosine_weight, fdk_reconstruct, nrmse, ramp_filter
from .detector import (
    MOTION,
    NO_MOTION,
    MotionSliceScorer,
    Slice,
    SliceFeatureExtractor,
    VolumeVerdict,
    classify_volume,
    compute_features,
    extract_axial_slices,
    normalize_slice,
    score_slice,
    score_volume,
    volume_average,
)
from .evaluation import LabeledScore, auc_pr, evaluate_run, pr_curve
from .scenario import PRESETS, Scenario
from .pipeline import make_dataset, run_pipeline, simulate_scan
from .volume import Volume, VoxelGrid

__version__ = "0.1.0"
