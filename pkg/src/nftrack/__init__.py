"""Planar natural-feature tracking: a two-phase detect/track pose pipeline.

Detection extracts multi-scale FAST corners with steered binary descriptors,
matches them against a described template, and estimates the pose through
RANSAC homography + iterative PnP. Steady-state tracking warps the template by
the previous homography and follows up to 25 small patches by NCC search.
"""

from .core import (
    CameraIntrinsics,
    Descriptor,
    GrayImage,
    Homography,
    ImagePyramid,
    Keypoint,
    Pose,
    TargetTemplate,
    build_pyramid,
    to_gray,
)
from .errors import (
    BehindCameraError,
    ConfigError,
    DegenerateGeometryError,
    EstimationFailedError,
    InvalidInputError,
    PoseFailedError,
    SingularProjectionError,
    TooFewFeaturesError,
    TooFewPointsError,
    TrackError,
    TrackingLostError,
)
from .features import FeatureConfig, describe, detect_and_describe, detect_fast, orientation
from .geometry import (
    PnpParams,
    RansacParams,
    homography_dlt,
    pnp_iterative,
    pose_from_homography,
    ransac_homography,
    reprojection_error,
    transform_points,
)
from .matching import Match, filter_matches, hamming, match_nn
from .pipeline import (
    FrameResult,
    Phase,
    Tracker,
    TrackerConfig,
    TrackerState,
    build_template,
    create_tracker,
    load_config,
    parse_config,
)
from .tracking import (
    TrackedPoint,
    TrackParams,
    ValidityParams,
    downsample2,
    extract_patch,
    ncc,
    ncc_search,
    select_tracking_points,
    track_frame,
    validate_pose,
    warp_template,
)

__version__ = "0.1.0"
