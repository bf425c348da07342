"""The two-phase state machine: full detection (features + matching + RANSAC
homography + PnP) until a pose is found, then lightweight patch tracking until
the pose validity gate fails, with per-stage timing instrumentation."""

from __future__ import annotations

import dataclasses
import enum
import time
from dataclasses import dataclass, field

import numpy as np

from .core import CameraIntrinsics, GrayImage, Homography, Pose, TargetTemplate
from .errors import (
    ConfigError,
    DegenerateGeometryError,
    EstimationFailedError,
    InvalidInputError,
    PoseFailedError,
    SingularProjectionError,
    TooFewFeaturesError,
    TooFewPointsError,
    TrackingLostError,
)
from .features import FeatureConfig, detect_and_describe
from .geometry import (
    PnpParams,
    RansacParams,
    pnp_iterative,
    pose_from_homography,
    ransac_homography,
    transform_points,
)
from .matching import filter_matches, match_nn
from .tracking import (
    TrackedPoint,
    TrackParams,
    ValidityParams,
    downsample2,
    extract_patch,
    full_to_downsampled,
    select_tracking_points,
    track_frame,
    validate_pose,
    warp_template,
)

STAGES = ("feature", "match", "ransac", "pnp", "warp", "ncc", "total")


class Phase(enum.Enum):
    DETECTING = "detecting"
    TRACKING = "tracking"


@dataclass(frozen=True)
class TrackerConfig:
    """Aggregated pipeline parameters; every leaf default is the module default.

    pnp_points selects the pose path after RANSAC: 'corners' (transfer the 4
    template corners through H, PnP on those) or 'inliers' (PnP over all
    RANSAC inliers seeded by the corner-path estimate).
    """

    features: FeatureConfig = field(default_factory=FeatureConfig)
    ransac: RansacParams = field(default_factory=RansacParams)
    pnp: PnpParams = field(default_factory=PnpParams)
    validity: ValidityParams = field(default_factory=ValidityParams)
    track: TrackParams = field(default_factory=TrackParams)
    match_filter_floor: int = 30
    pnp_points: str = "corners"
    seed: int = 7

    def __post_init__(self):
        if self.pnp_points not in ("corners", "inliers"):
            raise ConfigError("pnp_points must be 'corners' or 'inliers'")
        if self.match_filter_floor < 0:
            raise ConfigError("match_filter_floor must be >= 0")


_SECTIONS = {
    "features": FeatureConfig,
    "ransac": RansacParams,
    "pnp": PnpParams,
    "validity": ValidityParams,
    "track": TrackParams,
}


def _convert(raw: str, typ, key: str):
    raw = raw.strip()
    if typ is bool:
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    try:
        return typ(raw)
    except ValueError as e:
        raise ConfigError(f"{key}: {e}") from e


def parse_config(text: str) -> TrackerConfig:
    """Parse the flat key=value configuration format.

    Keys mirror TrackerConfig field names; nested parameters use a dotted
    section prefix, e.g. `ransac.max_iterations=500` or
    `track.ncc_accept=0.7`. Blank lines and `#` comments are skipped.
    """
    sections: dict[str, dict] = {name: {} for name in _SECTIONS}
    top: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key=value, got {stripped!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if "." in key:
            section, name = key.split(".", 1)
            cls = _SECTIONS.get(section)
            if cls is None:
                raise ConfigError(f"line {lineno}: unknown section {section!r}")
            fields = {f.name: f.type for f in dataclasses.fields(cls)}
            if name not in fields:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            typ = _FIELD_TYPES[(cls, name)]
            sections[section][name] = _convert(raw, typ, key)
        else:
            if key not in _TOP_TYPES:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            top[key] = _convert(raw, _TOP_TYPES[key], key)

    try:
        return TrackerConfig(
            features=FeatureConfig(**sections["features"]),
            ransac=RansacParams(**sections["ransac"]),
            pnp=PnpParams(**sections["pnp"]),
            validity=ValidityParams(**sections["validity"]),
            track=TrackParams(**sections["track"]),
            **top,
        )
    except InvalidInputError as e:
        raise ConfigError(str(e)) from e


def _field_types(cls):
    hints = {
        "fast_threshold": int, "max_features": int, "min_features": int,
        "levels": int, "scale_factor": float,
        "max_iterations": int, "inlier_threshold": float, "confidence": float,
        "min_inliers": int,
        "convergence_epsilon": float, "damping_initial": float,
        "translation_ratio": float, "min_tracked_points": int,
        "rotation_threshold_deg": float,
        "cap": int, "ncc_accept": float, "search_window": int,
        "search_radius": int, "match_resolution": str, "use_ransac": bool,
    }
    return {(cls, f.name): hints[f.name] for f in dataclasses.fields(cls)}


_FIELD_TYPES: dict = {}
for _cls in _SECTIONS.values():
    _FIELD_TYPES.update(_field_types(_cls))
_TOP_TYPES = {"match_filter_floor": int, "pnp_points": str, "seed": int}


def load_config(path) -> TrackerConfig:
    with open(path, "r", encoding="utf-8") as f:
        return parse_config(f.read())


def config_to_text(config: TrackerConfig) -> str:
    """Serialize a config in the flat key=value format (round-trips)."""
    lines = []
    for section, cls in _SECTIONS.items():
        obj = getattr(config, section)
        for f in dataclasses.fields(cls):
            lines.append(f"{section}.{f.name}={getattr(obj, f.name)}")
    for key in _TOP_TYPES:
        lines.append(f"{key}={getattr(config, key)}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class FrameResult:
    """Outcome of one processed frame. Timings are microseconds per stage;
    stages that did not run this frame report 0."""

    phase_executed: Phase
    pose: Pose | None
    homography: Homography | None
    inlier_count: int
    timings: dict[str, int]

    def __post_init__(self):
        if (self.pose is None) != (self.homography is None):
            raise InvalidInputError("pose and homography must be present together")
        object.__setattr__(self, "timings",
                           {s: int(self.timings.get(s, 0)) for s in STAGES})


@dataclass
class TrackerState:
    phase: Phase = Phase.DETECTING
    last_h: Homography | None = None
    last_pose: Pose | None = None
    tracked_points: list = field(default_factory=list)
    consecutive_detection_frames: int = 0

    def check(self):
        if self.phase is Phase.TRACKING:
            assert self.last_h is not None and self.last_pose is not None
            assert len(self.tracked_points) > 0
        else:
            assert not self.tracked_points


class Tracker:
    """One target, one camera. Drive with process_frame(); single-threaded."""

    def __init__(self, template: TargetTemplate, k: CameraIntrinsics,
                 config: TrackerConfig = TrackerConfig()):
        if len(template.keypoints) < config.features.min_features:
            raise TooFewFeaturesError(
                f"template has {len(template.keypoints)} features, "
                f"config needs >= {config.features.min_features}")
        self.template = template
        self.k = k
        self.config = config
        self.state = TrackerState()
        self._frame_size = None  # locked on the first frame
        self._template_xy = np.array([[p.x, p.y] for p in template.keypoints])

    # -- helpers ------------------------------------------------------------

    def _clear_to_detecting(self):
        self.state.phase = Phase.DETECTING
        self.state.last_h = None
        self.state.last_pose = None
        self.state.tracked_points = []

    def _estimate_pose(self, h: Homography, src_template_px, dst_frame_px, mask):
        cfg = self.config
        if cfg.pnp_points == "inliers":
            obj = self.template.plane_points(src_template_px[mask])
            seed = pose_from_homography(h, self.template.corners_2d,
                                        self.template.corners_3d, self.k, cfg.pnp)
            return pnp_iterative(obj, dst_frame_px[mask], self.k,
                                 initial=seed, params=cfg.pnp)
        return pose_from_homography(h, self.template.corners_2d,
                                    self.template.corners_3d, self.k, cfg.pnp)

    def _seed_tracked_points(self, h: Homography, frame_kps, matches, mask):
        """Build the patch-tracked point set from the detection inliers."""
        cfg = self.config
        kps = [frame_kps[m.query_index] for m in matches]
        idx = select_tracking_points(kps, mask, cap=cfg.track.cap,
                                     min_points=cfg.validity.min_tracked_points)
        warp = warp_template(self.template.image, h, self._frame_size)
        scale = 2.0 if cfg.track.match_resolution == "half" else 1.0
        source = downsample2(warp) if scale == 2.0 else warp

        points = []
        for i in idx:
            m = matches[i]
            tpl_kp = self.template.keypoints[m.train_index]
            tpl_pt = np.array([[tpl_kp.x, tpl_kp.y]])
            pred = transform_points(h, tpl_pt)[0]
            patch = extract_patch(source, full_to_downsampled(pred, scale))
            if patch is None:
                continue
            frame_kp = frame_kps[m.query_index]
            points.append(TrackedPoint(template_point=(tpl_kp.x, tpl_kp.y),
                                       last_frame_point=(frame_kp.x, frame_kp.y),
                                       patch=patch))
        return points

    # -- phases -------------------------------------------------------------

    def _run_detection(self, frame: GrayImage):
        cfg = self.config
        timings = {}
        self.state.consecutive_detection_frames += 1

        t0 = time.perf_counter_ns()
        try:
            kps, descs = detect_and_describe(frame, cfg.features)
        except TooFewFeaturesError:
            timings["feature"] = (time.perf_counter_ns() - t0) // 1000
            return None, None, 0, timings
        t1 = time.perf_counter_ns()
        timings["feature"] = (t1 - t0) // 1000

        matches = filter_matches(match_nn(descs, self.template.descriptors),
                                 floor=cfg.match_filter_floor)
        t2 = time.perf_counter_ns()
        timings["match"] = (t2 - t1) // 1000
        if len(matches) < 4:
            return None, None, 0, timings

        src = self._template_xy[[m.train_index for m in matches]]
        dst = np.array([[kps[m.query_index].x, kps[m.query_index].y] for m in matches])
        try:
            h, mask = ransac_homography(src, dst, cfg.ransac, rng_seed=cfg.seed)
        except (EstimationFailedError, DegenerateGeometryError):
            timings["ransac"] = (time.perf_counter_ns() - t2) // 1000
            return None, None, 0, timings
        t3 = time.perf_counter_ns()
        timings["ransac"] = (t3 - t2) // 1000
        inliers = int(mask.sum())

        try:
            pose = self._estimate_pose(h, src, dst, mask)
        except (PoseFailedError, DegenerateGeometryError, SingularProjectionError):
            timings["pnp"] = (time.perf_counter_ns() - t3) // 1000
            return None, None, inliers, timings
        t4 = time.perf_counter_ns()
        timings["pnp"] = (t4 - t3) // 1000

        # seed the tracking phase; a pose with too few stable inlier points is
        # still reported, the tracker just stays in detection
        try:
            points = self._seed_tracked_points(h, kps, matches, mask)
        except TooFewPointsError:
            points = []
        timings["warp"] = (time.perf_counter_ns() - t4) // 1000

        if len(points) >= cfg.validity.min_tracked_points:
            self.state.phase = Phase.TRACKING
            self.state.last_h = h
            self.state.last_pose = pose
            self.state.tracked_points = points
            self.state.consecutive_detection_frames = 0
        return h, pose, inliers, timings

    def _run_tracking(self, frame: GrayImage):
        cfg = self.config
        timings = {}
        prev_pose = self.state.last_pose
        track_ransac = (dataclasses.replace(cfg.ransac, min_inliers=4)
                        if cfg.track.use_ransac else None)
        try:
            new_h, new_pose, survivors = track_frame(
                self.state.last_h, self.state.tracked_points, frame,
                self.k, self.template,
                params=cfg.track, pnp_params=cfg.pnp,
                min_points=cfg.validity.min_tracked_points,
                ransac_params=track_ransac,
                timings_out=timings)
        except TrackingLostError:
            self._clear_to_detecting()
            return None, None, 0, timings

        if not validate_pose(prev_pose, new_pose, self.template, cfg.validity):
            self._clear_to_detecting()
            return None, None, len(survivors), timings

        self.state.last_h = new_h
        self.state.last_pose = new_pose
        self.state.tracked_points = survivors
        return new_h, new_pose, len(survivors), timings

    # -- public -------------------------------------------------------------

    def process_frame(self, frame: GrayImage) -> FrameResult:
        """Run one frame through the state machine and return its result.

        Frame dimensions are locked by the first processed frame; a mismatch
        afterwards raises InvalidInputError. Algorithmic failures never raise:
        they come back as a FrameResult without a pose.
        """
        if self._frame_size is None:
            self._frame_size = frame.size
        elif frame.size != self._frame_size:
            raise InvalidInputError(
                f"frame is {frame.size}, tracker is locked to {self._frame_size}")

        phase = self.state.phase
        t0 = time.perf_counter_ns()
        if phase is Phase.DETECTING:
            h, pose, inliers, timings = self._run_detection(frame)
        else:
            h, pose, inliers, timings = self._run_tracking(frame)
        timings["total"] = (time.perf_counter_ns() - t0) // 1000

        self.state.check()
        return FrameResult(phase_executed=phase, pose=pose, homography=h,
                           inlier_count=inliers, timings=timings)


def create_tracker(template: TargetTemplate, k: CameraIntrinsics,
                   config: TrackerConfig = TrackerConfig()) -> Tracker:
    """Create a tracker in the Detecting phase for a described template."""
    return Tracker(template, k, config)


def build_template(image: GrayImage, physical_width: float, physical_height: float,
                   config: FeatureConfig = FeatureConfig()) -> TargetTemplate:
    """Detect and describe a template image, producing a TargetTemplate.

    Raises TooFewFeaturesError for texture-poor images.
    """
    kps, descs = detect_and_describe(image, config)
    return TargetTemplate.make(image, kps, descs, physical_width, physical_height,
                               min_features=config.min_features)
