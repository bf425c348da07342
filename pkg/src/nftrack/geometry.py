"""Homography estimation (normalized DLT + RANSAC), projective point transfer,
and iterative PnP (Levenberg-Marquardt over axis-angle + translation).

Jacobians are analytic; `projection_jacobian` is exposed so tests can check it
against central finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import CameraIntrinsics, Homography, Pose
from .errors import (
    BehindCameraError,
    DegenerateGeometryError,
    EstimationFailedError,
    InvalidInputError,
    PoseFailedError,
    SingularProjectionError,
)


@dataclass(frozen=True)
class RansacParams:
    max_iterations: int = 500
    inlier_threshold: float = 3.0
    confidence: float = 0.995
    min_inliers: int = 8

    def __post_init__(self):
        if not (0.0 < self.confidence < 1.0):
            raise InvalidInputError("confidence must lie in (0, 1)")
        if self.inlier_threshold <= 0:
            raise InvalidInputError("inlier_threshold must be positive")
        if self.max_iterations < 1:
            raise InvalidInputError("max_iterations must be >= 1")
        if self.min_inliers < 4:
            raise InvalidInputError("min_inliers must be >= 4")


@dataclass(frozen=True)
class PnpParams:
    max_iterations: int = 20
    convergence_epsilon: float = 1e-6
    damping_initial: float = 1e-3

    def __post_init__(self):
        if self.max_iterations < 1 or self.convergence_epsilon <= 0 or self.damping_initial <= 0:
            raise InvalidInputError("PnP parameters must be positive")


def _as_points(pts, dim: int, name: str) -> np.ndarray:
    a = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    if a.ndim != 2 or a.shape[1] != dim:
        raise InvalidInputError(f"{name} must be (N, {dim}), got {a.shape}")
    return a


def transform_points(h: Homography, points) -> np.ndarray:
    """Apply a homography with perspective divide. (N,2) in, (N,2) out."""
    p = _as_points(points, 2, "points")
    q = np.column_stack([p, np.ones(len(p))]) @ h.h.T
    w = q[:, 2]
    if np.any(np.abs(w) < 1e-12):
        raise SingularProjectionError("a point mapped to the line at infinity")
    return q[:, :2] / w[:, None]


def _hartley_normalize(pts: np.ndarray):
    """Translate centroid to the origin, scale mean distance to sqrt(2)."""
    c = pts.mean(axis=0)
    d = np.sqrt(((pts - c) ** 2).sum(axis=1)).mean()
    if d < 1e-12:
        raise DegenerateGeometryError("all points coincide")
    s = math.sqrt(2.0) / d
    T = np.array([[s, 0.0, -s * c[0]],
                  [0.0, s, -s * c[1]],
                  [0.0, 0.0, 1.0]])
    pn = (pts - c) * s
    return pn, T


def _collinear(p0, p1, p2, eps: float = 1e-9) -> bool:
    return abs((p1[0] - p0[0]) * (p2[1] - p0[1])
               - (p1[1] - p0[1]) * (p2[0] - p0[0])) < eps


def homography_dlt(src, dst) -> Homography:
    """Normalized DLT from >= 4 point correspondences (src -> dst).

    Raises DegenerateGeometryError for collinear minimal samples or a
    rank-deficient system.
    """
    s = _as_points(src, 2, "src")
    d = _as_points(dst, 2, "dst")
    if len(s) != len(d):
        raise InvalidInputError("src and dst must have equal length")
    n = len(s)
    if n < 4:
        raise InvalidInputError("homography needs >= 4 correspondences")

    sn, Ts = _hartley_normalize(s)
    dn, Td = _hartley_normalize(d)
    if n == 4:
        for pts in (sn, dn):
            for skip in range(4):
                tri = [pts[i] for i in range(4) if i != skip]
                if _collinear(*tri, eps=1e-6):
                    raise DegenerateGeometryError("3 of 4 sample points are collinear")

    A = np.zeros((2 * n, 9))
    x, y = sn[:, 0], sn[:, 1]
    u, v = dn[:, 0], dn[:, 1]
    A[0::2, 0] = x
    A[0::2, 1] = y
    A[0::2, 2] = 1.0
    A[0::2, 6] = -u * x
    A[0::2, 7] = -u * y
    A[0::2, 8] = -u
    A[1::2, 3] = x
    A[1::2, 4] = y
    A[1::2, 5] = 1.0
    A[1::2, 6] = -v * x
    A[1::2, 7] = -v * y
    A[1::2, 8] = -v

    _, sv, Vt = np.linalg.svd(A)
    if sv[7] < 1e-10 * max(sv[0], 1e-300):
        raise DegenerateGeometryError("DLT system is rank-deficient")
    Hn = Vt[-1].reshape(3, 3)
    try:
        return Homography(np.linalg.inv(Td) @ Hn @ Ts)
    except DegenerateGeometryError as e:
        raise DegenerateGeometryError(f"DLT produced a singular homography: {e}") from e


def _symmetric_transfer_sq(h: Homography, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Forward + backward squared transfer error per correspondence."""
    m = h.h
    mi = np.linalg.inv(m)
    fwd = np.column_stack([src, np.ones(len(src))]) @ m.T
    bwd = np.column_stack([dst, np.ones(len(dst))]) @ mi.T
    # w ~ 0 rows get infinite error instead of raising: RANSAC just rejects them
    with np.errstate(divide="ignore", invalid="ignore"):
        f = fwd[:, :2] / fwd[:, 2:3]
        b = bwd[:, :2] / bwd[:, 2:3]
    e = ((f - dst) ** 2).sum(axis=1) + ((b - src) ** 2).sum(axis=1)
    bad = (np.abs(fwd[:, 2]) < 1e-12) | (np.abs(bwd[:, 2]) < 1e-12) | ~np.isfinite(e)
    e[bad] = np.inf
    return e


def ransac_homography(src, dst, params: RansacParams = RansacParams(),
                      rng_seed: int = 0):
    """Classic RANSAC homography. Returns (Homography, inlier_mask).

    Minimal 4-point samples, symmetric transfer error below
    params.inlier_threshold defines inliers, adaptive iteration cutoff from
    params.confidence, final refit by DLT on the full inlier set.
    Deterministic for a fixed rng_seed.
    """
    s = _as_points(src, 2, "src")
    d = _as_points(dst, 2, "dst")
    if len(s) != len(d):
        raise InvalidInputError("src and dst must have equal length")
    n = len(s)
    if n < 4:
        raise EstimationFailedError("RANSAC needs >= 4 correspondences")

    rng = np.random.default_rng(rng_seed)
    thr_sq = params.inlier_threshold ** 2
    best_count = 0
    best_mask = None
    needed = params.max_iterations

    it = 0
    while it < min(params.max_iterations, needed):
        it += 1
        idx = rng.choice(n, size=4, replace=False)
        try:
            h = homography_dlt(s[idx], d[idx])
        except DegenerateGeometryError:
            continue
        mask = _symmetric_transfer_sq(h, s, d) < thr_sq
        count = int(mask.sum())
        if count > best_count:
            best_count = count
            best_mask = mask
            w = count / n
            if w >= 1.0:
                break
            p_outlier_free = w ** 4
            if p_outlier_free > 0:
                needed = math.ceil(math.log(1.0 - params.confidence)
                                   / math.log(1.0 - p_outlier_free))

    if best_mask is None or best_count < params.min_inliers:
        raise EstimationFailedError(
            f"best consensus has {best_count} inliers, need >= {params.min_inliers}")

    try:
        refit = homography_dlt(s[best_mask], d[best_mask])
    except DegenerateGeometryError as e:
        raise EstimationFailedError(f"inlier refit failed: {e}") from e
    final_mask = _symmetric_transfer_sq(refit, s, d) < thr_sq
    if int(final_mask.sum()) < params.min_inliers:
        raise EstimationFailedError("refit model lost its consensus")
    return refit, final_mask


# ---------------------------------------------------------------------------
# rotations


def rotation_from_axis_angle(omega) -> np.ndarray:
    """Rodrigues formula, Taylor-safe near zero."""
    w = np.asarray(omega, dtype=np.float64).reshape(3)
    theta = np.linalg.norm(w)
    K = np.array([[0.0, -w[2], w[1]],
                  [w[2], 0.0, -w[0]],
                  [-w[1], w[0], 0.0]])
    if theta < 1e-10:
        return np.eye(3) + K
    a = math.sin(theta) / theta
    b = (1.0 - math.cos(theta)) / (theta * theta)
    return np.eye(3) + a * K + b * (K @ K)


def axis_angle_from_rotation(r) -> np.ndarray:
    """Inverse Rodrigues; handles the theta ~ 0 and theta ~ pi branches."""
    R = np.asarray(r, dtype=np.float64)
    cos_t = max(-1.0, min(1.0, (np.trace(R) - 1.0) / 2.0))
    theta = math.acos(cos_t)
    v = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if theta < 1e-7:
        return 0.5 * v
    if math.pi - theta < 1e-5:
        # axis from the dominant column of (R + I)/2
        M = (R + np.eye(3)) / 2.0
        i = int(np.argmax(np.diag(M)))
        axis = M[:, i] / math.sqrt(max(M[i, i], 1e-300))
        axis /= np.linalg.norm(axis)
        # fix the sign using the skew part where it is informative
        if np.linalg.norm(v) > 1e-12 and np.dot(axis, v) < 0:
            axis = -axis
        return theta * axis
    return (theta / (2.0 * math.sin(theta))) * v


def _rotation_derivatives(omega: np.ndarray, R: np.ndarray) -> list[np.ndarray]:
    """dR/d(omega_i) for the exponential map at omega (Gallego-Yezzi form)."""
    theta_sq = float(omega @ omega)
    out = []
    if theta_sq < 1e-16:
        for i in range(3):
            e = np.zeros(3)
            e[i] = 1.0
            out.append(_skew(e))
        return out
    for i in range(3):
        e = np.zeros(3)
        e[i] = 1.0
        v = np.cross(omega, (np.eye(3) - R) @ e)
        out.append((omega[i] * _skew(omega) + _skew(v)) @ R / theta_sq)
    return out


def _skew(v: np.ndarray) -> np.ndarray:
    return np.array([[0.0, -v[2], v[1]],
                     [v[2], 0.0, -v[0]],
                     [-v[1], v[0], 0.0]])


def orthonormalize_rotation(m) -> np.ndarray:
    """Nearest rotation in Frobenius norm (SVD projection onto SO(3))."""
    U, _, Vt = np.linalg.svd(np.asarray(m, dtype=np.float64))
    D = np.diag([1.0, 1.0, float(np.sign(np.linalg.det(U @ Vt)))])
    return U @ D @ Vt


# ---------------------------------------------------------------------------
# projection and PnP


def project_points(r: np.ndarray, t: np.ndarray, k: CameraIntrinsics,
                   object_points: np.ndarray):
    """Pinhole projection. Returns ((N,2) pixels, (N,) depths)."""
    pc = object_points @ r.T + t
    z = pc[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = k.fx * pc[:, 0] / z + k.cx
        v = k.fy * pc[:, 1] / z + k.cy
    return np.column_stack([u, v]), z


def projection_jacobian(omega, t, object_points, k: CameraIntrinsics) -> np.ndarray:
    """(2N, 6) Jacobian of projected pixels wrt (omega, t); rows (du0, dv0, du1, ...)."""
    w = np.asarray(omega, dtype=np.float64).reshape(3)
    tv = np.asarray(t, dtype=np.float64).reshape(3)
    X = _as_points(object_points, 3, "object_points")
    R = rotation_from_axis_angle(w)
    dR = _rotation_derivatives(w, R)

    pc = X @ R.T + tv
    z = pc[:, 2]
    n = len(X)
    J = np.zeros((2 * n, 6))
    # dXc/d(omega_i) = dR_i @ X ; dXc/dt = I
    dxc = np.zeros((n, 3, 6))
    for i in range(3):
        dxc[:, :, i] = X @ dR[i].T
        dxc[:, i, 3 + i] = 1.0
    inv_z = 1.0 / z
    du = (k.fx * inv_z)[:, None] * dxc[:, 0, :] \
        - (k.fx * pc[:, 0] * inv_z * inv_z)[:, None] * dxc[:, 2, :]
    dv = (k.fy * inv_z)[:, None] * dxc[:, 1, :] \
        - (k.fy * pc[:, 1] * inv_z * inv_z)[:, None] * dxc[:, 2, :]
    J[0::2] = du
    J[1::2] = dv
    return J


def _pose_from_plane_homography(obj: np.ndarray, img: np.ndarray,
                                k: CameraIntrinsics):
    """Initialize (omega, t) by decomposing the plane-to-image homography.

    H = K [r1 r2 t] up to scale; columns of inv(K) H are normalized to mean
    unit length, r3 = r1 x r2, and the result is projected onto SO(3). The
    sign is chosen by the positive-depth (cheirality) test on all points.
    """
    if np.max(np.abs(obj[:, 2])) > 1e-9:
        raise InvalidInputError("plane initialization requires z = 0 object points")
    h = homography_dlt(obj[:, :2], img)
    M = np.linalg.inv(k.matrix()) @ h.h
    n1 = np.linalg.norm(M[:, 0])
    n2 = np.linalg.norm(M[:, 1])
    if n1 < 1e-12 or n2 < 1e-12:
        raise PoseFailedError("homography decomposition collapsed")
    lam = 2.0 / (n1 + n2)
    for sign in (1.0, -1.0):
        r1 = sign * lam * M[:, 0]
        r2 = sign * lam * M[:, 1]
        t = sign * lam * M[:, 2]
        R = orthonormalize_rotation(np.column_stack([r1, r2, np.cross(r1, r2)]))
        depths = obj @ R.T + t
        if np.all(depths[:, 2] > 0):
            return axis_angle_from_rotation(R), t
    raise PoseFailedError("no homography decomposition places all points in front")


def pnp_iterative(object_points, image_points, k: CameraIntrinsics,
                  initial: Pose | None = None,
                  params: PnpParams = PnpParams()) -> Pose:
    """Levenberg-Marquardt pose refinement over 6 parameters (axis-angle + t).

    Minimizes total squared reprojection error. Without an initial pose the
    estimate is seeded by homography decomposition (object points must then
    lie on z = 0). Convergence: change in mean reprojection error below
    params.convergence_epsilon, or the iteration cap. Five consecutive
    rejected (error-increasing) damped steps raise PoseFailedError.
    """
    obj = _as_points(object_points, 3, "object_points")
    img = _as_points(image_points, 2, "image_points")
    if len(obj) != len(img):
        raise InvalidInputError("object and image point lists must be parallel")
    if len(obj) < 4:
        raise InvalidInputError("PnP needs >= 4 correspondences")
    centered = obj - obj.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    if sv[1] < 1e-12 * max(sv[0], 1e-300):
        raise DegenerateGeometryError("object points are collinear")

    if initial is None:
        omega, t = _pose_from_plane_homography(obj, img, k)
    else:
        omega = axis_angle_from_rotation(initial.r)
        t = np.asarray(initial.t, dtype=np.float64).copy()

    def evaluate(w, tv):
        R = rotation_from_axis_angle(w)
        proj, z = project_points(R, tv, k, obj)
        if np.any(z <= 1e-12):
            return None, math.inf, math.inf
        res = (proj - img).reshape(-1)
        sse = float(res @ res)
        mean_err = float(np.sqrt(((proj - img) ** 2).sum(axis=1)).mean())
        return res, sse, mean_err

    res, sse, mean_err = evaluate(omega, t)
    if res is None:
        raise PoseFailedError("initial pose places points behind the camera")

    lam = params.damping_initial
    consecutive_rejects = 0
    done = False
    for _ in range(params.max_iterations):
        if done or mean_err < params.convergence_epsilon:
            break
        J = projection_jacobian(omega, t, obj, k)
        g = J.T @ res
        if np.max(np.abs(g)) < 1e-12:
            break  # stationary point
        A = J.T @ J
        D = np.diag(A).copy()
        D[D < 1e-12] = 1e-12
        accepted = False
        while not accepted:
            try:
                delta = np.linalg.solve(A + lam * np.diag(D), -g)
            except np.linalg.LinAlgError:
                delta = None
            if delta is not None:
                if np.max(np.abs(delta)) < 1e-14:
                    done = True  # damping shrank the step to nothing: converged
                    break
                w_new = omega + delta[:3]
                t_new = t + delta[3:]
                res_n, sse_n, mean_n = evaluate(w_new, t_new)
            else:
                res_n, sse_n, mean_n = None, math.inf, math.inf
            if res_n is not None and sse_n <= sse:
                improvement = mean_err - mean_n
                omega, t, res, sse, mean_err = w_new, t_new, res_n, sse_n, mean_n
                lam = max(lam / 10.0, 1e-12)
                consecutive_rejects = 0
                accepted = True
                if abs(improvement) < params.convergence_epsilon:
                    done = True
            elif res_n is not None and sse_n - sse <= 1e-9 * max(sse, 1e-12):
                done = True  # numerically stuck at the optimum, not diverging
                break
            else:
                lam *= 10.0
                consecutive_rejects += 1
                if consecutive_rejects >= 5:
                    raise PoseFailedError("LM diverged: 5 consecutive rejected steps")

    R = orthonormalize_rotation(rotation_from_axis_angle(omega))
    return Pose(r=R, t=t)


def reprojection_error(pose: Pose, k: CameraIntrinsics, object_points, image_points):
    """Per-point pixel reprojection distances and their mean."""
    obj = _as_points(object_points, 3, "object_points")
    img = _as_points(image_points, 2, "image_points")
    if len(obj) != len(img):
        raise InvalidInputError("object and image point lists must be parallel")
    proj, z = project_points(pose.r, pose.t, k, obj)
    if np.any(z <= 0):
        raise BehindCameraError("object point behind the camera")
    per_point = np.sqrt(((proj - img) ** 2).sum(axis=1))
    return per_point, float(per_point.mean())


def pose_from_homography(h: Homography, corners_2d, corners_3d,
                         k: CameraIntrinsics,
                         params: PnpParams = PnpParams()) -> Pose:
    """The corner-transfer pose path: push the 4 template corners through H,
    then run iterative PnP on the 4 resulting 2D-3D correspondences."""
    image_corners = transform_points(h, corners_2d)
    return pnp_iterative(corners_3d, image_corners, k, initial=None, params=params)
