"""Projective geometry: lifting 2D box detections into world-frame 3D Gaussians.

Coordinate conventions used throughout the package:

- Pixel coordinates are continuous, with the origin at the center of the
  top-left pixel; u grows to the right, v grows downward.
- The camera frame is right-handed with x right, y down, z forward along the
  optical axis. Depths are distances along +z, in meters.
- A pose maps camera-frame points into the world frame: X_w = R @ X_c + t.
  Rotation matrices are therefore camera-to-world.
- All covariances are symmetric positive semi-definite, float64.

The lift turns one detection into a 3D Gaussian in four steps: the box becomes
a 2D Gaussian whose per-axis variance is that of a uniform distribution over
the box; the box center is back-projected to the centroid depth; the 2D
covariance is pulled through the pseudo-inverse of the projection Jacobian;
and a synthetic depth variance (average of the two lateral variances) fills
the rank-deficient viewing direction before rotating into the world frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    InvalidDepthError,
    InvalidDetectionError,
    SingularJacobianError,
)

# Minimum usable depth in meters; guards the 1/z^2 terms of the Jacobian.
Z_MIN = 1e-4
# Condition-number ceiling for J @ J.T before the pseudo-inverse is refused.
COND_MAX = 1e12
# Eigenvalues of a covariance may dip this far below zero before the matrix
# is rejected; anything in [-PSD_EIG_TOL, 0) is clamped to exactly 0.
PSD_EIG_TOL = 1e-12

_IDENTITY3 = np.eye(3)


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics. Focal lengths and principal point in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def validate(self) -> None:
        vals = (self.fx, self.fy, self.cx, self.cy, self.width, self.height)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite intrinsics: {self}")
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"image size must be positive, got {self.width}x{self.height}")


@dataclass(frozen=True)
class CameraPose:
    """Camera-to-world pose: X_w = rotation @ X_c + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64).reshape(3, 3))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=np.float64).reshape(3))

    def validate(self, tol: float = 1e-9) -> None:
        R = self.rotation
        if not np.all(np.isfinite(R)) or not np.all(np.isfinite(self.translation)):
            raise ValueError("non-finite pose")
        err = np.abs(R.T @ R - _IDENTITY3).max()
        if err > tol:
            raise ValueError(f"rotation is not orthonormal (max |R'R - I| = {err:.3e})")
        det = np.linalg.det(R)
        if abs(det - 1.0) > tol:
            raise ValueError(f"rotation must be proper (det {det:.12f} != +1)")


@dataclass(frozen=True)
class BoundingBox2D:
    """Axis-aligned detection box: continuous center, extents, score, class."""

    center: np.ndarray
    width: float
    height: float
    score: float
    class_id: int

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64).reshape(2))


@dataclass(frozen=True)
class Gaussian2D:
    mean: np.ndarray
    cov: np.ndarray


@dataclass(frozen=True)
class Gaussian3D:
    """World-frame object blob: mean in meters, 3x3 covariance in meters^2."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=np.float64).reshape(3))
        object.__setattr__(self, "cov", np.asarray(self.cov, dtype=np.float64).reshape(3, 3))


@dataclass(frozen=True)
class ProjectionJacobian:
    """2x3 linearization of perspective projection at a camera-frame point."""

    matrix: np.ndarray
    z: float


def symmetrize(a: np.ndarray) -> np.ndarray:
    """(A + A.T)/2 — suppresses floating-point asymmetry before det/solve use."""
    return (a + a.T) * 0.5


def ensure_psd(cov: np.ndarray, tol: float = PSD_EIG_TOL) -> np.ndarray:
    """Validate a covariance and clamp tiny negative eigenvalues to zero.

    Symmetrizes, then eigendecomposes. Eigenvalues below -tol mean the matrix
    is genuinely not PSD and a ValueError is raised; eigenvalues in [-tol, 0)
    are treated as numerical noise and clamped to exactly 0.
    """
    sym = symmetrize(np.asarray(cov, dtype=np.float64))
    w, v = np.linalg.eigh(sym)
    if w[0] < -tol:
        raise ValueError(f"covariance is not PSD (min eigenvalue {w[0]:.3e})")
    if w[0] < 0.0:
        w = np.maximum(w, 0.0)
        sym = (v * w) @ v.T
        sym = symmetrize(sym)
    return sym


def bbox_to_gaussian2d(bbox: BoundingBox2D) -> Gaussian2D:
    """Model a box as the moments of a uniform density over its area.

    A uniform distribution over width W has variance W^2/12, so the box maps
    to mean = center, cov = diag(W^2/12, H^2/12).
    """
    if not (bbox.width > 0 and bbox.height > 0) or not (
        math.isfinite(bbox.width) and math.isfinite(bbox.height)
    ):
        raise InvalidDetectionError(
            f"box extents must be positive finite, got {bbox.width}x{bbox.height}"
        )
    cov = np.array(
        [[bbox.width * bbox.width / 12.0, 0.0], [0.0, bbox.height * bbox.height / 12.0]]
    )
    return Gaussian2D(mean=bbox.center.copy(), cov=cov)


def backproject_mean(
    p: np.ndarray, z: float, cam: CameraIntrinsics, pose: CameraPose
) -> np.ndarray:
    """Back-project pixel p at depth z into the world frame.

    Returns R @ (K^-1 @ (px, py, 1)) * z + t.
    """
    if not (z > 0.0) or not math.isfinite(z):
        raise InvalidDepthError(f"depth must be positive finite, got {z}")
    px, py = float(p[0]), float(p[1])
    cam_pt = np.array(
        [(px - cam.cx) / cam.fx * z, (py - cam.cy) / cam.fy * z, z]
    )
    return pose.rotation @ cam_pt + pose.translation


def projection_jacobian(cam_point: np.ndarray, cam: CameraIntrinsics) -> ProjectionJacobian:
    """Linearize perspective projection at a camera-frame point (x, y, z).

    J = [[fx/z, 0, -fx*x/z^2],
         [0, fy/z, -fy*y/z^2]]
    """
    x, y, z = float(cam_point[0]), float(cam_point[1]), float(cam_point[2])
    if not (z >= Z_MIN) or not math.isfinite(z):
        raise InvalidDepthError(f"evaluation depth {z} below minimum {Z_MIN}")
    inv_z = 1.0 / z
    inv_z2 = inv_z * inv_z
    J = np.array(
        [
            [cam.fx * inv_z, 0.0, -cam.fx * x * inv_z2],
            [0.0, cam.fy * inv_z, -cam.fy * y * inv_z2],
        ]
    )
    return ProjectionJacobian(matrix=J, z=z)


def jacobian_pseudoinverse(J: ProjectionJacobian) -> np.ndarray:
    """Right pseudo-inverse J+ = J.T @ (J @ J.T)^-1, closed form.

    The 2x2 Gram matrix is inverted by adjugate; its condition number is
    checked first so a rank-deficient J fails loudly instead of amplifying
    noise. Satisfies J @ J+ = I_2 for well-conditioned inputs.
    """
    m = J.matrix
    # Gram matrix entries: [[a, b], [b, c]]
    a = m[0, 0] * m[0, 0] + m[0, 1] * m[0, 1] + m[0, 2] * m[0, 2]
    b = m[0, 0] * m[1, 0] + m[0, 1] * m[1, 1] + m[0, 2] * m[1, 2]
    c = m[1, 0] * m[1, 0] + m[1, 1] * m[1, 1] + m[1, 2] * m[1, 2]
    tr = a + c
    disc = math.sqrt(max((a - c) * (a - c) + 4.0 * b * b, 0.0))
    lo = 0.5 * (tr - disc)
    hi = 0.5 * (tr + disc)
    if lo <= 0.0 or hi / lo > COND_MAX:
        raise SingularJacobianError(
            f"Gram matrix condition {math.inf if lo <= 0 else hi / lo:.3e} exceeds {COND_MAX:.0e}"
        )
    det = a * c - b * b
    inv = np.array([[c, -b], [-b, a]]) / det
    return m.T @ inv


def backproject_covariance(
    cov2d: np.ndarray, J: ProjectionJacobian, pose: CameraPose
) -> np.ndarray:
    """Pull a 2D pixel covariance back into a world-frame 3D covariance.

    Sigma'' = J+ @ cov2d @ J+.T is rank deficient along the viewing ray, so
    the (3,3) entry gets the average of the (1,1) and (2,2) entries before
    the camera-frame result is rotated into the world: R @ Sigma' @ R.T.
    The output is explicitly symmetrized.
    """
    jp = jacobian_pseudoinverse(J)
    s = jp @ np.asarray(cov2d, dtype=np.float64) @ jp.T
    s[2, 2] += 0.5 * (s[0, 0] + s[1, 1])
    R = pose.rotation
    out = R @ s @ R.T
    return symmetrize(out)


def lift_detection(
    bbox: BoundingBox2D,
    z: float,
    cam: CameraIntrinsics,
    pose: CameraPose,
    jacobian_mode: str = "camera-frame",
) -> Gaussian3D:
    """Lift one detection plus centroid depth into a world-frame Gaussian3D.

    jacobian_mode selects where the projection Jacobian is evaluated:
    "camera-frame" (default) uses the back-projected 3D point z*K^-1(p,1);
    "pixel" substitutes the raw pixel coordinates (px, py, z) directly.
    """
    if not math.isfinite(z) or z < Z_MIN:
        raise InvalidDepthError(f"centroid depth {z} below minimum {Z_MIN}")
    g2 = bbox_to_gaussian2d(bbox)
    px, py = float(bbox.center[0]), float(bbox.center[1])
    x_cam = (px - cam.cx) / cam.fx * z
    y_cam = (py - cam.cy) / cam.fy * z
    cam_pt = np.array([x_cam, y_cam, z])
    if jacobian_mode == "camera-frame":
        J = projection_jacobian(cam_pt, cam)
    elif jacobian_mode == "pixel":
        J = projection_jacobian(np.array([px, py, z]), cam)
    else:
        raise ValueError(f"unknown jacobian_mode {jacobian_mode!r}")
    cov = backproject_covariance(g2.cov, J, pose)
    mean = pose.rotation @ cam_pt + pose.translation
    return Gaussian3D(mean=mean, cov=cov)
