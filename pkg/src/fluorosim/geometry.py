"""Vector algebra, the pinhole C-arm model and the two sampling distributions.

Conventions: millimetres for lengths, radians for angles, pixels as continuous
(u, v) coordinates with the principal point at the image centre.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels

UNIT_TOL = 1e-9


class ProjectionError(ValueError):
    """Raised when a point sits on or behind the source plane."""


def as_vec(v) -> np.ndarray:
    return np.asarray(v, dtype=np.float64).reshape(3)


def unit(v) -> np.ndarray:
    v = as_vec(v)
    n = np.linalg.norm(v)
    if n == 0.0 or not np.isfinite(n):
        raise ValueError(f"cannot normalise vector {v!r}")
    return v / n


def angle_between(u, v) -> float:
    """Angle in radians between two (not necessarily unit) vectors."""
    u, v = as_vec(u), as_vec(v)
    return math.atan2(float(np.linalg.norm(np.cross(u, v))), float(u @ v))


def clamp(value: float, lo: float, hi: float) -> float:
    if lo > hi:
        raise ValueError(f"empty clamp interval [{lo}, {hi}]")
    return min(max(value, lo), hi)


def _check_unit(axis: np.ndarray, name: str = "axis") -> None:
    if abs(float(np.linalg.norm(axis)) - 1.0) > UNIT_TOL:
        raise ValueError(f"{name} must be unit-norm, got |{name}| = {np.linalg.norm(axis)!r}")


def rotate_about_axis(v, axis, angle: float) -> np.ndarray:
    """Rotate ``v`` about the unit ``axis`` by ``angle`` (right-hand rule)."""
    axis = as_vec(axis)
    _check_unit(axis)
    out = kernels.rotate_vectors(as_vec(v)[None, :], axis, np.array([float(angle)]))
    return out[0]


def rotation_matrix(axis, angle: float) -> np.ndarray:
    axis = as_vec(axis)
    _check_unit(axis)
    return kernels.rotate_vectors(np.eye(3), axis, np.full(3, float(angle))).T


def sample_in_sphere(rng: np.random.Generator, center, radius: float) -> np.ndarray:
    """Uniform point in the closed ball, by rejection from the bounding cube."""
    if radius < 0:
        raise ValueError(f"radius must be non-negative, got {radius}")
    center = as_vec(center)
    if radius == 0:
        return center.copy()
    while True:
        u = rng.uniform(-1.0, 1.0, 3)
        if u @ u <= 1.0:
            return center + radius * u


def sample_in_sphere_batch(rng: np.random.Generator, center, radius: float, n: int) -> np.ndarray:
    """``n`` uniform points in a ball; vectorised rejection."""
    if radius < 0:
        raise ValueError(f"radius must be non-negative, got {radius}")
    center = as_vec(center)
    out = np.empty((0, 3))
    while out.shape[0] < n:
        need = n - out.shape[0]
        u = rng.uniform(-1.0, 1.0, (int(need * 1.95) + 8, 3))
        u = u[np.einsum("ij,ij->i", u, u) <= 1.0]
        out = np.vstack([out, u[:need]])
    return center + radius * out


def sample_solid_angle(rng: np.random.Generator, direction, colatitude: float) -> np.ndarray:
    """Uniform direction on the spherical cap of half-angle ``colatitude`` about ``direction``."""
    if not 0.0 <= colatitude <= math.pi:
        raise ValueError(f"colatitude must lie in [0, pi], got {colatitude}")
    d = as_vec(direction)
    _check_unit(d, "direction")
    if colatitude == 0.0:
        return d.copy()
    u = rng.random(2)
    out = kernels.cap_directions(d, math.cos(colatitude), u[:1], u[1:])[0]
    return out / np.linalg.norm(out)


def sample_solid_angle_batch(rng: np.random.Generator, direction, colatitude: float, n: int) -> np.ndarray:
    if not 0.0 <= colatitude <= math.pi:
        raise ValueError(f"colatitude must lie in [0, pi], got {colatitude}")
    d = as_vec(direction)
    _check_unit(d, "direction")
    u = rng.random((2, n))
    out = kernels.cap_directions(d, math.cos(colatitude), u[0], u[1])
    return out / np.linalg.norm(out, axis=1, keepdims=True)


@dataclass(frozen=True)
class CameraModel:
    """Intrinsics of the virtual C-arm; square pixels of pitch ``w_s / W``."""

    sensor_width_mm: float
    source_detector_mm: float
    image_height_px: int = 384
    image_width_px: int = 384

    def __post_init__(self):
        if self.sensor_width_mm <= 0 or self.source_detector_mm <= 0:
            raise ValueError("sensor width and source-detector distance must be positive")
        if self.image_height_px <= 0 or self.image_width_px <= 0:
            raise ValueError("image size must be positive")

    @property
    def pixel_pitch_mm(self) -> float:
        return self.sensor_width_mm / self.image_width_px

    @property
    def focal_px(self) -> float:
        return self.source_detector_mm / self.pixel_pitch_mm

    @property
    def principal_point_px(self) -> tuple[float, float]:
        return (self.image_width_px / 2.0, self.image_height_px / 2.0)

    @property
    def intrinsics(self) -> np.ndarray:
        f = self.focal_px
        cx, cy = self.principal_point_px
        return np.array([[f, 0.0, cx], [0.0, f, cy], [0.0, 0.0, 1.0]])


def camera_basis(ray) -> np.ndarray:
    """Rows: image-u axis, image-v axis (caudal-down), principal ray."""
    z = unit(ray)
    up = np.array([0.0, 0.0, 1.0])
    if abs(z @ up) > 0.99:
        up = np.array([0.0, 1.0, 0.0])
    y = -(up - (up @ z) * z)
    y /= np.linalg.norm(y)
    x = np.cross(y, z)
    return np.vstack([x, y, z])


@dataclass(frozen=True)
class Projection:
    matrix: np.ndarray = field(repr=False)
    source: np.ndarray
    ray: np.ndarray
    viewpoint: np.ndarray
    d_sp: float
    camera: CameraModel

    def project(self, point) -> np.ndarray:
        return project(self, point)

    def project_many(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Pixels and homogeneous depth for an (N, 3) array; no depth check."""
        pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 3))
        return kernels.project_points(self.matrix, pts)

    def depth(self, point) -> float:
        return float(self.ray @ (as_vec(point) - self.source))


def make_projection(viewpoint, ray, camera: CameraModel, d_sp: float) -> Projection:
    """Projection with the source at ``viewpoint - d_sp * ray``."""
    if d_sp <= 0:
        raise ValueError(f"source-to-viewpoint distance must be positive, got {d_sp}")
    viewpoint = as_vec(viewpoint)
    r = unit(ray)
    source = viewpoint - d_sp * r
    R = camera_basis(r)
    Rt = np.hstack([R, (-R @ source)[:, None]])
    P = np.ascontiguousarray(camera.intrinsics @ Rt)
    return Projection(matrix=P, source=source, ray=r, viewpoint=viewpoint, d_sp=float(d_sp), camera=camera)


def project(P: Projection, point, min_depth: float = 1e-9) -> np.ndarray:
    """Pixel (u, v) of ``point``; raises :class:`ProjectionError` at or behind the source."""
    uv, w = P.project_many(as_vec(point)[None, :])
    if not w[0] > min_depth:
        raise ProjectionError(f"point {as_vec(point)!r} has non-positive depth {w[0]:.3g} (behind source)")
    return uv[0]
