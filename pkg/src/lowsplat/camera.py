"""Pinhole camera model: intrinsics, pose, rays, projection, back-projection.

Conventions (fixed once, used everywhere):
  - right-handed camera frame, +z forward, +x right, +y down;
  - pose stores the camera-to-world rotation and the camera center;
  - integer pixel index i samples at continuous coordinate i + 0.5;
  - depth is Euclidean distance along the unit ray, not z; ``project``
    reports the camera-frame z separately for sorting and culling.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGeometryError, InvalidConfigError

NEAR_PLANE = 1e-4
ORTHONORMAL_TOL = 1e-9


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidConfigError(f"focal lengths must be positive, got {self.fx}, {self.fy}")


@dataclass(frozen=True)
class Pose:
    """Camera-to-world rotation and camera center in world units."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64)
        if r.shape != (3, 3) or t.shape != (3,):
            raise InvalidConfigError(f"pose shapes must be (3,3) and (3,), got {r.shape}, {t.shape}")
        if np.max(np.abs(r.T @ r - np.eye(3))) > ORTHONORMAL_TOL:
            raise InvalidConfigError("rotation is not orthonormal within 1e-9")
        if abs(np.linalg.det(r) - 1.0) > ORTHONORMAL_TOL:
            raise InvalidConfigError("rotation determinant must be +1 within 1e-9")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)


@dataclass(frozen=True)
class CameraView:
    intrinsics: Intrinsics
    pose: Pose
    width: int
    height: int
    near: float = field(default=NEAR_PLANE)

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise InvalidConfigError(f"image size must be >= 1, got {self.width}x{self.height}")

    @property
    def center(self) -> np.ndarray:
        return self.pose.translation

    def ray_for_pixel(self, u) -> tuple[np.ndarray, np.ndarray]:
        """World-space ray (origin, unit direction) through pixel coordinate u.

        ``u`` is a continuous (x, y) coordinate; pass i + 0.5 for the center
        of integer pixel i.
        """
        k = self.intrinsics
        d_cam = np.array(
            [(u[0] - k.cx) / k.fx, (u[1] - k.cy) / k.fy, 1.0], dtype=np.float64
        )
        d_world = self.pose.rotation @ d_cam
        d_world = d_world / np.linalg.norm(d_world)
        return self.center.copy(), d_world

    def rays_grid(self) -> np.ndarray:
        """Unit ray directions for every pixel center, shape (H, W, 3)."""
        k = self.intrinsics
        xs = (np.arange(self.width, dtype=np.float64) + 0.5 - k.cx) / k.fx
        ys = (np.arange(self.height, dtype=np.float64) + 0.5 - k.cy) / k.fy
        d = np.empty((self.height, self.width, 3), dtype=np.float64)
        d[:, :, 0] = xs[None, :]
        d[:, :, 1] = ys[:, None]
        d[:, :, 2] = 1.0
        d = d @ self.pose.rotation.T
        return d / np.linalg.norm(d, axis=2, keepdims=True)

    def back_project(self, u, depth: float) -> np.ndarray:
        """World point at Euclidean distance ``depth`` along the ray through u."""
        if not depth > 0:
            raise DegenerateGeometryError(f"depth must be > 0, got {depth}")
        origin, direction = self.ray_for_pixel(u)
        return origin + depth * direction

    def project(self, p) -> tuple[np.ndarray, float, bool]:
        """Project world point p to (pixel coordinates, camera z, visible flag).

        Points with camera z at or behind the near plane are flagged not
        visible; their pixel coordinates are not meaningful.
        """
        q = self.pose.rotation.T @ (np.asarray(p, dtype=np.float64) - self.center)
        z = float(q[2])
        if z <= self.near:
            return np.array([np.nan, np.nan]), z, False
        k = self.intrinsics
        u = np.array([k.fx * q[0] / z + k.cx, k.fy * q[1] / z + k.cy])
        return u, z, True

    def project_points(self, pts: np.ndarray):
        """Vectorized ``project`` for an (N, 3) array.

        Returns (uv (N, 2), z (N,), visible (N,) bool); uv rows for invisible
        points are computed against a clamped z and should be ignored.
        """
        pts = np.asarray(pts, dtype=np.float64)
        q = (pts - self.center) @ self.pose.rotation
        z = q[:, 2]
        visible = z > self.near
        zs = np.where(visible, z, 1.0)
        k = self.intrinsics
        uv = np.stack([k.fx * q[:, 0] / zs + k.cx, k.fy * q[:, 1] / zs + k.cy], axis=1)
        return uv, z, visible

    def to_dict(self) -> dict:
        k = self.intrinsics
        return {
            "fx": k.fx,
            "fy": k.fy,
            "cx": k.cx,
            "cy": k.cy,
            "rotation": [float(v) for v in self.pose.rotation.reshape(-1)],
            "translation": [float(v) for v in self.pose.translation],
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraView":
        return cls(
            intrinsics=Intrinsics(fx=float(d["fx"]), fy=float(d["fy"]),
                                  cx=float(d["cx"]), cy=float(d["cy"])),
            pose=Pose(
                rotation=np.array(d["rotation"], dtype=np.float64).reshape(3, 3),
                translation=np.array(d["translation"], dtype=np.float64),
            ),
            width=int(d["width"]),
            height=int(d["height"]),
        )


def look_at(eye, target, width: int, height: int, focal: float,
            world_up=(0.0, 1.0, 0.0)) -> CameraView:
    """Camera at ``eye`` looking toward ``target`` with principal point centered.

    Builds the y-down camera frame: x = normalize(z x up), y = z x x.
    """
    eye = np.asarray(eye, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    fwd = target - eye
    n = np.linalg.norm(fwd)
    if n < 1e-12:
        raise DegenerateGeometryError("look_at eye and target coincide")
    z = fwd / n
    up = np.asarray(world_up, dtype=np.float64)
    x = np.cross(z, up)
    nx = np.linalg.norm(x)
    if nx < 1e-9:
        up = np.array([0.0, 0.0, 1.0]) if abs(z[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
        x = np.cross(z, up)
        nx = np.linalg.norm(x)
    x = x / nx
    y = np.cross(z, x)
    rot = np.stack([x, y, z], axis=1)
    return CameraView(
        intrinsics=Intrinsics(fx=focal, fy=focal, cx=width / 2.0, cy=height / 2.0),
        pose=Pose(rotation=rot, translation=eye),
        width=width,
        height=height,
    )
