"""Pinhole camera with look-at parameterization and pixel-space projection."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Camera:
    position: np.ndarray
    target: np.ndarray
    up: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0, 0.0]))
    fov_deg: float = 47.5      # vertical field of view
    width: int = 256
    height: int = 256
    near: float = 0.05
    far: float = 100.0

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64)
        self.target = np.asarray(self.target, dtype=np.float64)
        self.up = np.asarray(self.up, dtype=np.float64)
        if not 0.0 < self.fov_deg < 180.0:
            raise ValueError(f"fov must be in (0, 180), got {self.fov_deg}")
        if not self.near < self.far:
            raise ValueError("near must be < far")
        if np.linalg.norm(self.target - self.position) < 1e-12:
            raise ValueError("camera position coincides with target")

    def basis(self):
        """Orthonormal (right, up, forward); forward points at the target."""
        fwd = self.target - self.position
        fwd = fwd / np.linalg.norm(fwd)
        right = np.cross(fwd, self.up)
        nr = np.linalg.norm(right)
        if nr < 1e-9:
            raise ValueError("camera up is parallel to the view direction")
        right = right / nr
        true_up = np.cross(right, fwd)
        return right, true_up, fwd

    def project(self, points: np.ndarray):
        """World points (N,3) -> (pixel xy (N,2), view depth (N,)).

        Depth is distance along the forward axis; positive in front of the
        camera. Pixel coordinates put (0,0) at the top-left corner, pixel
        centers at integer + 0.5.
        """
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        right, up, fwd = self.basis()
        rel = points - self.position
        x = rel @ right
        y = rel @ up
        depth = rel @ fwd
        focal = 1.0 / np.tan(np.deg2rad(self.fov_deg) / 2.0)
        aspect = self.width / self.height
        safe = np.where(depth == 0.0, 1.0, depth)
        x_ndc = (focal / aspect) * x / safe
        y_ndc = focal * y / safe
        px = (x_ndc * 0.5 + 0.5) * self.width
        py = (0.5 - y_ndc * 0.5) * self.height
        return np.stack([px, py], axis=-1), depth


def orbit_camera(center, azimuth_deg: float, elevation_deg: float, distance: float,
                 fov_deg: float = 47.5, width: int = 256, height: int = 256,
                 target=None) -> Camera:
    """Camera on an orbit around `center`; azimuth 0 looks from +Z."""
    center = np.asarray(center, dtype=np.float64)
    az = np.deg2rad(azimuth_deg)
    el = np.deg2rad(elevation_deg)
    offset = distance * np.array([np.cos(el) * np.sin(az), np.sin(el), np.cos(el) * np.cos(az)])
    return Camera(position=center + offset,
                  target=center if target is None else np.asarray(target, dtype=np.float64),
                  fov_deg=fov_deg, width=width, height=height)
