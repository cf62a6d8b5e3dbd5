"""Per-point local geometry augmentation.

Each point gets a 17-channel record: three zenith/azimuth angle pairs from
reading the point in spherical coordinates against each axis, the edge
vectors to its two nearest other points, their lengths, and the cross
product of the two edges (an unnormalized local normal whose magnitude
carries local-area information).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput
from .geometry import squared_distances

#: width of one flattened record: 6 angles + nv + e1 + e2 + l1 + l2
RECORD_WIDTH = 17


@dataclass(frozen=True, eq=False)
class LocalGeometryRecord:
    theta_x: float
    phi_x: float
    theta_y: float
    phi_y: float
    theta_z: float
    phi_z: float
    nv: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    l1: float
    l2: float

    def flatten(self) -> np.ndarray:
        return np.concatenate([
            [self.theta_x, self.phi_x, self.theta_y, self.phi_y, self.theta_z, self.phi_z],
            self.nv,
            self.e1,
            self.e2,
            [self.l1, self.l2],
        ])


def _spherical_angles(points: np.ndarray) -> np.ndarray:
    """Angle triplets for every row; (N, 6) in the order
    theta_x, phi_x, theta_y, phi_y, theta_z, phi_z."""
    pts = np.asarray(points, dtype=np.float64)
    r = np.linalg.norm(pts, axis=1)
    safe_r = np.where(r == 0.0, 1.0, r)
    ratio = np.clip(pts / safe_r[:, None], -1.0, 1.0)
    theta = np.arccos(ratio)  # zenith against each axis
    phi = np.stack(
        [
            np.arctan2(pts[:, 2], pts[:, 1]),  # zenith axis x
            np.arctan2(pts[:, 0], pts[:, 2]),  # zenith axis y
            np.arctan2(pts[:, 1], pts[:, 0]),  # zenith axis z
        ],
        axis=1,
    )
    # keep azimuths in (-pi, pi]: atan2(-0, negative) returns -pi
    phi = np.where(phi == -np.pi, np.pi, phi)
    out = np.empty((pts.shape[0], 6))
    out[:, 0::2] = theta
    out[:, 1::2] = phi
    out[r == 0.0] = 0.0
    return out


def spherical_triplet(p) -> tuple[float, float, float, float, float, float]:
    """Spherical-coordinate angles of one point against each axis.

    For r = |p|: theta_A = arccos(p_A / r) per zenith axis A in {x, y, z};
    phi_x = atan2(p_z, p_y), phi_y = atan2(p_x, p_z), phi_z = atan2(p_y, p_x).
    The origin maps to six zeros, and atan2(0, 0) is defined as 0.
    """
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (3,):
        raise InvalidInput(f"expected a 3-vector, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise InvalidInput("point contains non-finite coordinates")
    return tuple(_spherical_angles(p[None, :])[0])


def edge_features(points: np.ndarray):
    """Edge vectors to the two nearest other points, per point.

    Self is excluded by index, not by distance, so duplicate points are legal
    neighbors.  Ties break toward the lower index.  Neighbors are ordered so
    l1 <= l2.

    Returns:
        (e1, e2, l1, l2, nv) with shapes (N, 3) x3 and (N,) x2,
        where nv = e1 x e2.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise InvalidInput(f"points must be N x 3, got {pts.shape}")
    n = pts.shape[0]
    if n < 3:
        raise InvalidInput(f"need at least 3 points, got {n}")
    d2 = squared_distances(pts, pts)
    np.fill_diagonal(d2, np.inf)
    order = np.argsort(d2, axis=1, kind="stable")
    j1 = order[:, 0]
    j2 = order[:, 1]
    e1 = pts[j1] - pts
    e2 = pts[j2] - pts
    l1 = np.linalg.norm(e1, axis=1)
    l2 = np.linalg.norm(e2, axis=1)
    nv = np.cross(e1, e2)
    return e1, e2, l1, l2, nv


def local_geometry_features(points: np.ndarray) -> np.ndarray:
    """Full 17-channel augmentation for every point.

    Row layout: theta_x, phi_x, theta_y, phi_y, theta_z, phi_z,
    nv (3), e1 (3), e2 (3), l1, l2.
    """
    pts = np.asarray(points, dtype=np.float64)
    angles = _spherical_angles(pts)
    e1, e2, l1, l2, nv = edge_features(pts)
    return np.concatenate([angles, nv, e1, e2, l1[:, None], l2[:, None]], axis=1)
