"""The full geometric branch: encode a point cloud into one feature vector.

The encoder is training-free.  A cloud is normalized to the unit sphere, put
in a canonical point order, position-encoded, downsampled, augmented with
17 channels of local geometry, run through one local-aggregation stage per
configured (point_count, neighbor_k) pair, and finally pooled by
concatenated elementwise max and mean.  Every step is deterministic, so the
feature of a given cloud is bit-stable across runs and invariant to input
point order (exactly so when the cloud has no equidistant ties).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import FeatureVector, PipelineConfig, PointCloud, l2_normalize, normalize_unit_sphere
from .errors import ConfigError, InvalidInput
from .geometry import farthest_point_sample, knn, pos_encode
from .local_geometry import RECORD_WIDTH, local_geometry_features

#: floor applied to per-group standard deviations before standardizing
STD_FLOOR = 1e-5


@dataclass(frozen=True, eq=False)
class StageState:
    """Coordinates and per-point features flowing between stages."""

    coords: np.ndarray
    feats: np.ndarray

    def __post_init__(self):
        if self.coords.shape[0] != self.feats.shape[0]:
            raise InvalidInput("coords and feats must agree on point count")


def _pose_weight(points: np.ndarray, target_dim: int, pose_alpha: float, pose_beta: float) -> np.ndarray:
    """Position-encoding channels fitted to an arbitrary width.

    The encoding is computed at the smallest multiple of 6 that covers
    target_dim, then truncated.
    """
    full_dim = 6 * ((target_dim + 5) // 6)
    return pos_encode(points, full_dim, pose_alpha, pose_beta)[:, :target_dim]


def local_aggregation(
    state: StageState,
    point_count: int,
    neighbor_k: int,
    pose_alpha: float,
    pose_beta: float,
    seed: int,
) -> StageState:
    """One aggregation stage; doubles the feature width.

    Farthest point sampling picks the stage's centers, each center gathers
    its neighbor_k nearest points from the full incoming set, relative
    coordinates are standardized per group and per axis, neighbor features
    are expanded to concat[center, neighbor - center], weighted elementwise
    by a position encoding of the standardized relative coordinates, and
    reduced by elementwise max plus elementwise mean.
    """
    m = state.coords.shape[0]
    if neighbor_k > m:
        raise ConfigError(f"neighbor_k {neighbor_k} exceeds point count {m}")
    if not 1 <= point_count <= m:
        raise ConfigError(f"stage point count {point_count} out of range for {m} points")
    centers_idx = farthest_point_sample(state.coords, point_count, seed)
    centers = state.coords[centers_idx]
    center_feats = state.feats[centers_idx]

    nn = knn(centers, state.coords, neighbor_k)
    group_xyz = state.coords[nn.indices]              # (S, k, 3)
    rel = group_xyz - centers[:, None, :]
    mu = rel.mean(axis=1, keepdims=True)
    sd = np.maximum(rel.std(axis=1, keepdims=True), STD_FLOOR)
    rel_std = (rel - mu) / sd

    neigh_feats = state.feats[nn.indices]             # (S, k, D)
    expanded = np.concatenate(
        [
            np.broadcast_to(center_feats[:, None, :], neigh_feats.shape),
            neigh_feats - center_feats[:, None, :],
        ],
        axis=2,
    )                                                  # (S, k, 2D)
    width = expanded.shape[2]
    weights = _pose_weight(
        rel_std.reshape(-1, 3), width, pose_alpha, pose_beta
    ).reshape(point_count, neighbor_k, width)
    weighted = expanded * weights
    new_feats = weighted.max(axis=1) + weighted.mean(axis=1)
    return StageState(coords=centers, feats=new_feats)


def geometric_width(config: PipelineConfig) -> int:
    """Output dimension of encode_geometric for a given configuration."""
    base = config.pose_dim + (RECORD_WIDTH if config.use_local_geometry else 0)
    return 2 * base * (2 ** len(config.stages))


def encode_geometric(cloud: PointCloud, config: PipelineConfig) -> FeatureVector:
    """Encode one cloud into a unit-norm geometric feature vector.

    Points are canonically ordered (lexicographic after unit-sphere
    normalization) before any index-seeded step, which is what makes the
    encoding independent of the input point order.
    """
    first_count = config.stages[0][0]
    if len(cloud) < first_count:
        raise InvalidInput(
            f"cloud has {len(cloud)} points but the first stage needs {first_count}"
        )
    # canonical order first: the centroid sum below must not see input order
    # (translation and positive scaling preserve lexicographic order, so the
    # cloud stays sorted after normalization)
    raw = cloud.points
    order = np.lexsort((raw[:, 2], raw[:, 1], raw[:, 0]))
    normalized = normalize_unit_sphere(PointCloud(points=raw[order], id=cloud.id))
    pts = normalized.points

    pose = pos_encode(pts, config.pose_dim, config.pose_alpha, config.pose_beta)
    sel = farthest_point_sample(pts, first_count, config.seed)
    coords = pts[sel]
    feats = pose[sel]
    if config.use_local_geometry:
        feats = np.concatenate([feats, local_geometry_features(coords)], axis=1)

    state = StageState(coords=coords, feats=feats)
    for point_count, neighbor_k in config.stages:
        state = local_aggregation(
            state, point_count, neighbor_k, config.pose_alpha, config.pose_beta, config.seed
        )

    pooled = np.concatenate([state.feats.max(axis=0), state.feats.mean(axis=0)])
    out = l2_normalize(FeatureVector(pooled))
    if out.zero_norm:
        raise InvalidInput("geometric encoding collapsed to the zero vector")
    return out
