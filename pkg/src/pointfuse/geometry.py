"""Non-parametric geometric primitives.

Trigonometric position encoding, farthest point sampling, and exact
k-nearest-neighbor search.  All three are deterministic: sampling starts at a
seed-derived index and every tie breaks toward the lowest index, so repeated
runs are bit-identical.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InvalidInput


def squared_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """All-pairs squared Euclidean distances with scalar-order arithmetic.

    Columns are squared and added left to right, so every entry is bit-equal
    to the scalar expression dx*dx + dy*dy + ... ; axis reductions would
    reorder the sum and drift by an ulp, which matters for tie-breaking.
    """
    diff = a[:, None, :] - b[None, :, :]
    total = diff[..., 0] * diff[..., 0]
    for c in range(1, diff.shape[-1]):
        total = total + diff[..., c] * diff[..., c]
    return total


@dataclass(frozen=True, eq=False)
class NeighborIndex:
    """Per-query neighbor positions and distances, sorted by distance.

    Rows are sorted by non-decreasing distance with ties broken by ascending
    reference index.
    """

    indices: np.ndarray
    distances: np.ndarray

    def __post_init__(self):
        if self.indices.shape != self.distances.shape:
            raise InvalidInput("indices and distances must have matching shapes")


def pos_encode(points: np.ndarray, pose_dim: int, pose_alpha: float, pose_beta: float) -> np.ndarray:
    """Encode raw coordinates with a bank of sinusoids.

    Each axis value c contributes sin(pose_alpha * c * w_i) and
    cos(pose_alpha * c * w_i) channels for frequencies
    w_i = pose_beta ** (-6 i / pose_dim), i in [0, pose_dim / 6).
    Output layout: axis blocks ordered x, y, z; within a block all sine
    channels then all cosine channels by ascending frequency index.

    Args:
        points: (N, 3) coordinates.
        pose_dim: total output width; must be a positive multiple of 6.

    Returns:
        (N, pose_dim) float64 matrix with every entry in [-1, 1].
    """
    if pose_dim <= 0 or pose_dim % 6 != 0:
        raise ConfigError(f"pose_dim must be a positive multiple of 6, got {pose_dim}")
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise InvalidInput(f"points must be N x 3, got {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise InvalidInput("points contain non-finite coordinates")
    n_freq = pose_dim // 6
    omega = pose_beta ** (-6.0 * np.arange(n_freq) / pose_dim)
    phase = pose_alpha * pts[:, :, None] * omega  # (N, 3, n_freq)
    blocks = []
    for axis in range(3):
        blocks.append(np.sin(phase[:, axis, :]))
        blocks.append(np.cos(phase[:, axis, :]))
    return np.concatenate(blocks, axis=1)


def farthest_point_sample(points: np.ndarray, m: int, seed: int) -> np.ndarray:
    """Greedy max-min downsampling.

    The first index is ``seed mod N``; every following index maximizes the
    minimum distance to all points selected so far, ties broken by lowest
    index.  Deterministic given (points, m, seed).

    Returns:
        int array of m selected indices, in selection order.
    """
    pts = np.asarray(points, dtype=np.float64)
    n = pts.shape[0]
    if m < 1:
        raise InvalidInput(f"sample count must be >= 1, got {m}")
    if m > n:
        raise InvalidInput(f"cannot sample {m} points from {n}")
    selected = np.empty(m, dtype=np.int64)
    selected[0] = int(seed) % n
    # squared distances preserve the argmax and avoid sqrt in the loop
    min_d2 = squared_distances(pts, pts[selected[0]][None, :])[:, 0]
    for j in range(1, m):
        nxt = int(np.argmax(min_d2))
        selected[j] = nxt
        d2 = squared_distances(pts, pts[nxt][None, :])[:, 0]
        np.minimum(min_d2, d2, out=min_d2)
    return selected


def knn(queries: np.ndarray, references: np.ndarray, k: int) -> NeighborIndex:
    """Exact Euclidean k-nearest neighbors of each query among references.

    Self-matches are included when the query set is the reference set;
    callers exclude them explicitly where required.
    """
    q = np.asarray(queries, dtype=np.float64)
    r = np.asarray(references, dtype=np.float64)
    if q.ndim != 2 or r.ndim != 2 or q.shape[1] != r.shape[1]:
        raise InvalidInput("queries and references must be 2-D with equal width")
    n = r.shape[0]
    if k < 1 or k > n:
        raise InvalidInput(f"k must be in [1, {n}], got {k}")
    dist = np.sqrt(squared_distances(q, r))
    # stable sort keeps equal distances in ascending reference order
    order = np.argsort(dist, axis=1, kind="stable")[:, :k]
    picked = np.take_along_axis(dist, order, axis=1)
    return NeighborIndex(indices=order, distances=picked)
