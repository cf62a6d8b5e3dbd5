"""Shared domain types and vector primitives.

Everything downstream (encoders, fusion, memory, evaluation) trades in the
types defined here.  All values are immutable after construction and all
internal arithmetic is float64; only the on-disk embedding interchange is
float32.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InvalidInput


def _frozen(array, dtype=np.float64) -> np.ndarray:
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class PointCloud:
    """A set of 3-D points, optionally with per-point normals."""

    points: np.ndarray
    normals: np.ndarray | None = None
    id: str = ""

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise InvalidInput(f"points must be N x 3, got shape {pts.shape}")
        if pts.shape[0] == 0:
            raise InvalidInput("point cloud is empty")
        if not np.all(np.isfinite(pts)):
            raise InvalidInput("point cloud contains non-finite coordinates")
        object.__setattr__(self, "points", _frozen(pts))
        if self.normals is not None:
            nrm = np.asarray(self.normals, dtype=np.float64)
            if nrm.shape != pts.shape:
                raise InvalidInput(
                    f"normal count {nrm.shape} does not match point count {pts.shape}"
                )
            if not np.all(np.isfinite(nrm)):
                raise InvalidInput("normals contain non-finite values")
            object.__setattr__(self, "normals", _frozen(nrm))

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """A fixed-dimension real vector; the currency of both branches.

    ``zero_norm`` marks a vector that could not be normalized because its
    Euclidean norm is zero.  It is a flag, not an error: callers that need a
    direction decide what to do with it.
    """

    values: np.ndarray
    zero_norm: bool = False

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 1 or vals.shape[0] == 0:
            raise InvalidInput(f"feature vector must be 1-D and non-empty, got {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise InvalidInput("feature vector contains non-finite values")
        object.__setattr__(self, "values", _frozen(vals))

    @property
    def dim(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class ClassCatalog:
    """Ordered, unique class names plus the inverse name -> position map."""

    names: tuple[str, ...]
    index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        names = tuple(self.names)
        if len(set(names)) != len(names):
            raise InvalidInput("class names must be unique")
        if not names:
            raise InvalidInput("class catalog is empty")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "index", {n: i for i, n in enumerate(names)})

    @classmethod
    def from_labels(cls, labels) -> "ClassCatalog":
        """Build a catalog from an iterable of labels, sorted for stability."""
        return cls(tuple(sorted(set(labels))))

    def __len__(self) -> int:
        return len(self.names)


#: branch selector used by the evaluation harness
BRANCHES = ("fused", "geo", "sem")

FUSION_MODES = ("feature", "score")
SELECTIONS = ("mff", "random")


@dataclass(frozen=True)
class PipelineConfig:
    """Every open hyperparameter of the pipeline, with validation.

    ``stages`` lists (point_count, neighbor_k) pairs for the aggregation
    stages of the geometric encoder; the first count is also the size the
    input cloud is downsampled to before the stage loop.
    """

    alpha: float = 0.5
    gamma: float = 5.0
    lambda_ensemble: float = 0.5
    pose_dim: int = 72
    pose_alpha: float = 1000.0
    pose_beta: float = 100.0
    stages: tuple[tuple[int, int], ...] = ((512, 32), (256, 32))
    k_shot: int | None = None
    seed: int = 0
    fusion_mode: str = "feature"
    points: int = 1024
    use_local_geometry: bool = True
    selection: str = "mff"

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.gamma <= 0:
            raise ConfigError(f"gamma must be positive, got {self.gamma}")
        if not 0.0 <= self.lambda_ensemble <= 1.0:
            raise ConfigError(f"lambda_ensemble must be in [0, 1], got {self.lambda_ensemble}")
        if self.pose_dim <= 0 or self.pose_dim % 6 != 0:
            raise ConfigError(f"pose_dim must be a positive multiple of 6, got {self.pose_dim}")
        if self.pose_alpha <= 0 or self.pose_beta <= 0:
            raise ConfigError("pose_alpha and pose_beta must be positive")
        stages = tuple((int(m), int(k)) for m, k in self.stages)
        if not stages:
            raise ConfigError("at least one stage is required")
        counts = [m for m, _ in stages]
        if any(b >= a for a, b in zip(counts, counts[1:])):
            raise ConfigError(f"stage point counts must strictly decrease, got {counts}")
        if any(m < 1 for m in counts):
            raise ConfigError("stage point counts must be positive")
        if any(k < 3 for _, k in stages):
            raise ConfigError("every neighbor_k must be >= 3")
        object.__setattr__(self, "stages", stages)
        if self.k_shot is not None and self.k_shot < 1:
            raise ConfigError(f"k_shot must be positive, got {self.k_shot}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must fit in 64 unsigned bits")
        if self.fusion_mode not in FUSION_MODES:
            raise ConfigError(f"fusion_mode must be one of {FUSION_MODES}")
        if self.selection not in SELECTIONS:
            raise ConfigError(f"selection must be one of {SELECTIONS}")
        if self.points < 1:
            raise ConfigError("points must be positive")

    def digest(self, branch: str = "fused") -> str:
        """Hash of every field that determines features and memory contents.

        gamma and lambda_ensemble apply at query time only, so they are
        deliberately excluded: a stored memory stays valid while they sweep.
        """
        payload = {
            "branch": branch,
            "alpha": self.alpha,
            "pose_dim": self.pose_dim,
            "pose_alpha": self.pose_alpha,
            "pose_beta": self.pose_beta,
            "stages": [list(s) for s in self.stages],
            "k_shot": self.k_shot,
            "seed": self.seed,
            "fusion_mode": self.fusion_mode,
            "points": self.points,
            "use_local_geometry": self.use_local_geometry,
            "selection": self.selection,
        }
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "gamma": self.gamma,
            "lambda_ensemble": self.lambda_ensemble,
            "pose_dim": self.pose_dim,
            "pose_alpha": self.pose_alpha,
            "pose_beta": self.pose_beta,
            "stages": [list(s) for s in self.stages],
            "k_shot": self.k_shot,
            "seed": self.seed,
            "fusion_mode": self.fusion_mode,
            "points": self.points,
            "use_local_geometry": self.use_local_geometry,
            "selection": self.selection,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        data = dict(data)
        data["stages"] = tuple(tuple(s) for s in data.get("stages", ()))
        return cls(**data)


def normalize_unit_sphere(cloud: PointCloud) -> PointCloud:
    """Center a cloud at the origin and scale its farthest point to norm 1.

    A cloud whose points all coincide maps to the origin instead of raising,
    so degenerate synthetic inputs can flow through the whole pipeline.
    """
    pts = cloud.points
    centered = pts - pts.mean(axis=0)
    radius = np.linalg.norm(centered, axis=1).max()
    if radius > 0:
        centered = centered / radius
    return PointCloud(points=centered, normals=cloud.normals, id=cloud.id)


#: vectors whose norm is already this close to 1 are left untouched, which
#: makes l2_normalize exactly idempotent (one division puts the recomputed
#: norm within a few 1e-16 of 1, far inside this dead zone)
NORM_TOL = 1e-12


def l2_normalize(v: FeatureVector) -> FeatureVector:
    """Scale a vector to unit Euclidean norm.

    The zero vector is returned unchanged with the ``zero_norm`` flag set.
    A vector whose norm is already within NORM_TOL of 1 is returned
    bit-for-bit unchanged, so the operation is exactly idempotent.
    """
    vals = v.values
    norm = float(np.linalg.norm(vals))
    if norm == 0.0:
        return FeatureVector(vals, zero_norm=True)
    if not np.isfinite(norm):
        # entries are finite but the sum of squares overflowed; pre-scale
        vals = vals / np.abs(vals).max()
        norm = float(np.linalg.norm(vals))
    if abs(norm - 1.0) <= NORM_TOL:
        return FeatureVector(vals)
    return FeatureVector(vals / norm)
