"""Feature fusion, prototype selection, and feature-memory classification.

The classifier is a key-value memory: unit-norm support features are the
keys, one-hot class labels the values.  A query scores every key by cosine
similarity, similarities pass through exp(-gamma * (1 - s)), and the
activations are summed per class through the one-hot matrix.  For k-shot
memories, each class contributes the k-means++ centroids of its support
features instead of raw samples.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import ClassCatalog, FeatureVector, l2_normalize
from .errors import (
    DegenerateFeature,
    InvalidInput,
    MemoryMismatch,
    ZeroShotUnavailable,
)
from .semantic import read_embedding_file, write_embedding_file

#: Lloyd iteration limits for prototype selection
MAX_ITERATIONS = 100
MOVEMENT_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class FusedFeature:
    """A query or support feature ready for the memory.

    In feature mode ``values`` is the fused unit vector.  In score mode the
    two branch vectors are retained separately (each unit norm) and
    ``values`` carries their concatenation so selection and storage have a
    single matrix to work with; the weighting happens at classification.
    """

    values: FeatureVector
    alpha_used: float
    mode: str
    geo: FeatureVector | None = None
    sem: FeatureVector | None = None


@dataclass(frozen=True, eq=False)
class FeatureMemory:
    """Support-set key matrix plus one-hot labels and provenance digest."""

    keys: np.ndarray
    labels_onehot: np.ndarray
    catalog: ClassCatalog
    config_digest: str
    mode: str = "feature"
    geo_dim: int | None = None

    def __post_init__(self):
        if self.keys.ndim != 2 or self.keys.shape[0] == 0:
            raise InvalidInput("memory needs at least one key")
        if self.labels_onehot.shape != (self.keys.shape[0], len(self.catalog)):
            raise InvalidInput("one-hot label matrix shape mismatch")
        rows = self.labels_onehot.sum(axis=1)
        if not np.all(rows == 1.0):
            raise InvalidInput("every one-hot row must sum to exactly 1")

    @property
    def size(self) -> int:
        return self.keys.shape[0]

    def key_class_indices(self) -> np.ndarray:
        return self.labels_onehot.argmax(axis=1)


@dataclass(frozen=True, eq=False)
class SelectionResult:
    """Outcome of k-means++ prototype selection for one class."""

    centroids: np.ndarray
    inertia: float
    iterations: int
    k_effective: int
    clamped: bool


def align_dims(v: FeatureVector, target_dim: int) -> FeatureVector:
    """Reduce a vector to target_dim by chunked mean pooling.

    The vector is split into target_dim contiguous chunks as equal as
    possible (the first ``dim mod target_dim`` chunks get one extra element)
    and each output entry is its chunk's mean.  Identity when dims already
    match.  Enlargement is not supported.
    """
    if target_dim < 1:
        raise InvalidInput(f"target_dim must be positive, got {target_dim}")
    d = v.dim
    if d == target_dim:
        return v
    if d < target_dim:
        raise InvalidInput(f"cannot enlarge dim {d} to {target_dim}")
    base, rem = divmod(d, target_dim)
    sizes = np.full(target_dim, base, dtype=np.int64)
    sizes[:rem] += 1
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    out = np.add.reduceat(v.values, starts) / sizes
    return FeatureVector(out)


def fuse(f_geo: FeatureVector, f_sem: FeatureVector, alpha: float, mode: str = "feature") -> FusedFeature:
    """Weighted combination of the geometric and semantic branch features.

    Feature mode aligns the geometric vector down to the semantic width,
    mixes alpha * geo + (1 - alpha) * sem, and re-normalizes.  Score mode
    keeps both unit vectors and defers the weighting to classification.
    """
    if not 0.0 <= alpha <= 1.0:
        raise InvalidInput(f"alpha must be in [0, 1], got {alpha}")
    if f_geo.zero_norm or f_sem.zero_norm:
        raise DegenerateFeature("cannot fuse a zero-norm feature")
    geo = l2_normalize(f_geo)
    sem = l2_normalize(f_sem)
    if mode == "score":
        concat = FeatureVector(np.concatenate([geo.values, sem.values]))
        return FusedFeature(values=concat, alpha_used=alpha, mode="score", geo=geo, sem=sem)
    if mode != "feature":
        raise InvalidInput(f"unknown fusion mode {mode!r}")
    geo_aligned = l2_normalize(align_dims(geo, sem.dim))
    mixed = alpha * geo_aligned.values + (1.0 - alpha) * sem.values
    out = l2_normalize(FeatureVector(mixed))
    if out.zero_norm:
        raise DegenerateFeature("branches cancelled exactly; fused feature is zero")
    return FusedFeature(values=out, alpha_used=alpha, mode="feature")


def select_representatives(class_features: np.ndarray, k: int, seed) -> SelectionResult:
    """Pick k prototype vectors for one class via seeded k-means++.

    Seeding: the first center is chosen uniformly by the seeded generator;
    each next center is chosen with probability proportional to the squared
    distance to the nearest already-chosen center.  Lloyd iterations run
    until the largest centroid movement drops below 1e-6 or 100 iterations.
    An empty cluster is re-seeded to the point farthest from its assigned
    centroid.  k is clamped to the sample count, in which case the points
    themselves are the centroids.
    """
    feats = np.asarray(class_features, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[0] == 0:
        raise InvalidInput("class_features must be a non-empty S x D matrix")
    if k < 1:
        raise InvalidInput(f"k must be >= 1, got {k}")
    s = feats.shape[0]
    if k >= s:
        return SelectionResult(
            centroids=feats.copy(), inertia=0.0, iterations=0,
            k_effective=s, clamped=k > s,
        )

    rng = np.random.default_rng(seed)
    centers = np.empty((k, feats.shape[1]))
    centers[0] = feats[int(rng.integers(s))]
    min_d2 = ((feats - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = float(min_d2.sum())
        if total > 0.0:
            r = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(min_d2), r, side="right"))
            idx = min(idx, s - 1)
        else:
            idx = int(rng.integers(s))
        centers[j] = feats[idx]
        np.minimum(min_d2, ((feats - centers[j]) ** 2).sum(axis=1), out=min_d2)

    inertia = np.inf
    iterations = 0
    for _ in range(MAX_ITERATIONS):
        iterations += 1
        d2 = ((feats[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        assign = d2.argmin(axis=1)
        new_centers = centers.copy()
        counts = np.bincount(assign, minlength=k)
        for c in range(k):
            if counts[c] > 0:
                new_centers[c] = feats[assign == c].mean(axis=0)
        if np.any(counts == 0):
            assigned_d2 = ((feats - new_centers[assign]) ** 2).sum(axis=1)
            for c in np.flatnonzero(counts == 0):
                far = int(np.argmax(assigned_d2))
                new_centers[c] = feats[far]
                assigned_d2[far] = -1.0
        new_inertia = float(
            ((feats[:, None, :] - new_centers[None, :, :]) ** 2).sum(axis=2).min(axis=1).sum()
        )
        assert new_inertia <= inertia + 1e-9, "inertia increased during Lloyd iteration"
        movement = float(np.linalg.norm(new_centers - centers, axis=1).max())
        centers = new_centers
        inertia = new_inertia
        if movement < MOVEMENT_TOL:
            break
    return SelectionResult(
        centroids=centers, inertia=inertia, iterations=iterations,
        k_effective=k, clamped=False,
    )


def _class_seed(seed: int, class_index: int) -> np.random.SeedSequence:
    # independent, reproducible stream per class
    return np.random.SeedSequence(entropy=int(seed), spawn_key=(class_index,))


def _normalize_key_rows(rows: np.ndarray, mode: str, geo_dim: int | None) -> np.ndarray:
    out = np.empty_like(rows)
    for r in range(rows.shape[0]):
        if mode == "score":
            g = l2_normalize(FeatureVector(rows[r, :geo_dim]))
            t = l2_normalize(FeatureVector(rows[r, geo_dim:]))
            if g.zero_norm or t.zero_norm:
                raise DegenerateFeature("prototype collapsed to a zero vector")
            out[r] = np.concatenate([g.values, t.values])
        else:
            v = l2_normalize(FeatureVector(rows[r]))
            if v.zero_norm:
                raise DegenerateFeature("prototype collapsed to a zero vector")
            out[r] = v.values
    return out


def build_memory(
    support,
    k_shot: int | None,
    seed: int,
    catalog: ClassCatalog | None = None,
    config_digest: str = "",
    selection: str = "mff",
) -> FeatureMemory:
    """Assemble the feature memory from (sample_id, class_name, FusedFeature).

    Full-shot (k_shot None): every fused feature becomes a key.  K-shot:
    per class, either k-means++ centroids (selection="mff") or a seeded
    random sample without replacement (selection="random"); centroids are
    re-normalized to unit keys.  Deterministic given the seed; every class
    draws from its own stream derived from (seed, class index).
    """
    support = list(support)
    if not support:
        raise InvalidInput("support set is empty")
    mode = support[0][2].mode
    geo_dim = support[0][2].geo.dim if mode == "score" else None
    if catalog is None:
        catalog = ClassCatalog.from_labels(label for _, label, _ in support)
    by_class: dict[str, list[np.ndarray]] = {name: [] for name in catalog.names}
    for _, label, feat in support:
        if label not in catalog.index:
            raise InvalidInput(f"label {label!r} not in catalog")
        if feat.mode != mode:
            raise InvalidInput("support mixes fusion modes")
        by_class[label].append(feat.values.values)
    empty = [n for n, feats in by_class.items() if not feats]
    if empty:
        raise InvalidInput(f"classes without support samples: {empty}")

    key_rows: list[np.ndarray] = []
    label_idx: list[int] = []
    for ci, name in enumerate(catalog.names):
        feats = np.stack(by_class[name])
        if k_shot is None:
            rows = feats
        elif selection == "mff":
            result = select_representatives(feats, k_shot, _class_seed(seed, ci))
            rows = result.centroids
        elif selection == "random":
            rng = np.random.default_rng(_class_seed(seed, ci))
            take = min(k_shot, feats.shape[0])
            rows = feats[np.sort(rng.choice(feats.shape[0], size=take, replace=False))]
        else:
            raise InvalidInput(f"unknown selection {selection!r}")
        rows = _normalize_key_rows(rows, mode, geo_dim)
        key_rows.append(rows)
        label_idx.extend([ci] * rows.shape[0])

    keys = np.concatenate(key_rows, axis=0)
    onehot = np.zeros((keys.shape[0], len(catalog)))
    onehot[np.arange(keys.shape[0]), label_idx] = 1.0
    return FeatureMemory(
        keys=keys, labels_onehot=onehot, catalog=catalog,
        config_digest=config_digest, mode=mode, geo_dim=geo_dim,
    )


def classify(
    query: FusedFeature,
    memory: FeatureMemory,
    gamma: float,
    expected_digest: str | None = None,
) -> np.ndarray:
    """Class logits for one query against the memory.

    Feature mode: cosine similarities (dot products of unit vectors) pass
    through exp(-gamma * (1 - s)) and are summed per class.  Score mode:
    per-branch similarities are mixed as alpha * s_geo + (1 - alpha) * s_sem
    before the activation.
    """
    if gamma <= 0:
        raise InvalidInput(f"gamma must be positive, got {gamma}")
    if expected_digest is not None and expected_digest != memory.config_digest:
        raise MemoryMismatch(
            f"memory digest {memory.config_digest[:12]} != expected {expected_digest[:12]}"
        )
    if query.mode != memory.mode:
        raise MemoryMismatch(f"query mode {query.mode!r} != memory mode {memory.mode!r}")
    if query.values.dim != memory.keys.shape[1]:
        raise MemoryMismatch(
            f"query dim {query.values.dim} != key dim {memory.keys.shape[1]}"
        )
    if memory.mode == "score":
        gd = memory.geo_dim
        s_geo = memory.keys[:, :gd] @ query.geo.values
        s_sem = memory.keys[:, gd:] @ query.sem.values
        sims = query.alpha_used * s_geo + (1.0 - query.alpha_used) * s_sem
    else:
        sims = memory.keys @ query.values.values
    activations = np.exp(-gamma * (1.0 - sims))
    return activations @ memory.labels_onehot


def zero_shot_logits(f_sem: FeatureVector, class_text: np.ndarray) -> np.ndarray:
    """Cosine similarity of a semantic feature with each class-text row."""
    txt = np.asarray(class_text, dtype=np.float64)
    if txt.ndim != 2 or txt.shape[1] != f_sem.dim:
        raise InvalidInput(
            f"class_text must be N x {f_sem.dim}, got {txt.shape}"
        )
    return txt @ f_sem.values


def class_text_matrix(provider, catalog: ClassCatalog) -> np.ndarray:
    """Unit-norm class-text embeddings in catalog order.

    Raises ZeroShotUnavailable when the provider has no class-text table or
    any catalog class is missing from it.
    """
    if provider.class_text is None:
        raise ZeroShotUnavailable("no class-text embeddings loaded")
    missing = [n for n in catalog.names if n not in provider.class_text]
    if missing:
        raise ZeroShotUnavailable(f"class-text embeddings missing for: {missing}")
    rows = []
    for name in catalog.names:
        v = l2_normalize(FeatureVector(provider.class_text[name]))
        if v.zero_norm:
            raise ZeroShotUnavailable(f"class-text embedding for {name!r} is zero")
        rows.append(v.values)
    return np.stack(rows)


def _min_max(x: np.ndarray) -> np.ndarray:
    lo, hi = float(x.min()), float(x.max())
    if hi == lo:
        return np.zeros_like(x)
    return (x - lo) / (hi - lo)


def ensemble(memory_logits: np.ndarray, zeroshot_logits: np.ndarray, lambda_ensemble: float) -> np.ndarray:
    """Convex mix of the two classifiers' logits.

    Memory activations and raw cosine scores live on different scales, so
    each vector is min-max normalized to [0, 1] before mixing.
    """
    a = np.asarray(memory_logits, dtype=np.float64)
    b = np.asarray(zeroshot_logits, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidInput(f"logit lengths differ: {a.shape} vs {b.shape}")
    if not 0.0 <= lambda_ensemble <= 1.0:
        raise InvalidInput("lambda_ensemble must be in [0, 1]")
    return lambda_ensemble * _min_max(a) + (1.0 - lambda_ensemble) * _min_max(b)


# --- persistence ----------------------------------------------------------

SIDECAR_SCHEMA = 1


def save_memory(memory: FeatureMemory, key_path, sidecar_path, extra: dict | None = None) -> None:
    """Persist keys as a SEMB file (ids "key-<row>") plus a JSON sidecar."""
    records = [(f"key-{r}", memory.keys[r]) for r in range(memory.size)]
    write_embedding_file(records, key_path)
    sidecar = {
        "schema": SIDECAR_SCHEMA,
        "catalog": list(memory.catalog.names),
        "labels": [int(i) for i in memory.key_class_indices()],
        "config_digest": memory.config_digest,
        "mode": memory.mode,
        "geo_dim": memory.geo_dim,
    }
    if extra:
        sidecar.update(extra)
    Path(sidecar_path).write_text(
        json.dumps(sidecar, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def load_memory(key_path, sidecar_path) -> tuple[FeatureMemory, dict]:
    """Load a persisted memory; returns (memory, sidecar dict)."""
    sidecar = json.loads(Path(sidecar_path).read_text(encoding="utf-8"))
    emb = read_embedding_file(key_path)
    catalog = ClassCatalog(tuple(sidecar["catalog"]))
    labels = sidecar["labels"]
    if len(labels) != emb.count:
        raise InvalidInput("sidecar labels do not match key count")
    onehot = np.zeros((emb.count, len(catalog)))
    onehot[np.arange(emb.count), labels] = 1.0
    memory = FeatureMemory(
        keys=emb.vectors.copy(),
        labels_onehot=onehot,
        catalog=catalog,
        config_digest=sidecar["config_digest"],
        mode=sidecar.get("mode", "feature"),
        geo_dim=sidecar.get("geo_dim"),
    )
    return memory, sidecar
