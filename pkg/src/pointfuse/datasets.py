"""Dataset ingestion and synthetic desk-scale benchmarks.

Parsers cover the OFF mesh format (vertices only, faces discarded) and a
plain text point format of comma- or whitespace-separated ``x,y,z`` or
``x,y,z,nx,ny,nz`` lines.  Manifests are JSON-lines, one object per sample
with fields id, path, label, split; paths are resolved relative to the
manifest file.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import PointCloud
from .errors import ConfigError, FormatError, InvalidInput
from .geometry import farthest_point_sample

SPLITS = ("support", "test")
PRIMITIVES = ("sphere", "cube", "cylinder", "cone", "torus")


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    path: str
    label: str
    split: str


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]
    base_dir: Path

    def __post_init__(self):
        ids = [e.id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise InvalidInput("manifest sample ids must be unique")

    def split(self, name: str) -> tuple[ManifestEntry, ...]:
        return tuple(e for e in self.entries if e.split == name)

    def labels(self) -> tuple[str, ...]:
        return tuple(sorted({e.label for e in self.entries}))

    def resolve(self, entry: ManifestEntry) -> Path:
        return self.base_dir / entry.path


def read_manifest(path) -> DatasetManifest:
    path = Path(path)
    entries = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"invalid JSON: {exc.msg}", path=path, line=lineno) from exc
        try:
            entry = ManifestEntry(
                id=str(obj["id"]), path=str(obj["path"]),
                label=str(obj["label"]), split=str(obj["split"]),
            )
        except KeyError as exc:
            raise FormatError(f"missing field {exc}", path=path, line=lineno) from exc
        if entry.split not in SPLITS:
            raise FormatError(f"split must be one of {SPLITS}, got {entry.split!r}",
                              path=path, line=lineno)
        entries.append(entry)
    return DatasetManifest(entries=tuple(entries), base_dir=path.parent)


def write_manifest(entries, path) -> None:
    path = Path(path)
    lines = [
        json.dumps({"id": e.id, "path": e.path, "label": e.label, "split": e.split},
                   sort_keys=True)
        for e in entries
    ]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


# --- parsers ---------------------------------------------------------------


def _significant_lines(text: str):
    """Non-empty, non-comment lines with their 1-based line numbers."""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        yield lineno, stripped


def _parse_floats(tokens, path, lineno) -> list[float]:
    out = []
    for tok in tokens:
        try:
            val = float(tok)
        except ValueError as exc:
            raise FormatError(f"non-numeric token {tok!r}", path=path, line=lineno) from exc
        if not math.isfinite(val):
            raise FormatError(f"non-finite value {tok!r}", path=path, line=lineno)
        out.append(val)
    return out


def parse_off(path, sample_id: str | None = None) -> PointCloud:
    """Extract the vertices of an OFF mesh; faces are discarded.

    Both header variants are accepted: "OFF" alone on the first line with the
    counts on the next, and "OFF <nv> <nf> <ne>" on a single line (a common
    quirk of archived mesh collections).
    """
    path = Path(path)
    lines = list(_significant_lines(path.read_text(encoding="utf-8", errors="replace")))
    if not lines:
        raise FormatError("empty file", path=path)
    lineno, header = lines[0]
    rest = lines[1:]
    if header == "OFF":
        if not rest:
            raise FormatError("missing counts line", path=path, line=lineno)
        counts_lineno, counts_line = rest[0]
        rest = rest[1:]
    elif header.startswith("OFF"):
        counts_lineno, counts_line = lineno, header[3:].strip()
    else:
        raise FormatError(f"expected OFF header, got {header[:16]!r}", path=path, line=lineno)
    tokens = counts_line.split()
    if len(tokens) != 3:
        raise FormatError(f"counts line must have 3 integers, got {len(tokens)}",
                          path=path, line=counts_lineno)
    try:
        n_vertices, n_faces, n_edges = (int(t) for t in tokens)
    except ValueError as exc:
        raise FormatError(f"non-integer count in {tokens}", path=path, line=counts_lineno) from exc
    if n_vertices < 1:
        raise FormatError(f"vertex count must be >= 1, got {n_vertices}",
                          path=path, line=counts_lineno)
    if len(rest) < n_vertices:
        raise FormatError(f"declared {n_vertices} vertices but found {len(rest)}",
                          path=path, line=counts_lineno)
    # faces are discarded, but their line count must match the header so a
    # corrupted vertex count cannot silently reinterpret the file
    if len(rest) - n_vertices != n_faces:
        raise FormatError(
            f"declared {n_faces} faces but found {len(rest) - n_vertices} lines after vertices",
            path=path, line=counts_lineno,
        )
    vertices = np.empty((n_vertices, 3))
    for row, (vlineno, vline) in enumerate(rest[:n_vertices]):
        tokens = vline.split()
        if len(tokens) != 3:
            raise FormatError(f"vertex line must have 3 coordinates, got {len(tokens)}",
                              path=path, line=vlineno)
        vertices[row] = _parse_floats(tokens, path, vlineno)
    return PointCloud(points=vertices, id=sample_id or path.stem)


def parse_xyz_text(path, expected_points: int | None = None, sample_id: str | None = None) -> PointCloud:
    """Parse comma- or whitespace-separated point lines.

    Every line must carry 3 tokens (x, y, z) or uniformly 6 (with a normal);
    mixing widths within one file is a format error.
    """
    path = Path(path)
    points = []
    normals = []
    width = None
    for lineno, line in _significant_lines(path.read_text(encoding="utf-8", errors="replace")):
        tokens = line.split(",") if "," in line else line.split()
        tokens = [t.strip() for t in tokens]
        if len(tokens) not in (3, 6):
            raise FormatError(f"expected 3 or 6 tokens, got {len(tokens)}",
                              path=path, line=lineno)
        if width is None:
            width = len(tokens)
        elif len(tokens) != width:
            raise FormatError(
                f"line has {len(tokens)} tokens but the file started with {width}",
                path=path, line=lineno,
            )
        values = _parse_floats(tokens, path, lineno)
        points.append(values[:3])
        if width == 6:
            normals.append(values[3:])
    if not points:
        raise FormatError("no point lines found", path=path)
    if expected_points is not None and len(points) != expected_points:
        raise FormatError(f"expected {expected_points} points, found {len(points)}", path=path)
    return PointCloud(
        points=np.asarray(points),
        normals=np.asarray(normals) if normals else None,
        id=sample_id or path.stem,
    )


def write_xyz_text(cloud: PointCloud, path) -> None:
    """Serialize a cloud in the comma-separated text format (round-trips)."""
    rows = []
    for i in range(len(cloud)):
        vals = list(cloud.points[i])
        if cloud.normals is not None:
            vals += list(cloud.normals[i])
        rows.append(",".join(repr(float(v)) for v in vals))
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


# --- resampling and synthetic shapes ---------------------------------------


def resample(cloud: PointCloud, n: int, seed: int) -> PointCloud:
    """Bring a cloud to exactly n points.

    Larger clouds are downsampled by farthest point sampling; smaller ones
    are padded with seeded uniform duplicates of existing points.
    """
    if n < 1:
        raise InvalidInput(f"target count must be >= 1, got {n}")
    count = len(cloud)
    if count == n:
        return cloud
    if count > n:
        idx = farthest_point_sample(cloud.points, n, seed)
    else:
        rng = np.random.default_rng(seed)
        extra = rng.integers(count, size=n - count)
        idx = np.concatenate([np.arange(count), extra])
    return PointCloud(
        points=cloud.points[idx],
        normals=cloud.normals[idx] if cloud.normals is not None else None,
        id=cloud.id,
    )


def _sphere(rng, n):
    v = rng.standard_normal((n, 3))
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return v / norms


def _cube(rng, n):
    face = rng.integers(6, size=n)
    uv = rng.uniform(-0.5, 0.5, size=(n, 2))
    pts = np.empty((n, 3))
    axis = face // 2
    sign = np.where(face % 2 == 0, 0.5, -0.5)
    for i in range(n):
        others = [a for a in range(3) if a != axis[i]]
        pts[i, axis[i]] = sign[i]
        pts[i, others[0]] = uv[i, 0]
        pts[i, others[1]] = uv[i, 1]
    return pts


def _cylinder(rng, n):
    # radius 0.5, height 1: lateral area pi, each cap pi/4
    areas = np.array([np.pi, np.pi / 4, np.pi / 4])
    part = rng.choice(3, size=n, p=areas / areas.sum())
    theta = rng.uniform(0.0, 2.0 * np.pi, size=n)
    pts = np.empty((n, 3))
    lateral = part == 0
    pts[lateral, 0] = 0.5 * np.cos(theta[lateral])
    pts[lateral, 1] = 0.5 * np.sin(theta[lateral])
    pts[lateral, 2] = rng.uniform(-0.5, 0.5, size=int(lateral.sum()))
    for cap, z in ((1, 0.5), (2, -0.5)):
        mask = part == cap
        r = 0.5 * np.sqrt(rng.uniform(size=int(mask.sum())))
        pts[mask, 0] = r * np.cos(theta[mask])
        pts[mask, 1] = r * np.sin(theta[mask])
        pts[mask, 2] = z
    return pts


def _cone(rng, n):
    # base radius 0.5 at z=-0.5, apex at z=+0.5
    radius, height = 0.5, 1.0
    slant = math.sqrt(radius * radius + height * height)
    areas = np.array([np.pi * radius * slant, np.pi * radius * radius])
    part = rng.choice(2, size=n, p=areas / areas.sum())
    theta = rng.uniform(0.0, 2.0 * np.pi, size=n)
    pts = np.empty((n, 3))
    lateral = part == 0
    # area grows linearly with distance from apex, so s ~ sqrt(U)
    s = np.sqrt(rng.uniform(size=int(lateral.sum())))
    pts[lateral, 0] = s * radius * np.cos(theta[lateral])
    pts[lateral, 1] = s * radius * np.sin(theta[lateral])
    pts[lateral, 2] = 0.5 - s * height
    base = ~lateral
    r = radius * np.sqrt(rng.uniform(size=int(base.sum())))
    pts[base, 0] = r * np.cos(theta[base])
    pts[base, 1] = r * np.sin(theta[base])
    pts[base, 2] = -0.5
    return pts


def _torus(rng, n):
    # major radius 0.35, minor radius 0.15, axis z
    big_r, small_r = 0.35, 0.15
    pts = np.empty((n, 3))
    filled = 0
    while filled < n:
        take = max(16, 2 * (n - filled))
        u = rng.uniform(0.0, 2.0 * np.pi, size=take)
        phi = rng.uniform(0.0, 2.0 * np.pi, size=take)
        # surface density along the tube varies as (R + r cos phi); reject
        accept = rng.uniform(size=take) < (big_r + small_r * np.cos(phi)) / (big_r + small_r)
        u, phi = u[accept], phi[accept]
        got = min(len(u), n - filled)
        ring = big_r + small_r * np.cos(phi[:got])
        pts[filled : filled + got, 0] = ring * np.cos(u[:got])
        pts[filled : filled + got, 1] = ring * np.sin(u[:got])
        pts[filled : filled + got, 2] = small_r * np.sin(phi[:got])
        filled += got
    return pts


_GENERATORS = {
    "sphere": _sphere,
    "cube": _cube,
    "cylinder": _cylinder,
    "cone": _cone,
    "torus": _torus,
}


def synth_primitive(kind: str, n: int, noise_sigma: float, seed: int) -> PointCloud:
    """Seeded uniform surface sample of a unit primitive plus Gaussian noise."""
    if kind not in _GENERATORS:
        raise ConfigError(f"unknown primitive {kind!r}; choose from {PRIMITIVES}")
    if n < 16:
        raise InvalidInput(f"need at least 16 points, got {n}")
    if noise_sigma < 0:
        raise InvalidInput("noise_sigma must be non-negative")
    rng = np.random.default_rng(seed)
    pts = _GENERATORS[kind](rng, n)
    if noise_sigma > 0:
        pts = pts + rng.normal(scale=noise_sigma, size=pts.shape)
    return PointCloud(points=pts, id=f"{kind}-{seed}")


def write_synthetic_benchmark(
    root,
    classes=PRIMITIVES,
    support_per_class: int = 64,
    test_per_class: int = 40,
    n_points: int = 128,
    noise_sigma: float = 0.02,
    seed: int = 0,
) -> Path:
    """Generate a desk-scale benchmark on disk; returns the manifest path.

    Clouds are written as text point files under root/clouds/ and indexed by
    root/manifest.jsonl.  Fully deterministic given the seed.
    """
    root = Path(root)
    cloud_dir = root / "clouds"
    cloud_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    counter = 0
    for label in classes:
        for split, count in (("support", support_per_class), ("test", test_per_class)):
            for j in range(count):
                sample_id = f"{label}-{split}-{j:03d}"
                cloud = synth_primitive(label, n_points, noise_sigma, seed=seed + counter)
                rel = f"clouds/{sample_id}.xyz"
                write_xyz_text(cloud, root / rel)
                entries.append(ManifestEntry(id=sample_id, path=rel, label=label, split=split))
                counter += 1
    manifest_path = root / "manifest.jsonl"
    write_manifest(entries, manifest_path)
    return manifest_path
