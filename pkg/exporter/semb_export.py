"""Bridge a pretrained point-cloud/text encoder to SEMB embedding files.

Reads a JSON-lines manifest (id, path, label, split), runs the encoder over
every sample, and writes the embeddings in the SEMB interchange layout:

    magic "SEMB" | version u16=1 | flags u16=0 | count u32 | dim u32 |
    count x (id_len u16, id UTF-8, dim x f32 little-endian)

Two modes:

* ``--checkpoint model.pt`` loads a TorchScript module.  For samples the
  module is called as ``model(points)`` with a float32 [B, N, 3] batch of
  unit-sphere-normalized clouds and must return [B, D].  For class text it
  must expose ``encode_text(prompts: List[str]) -> [B, D]``.
* ``--mock`` needs no model at all: every id gets a unit vector drawn from
  a generator seeded by (seed, sha256(id)), so outputs depend only on the
  id set, ``--dim`` and ``--seed`` and are byte-stable across runs.

Encoder outputs are written verbatim (no normalization); the consumer
normalizes.  Unreadable samples are skipped with a warning and listed at
the end; an export with zero successful samples fails.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import struct
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"SEMB"
VERSION = 1
DEFAULT_TEMPLATES = (
    "a point cloud model of a {}.",
    "a 3d model of a {}.",
    "a {}.",
)


@dataclass(frozen=True)
class ExportJob:
    manifest: Path
    output: Path
    checkpoint: Path | None = None
    batch_size: int = 32
    device: str = "cpu"
    mock: bool = False
    mock_dim: int = 512
    seed: int = 0
    points: int = 1024
    split: str = "all"


# --- SEMB writing -----------------------------------------------------------


def write_semb(records, path) -> None:
    """records: ordered (id, vector) pairs, one shared dimension."""
    pairs = list(records.items()) if hasattr(records, "items") else list(records)
    ids = [rec_id for rec_id, _ in pairs]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate record ids")
    dim = None
    chunks = []
    for rec_id, vec in pairs:
        arr = np.asarray(vec, dtype=np.float32).reshape(-1)
        if dim is None:
            dim = arr.shape[0]
        elif arr.shape[0] != dim:
            raise ValueError(f"record {rec_id!r}: dim {arr.shape[0]} != {dim}")
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"record {rec_id!r}: non-finite embedding")
        id_bytes = rec_id.encode("utf-8")
        if len(id_bytes) > 0xFFFF:
            raise ValueError(f"record id too long: {rec_id[:32]!r}...")
        chunks.append(struct.pack("<H", len(id_bytes)))
        chunks.append(id_bytes)
        chunks.append(arr.astype("<f4").tobytes())
    header = struct.pack("<4sHHII", MAGIC, VERSION, 0, len(pairs), dim or 0)
    Path(path).write_bytes(header + b"".join(chunks))


# --- manifest and point-file readers ----------------------------------------


def read_manifest(path, split: str = "all"):
    """Yield (id, path, label) for the requested split ('all' for both)."""
    path = Path(path)
    entries = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        obj = json.loads(line)
        if split != "all" and obj["split"] != split:
            continue
        entries.append((str(obj["id"]), path.parent / obj["path"], str(obj["label"])))
    ids = [e[0] for e in entries]
    if len(set(ids)) != len(ids):
        raise ValueError(f"{path}: duplicate sample ids")
    return entries


def load_points(path) -> np.ndarray:
    """Minimal reader for the two point formats the pipeline uses."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    lines = [l.strip() for l in text.splitlines() if l.strip() and not l.startswith("#")]
    if not lines:
        raise ValueError(f"{path}: empty point file")
    if lines[0].split()[0] == "OFF":
        if lines[0] == "OFF":
            counts, body = lines[1], lines[2:]
        else:
            counts, body = lines[0][3:], lines[1:]
        n_vertices = int(counts.split()[0])
        rows = [tuple(map(float, l.split()[:3])) for l in body[:n_vertices]]
    else:
        rows = []
        for l in lines:
            tokens = l.split(",") if "," in l else l.split()
            rows.append(tuple(float(t) for t in tokens[:3]))
    pts = np.asarray(rows, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3 or not np.all(np.isfinite(pts)):
        raise ValueError(f"{path}: malformed point data")
    return pts


def prepare_cloud(pts: np.ndarray, n_points: int, seed: int) -> np.ndarray:
    """Resample to a fixed count and normalize to the unit sphere."""
    rng = np.random.default_rng(seed)
    if len(pts) >= n_points:
        idx = rng.choice(len(pts), size=n_points, replace=False)
    else:
        idx = np.concatenate([
            np.arange(len(pts)),
            rng.integers(len(pts), size=n_points - len(pts)),
        ])
    pts = pts[idx]
    pts = pts - pts.mean(axis=0)
    radius = np.linalg.norm(pts, axis=1).max()
    if radius > 0:
        pts = pts / radius
    return pts.astype(np.float32)


# --- mock embeddings ---------------------------------------------------------


def mock_vector(rec_id: str, dim: int, seed: int) -> np.ndarray:
    """Seeded unit vector; a pure function of (id, dim, seed)."""
    digest = hashlib.sha256(rec_id.encode("utf-8")).digest()
    entropy = int.from_bytes(digest[:8], "little")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(entropy,)))
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


# --- export entry points -----------------------------------------------------


def export_sample_embeddings(job: ExportJob, log=print) -> dict:
    entries = read_manifest(job.manifest, job.split)
    if not entries:
        raise ValueError("manifest selection is empty")
    records = []
    failed = []
    if job.mock:
        for rec_id, _, _ in entries:
            records.append((rec_id, mock_vector(rec_id, job.mock_dim, job.seed)))
    else:
        model = _load_model(job)
        batch_ids, batch_pts = [], []

        def flush():
            if not batch_ids:
                return
            out = _run_points_model(model, np.stack(batch_pts), job.device)
            records.extend(zip(batch_ids, out))
            batch_ids.clear()
            batch_pts.clear()

        for rec_id, path, _ in entries:
            try:
                pts = load_points(path)
                batch_pts.append(prepare_cloud(pts, job.points, job.seed))
                batch_ids.append(rec_id)
            except (OSError, ValueError) as exc:
                log(f"warning: skipping {rec_id}: {exc}")
                failed.append(rec_id)
                continue
            if len(batch_ids) >= job.batch_size:
                flush()
        flush()
    if not records:
        raise ValueError("no sample produced an embedding")
    write_semb(records, job.output)
    if failed:
        log(f"skipped {len(failed)} unreadable samples: {', '.join(failed)}")
    return {"written": len(records), "skipped": failed, "dim": len(records[0][1])}


def export_class_text_embeddings(
    class_names, templates, job: ExportJob, log=print
) -> dict:
    names = list(class_names)
    if len(set(names)) != len(names):
        raise ValueError("duplicate class names")
    if not names:
        raise ValueError("empty class list")
    templates = list(templates) or list(DEFAULT_TEMPLATES)
    if job.mock:
        records = [(name, mock_vector(name, job.mock_dim, job.seed)) for name in names]
    else:
        model = _load_model(job)
        records = []
        for name in names:
            prompts = [t.format(name) for t in templates]
            out = _run_text_model(model, prompts, job.device)
            records.append((name, np.asarray(out, dtype=np.float64).mean(axis=0)))
    write_semb(records, job.output)
    return {"written": len(records), "dim": len(records[0][1])}


# --- model plumbing (real mode only) -----------------------------------------


def _load_model(job: ExportJob):
    if job.checkpoint is None:
        raise ValueError("--checkpoint is required without --mock")
    import torch

    model = torch.jit.load(str(job.checkpoint), map_location=job.device)
    model.eval()
    return model


def _run_points_model(model, batch: np.ndarray, device: str) -> np.ndarray:
    import torch

    with torch.no_grad():
        out = model(torch.from_numpy(batch).to(device))
    return out.cpu().numpy().astype(np.float64)


def _run_text_model(model, prompts, device: str) -> np.ndarray:
    import torch

    encode = getattr(model, "encode_text", None)
    if encode is None:
        raise ValueError("checkpoint has no encode_text method for class text")
    with torch.no_grad():
        out = encode(prompts)
    return out.cpu().numpy().astype(np.float64)


# --- CLI ----------------------------------------------------------------------


def _common_flags(p):
    p.add_argument("--out", required=True)
    p.add_argument("--checkpoint", default=None, help="TorchScript module path")
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--device", default="cpu")
    p.add_argument("--mock", action="store_true",
                   help="emit seeded unit vectors without loading any model")
    p.add_argument("--dim", type=int, default=512, help="embedding width in mock mode")
    p.add_argument("--seed", type=int, default=0)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="semb-export",
        description="Export point-cloud/text embeddings to SEMB files",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_samples = sub.add_parser("samples", help="one embedding per manifest sample")
    p_samples.add_argument("--manifest", required=True)
    p_samples.add_argument("--split", choices=("support", "test", "all"), default="all")
    p_samples.add_argument("--points", type=int, default=1024,
                           help="points per cloud fed to the model")
    _common_flags(p_samples)

    p_text = sub.add_parser("class-text", help="one embedding per class name")
    p_text.add_argument("--manifest", default=None,
                        help="derive class names from this manifest")
    p_text.add_argument("--classes", default=None,
                        help="comma-separated class names (overrides --manifest)")
    p_text.add_argument("--templates", default=None,
                        help="comma-separated prompt templates with {} placeholders")
    _common_flags(p_text)
    return parser


def _job_from_args(args) -> ExportJob:
    return ExportJob(
        manifest=Path(args.manifest) if getattr(args, "manifest", None) else None,
        output=Path(args.out),
        checkpoint=Path(args.checkpoint) if args.checkpoint else None,
        batch_size=args.batch_size,
        device=args.device,
        mock=args.mock,
        mock_dim=args.dim,
        seed=args.seed,
        points=getattr(args, "points", 1024),
        split=getattr(args, "split", "all"),
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    job = _job_from_args(args)
    try:
        if args.command == "samples":
            stats = export_sample_embeddings(job)
        else:
            if args.classes:
                names = [c for c in args.classes.split(",") if c]
            elif args.manifest:
                names = sorted({label for _, _, label in read_manifest(args.manifest)})
            else:
                raise ValueError("class-text needs --classes or --manifest")
            templates = (
                [t for t in args.templates.split(",") if t] if args.templates else []
            )
            stats = export_class_text_embeddings(names, templates, job)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {stats['written']} records (dim {stats['dim']}) to {job.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
