"""Evaluation harness: memory construction, test-set scoring, reports.

A run is driven by a JSON-lines manifest (support/test split), a pipeline
configuration, and optionally a semantic embedding file.  Reports carry the
confusion matrix, per-class and overall accuracy, and a full config echo.
The JSON serialization is canonical and timing-free so identical runs
produce byte-identical reports; wall-clock timings appear only on the
human-readable table.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .core import ClassCatalog, FeatureVector, PipelineConfig
from .datasets import DatasetManifest, ManifestEntry, parse_off, parse_xyz_text, resample
from .encoder import encode_geometric
from .errors import (
    ConfigError,
    InvalidInput,
    MemoryMismatch,
    MissingEmbedding,
    ZeroShotUnavailable,
)
from .fusion import (
    FeatureMemory,
    FusedFeature,
    build_memory,
    class_text_matrix,
    classify,
    ensemble,
    fuse,
    zero_shot_logits,
)
from .semantic import SemanticProvider, semantic_feature

REPORT_SCHEMA = 1

#: ablation row names, in report order
ABLATION_ROWS = ("geo", "sem", "no-gfe", "no-mff", "full")


@dataclass(frozen=True, eq=False)
class EvalReport:
    """Typed result of one evaluation run."""

    overall_accuracy: float
    per_class_accuracy: dict[str, float]
    confusion: np.ndarray
    classes: tuple[str, ...]
    config_echo: dict
    timing: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        total = int(self.confusion.sum())
        trace = int(np.trace(self.confusion))
        expect = 100.0 * trace / total if total else 0.0
        if abs(expect - self.overall_accuracy) > 1e-9:
            raise InvalidInput("overall accuracy does not match the confusion matrix")

    def to_json_dict(self) -> dict:
        # timing is intentionally absent: reports must be byte-reproducible
        return {
            "schema": REPORT_SCHEMA,
            "classes": list(self.classes),
            "overall_accuracy": self.overall_accuracy,
            "per_class_accuracy": dict(sorted(self.per_class_accuracy.items())),
            "confusion": [[int(v) for v in row] for row in self.confusion],
            "config": self.config_echo,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=2) + "\n"

    def format_table(self) -> str:
        width = max(len(n) for n in self.classes) + 2
        lines = ["class".ljust(width) + "accuracy   tested"]
        for i, name in enumerate(self.classes):
            row_total = int(self.confusion[i].sum())
            acc = self.per_class_accuracy[name]
            lines.append(f"{name.ljust(width)}{acc:7.2f}%   {row_total}")
        lines.append(f"{'overall'.ljust(width)}{self.overall_accuracy:7.2f}%   "
                     f"{int(self.confusion.sum())}")
        for phase, seconds in self.timing.items():
            lines.append(f"  [{phase}: {seconds:.2f}s]")
        return "\n".join(lines)


def load_cloud(manifest: DatasetManifest, entry: ManifestEntry, config: PipelineConfig):
    path = manifest.resolve(entry)
    if path.suffix.lower() == ".off":
        cloud = parse_off(path, sample_id=entry.id)
    else:
        cloud = parse_xyz_text(path, sample_id=entry.id)
    return resample(cloud, config.points, config.seed)


def geometric_features(
    manifest: DatasetManifest, entries, config: PipelineConfig
) -> dict[str, FeatureVector]:
    """Encode every entry's cloud through the geometric branch."""
    return {
        e.id: encode_geometric(load_cloud(manifest, e, config), config) for e in entries
    }


def semantic_features(provider: SemanticProvider, entries) -> dict[str, FeatureVector]:
    """Normalized stored embeddings for every entry; reports all missing ids."""
    missing = provider.missing(e.id for e in entries)
    if missing:
        raise MissingEmbedding(missing)
    return {e.id: semantic_feature(provider, e.id) for e in entries}


def assemble_features(
    entries,
    config: PipelineConfig,
    branch: str,
    geo: dict[str, FeatureVector] | None = None,
    sem: dict[str, FeatureVector] | None = None,
) -> list[tuple[str, str, FusedFeature]]:
    """Wrap branch features as (id, label, FusedFeature) triples."""
    out = []
    for e in entries:
        if branch == "geo":
            feat = FusedFeature(values=geo[e.id], alpha_used=1.0, mode="feature")
        elif branch == "sem":
            feat = FusedFeature(values=sem[e.id], alpha_used=0.0, mode="feature")
        elif branch == "fused":
            feat = fuse(geo[e.id], sem[e.id], config.alpha, mode=config.fusion_mode)
        else:
            raise InvalidInput(f"unknown branch {branch!r}")
        out.append((e.id, e.label, feat))
    return out


def memory_from_features(
    support_feats, config: PipelineConfig, branch: str, catalog: ClassCatalog
) -> FeatureMemory:
    return build_memory(
        support_feats,
        k_shot=config.k_shot,
        seed=config.seed,
        catalog=catalog,
        config_digest=config.digest(branch=branch),
        selection=config.selection,
    )


def score_features(
    test_feats,
    memory: FeatureMemory,
    config: PipelineConfig,
    sem: dict[str, FeatureVector] | None = None,
    text_rows: np.ndarray | None = None,
) -> EvalReport:
    """Classify every (id, label, feature) triple and assemble the report."""
    catalog = memory.catalog
    n = len(catalog)
    confusion = np.zeros((n, n), dtype=np.int64)
    for sample_id, label, feat in test_feats:
        logits = classify(feat, memory, config.gamma)
        if text_rows is not None:
            zs = zero_shot_logits(sem[sample_id], text_rows)
            logits = ensemble(logits, zs, config.lambda_ensemble)
        predicted = int(np.argmax(logits))
        confusion[catalog.index[label], predicted] += 1
    per_class = {}
    for i, name in enumerate(catalog.names):
        row_total = int(confusion[i].sum())
        per_class[name] = 100.0 * int(confusion[i, i]) / row_total if row_total else 0.0
    total = int(confusion.sum())
    overall = 100.0 * int(np.trace(confusion)) / total if total else 0.0
    return EvalReport(
        overall_accuracy=overall,
        per_class_accuracy=per_class,
        confusion=confusion,
        classes=catalog.names,
        config_echo={},
    )


@dataclass(frozen=True, eq=False)
class RunContext:
    """Loaded inputs shared by the pipeline entry points."""

    manifest: DatasetManifest
    provider: SemanticProvider | None
    config: PipelineConfig
    branch: str
    catalog: ClassCatalog

    @classmethod
    def create(cls, manifest: DatasetManifest, provider, config, branch) -> "RunContext":
        if branch not in ("fused", "geo", "sem"):
            raise InvalidInput(f"unknown branch {branch!r}")
        if branch != "geo" and provider is None:
            raise InvalidInput(f"branch {branch!r} requires an embedding file")
        catalog = ClassCatalog(manifest.labels())
        return cls(manifest=manifest, provider=provider, config=config,
                   branch=branch, catalog=catalog)

    def features(self, split: str, branch: str | None = None, config: PipelineConfig | None = None):
        branch = branch or self.branch
        config = config or self.config
        entries = self.manifest.split(split)
        if not entries:
            raise InvalidInput(f"manifest has no {split!r} entries")
        geo = geometric_features(self.manifest, entries, config) if branch != "sem" else None
        sem = semantic_features(self.provider, entries) if branch != "geo" else None
        return assemble_features(entries, config, branch, geo=geo, sem=sem), sem


def run_build_memory(ctx: RunContext) -> tuple[FeatureMemory, dict[str, float]]:
    """Build the support memory; returns (memory, timings)."""
    t0 = time.perf_counter()
    support_feats, _ = ctx.features("support")
    t1 = time.perf_counter()
    memory = memory_from_features(support_feats, ctx.config, ctx.branch, ctx.catalog)
    t2 = time.perf_counter()
    return memory, {"encode_support": t1 - t0, "build": t2 - t1}


def run_evaluate(
    ctx: RunContext,
    memory: FeatureMemory,
    use_ensemble: bool = False,
    warn=None,
) -> EvalReport:
    """Score the manifest's test split against a memory."""
    expected = ctx.config.digest(branch=ctx.branch)
    if memory.config_digest != expected:
        raise MemoryMismatch(
            f"memory was built under digest {memory.config_digest[:12]}, "
            f"current flags give {expected[:12]}"
        )
    t0 = time.perf_counter()
    test_feats, sem = ctx.features("test")
    t1 = time.perf_counter()
    text_rows = None
    if use_ensemble:
        try:
            if ctx.provider is None:
                raise ZeroShotUnavailable("no embedding file loaded")
            if sem is None:
                entries = ctx.manifest.split("test")
                sem = semantic_features(ctx.provider, entries)
            text_rows = class_text_matrix(ctx.provider, ctx.catalog)
        except ZeroShotUnavailable as exc:
            if warn is not None:
                warn(f"ensemble disabled: {exc}")
            text_rows = None
    report = score_features(test_feats, memory, ctx.config, sem=sem, text_rows=text_rows)
    t2 = time.perf_counter()
    echo = ctx.config.to_dict()
    echo["branch"] = ctx.branch
    echo["ensemble"] = text_rows is not None
    return replace(
        report,
        config_echo=echo,
        timing={"encode_test": t1 - t0, "classify": t2 - t1},
    )


def run_ablation(ctx: RunContext, rows=ABLATION_ROWS, warn=None) -> list[tuple[str, EvalReport]]:
    """Re-run the pipeline once per ablation row.

    Rows: geo (geometric branch only), sem (semantic branch only), no-gfe
    (fusion without the 17-channel augmentation), no-mff (k-shot keys by
    seeded random pick instead of clustering), full.
    """
    results = []
    for row in rows:
        if row not in ABLATION_ROWS:
            raise ConfigError(f"unknown ablation row {row!r}")
        branch = {"geo": "geo", "sem": "sem"}.get(row, "fused")
        overrides = {}
        if row == "no-gfe":
            overrides["use_local_geometry"] = False
        if row == "no-mff":
            overrides["selection"] = "random"
        cfg = PipelineConfig(**{**ctx.config.to_dict(), **overrides})
        sub = RunContext.create(ctx.manifest, ctx.provider, cfg, branch)
        memory, _ = run_build_memory(sub)
        results.append((row, run_evaluate(sub, memory, warn=warn)))
    return results


def format_ablation_table(results) -> str:
    header = f"{'row':<8}{'sem':<5}{'geo':<5}{'aug':<5}{'mff':<5}accuracy"
    toggles = {
        "geo": ("-", "x", "x", "x"),
        "sem": ("x", "-", "x", "x"),
        "no-gfe": ("x", "x", "-", "x"),
        "no-mff": ("x", "x", "x", "-"),
        "full": ("x", "x", "x", "x"),
    }
    lines = [header]
    for row, report in results:
        t = toggles[row]
        lines.append(
            f"{row:<8}{t[0]:<5}{t[1]:<5}{t[2]:<5}{t[3]:<5}{report.overall_accuracy:.2f}"
        )
    return "\n".join(lines)


def run_sweep(
    ctx: RunContext,
    alphas,
    gammas,
    lambdas,
    use_ensemble: bool = False,
    warn=None,
) -> list[dict]:
    """Grid evaluation over alpha x gamma x lambda; deterministic row order.

    Geometric and semantic features are computed once; each alpha rebuilds
    the memory (the fused features depend on it), and gamma and lambda apply
    at query time.
    """
    alphas, gammas, lambdas = list(alphas), list(gammas), list(lambdas)
    if not alphas or not gammas or not lambdas:
        raise ConfigError("sweep grid is empty")
    support_entries = ctx.manifest.split("support")
    test_entries = ctx.manifest.split("test")
    if not support_entries or not test_entries:
        raise InvalidInput("sweep needs both support and test entries")
    geo_s = geometric_features(ctx.manifest, support_entries, ctx.config)
    geo_t = geometric_features(ctx.manifest, test_entries, ctx.config)
    sem_s = semantic_features(ctx.provider, support_entries)
    sem_t = semantic_features(ctx.provider, test_entries)
    text_rows = None
    if use_ensemble:
        try:
            text_rows = class_text_matrix(ctx.provider, ctx.catalog)
        except ZeroShotUnavailable as exc:
            if warn is not None:
                warn(f"ensemble disabled: {exc}")

    rows = []
    for alpha in alphas:
        cfg = PipelineConfig(**{**ctx.config.to_dict(), "alpha": alpha})
        support_feats = assemble_features(support_entries, cfg, "fused", geo=geo_s, sem=sem_s)
        test_feats = assemble_features(test_entries, cfg, "fused", geo=geo_t, sem=sem_t)
        memory = memory_from_features(support_feats, cfg, "fused", ctx.catalog)
        for gamma in gammas:
            for lam in lambdas:
                point = PipelineConfig(
                    **{**cfg.to_dict(), "gamma": gamma, "lambda_ensemble": lam}
                )
                report = score_features(
                    test_feats, memory, point, sem=sem_t,
                    text_rows=text_rows if use_ensemble else None,
                )
                rows.append(
                    {
                        "alpha": alpha,
                        "gamma": gamma,
                        "lambda": lam,
                        "accuracy": report.overall_accuracy,
                    }
                )
    return rows


def sweep_csv(rows) -> str:
    lines = ["alpha,gamma,lambda,accuracy"]
    for r in rows:
        lines.append(f"{r['alpha']},{r['gamma']},{r['lambda']},{r['accuracy']}")
    return "\n".join(lines) + "\n"
