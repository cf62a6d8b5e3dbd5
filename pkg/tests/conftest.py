import hashlib

import numpy as np
import pytest

import pointfuse as pf

#: desk-scale configuration used across the harness tests; small stages keep
#: runtimes tractable while exercising every pipeline step
DESK = dict(
    stages=((64, 8), (32, 8)),
    points=256,
    pose_alpha=10.0,
    gamma=10.0,
    seed=0,
)


def desk_config(**overrides) -> pf.PipelineConfig:
    return pf.PipelineConfig(**{**DESK, **overrides})


def mock_unit_vectors(ids, dim: int, seed: int = 0) -> dict[str, np.ndarray]:
    """Deterministic per-id unit vectors, independent of id order."""
    out = {}
    for sample_id in ids:
        digest = hashlib.sha256(sample_id.encode()).digest()
        entropy = int.from_bytes(digest[:8], "little")
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(entropy,)))
        v = rng.standard_normal(dim)
        out[sample_id] = v / np.linalg.norm(v)
    return out


@pytest.fixture(scope="session")
def benchmark_dir(tmp_path_factory):
    """The 5-primitive desk benchmark: 64 support + 40 test clouds per class."""
    root = tmp_path_factory.mktemp("benchmark")
    pf.write_synthetic_benchmark(
        root,
        support_per_class=64,
        test_per_class=40,
        n_points=256,
        noise_sigma=0.02,
        seed=0,
    )
    return root


@pytest.fixture(scope="session")
def small_benchmark_dir(tmp_path_factory):
    """A 3-class benchmark small enough for CLI round-trip tests."""
    root = tmp_path_factory.mktemp("small_benchmark")
    pf.write_synthetic_benchmark(
        root,
        classes=("sphere", "cube", "torus"),
        support_per_class=8,
        test_per_class=4,
        n_points=128,
        noise_sigma=0.02,
        seed=3,
    )
    return root
