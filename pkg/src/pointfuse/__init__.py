"""Training-free point-cloud recognition.

A point cloud is encoded twice: a non-parametric geometric branch (position
encoding, farthest point sampling, local geometry augmentation, staged
neighborhood aggregation, pooling) and a semantic branch served from
externally computed embeddings.  The two features fuse by a weighted sum and
classify against a key-value feature memory by activated cosine similarity,
optionally ensembled with a zero-shot class-text classifier.
"""

from .core import (
    ClassCatalog,
    FeatureVector,
    PipelineConfig,
    PointCloud,
    l2_normalize,
    normalize_unit_sphere,
)
from .datasets import (
    DatasetManifest,
    ManifestEntry,
    parse_off,
    parse_xyz_text,
    read_manifest,
    resample,
    synth_primitive,
    write_manifest,
    write_synthetic_benchmark,
    write_xyz_text,
)
from .encoder import StageState, encode_geometric, geometric_width, local_aggregation
from .errors import (
    ConfigError,
    DegenerateFeature,
    FormatError,
    InvalidInput,
    MemoryMismatch,
    MissingEmbedding,
    PointfuseError,
    ZeroShotUnavailable,
)
from .evaluation import (
    EvalReport,
    RunContext,
    run_ablation,
    run_build_memory,
    run_evaluate,
    run_sweep,
)
from .fusion import (
    FeatureMemory,
    FusedFeature,
    SelectionResult,
    align_dims,
    build_memory,
    classify,
    ensemble,
    fuse,
    load_memory,
    save_memory,
    select_representatives,
    zero_shot_logits,
)
from .geometry import NeighborIndex, farthest_point_sample, knn, pos_encode
from .local_geometry import (
    LocalGeometryRecord,
    edge_features,
    local_geometry_features,
    spherical_triplet,
)
from .semantic import (
    EmbeddingFile,
    SemanticProvider,
    read_embedding_file,
    semantic_feature,
    write_embedding_file,
)

__version__ = "0.1.0"
