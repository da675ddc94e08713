"""reclink: record linkage as k-nearest-neighbor retrieval over text embeddings."""

from .clustering import ClusterAssignment, ClusterParams, cluster
from .encoder import (
    EmbeddingMatrix,
    EncoderConfig,
    EncoderModel,
    featurize,
    init_model,
    load_model,
    save_model,
)
from .errors import DataError, ProviderError, ReclinkError, TrainingError
from .index import Neighbors, VectorIndex, blocked_search, build_index, search
from .linkage import MergeSpec, aggregate_rows, dedup, merge, tune_threshold
from .metrics import EvalReport, pairwise_f1, top1_accuracy
from .providers import BuiltinProvider, RemoteProvider, embed_batch, parse_model_spec
from .results import LinkResult, Match, Unmatched, read_link_result
from .tabular import ColumnSelector, Table, load_table, write_table
from .textprep import (
    SeparatorSpec,
    SerializedRecord,
    edit_distance_link,
    edit_similarity,
    levenshtein,
    serialize_record,
    serialize_table,
)
from .train import (
    ClusterRows,
    LabeledPairs,
    PositivePairs,
    TrainConfig,
    TrainReport,
    adamw_step,
    build_training_batches,
    dataset_from_table,
    linear_schedule_lr,
    online_contrastive_loss,
    supcon_loss,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "BuiltinProvider",
    "ClusterAssignment",
    "ClusterParams",
    "ClusterRows",
    "ColumnSelector",
    "DataError",
    "EmbeddingMatrix",
    "EncoderConfig",
    "EncoderModel",
    "EvalReport",
    "LabeledPairs",
    "LinkResult",
    "Match",
    "MergeSpec",
    "Neighbors",
    "PositivePairs",
    "ProviderError",
    "ReclinkError",
    "RemoteProvider",
    "SeparatorSpec",
    "SerializedRecord",
    "Table",
    "TrainConfig",
    "TrainReport",
    "TrainingError",
    "Unmatched",
    "VectorIndex",
    "adamw_step",
    "aggregate_rows",
    "blocked_search",
    "build_index",
    "build_training_batches",
    "cluster",
    "dataset_from_table",
    "dedup",
    "edit_distance_link",
    "edit_similarity",
    "embed_batch",
    "featurize",
    "init_model",
    "linear_schedule_lr",
    "levenshtein",
    "load_model",
    "load_table",
    "merge",
    "online_contrastive_loss",
    "pairwise_f1",
    "parse_model_spec",
    "read_link_result",
    "save_model",
    "search",
    "serialize_record",
    "serialize_table",
    "supcon_loss",
    "top1_accuracy",
    "train",
    "tune_threshold",
    "write_table",
]
