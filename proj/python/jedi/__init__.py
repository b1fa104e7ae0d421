"""Joint student-teacher distillation over cached expert embeddings."""

from ._jedi import (
    ConfigError,
    DimensionError,
    EmbeddingStore,
    JediError,
    MetricError,
    StoreError,
    cross_entropy,
    dataset_weight,
    fit,
    generate_world,
    kd_cross_entropy,
    mean_average_precision,
    multiclass_hinge,
    read_store,
    teacher_dropout_rate,
    topk_accuracy,
    write_store,
)

__all__ = [
    "ConfigError",
    "DimensionError",
    "EmbeddingStore",
    "JediError",
    "MetricError",
    "StoreError",
    "cross_entropy",
    "dataset_weight",
    "fit",
    "generate_world",
    "kd_cross_entropy",
    "mean_average_precision",
    "multiclass_hinge",
    "read_store",
    "teacher_dropout_rate",
    "topk_accuracy",
    "write_store",
]
