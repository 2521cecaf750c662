"""ICU mortality risk prediction from irregularly sampled physiological time-series.

The package turns raw per-patient measurement records into equal-length
interval feature matrices, runs a (bidirectional) LSTM over them, pools the
hidden states with soft attention reading heads, and scores mortality risk
with a logistic classifier.  Gradients come from a small reverse-mode
autodiff engine in :mod:`icurisk.autodiff`, so the whole chain is trainable
with Adam and verifiable against finite differences.
"""

__version__ = "0.1.0"

from icurisk.ingest import (
    DEFAULT_REGISTRY,
    Measurement,
    ParameterRegistry,
    RawEpisode,
    join_labels,
    parse_outcomes,
    parse_record,
    serialize_record,
)
from icurisk.preprocess import (
    EpisodeFeatures,
    PipelineStats,
    build_features,
    fit_pipeline,
)
from icurisk.model import (
    AttentionTrace,
    ModelConfig,
    ModelParams,
    forward_episode,
    grad_check,
    load_model,
    save_model,
)
from icurisk.train import (
    TrainConfig,
    auc,
    cross_validate,
    kfold_split,
    train_fold,
)

__all__ = [
    "DEFAULT_REGISTRY",
    "Measurement",
    "ParameterRegistry",
    "RawEpisode",
    "parse_record",
    "parse_outcomes",
    "serialize_record",
    "join_labels",
    "EpisodeFeatures",
    "PipelineStats",
    "fit_pipeline",
    "build_features",
    "ModelConfig",
    "ModelParams",
    "AttentionTrace",
    "forward_episode",
    "grad_check",
    "save_model",
    "load_model",
    "TrainConfig",
    "kfold_split",
    "train_fold",
    "cross_validate",
    "auc",
    "__version__",
]
