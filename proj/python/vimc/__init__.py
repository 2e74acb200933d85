"""Python bindings for the vimc multiple-choice reading comprehension core."""

from ._vimc import (
    CheckpointError,
    DataError,
    DivergenceError,
    Retriever,
    VocabularyMismatch,
    classification_metrics,
    corpus_bleu4,
    debias_shuffle,
    default_config,
    evaluate,
    gradcheck,
    load_dataset,
    option_distribution,
    rouge_l,
    rrf_fuse,
    synth,
    train,
    validate,
    write_dataset,
)

__all__ = [
    "CheckpointError",
    "DataError",
    "DivergenceError",
    "Retriever",
    "VocabularyMismatch",
    "classification_metrics",
    "corpus_bleu4",
    "debias_shuffle",
    "default_config",
    "evaluate",
    "gradcheck",
    "load_dataset",
    "option_distribution",
    "rouge_l",
    "rrf_fuse",
    "synth",
    "train",
    "validate",
    "write_dataset",
]
