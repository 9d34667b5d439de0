"""Python bindings for the hybridboost core: HOG, SVM, PCA, metrics and the
experiment pipeline."""

from ._core import (
    ConfigError,
    ConvergenceError,
    DataError,
    DimensionError,
    Error,
    SvmModel,
    __version__,
    binary_metrics,
    confusion_counts,
    hog_descriptor,
    pca,
    ranking_curve,
    run_experiment,
    stratified_split,
    svm_train,
    synth_dataset,
)

__all__ = [
    "ConfigError",
    "ConvergenceError",
    "DataError",
    "DimensionError",
    "Error",
    "SvmModel",
    "__version__",
    "binary_metrics",
    "confusion_counts",
    "hog_descriptor",
    "pca",
    "ranking_curve",
    "run_experiment",
    "stratified_split",
    "svm_train",
    "synth_dataset",
]
