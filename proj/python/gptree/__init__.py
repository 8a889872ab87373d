"""Hierarchical Gaussian-process classification on precomputed features."""

from ._core import (
    GPTreeError,
    KernelSpec,
    LabelTree,
    NodeGibbsModel,
    __version__,
    average_forgetting,
    class_log_probs,
    expected_sigmoid,
    fit_gibbs_tree,
    fit_vi_tree,
    gauss_hermite,
    gram,
    load_dataset,
    load_model,
    pg_mean,
    predict,
    predict_proba,
    sample_pg,
    save_model,
)

__all__ = [
    "GPTreeError",
    "KernelSpec",
    "LabelTree",
    "NodeGibbsModel",
    "__version__",
    "average_forgetting",
    "class_log_probs",
    "expected_sigmoid",
    "fit_gibbs_tree",
    "fit_vi_tree",
    "gauss_hermite",
    "gram",
    "load_dataset",
    "load_model",
    "pg_mean",
    "predict",
    "predict_proba",
    "sample_pg",
    "save_model",
]
