"""MEDIC: an interpretable prototype-part classifier for tabular medical data.

Continuous features are discretized through trainable bins, sparse masks
carve the encoded input into parts, parts are embedded and matched to
prototypes by squared-L2 distance, and a linear head classifies from the
pooled distances. Every prediction decodes into a conjunction of feature
conditions with per-prototype similarity scores.
"""

from .backend import BACKEND
from .binning import (
    BinningParams,
    EncodingLayout,
    Interval,
    encode_instance,
    encode_matrix,
    feature_intervals,
    fuzzy_bin,
    hard_bin,
    init_binning,
    intervals_from_centers,
)
from .errors import DataError, MedicError, ModelError, SchemaError, TrainingError
from .evaluate import (
    CVResult,
    EvalResult,
    HPOResult,
    SearchSpace,
    confusion_matrix,
    cross_validate,
    default_search_space,
    evaluate_model,
    gmean,
    hpo_random_search,
    predict,
)
from .explain import (
    Condition,
    InstanceExplanation,
    PrototypeExplanation,
    decode_prototype,
    explain_instance,
    export_report,
    similarity_from_distance,
)
from .model_io import load_model, save_model
from .network import (
    ClassifierHead,
    ExtractorParams,
    ForwardTrace,
    Model,
    PatchMaskMatrix,
    PrototypeSet,
    classify,
    embed_part,
    extract_parts,
    forward,
    forward_batch,
    init_model,
    pool_min,
    prototype_distances,
)
from .schema import (
    Dataset,
    FeatureSchema,
    apply_impute,
    fit_impute_values,
    impute_missing,
    load_dataset,
    load_dataset_with_schema,
    load_schema_spec,
    save_dataset,
    stratified_kfold,
)
from .training import (
    EpochLog,
    LossBreakdown,
    TrainConfig,
    binarize_masks,
    count_unique_prototypes,
    loss_and_grads,
    loss_total,
    project_prototypes,
    train_full,
    train_stage1,
    train_stage2,
    train_stage3,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BinningParams",
    "CVResult",
    "ClassifierHead",
    "Condition",
    "Dataset",
    "DataError",
    "EncodingLayout",
    "EpochLog",
    "EvalResult",
    "ExtractorParams",
    "FeatureSchema",
    "ForwardTrace",
    "HPOResult",
    "InstanceExplanation",
    "Interval",
    "LossBreakdown",
    "MedicError",
    "Model",
    "ModelError",
    "PatchMaskMatrix",
    "PrototypeExplanation",
    "PrototypeSet",
    "SchemaError",
    "SearchSpace",
    "TrainConfig",
    "TrainingError",
    "apply_impute",
    "binarize_masks",
    "classify",
    "confusion_matrix",
    "count_unique_prototypes",
    "cross_validate",
    "decode_prototype",
    "default_search_space",
    "embed_part",
    "encode_instance",
    "encode_matrix",
    "evaluate_model",
    "explain_instance",
    "export_report",
    "extract_parts",
    "feature_intervals",
    "fit_impute_values",
    "forward",
    "forward_batch",
    "fuzzy_bin",
    "gmean",
    "hard_bin",
    "hpo_random_search",
    "impute_missing",
    "init_binning",
    "init_model",
    "intervals_from_centers",
    "load_dataset",
    "load_dataset_with_schema",
    "load_model",
    "load_schema_spec",
    "loss_and_grads",
    "loss_total",
    "pool_min",
    "predict",
    "project_prototypes",
    "prototype_distances",
    "save_dataset",
    "save_model",
    "similarity_from_distance",
    "stratified_kfold",
    "train_full",
    "train_stage1",
    "train_stage2",
    "train_stage3",
]
