from .losses import LossParts, total_loss
from .optim import Adam, AdamConfig, AdamState, adam_step
from .folds import kfold_split
from .metrics import aggregate_report, evaluate_metrics, predict, summarize
from .dataset import Dataset, featurize_manifest, feature_key, load_dataset, write_features
from .trainer import (
    ExperimentResult,
    TrainResult,
    evaluate_model,
    fit,
    fit_final,
    predict_model,
    run_experiment,
    train_fold,
    train_model,
)
from .gradients import gradcheck_component
from .ablation import (
    ABLATIONS,
    HEAD_COMPARISON,
    ablation_configs,
    compare_heads,
    expert_sweep,
    render_sweep,
    run_ablation,
)

__all__ = [
    "LossParts",
    "total_loss",
    "Adam",
    "AdamConfig",
    "AdamState",
    "adam_step",
    "kfold_split",
    "evaluate_metrics",
    "aggregate_report",
    "predict",
    "summarize",
    "Dataset",
    "featurize_manifest",
    "feature_key",
    "load_dataset",
    "write_features",
    "fit",
    "fit_final",
    "train_fold",
    "train_model",
    "run_experiment",
    "predict_model",
    "evaluate_model",
    "TrainResult",
    "ExperimentResult",
    "gradcheck_component",
    "ABLATIONS",
    "ablation_configs",
    "run_ablation",
    "HEAD_COMPARISON",
    "compare_heads",
    "expert_sweep",
    "render_sweep",
]
