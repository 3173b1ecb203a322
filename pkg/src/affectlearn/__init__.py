"""Joint facial-behavior learning: expressions, action units, valence/arousal.

One shared-trunk network trained simultaneously for the three tasks over
disjointly annotated data pools, with relatedness-driven task coupling
(co-annotation, soft co-annotation, distribution matching) and a
zero-shot compound-expression scorer on top of the basic-task outputs.
"""

from .coupling import (
    CouplingConfig,
    co_annotate_aus_to_emotion,
    co_annotate_emotion_to_aus,
    distribution_matching_loss,
    mixture_q,
    soft_coannotation_loss,
    soft_emotion_label,
)
from .estimators import CompoundZeroShotClassifier, JointBehaviorEstimator
from .losses import LabeledBatch, LossBreakdown, LossWeights, aggregate
from .metrics import ccc, challenge_scores, confusion_stats, f1_binary
from .network import Network, NetworkConfig, PredictionTriple, gradient_check
from .relatedness import (
    AU_IDS,
    EMOTIONS,
    CompoundClass,
    RelatednessTable,
    compound_union,
    infer_table,
    load_bundled_table,
    load_table,
    save_table,
)
from .synthdata import (
    BatchIterator,
    DatasetBundle,
    GeneratorConfig,
    generate,
    schedule,
)
from .trainer import (
    ExperimentReport,
    TrainConfig,
    evaluate,
    fine_tune_compound,
    run_ablation,
    single_task_baselines,
    train,
)
from .zeroshot import CompoundPredictionConfig, candidate_score, classify

__version__ = "0.1.0"

__all__ = [
    "AU_IDS",
    "BatchIterator",
    "CompoundClass",
    "CompoundPredictionConfig",
    "CompoundZeroShotClassifier",
    "CouplingConfig",
    "DatasetBundle",
    "EMOTIONS",
    "ExperimentReport",
    "GeneratorConfig",
    "JointBehaviorEstimator",
    "LabeledBatch",
    "LossBreakdown",
    "LossWeights",
    "Network",
    "NetworkConfig",
    "PredictionTriple",
    "RelatednessTable",
    "TrainConfig",
    "aggregate",
    "candidate_score",
    "ccc",
    "challenge_scores",
    "classify",
    "co_annotate_aus_to_emotion",
    "co_annotate_emotion_to_aus",
    "compound_union",
    "confusion_stats",
    "distribution_matching_loss",
    "evaluate",
    "f1_binary",
    "fine_tune_compound",
    "generate",
    "gradient_check",
    "infer_table",
    "load_bundled_table",
    "load_table",
    "mixture_q",
    "run_ablation",
    "save_table",
    "schedule",
    "single_task_baselines",
    "soft_coannotation_loss",
    "soft_emotion_label",
    "train",
]
