"""Neuron-saliency pruning and selective unsupervised adaptation toolkit."""

from .adaptation import (
    AdaptConfig,
    AdaptationPlan,
    adapt,
    pseudo_label,
    run_adaptation_suite,
    selective_update_step,
)
from .datagen import (
    FrameCorpus,
    GeneratorSpec,
    calibration_subset,
    degrade_noise,
    degrade_reverb,
    generate_clean,
    load_corpus,
    save_corpus,
)
from .estimator import FrameNetClassifier
from .harness import (
    CorpusConfig,
    ExperimentConfig,
    ResultRow,
    ResultTable,
    report,
    run_experiment,
)
from .network import (
    ActivationTrace,
    DenseLayer,
    Network,
    backward,
    forward,
    init_network,
    load_checkpoint,
    save_checkpoint,
    sgd_step,
)
from .pruning import (
    LayerPrune,
    PruneMask,
    PrunePlan,
    apply_mask,
    build_mask,
    structural_prune,
)
from .saliency import (
    MIConfig,
    SaliencyReport,
    band_select,
    mbp_saliency,
    mi_saliency,
    obs_saliency,
    percent_to_count,
)
from .training import TrainConfig, TrainingDiverged, evaluate, schedule_lr, train

__version__ = "0.1.0"

__all__ = [
    "ActivationTrace",
    "AdaptConfig",
    "AdaptationPlan",
    "CorpusConfig",
    "DenseLayer",
    "ExperimentConfig",
    "FrameCorpus",
    "FrameNetClassifier",
    "GeneratorSpec",
    "LayerPrune",
    "MIConfig",
    "Network",
    "PruneMask",
    "PrunePlan",
    "ResultRow",
    "ResultTable",
    "SaliencyReport",
    "TrainConfig",
    "TrainingDiverged",
    "adapt",
    "apply_mask",
    "backward",
    "band_select",
    "build_mask",
    "calibration_subset",
    "degrade_noise",
    "degrade_reverb",
    "evaluate",
    "forward",
    "generate_clean",
    "init_network",
    "load_checkpoint",
    "load_corpus",
    "mbp_saliency",
    "mi_saliency",
    "obs_saliency",
    "percent_to_count",
    "pseudo_label",
    "report",
    "run_adaptation_suite",
    "run_experiment",
    "save_checkpoint",
    "save_corpus",
    "schedule_lr",
    "selective_update_step",
    "sgd_step",
    "structural_prune",
    "train",
]
