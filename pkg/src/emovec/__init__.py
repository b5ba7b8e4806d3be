"""Speech emotion recognition from frame-level features, GMM-UBM
supervectors, and one-vs-one SVMs."""

from .audio_io import EmotionLabel, PcmSignal, UtteranceRecord, load_manifest, parse_wav
from .evaluation import (
    ConfusionMatrix,
    LabelScheme,
    SplitSpec,
    accuracies,
    confusion,
    map_label,
    run_experiment,
    split_dataset,
)
from .features import Band, Dataset, FeatureConfig, FeatureSequence, assemble_features
from .frontend import VadConfig
from .gmm import (
    DiagGmm,
    MapConfig,
    Supervector,
    UbmTrainConfig,
    extract_supervector,
    map_adapt_means,
    train_ubm,
)
from .svm import (
    BinarySvm,
    KernelSpec,
    OvoSvmModel,
    TrainParams,
    grid_select,
    predict,
    train_binary,
    train_ovo,
)

__version__ = "0.1.0"

__all__ = [
    "EmotionLabel", "PcmSignal", "UtteranceRecord", "load_manifest", "parse_wav",
    "ConfusionMatrix", "LabelScheme", "SplitSpec", "accuracies", "confusion",
    "map_label", "run_experiment", "split_dataset",
    "Band", "Dataset", "FeatureConfig", "FeatureSequence", "assemble_features",
    "VadConfig",
    "DiagGmm", "MapConfig", "Supervector", "UbmTrainConfig",
    "extract_supervector", "map_adapt_means", "train_ubm",
    "BinarySvm", "KernelSpec", "OvoSvmModel", "TrainParams",
    "grid_select", "predict", "train_binary", "train_ovo",
    "__version__",
]
