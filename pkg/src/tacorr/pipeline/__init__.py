from .config import (
    ABLATION_ROWS,
    PROFILES,
    Config,
    ConfigError,
    LossWeights,
    TrainConfig,
    ablation_config,
    load_config,
    resolve_config,
)
from .data import ShapePair, load_correspondence, load_dataset, save_correspondence, save_dataset
from .metrics import EPS_GRID, evaluate, metric_acc, metric_err
from .model import (
    CheckpointError,
    CorrespondenceModel,
    construction_loss,
    forward_features,
    infer,
    infer_transitive,
    load_checkpoint,
    save_checkpoint,
    similarity,
    total_loss,
)
from .synth import make_prototype, pose, random_angles, synth_pairs
from .train import TrainingDiverged, TrainResult, train, write_loss_csv
