from src.mil.anchor import anchor_attention
from src.mil.baselines import PoolingMIL, baseline_forward, build_baseline
from src.mil.config import ModelConfig
from src.mil.model import (
    BagPrediction,
    BagTensors,
    SelectiveScanMIL,
    build_model,
    loss,
    predict_bag,
    prepare_bag,
)
from src.mil.pooling import GatedAttentionPooling
from src.mil.training import (
    TrainingResult,
    fit,
    load_trained,
    save_trained,
    train,
    train_baseline,
    validation_split,
)

__all__ = [
    "BagPrediction",
    "BagTensors",
    "GatedAttentionPooling",
    "ModelConfig",
    "PoolingMIL",
    "SelectiveScanMIL",
    "TrainingResult",
    "anchor_attention",
    "baseline_forward",
    "build_baseline",
    "build_model",
    "fit",
    "load_trained",
    "loss",
    "predict_bag",
    "prepare_bag",
    "save_trained",
    "train",
    "train_baseline",
    "validation_split",
]
