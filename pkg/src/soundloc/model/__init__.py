"""Masked-transformer localizer: features, network, objective, training."""
from .config import ModelConfig
from .data import FeatureSet, TokenSet, apply_mask, make_tokens, prepare_features
from .encoder import FrozenAudioEncoder, encode_audio
from .loss import LossBreakdown, best_assignment, match_sources, total_loss
from .network import ModelOutput, SslModel
from .train import (
    Prediction, TrainResult, evaluate_loss, infer, load_model, mirror_axes, mirror_features,
    predict_features, save_model, source_errors, train,
)

__all__ = [
    "ModelConfig", "FeatureSet", "TokenSet", "apply_mask", "make_tokens", "prepare_features",
    "FrozenAudioEncoder", "encode_audio", "LossBreakdown", "best_assignment", "match_sources",
    "total_loss", "ModelOutput", "SslModel", "Prediction", "TrainResult", "evaluate_loss", "infer",
    "load_model", "mirror_axes", "mirror_features", "predict_features", "save_model", "source_errors", "train",
]
