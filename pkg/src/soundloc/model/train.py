"""Mini-batch training loop and inference."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..autodiff import OptimizerState, epoch_schedule, no_grad, optimizer_step
from ..autodiff.checkpoint import load_checkpoint, save_checkpoint
from ..errors import ConfigError, DivergenceError, NonFiniteError
from .config import ModelConfig
from .data import FeatureSet, apply_mask, make_tokens, prepare_features
from .encoder import FrozenAudioEncoder
from .loss import match_sources, total_loss
from .network import SslModel

log = logging.getLogger(__name__)


@dataclass
class TrainResult:
    model: SslModel
    loss_curve: list = field(default_factory=list)       # mean total loss per epoch
    term_curves: list = field(default_factory=list)      # per-epoch dict of mean terms
    initial_loss: float = float("nan")                   # full-data loss before any update

    @property
    def final_loss(self) -> float:
        return self.loss_curve[-1] if self.loss_curve else self.initial_loss


@dataclass
class Prediction:
    """Model output for one scene, in metres and samples."""

    source_positions: np.ndarray          # (K, 3); empty when sources are given
    mic_positions: np.ndarray             # (U, 3) for the position-masked microphones
    mic_indices: np.ndarray               # (U,) which microphones those rows belong to
    reconstructed_audio: np.ndarray       # (A, N) for the audio-masked microphones
    audio_indices: np.ndarray
    s_emb_hat: np.ndarray
    r_emb_hat: np.ndarray


def mirror_axes(room) -> list:
    """Axes along which the room is mirror-symmetric (equal absorption on both walls)."""
    a = np.asarray(room.wall_absorption, dtype=float).reshape(3, 2)
    return [ax for ax in range(3) if np.isclose(a[ax, 0], a[ax, 1])]


def mirror_features(features: FeatureSet, room, flips: np.ndarray) -> FeatureSet:
    """Reflect geometry through the room centre along the flagged axes, per scene.

    For a shoebox room with equal absorption on opposite walls the mirrored
    scene has exactly the same impulse responses, so recordings and TDOA
    features are unchanged and only positions move.
    """
    sign = np.where(np.asarray(flips, dtype=bool), -1.0, 1.0)[:, None, :]      # (S, 1, 3)
    c = room.center
    return replace(features,
                   mic_pos=c + sign * (features.mic_pos - c),
                   source_pos=c + sign * (features.source_pos - c))


def _batch(features: FeatureSet, idx, config: ModelConfig, rng, mask_ratio: float, axes=(),
           position_ratio: float = 0.0):
    sub = features.subset(idx)
    if axes:
        flips = np.zeros((len(idx), 3), dtype=bool)
        flips[:, list(axes)] = rng.random((len(idx), len(axes))) < 0.5
        sub = mirror_features(sub, config.room, flips)
    tokens = make_tokens(sub, config)
    if mask_ratio > 0 or position_ratio > 0:
        tokens = apply_mask(tokens, mask_ratio, rng, position_ratio)
    return sub, tokens


def evaluate_loss(model: SslModel, features: FeatureSet, batch_size: int = 64) -> dict:
    """Unmasked (faulty microphones only) loss terms averaged over ``features``."""
    sums, n = {}, len(features)
    with no_grad():
        for start in range(0, n, batch_size):
            idx = np.arange(start, min(n, start + batch_size))
            sub, tokens = _batch(features, idx, model.config, None, 0.0)
            out = model(tokens)
            terms = total_loss(out, tokens, sub.audio, sub.mic_pos, sub.source_pos, model.config).as_floats()
            for k, v in terms.items():
                sums[k] = sums.get(k, 0.0) + v * len(idx)
    return {k: v / n for k, v in sums.items()}


def train(dataset, config: ModelConfig, epochs: int, seed: int = 0, batch_size: int = 32,
          model: SslModel | None = None, checkpoint_path=None, log_path=None,
          checkpoint_every: int = 0, augment: bool = True) -> TrainResult:
    """Fit the localizer with per-epoch shuffled mini-batches.

    ``dataset`` is a :class:`FeatureSet` or a sequence of recordings. The
    loss curve holds the mean mini-batch total of each epoch. A non-finite
    loss or gradient raises :class:`DivergenceError` naming the epoch and step.
    With ``augment`` each training scene is randomly mirrored along the
    room's symmetry axes (see :func:`mirror_features`).
    """
    features = dataset if isinstance(dataset, FeatureSet) else prepare_features(list(dataset), config)
    if len(features) == 0:
        raise ConfigError("training needs a nonempty dataset")
    if epochs < 0:
        raise ConfigError("epochs must be >= 0")
    model = model or SslModel(config)
    params = dict(model.named_parameters())
    state = OptimizerState()
    rng = np.random.default_rng(seed)
    axes = mirror_axes(config.room) if augment else []
    result = TrainResult(model=model, initial_loss=evaluate_loss(model, features)["total"])
    log_file = open(log_path, "a") if log_path else None
    try:
        for epoch in range(epochs):
            epoch_schedule(state, epoch)
            order = rng.permutation(len(features))
            totals = {}
            for step, start in enumerate(range(0, len(order), batch_size)):
                idx = order[start:start + batch_size]
                sub, tokens = _batch(features, idx, config, rng, config.mask_ratio, axes,
                                     config.position_mask_ratio)
                model.zero_grad()
                try:
                    out = model(tokens)
                    loss = total_loss(out, tokens, sub.audio, sub.mic_pos, sub.source_pos, config)
                    loss.total.backward()
                    optimizer_step(state, params)
                except NonFiniteError as exc:
                    raise DivergenceError(f"non-finite value at epoch {epoch}, step {step}: {exc}") from exc
                for k, v in loss.as_floats().items():
                    totals[k] = totals.get(k, 0.0) + v * len(idx)
            means = {k: v / len(order) for k, v in totals.items()}
            result.loss_curve.append(means["total"])
            result.term_curves.append(means)
            if log_file:
                log_file.write(json.dumps({"epoch": epoch, "lr": state.learning_rate, **means}) + "\n")
                log_file.flush()
            if checkpoint_path and checkpoint_every and (epoch + 1) % checkpoint_every == 0:
                save_model(model, checkpoint_path)
            log.debug("epoch %d lr %.3g loss %.5g", epoch, state.learning_rate, means["total"])
    finally:
        if log_file:
            log_file.close()
    if checkpoint_path:
        save_model(model, checkpoint_path)
    return result


def save_model(model: SslModel, path) -> None:
    save_checkpoint(path, model.state_dict(), {"model_config": model.config.to_dict()})


def load_model(path) -> SslModel:
    arrays, hyper = load_checkpoint(path)
    model = SslModel(ModelConfig.from_dict(hyper["model_config"]))
    model.load_state_dict(arrays)
    return model


def infer(recording, config: ModelConfig | None = None, model: SslModel | None = None,
          encoder: FrozenAudioEncoder | None = None, audio_mask=None) -> Prediction:
    """Localize the sources (and any unknown microphones) of one recording.

    Known geometry comes from the recording: microphones flagged unknown are
    position-masked; with ``config.source_known`` the recorded source
    positions become anchor tokens and only microphones are predicted.
    ``audio_mask`` optionally hides the audio of chosen microphones, whose
    waveforms are then reconstructed.
    """
    if model is None:
        raise ConfigError("infer needs a trained model")
    config = config or model.config
    m = np.asarray(recording.channels).shape[0]
    if m != model.config.n_mics:
        raise ConfigError(f"model was trained for {model.config.n_mics} microphones, recording has {m}")
    if config.source_known != model.config.source_known or config.num_sources != model.config.num_sources:
        config = replace(model.config, source_known=config.source_known, num_sources=config.num_sources)
    feats = prepare_features([recording], replace(config, n_mics=m), encoder)
    tokens = make_tokens(feats, config)
    if audio_mask is not None:
        tokens = replace(tokens, audio_mask=np.asarray(audio_mask, dtype=bool).reshape(1, m) & ~tokens.pos_mask)
    with no_grad():
        out = model(tokens)
    pos = out.positions.data[0]
    unknown = np.flatnonzero(tokens.pos_mask[0])
    hidden_audio = np.flatnonzero(tokens.audio_mask[0])
    return Prediction(
        source_positions=pos[m:m + out.n_queries].copy(),
        mic_positions=pos[unknown].copy(),
        mic_indices=unknown,
        reconstructed_audio=out.audio_hat.data[0][hidden_audio].copy(),
        audio_indices=hidden_audio,
        s_emb_hat=out.s_emb_hat.data[0].copy(),
        r_emb_hat=out.r_emb_hat.data[0].copy(),
    )


def predict_features(model: SslModel, features: FeatureSet, batch_size: int = 64) -> tuple:
    """Batched inference over a feature set -> (sources (S, K, 3), mics (S, M, 3))."""
    n = len(features)
    srcs, mics = [], []
    with no_grad():
        for start in range(0, n, batch_size):
            idx = np.arange(start, min(n, start + batch_size))
            _, tokens = _batch(features, idx, model.config, None, 0.0)
            out = model(tokens)
            srcs.append(out.source_positions.data)
            mics.append(out.mic_positions.data)
    return np.concatenate(srcs), np.concatenate(mics)


def source_errors(pred: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """Euclidean errors after optimal source matching, shape (S, K)."""
    matched = match_sources(pred, truth)
    return np.linalg.norm(pred - matched, axis=-1)
