"""Composite objective: masked-audio reconstruction, microphone and source localization."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ..autodiff import Tensor, absolute, tsum
from ..errors import ContractError
from .config import ModelConfig
from .data import TokenSet


@dataclass
class LossBreakdown:
    sound_term: Tensor
    mloc_term: Tensor
    sloc_term: Tensor
    total: Tensor

    def as_floats(self) -> dict:
        return {k: float(getattr(self, k).data) for k in ("sound_term", "mloc_term", "sloc_term", "total")}


def best_assignment(pred: np.ndarray, truth: np.ndarray) -> tuple:
    """Permutation of ``truth`` rows minimizing the summed squared distance to ``pred``."""
    k = pred.shape[0]
    best, best_cost = tuple(range(k)), np.inf
    for perm in itertools.permutations(range(k)):
        cost = float(np.sum((pred - truth[list(perm)]) ** 2))
        if cost < best_cost:
            best, best_cost = perm, cost
    return best


def match_sources(pred: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """Reorder ``truth`` (B, K, 3) so that row k matches prediction k in every scene."""
    out = np.empty_like(truth)
    for b in range(truth.shape[0]):
        out[b] = truth[b][list(best_assignment(pred[b], truth[b]))]
    return out


def total_loss(output, tokens: TokenSet, audio_gt: np.ndarray, mic_pos_gt: np.ndarray,
               source_pos_gt: np.ndarray | None, config: ModelConfig) -> LossBreakdown:
    """Batch-mean of the per-scene weighted loss.

    sound : sum over audio-masked microphones of ||s_hat - s||^2
    m-loc : sum over position-masked microphones of ||r_hat - r||^2
    s-loc : sum over unordered pairs of {predicted sources} U {known microphones} of
            | ||r_hat_i - r_hat_j||^2 - ||r_i - r_j||^2 |   (known-microphone pairs are exactly 0)
    """
    B, M = tokens.audio_mask.shape
    audio_mask = tokens.audio_mask.astype(float)
    pos_mask = tokens.pos_mask.astype(float)
    if np.any(tokens.pos_mask) and mic_pos_gt is None:
        raise ContractError("position-masked microphones need ground-truth positions")
    if np.any(tokens.audio_mask) and audio_gt is None:
        raise ContractError("audio-masked microphones need ground-truth audio")

    zero = Tensor(0.0)
    sound = zero
    if np.any(tokens.audio_mask):
        err = tsum((output.audio_hat - audio_gt) ** 2, axis=-1)            # (B, M)
        sound = tsum(err * audio_mask) * (1.0 / B)

    mloc = zero
    if np.any(tokens.pos_mask):
        err = tsum((output.mic_positions - mic_pos_gt) ** 2, axis=-1)
        mloc = tsum(err * pos_mask) * (1.0 / B)

    sloc = zero
    if output.n_queries:
        if source_pos_gt is None:
            raise ContractError("source queries need ground-truth source positions")
        pred = output.source_positions                                      # (B, K, 3)
        truth = match_sources(pred.data, np.asarray(source_pos_gt, dtype=float))
        known = 1.0 - pos_mask                                               # (B, M)
        mic_gt = np.asarray(mic_pos_gt, dtype=float)
        # source-microphone pairs; the known microphone position is its own prediction
        d_hat = tsum((pred.reshape(B, -1, 1, 3) - mic_gt[:, None]) ** 2, axis=-1)   # (B, K, M)
        d_true = np.sum((truth[:, :, None] - mic_gt[:, None]) ** 2, axis=-1)
        sloc = tsum(absolute(d_hat - d_true) * known[:, None, :])
        K = output.n_queries
        for i, j in itertools.combinations(range(K), 2):
            dh = tsum((pred[:, i] - pred[:, j]) ** 2, axis=-1)
            dt = np.sum((truth[:, i] - truth[:, j]) ** 2, axis=-1)
            sloc = sloc + tsum(absolute(dh - dt))
        sloc = sloc * (1.0 / B)

    total = config.lambda_sound * sound + config.lambda_mloc * mloc + config.lambda_sloc * sloc
    return LossBreakdown(sound, mloc, sloc, total)
