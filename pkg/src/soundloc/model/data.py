"""Turn rendered recordings into the fixed-size arrays the network consumes."""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, replace

import numpy as np

from ..errors import ConfigError
from ..features import mel_filterbank, multichannel_coherence, multichannel_ngcc, pair_weights
from .config import ModelConfig
from .encoder import FrozenAudioEncoder

log = logging.getLogger(__name__)


@dataclass
class FeatureSet:
    """Per-scene inputs and targets, stacked along the first axis.

    ``tdoa_bank[s, p]`` is the coherence-weighted aggregate of filter ``p``'s
    PHAT correlations over all microphone pairs; the trainable filter weights
    combine it into the weighted TDOA feature.
    """

    audio_emb: np.ndarray     # (S, M, d)
    mic_pos: np.ndarray       # (S, M, 3)
    faulty: np.ndarray        # (S, M) bool
    tdoa_bank: np.ndarray     # (S, P, L)
    audio: np.ndarray         # (S, M, N)
    source_pos: np.ndarray    # (S, K, 3)
    pair_weights: np.ndarray  # (S, n_pairs)

    def __len__(self):
        return self.mic_pos.shape[0]

    def subset(self, idx) -> "FeatureSet":
        idx = np.asarray(idx)
        if idx.size == 0:
            idx = idx.astype(int)
        return FeatureSet(*(getattr(self, f)[idx] for f in self.__dataclass_fields__))


@dataclass
class TokenSet:
    """Network input for a batch of scenes.

    ``audio_mask`` marks microphones whose audio embedding is replaced by the
    learnable mask embedding; ``pos_mask`` marks microphones whose position is
    hidden (faulty microphones, always) and must be predicted.
    """

    audio_emb: object         # (B, M, d) array or Tensor
    mic_pos: object           # (B, M, 3) array or Tensor
    tdoa_bank: np.ndarray     # (B, P, L)
    audio_mask: np.ndarray    # (B, M) bool
    pos_mask: np.ndarray      # (B, M) bool
    known_sources: np.ndarray | None = None  # (B, Ks, 3) when source positions are given

    @property
    def batch(self) -> int:
        return self.audio_mask.shape[0]

    @property
    def n_mics(self) -> int:
        return self.audio_mask.shape[1]


def mic_pairs(n_mics: int) -> list:
    return list(itertools.combinations(range(n_mics), 2))


def scene_features(channels: np.ndarray, config: ModelConfig, encoder: FrozenAudioEncoder,
                   bank=None) -> tuple:
    """Frozen audio embeddings, per-filter aggregated TDOA bank and pair weights of one scene."""
    bank = bank or mel_filterbank(config.filterbank_size, config.room.sample_rate)
    pairs = mic_pairs(channels.shape[0])
    per_pair = multichannel_ngcc(channels, pairs, bank, config.resolved_tau_max)   # (n_pairs, P, L)
    coh = multichannel_coherence(channels, pairs, segment_len=config.welch_segment)
    w = pair_weights(coh.mean(axis=1), config.alpha)
    agg = np.tensordot(w, per_pair, axes=(0, 0))
    if config.ascm_reduction == "mean":
        agg = agg / len(pairs)
    return encoder(channels), agg, w


def prepare_features(recordings, config: ModelConfig, encoder: FrozenAudioEncoder | None = None) -> FeatureSet:
    encoder = encoder or FrozenAudioEncoder(config.embed_dim, config.audio_frame, config.audio_hop)
    bank = mel_filterbank(config.filterbank_size, config.room.sample_rate)
    cols = {k: [] for k in FeatureSet.__dataclass_fields__}
    for rec in recordings:
        m, n = rec.channels.shape
        if m != config.n_mics:
            raise ConfigError(f"recording has {m} microphones, model expects {config.n_mics}")
        if n != config.n_samples:
            raise ConfigError(f"recording has {n} samples, model expects {config.n_samples}")
        if len(rec.sources) != config.num_sources:
            raise ConfigError(f"recording has {len(rec.sources)} sources, model expects {config.num_sources}")
        emb, agg, w = scene_features(np.asarray(rec.channels, dtype=float), config, encoder, bank)
        cols["audio_emb"].append(emb)
        cols["mic_pos"].append(rec.mic_positions)
        cols["faulty"].append(~rec.known_mask)
        cols["tdoa_bank"].append(agg)
        cols["audio"].append(np.asarray(rec.channels, dtype=float))
        cols["source_pos"].append(rec.source_positions)
        cols["pair_weights"].append(w)
    if not cols["mic_pos"]:
        raise ConfigError("no recordings to featurize")
    return FeatureSet(**{k: np.stack(v) for k, v in cols.items()})


def make_tokens(features: FeatureSet, config: ModelConfig) -> TokenSet:
    """Unmasked-by-chance token set: only faulty microphones are position-masked."""
    faulty = features.faulty.astype(bool)
    return TokenSet(
        audio_emb=features.audio_emb,
        mic_pos=np.where(faulty[..., None], 0.0, features.mic_pos),
        tdoa_bank=features.tdoa_bank,
        audio_mask=np.zeros_like(faulty),
        pos_mask=faulty.copy(),
        known_sources=features.source_pos if config.source_known else None,
    )


def apply_mask(tokens: TokenSet, mask_ratio: float, seed, position_ratio: float = 0.0) -> TokenSet:
    """Randomly hide audio embeddings with probability ``mask_ratio`` per microphone.

    With ``position_ratio > 0`` known microphone positions are also hidden with
    that probability, which adds training targets for the m-loc term. Every
    scene keeps at least one known position. Position-masked microphones keep
    their audio (it is their only evidence), and every scene keeps at least
    one unmasked audio token.
    """
    if not 0.0 <= mask_ratio < 1.0:
        raise ValueError("mask_ratio must lie in [0, 1)")
    if not 0.0 <= position_ratio < 1.0:
        raise ValueError("position_ratio must lie in [0, 1)")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    pos_mask = tokens.pos_mask
    if position_ratio > 0:
        hide = (rng.random(pos_mask.shape) < position_ratio) & ~pos_mask
        pos_mask = pos_mask | hide
        for b in np.flatnonzero(pos_mask.all(axis=1) & ~tokens.pos_mask.all(axis=1)):
            keep = int(rng.choice(np.flatnonzero(hide[b])))
            log.info("scene %d: every position masked, keeping microphone %d", b, keep)
            pos_mask[b, keep] = False
    draw = rng.random(tokens.audio_mask.shape) < mask_ratio
    audio_mask = (tokens.audio_mask | draw) & ~pos_mask
    for b in np.flatnonzero(audio_mask.all(axis=1)):
        keep = int(rng.integers(tokens.n_mics))
        log.info("scene %d: every audio token masked, keeping microphone %d", b, keep)
        audio_mask[b, keep] = False
    return replace(tokens, audio_mask=audio_mask, pos_mask=pos_mask)
