"""Three-stream localizer.

Acoustic stream: frozen audio embeddings (precomputed, see ``encoder``).
Coordinate stream: position encoder (2-layer MLP) and TDOA encoder (1-layer MLP)
over the filterbank- and coherence-weighted correlation feature.
Joint stream: audio-to-position cross-attention, sparse cross-attention with the
TDOA token, masked transformer encoder/decoder, audio inverse mapper, and a
second sparse cross-attention feeding the position decoder.

Token layout along axis 1: ``M`` microphone tokens, then either ``K`` learned
source queries or, when source positions are known, one anchor token per source.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import Tensor, as_tensor, concat, gelu, where
from .config import ModelConfig
from .data import TokenSet
from .layers import MLP, LayerNorm, Linear, Module, MultiHeadAttention, TransformerBlock


@dataclass
class ModelOutput:
    s_emb_hat: Tensor        # (B, T, d) reconstructed audio embeddings
    r_emb_hat: Tensor        # (B, T, d) reconstructed coordinate embeddings
    audio_hat: Tensor        # (B, M, N)
    positions: Tensor        # (B, T, 3) metres, one per token
    n_mics: int
    n_queries: int

    @property
    def mic_positions(self) -> Tensor:
        return self.positions[:, :self.n_mics]

    @property
    def source_positions(self) -> Tensor:
        return self.positions[:, self.n_mics:self.n_mics + self.n_queries]


class SslModel(Module):
    def __init__(self, config: ModelConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        d, h = config.embed_dim, config.hidden
        P = config.filterbank_size
        self.filter_weights = Tensor(np.full(P, 1.0 / P), requires_grad=True)
        self.position_encoder = MLP([3, h, d], rng)
        self.tdoa_encoder = Linear(config.lag_count, d, rng)
        self.a2p_attention = MultiHeadAttention(d, config.num_heads, rng)
        self.fuse_norm = LayerNorm(d)
        self.source_queries = Tensor(rng.normal(0.0, 1.0, (config.num_sources, d)), requires_grad=True)
        self.source_anchor = Tensor(rng.normal(0.0, 1.0, d), requires_grad=True)
        self.mask_audio = Tensor(rng.normal(0.0, 1.0, d), requires_grad=True)
        self.mask_position = Tensor(rng.normal(0.0, 1.0, d), requires_grad=True)
        self.joint_attention = MultiHeadAttention(d, config.num_heads, rng, top_t=config.top_t)
        self.joint_norm = LayerNorm(d)
        self.encoder_blocks = [TransformerBlock(d, config.num_heads, rng, config.ffn_mult)
                               for _ in range(config.num_blocks)]
        self.decoder_blocks = [TransformerBlock(d, config.num_heads, rng, config.ffn_mult)
                               for _ in range(config.num_decoder_blocks)]
        self.audio_head = Linear(d, d, rng)
        self.coord_head = Linear(d, d, rng)
        self.audio_inverse_mapper = MLP([d, h, config.n_samples], rng)
        self.audio_inverse_mapper.layers[-1].weight.data *= 0.01
        self.output_attention = MultiHeadAttention(d, config.num_heads, rng, top_t=config.top_t)
        self.output_norm = LayerNorm(d)
        self.position_decoder = MLP([d, h, 3], rng)
        room = config.room
        self._center = room.center
        self._half = 0.5 * room.size

    # --- streams -------------------------------------------------------------
    def encode_position(self, positions):
        """Position embedding of metric coordinates (..., 3) -> (..., d)."""
        normalized = (as_tensor(positions) - self._center) * (1.0 / self._half)
        return self.position_encoder(normalized)

    def weighted_tdoa(self, tdoa_bank):
        """Combine per-filter aggregates with the trainable filter weights -> (B, L)."""
        bank = as_tensor(tdoa_bank)
        return (bank * self.filter_weights.reshape(1, -1, 1)).sum(axis=1)

    def encode_tdoa(self, f_w):
        """One-layer MLP on the weighted TDOA feature: GELU(W f + b)."""
        return gelu(self.tdoa_encoder(f_w))

    def cross_attention(self, s_emb, p_emb):
        return self.a2p_attention(s_emb, p_emb)

    def fuse_residual(self, f_a2p, s_emb):
        return self.fuse_norm(s_emb + f_a2p)

    def sparse_cross_attention(self, attention: MultiHeadAttention, queries_from, r_emb, top_t=None):
        """Queries attend to the token set itself plus the TDOA token, keeping the top-T weights."""
        keys = concat([queries_from, r_emb.reshape(r_emb.shape[0], 1, -1)], axis=1)
        return attention(queries_from, keys, top_t)

    def masked_encode_decode(self, f_joint):
        x = f_joint
        for block in self.encoder_blocks:
            x = block(x)
        for block in self.decoder_blocks:
            x = block(x)
        return self.audio_head(x), self.coord_head(x)

    def decode_positions(self, r_emb_hat, r_emb):
        z = self.output_norm(r_emb_hat + self.sparse_cross_attention(self.output_attention, r_emb_hat, r_emb))
        return self.position_decoder(z) * self._half + self._center

    # --- full pass -----------------------------------------------------------
    def forward(self, tokens: TokenSet) -> ModelOutput:
        cfg = self.config
        B, M = tokens.audio_mask.shape
        d = cfg.embed_dim
        audio_mask = tokens.audio_mask[..., None]
        pos_mask = tokens.pos_mask[..., None]

        s_emb = where(audio_mask, self.mask_audio.reshape(1, 1, d), as_tensor(tokens.audio_emb))
        p_emb = where(pos_mask, self.mask_position.reshape(1, 1, d), self.encode_position(tokens.mic_pos))

        f_fuse = self.fuse_residual(self.cross_attention(s_emb, p_emb), s_emb)
        mic_tokens = f_fuse + p_emb

        zeros = Tensor(np.zeros((B, 1, 1)))
        if tokens.known_sources is not None:
            anchors = self.encode_position(tokens.known_sources) + self.source_anchor.reshape(1, 1, d)
            extra, n_queries = anchors, 0
        else:
            extra = zeros + self.source_queries.reshape(1, cfg.num_sources, d)
            n_queries = cfg.num_sources
        x = concat([mic_tokens, extra], axis=1)

        r_emb = self.encode_tdoa(self.weighted_tdoa(tokens.tdoa_bank))
        f_joint = self.joint_norm(x + self.sparse_cross_attention(self.joint_attention, x, r_emb))

        s_hat, r_hat = self.masked_encode_decode(f_joint)
        audio_hat = self.audio_inverse_mapper(s_hat[:, :M])
        positions = self.decode_positions(r_hat, r_emb)
        return ModelOutput(s_hat, r_hat, audio_hat, positions, M, n_queries)

    __call__ = forward
