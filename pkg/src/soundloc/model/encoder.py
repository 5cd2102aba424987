"""Frozen audio encoder: pooled log-magnitude spectrum under a fixed orthogonal projection.

It stands in for a large pretrained audio model.  Nothing in it is trainable,
and a pretrained network with the same ``(M, N) -> (M, embed_dim)`` contract
can be dropped in instead.
"""
from __future__ import annotations

import numpy as np
from scipy.signal import get_window

LOG_FLOOR = 1e-8


class FrozenAudioEncoder:
    def __init__(self, embed_dim: int, frame: int = 256, hop: int = 128, seed: int = 1234):
        self.embed_dim = embed_dim
        self.frame = frame
        self.hop = hop
        self.window = get_window("hann", frame)
        n_bins = frame // 2 + 1
        size = max(n_bins, embed_dim)
        q, r = np.linalg.qr(np.random.default_rng(seed).standard_normal((size, size)))
        q *= np.sign(np.diag(r))
        self.projection = q[:n_bins, :embed_dim].copy()
        self.projection.setflags(write=False)

    def log_spectrum(self, audio: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(audio, dtype=float))
        n = x.shape[-1]
        if n < self.frame:
            x = np.pad(x, [(0, 0)] * (x.ndim - 1) + [(0, self.frame - n)])
            n = self.frame
        starts = self.hop * np.arange((n - self.frame) // self.hop + 1)
        frames = x[..., starts[:, None] + np.arange(self.frame)] * self.window
        mag = np.abs(np.fft.rfft(frames, axis=-1))
        return np.log(np.maximum(mag, LOG_FLOOR)).mean(axis=-2)

    def __call__(self, audio) -> np.ndarray:
        """Embed one waveform (N,) or a stack (..., N) into (..., embed_dim)."""
        audio = np.asarray(audio, dtype=float)
        emb = self.log_spectrum(audio) @ self.projection
        return emb[0] if audio.ndim == 1 else emb


def encode_audio(encoder: FrozenAudioEncoder, s_m) -> np.ndarray:
    return encoder(s_m)
