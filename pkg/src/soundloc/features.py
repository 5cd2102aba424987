"""Pairwise TDOA features: GCC-PHAT, filterbank GCC-PHAT, Welch coherence, ASCM.

Lag convention: a positive lag ``tau`` in ``gcc_phat(s_i, s_j)`` means the
wavefront reaches microphone ``i`` ``tau`` samples *after* microphone ``j``,
so ``estimate_tdoa`` returns ``t_i - t_j``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.fft import irfft, next_fast_len, rfft
from scipy.signal import get_window

from .errors import AlignmentError, DegenerateSignalError, InsufficientDataError, ShapeError

PHAT_FLOOR = 1e-12


@dataclass
class CorrelationFeature:
    pair: tuple
    values: np.ndarray
    lag_grid: np.ndarray
    sample_rate: float = 16000.0

    @property
    def tau_max(self) -> int:
        return int(self.lag_grid[-1])


@dataclass
class FilterBank:
    """Piecewise-linear frequency weightings applied to the PHAT cross-spectrum.

    ``knots`` are normalized frequencies in [0, 1] (1 = Nyquist) and
    ``gains[p]`` gives filter ``p``'s response at each knot; responses at FFT
    bins are linearly interpolated.
    """

    knots: np.ndarray
    gains: np.ndarray
    weights: np.ndarray
    trainable: bool = False

    def __post_init__(self):
        self.knots = np.asarray(self.knots, dtype=float)
        self.gains = np.atleast_2d(np.asarray(self.gains, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if self.gains.shape[0] < 1 or self.gains.shape[1] != self.knots.size:
            raise ShapeError("gains must have shape (P, len(knots)) with P >= 1")
        if self.weights.size != self.gains.shape[0]:
            raise ShapeError("one combination weight per filter is required")
        if not (np.all(np.isfinite(self.gains)) and np.all(self.gains >= 0)):
            raise ValueError("filter responses must be finite and non-negative")
        if np.any(np.diff(self.knots) < 0):
            raise ValueError("knots must be non-decreasing")

    @property
    def size(self) -> int:
        return self.gains.shape[0]

    def responses(self, n_bins: int) -> np.ndarray:
        """Filter gains on ``n_bins`` equally spaced bins from DC to Nyquist, shape (P, n_bins)."""
        grid = np.linspace(0.0, 1.0, n_bins)
        return np.stack([np.interp(grid, self.knots, g) for g in self.gains])

    def select(self, index: int, weight: float = 1.0) -> "FilterBank":
        return FilterBank(self.knots, self.gains[index:index + 1], [weight], self.trainable)

    @classmethod
    def allpass(cls) -> "FilterBank":
        return cls(knots=[0.0, 1.0], gains=[[1.0, 1.0]], weights=[1.0])


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


def mel_filterbank(n_filters: int = 8, sample_rate: float = 16000.0, fmin: float = 50.0,
                   fmax: float | None = None, trainable: bool = False,
                   normalize: bool = True) -> FilterBank:
    """Triangular band-pass filters with mel-spaced centres, weights 1/P.

    With ``normalize`` each filter is scaled to unit mean gain over the band
    0..Nyquist, so every per-filter PHAT correlation peaks near 1 for a clean
    delay, like plain GCC-PHAT.
    """
    nyq = sample_rate / 2.0
    fmax = nyq if fmax is None else fmax
    edges = _mel_to_hz(np.linspace(_hz_to_mel(fmin), _hz_to_mel(fmax), n_filters + 2)) / nyq
    knots = np.unique(np.concatenate([[0.0, 1.0], edges]))
    gains = np.zeros((n_filters, knots.size))
    for p in range(n_filters):
        lo, mid, hi = edges[p:p + 3]
        g = np.zeros(knots.size)
        rise = (knots >= lo) & (knots <= mid)
        fall = (knots > mid) & (knots <= hi)
        g[rise] = (knots[rise] - lo) / (mid - lo)
        g[fall] = (hi - knots[fall]) / (hi - mid)
        gains[p] = np.clip(g, 0.0, None)
    if normalize:
        dense = np.linspace(0.0, 1.0, 4097)
        gains /= np.array([np.interp(dense, knots, g).mean() for g in gains])[:, None]
    return FilterBank(knots, gains, np.full(n_filters, 1.0 / n_filters), trainable)


def dft(signal) -> np.ndarray:
    """Unitary discrete Fourier transform."""
    x = np.asarray(signal)
    if x.ndim != 1 or x.size < 1:
        raise ShapeError("dft expects a non-empty 1-D signal")
    return np.fft.fft(x, norm="ortho")


def idft(spectrum) -> np.ndarray:
    X = np.asarray(spectrum)
    if X.ndim != 1 or X.size < 1:
        raise ShapeError("idft expects a non-empty 1-D spectrum")
    return np.fft.ifft(X, norm="ortho")


def default_tau_max(room) -> int:
    """Largest physically possible delay in samples: room diagonal / c * fs."""
    return int(math.ceil(room.diagonal / room.speed_of_sound * room.sample_rate))


def lag_grid(tau_max: int) -> np.ndarray:
    return np.arange(-tau_max, tau_max + 1)


def _phat_spectra(spec_i: np.ndarray, spec_j: np.ndarray) -> np.ndarray:
    """Magnitude-normalized cross-spectrum ``S_i S_j^* / |S_i S_j^*|`` along the last axis."""
    cross = spec_i * np.conj(spec_j)
    mag = np.abs(cross)
    peak = mag.max(axis=-1, keepdims=True)
    if np.any(peak == 0):
        raise DegenerateSignalError("GCC-PHAT is undefined for an all-zero channel")
    return cross / np.maximum(mag, PHAT_FLOOR * peak)


def _crop(corr: np.ndarray, tau_max: int) -> np.ndarray:
    return np.concatenate([corr[..., corr.shape[-1] - tau_max:], corr[..., :tau_max + 1]], axis=-1)


def _check_pair(s_i, s_j, tau_max):
    s_i = np.asarray(s_i, dtype=float)
    s_j = np.asarray(s_j, dtype=float)
    if s_i.ndim != 1 or s_i.shape != s_j.shape:
        raise ShapeError(f"signals must be 1-D with equal length, got {s_i.shape} and {s_j.shape}")
    if not 0 <= tau_max < s_i.size:
        raise ValueError(f"tau_max={tau_max} must lie in [0, {s_i.size})")
    return s_i, s_j


def gcc_phat(s_i, s_j, tau_max: int, sample_rate: float = 16000.0, pair=(0, 1)) -> CorrelationFeature:
    """Generalized cross-correlation with phase transform, cropped to ``[-tau_max, tau_max]``."""
    s_i, s_j = _check_pair(s_i, s_j, tau_max)
    nfft = next_fast_len(2 * s_i.size)
    phat = _phat_spectra(rfft(s_i, nfft), rfft(s_j, nfft))
    values = _crop(irfft(phat, nfft), tau_max)
    return CorrelationFeature(tuple(pair), values, lag_grid(tau_max), float(sample_rate))


def ngcc_phat(s_i, s_j, bank: FilterBank, tau_max: int, sample_rate: float = 16000.0,
              pair=(0, 1)) -> CorrelationFeature:
    """Filterbank GCC-PHAT: ``sum_p w_p * IFFT(H_p * PHAT cross-spectrum)``."""
    s_i, s_j = _check_pair(s_i, s_j, tau_max)
    nfft = next_fast_len(2 * s_i.size)
    phat = _phat_spectra(rfft(s_i, nfft), rfft(s_j, nfft))
    per_filter = _crop(irfft(bank.responses(phat.size) * phat, nfft), tau_max)
    values = bank.weights @ per_filter
    return CorrelationFeature(tuple(pair), values, lag_grid(tau_max), float(sample_rate))


def multichannel_ngcc(channels, pairs, bank: FilterBank, tau_max: int) -> np.ndarray:
    """Per-filter PHAT correlations for many pairs at once, shape (n_pairs, P, 2*tau_max+1).

    Combining the result with ``bank.weights`` reproduces :func:`ngcc_phat`.
    """
    x = np.asarray(channels, dtype=float)
    nfft = next_fast_len(2 * x.shape[1])
    spectra = rfft(x, nfft, axis=-1)
    idx = np.asarray(pairs, dtype=int).reshape(-1, 2)
    phat = _phat_spectra(spectra[idx[:, 0]], spectra[idx[:, 1]])
    filtered = bank.responses(phat.shape[-1])[None] * phat[:, None, :]
    return _crop(irfft(filtered, nfft, axis=-1), tau_max)


def estimate_tdoa(feature: CorrelationFeature) -> float:
    """Peak lag in seconds; ties go to the smallest |lag| (then the negative one)."""
    values = np.asarray(feature.values)
    if values.size == 0:
        raise ShapeError("empty correlation feature")
    lags = np.asarray(feature.lag_grid)
    best = np.flatnonzero(values == values.max())
    pick = best[np.lexsort((lags[best], np.abs(lags[best])))[0]]
    return float(lags[pick]) / feature.sample_rate


@dataclass
class WelchSpectra:
    freqs: np.ndarray
    psd_ii: np.ndarray
    psd_jj: np.ndarray
    csd_ij: np.ndarray
    n_segments: int
    pair: tuple = (0, 1)


def _segment_spectra(x: np.ndarray, segment_len: int, step: int, window: np.ndarray) -> np.ndarray:
    n_seg = (x.shape[-1] - segment_len) // step + 1
    starts = step * np.arange(n_seg)
    frames = x[..., starts[:, None] + np.arange(segment_len)]
    return np.fft.rfft(frames * window, axis=-1)


def _one_sided_scale(n_freq: int, segment_len: int, window: np.ndarray, fs: float) -> np.ndarray:
    scale = np.full(n_freq, 2.0 / (fs * np.sum(window ** 2)))
    scale[0] /= 2.0
    if segment_len % 2 == 0:
        scale[-1] /= 2.0
    return scale


def _welch_setup(n: int, segment_len: int, overlap):
    overlap = segment_len // 2 if overlap is None else int(overlap)
    if not 1 <= segment_len <= n:
        raise ValueError(f"segment_len={segment_len} must be in [1, {n}]")
    if not 0 <= overlap < segment_len:
        raise ValueError(f"overlap={overlap} must be in [0, segment_len)")
    step = segment_len - overlap
    n_seg = (n - segment_len) // step + 1
    if n_seg < 2:
        raise InsufficientDataError(
            f"Welch averaging needs at least 2 segments, signal of {n} samples gives {n_seg}")
    return step, n_seg


def welch_psd(s_i, s_j, segment_len: int = 256, overlap: int | None = None, window: str = "hann",
              sample_rate: float = 1.0, pair=(0, 1)) -> WelchSpectra:
    """Averaged modified periodograms: auto spectra of both inputs and their cross spectrum.

    ``csd_ij`` averages ``X_i conj(X_j)`` (the conjugate of scipy.signal.csd's
    ordering), matching the GCC-PHAT lag convention.
    """
    s_i = np.asarray(s_i, dtype=float)
    s_j = np.asarray(s_j, dtype=float)
    if s_i.ndim != 1 or s_i.shape != s_j.shape:
        raise ShapeError("welch_psd expects two 1-D signals of equal length")
    step, n_seg = _welch_setup(s_i.size, segment_len, overlap)
    win = get_window(window, segment_len)
    Xi = _segment_spectra(s_i, segment_len, step, win)
    Xj = _segment_spectra(s_j, segment_len, step, win)
    scale = _one_sided_scale(Xi.shape[-1], segment_len, win, sample_rate)
    return WelchSpectra(
        freqs=np.fft.rfftfreq(segment_len, 1.0 / sample_rate),
        psd_ii=np.mean(np.abs(Xi) ** 2, axis=0) * scale,
        psd_jj=np.mean(np.abs(Xj) ** 2, axis=0) * scale,
        csd_ij=np.mean(Xi * np.conj(Xj), axis=0) * scale,
        n_segments=n_seg,
        pair=tuple(pair),
    )


@dataclass
class CoherenceProfile:
    pair: tuple
    values: np.ndarray
    psd_ii: np.ndarray
    psd_jj: np.ndarray
    csd_ij: np.ndarray
    freqs: np.ndarray = field(default=None)

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))


def _coherence_values(g_ii, g_jj, g_ij):
    eps = PHAT_FLOOR * max(float(np.max(g_ii)), float(np.max(g_jj)), np.finfo(float).tiny)
    if np.all(g_ii < eps) or np.all(g_jj < eps):
        raise DegenerateSignalError("coherence is undefined for a silent channel")
    return np.abs(g_ij) ** 2 / (np.maximum(g_ii, eps) * np.maximum(g_jj, eps))


def coherence(spectra: WelchSpectra) -> CoherenceProfile:
    """Magnitude-squared coherence ``|g_ij|^2 / (g_ii g_jj)`` per frequency bin."""
    g_ii, g_jj, g_ij = (np.asarray(a) for a in (spectra.psd_ii, spectra.psd_jj, spectra.csd_ij))
    if not (g_ii.shape == g_jj.shape == g_ij.shape):
        raise ShapeError("auto and cross spectra must share one frequency grid")
    values = _coherence_values(g_ii, g_jj, g_ij)
    return CoherenceProfile(tuple(spectra.pair), values, g_ii, g_jj, g_ij, spectra.freqs)


def multichannel_coherence(channels, pairs, segment_len: int = 256, overlap: int | None = None,
                           window: str = "hann") -> np.ndarray:
    """Coherence for many pairs, shape (n_pairs, segment_len // 2 + 1)."""
    x = np.asarray(channels, dtype=float)
    step, _ = _welch_setup(x.shape[1], segment_len, overlap)
    win = get_window(window, segment_len)
    X = _segment_spectra(x, segment_len, step, win)          # (M, n_seg, F)
    auto = np.mean(np.abs(X) ** 2, axis=1)
    idx = np.asarray(pairs, dtype=int).reshape(-1, 2)
    out = np.empty((idx.shape[0], X.shape[-1]))
    for row, (i, j) in enumerate(idx):
        cross = np.mean(X[i] * np.conj(X[j]), axis=0)
        out[row] = _coherence_values(auto[i], auto[j], cross)
    return out


@dataclass
class WeightedTdoaFeature:
    values: np.ndarray
    alpha: float
    pair_weights: np.ndarray
    pairs: list


def pair_weights(mean_coherence, alpha: float = 1.0) -> np.ndarray:
    """Per-pair scalar weights: frequency-averaged coherence raised to ``alpha``."""
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    return np.asarray(mean_coherence, dtype=float) ** alpha


def ascm_weight(features, coherences, alpha: float = 1.0, reduction: str = "sum") -> WeightedTdoaFeature:
    """Coherence-weighted aggregate of pairwise correlation features.

    ``reduction="sum"`` is the plain weighted sum; ``"mean"`` divides by the
    number of pairs.
    """
    features = list(features)
    coherences = list(coherences)
    if len(features) != len(coherences) or not features:
        raise AlignmentError(f"{len(features)} features vs {len(coherences)} coherence profiles")
    for f, c in zip(features, coherences):
        if tuple(f.pair) != tuple(c.pair):
            raise AlignmentError(f"feature pair {f.pair} does not match coherence pair {c.pair}")
    if reduction not in ("sum", "mean"):
        raise ValueError(f"unknown reduction {reduction!r}")
    weights = pair_weights([c.mean for c in coherences], alpha)
    stacked = np.stack([np.asarray(f.values, dtype=float) for f in features])
    values = weights @ stacked
    if reduction == "mean":
        values = values / len(features)
    return WeightedTdoaFeature(values, float(alpha), weights, [tuple(f.pair) for f in features])
