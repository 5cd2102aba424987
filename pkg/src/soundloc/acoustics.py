"""Shoebox room simulation: image-source impulse responses and noisy mixtures.

A scene is a rectangular room with one corner at the origin, a set of
omnidirectional microphones and a set of point sources.  Each microphone
records the sum of every source signal convolved with the corresponding room
impulse response, plus i.i.d. Gaussian sensor noise.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import fftconvolve, lfilter

from .errors import DegenerateGeometryError, GeometryError, SamplingError, ShapeError

SIGNAL_KINDS = ("white_noise", "tone", "speech_like_ar")

# Wall order used everywhere: (x=0, x=Lx, y=0, y=Ly, z=0, z=Lz).
WALLS = ("x0", "x1", "y0", "y1", "z0", "z1")


@dataclass(frozen=True)
class RoomSpec:
    dimensions: tuple = (7.0, 8.0, 2.0)
    wall_absorption: tuple = (0.5,) * 6
    speed_of_sound: float = 343.0
    sample_rate: int = 16000
    max_reflection_order: int = 1

    def __post_init__(self):
        dims = tuple(float(d) for d in self.dimensions)
        absorption = self.wall_absorption
        if np.isscalar(absorption):
            absorption = (absorption,) * 6
        absorption = tuple(float(a) for a in absorption)
        object.__setattr__(self, "dimensions", dims)
        object.__setattr__(self, "wall_absorption", absorption)
        if len(dims) != 3 or min(dims) <= 0:
            raise GeometryError(f"room dimensions must be 3 positive values, got {dims}")
        if len(absorption) != 6 or not all(0.0 <= a <= 1.0 for a in absorption):
            raise ValueError(f"wall_absorption must be 6 values in [0, 1], got {absorption}")
        if self.sample_rate <= 0 or self.speed_of_sound <= 0:
            raise ValueError("sample_rate and speed_of_sound must be positive")
        if int(self.max_reflection_order) != self.max_reflection_order or self.max_reflection_order < 0:
            raise ValueError("max_reflection_order must be a non-negative integer")

    @property
    def size(self) -> np.ndarray:
        return np.asarray(self.dimensions)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * self.size

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.size))

    def reflection_coefficients(self) -> np.ndarray:
        """Pressure reflection coefficients, shape (3, 2): [axis, near/far wall]."""
        beta = np.sqrt(1.0 - np.asarray(self.wall_absorption))
        return beta.reshape(3, 2)

    def contains(self, point, margin: float = 0.0) -> bool:
        p = np.asarray(point, dtype=float)
        return bool(np.all(p > margin) and np.all(p < self.size - margin))

    def to_dict(self) -> dict:
        return {
            "dimensions": list(self.dimensions),
            "wall_absorption": list(self.wall_absorption),
            "speed_of_sound": self.speed_of_sound,
            "sample_rate": self.sample_rate,
            "max_reflection_order": self.max_reflection_order,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RoomSpec":
        return cls(
            dimensions=tuple(d["dimensions"]),
            wall_absorption=tuple(d["wall_absorption"]),
            speed_of_sound=d["speed_of_sound"],
            sample_rate=d["sample_rate"],
            max_reflection_order=d["max_reflection_order"],
        )


@dataclass(frozen=True)
class MicSpec:
    position: tuple
    known_position: bool = True
    id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))


@dataclass(eq=False)
class SourceSpec:
    position: tuple
    signal: np.ndarray
    kind: str = "white_noise"

    def __post_init__(self):
        self.position = tuple(float(v) for v in self.position)
        self.signal = np.asarray(self.signal)
        if self.kind not in SIGNAL_KINDS:
            raise ValueError(f"unknown signal kind {self.kind!r}")
        if self.signal.ndim != 1 or self.signal.size == 0:
            raise ShapeError("source signal must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(self.signal)):
            raise ValueError("source signal must be finite")

    def __eq__(self, other):
        if not isinstance(other, SourceSpec):
            return NotImplemented
        return (
            self.position == other.position
            and self.kind == other.kind
            and self.signal.dtype == other.signal.dtype
            and np.array_equal(self.signal, other.signal)
        )


@dataclass
class ImpulseResponse:
    taps: np.ndarray
    source_id: int = 0
    mic_id: int = 0


@dataclass
class Scene:
    """Geometry and source content of a scene, before rendering."""

    room: RoomSpec
    mics: list
    sources: list

    @property
    def mic_positions(self) -> np.ndarray:
        return np.array([m.position for m in self.mics], dtype=float).reshape(-1, 3)

    @property
    def source_positions(self) -> np.ndarray:
        return np.array([s.position for s in self.sources], dtype=float).reshape(-1, 3)

    @property
    def known_mask(self) -> np.ndarray:
        return np.array([m.known_position for m in self.mics], dtype=bool)


@dataclass(eq=False)
class SceneRecording:
    channels: np.ndarray
    noise_std: float
    room: RoomSpec
    mics: list
    sources: list
    rng_seed: int

    @property
    def scene(self) -> Scene:
        return Scene(self.room, list(self.mics), list(self.sources))

    @property
    def mic_positions(self) -> np.ndarray:
        return self.scene.mic_positions

    @property
    def source_positions(self) -> np.ndarray:
        return self.scene.source_positions

    @property
    def known_mask(self) -> np.ndarray:
        return self.scene.known_mask

    @property
    def n_samples(self) -> int:
        return self.channels.shape[1]

    def as_float32(self) -> "SceneRecording":
        """Copy with every sample block stored as float32 (the on-disk precision)."""
        return replace(
            self,
            channels=self.channels.astype(np.float32),
            sources=[replace(s, signal=s.signal.astype(np.float32)) for s in self.sources],
        )

    def __eq__(self, other):
        if not isinstance(other, SceneRecording):
            return NotImplemented
        return (
            self.channels.dtype == other.channels.dtype
            and np.array_equal(self.channels, other.channels)
            and self.noise_std == other.noise_std
            and self.room == other.room
            and list(self.mics) == list(other.mics)
            and list(self.sources) == list(other.sources)
            and self.rng_seed == other.rng_seed
        )


def _check_inside(room: RoomSpec, point, what: str) -> np.ndarray:
    p = np.asarray(point, dtype=float)
    if p.shape != (3,):
        raise ShapeError(f"{what} must be a 3-vector, got shape {p.shape}")
    if not room.contains(p):
        raise GeometryError(f"{what} {p.tolist()} is not strictly inside room {room.dimensions}")
    return p


def image_sources(room: RoomSpec, source) -> tuple:
    """Enumerate image positions and their reflection gains up to the room's order.

    Returns
    -------
    positions : ndarray (n_images, 3)
    gains : ndarray (n_images,)
        Product of the wall reflection coefficients met along each path.
    orders : ndarray (n_images,)
    """
    order = int(room.max_reflection_order)
    size = room.size
    beta = room.reflection_coefficients()
    src = np.asarray(source, dtype=float)
    rng = range(-((order + 1) // 2) - 1, (order + 1) // 2 + 2)
    positions, gains, orders = [], [], []
    for n in itertools.product(rng, repeat=3):
        n = np.asarray(n)
        for p in itertools.product((0, 1), repeat=3):
            p = np.asarray(p)
            # Hits on the wall at 0 and on the wall at L along each axis.
            hits_near = np.abs(n - p)
            hits_far = np.abs(n)
            total = int(hits_near.sum() + hits_far.sum())
            if total > order:
                continue
            positions.append((1 - 2 * p) * src + 2 * n * size)
            gains.append(float(np.prod(beta[:, 0] ** hits_near * beta[:, 1] ** hits_far)))
            orders.append(total)
    idx = np.lexsort((np.arange(len(orders)), orders))
    return np.asarray(positions)[idx], np.asarray(gains)[idx], np.asarray(orders)[idx]


def _sinc_kernel(frac_delay: float, half_width: int) -> np.ndarray:
    n = np.arange(-half_width, half_width + 1)
    t = n - frac_delay
    window = 0.5 * (1.0 + np.cos(np.pi * t / (half_width + 1)))
    return np.sinc(t) * window


def _taps_from_images(room: RoomSpec, positions: np.ndarray, gains: np.ndarray, rcv: np.ndarray,
                      interpolation: str, sinc_half_width: int) -> np.ndarray:
    dist = np.linalg.norm(positions - rcv, axis=1)
    delays = dist / room.speed_of_sound * room.sample_rate
    amps = gains / (4.0 * np.pi * dist)
    if interpolation == "round":
        idx = np.rint(delays).astype(int)
        taps = np.zeros(idx.max() + 1)
        np.add.at(taps, idx, amps)
        return taps
    base = np.floor(delays).astype(int)
    taps = np.zeros(base.max() + sinc_half_width + 2)
    for b, d, a in zip(base, delays, amps):
        kern = _sinc_kernel(d - b, sinc_half_width)
        lo = b - sinc_half_width
        if lo < 0:
            kern = kern[-lo:]
            lo = 0
        taps[lo:lo + kern.size] += a * kern
    return taps


def generate_rir(room: RoomSpec, source, mic, interpolation: str = "round",
                 sinc_half_width: int = 20, source_id: int = 0, mic_id: int = 0) -> ImpulseResponse:
    """Image-source room impulse response from ``source`` to ``mic``.

    Each image contributes ``gain / (4 pi d)`` at delay ``d / c * fs`` samples,
    rounded to the nearest sample (``interpolation="round"``) or spread with a
    Hann-windowed sinc (``"sinc"``).
    """
    src = _check_inside(room, source, "source")
    rcv = _check_inside(room, mic, "mic")
    if np.linalg.norm(src - rcv) < 1e-3:
        raise DegenerateGeometryError("source and microphone coincide (distance < 1 mm)")
    if interpolation not in ("round", "sinc"):
        raise ValueError(f"unknown interpolation mode {interpolation!r}")
    positions, gains, _ = image_sources(room, src)
    taps = _taps_from_images(room, positions, gains, rcv, interpolation, sinc_half_width)
    return ImpulseResponse(taps=taps, source_id=source_id, mic_id=mic_id)


def make_source_signal(kind: str, n_samples: int, rng: np.random.Generator,
                       sample_rate: int = 16000) -> np.ndarray:
    """Source excitation of the requested kind with unit expected power."""
    if kind == "white_noise":
        return rng.standard_normal(n_samples)
    if kind == "tone":
        freq = rng.uniform(200.0, 2000.0)
        phase = rng.uniform(0.0, 2 * np.pi)
        t = np.arange(n_samples) / sample_rate
        return np.sqrt(2.0) * np.sin(2 * np.pi * freq * t + phase)
    if kind == "speech_like_ar":
        # Two resonances (formant-like poles) driven by white noise.
        poles = []
        for lo, hi in ((300.0, 900.0), (1000.0, 2500.0)):
            f = rng.uniform(lo, hi)
            r = rng.uniform(0.9, 0.97)
            w = 2 * np.pi * f / sample_rate
            poles += [r * np.exp(1j * w), r * np.exp(-1j * w)]
        a = np.real(np.poly(poles))
        burn = 512
        x = lfilter([1.0], a, rng.standard_normal(n_samples + burn))[burn:]
        return x / np.std(x)
    raise ValueError(f"unknown signal kind {kind!r}")


def render_mixture(room: RoomSpec, mics, sources, noise_std: float = 0.0, seed: int = 0,
                   interpolation: str = "round", n_samples: int | None = None) -> SceneRecording:
    """Render every microphone channel as the noisy sum of convolved sources.

    ``channel_m = sum_k (h_mk * s_k)[:N] + w_m`` with ``w_m ~ N(0, noise_std^2)``
    drawn from ``numpy.random.default_rng(seed)``.  ``n_samples`` is only needed
    when there are no sources to take N from.
    """
    mics = list(mics)
    sources = list(sources)
    if not mics:
        raise ShapeError("at least one microphone is required")
    if noise_std < 0:
        raise ValueError("noise_std must be non-negative")
    lengths = {s.signal.size for s in sources}
    if len(lengths) > 1:
        raise ShapeError(f"source signals have mismatched lengths {sorted(lengths)}")
    if sources:
        n = lengths.pop()
        if n_samples is not None and n_samples != n:
            raise ShapeError(f"n_samples={n_samples} disagrees with source length {n}")
    elif n_samples is None:
        raise ShapeError("n_samples is required when there are no sources")
    else:
        n = int(n_samples)

    channels = np.zeros((len(mics), n))
    for k, src in enumerate(sources):
        sig = np.asarray(src.signal, dtype=float)
        spos = _check_inside(room, src.position, "source")
        images = image_sources(room, spos)
        for m, mic in enumerate(mics):
            rcv = _check_inside(room, mic.position, "mic")
            if np.linalg.norm(spos - rcv) < 1e-3:
                raise DegenerateGeometryError("source and microphone coincide (distance < 1 mm)")
            if interpolation not in ("round", "sinc"):
                raise ValueError(f"unknown interpolation mode {interpolation!r}")
            taps = _taps_from_images(room, images[0], images[1], rcv, interpolation, 20)
            channels[m] += fftconvolve(sig, taps)[:n]
    rng = np.random.default_rng(seed)
    if noise_std > 0:
        channels += noise_std * rng.standard_normal(channels.shape)
    return SceneRecording(channels=channels, noise_std=float(noise_std), room=room, mics=mics,
                          sources=sources, rng_seed=int(seed))


def _sample_points(room: RoomSpec, count: int, rng: np.random.Generator, taken: list,
                   margin: float, separation: float, max_tries: int) -> list:
    lo = np.full(3, margin)
    hi = room.size - margin
    if np.any(hi <= lo):
        raise SamplingError(f"room {room.dimensions} too small for a {margin} m wall margin")
    points = []
    for _ in range(count):
        for _ in range(max_tries):
            p = rng.uniform(lo, hi)
            if all(np.linalg.norm(p - q) >= separation for q in taken + points):
                points.append(p)
                break
        else:
            raise SamplingError(
                f"could not place point {len(points) + 1}/{count} after {max_tries} tries")
    return points


def sample_scene(room: RoomSpec, M: int, K: int, U: int = 0, seed: int = 0,
                 n_samples: int = 4096, signal_kind: str = "white_noise",
                 margin: float = 0.10, separation: float = 0.10, max_tries: int = 1000) -> Scene:
    """Draw a random scene: ``M`` microphones (``U`` of them faulty) and ``K`` sources.

    Positions are uniform inside the room with ``margin`` from every wall and at
    least ``separation`` between any two objects. ``signal_kind="mixed"`` draws
    a kind per source.
    """
    if M < 1 or K < 1 or not 0 <= U <= M:
        raise ValueError(f"need M >= 1, K >= 1, 0 <= U <= M; got M={M}, K={K}, U={U}")
    rng = np.random.default_rng(seed)
    mic_pos = _sample_points(room, M, rng, [], margin, separation, max_tries)
    src_pos = _sample_points(room, K, rng, mic_pos, margin, separation, max_tries)
    faulty = set(rng.choice(M, size=U, replace=False).tolist()) if U else set()
    mics = [MicSpec(tuple(p), known_position=i not in faulty, id=i) for i, p in enumerate(mic_pos)]
    sources = []
    for p in src_pos:
        kind = rng.choice(SIGNAL_KINDS) if signal_kind == "mixed" else signal_kind
        sig = make_source_signal(str(kind), n_samples, rng, room.sample_rate)
        sources.append(SourceSpec(tuple(p), sig, str(kind)))
    return Scene(room=room, mics=mics, sources=sources)
