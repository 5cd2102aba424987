"""Classical TDOA localization: trilateration, linearized least squares, damped Gauss-Newton.

Delay convention matches :func:`soundloc.features.estimate_tdoa`: ``delays[m]``
is ``t_m - t_ref`` in seconds, so ``c * delays[m] = |x - r_m| - |x - r_ref|``.
"""
from __future__ import annotations


import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    ConfigError, DegenerateGeometryError, GeometryError, InsufficientDataError, NoSolutionError,
)
from .features import default_tau_max, estimate_tdoa, gcc_phat

log = logging.getLogger(__name__)


@dataclass
class TdoaMeasurementSet:
    """Reference-relative delays for one source.

    ``slack`` (metres) bounds how far ``|c * delay|`` may exceed the distance
    between a microphone and the reference before the set is rejected as
    unphysical.
    """

    mic_positions: np.ndarray
    delays: np.ndarray
    reference: int = 0
    noise_std: float = 1.0 / 16000.0
    speed_of_sound: float = 343.0
    slack: float = 1e-6

    def __post_init__(self):
        self.mic_positions = np.asarray(self.mic_positions, dtype=float)
        self.delays = np.asarray(self.delays, dtype=float).reshape(-1)
        if self.mic_positions.ndim != 2 or self.mic_positions.shape[1] != 3:
            raise GeometryError("mic_positions must have shape (M, 3)")
        if self.delays.size != self.mic_positions.shape[0]:
            raise GeometryError("one delay per microphone is required")
        if not 0 <= self.reference < self.delays.size:
            raise GeometryError(f"reference {self.reference} out of range")
        if self.delays[self.reference] != 0.0:
            raise GeometryError("the reference delay must be exactly 0")
        if not (np.all(np.isfinite(self.delays)) and np.all(np.isfinite(self.mic_positions))):
            raise GeometryError("delays and positions must be finite")
        if self.noise_std <= 0:
            raise ConfigError("noise_std must be positive")
        excess = np.abs(self.range_differences) - self.baselines
        if np.any(excess > self.slack):
            bad = int(np.argmax(excess))
            raise GeometryError(f"delay of microphone {bad} exceeds its baseline by {excess[bad]:.3g} m")

    @property
    def n_mics(self) -> int:
        return self.delays.size

    @property
    def baselines(self) -> np.ndarray:
        return np.linalg.norm(self.mic_positions - self.mic_positions[self.reference], axis=1)

    @property
    def range_differences(self) -> np.ndarray:
        return self.speed_of_sound * self.delays

    @property
    def others(self) -> np.ndarray:
        return np.delete(np.arange(self.n_mics), self.reference)

    @classmethod
    def from_source(cls, mic_positions, source, reference: int = 0, speed_of_sound: float = 343.0,
                    **kwargs) -> "TdoaMeasurementSet":
        """Noiseless analytic delays for a point source."""
        mics = np.asarray(mic_positions, dtype=float)
        dist = np.linalg.norm(mics - np.asarray(source, dtype=float), axis=1)
        delays = (dist - dist[reference]) / speed_of_sound
        delays[reference] = 0.0
        return cls(mics, delays, reference, speed_of_sound=speed_of_sound, **kwargs)


@dataclass
class SolverConfig:
    max_iterations: int = 100
    tol: float = 1e-9                  # metres; stop when the accepted step is shorter
    robust_loss: str = "none"          # "none" | "huber"
    huber_delta: float | None = None   # seconds; default 2 * noise_std
    initializations: int = 5           # random restarts when the linear initialization fails
    seed: int = 0

    def __post_init__(self):
        if self.tol <= 0:
            raise ConfigError("tol must be positive")
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be >= 1")
        if self.robust_loss not in ("none", "huber"):
            raise ConfigError("robust_loss must be 'none' or 'huber'")
        if self.huber_delta is not None and self.huber_delta <= 0:
            raise ConfigError("huber_delta must be positive")
        if self.initializations < 0:
            raise ConfigError("initializations must be >= 0")


@dataclass
class SolveResult:
    position: np.ndarray
    residual_rms: float                # seconds
    converged: bool
    iterations_used: int
    weights: np.ndarray | None = None  # per non-reference measurement (robust mode)
    history: list = field(default_factory=list)   # objective at each accepted iterate


# --- closed form ------------------------------------------------------------

def _sphere_pair_roots(a, r):
    """Both intersections of three spheres (centres ``a``, radii ``r``)."""
    ex = a[1] - a[0]
    d = np.linalg.norm(ex)
    ex = ex / d
    i = ex @ (a[2] - a[0])
    ey = a[2] - a[0] - i * ex
    if np.linalg.norm(ey) < 1e-12 * max(1.0, d):
        raise DegenerateGeometryError("three collinear anchors")
    ey /= np.linalg.norm(ey)
    ez = np.cross(ex, ey)
    j = ey @ (a[2] - a[0])
    x = (r[0] ** 2 - r[1] ** 2 + d ** 2) / (2 * d)
    y = (r[0] ** 2 - r[2] ** 2 + i ** 2 + j ** 2) / (2 * j) - i * x / j
    z2 = r[0] ** 2 - x ** 2 - y ** 2
    scale = max(1.0, float(np.max(r)) ** 2)
    if z2 < -1e-9 * scale:
        raise NoSolutionError("ranges from three anchors do not intersect", residual=float(-z2))
    z = np.sqrt(max(z2, 0.0))
    base = a[0] + x * ex + y * ey
    return np.stack([base + z * ez, base - z * ez])


def trilaterate_closed_form(ranges, anchors, room=None, tol: float = 1e-8) -> np.ndarray:
    """Position from absolute distances to ``D + 1 = 4`` anchors.

    Differencing the sphere equations against anchor 0 gives a 3x3 linear
    system; the remaining equation is the consistency check, and a residual
    above ``tol * (1 + max range)`` raises :class:`NoSolutionError`.

    With only three anchors the spheres meet in two mirror-image roots. The
    root inside ``room`` is returned when exactly one qualifies; otherwise both
    come back stacked as a (2, 3) array.
    """
    a = np.asarray(anchors, dtype=float)
    r = np.asarray(ranges, dtype=float).reshape(-1)
    if a.ndim != 2 or a.shape[1] != 3 or a.shape[0] != r.size or r.size not in (3, 4):
        raise GeometryError("need 3 or 4 anchors in 3-D with one range each")
    if np.any(r < 0) or not np.all(np.isfinite(r)):
        raise GeometryError("ranges must be finite and non-negative")
    if r.size == 3:
        roots = _sphere_pair_roots(a, r)
        if room is not None:
            inside = [room.contains(p) for p in roots]
            if sum(inside) == 1:
                return roots[inside.index(True)]
        log.info("two-root trilateration: returning both roots")
        return roots
    A = 2.0 * (a[1:] - a[0])
    if abs(np.linalg.det(A)) < 1e-10 * max(1.0, np.abs(A).max()) ** 3:
        raise DegenerateGeometryError("anchors are coplanar")
    b = (np.sum(a[1:] ** 2, axis=1) - np.sum(a[0] ** 2)) - (r[1:] ** 2 - r[0] ** 2)
    x = np.linalg.solve(A, b)
    residual = float(np.max(np.abs(np.linalg.norm(a - x, axis=1) - r)))
    if residual > tol * (1.0 + r.max()):
        raise NoSolutionError(f"inconsistent ranges, residual {residual:.3g} m", residual=residual)
    return x


# --- linearized least squares ------------------------------------------------

def lls_squared_range(meas: TdoaMeasurementSet) -> SolveResult:
    """Least squares on the squared-range linearization.

    With ``y = x - r_ref``, ``D = |y|`` and range differences ``d_m``:
    ``2 (r_m - r_ref) . y + 2 d_m D = |r_m - r_ref|^2 - d_m^2``.
    Unknowns ``(y, D)``; the minimum-norm solution is taken so that an all-zero
    delay column (source equidistant from every microphone) stays solvable.
    """
    if meas.n_mics < 5:
        raise DegenerateGeometryError(f"3-D TDOA needs >= 5 microphones, got {meas.n_mics}")
    ref = meas.mic_positions[meas.reference]
    idx = meas.others
    rel = meas.mic_positions[idx] - ref
    d = meas.range_differences[idx]
    A = np.column_stack([2.0 * rel, 2.0 * d])
    b = np.sum(rel ** 2, axis=1) - d ** 2
    if np.linalg.matrix_rank(rel, tol=1e-9 * max(1.0, np.abs(rel).max())) < 3:
        raise DegenerateGeometryError("microphone geometry is rank deficient")
    sol, *_ = np.linalg.lstsq(A, b, rcond=None)
    pos = ref + sol[:3]
    res = _residuals(meas, pos)
    return SolveResult(pos, float(np.sqrt(np.mean(res ** 2))), True, 1)


# --- damped Gauss-Newton -----------------------------------------------------

def _residuals(meas: TdoaMeasurementSet, x: np.ndarray) -> np.ndarray:
    """Predicted minus measured delay for every non-reference microphone, seconds."""
    dist = np.linalg.norm(meas.mic_positions - x, axis=1)
    idx = meas.others
    return (dist[idx] - dist[meas.reference]) / meas.speed_of_sound - meas.delays[idx]


def _jacobian(meas: TdoaMeasurementSet, x: np.ndarray) -> np.ndarray:
    diff = x - meas.mic_positions
    dist = np.maximum(np.linalg.norm(diff, axis=1, keepdims=True), 1e-12)
    unit = diff / dist
    return (unit[meas.others] - unit[meas.reference]) / meas.speed_of_sound


def _huber_weights(res: np.ndarray, delta: float) -> np.ndarray:
    a = np.abs(res)
    return np.where(a <= delta, 1.0, delta / np.maximum(a, 1e-300))


def _objective(res: np.ndarray, delta: float | None) -> float:
    if delta is None:
        return float(0.5 * np.sum(res ** 2))
    a = np.abs(res)
    return float(np.sum(np.where(a <= delta, 0.5 * a ** 2, delta * (a - 0.5 * delta))))


def gauss_newton_refine(meas: TdoaMeasurementSet, initial, config: SolverConfig | None = None) -> SolveResult:
    """Levenberg-damped Gauss-Newton on the delay residuals.

    A step is accepted only when the objective (squared error, or the Huber
    loss in robust mode, where weights are refreshed every iteration) does not
    increase; rejected steps raise the damping. Converged means the last
    accepted step was shorter than ``config.tol``.
    """
    cfg = config or SolverConfig()
    x = np.asarray(initial, dtype=float).reshape(3).copy()
    if not np.all(np.isfinite(x)):
        raise GeometryError("initial position must be finite")
    delta = None
    if cfg.robust_loss == "huber":
        delta = cfg.huber_delta if cfg.huber_delta is not None else 2.0 * meas.noise_std
    # work in metres of range difference for conditioning
    c = meas.speed_of_sound
    res = _residuals(meas, x)
    cost = _objective(res, delta)
    history = [cost]
    mu, converged, it = 1e-3, False, 0
    for it in range(1, cfg.max_iterations + 1):
        w = np.ones_like(res) if delta is None else _huber_weights(res, delta)
        J = _jacobian(meas, x) * c
        r = res * c
        A = J.T @ (w[:, None] * J)
        g = J.T @ (w * r)
        scale = np.trace(A) / 3.0
        if not np.isfinite(scale) or scale <= 0:
            log.info("Gauss-Newton: singular normal equations at iteration %d", it)
            break
        accepted = False
        while mu < 1e12:
            try:
                step = -np.linalg.solve(A + mu * scale * np.eye(3), g)
            except np.linalg.LinAlgError:
                mu *= 10.0
                continue
            if np.linalg.norm(step) < cfg.tol:
                converged = True
                break
            new_res = _residuals(meas, x + step)
            new_cost = _objective(new_res, delta)
            if new_cost <= cost:
                x, res, cost = x + step, new_res, new_cost
                history.append(cost)
                mu = max(mu / 3.0, 1e-12)
                accepted = True
                break
            mu *= 10.0
        if converged or not accepted:
            break
    weights = None if delta is None else _huber_weights(res, delta)
    return SolveResult(x, float(np.sqrt(np.mean(res ** 2))), converged, it, weights, history)


# --- end to end ----------------------------------------------------------------

def measure_tdoas(channels, mic_positions, reference: int = 0, tau_max: int | None = None,
                  room=None, sample_rate: float = 16000.0, speed_of_sound: float = 343.0,
                  clip: bool = True) -> TdoaMeasurementSet:
    """GCC-PHAT delays of every microphone against ``reference``.

    Integer-lag estimates can overshoot a baseline by up to one sample; with
    ``clip`` such delays are clipped onto the physical bound.
    """
    x = np.asarray(channels, dtype=float)
    mics = np.asarray(mic_positions, dtype=float)
    if tau_max is None:
        tau_max = default_tau_max(room) if room is not None else min(x.shape[1] - 1, 512)
    tau_max = min(tau_max, x.shape[1] - 1)
    delays = np.zeros(x.shape[0])
    for m in range(x.shape[0]):
        if m != reference:
            delays[m] = estimate_tdoa(gcc_phat(x[m], x[reference], tau_max, sample_rate, (m, reference)))
    if clip:
        bound = np.linalg.norm(mics - mics[reference], axis=1) / speed_of_sound
        delays = np.clip(delays, -bound, bound)
    return TdoaMeasurementSet(mics, delays, reference, noise_std=1.0 / sample_rate,
                              speed_of_sound=speed_of_sound, slack=1e-9)


def localize_pipeline(recording, config: SolverConfig | None = None, reference: int = 0) -> SolveResult:
    """GCC-PHAT, linear initialization and Gauss-Newton refinement on one recording.

    Only microphones with known positions take part. When the linear solve is
    degenerate or its refinement leaves the room, ``config.initializations``
    random in-room starts are refined as well and the in-room result with the
    lowest objective wins. If none stays inside, the best estimate is clipped
    onto the room box and reported as not converged.
    """
    cfg = config or SolverConfig()
    room = recording.room
    known = np.flatnonzero(recording.known_mask)
    if known.size < 5:
        raise InsufficientDataError(f"need >= 5 microphones with known positions, got {known.size}")
    if reference not in known:
        raise GeometryError(f"reference microphone {reference} has no known position")
    ref_local = int(np.flatnonzero(known == reference)[0])
    meas = measure_tdoas(np.asarray(recording.channels)[known], recording.mic_positions[known], ref_local,
                         room=room, sample_rate=room.sample_rate, speed_of_sound=room.speed_of_sound)
    best = None
    try:
        init = lls_squared_range(meas).position
        if np.all(np.isfinite(init)) and room.contains(init):
            best = gauss_newton_refine(meas, init, cfg)
        else:
            log.info("linear initialization left the room; using random restarts")
    except DegenerateGeometryError as exc:
        log.info("linear initialization failed (%s); using random restarts", exc)
    if best is None or not room.contains(best.position):
        rng = np.random.default_rng(cfg.seed)
        results = [best] if best is not None else []
        results += [gauss_newton_refine(meas, rng.uniform(0.0, 1.0, 3) * room.size, cfg)
                    for _ in range(max(1, cfg.initializations))]
        inside = [r for r in results if room.contains(r.position)]
        best = min(inside or results, key=lambda r: r.history[-1])
        if not inside:
            log.info("no refinement stayed in the room; clipping the best estimate to the walls")
            best = replace(best, position=np.clip(best.position, 0.0, room.size), converged=False)
    return best
