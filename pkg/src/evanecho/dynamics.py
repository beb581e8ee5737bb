"""Optical Bloch dynamics of the evanescently probed ensemble.

The ensemble is discretized into (detuning, depth) classes. Each class is
a two-level system whose Bloch vector obeys dR/dt = W x R with
W = (Omega*s*cos(phase), Omega*s*sin(phase), delta): Omega the zero-depth
Rabi frequency, s = exp(-z/(2 d_I)) the evanescent field factor at the
class depth, and delta the class detuning in the laser frame. Hard pulses
are exact axis-angle rotations (no decay during pulses); free evolution
rotates (u, v) by delta*dt and shrinks it by exp(-dt/t2); w is held except
across the storage gap of three-pulse sequences, where the stored grating
relaxes with the biexponential spin survival.

Timing convention: pulse times are quoted at pulse centroids, so the
two-pulse echo peaks at first-centroid + 2*tau. Emission is the coherent
sum over classes, weighted by lineshape and depth mass, with the same
evanescent factor applied on emission as on excitation (reciprocity);
detected intensity is its squared magnitude. Record windows start after
the last pulse; sequence builders place them around the expected echo so
the free-induction tail of the final pulse (which detection gates out in
practice) has dephased by the window start.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import ensemble as _ens
from .errors import GridWarning
from .numerics import FitResult, fit_nonlinear_least_squares
from .waveguide import ModeSolution

__all__ = [
    "Pulse",
    "RecordWindow",
    "PulseSequence",
    "BlochState",
    "EchoTrace",
    "propagate_pulse",
    "free_evolution",
    "simulate_sequence",
    "two_pulse_sequence",
    "stimulated_sequence",
    "two_pulse_echo_time",
    "stimulated_echo_time",
    "two_pulse_decay_sweep",
    "stimulated_decay_sweep",
    "two_pulse_decay_model",
    "fit_two_pulse_decay",
    "stimulated_decay_model",
    "fit_stimulated_decay",
    "TwoPulseFit",
    "StimulatedFit",
]

DEFAULT_PI_HALF_S = 3e-6
DEFAULT_PI_S = 6e-6
DEFAULT_DT_S = 0.25e-6
DEFAULT_DEAD_TIME_S = 5e-6    # detection dead time after the last pulse
DEFAULT_WINDOW_PRE_S = 20e-6  # window opens this early before the expected echo
DEFAULT_WINDOW_POST_S = 25e-6
DEFAULT_SPAN_FACTOR = 20.0    # detuning grid span in units of excitation bandwidth
DEFAULT_PEAK_THRESHOLD = 0.02
GRID_SAFETY = 1.25            # alias-horizon safety margin on the auto grid
DEAD_PATH_T2_FACTOR = 14.0    # gaps longer than this many t2 carry no coherence


@dataclass(frozen=True)
class Pulse:
    """One hard optical pulse. rabi_frequency is the peak (zero-depth)
    value in rad/s; detuning_offset shifts the pulse carrier relative to
    the laser reference (rad/s)."""

    t_start_s: float
    duration_s: float
    rabi_frequency_rad_s: float
    phase_rad: float = 0.0
    detuning_offset_rad_s: float = 0.0

    def __post_init__(self):
        if self.duration_s <= 0:
            raise ValueError("pulse duration must be > 0")
        if self.rabi_frequency_rad_s < 0:
            raise ValueError("rabi frequency must be >= 0")

    @property
    def t_end_s(self) -> float:
        return self.t_start_s + self.duration_s

    @property
    def t_centroid_s(self) -> float:
        return self.t_start_s + 0.5 * self.duration_s


@dataclass(frozen=True)
class RecordWindow:
    """Detection window [t_start, t_stop] sampled every dt seconds."""

    t_start_s: float
    t_stop_s: float
    dt_s: float

    def __post_init__(self):
        if self.dt_s <= 0:
            raise ValueError("sample spacing must be > 0")
        if self.t_stop_s <= self.t_start_s:
            raise ValueError("record window must have positive extent")

    def times(self) -> np.ndarray:
        n = int(math.floor((self.t_stop_s - self.t_start_s) / self.dt_s + 1e-9)) + 1
        return self.t_start_s + self.dt_s * np.arange(n)


@dataclass(frozen=True)
class PulseSequence:
    """Time-ordered non-overlapping pulses plus a record window that opens
    after the last pulse. grating_pairs > 1 marks an accumulated spectral
    grating; it is modeled as a single pair scaled by a contrast factor at
    emission rather than as repeated propagation."""

    pulses: tuple[Pulse, ...]
    record_window: RecordWindow
    grating_pairs: int = 1

    def __post_init__(self):
        if not self.pulses:
            raise ValueError("sequence needs at least one pulse")
        object.__setattr__(self, "pulses", tuple(self.pulses))
        for a, b in zip(self.pulses, self.pulses[1:]):
            if b.t_start_s < a.t_end_s:
                raise ValueError(
                    f"pulses overlap: one ends at {a.t_end_s} s, next starts at {b.t_start_s} s"
                )
        if self.record_window.t_start_s < self.pulses[-1].t_end_s:
            raise ValueError("record window must start after the last pulse ends")
        if int(self.grating_pairs) != self.grating_pairs or self.grating_pairs < 1:
            raise ValueError("grating_pairs must be an integer >= 1")


@dataclass(frozen=True)
class BlochState:
    """Bloch components per (detuning, depth) class. Arrays share a shape;
    scalars are fine for single-class use."""

    u: np.ndarray
    v: np.ndarray
    w: np.ndarray

    @classmethod
    def ground(cls, shape) -> "BlochState":
        z = np.zeros(shape)
        return cls(u=z.copy(), v=z.copy(), w=-np.ones(shape))

    def norm(self) -> np.ndarray:
        return np.sqrt(self.u ** 2 + self.v ** 2 + self.w ** 2)


@dataclass(frozen=True)
class EchoTrace:
    """Simulated detector record: intensity vs time plus extracted peaks
    (local maxima above a relative threshold) and any grid flags."""

    times_s: np.ndarray
    intensity: np.ndarray
    peaks: tuple[tuple[float, float], ...]
    flags: tuple[str, ...] = ()

    def dominant_peak(self) -> tuple[float, float] | None:
        if not self.peaks:
            return None
        return max(self.peaks, key=lambda p: p[1])


def _rotate(u, v, w, ax, ay, az, duration):
    """Exact rotation of Bloch vectors about the constant axis (ax, ay, az)
    by angle |axis|*duration (Rodrigues form)."""
    om = np.sqrt(ax * ax + ay * ay + az * az)
    ang = om * duration
    safe = np.where(om == 0.0, 1.0, om)
    nx, ny, nz = ax / safe, ay / safe, az / safe
    c, s = np.cos(ang), np.sin(ang)
    k = 1.0 - c
    dot = nx * u + ny * v + nz * w
    u2 = u * c + (ny * w - nz * v) * s + nx * dot * k
    v2 = v * c + (nz * u - nx * w) * s + ny * dot * k
    w2 = w * c + (nx * v - ny * u) * s + nz * dot * k
    idle = om == 0.0
    if np.any(idle):
        u2 = np.where(idle, u, u2)
        v2 = np.where(idle, v, v2)
        w2 = np.where(idle, w, w2)
    return u2, v2, w2


def propagate_pulse(state: BlochState, pulse: Pulse, detuning_rad_s, depth_scale) -> BlochState:
    """Apply one hard pulse: rotation about
    (Omega*s*cos(phase), Omega*s*sin(phase), detuning - pulse offset)
    for the pulse duration, with no decay. detuning and depth_scale may be
    arrays broadcastable against the state."""
    ds = np.asarray(depth_scale, dtype=float)
    if np.any(ds <= 0.0) or np.any(ds > 1.0):
        raise ValueError("depth_scale must be in (0, 1]")
    det = np.asarray(detuning_rad_s, dtype=float)
    ax = pulse.rabi_frequency_rad_s * ds * math.cos(pulse.phase_rad)
    ay = pulse.rabi_frequency_rad_s * ds * math.sin(pulse.phase_rad)
    az = det - pulse.detuning_offset_rad_s
    shape = np.broadcast_shapes(state.u.shape if hasattr(state.u, "shape") else (),
                                np.shape(ax), np.shape(az))
    u, v, w = (np.broadcast_to(np.asarray(c, dtype=float), shape).copy()
               for c in (state.u, state.v, state.w))
    ax, ay, az = (np.broadcast_to(a, shape) for a in (ax, ay, az))
    u2, v2, w2 = _rotate(u, v, w, ax, ay, az, pulse.duration_s)
    return BlochState(u=u2, v=v2, w=w2)


def free_evolution(state: BlochState, duration_s: float, detuning_rad_s, t2_s: float) -> BlochState:
    """Free precession: (u, v) rotate by detuning*duration and decay by
    exp(-duration/t2); w is unchanged (optical lifetime is long against
    the sequence scale)."""
    if duration_s < 0:
        raise ValueError("duration must be >= 0")
    det = np.asarray(detuning_rad_s, dtype=float)
    decay = math.exp(-duration_s / t2_s) if math.isfinite(t2_s) else 1.0
    c = np.cos(det * duration_s) * decay
    s = np.sin(det * duration_s) * decay
    return BlochState(
        u=state.u * c - state.v * s,
        v=state.u * s + state.v * c,
        w=np.asarray(state.w, dtype=float) + 0.0,
    )


def _spin_survival(dt_s: float, spec: _ens.IonEnsembleSpec) -> float:
    """Surviving fraction of a stored spectral grating after dt: the fast
    pool decays with its lifetime, the remainder is effectively static."""
    f = spec.spin_fraction_fast
    return f * math.exp(-dt_s / spec.spin_lifetime_fast_s) + (1.0 - f)


def two_pulse_echo_time(tau_s: float, pi_half_duration_s: float = DEFAULT_PI_HALF_S) -> float:
    """Expected echo time of a pi/2 - tau - pi sequence starting at t = 0
    (centroid convention)."""
    return 0.5 * pi_half_duration_s + 2.0 * tau_s


def stimulated_echo_time(tau_s: float, storage_s: float,
                         pi_half_duration_s: float = DEFAULT_PI_HALF_S) -> float:
    """Expected stimulated echo time: one pulse gap after the third pulse."""
    return 0.5 * pi_half_duration_s + 2.0 * tau_s + storage_s


def two_pulse_sequence(tau_s: float, *,
                       pi_half_duration_s: float = DEFAULT_PI_HALF_S,
                       pi_duration_s: float = DEFAULT_PI_S,
                       dt_s: float = DEFAULT_DT_S,
                       dead_time_s: float = DEFAULT_DEAD_TIME_S,
                       window_pre_s: float = DEFAULT_WINDOW_PRE_S,
                       window_post_s: float = DEFAULT_WINDOW_POST_S,
                       grating_pairs: int = 1) -> PulseSequence:
    """Build a pi/2 - tau - pi echo sequence with pulse areas set by the
    durations and a record window around the expected echo at
    pi_half/2 + 2*tau (never earlier than the dead time after the pi
    pulse, which lets the pulse's own free-induction tail dephase)."""
    c1 = 0.5 * pi_half_duration_s
    c2 = c1 + tau_s
    p2_start = c2 - 0.5 * pi_duration_s
    if p2_start < pi_half_duration_s:
        raise ValueError(f"tau = {tau_s} s too short: pulses would overlap")
    pulses = (
        Pulse(0.0, pi_half_duration_s, (math.pi / 2.0) / pi_half_duration_s),
        Pulse(p2_start, pi_duration_s, math.pi / pi_duration_s),
    )
    echo = two_pulse_echo_time(tau_s, pi_half_duration_s)
    start = max(pulses[-1].t_end_s + dead_time_s, echo - window_pre_s)
    return PulseSequence(pulses, RecordWindow(start, echo + window_post_s, dt_s),
                         grating_pairs=grating_pairs)


def stimulated_sequence(tau_s: float, storage_s: float, *,
                        pi_half_duration_s: float = DEFAULT_PI_HALF_S,
                        dt_s: float = DEFAULT_DT_S,
                        dead_time_s: float = DEFAULT_DEAD_TIME_S,
                        window_pre_s: float = DEFAULT_WINDOW_PRE_S,
                        window_post_s: float = DEFAULT_WINDOW_POST_S,
                        grating_pairs: int = 1) -> PulseSequence:
    """Build the three-pulse (stimulated echo) sequence
    pi/2 - tau - pi/2 - storage - pi/2; the grating written by the first
    pair is read out one pulse gap after the third pulse."""
    d = pi_half_duration_s
    rabi = (math.pi / 2.0) / d
    c1 = 0.5 * d
    c2 = c1 + tau_s
    c3 = c2 + storage_s
    if c2 - 0.5 * d < d or c3 - 0.5 * d < c2 + 0.5 * d:
        raise ValueError("tau or storage too short: pulses would overlap")
    pulses = (
        Pulse(0.0, d, rabi),
        Pulse(c2 - 0.5 * d, d, rabi),
        Pulse(c3 - 0.5 * d, d, rabi),
    )
    echo = stimulated_echo_time(tau_s, storage_s, d)
    start = max(pulses[-1].t_end_s + dead_time_s, echo - window_pre_s)
    return PulseSequence(pulses, RecordWindow(start, echo + window_post_s, dt_s),
                         grating_pairs=grating_pairs)


def _alias_horizon(seq: PulseSequence, t2_s: float) -> float:
    """Worst-case inhomogeneous phase-accumulation time that can recur as a
    grid image inside the record window. Gaps much longer than t2 carry no
    coherence (survival < 1e-6) and are excluded."""
    cap = DEAD_PATH_T2_FACTOR * t2_s if math.isfinite(t2_s) else math.inf
    horizon = sum(p.duration_s for p in seq.pulses)
    for a, b in zip(seq.pulses, seq.pulses[1:]):
        gap = b.t_start_s - a.t_end_s
        horizon += gap if gap <= cap else 0.0
    horizon += seq.record_window.t_stop_s - seq.pulses[-1].t_end_s
    return horizon


def _segments(t0: float, t1: float, breakpoints: Sequence[float]):
    """Split [t0, t1] at the given breakpoints, yielding (a, b) pieces."""
    cuts = sorted(b for b in breakpoints if t0 < b < t1)
    edges = [t0] + cuts + [t1]
    for a, b in zip(edges, edges[1:]):
        if b > a:
            yield a, b


def simulate_sequence(spec: _ens.IonEnsembleSpec, mode: ModeSolution, seq: PulseSequence,
                      n_detuning: int = 0, n_depth: int = 8, *,
                      grid_span_factor: float = DEFAULT_SPAN_FACTOR,
                      peak_threshold: float = DEFAULT_PEAK_THRESHOLD,
                      grating_contrast: float = 1.0,
                      laser_coherence_time_s: float | None = None,
                      rng: np.random.Generator | None = None,
                      detuning_timeline=None,
                      acceptance_halfwidth_hz: float | None = None) -> EchoTrace:
    """Propagate every (detuning, depth) class through the sequence and
    record the coherent emission over the record window.

    n_detuning = 0 sizes the detuning grid automatically so that grid
    images stay outside the record window; explicit values below that
    bound (or below 64) are flagged on the returned trace. n_depth bins
    discretize the evanescent intensity profile.

    detuning_timeline, if given, must expose breakpoints() -> times and
    value_at(t) -> Hz; its piecewise-constant detuning is added to every
    class (electric gating of a device region). acceptance_halfwidth_hz
    restricts which classes the detector accepts at emission time; it
    defaults to half the grid span, which is no restriction at zero added
    detuning. laser_coherence_time_s switches on a seeded random-walk
    pulse phase (requires rng); leave None for a phase-stable laser.
    """
    flags: list[str] = []
    pulses = seq.pulses
    window = seq.record_window
    t2 = spec.t2_s

    bandwidth_hz = 1.0 / min(p.duration_s for p in pulses)
    if grid_span_factor < DEFAULT_SPAN_FACTOR:
        flags.append("narrow-detuning-span")
        warnings.warn("detuning grid spans < 20x the excitation bandwidth",
                      GridWarning, stacklevel=2)
    span_hz = grid_span_factor * bandwidth_hz

    horizon = _alias_horizon(seq, t2)
    n_required = int(math.ceil(GRID_SAFETY * span_hz * horizon)) + 1
    if n_detuning in (0, None):
        n_det = max(512, n_required)
    else:
        n_det = int(n_detuning)
        if n_det < 64:
            flags.append("n-detuning-below-64")
            warnings.warn(f"n_detuning = {n_det} is below 64", GridWarning, stacklevel=2)
        if (n_det - 1) / span_hz < horizon:
            flags.append("detuning-grid-alias-risk")
            warnings.warn(
                f"n_detuning = {n_det} admits grid images within the record window "
                f"(need >= {n_required})", GridWarning, stacklevel=2)

    det_hz = np.linspace(-0.5 * span_hz, 0.5 * span_hz, n_det)
    det = 2.0 * math.pi * det_hz[:, None]  # rad/s, column per class row
    line_w = _ens.line_shape(det_hz - spec.center_frequency_offset_hz,
                             spec.inhom_fwhm_hz, spec.lineshape)
    line_w = line_w / line_w.sum()

    depths_nm, d_weights = _ens.depth_weights(mode, n_depth)
    d_i = mode.substrate_decay_length_nm / 2.0
    depth_scale = np.exp(-depths_nm / (2.0 * d_i))[None, :]
    weights = line_w[:, None] * d_weights[None, :]

    accept_hw = 0.5 * span_hz if acceptance_halfwidth_hz is None else float(acceptance_halfwidth_hz)

    # optional slow laser: per-pulse random-walk phase
    phases = [p.phase_rad for p in pulses]
    if laser_coherence_time_s is not None and laser_coherence_time_s > 0:
        if rng is None:
            raise ValueError("laser phase noise needs a seeded rng")
        walk = 0.0
        prev_t = pulses[0].t_centroid_s
        for k, p in enumerate(pulses):
            if k > 0:
                step = p.t_centroid_s - prev_t
                walk += rng.normal(0.0, math.sqrt(2.0 * step / laser_coherence_time_s))
                phases[k] += walk
            prev_t = p.t_centroid_s

    stark_breaks: tuple[float, ...] = ()
    if detuning_timeline is not None:
        stark_breaks = tuple(detuning_timeline.breakpoints())

    def stark_rad(t: float) -> float:
        if detuning_timeline is None:
            return 0.0
        return 2.0 * math.pi * detuning_timeline.value_at(t)

    def stark_hz(t: float) -> float:
        if detuning_timeline is None:
            return 0.0
        return detuning_timeline.value_at(t)

    times = window.times()
    signal = np.zeros(times.shape, dtype=complex)
    u = np.zeros((n_det, n_depth))
    v = np.zeros((n_det, n_depth))
    w = -np.ones((n_det, n_depth))
    inv_t2 = 0.0 if not math.isfinite(t2) else 1.0 / t2

    # storage relaxation acts in the gap between the grating pair and the
    # readout pulse of the canonical three-pulse sequence
    storage_gap = (pulses[1].t_end_s, pulses[2].t_start_s) if len(pulses) == 3 else None

    def advance_gap(t0: float, t1: float):
        nonlocal u, v, w
        if t1 <= t0:
            return
        in_storage = storage_gap is not None and t0 >= storage_gap[0] - 1e-15 \
            and t1 <= storage_gap[1] + 1e-15
        for a, b in _segments(t0, t1, stark_breaks):
            ds_rad = stark_rad(a)
            # emit at window samples inside this constant-detuning piece
            idx = np.nonzero((times >= a) & (times < b))[0]
            if idx.size:
                coh = ((u + 1j * v) * depth_scale * weights).sum(axis=1)
                if detuning_timeline is not None:
                    mask = np.abs(det_hz + stark_hz(a)) <= accept_hw
                    coh = coh * mask
                rel = times[idx] - a
                phase = np.exp((1j * (det[:, 0] + ds_rad))[:, None] * rel[None, :])
                if inv_t2 > 0.0:
                    phase = phase * np.exp(-rel * inv_t2)[None, :]
                signal[idx] += coh @ phase
            dt = b - a
            decay = math.exp(-dt * inv_t2) if inv_t2 > 0.0 else 1.0
            cphi = np.cos((det + ds_rad) * dt) * decay
            sphi = np.sin((det + ds_rad) * dt) * decay
            u, v = u * cphi - v * sphi, u * sphi + v * cphi
        if in_storage:
            # population decay composes over the whole interval, not per
            # stark segment (the two pools are not an exponential semigroup)
            w = -1.0 + (w + 1.0) * _spin_survival(t1 - t0, spec)

    def apply_pulse(p: Pulse, phase: float):
        nonlocal u, v, w
        for a, b in _segments(p.t_start_s, p.t_end_s, stark_breaks):
            az = det + stark_rad(a) - p.detuning_offset_rad_s
            ax = p.rabi_frequency_rad_s * depth_scale * math.cos(phase)
            ay = p.rabi_frequency_rad_s * depth_scale * math.sin(phase)
            u, v, w = _rotate(u, v, w, ax, ay, az, b - a)

    cursor = pulses[0].t_start_s
    for k, p in enumerate(pulses):
        advance_gap(cursor, p.t_start_s)
        apply_pulse(p, phases[k])
        cursor = p.t_end_s
    # run half a sample past the window so the endpoint sample is emitted
    advance_gap(cursor, window.t_stop_s + 0.5 * window.dt_s)

    if seq.grating_pairs > 1:
        signal = signal * grating_contrast

    intensity = np.abs(signal) ** 2
    peaks = _find_peaks(times, intensity, peak_threshold)
    return EchoTrace(times_s=times, intensity=intensity, peaks=peaks, flags=tuple(flags))


def _find_peaks(times: np.ndarray, intensity: np.ndarray, threshold_rel: float):
    top = float(intensity.max(initial=0.0))
    if top <= 0.0:
        return ()
    thr = threshold_rel * top
    mid = intensity[1:-1]
    keep = (mid > intensity[:-2]) & (mid >= intensity[2:]) & (mid >= thr)
    return tuple((float(times[i + 1]), float(intensity[i + 1])) for i in np.nonzero(keep)[0])


def two_pulse_decay_sweep(spec, mode, taus_s, *, n_detuning: int = 0, n_depth: int = 8,
                          pi_half_duration_s: float = DEFAULT_PI_HALF_S,
                          pi_duration_s: float = DEFAULT_PI_S,
                          dt_s: float = DEFAULT_DT_S, **sim_kwargs) -> np.ndarray:
    """Peak echo intensity for each delay in taus_s (two-pulse sequence)."""
    peaks = np.empty(len(taus_s))
    for i, tau in enumerate(taus_s):
        seq = two_pulse_sequence(float(tau), pi_half_duration_s=pi_half_duration_s,
                                 pi_duration_s=pi_duration_s, dt_s=dt_s)
        trace = simulate_sequence(spec, mode, seq, n_detuning, n_depth, **sim_kwargs)
        peak = trace.dominant_peak()
        peaks[i] = peak[1] if peak is not None else 0.0
    return peaks


def stimulated_decay_sweep(spec, mode, tau_s, storages_s, *, n_detuning: int = 0,
                           n_depth: int = 8,
                           pi_half_duration_s: float = DEFAULT_PI_HALF_S,
                           dt_s: float = DEFAULT_DT_S,
                           grating_pairs: int = 1, **sim_kwargs) -> np.ndarray:
    """Peak stimulated-echo intensity for each storage time in storages_s."""
    peaks = np.empty(len(storages_s))
    for i, big_t in enumerate(storages_s):
        seq = stimulated_sequence(float(tau_s), float(big_t),
                                  pi_half_duration_s=pi_half_duration_s, dt_s=dt_s,
                                  grating_pairs=grating_pairs)
        trace = simulate_sequence(spec, mode, seq, n_detuning, n_depth, **sim_kwargs)
        peak = trace.dominant_peak()
        peaks[i] = peak[1] if peak is not None else 0.0
    return peaks


def two_pulse_decay_model(tau_s, amplitude: float, t2_s: float):
    """Echo intensity vs delay: amplitude * exp(-4 tau / t2) (the field
    amplitude decays as exp(-2 tau / t2))."""
    tau = np.asarray(tau_s, dtype=float)
    if np.any(tau < 0):
        raise ValueError("tau must be >= 0")
    if t2_s <= 0:
        raise ValueError("t2 must be > 0")
    out = amplitude * np.exp(-4.0 * tau / t2_s)
    return float(out) if np.isscalar(tau_s) else out


class TwoPulseFit(NamedTuple):
    t2_s: float
    homogeneous_linewidth_hz: float
    fit: FitResult


def fit_two_pulse_decay(tau_s, intensity) -> TwoPulseFit:
    """Fit of the two-pulse decay model; returns the coherence time and
    the homogeneous linewidth 1/(pi t2).

    Residuals are taken relative to the measured intensity (detector
    noise on echo peaks is multiplicative), which keeps the late, weak
    echoes from being drowned out by the early ones."""
    tau = np.asarray(tau_s, dtype=float)
    y = np.asarray(intensity, dtype=float)
    if tau.size < 4:
        raise ValueError("need at least 4 points")
    if np.any(y <= 0):
        raise ValueError("intensities must be > 0")
    slope, icept = np.polyfit(tau, np.log(y), 1)
    t2_0 = -4.0 / slope if slope < 0 else float(tau.max() - tau.min())
    p0 = [math.exp(icept), t2_0]
    res = fit_nonlinear_least_squares(
        lambda p, x: two_pulse_decay_model(x, p[0], p[1]) / y,
        tau, np.ones_like(y), p0, bounds=[(1e-300, None), (1e-12, None)],
    )
    t2 = float(res.params[1])
    return TwoPulseFit(t2_s=t2, homogeneous_linewidth_hz=1.0 / (math.pi * t2), fit=res)


def stimulated_decay_model(big_t_s, a_fast: float, t_fast_s: float,
                           a_slow: float, t_slow_s: float):
    """Stimulated-echo intensity vs storage time: the echo amplitude is
    proportional to the surviving grating contrast, so
    I(T) = (a_fast exp(-T/t_fast) + a_slow exp(-T/t_slow))^2."""
    if t_fast_s <= 0 or t_slow_s <= 0:
        raise ValueError("lifetimes must be > 0")
    big_t = np.asarray(big_t_s, dtype=float)
    amp = a_fast * np.exp(-big_t / t_fast_s) + a_slow * np.exp(-big_t / t_slow_s)
    out = amp * amp
    return float(out) if np.isscalar(big_t_s) else out


class StimulatedFit(NamedTuple):
    t_fast_s: float
    t_slow_s: float
    a_fast: float
    a_slow: float
    flags: tuple[str, ...]
    fit: FitResult


def fit_stimulated_decay(big_t_s, intensity, t_slow_cap_factor: float = 100.0) -> StimulatedFit:
    """Bounded fit of the biexponential-amplitude model, with residuals
    relative to the measured intensity (multiplicative detector noise
    across the several-decade dynamic range of a storage sweep).

    t_fast < t_slow is enforced by ordering the fitted pair. t_slow is
    capped at t_slow_cap_factor * max(T); it starts from the tail slope
    when one is measurable and from the cap otherwise, and data with no
    resolvable slow decay leaves it parked at the cap (flagged
    t-slow-at-upper-bound). A fitted ratio t_slow/t_fast < 10 raises the
    ambiguous-separation flag.
    """
    big_t = np.asarray(big_t_s, dtype=float)
    y = np.asarray(intensity, dtype=float)
    if big_t.size < 6:
        raise ValueError("need at least 6 points")
    if big_t.max() / big_t.min() < 100.0:
        raise ValueError("storage times must span at least 2 decades")
    if np.any(y < 0):
        raise ValueError("intensities must be >= 0")

    order = np.argsort(big_t)
    ts, ys = big_t[order], y[order]
    amp = np.sqrt(ys)
    t_cap = t_slow_cap_factor * float(ts.max())
    t_lo = float(ts.min()) / 100.0

    # slow-component guess from the tail slope; a flat or unusable tail
    # starts t_slow at the cap, where it stays pinned if the data never
    # moves it
    k = max(3, ts.size // 4)
    tail_t, tail_a = ts[-k:], amp[-k:]
    keep = tail_a > 0
    t_slow0, a_slow0 = t_cap, float(amp[-1])
    if keep.sum() >= 2:
        sl, ic = np.polyfit(tail_t[keep], np.log(tail_a[keep]), 1)
        if sl < 0:
            t_slow0 = min(max(-1.0 / sl, t_lo), t_cap)
            a_slow0 = min(math.exp(ic), float(amp[0]))
    slow_part = a_slow0 * np.exp(-ts / t_slow0)
    a_fast0 = max(float(amp[0] - slow_part[0]), 1e-3 * max(float(amp[0]), 1e-30))
    # first storage time where the fast remainder has dropped by e
    drop = np.nonzero(amp - slow_part < a_fast0 / math.e)[0]
    t_fast0 = float(ts[drop[0]]) if drop.size else float(np.sqrt(ts.min() * ts.max()))
    t_fast0 = min(max(t_fast0, t_lo), t_cap)

    scale = np.maximum(ys, 1e-12 * float(ys.max()))
    res = fit_nonlinear_least_squares(
        lambda p, x: stimulated_decay_model(x, p[0], p[1], p[2], p[3]) / scale,
        ts, ys / scale, [a_fast0, t_fast0, a_slow0, t_slow0],
        bounds=[(0.0, None), (t_lo, t_cap), (0.0, None), (t_lo, t_cap)],
    )
    a_f, t_f, a_s, t_s = (float(q) for q in res.params)
    total = a_f + a_s
    # a component with vanishing amplitude carries no lifetime information;
    # park it at the cap so single-exponential data reports a pinned t_slow
    if total > 0 and a_s <= 1e-5 * total:
        a_s, t_s = 0.0, t_cap
    elif total > 0 and a_f <= 1e-5 * total:
        a_f, t_f = a_s, t_s
        a_s, t_s = 0.0, t_cap
    if t_f > t_s:
        a_f, t_f, a_s, t_s = a_s, t_s, a_f, t_f
    if a_s > 0.0 and t_s < 1.05 * t_f:
        # indistinguishable time constants are one component, not two
        a_f, a_s, t_s = a_f + a_s, 0.0, t_cap
    flags = []
    if t_s >= 0.999 * t_cap:
        flags.append("t-slow-at-upper-bound")
    if t_s / t_f < 10.0:
        flags.append("ambiguous-separation")
    return StimulatedFit(t_fast_s=t_f, t_slow_s=t_s, a_fast=a_f, a_slow=a_s,
                         flags=tuple(flags), fit=res)
