"""Multi-device chips gated by the dc Stark shift.

Every device on the chip sees the same optical pulse train through the
shared waveguide. A device participates in a pulse only when its electrode
voltage tunes its ions onto the laser; parked at the idle offset it is
spectrally dark. Each device's ion ensemble is simulated independently
with its piecewise-constant electrical detuning added to every class, and
the detector accepts a class's emission only while it sits inside the
spectral acceptance band around the laser.

Detuning sign: positive stark_coefficient and positive voltage pull the
ion frequency down, so a device idling at +offset returns to resonance at
voltage = offset * gap / coefficient.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from . import dynamics as _dyn
from . import ensemble as _ens
from .errors import OutOfTimeline, ScheduleConflict
from .waveguide import ModeSolution

__all__ = [
    "VoltageTimeline",
    "StarkDevice",
    "ChipLayout",
    "stark_detuning",
    "resonance_voltage",
    "simulate_chip",
    "validate_schedule",
]

RESONANT_BANDWIDTH_FACTOR = 3.0   # pulse addresses a device within 3x bandwidth
IDLE_LINEWIDTH_FACTOR = 100.0     # idle margin wanted: 100x homogeneous linewidth


@dataclass(frozen=True)
class VoltageTimeline:
    """Piecewise-constant electrode voltage: steps are (time_s, volts)
    with strictly increasing times. The value holds from each step until
    the next; the last value holds indefinitely. Times before the first
    step are undefined (OutOfTimeline), not extrapolated."""

    steps: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if not self.steps:
            raise ValueError("voltage timeline needs at least one step")
        object.__setattr__(self, "steps", tuple((float(t), float(v)) for t, v in self.steps))
        ts = [t for t, _ in self.steps]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("timeline step times must be strictly increasing")

    def breakpoints(self) -> tuple[float, ...]:
        return tuple(t for t, _ in self.steps)

    def voltage_at(self, t_s: float) -> float:
        if t_s < self.steps[0][0]:
            raise OutOfTimeline(
                f"t = {t_s} s precedes the first timeline step at {self.steps[0][0]} s")
        value = self.steps[0][1]
        for ts, vs in self.steps:
            if ts <= t_s:
                value = vs
            else:
                break
        return value


@dataclass(frozen=True)
class StarkDevice:
    """One electroded region: its ions shift by
    -stark_coefficient * voltage / electrode_gap relative to the common
    detuned parking offset, so detuning_at(t) crosses zero at the
    resonance voltage."""

    device_id: str
    stark_coefficient_hz_per_v_cm: float
    electrode_gap_cm: float
    voltage_timeline: VoltageTimeline
    detuned_offset_hz: float = 0.0

    def __post_init__(self):
        if not self.device_id:
            raise ValueError("device_id must be non-empty")
        if self.electrode_gap_cm <= 0:
            raise ValueError("electrode gap must be > 0")
        if not math.isfinite(self.stark_coefficient_hz_per_v_cm):
            raise ValueError("stark coefficient must be finite")

    def breakpoints(self) -> tuple[float, ...]:
        return self.voltage_timeline.breakpoints()

    def detuning_at(self, t_s: float) -> float:
        field = self.voltage_timeline.voltage_at(t_s) / self.electrode_gap_cm
        return self.detuned_offset_hz - self.stark_coefficient_hz_per_v_cm * field


def stark_detuning(device: StarkDevice, t_s: float) -> float:
    """Device ion detuning from the laser at time t, in Hz."""
    return device.detuning_at(t_s)


def resonance_voltage(device: StarkDevice) -> float:
    """Voltage nulling the device's parking offset."""
    if device.stark_coefficient_hz_per_v_cm == 0.0:
        raise ValueError("device has zero stark coefficient")
    return device.detuned_offset_hz * device.electrode_gap_cm / device.stark_coefficient_hz_per_v_cm


@dataclass(frozen=True)
class ChipLayout:
    """Devices in waveguide order sharing one pulse train and detector
    window. laser_frequency_offset shifts the common laser against all
    parking offsets."""

    devices: tuple[StarkDevice, ...]
    global_pulse_timeline: _dyn.PulseSequence
    laser_frequency_offset_hz: float = 0.0

    def __post_init__(self):
        if not self.devices:
            raise ValueError("chip needs at least one device")
        object.__setattr__(self, "devices", tuple(self.devices))
        ids = [d.device_id for d in self.devices]
        if len(set(ids)) != len(ids):
            raise ValueError("device ids must be unique")


class _EffectiveDetuning:
    """Device detuning plus the global laser offset, in the interface the
    sequence engine consumes."""

    def __init__(self, device: StarkDevice, laser_offset_hz: float):
        self._device = device
        self._laser = laser_offset_hz

    def breakpoints(self) -> tuple[float, ...]:
        return self._device.breakpoints()

    def value_at(self, t_s: float) -> float:
        return self._device.detuning_at(t_s) + self._laser


def _is_exactly_resonant(device: StarkDevice, laser_offset_hz: float) -> bool:
    # float-exact zero at every step: only then is the plain-sequence path
    # guaranteed bit-identical
    if laser_offset_hz != 0.0:
        return False
    return all(device.detuning_at(t) == 0.0 for t in device.breakpoints())


def simulate_chip(spec: _ens.IonEnsembleSpec, mode: ModeSolution, layout: ChipLayout,
                  n_detuning: int = 0, n_depth: int = 8, *, workers: int = 1,
                  validate: bool = True, **sim_kwargs) -> list[_dyn.EchoTrace]:
    """Simulate every device against the shared pulse train; returns one
    EchoTrace per device, in layout order regardless of worker count.

    A device whose effective detuning is exactly zero over its whole
    timeline takes the plain single-ensemble path, so its trace is
    bit-identical to simulate_sequence on the same grid. Schedule problems
    are reported as ScheduleConflict warnings, never as errors.
    """
    if validate:
        seqs = layout.global_pulse_timeline
        bandwidth = 1.0 / min(p.duration_s for p in seqs.pulses)
        homog = 1.0 / (math.pi * spec.t2_s) if math.isfinite(spec.t2_s) else 0.0
        validate_schedule(layout, bandwidth, homogeneous_linewidth_hz=homog)

    def one(device: StarkDevice) -> _dyn.EchoTrace:
        if _is_exactly_resonant(device, layout.laser_frequency_offset_hz):
            return _dyn.simulate_sequence(spec, mode, layout.global_pulse_timeline,
                                          n_detuning, n_depth, **sim_kwargs)
        timeline = _EffectiveDetuning(device, layout.laser_frequency_offset_hz)
        return _dyn.simulate_sequence(spec, mode, layout.global_pulse_timeline,
                                      n_detuning, n_depth,
                                      detuning_timeline=timeline, **sim_kwargs)

    if workers <= 1:
        return [one(d) for d in layout.devices]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(one, d) for d in layout.devices]
        return [f.result() for f in futures]


def validate_schedule(layout: ChipLayout, excitation_bandwidth_hz: float, *,
                      homogeneous_linewidth_hz: float = 0.0) -> tuple[str, ...]:
    """Check that every device is cleanly in or cleanly out during each
    pulse: participants must sit within 3x the excitation bandwidth of the
    laser, bystanders at least 100x the homogeneous linewidth away. Each
    violation is returned and warned as ScheduleConflict; an empty return
    is a clean schedule."""
    if excitation_bandwidth_hz <= 0:
        raise ValueError("excitation bandwidth must be > 0")
    near = RESONANT_BANDWIDTH_FACTOR * excitation_bandwidth_hz
    far = IDLE_LINEWIDTH_FACTOR * homogeneous_linewidth_hz
    problems: list[str] = []
    for pulse in layout.global_pulse_timeline.pulses:
        for dev in layout.devices:
            # sample every constant piece the pulse overlaps
            cuts = [t for t in dev.breakpoints() if pulse.t_start_s < t < pulse.t_end_s]
            checkpoints = [pulse.t_start_s] + cuts
            for t in checkpoints:
                delta = abs(dev.detuning_at(t) + layout.laser_frequency_offset_hz)
                if delta <= near:
                    continue
                if delta < far:
                    problems.append(
                        f"device {dev.device_id} sits at {delta:.3g} Hz during the pulse at "
                        f"{pulse.t_start_s} s: outside the {near:.3g} Hz excitation band but "
                        f"closer than the {far:.3g} Hz idle margin")
    for msg in problems:
        warnings.warn(msg, ScheduleConflict, stacklevel=2)
    return tuple(problems)
