from __future__ import annotations

import math

import numpy as np
import pytest

from evanecho.dynamics import simulate_sequence, two_pulse_sequence
from evanecho.errors import OutOfTimeline, ScheduleConflict
from evanecho.stark import (
    ChipLayout,
    StarkDevice,
    VoltageTimeline,
    resonance_voltage,
    simulate_chip,
    stark_detuning,
    validate_schedule,
)


def _device(device_id="A", offset_hz=11.2e6, steps=((0.0, 0.0),)):
    return StarkDevice(
        device_id=device_id,
        stark_coefficient_hz_per_v_cm=112e3,
        electrode_gap_cm=0.01,
        voltage_timeline=VoltageTimeline(steps),
        detuned_offset_hz=offset_hz,
    )


class TestVoltageTimeline:
    def test_last_value_holds(self):
        tl = VoltageTimeline(((0.0, 1.0), (10e-6, 0.5)))
        assert tl.voltage_at(5e-6) == 1.0
        assert tl.voltage_at(10e-6) == 0.5
        assert tl.voltage_at(1.0) == 0.5

    def test_before_first_step_is_undefined(self):
        tl = VoltageTimeline(((1e-6, 1.0),))
        with pytest.raises(OutOfTimeline):
            tl.voltage_at(0.0)

    def test_breakpoints(self):
        tl = VoltageTimeline(((0.0, 1.0), (2e-6, 0.0), (5e-6, 1.0)))
        assert tl.breakpoints() == (0.0, 2e-6, 5e-6)

    def test_times_must_increase(self):
        with pytest.raises(ValueError):
            VoltageTimeline(((0.0, 1.0), (0.0, 0.5)))

    def test_needs_a_step(self):
        with pytest.raises(ValueError):
            VoltageTimeline(())


class TestStarkDevice:
    def test_detuning_sign_convention(self):
        # positive voltage shifts the ions down from the parking offset
        dev = _device(steps=((0.0, 1.0),))
        # 112 kHz/(V/cm) * 1 V / 0.01 cm = 11.2 MHz, cancelling the offset
        assert dev.detuning_at(0.0) == 0.0
        assert stark_detuning(dev, 0.0) == 0.0

    def test_idle_device_is_parked(self):
        dev = _device(steps=((0.0, 0.0),))
        assert dev.detuning_at(0.0) == 11.2e6

    def test_resonance_voltage(self):
        dev = _device()
        v = resonance_voltage(dev)
        assert v == pytest.approx(1.0, rel=1e-12)

    def test_resonance_voltage_needs_coefficient(self):
        dev = StarkDevice("X", 0.0, 0.01, VoltageTimeline(((0.0, 0.0),)), 1e6)
        with pytest.raises(ValueError):
            resonance_voltage(dev)

    def test_validation(self):
        with pytest.raises(ValueError):
            StarkDevice("", 112e3, 0.01, VoltageTimeline(((0.0, 0.0),)))
        with pytest.raises(ValueError):
            StarkDevice("A", 112e3, 0.0, VoltageTimeline(((0.0, 0.0),)))


class TestChipLayout:
    def test_unique_ids_required(self):
        seq = two_pulse_sequence(20e-6)
        with pytest.raises(ValueError):
            ChipLayout((_device("A"), _device("A")), seq)

    def test_needs_devices(self):
        seq = two_pulse_sequence(20e-6)
        with pytest.raises(ValueError):
            ChipLayout((), seq)


class TestChipSimulation:
    def test_always_resonant_device_matches_plain_path(self, ref_ensemble, ref_mode):
        seq = two_pulse_sequence(20e-6)
        dev = _device(offset_hz=0.0, steps=((0.0, 0.0),))
        layout = ChipLayout((dev,), seq)
        chip = simulate_chip(ref_ensemble, ref_mode, layout)
        plain = simulate_sequence(ref_ensemble, ref_mode, seq)
        assert np.array_equal(chip[0].intensity, plain.intensity)

    def test_parked_device_stays_dark(self, ref_ensemble, ref_mode):
        seq = two_pulse_sequence(20e-6)
        idle = _device("idle")  # 11.2 MHz away throughout
        layout = ChipLayout((idle,), seq)
        trace = simulate_chip(ref_ensemble, ref_mode, layout)[0]
        assert trace.intensity.max() == 0.0
        assert trace.peaks == ()

    def test_gated_device_echoes(self, ref_ensemble, ref_mode):
        # resonant for the whole sequence via a 1 V hold, then parked
        seq = two_pulse_sequence(20e-6)
        gated = _device("g", steps=((0.0, 1.0), (70e-6, 0.0)))
        layout = ChipLayout((gated,), seq)
        trace = simulate_chip(ref_ensemble, ref_mode, layout)[0]
        plain = simulate_sequence(ref_ensemble, ref_mode, seq)
        t_gated, h_gated = trace.dominant_peak()
        t_plain, h_plain = plain.dominant_peak()
        assert t_gated == t_plain
        assert h_gated == pytest.approx(h_plain, rel=1e-9)

    def test_device_order_and_workers(self, ref_ensemble, ref_mode):
        seq = two_pulse_sequence(20e-6)
        devs = tuple(_device(f"d{k}", steps=((0.0, 1.0 if k % 2 else 0.0),))
                     for k in range(4))
        layout = ChipLayout(devs, seq)
        serial = simulate_chip(ref_ensemble, ref_mode, layout, workers=1)
        parallel = simulate_chip(ref_ensemble, ref_mode, layout, workers=4)
        assert len(serial) == 4
        for a, b in zip(serial, parallel):
            assert np.array_equal(a.intensity, b.intensity)

    def test_laser_offset_moves_resonance(self, ref_ensemble, ref_mode):
        # a parked device becomes resonant when the laser meets it
        seq = two_pulse_sequence(20e-6)
        dev = _device("p", offset_hz=11.2e6)
        layout = ChipLayout((dev,), seq, laser_frequency_offset_hz=-11.2e6)
        trace = simulate_chip(ref_ensemble, ref_mode, layout)[0]
        assert trace.dominant_peak() is not None


class TestScheduleValidation:
    def test_clean_schedule_is_silent(self, recwarn):
        seq = two_pulse_sequence(20e-6)
        layout = ChipLayout((_device(),), seq)  # parked far away: clean
        problems = validate_schedule(layout, 1.0 / 3e-6,
                                     homogeneous_linewidth_hz=4500.0)
        assert problems == ()
        assert not [w for w in recwarn.list
                    if issubclass(w.category, ScheduleConflict)]

    def test_half_engaged_device_is_flagged(self):
        # parked 2 MHz away: outside the 1 MHz excitation band but inside
        # the 5 MHz idle margin of a broad 50 kHz line
        seq = two_pulse_sequence(20e-6)
        dev = _device(offset_hz=2e6)
        layout = ChipLayout((dev,), seq)
        with pytest.warns(ScheduleConflict):
            problems = validate_schedule(layout, 1.0 / 3e-6,
                                         homogeneous_linewidth_hz=50e3)
        assert len(problems) == 2  # once per pulse

    def test_bandwidth_must_be_positive(self):
        seq = two_pulse_sequence(20e-6)
        layout = ChipLayout((_device(),), seq)
        with pytest.raises(ValueError):
            validate_schedule(layout, 0.0)

    def test_chip_runs_despite_conflicts(self, ref_ensemble, ref_mode):
        # long soft pulses narrow the excitation band below the idle
        # margin, so a 200 kHz parking offset is neither in nor out
        seq = two_pulse_sequence(100e-6, pi_half_duration_s=30e-6,
                                 pi_duration_s=60e-6)
        dev = _device(offset_hz=200e3)
        layout = ChipLayout((dev,), seq)
        with pytest.warns(ScheduleConflict):
            traces = simulate_chip(ref_ensemble, ref_mode, layout)
        assert len(traces) == 1
