"""TOML run configuration.

One format, one schema version. Keys carry their unit as a suffix
(_nm, _us, _s, _ghz, _mhz) and are converted to SI here, so the rest of
the package never sees a unit-ambiguous number. Unknown keys are errors:
a typo that silently falls back to a default is worse than a refusal.
"""

from __future__ import annotations

from dataclasses import dataclass

try:
    import tomllib as _toml
except ModuleNotFoundError:  # 3.10
    import tomli as _toml

from .ensemble import IonEnsembleSpec
from .errors import ParseError, ValidationError
from .stark import StarkDevice, VoltageTimeline
from .waveguide import LayerStack

__all__ = [
    "RunConfig",
    "SequenceSettings",
    "AbsorptionSettings",
    "DevicePlan",
    "StarkSettings",
    "OutputSettings",
    "load_config",
    "loads_config",
]

SCHEMA_VERSION = 1

_REQUIRED = object()


class _Block:
    """One TOML table; take() pops typed keys, finish() rejects leftovers."""

    def __init__(self, mapping, path: str):
        if not isinstance(mapping, dict):
            raise ValidationError(f"{path}: expected a table")
        self._m = dict(mapping)
        self.path = path

    def take_number(self, key, default=_REQUIRED, *, positive=False,
                    nonnegative=False, scale=1.0):
        raw = self._pop(key, default)
        if raw is None:
            return None
        if isinstance(raw, bool) or not isinstance(raw, (int, float)):
            raise ValidationError(f"{self.path}.{key}: expected a number")
        value = float(raw)
        if positive and not value > 0:
            raise ValidationError(f"{self.path}.{key}: must be > 0 (got {raw})")
        if nonnegative and value < 0:
            raise ValidationError(f"{self.path}.{key}: must be >= 0 (got {raw})")
        return value * scale

    def take_int(self, key, default=_REQUIRED, *, minimum=None):
        raw = self._pop(key, default)
        if isinstance(raw, bool) or not isinstance(raw, int):
            raise ValidationError(f"{self.path}.{key}: expected an integer")
        if minimum is not None and raw < minimum:
            raise ValidationError(f"{self.path}.{key}: must be >= {minimum} (got {raw})")
        return raw

    def take_str(self, key, default=_REQUIRED):
        raw = self._pop(key, default)
        if not isinstance(raw, str):
            raise ValidationError(f"{self.path}.{key}: expected a string")
        return raw

    def take_bool(self, key, default=_REQUIRED):
        raw = self._pop(key, default)
        if not isinstance(raw, bool):
            raise ValidationError(f"{self.path}.{key}: expected true or false")
        return raw

    def take_list(self, key, default=_REQUIRED):
        raw = self._pop(key, default)
        if raw is not None and not isinstance(raw, list):
            raise ValidationError(f"{self.path}.{key}: expected an array")
        return raw

    def take_block(self, key, default=_REQUIRED):
        raw = self._pop(key, default)
        if raw is None:
            return None
        return _Block(raw, f"{self.path}.{key}")

    def _pop(self, key, default):
        if key in self._m:
            return self._m.pop(key)
        if default is _REQUIRED:
            raise ValidationError(f"missing required key {self.path}.{key}")
        return default

    def finish(self):
        if self._m:
            stray = sorted(self._m)[0]
            raise ValidationError(f"unknown key {self.path}.{stray}")


@dataclass(frozen=True)
class SequenceSettings:
    pi_half_duration_s: float
    pi_duration_s: float
    tau_s: float
    storage_s: float
    grating_pairs: int
    grating_contrast: float
    detector_dead_time_s: float
    dt_s: float
    n_detuning: int
    n_depth: int
    grid_span_factor: float
    laser_coherence_s: float | None


@dataclass(frozen=True)
class AbsorptionSettings:
    interaction_length_mm: float
    substrate_fraction: float | None  # None: use the solved mode's overlap
    span_hz: float
    points: int


@dataclass(frozen=True)
class DevicePlan:
    """A chip device plus, optionally, the two-pulse pair it owns in the
    shared schedule (pair centroid delay tau after the first pulse)."""

    device: StarkDevice
    pair_start_s: float | None
    pair_tau_s: float | None


@dataclass(frozen=True)
class StarkSettings:
    laser_offset_hz: float
    acceptance_halfwidth_hz: float | None  # None: half the detuning grid span
    devices: tuple[DevicePlan, ...]


@dataclass(frozen=True)
class OutputSettings:
    out_dir: str
    plot_scripts: bool


@dataclass(frozen=True)
class RunConfig:
    seed: int
    stack: LayerStack
    ensemble: IonEnsembleSpec
    sequence: SequenceSettings
    absorption: AbsorptionSettings
    stark: StarkSettings | None
    output: OutputSettings


def load_config(path) -> RunConfig:
    """Read and validate a TOML run configuration file."""
    try:
        with open(path, "rb") as fh:
            data = _toml.load(fh)
    except _toml.TOMLDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None
    except OSError as exc:
        raise ParseError(f"{path}: {exc}") from None
    return _build(data)


def loads_config(text: str) -> RunConfig:
    """Validate a TOML run configuration given as a string."""
    try:
        data = _toml.loads(text)
    except _toml.TOMLDecodeError as exc:
        raise ParseError(str(exc)) from None
    return _build(data)


def _build(data: dict) -> RunConfig:
    root = _Block(data, "")
    schema = root.take_int("schema", minimum=1)
    if schema != SCHEMA_VERSION:
        raise ValidationError(f"schema: only version {SCHEMA_VERSION} is supported (got {schema})")
    seed = root.take_int("seed", 0, minimum=0)

    stack = _build_stack(root.take_block("stack"))
    ens = _build_ensemble(root.take_block("ensemble"))
    seq = _build_sequence(root.take_block("sequence", None))
    absn = _build_absorption(root.take_block("absorption", None))
    stark_block = root.take_block("stark", None)
    stark = _build_stark(stark_block) if stark_block is not None else None
    out = _build_output(root.take_block("output", None))
    root.finish()
    return RunConfig(seed=seed, stack=stack, ensemble=ens, sequence=seq,
                     absorption=absn, stark=stark, output=out)


def _build_stack(b: _Block) -> LayerStack:
    cover = b.take_number("cover_index", 1.0, positive=True)
    film = b.take_number("film_index", positive=True)
    thick = b.take_number("film_thickness_nm", positive=True)
    sub = b.take_number("substrate_index", positive=True)
    wl = b.take_number("wavelength_nm", positive=True)
    b.finish()
    try:
        return LayerStack.single_film(cover, film, thick, sub, wl)
    except ValueError as exc:
        raise ValidationError(f"stack: {exc}") from None


def _build_ensemble(b: _Block) -> IonEnsembleSpec:
    kwargs = dict(
        concentration=b.take_number("concentration", positive=True),
        cation_density_per_cm3=b.take_number("cation_density_per_cm3", 1.83e22, positive=True),
        site1_fraction=b.take_number("site1_fraction", 0.5, positive=True),
        inhom_fwhm_hz=b.take_number("inhom_fwhm_ghz", positive=True, scale=1e9),
        lineshape=b.take_str("lineshape", "gaussian"),
        center_frequency_offset_hz=b.take_number("center_offset_mhz", 0.0, scale=1e6),
        bulk_absorption_db_per_mm=b.take_number("bulk_absorption_db_per_mm", positive=True),
        t2_s=b.take_number("t2_us", positive=True, scale=1e-6),
        spin_lifetime_fast_s=b.take_number("spin_lifetime_fast_s", 9.8, positive=True),
        spin_fraction_fast=b.take_number("spin_fraction_fast", 0.5, positive=True),
        isd_coefficient_hz_cm3=b.take_number("isd_coefficient_hz_cm3", 0.0, nonnegative=True),
    )
    b.finish()
    try:
        return IonEnsembleSpec(**kwargs)
    except ValueError as exc:
        raise ValidationError(f"ensemble: {exc}") from None


def _build_sequence(b: _Block | None) -> SequenceSettings:
    if b is None:
        b = _Block({}, "sequence")
    coherence = b.take_number("laser_coherence_us", 0.0, nonnegative=True, scale=1e-6)
    settings = SequenceSettings(
        pi_half_duration_s=b.take_number("pi_half_duration_us", 3.0, positive=True, scale=1e-6),
        pi_duration_s=b.take_number("pi_duration_us", 6.0, positive=True, scale=1e-6),
        tau_s=b.take_number("tau_us", 20.0, positive=True, scale=1e-6),
        storage_s=b.take_number("storage_s", 1.0, positive=True),
        grating_pairs=b.take_int("grating_pairs", 1, minimum=1),
        grating_contrast=b.take_number("grating_contrast", 1.0, positive=True),
        detector_dead_time_s=b.take_number("detector_dead_time_us", 5.0,
                                           nonnegative=True, scale=1e-6),
        dt_s=b.take_number("dt_us", 0.25, positive=True, scale=1e-6),
        n_detuning=b.take_int("n_detuning", 0, minimum=0),
        n_depth=b.take_int("n_depth", 8, minimum=1),
        grid_span_factor=b.take_number("grid_span_factor", 20.0, positive=True),
        laser_coherence_s=coherence if coherence > 0 else None,
    )
    b.finish()
    return settings


def _build_absorption(b: _Block | None) -> AbsorptionSettings:
    if b is None:
        b = _Block({}, "absorption")
    frac = b.take_number("substrate_fraction", 0.0, nonnegative=True)
    if frac is not None and frac > 1.0:
        raise ValidationError(f"{b.path}.substrate_fraction: must be <= 1 (got {frac})")
    settings = AbsorptionSettings(
        interaction_length_mm=b.take_number("length_mm", 4.0, positive=True),
        substrate_fraction=frac if frac and frac > 0 else None,
        span_hz=b.take_number("span_ghz", 8.0, positive=True, scale=1e9),
        points=b.take_int("points", 1601, minimum=16),
    )
    b.finish()
    return settings


def _build_stark(b: _Block) -> StarkSettings:
    laser = b.take_number("laser_offset_mhz", 0.0, scale=1e6)
    accept = b.take_number("acceptance_bw_mhz", 0.0, nonnegative=True, scale=1e6)
    raw_devices = b.take_list("devices")
    b.finish()
    if not raw_devices:
        raise ValidationError("stark.devices: need at least one device")
    plans = []
    for i, entry in enumerate(raw_devices):
        db = _Block(entry, f"stark.devices[{i}]")
        device_id = db.take_str("device_id")
        coeff = db.take_number("coeff_khz_per_v_cm", positive=True, scale=1e3)
        gap = db.take_number("gap_cm", positive=True)
        idle = db.take_number("idle_offset_mhz", 0.0, scale=1e6)
        raw_tl = db.take_list("timeline")
        if not raw_tl:
            raise ValidationError(f"{db.path}.timeline: need at least one step")
        steps = []
        for j, step in enumerate(raw_tl):
            sb = _Block(step, f"{db.path}.timeline[{j}]")
            t = sb.take_number("t_us", nonnegative=True, scale=1e-6)
            volts = sb.take_number("volts")
            sb.finish()
            steps.append((t, volts))
        pair = db.take_block("pulse_pair", None)
        if pair is not None:
            pair_start = pair.take_number("t_start_us", nonnegative=True, scale=1e-6)
            pair_tau = pair.take_number("tau_us", positive=True, scale=1e-6)
            pair.finish()
        else:
            pair_start = pair_tau = None
        db.finish()
        try:
            device = StarkDevice(
                device_id=device_id,
                stark_coefficient_hz_per_v_cm=coeff,
                electrode_gap_cm=gap,
                voltage_timeline=VoltageTimeline(tuple(steps)),
                detuned_offset_hz=idle,
            )
        except ValueError as exc:
            raise ValidationError(f"{db.path}: {exc}") from None
        plans.append(DevicePlan(device=device, pair_start_s=pair_start, pair_tau_s=pair_tau))
    return StarkSettings(
        laser_offset_hz=laser,
        acceptance_halfwidth_hz=0.5 * accept if accept and accept > 0 else None,
        devices=tuple(plans),
    )


def _build_output(b: _Block | None) -> OutputSettings:
    if b is None:
        b = _Block({}, "output")
    settings = OutputSettings(
        out_dir=b.take_str("out_dir", "out"),
        plot_scripts=b.take_bool("plot_scripts", False),
    )
    b.finish()
    return settings
