"""Command line front end.

Every subcommand reads one TOML configuration, writes CSV (header row
with units, LF newlines, floats at 12 significant digits) and prints a
short summary. Identical config, seed and subcommand give byte-identical
CSV output regardless of worker count. Exit codes: 0 success, 1 physics
failure (no mode, no convergence), 2 configuration failure.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import dynamics as dyn
from . import ensemble as ens
from . import stark as stk
from .config import RunConfig, load_config
from .errors import ConfigError, PhysicsError, ValidationError
from .waveguide import solve_te_fundamental

__all__ = ["main", "format_row"]


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".12g")
    return str(value)


def format_row(row) -> str:
    return ",".join(_fmt(v) for v in row)


def _write_csv(path: Path, header: str, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(format_row(row) + "\n")


def _emit_plot_script(csv_path: Path, xlabel: str, ylabel: str, *,
                      logy: bool = False, by_device: bool = False) -> Path:
    """Write a standalone matplotlib script next to the CSV."""
    script_path = csv_path.with_name(csv_path.stem + "_plot.py")
    if by_device:
        body = f"""\
import matplotlib.pyplot as plt
import numpy as np

data = np.genfromtxt("{csv_path.name}", delimiter=",", names=True,
                     dtype=None, encoding="utf-8")
for device in sorted(set(data["device_id"])):
    rows = data[data["device_id"] == device]
    plt.plot(rows["{xlabel}"], rows["{ylabel}"], label=str(device))
plt.legend(title="device")
"""
    else:
        body = f"""\
import matplotlib.pyplot as plt
import numpy as np

data = np.loadtxt("{csv_path.name}", delimiter=",", skiprows=1)
plt.plot(data[:, 0], data[:, 1], marker=".")
"""
    tail = f"""\
plt.xlabel("{xlabel}")
plt.ylabel("{ylabel}")
{"plt.yscale('log')" if logy else ""}
plt.tight_layout()
plt.savefig("{csv_path.stem}.png", dpi=160)
print("wrote {csv_path.stem}.png")
"""
    script_path.write_text(body + tail)
    return script_path


def _parse_sweep(text: str, flag: str) -> tuple[float, float, int]:
    parts = text.split(":")
    try:
        if len(parts) != 3:
            raise ValueError
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise ValidationError(f"{flag}: expected START:STOP:COUNT (got {text!r})") from None
    if count < 2:
        raise ValidationError(f"{flag}: count must be >= 2 (got {count})")
    if not 0 < start < stop:
        raise ValidationError(f"{flag}: need 0 < start < stop (got {text!r})")
    return start, stop, count


def _load(args) -> tuple[RunConfig, int, Path, bool]:
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.seed
    out_dir = Path(args.out) if args.out else Path(cfg.output.out_dir)
    plots = bool(args.plot) or cfg.output.plot_scripts
    return cfg, seed, out_dir, plots


def _sequence_sim_kwargs(cfg: RunConfig, rng) -> dict:
    sq = cfg.sequence
    kwargs = dict(
        n_detuning=sq.n_detuning,
        n_depth=sq.n_depth,
        grid_span_factor=sq.grid_span_factor,
        grating_contrast=sq.grating_contrast,
    )
    if sq.laser_coherence_s is not None:
        kwargs["laser_coherence_time_s"] = sq.laser_coherence_s
        kwargs["rng"] = rng
    return kwargs


def _builder_kwargs(cfg: RunConfig) -> dict:
    sq = cfg.sequence
    return dict(dt_s=sq.dt_s, dead_time_s=sq.detector_dead_time_s)


def cmd_modes(args) -> int:
    cfg, _, out_dir, _ = _load(args)
    mode = solve_te_fundamental(cfg.stack)
    header = ("mode_index,polarization,n_eff,kappa_per_um,gamma_cover_per_um,"
              "gamma_substrate_per_um,substrate_decay_nm,frac_cover,frac_film,"
              "frac_substrate,near_cutoff")
    row = (mode.mode_index, mode.polarization, mode.n_eff, mode.kappa_film_per_um,
           mode.gamma_cover_per_um, mode.gamma_substrate_per_um,
           mode.substrate_decay_length_nm, mode.power_fractions[0],
           mode.power_fractions[1], mode.power_fractions[2], int(mode.near_cutoff))
    path = out_dir / "modes.csv"
    _write_csv(path, header, [row])
    print(f"TE{mode.mode_index}: n_eff = {mode.n_eff:.6f}, substrate decay = "
          f"{mode.substrate_decay_length_nm:.1f} nm, substrate power fraction = "
          f"{mode.power_fractions[2] * 100:.2f}%")
    print(f"wrote {path}")
    return 0


def cmd_absorption(args) -> int:
    cfg, _, out_dir, plots = _load(args)
    ab = cfg.absorption
    if ab.substrate_fraction is not None:
        overlap = ab.substrate_fraction
    else:
        overlap = solve_te_fundamental(cfg.stack)
    center = cfg.ensemble.center_frequency_offset_hz
    grid = np.linspace(center - 0.5 * ab.span_hz, center + 0.5 * ab.span_hz, ab.points)
    spectrum = ens.absorption_spectrum(cfg.ensemble, overlap, ab.interaction_length_mm, grid)
    path = out_dir / "absorption.csv"
    _write_csv(path, "frequency_ghz,attenuation_db",
               ((f / 1e9, a) for f, a in zip(spectrum.frequencies_hz, spectrum.attenuation_db)))
    print(f"peak attenuation = {spectrum.peak_attenuation_db:.4f} dB over "
          f"{ab.interaction_length_mm:g} mm, fwhm = {spectrum.fwhm_hz() / 1e9:.3f} GHz")
    print(f"wrote {path}")
    if plots:
        print(f"wrote {_emit_plot_script(path, 'frequency_ghz', 'attenuation_db')}")
    return 0


def cmd_echo2p(args) -> int:
    cfg, seed, out_dir, plots = _load(args)
    rng = np.random.default_rng(seed)
    mode = solve_te_fundamental(cfg.stack)
    sq = cfg.sequence
    sim_kwargs = _sequence_sim_kwargs(cfg, rng)
    build = dict(pi_half_duration_s=sq.pi_half_duration_s, pi_duration_s=sq.pi_duration_s,
                 grating_pairs=sq.grating_pairs, **_builder_kwargs(cfg))
    if args.tau_us:
        start, stop, count = _parse_sweep(args.tau_us, "--tau-us")
        taus = np.linspace(start * 1e-6, stop * 1e-6, count)
        peaks = np.empty(count)
        for i, tau in enumerate(taus):
            seq = dyn.two_pulse_sequence(float(tau), **build)
            trace = dyn.simulate_sequence(cfg.ensemble, mode, seq, **sim_kwargs)
            best = trace.dominant_peak()
            peaks[i] = best[1] if best else 0.0
        path = out_dir / "echo2p_decay.csv"
        _write_csv(path, "tau_us,peak_intensity", zip(taus * 1e6, peaks))
        fit = dyn.fit_two_pulse_decay(taus, peaks)
        print(f"refit t2 = {fit.t2_s * 1e6:.2f} us, homogeneous linewidth = "
              f"{fit.homogeneous_linewidth_hz:.1f} Hz"
              + ("" if fit.fit.converged else " (fit not converged)"))
        print(f"wrote {path} ({count} rows)")
        if plots:
            print(f"wrote {_emit_plot_script(path, 'tau_us', 'peak_intensity', logy=True)}")
    else:
        seq = dyn.two_pulse_sequence(sq.tau_s, **build)
        trace = dyn.simulate_sequence(cfg.ensemble, mode, seq, **sim_kwargs)
        path = out_dir / "echo2p_trace.csv"
        _write_csv(path, "time_us,intensity",
                   zip(trace.times_s * 1e6, (float(x) for x in trace.intensity)))
        best = trace.dominant_peak()
        if best:
            print(f"echo peak at {best[0] * 1e6:.2f} us, intensity {best[1]:.4g}")
        else:
            print("no echo peak found")
        if trace.flags:
            print("flags: " + ", ".join(trace.flags))
        print(f"wrote {path}")
        if plots:
            print(f"wrote {_emit_plot_script(path, 'time_us', 'intensity')}")
    return 0


def cmd_echo3p(args) -> int:
    cfg, seed, out_dir, plots = _load(args)
    rng = np.random.default_rng(seed)
    mode = solve_te_fundamental(cfg.stack)
    sq = cfg.sequence
    sim_kwargs = _sequence_sim_kwargs(cfg, rng)
    build = dict(pi_half_duration_s=sq.pi_half_duration_s,
                 grating_pairs=sq.grating_pairs, **_builder_kwargs(cfg))
    if args.storage_s:
        start, stop, count = _parse_sweep(args.storage_s, "--T-s")
        storages = np.geomspace(start, stop, count)
        peaks = np.empty(count)
        for i, big_t in enumerate(storages):
            seq = dyn.stimulated_sequence(sq.tau_s, float(big_t), **build)
            trace = dyn.simulate_sequence(cfg.ensemble, mode, seq, **sim_kwargs)
            best = trace.dominant_peak()
            peaks[i] = best[1] if best else 0.0
        path = out_dir / "echo3p_decay.csv"
        _write_csv(path, "T_s,peak_intensity", zip(storages, peaks))
        print(f"wrote {path} ({count} rows)")
        try:
            fit = dyn.fit_stimulated_decay(storages, peaks)
            note = (" [" + ", ".join(fit.flags) + "]") if fit.flags else ""
            print(f"refit t_fast = {fit.t_fast_s:.3f} s, t_slow = {fit.t_slow_s:.3g} s{note}")
        except ValueError as exc:
            print(f"refit skipped: {exc}")
        if plots:
            print(f"wrote {_emit_plot_script(path, 'T_s', 'peak_intensity', logy=True)}")
    else:
        seq = dyn.stimulated_sequence(sq.tau_s, sq.storage_s, **build)
        trace = dyn.simulate_sequence(cfg.ensemble, mode, seq, **sim_kwargs)
        path = out_dir / "echo3p_trace.csv"
        _write_csv(path, "time_us,intensity",
                   zip(trace.times_s * 1e6, (float(x) for x in trace.intensity)))
        best = trace.dominant_peak()
        if best:
            print(f"stimulated echo peak at {best[0] * 1e6:.2f} us, intensity {best[1]:.4g}")
        else:
            print("no echo peak found")
        print(f"wrote {path}")
        if plots:
            print(f"wrote {_emit_plot_script(path, 'time_us', 'intensity')}")
    return 0


def _chip_layout(cfg: RunConfig) -> stk.ChipLayout:
    if cfg.stark is None:
        raise ValidationError("stark: section required for the chip subcommand")
    sq = cfg.sequence
    d1, d2 = sq.pi_half_duration_s, sq.pi_duration_s
    pulses: list[dyn.Pulse] = []
    echoes: list[float] = []
    for plan in cfg.stark.devices:
        if plan.pair_start_s is None:
            continue
        c1 = plan.pair_start_s + 0.5 * d1
        c2 = c1 + plan.pair_tau_s
        pulses.append(dyn.Pulse(plan.pair_start_s, d1, (math.pi / 2.0) / d1))
        pulses.append(dyn.Pulse(c2 - 0.5 * d2, d2, math.pi / d2))
        echoes.append(c1 + 2.0 * plan.pair_tau_s)
    if not pulses:
        raise ValidationError("stark.devices: no pulse_pair entries, nothing to schedule")
    pulses.sort(key=lambda p: p.t_start_s)
    last_end = max(p.t_end_s for p in pulses)
    start = max(last_end + sq.detector_dead_time_s, min(echoes) - dyn.DEFAULT_WINDOW_PRE_S)
    stop = max(echoes) + dyn.DEFAULT_WINDOW_POST_S
    try:
        seq = dyn.PulseSequence(tuple(pulses), dyn.RecordWindow(start, stop, sq.dt_s))
    except ValueError as exc:
        raise ValidationError(f"stark: {exc}") from None
    return stk.ChipLayout(devices=tuple(p.device for p in cfg.stark.devices),
                          global_pulse_timeline=seq,
                          laser_frequency_offset_hz=cfg.stark.laser_offset_hz)


def cmd_chip(args) -> int:
    cfg, _, out_dir, plots = _load(args)
    mode = solve_te_fundamental(cfg.stack)
    layout = _chip_layout(cfg)
    sq = cfg.sequence
    traces = stk.simulate_chip(
        cfg.ensemble, mode, layout, sq.n_detuning, sq.n_depth,
        workers=args.workers,
        grid_span_factor=sq.grid_span_factor,
        acceptance_halfwidth_hz=cfg.stark.acceptance_halfwidth_hz,
    )
    rows = []
    for dev, trace in zip(layout.devices, traces):
        for t, i in zip(trace.times_s, trace.intensity):
            rows.append((t * 1e6, float(i), dev.device_id))
        best = trace.dominant_peak()
        if best:
            print(f"device {dev.device_id}: echo at {best[0] * 1e6:.2f} us, "
                  f"intensity {best[1]:.4g}")
        else:
            print(f"device {dev.device_id}: no echo in the record window")
    path = out_dir / "chip.csv"
    _write_csv(path, "time_us,intensity,device_id", rows)
    print(f"wrote {path}")
    if plots:
        print(f"wrote {_emit_plot_script(path, 'time_us', 'intensity', by_device=True)}")
    return 0


def cmd_verify(args) -> int:
    from . import acceptance
    results = acceptance.run_all(seed=args.seed if args.seed is not None else 2026)
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name.ljust(width)}  {r.detail}")
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 1 if failed else 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evanecho",
        description="Evanescently coupled ion ensembles: mode solving, absorption, "
                    "photon echoes and electrically gated chips.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_config=True):
        if with_config:
            p.add_argument("--config", required=True, help="TOML run configuration")
            p.add_argument("--out", help="output directory (default: from config)")
            p.add_argument("--plot", action="store_true",
                           help="also emit a matplotlib script per CSV")
        p.add_argument("--seed", type=int, help="override the configured seed")

    p = sub.add_parser("modes", help="solve the fundamental TE mode")
    common(p)
    p.set_defaults(func=cmd_modes)

    p = sub.add_parser("absorption", help="evanescent absorption spectrum")
    common(p)
    p.set_defaults(func=cmd_absorption)

    p = sub.add_parser("echo2p", help="two-pulse echo trace or tau sweep")
    common(p)
    p.add_argument("--tau-us", metavar="START:STOP:COUNT",
                   help="linear tau sweep in microseconds")
    p.set_defaults(func=cmd_echo2p)

    p = sub.add_parser("echo3p", help="stimulated echo trace or storage sweep")
    common(p)
    p.add_argument("--T-s", dest="storage_s", metavar="START:STOP:COUNT",
                   help="logarithmic storage-time sweep in seconds")
    p.set_defaults(func=cmd_echo3p)

    p = sub.add_parser("chip", help="simulate every gated device on the chip")
    common(p)
    p.add_argument("--workers", type=int, default=1,
                   help="device simulations to run in parallel (default 1)")
    p.set_defaults(func=cmd_chip)

    p = sub.add_parser("verify", help="run the release checks")
    common(p, with_config=False)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PhysicsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
