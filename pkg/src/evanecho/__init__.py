"""Desk-scale model of rare-earth ions probed by the evanescent tail of a
thin-film waveguide mode: TE mode solving, evanescent absorption, photon
echo sequences with optical and spin decay, and electrically gated
multi-device chips."""

from .dynamics import (
    BlochState,
    EchoTrace,
    Pulse,
    PulseSequence,
    RecordWindow,
    fit_stimulated_decay,
    fit_two_pulse_decay,
    free_evolution,
    propagate_pulse,
    simulate_sequence,
    stimulated_decay_model,
    stimulated_sequence,
    two_pulse_decay_model,
    two_pulse_sequence,
)
from .ensemble import (
    AbsorptionSpectrum,
    IonEnsembleSpec,
    absorption_spectrum,
    dead_layer_bound,
    depth_weights,
    excitation_density,
    isd_broadening,
)
from .numerics import (
    Bracket,
    FitResult,
    find_root_bracketed,
    fit_nonlinear_least_squares,
    integrate_ode_fixed_step,
)
from .stark import (
    ChipLayout,
    StarkDevice,
    VoltageTimeline,
    simulate_chip,
    stark_detuning,
    validate_schedule,
)
from .waveguide import (
    LayerStack,
    ModeSolution,
    field_amplitude,
    phase_match_angle,
    power_fractions,
    solve_te_fundamental,
    substrate_decay_length,
)
from .config import RunConfig, load_config, loads_config
from . import errors

__version__ = "0.1.0"

__all__ = [
    "Bracket",
    "FitResult",
    "find_root_bracketed",
    "integrate_ode_fixed_step",
    "fit_nonlinear_least_squares",
    "LayerStack",
    "ModeSolution",
    "solve_te_fundamental",
    "field_amplitude",
    "power_fractions",
    "substrate_decay_length",
    "phase_match_angle",
    "IonEnsembleSpec",
    "AbsorptionSpectrum",
    "absorption_spectrum",
    "dead_layer_bound",
    "excitation_density",
    "isd_broadening",
    "depth_weights",
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
    "two_pulse_decay_model",
    "fit_two_pulse_decay",
    "stimulated_decay_model",
    "fit_stimulated_decay",
    "VoltageTimeline",
    "StarkDevice",
    "ChipLayout",
    "stark_detuning",
    "simulate_chip",
    "validate_schedule",
    "RunConfig",
    "load_config",
    "loads_config",
    "errors",
    "__version__",
]
