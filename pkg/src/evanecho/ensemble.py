"""Ion ensemble probed by the evanescent tail: inhomogeneous lineshape,
depth-weighted absorption, dead-layer bound, excitation density, and
instantaneous-spectral-diffusion broadening.

Frequency arguments are offsets from the laser reference in Hz. Depths
are measured from the film-substrate interface into the substrate, nm.
The intensity decay depth d_I is half the field decay length of the mode.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import BandwidthWarning, GridTooNarrow
from .waveguide import ModeSolution

__all__ = [
    "IonEnsembleSpec",
    "AbsorptionSpectrum",
    "line_shape",
    "line_peak",
    "absorption_spectrum",
    "dead_layer_bound",
    "excitation_density",
    "isd_broadening",
    "depth_weights",
]

_LINESHAPES = ("gaussian", "lorentzian")


@dataclass(frozen=True)
class IonEnsembleSpec:
    """Dopant and host parameters of the probed ensemble.

    concentration is a dimensionless dopant fraction (0.005% -> 5e-5).
    bulk_absorption_db_per_mm is the line-center absorption a fully
    confined beam would see. t2_s may be math.inf to disable coherence
    decay in simulations.
    """

    concentration: float
    cation_density_per_cm3: float
    site1_fraction: float
    inhom_fwhm_hz: float
    lineshape: str
    center_frequency_offset_hz: float
    bulk_absorption_db_per_mm: float
    t2_s: float
    spin_lifetime_fast_s: float
    spin_fraction_fast: float
    isd_coefficient_hz_cm3: float

    def __post_init__(self):
        for name in ("concentration", "cation_density_per_cm3", "inhom_fwhm_hz",
                     "bulk_absorption_db_per_mm", "t2_s", "spin_lifetime_fast_s"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be > 0")
        if self.isd_coefficient_hz_cm3 < 0.0:
            raise ValueError("isd_coefficient_hz_cm3 must be >= 0")
        for name in ("site1_fraction", "spin_fraction_fast"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must be in (0, 1]")
        if self.lineshape not in _LINESHAPES:
            raise ValueError(f"lineshape must be one of {_LINESHAPES}")


def line_peak(fwhm_hz: float, kind: str) -> float:
    """Peak value of the unit-area lineshape, 1/Hz."""
    if kind == "gaussian":
        return 2.0 / fwhm_hz * math.sqrt(math.log(2.0) / math.pi)
    if kind == "lorentzian":
        return 2.0 / (math.pi * fwhm_hz)
    raise ValueError(f"unknown lineshape {kind!r}")


def line_shape(nu_hz, fwhm_hz: float, kind: str):
    """Unit-area lineshape evaluated at offset nu from line center, 1/Hz."""
    nu = np.asarray(nu_hz, dtype=float)
    if kind == "gaussian":
        sigma = fwhm_hz / (2.0 * math.sqrt(2.0 * math.log(2.0)))
        out = np.exp(-0.5 * (nu / sigma) ** 2) / (sigma * math.sqrt(2.0 * math.pi))
    elif kind == "lorentzian":
        half = fwhm_hz / 2.0
        out = half / (math.pi * (nu * nu + half * half))
    else:
        raise ValueError(f"unknown lineshape {kind!r}")
    return float(out) if np.isscalar(nu_hz) else out


@dataclass(frozen=True)
class AbsorptionSpectrum:
    """Attenuation vs frequency offset for one interaction length."""

    frequencies_hz: np.ndarray
    attenuation_db: np.ndarray
    interaction_length_mm: float
    substrate_power_fraction: float

    @property
    def peak_attenuation_db(self) -> float:
        return float(np.max(self.attenuation_db))

    def fwhm_hz(self) -> float:
        """Full width at half maximum, linearly interpolated between grid
        points on each side of the peak."""
        att = self.attenuation_db
        f = self.frequencies_hz
        half = 0.5 * np.max(att)
        ipk = int(np.argmax(att))

        def crossing(i_from, i_to, step):
            prev = i_from
            for i in range(i_from + step, i_to, step):
                if att[i] <= half:
                    f0, f1 = f[prev], f[i]
                    a0, a1 = att[prev], att[i]
                    return f0 + (half - a0) * (f1 - f0) / (a1 - a0)
                prev = i
            return None

        left = crossing(ipk, -1, -1)
        right = crossing(ipk, len(att), +1)
        if left is None or right is None:
            raise ValueError("spectrum does not fall to half maximum inside the grid")
        return float(right - left)


def absorption_spectrum(spec: IonEnsembleSpec, mode, length_mm: float, grid_hz) -> AbsorptionSpectrum:
    """Evanescently probed absorption in dB over an interaction length.

    attenuation(nu) = bulk * g(nu)/g(0) * substrate_fraction * length.
    mode may be a ModeSolution (its substrate power fraction is used) or a
    bare fraction, which allows calibrating against a measured fraction.
    Raises GridTooNarrow when the grid spans < 3x the line FWHM.
    """
    if length_mm <= 0:
        raise ValueError("interaction length must be > 0")
    grid = np.asarray(grid_hz, dtype=float)
    span = float(grid.max() - grid.min())
    if span < 3.0 * spec.inhom_fwhm_hz:
        raise GridTooNarrow(
            f"grid span {span:.3g} Hz < 3x FWHM ({3.0 * spec.inhom_fwhm_hz:.3g} Hz)"
        )
    if isinstance(mode, ModeSolution):
        fraction = mode.power_fractions[2]
    else:
        fraction = float(mode)
        if not 0.0 <= fraction <= 1.0:
            raise ValueError("substrate power fraction must be in [0, 1]")
    rel = line_shape(grid - spec.center_frequency_offset_hz, spec.inhom_fwhm_hz, spec.lineshape)
    rel = rel / line_peak(spec.inhom_fwhm_hz, spec.lineshape)
    att = spec.bulk_absorption_db_per_mm * rel * fraction * length_mm
    return AbsorptionSpectrum(
        frequencies_hz=grid,
        attenuation_db=att,
        interaction_length_mm=length_mm,
        substrate_power_fraction=fraction,
    )


def dead_layer_bound(mode: ModeSolution, relative_headroom: float) -> float:
    """Deepest fully dark surface layer (nm) consistent with observing all
    but relative_headroom of the expected evanescent absorption.

    Solves 1 - exp(-delta/d_I) = headroom for a step-function dark layer,
    with d_I the intensity decay depth (half the field decay length).
    """
    if not 0.0 < relative_headroom < 1.0:
        raise ValueError("relative_headroom must be in (0, 1)")
    d_i = mode.substrate_decay_length_nm / 2.0
    return -d_i * math.log(1.0 - relative_headroom)


def excitation_density(spec: IonEnsembleSpec, excitation_bandwidth_hz: float,
                       apply_site_fraction: bool = False) -> float:
    """Excited-ion number density (1/cm^3) for a given excitation bandwidth.

    density = concentration * cation_density * [site fraction] * g(0) * bandwidth.
    Warns when the bandwidth is not small against the inhomogeneous line.
    """
    if excitation_bandwidth_hz < 0:
        raise ValueError("bandwidth must be >= 0")
    if excitation_bandwidth_hz > 0.1 * spec.inhom_fwhm_hz:
        warnings.warn(
            "excitation bandwidth exceeds 10% of the inhomogeneous linewidth; "
            "the flat-line approximation degrades",
            BandwidthWarning,
            stacklevel=2,
        )
    density = spec.concentration * spec.cation_density_per_cm3
    if apply_site_fraction:
        density *= spec.site1_fraction
    return density * line_peak(spec.inhom_fwhm_hz, spec.lineshape) * excitation_bandwidth_hz


def isd_broadening(isd_coefficient_hz_cm3: float, excited_density_per_cm3: float) -> float:
    """Instantaneous-spectral-diffusion broadening, Hz (plain product)."""
    if isd_coefficient_hz_cm3 < 0 or excited_density_per_cm3 < 0:
        raise ValueError("arguments must be >= 0")
    return isd_coefficient_hz_cm3 * excited_density_per_cm3


def depth_weights(mode: ModeSolution, n_bins: int) -> tuple[np.ndarray, np.ndarray]:
    """Discretize the substrate intensity profile exp(-z/d_I) into n_bins
    of equal probability mass.

    Returns (depths_nm, weights): weights are all 1/n_bins and each bin is
    represented by its probability-mass centroid, so a weighted sum over
    bins is a quadrature of the continuous profile. n_bins = 1 returns the
    mean depth d_I.
    """
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    d_i = mode.substrate_decay_length_nm / 2.0
    k = np.arange(n_bins, dtype=float)
    a = -np.log1p(-k / n_bins)              # lower edges, units of d_I
    b = np.empty(n_bins)
    b[:-1] = a[1:]
    # centroid of exp(-x) mass between edges, times n to undo the 1/n mass
    upper = np.zeros(n_bins)
    upper[:-1] = (b[:-1] + 1.0) * np.exp(-b[:-1])
    centroids = ((a + 1.0) * np.exp(-a) - upper) * n_bins
    weights = np.full(n_bins, 1.0 / n_bins)
    return centroids * d_i, weights
