"""TE guided modes of an asymmetric slab: a thin high-index film between a
semi-infinite cover and substrate.

Conventions used throughout:
  * lengths in nm (thickness, wavelength, decay lengths), transverse
    wavenumbers and decay constants in 1/um;
  * z measured from the cover-film interface, positive into the film and
    substrate, so the film occupies 0 <= z <= thickness;
  * field normalization: max |E| inside the film = 1.

The m = 0 dispersion relation solved here is
    kappa*d = atan(gamma_s/kappa) + atan(gamma_c/kappa)
with kappa = k0*sqrt(nf^2 - neff^2), gamma_x = k0*sqrt(neff^2 - nx^2).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import CutoffProximityWarning, DegenerateMode, NoGuidedMode, NoSolution
from .numerics import Bracket, find_root_bracketed

__all__ = [
    "LayerStack",
    "ModeSolution",
    "solve_te_fundamental",
    "field_amplitude",
    "power_fractions",
    "substrate_decay_length",
    "phase_match_angle",
]

SCAN_STEP = 1e-4           # n_eff scan resolution (design: coarse scan + Brent refine)
NEAR_CUTOFF_DECAY_FACTOR = 100.0  # decay length > this many wavelengths flags near-cutoff


@dataclass(frozen=True)
class LayerStack:
    """Refractive-index stack: cover / film(s) / substrate, with vacuum
    wavelength. films is a tuple of (index, thickness_nm) pairs ordered
    from the cover side. Only single-film stacks are solvable in v1."""

    cover_index: float
    films: tuple[tuple[float, float], ...]
    substrate_index: float
    wavelength_nm: float

    def __post_init__(self):
        if self.cover_index < 1.0 or self.substrate_index < 1.0:
            raise ValueError("refractive indices must be >= 1")
        if not self.films:
            raise ValueError("at least one film is required")
        object.__setattr__(self, "films", tuple((float(n), float(d)) for n, d in self.films))
        for n, d in self.films:
            if n < 1.0:
                raise ValueError("refractive indices must be >= 1")
            if d <= 0.0:
                raise ValueError("film thickness must be > 0")
        if self.wavelength_nm <= 0.0:
            raise ValueError("wavelength must be > 0")

    @classmethod
    def single_film(cls, cover_index: float, film_index: float, thickness_nm: float,
                    substrate_index: float, wavelength_nm: float) -> "LayerStack":
        return cls(cover_index, ((film_index, thickness_nm),), substrate_index, wavelength_nm)

    @property
    def k0_per_um(self) -> float:
        """Vacuum wavenumber in 1/um."""
        return 2.0 * math.pi / (self.wavelength_nm * 1e-3)


@dataclass(frozen=True)
class ModeSolution:
    """One guided TE mode with its derived quantities.

    profile coefficients: the film field is cos(kappa*z - phi) with unit
    amplitude; cover_amplitude and substrate_amplitude are the matched
    exponential prefactors at the two interfaces.
    """

    mode_index: int
    polarization: str
    n_eff: float
    kappa_film_per_um: float
    gamma_cover_per_um: float
    gamma_substrate_per_um: float
    film_phase_rad: float
    cover_amplitude: float
    substrate_amplitude: float
    power_fractions: tuple[float, float, float]  # (cover, film, substrate)
    substrate_decay_length_nm: float
    film_thickness_nm: float
    wavelength_nm: float
    near_cutoff: bool


def _transverse(stack: LayerStack, n_eff: float):
    nf, d_nm = stack.films[0]
    k0 = stack.k0_per_um
    kappa = k0 * math.sqrt(max(nf * nf - n_eff * n_eff, 0.0))
    gamma_c = k0 * math.sqrt(max(n_eff * n_eff - stack.cover_index ** 2, 0.0))
    gamma_s = k0 * math.sqrt(max(n_eff * n_eff - stack.substrate_index ** 2, 0.0))
    return kappa, gamma_c, gamma_s, d_nm * 1e-3


def _dispersion_m0(stack: LayerStack, n_eff: float) -> float:
    # strictly decreasing in n_eff, so it has at most one root
    kappa, gamma_c, gamma_s, d_um = _transverse(stack, n_eff)
    if kappa == 0.0:
        return -math.pi
    return kappa * d_um - math.atan(gamma_s / kappa) - math.atan(gamma_c / kappa)


def _cutoff_thickness_nm(stack: LayerStack) -> float:
    """m = 0 cutoff: thinnest film that still guides (n_eff -> bound side)."""
    nf = stack.films[0][0]
    n_lo = max(stack.cover_index, stack.substrate_index)
    k0 = stack.k0_per_um
    kappa_c = k0 * math.sqrt(nf * nf - n_lo * n_lo)
    gamma_other = k0 * math.sqrt(abs(n_lo * n_lo - min(stack.cover_index, stack.substrate_index) ** 2))
    return math.atan(gamma_other / kappa_c) / kappa_c * 1e3


def _closed_form_fractions(kappa, gamma_c, gamma_s, phi, d_um):
    # integrals of |E|^2 per region, unit film amplitude
    c_amp = math.cos(phi)
    s_amp = math.cos(kappa * d_um - phi)
    p_cover = c_amp * c_amp / (2.0 * gamma_c)
    p_sub = s_amp * s_amp / (2.0 * gamma_s)
    p_film = d_um / 2.0 + (math.sin(2.0 * (kappa * d_um - phi)) + math.sin(2.0 * phi)) / (4.0 * kappa)
    total = p_cover + p_film + p_sub
    return p_cover / total, p_film / total, p_sub / total


def solve_te_fundamental(stack: LayerStack) -> ModeSolution:
    """Solve the fundamental (m = 0) TE mode of a single-film stack.

    Raises NoGuidedMode when the film index does not exceed both bounding
    indices, and DegenerateMode (with the computed cutoff thickness) when
    the film is too thin to guide m = 0.
    """
    if len(stack.films) != 1:
        raise NotImplementedError("only single-film stacks are solved in v1")
    nf, d_nm = stack.films[0]
    n_lo = max(stack.cover_index, stack.substrate_index)
    if nf <= n_lo:
        raise NoGuidedMode(
            f"film index {nf} does not exceed max(cover, substrate) = {n_lo}"
        )

    # coarse scan guarantees the root is not skipped, then Brent refines
    eps = 1e-9 * (nf - n_lo)
    lo, hi = n_lo + eps, nf - eps
    n_scan = max(int(math.ceil((hi - lo) / SCAN_STEP)), 2) + 1
    grid = np.linspace(lo, hi, n_scan)
    vals = np.array([_dispersion_m0(stack, n) for n in grid])
    idx = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) <= 0.0)[0]
    if idx.size == 0:
        cutoff = _cutoff_thickness_nm(stack)
        raise DegenerateMode(
            f"film thickness {d_nm} nm is below the m=0 cutoff "
            f"(~{cutoff:.1f} nm for this stack)"
        )
    i = int(idx[-1])  # largest-n_eff sign change is the fundamental
    n_eff = find_root_bracketed(
        lambda n: _dispersion_m0(stack, n), Bracket(float(grid[i]), float(grid[i + 1]))
    )

    kappa, gamma_c, gamma_s, d_um = _transverse(stack, n_eff)
    phi = math.atan2(gamma_c, kappa)
    fractions = _closed_form_fractions(kappa, gamma_c, gamma_s, phi, d_um)
    decay_nm = 1e3 / gamma_s
    near = decay_nm > NEAR_CUTOFF_DECAY_FACTOR * stack.wavelength_nm
    if near:
        warnings.warn(
            f"mode lies close to cutoff: substrate decay length {decay_nm:.0f} nm",
            CutoffProximityWarning,
            stacklevel=2,
        )
    return ModeSolution(
        mode_index=0,
        polarization="TE",
        n_eff=float(n_eff),
        kappa_film_per_um=kappa,
        gamma_cover_per_um=gamma_c,
        gamma_substrate_per_um=gamma_s,
        film_phase_rad=phi,
        cover_amplitude=math.cos(phi),
        substrate_amplitude=math.cos(kappa * d_um - phi),
        power_fractions=fractions,
        substrate_decay_length_nm=decay_nm,
        film_thickness_nm=d_nm,
        wavelength_nm=stack.wavelength_nm,
        near_cutoff=near,
    )


def field_amplitude(mode: ModeSolution, z_nm):
    """TE field profile E(z). z in nm from the cover-film interface,
    positive into the film; accepts scalars or arrays."""
    z = np.asarray(z_nm, dtype=float) * 1e-3  # um
    d = mode.film_thickness_nm * 1e-3
    cover = mode.cover_amplitude * np.exp(mode.gamma_cover_per_um * z)
    film = np.cos(mode.kappa_film_per_um * z - mode.film_phase_rad)
    sub = mode.substrate_amplitude * np.exp(-mode.gamma_substrate_per_um * (z - d))
    out = np.where(z < 0.0, cover, np.where(z <= d, film, sub))
    return float(out) if np.isscalar(z_nm) else out


def power_fractions(mode: ModeSolution) -> tuple[float, float, float]:
    """(cover, film, substrate) power fractions, closed form, sum = 1."""
    return _closed_form_fractions(
        mode.kappa_film_per_um,
        mode.gamma_cover_per_um,
        mode.gamma_substrate_per_um,
        mode.film_phase_rad,
        mode.film_thickness_nm * 1e-3,
    )


def substrate_decay_length(mode: ModeSolution) -> float:
    """Field e^-1 depth into the substrate, nm. The intensity e^-1 depth
    is half this value."""
    return 1e3 / mode.gamma_substrate_per_um


def phase_match_angle(n_prism: float, apex_angle_deg: float, n_eff: float) -> float:
    """External air-side incidence angle (degrees) that phase matches a
    prism-coupled beam to a mode of effective index n_eff.

    Sign convention: the in-prism angle from the base normal is
    apex - asin(sin(theta)/n_prism), so positive external angles match
    effective indices below n_prism*sin(apex) and theta = 0 means the
    internal angle equals the apex angle exactly.
    Raises NoSolution when the prism index cannot reach the mode index or
    the required external angle is beyond grazing.
    """
    if not 0.0 < apex_angle_deg < 90.0:
        raise ValueError("apex angle must be in (0, 90) degrees")
    if n_prism <= n_eff:
        # internal angle would need to reach or exceed 90 degrees
        raise NoSolution(f"prism index {n_prism} too low for n_eff {n_eff}")
    internal = math.asin(n_eff / n_prism)
    arg = n_prism * math.sin(math.radians(apex_angle_deg) - internal)
    if abs(arg) > 1.0:
        raise NoSolution(f"required external angle beyond grazing (sin = {arg:.3f})")
    return math.degrees(math.asin(arg))
