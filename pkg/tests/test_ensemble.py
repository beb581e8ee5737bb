from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from evanecho.ensemble import (
    IonEnsembleSpec,
    absorption_spectrum,
    dead_layer_bound,
    depth_weights,
    excitation_density,
    isd_broadening,
    line_peak,
    line_shape,
)
from evanecho.errors import BandwidthWarning, GridTooNarrow


def _spec(**overrides):
    base = dict(
        concentration=5e-5,
        cation_density_per_cm3=1.83e22,
        site1_fraction=0.5,
        inhom_fwhm_hz=2e9,
        lineshape="gaussian",
        center_frequency_offset_hz=0.0,
        bulk_absorption_db_per_mm=7.8125,
        t2_s=70e-6,
        spin_lifetime_fast_s=9.8,
        spin_fraction_fast=0.5,
        isd_coefficient_hz_cm3=1.2e-11,
    )
    base.update(overrides)
    return IonEnsembleSpec(**base)


class TestLineshapes:
    @pytest.mark.parametrize("kind", ["gaussian", "lorentzian"])
    def test_peak_matches_shape_at_center(self, kind):
        assert line_shape(0.0, 2e9, kind) == pytest.approx(line_peak(2e9, kind), rel=1e-12)

    def test_gaussian_unit_area(self):
        nu = np.linspace(-4e10, 4e10, 400001)
        area = np.trapezoid(line_shape(nu, 2e9, "gaussian"), nu)
        assert abs(area - 1.0) < 1e-10

    def test_lorentzian_area_within_ten_fwhm(self):
        # heavy tails: +-10 FWHM holds ~96.8% of a lorentzian
        nu = np.linspace(-2e10, 2e10, 400001)
        area = np.trapezoid(line_shape(nu, 2e9, "lorentzian"), nu)
        assert abs(area - (2.0 / math.pi) * math.atan(20.0)) < 1e-6

    @pytest.mark.parametrize("kind", ["gaussian", "lorentzian"])
    def test_fwhm_definition(self, kind):
        half = line_shape(1e9, 2e9, kind)  # half width = 1 GHz for FWHM 2 GHz
        assert half == pytest.approx(0.5 * line_peak(2e9, kind), rel=1e-12)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            line_shape(0.0, 2e9, "voigt")


class TestAbsorption:
    def test_reference_peak_and_width(self):
        # 7.8125 dB/mm * 0.072 * 4 mm = 2.25 dB at line center
        grid = np.linspace(-4e9, 4e9, 1601)
        spec = absorption_spectrum(_spec(), 0.072, 4.0, grid)
        assert spec.peak_attenuation_db == pytest.approx(2.25, abs=1e-12)
        assert spec.fwhm_hz() == pytest.approx(2e9, abs=5e6)

    def test_mode_object_supplies_fraction(self, ref_mode):
        grid = np.linspace(-4e9, 4e9, 801)
        spec = absorption_spectrum(_spec(), ref_mode, 4.0, grid)
        assert spec.substrate_power_fraction == ref_mode.power_fractions[2]

    def test_narrow_grid_rejected(self):
        grid = np.linspace(-2e9, 2e9, 101)  # 4 GHz span < 3x FWHM
        with pytest.raises(GridTooNarrow):
            absorption_spectrum(_spec(), 0.072, 4.0, grid)

    def test_scales_linearly_with_length(self):
        grid = np.linspace(-4e9, 4e9, 801)
        one = absorption_spectrum(_spec(), 0.072, 1.0, grid)
        four = absorption_spectrum(_spec(), 0.072, 4.0, grid)
        assert np.allclose(four.attenuation_db, 4.0 * one.attenuation_db, rtol=1e-12)

    def test_bad_fraction_rejected(self):
        grid = np.linspace(-4e9, 4e9, 801)
        with pytest.raises(ValueError):
            absorption_spectrum(_spec(), 1.5, 4.0, grid)
        with pytest.raises(ValueError):
            absorption_spectrum(_spec(), 0.072, 0.0, grid)


class TestDerivedQuantities:
    def test_dead_layer_reference_value(self, ref_mode):
        assert dead_layer_bound(ref_mode, 0.25) == pytest.approx(17.22865762778682,
                                                                 abs=1e-9)

    def test_dead_layer_monotone_in_headroom(self, ref_mode):
        assert dead_layer_bound(ref_mode, 0.1) < dead_layer_bound(ref_mode, 0.5)

    def test_dead_layer_bad_headroom(self, ref_mode):
        for bad in (0.0, 1.0, -0.2):
            with pytest.raises(ValueError):
                dead_layer_bound(ref_mode, bad)

    def test_excitation_density_reference(self):
        # 5e-5 * 1.83e22 * g(0) * 1 MHz with a 2 GHz gaussian line
        rho = excitation_density(_spec(), 1e6)
        assert rho == pytest.approx(4.2979e14, rel=1e-4)

    def test_excitation_density_site_fraction_flag(self):
        full = excitation_density(_spec(), 1e6)
        site = excitation_density(_spec(), 1e6, apply_site_fraction=True)
        assert site == pytest.approx(0.5 * full, rel=1e-12)

    def test_wide_bandwidth_warns(self):
        with pytest.warns(BandwidthWarning):
            excitation_density(_spec(), 0.5e9)

    def test_isd_broadening_plain_product(self):
        assert isd_broadening(1.2e-11, 4e14) == 4800.0

    def test_isd_rejects_negative(self):
        with pytest.raises(ValueError):
            isd_broadening(-1.0, 4e14)


class TestDepthWeights:
    def test_weights_sum_to_one(self, ref_mode):
        _, w = depth_weights(ref_mode, 8)
        assert w.sum() == pytest.approx(1.0, abs=1e-15)

    def test_single_bin_is_mean_depth(self, ref_mode):
        z, w = depth_weights(ref_mode, 1)
        d_i = ref_mode.substrate_decay_length_nm / 2.0
        assert z[0] == pytest.approx(d_i, rel=1e-12)
        assert w[0] == 1.0

    def test_quadrature_of_smooth_function(self, ref_mode):
        # weighted sum approximates the profile-weighted average of e^(-z/L)
        d_i = ref_mode.substrate_decay_length_nm / 2.0
        length = 3.0 * d_i
        z, w = depth_weights(ref_mode, 256)
        got = float(np.sum(w * np.exp(-z / length)))
        want = 1.0 / (1.0 + d_i / length)  # exact integral
        assert got == pytest.approx(want, rel=1e-3)

    def test_depths_increase(self, ref_mode):
        z, _ = depth_weights(ref_mode, 16)
        assert np.all(np.diff(z) > 0)

    def test_bad_bin_count(self, ref_mode):
        with pytest.raises(ValueError):
            depth_weights(ref_mode, 0)


class TestSpecValidation:
    def test_bad_concentration(self):
        with pytest.raises(ValueError):
            _spec(concentration=0.0)

    def test_bad_site_fraction(self):
        with pytest.raises(ValueError):
            _spec(site1_fraction=1.5)

    def test_bad_lineshape(self):
        with pytest.raises(ValueError):
            _spec(lineshape="boxcar")

    def test_infinite_t2_allowed(self):
        spec = _spec(t2_s=math.inf)
        assert math.isinf(spec.t2_s)


@given(st.floats(min_value=1e6, max_value=1e10),
       st.sampled_from(["gaussian", "lorentzian"]))
def test_line_peak_scales_inversely_with_width(fwhm, kind):
    assert line_peak(fwhm, kind) * fwhm == pytest.approx(line_peak(1.0, kind), rel=1e-9)
