"""Tests for corrugation profiles and fill fractions."""

import math

import numpy as np
import pandas as pd
import pytest
import yaml
from scipy.integrate import trapezoid

from dinosaur_readout.errors import DomainError, GeometryError
from dinosaur_readout.geometry import (
    CorrugationProfile,
    TaperCell,
    TaperSpec,
    UnitCellSpec,
    build_taper,
    cell_profile,
    cell_segment_profile,
    corrugation_halfwidth,
    export_profile,
    fill_fraction,
    load_taper,
)

TAPER_MAXIMA = [339.1, 359.2, 371.4, 383.5, 403.2]


class TestCorrugationHalfwidth:
    def test_maximum_at_cell_boundary(self, fabricated_cell):
        assert corrugation_halfwidth(fabricated_cell, 0.0) == pytest.approx(403.2, abs=1e-9)
        assert corrugation_halfwidth(fabricated_cell, fabricated_cell.a) == pytest.approx(403.2, abs=1e-9)

    def test_minimum_at_cell_centre(self, fabricated_cell):
        assert corrugation_halfwidth(fabricated_cell, fabricated_cell.a / 2) == pytest.approx(60.6, abs=1e-9)

    def test_zero_amplitude_is_constant(self):
        cell = UnitCellSpec(a=300.0, A=0.0, e=4, g=100.0)
        z = np.linspace(0.0, 300.0, 31)
        assert np.allclose(corrugation_halfwidth(cell, z), 100.0)

    def test_mirror_symmetry(self, fabricated_cell):
        z = np.linspace(0.0, fabricated_cell.a, 257)
        forward = corrugation_halfwidth(fabricated_cell, z)
        mirrored = corrugation_halfwidth(fabricated_cell, fabricated_cell.a - z)
        assert np.allclose(forward, mirrored, rtol=0, atol=1e-9)

    @pytest.mark.parametrize("z", [-1e-3, 401.4])
    def test_outside_cell_rejected(self, fabricated_cell, z):
        with pytest.raises(DomainError) as excinfo:
            corrugation_halfwidth(fabricated_cell, z)
        assert excinfo.value.parameter == "z"

    def test_extrema_properties(self, fabricated_cell):
        assert fabricated_cell.max_half_width == pytest.approx(403.2)
        assert fabricated_cell.min_half_width == pytest.approx(60.6)


class TestUnitCellSpec:
    def test_odd_exponent_rejected(self):
        with pytest.raises(GeometryError):
            UnitCellSpec(a=400.0, A=100.0, e=5, g=60.0)

    def test_sidewall_angle_range(self):
        with pytest.raises(GeometryError) as excinfo:
            UnitCellSpec(a=400.0, A=100.0, e=6, g=60.0, delta=90.0)
        assert "delta" in str(excinfo.value)

    def test_negative_amplitude_rejected(self):
        with pytest.raises(GeometryError):
            UnitCellSpec(a=400.0, A=-1.0, e=6, g=60.0)

    def test_from_dict_defaults(self):
        cell = UnitCellSpec.from_dict({"a": 400.0, "A": 100.0, "g": 50.0})
        assert cell.e == 6
        assert cell.delta == 54.0


class TestTaperSpec:
    def test_fabricated_taper_layout(self, taper):
        assert taper.cell_count == 18
        assert taper.max_half_width == pytest.approx(403.2)
        assert taper.length == pytest.approx(sum([108.4, 247.2, 299.2, 326.7, 401.3]) + 13 * 401.3)

    def test_discontinuity_at_periodic_section(self, taper_document):
        taper_document["cells"][4]["x_plus"] = 400.0
        with pytest.raises(GeometryError) as excinfo:
            TaperSpec.from_dict(taper_document)
        assert excinfo.value.index == 4
        assert "cells[4].x_plus" in str(excinfo.value)

    def test_discontinuity_at_waveguide(self, taper_document):
        taper_document["waveguide_half_width"] = 300.0
        with pytest.raises(GeometryError) as excinfo:
            TaperSpec.from_dict(taper_document)
        assert excinfo.value.index == 0

    def test_maximum_below_minimum_rejected(self, taper_document):
        taper_document["cells"][2]["x_plus"] = 100.0
        with pytest.raises(GeometryError) as excinfo:
            TaperSpec.from_dict(taper_document)
        assert excinfo.value.index == 2

    def test_without_taper_keeps_cell_count(self, taper):
        bare = taper.without_taper()
        assert bare.cells == ()
        assert bare.cell_count == taper.cell_count

    def test_document_round_trip(self, taper):
        assert TaperSpec.from_dict(taper.to_dict()) == taper

    def test_load_taper_from_yaml(self, tmp_path, taper):
        path = tmp_path / "device.yaml"
        path.write_text(yaml.safe_dump({"device": taper.to_dict()}))
        assert load_taper(path) == taper


class TestBuildTaper:
    def test_fabricated_taper_cell_maxima(self, taper):
        profile = build_taper(taper, spacing=1.0)
        maxima = profile.cell_maxima()
        assert len(maxima) == 18
        # boundaries fall between 1 nm samples; the cos^6 flank is flat there
        assert maxima[:5] == pytest.approx(TAPER_MAXIMA, abs=0.05)
        assert maxima[5:] == pytest.approx([403.2] * 13, abs=0.05)

    def test_first_half_of_cell_zero_matches_waveguide(self, taper):
        profile = build_taper(taper, spacing=1.0)
        first_half = profile.z < 108.4 / 2
        assert np.all(profile.x[first_half] == 303.2)

    def test_single_cell_quarter_spacing(self, fabricated_cell):
        profile = cell_profile(fabricated_cell, fabricated_cell.a / 4)
        A, g = fabricated_cell.A, fabricated_cell.g
        quarter = 2 * A * math.cos(math.pi / 4) ** 6 + g
        assert profile.z == pytest.approx([0, fabricated_cell.a / 4, fabricated_cell.a / 2, 3 * fabricated_cell.a / 4, fabricated_cell.a])
        assert profile.x == pytest.approx([2 * A + g, quarter, g, quarter, 2 * A + g], abs=1e-9)

    def test_degenerate_taper_is_constant(self):
        spec = TaperSpec(
            cells=(TaperCell(100.0, 250.0, 250.0), TaperCell(200.0, 250.0, 250.0)),
            e=6,
            waveguide_half_width=250.0,
            n_periodic=0,
            periodic_cell=UnitCellSpec(a=400.0, A=10.0, e=6, g=230.0),
        )
        profile = build_taper(spec, spacing=0.5)
        assert np.allclose(profile.x, 250.0)

    def test_resampling_invariance(self, taper):
        coarse = build_taper(taper, spacing=1.0)
        fine = build_taper(taper, spacing=0.5)
        assert np.allclose(fine.half_width_at(coarse.z), coarse.x, rtol=0, atol=1e-9)

    def test_profile_is_positive_and_increasing(self, taper):
        profile = build_taper(taper)
        assert np.all(np.diff(profile.z) > 0)
        assert np.all(profile.x > 0)

    def test_coarse_spacing_rejected(self, taper):
        with pytest.raises(GeometryError) as excinfo:
            build_taper(taper, spacing=10.0)
        assert excinfo.value.parameter == "spacing"
        assert excinfo.value.value == 10.0
        assert "fewer than 20 samples" in str(excinfo.value)

    def test_spacing_at_sample_limit_accepted(self, taper):
        profile = build_taper(taper, spacing=108.4 / 20)
        assert profile.sample_spacing == pytest.approx(5.42)

    def test_nonpositive_spacing_rejected(self, taper):
        with pytest.raises(DomainError):
            build_taper(taper, spacing=0.0)

    def test_cell_segment_index_checked(self, taper):
        with pytest.raises(DomainError):
            cell_segment_profile(taper, 18, 64)


class TestFillFraction:
    @staticmethod
    def _constant(x: float) -> CorrugationProfile:
        z = np.linspace(0.0, 10.0, 11)
        return CorrugationProfile(z=z, x=np.full(z.size, x), sample_spacing=1.0)

    def test_identity(self):
        assert fill_fraction(self._constant(100.0), 0.0, 10.0, 100.0) == pytest.approx(1.0)

    def test_quadratic_area_scaling(self):
        assert fill_fraction(self._constant(50.0), 2.5, 7.5, 100.0) == pytest.approx(0.25)

    def test_fabricated_cell_against_dense_integral(self, fabricated_cell):
        profile = cell_profile(fabricated_cell, 0.1)
        value = fill_fraction(profile, 0.0, fabricated_cell.a, 403.2)

        z = np.linspace(0.0, fabricated_cell.a, 40001)
        ratio = (corrugation_halfwidth(fabricated_cell, z) / 403.2) ** 2
        expected = trapezoid(ratio, z) / fabricated_cell.a
        assert value == pytest.approx(expected, rel=1e-5)

    def test_monotone_in_uniform_scaling(self, fabricated_cell):
        profile = cell_profile(fabricated_cell, 1.0)
        previous = 0.0
        for scale in (0.5, 0.8, 1.0, 1.2):
            scaled = CorrugationProfile(z=profile.z, x=profile.x * scale, sample_spacing=1.0)
            value = fill_fraction(scaled, 0.0, fabricated_cell.a, 403.2)
            assert value >= previous
            previous = value

    def test_empty_interval_rejected(self):
        with pytest.raises(DomainError):
            fill_fraction(self._constant(100.0), 5.0, 5.0, 100.0)

    def test_interval_outside_profile_rejected(self):
        with pytest.raises(DomainError):
            fill_fraction(self._constant(100.0), 5.0, 12.0, 100.0)


def test_export_profile(tmp_path, fabricated_cell):
    profile = cell_profile(fabricated_cell, 0.7)
    path = export_profile(profile, tmp_path / "profile.csv")

    assert path.read_text().splitlines()[0] == "z_nm,x_nm"
    frame = pd.read_csv(path, float_precision="round_trip")
    assert len(frame) == profile.z.size
    assert np.array_equal(frame["x_nm"].to_numpy(), profile.x)
    assert not (tmp_path / "profile.csv.tmp").exists()
