"""Tests for reflectance calibration."""

import logging
import math
import unittest

import numpy as np
import pandas as pd
import pytest

from dinosaur_readout.calib import (
    CalibrationInputs,
    Measured,
    load_calibration_inputs,
    reflectance_from_saturation,
    reflectance_from_spectra,
    saturation_forward,
)
from dinosaur_readout.errors import ArtifactError, DomainError, ValidationError


def _inputs(sig_R, ref_R=1.0, sig_T=1.0, ref_T=1.0, eta_retro=0.97) -> CalibrationInputs:
    sig_R = np.atleast_1d(np.asarray(sig_R, dtype=float))
    nu = 300.0 + np.arange(sig_R.size, dtype=float)
    full = lambda v: np.broadcast_to(np.asarray(v, dtype=float), sig_R.shape).copy()  # noqa: E731
    return CalibrationInputs(
        nu=nu, I_sig_R=sig_R, I_ref_R=full(ref_R), I_sig_T=full(sig_T), I_ref_T=full(ref_T), eta_retro=eta_retro
    )


class TestMeasured(unittest.TestCase):
    """Test cases for first-order error propagation."""

    def test_sum_adds_in_quadrature(self):
        total = Measured(1.0, 0.3) + Measured(2.0, 0.4)
        self.assertEqual(total.value, 3.0)
        self.assertAlmostEqual(total.error, 0.5)

    def test_ratio_relative_errors(self):
        ratio = Measured(10.0, 1.0) / Measured(5.0, 0.5)
        self.assertEqual(ratio.value, 2.0)
        self.assertAlmostEqual(ratio.error, 2.0 * math.hypot(0.1, 0.1))

    def test_scalar_arithmetic(self):
        value = 2 * Measured(3.0, 0.1) - 1
        self.assertEqual(value.value, 5.0)
        self.assertAlmostEqual(value.error, 0.2)

    def test_negative_error_is_made_positive(self):
        self.assertEqual(Measured(1.0, -0.2).error, 0.2)
        self.assertEqual(str(Measured(0.5532, 0.0854)), "0.5532 ± 0.085")

    def test_division_by_zero_rejected(self):
        with self.assertRaises(DomainError):
            Measured(1.0, 0.1) / Measured(0.0, 0.1)


class TestSpectraCalibration:
    def test_formula(self):
        inputs = _inputs([0.3, 0.6], ref_R=[1.0, 2.0], sig_T=[0.5, 0.8], ref_T=[0.4, 1.0])
        result = reflectance_from_spectra(inputs)
        expected = np.array([0.3 / 1.0 * 0.97 * 0.4 / 0.5, 0.6 / 2.0 * 0.97 * 1.0 / 0.8])
        assert np.allclose(result.spectrum.R, expected, rtol=1e-12)
        assert not result.out_of_range.any()
        assert result.warnings == []

    def test_retroreflector_cancels_with_matching_transmission(self):
        result = reflectance_from_spectra(_inputs([0.6], sig_T=0.97))
        assert result.spectrum.R[0] == pytest.approx(0.6, rel=1e-12)

    def test_unmeasured_channels_book_as_scatter(self):
        result = reflectance_from_spectra(_inputs([0.2, 0.5]))
        assert np.all(result.spectrum.T == 0.0)
        assert np.allclose(result.spectrum.R + result.spectrum.S, 1.0)

    def test_zero_denominator_rejected(self):
        with pytest.raises(DomainError) as excinfo:
            reflectance_from_spectra(_inputs([0.3, 0.4], ref_R=[1.0, 0.0]))
        assert excinfo.value.parameter == "I_ref_R"
        assert "301.0 THz" in str(excinfo.value)

    def test_overshoot_is_flagged_not_clamped(self, caplog):
        with caplog.at_level(logging.WARNING, logger="dinosaur_readout.calib"):
            result = reflectance_from_spectra(_inputs([1.2, 0.5], eta_retro=1.0))
        assert result.spectrum.R[0] == pytest.approx(1.2)
        assert result.out_of_range.tolist() == [True, False]
        assert len(result.warnings) == 1
        assert any("exceeds 1.05" in r.message for r in caplog.records)

    def test_slight_overshoot_is_silent(self):
        result = reflectance_from_spectra(_inputs([1.02], eta_retro=1.0))
        assert result.out_of_range.tolist() == [True]
        assert result.warnings == []

    def test_grid_mismatch_rejected(self):
        with pytest.raises(ValidationError):
            CalibrationInputs(
                nu=[300.0, 301.0], I_sig_R=[1.0], I_ref_R=[1.0, 1.0], I_sig_T=[1.0, 1.0], I_ref_T=[1.0, 1.0]
            )

    def test_retroreflector_range(self):
        with pytest.raises(ValidationError):
            _inputs([0.5], eta_retro=1.2)


class TestSaturationCalibration:
    def test_measured_saturation_intensities(self):
        result = reflectance_from_saturation(Measured(174.5, 6.9), Measured(224.7, 8.6))
        assert result.R_V2.value == pytest.approx(0.5532, abs=5e-4)
        assert result.R_V2.error == pytest.approx(0.0855, abs=5e-4)
        assert result.collection_fraction == pytest.approx(0.7766, abs=5e-4)

    def test_equal_intensities_mean_full_reflection(self):
        result = reflectance_from_saturation(200.0, 200.0)
        assert result.R_V2.value == pytest.approx(1.0)
        assert result.collection_fraction == pytest.approx(1.0)

    def test_forward_model_inverts(self):
        I_s_ref = saturation_forward(224.7, 0.5)
        assert reflectance_from_saturation(I_s_ref, 224.7).R_V2.value == pytest.approx(0.5)

    def test_nonpositive_waveguide_intensity_rejected(self):
        with pytest.raises(DomainError):
            reflectance_from_saturation(174.5, 0.0)

    def test_to_dict(self):
        record = reflectance_from_saturation(Measured(174.5, 6.9), Measured(224.7, 8.6)).to_dict()
        assert set(record) == {"I_s_ref", "I_s_wg", "R_V2", "collection_fraction"}
        assert record["I_s_ref"] == {"value": 174.5, "error": 6.9}


class TestLoadCalibrationInputs:
    @staticmethod
    def _write(path, nu, intensity):
        pd.DataFrame({"nu_THz": nu, "intensity": intensity}).to_csv(path, index=False)
        return path

    def test_shared_grid(self, tmp_path):
        nu = [300.0, 301.0, 302.0]
        paths = [self._write(tmp_path / f"{name}.csv", nu, [1.0, 1.0, 1.0]) for name in ("a", "b", "c", "d")]
        inputs = load_calibration_inputs(*paths)
        assert inputs.nu.tolist() == nu
        assert inputs.eta_retro == 0.97

    def test_grid_mismatch_rejected(self, tmp_path):
        paths = [self._write(tmp_path / f"{name}.csv", [300.0, 301.0], [1.0, 1.0]) for name in ("a", "b", "c")]
        paths.append(self._write(tmp_path / "d.csv", [300.0, 301.5], [1.0, 1.0]))
        with pytest.raises(ValidationError) as excinfo:
            load_calibration_inputs(*paths)
        assert excinfo.value.parameter == "I_ref_T"

    def test_missing_column_rejected(self, tmp_path):
        bad = tmp_path / "bad.csv"
        pd.DataFrame({"nu_THz": [300.0], "counts": [1.0]}).to_csv(bad, index=False)
        with pytest.raises(ArtifactError):
            load_calibration_inputs(bad, bad, bad, bad)
