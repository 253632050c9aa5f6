"""Tests for charge-resonance-check post-selection."""

import json
import math

import numpy as np
import pytest
from scipy.stats import poisson

from dinosaur_readout.calib import Measured
from dinosaur_readout.crc import (
    PulseSequence,
    ShotRecord,
    TelegraphModel,
    analyze,
    export_report,
    filter_shots,
    fit_poisson,
    read_shots,
    rescale_to_rate,
    saturation_points,
    simulate_crc,
    threshold_scan,
    write_shots,
)
from dinosaur_readout.errors import ArtifactError, ConfigError, DomainError, ValidationError


def _records(pairs):
    return [ShotRecord(c, r) for c, r in pairs]


@pytest.fixture
def telegraph() -> TelegraphModel:
    return TelegraphModel(rate_on=1e6, rate_off=1e3, p_on=0.5)


class TestFilterShots:
    def test_threshold_is_strict(self):
        result = filter_shots(_records([(5, 1), (6, 2), (4, 3), (10, 4)]), threshold=5)
        assert [r.readout_counts for r in result.kept] == [2, 4]
        assert result.discard_fraction == 0.5
        assert result.total == 4

    def test_filter_is_idempotent(self, rng):
        records = _records(zip(rng.poisson(6.0, 500), rng.poisson(3.0, 500)))
        once = filter_shots(records, 5)
        twice = filter_shots(once.kept, 5)
        assert twice.kept == once.kept
        assert twice.discard_fraction == 0.0

    def test_kept_count_matches_direct_count(self, rng):
        crc = rng.poisson(5.0, 10_000)
        records = _records(zip(crc, rng.poisson(2.0, 10_000)))
        result = filter_shots(records, 5)
        assert len(result.kept) == int(np.sum(crc > 5))

    def test_empty_input_rejected(self):
        with pytest.raises(DomainError):
            filter_shots([], 5)

    def test_negative_threshold_rejected(self):
        with pytest.raises(DomainError):
            filter_shots(_records([(1, 1)]), -1)


class TestShotRecord:
    @pytest.mark.parametrize("pair", [(-1, 0), (0, 1.5)])
    def test_counts_must_be_nonnegative_integers(self, pair):
        with pytest.raises(ValidationError):
            ShotRecord(*pair)

    def test_integral_floats_are_accepted(self):
        assert ShotRecord(3.0, 4.0) == ShotRecord(3, 4)


class TestPoissonFit:
    def test_mean_and_error(self):
        records = _records([(9, 10), (9, 11)])
        assert fit_poisson(records) == (10.5, pytest.approx(math.sqrt(10.5)))

    def test_rate_conversion(self):
        rate = rescale_to_rate(Measured(10.5, math.sqrt(10.5)), 100.0)
        assert rate.value == pytest.approx(105_000.0)
        assert rate.error == pytest.approx(32_404, rel=1e-4)

    def test_nonpositive_window_rejected(self):
        with pytest.raises(DomainError):
            rescale_to_rate((1.0, 1.0), 0.0)

    def test_empty_fit_rejected(self):
        with pytest.raises(DomainError):
            fit_poisson([])


class TestAnalyze:
    def test_report(self):
        result = analyze(_records([(9, 10), (9, 11), (2, 0)]), threshold=5, readout_window=100.0)
        assert result.lambda_hat == 10.5
        assert result.lambda_err == pytest.approx(3.24, abs=5e-3)
        assert result.rate == pytest.approx(105_000.0)
        assert result.discard_fraction == pytest.approx(1 / 3)

    def test_everything_discarded(self, caplog):
        result = analyze(_records([(1, 10), (2, 11)]), threshold=5)
        assert result.kept == []
        assert result.discard_fraction == 1.0
        assert result.lambda_hat is None
        assert any("failed the CRC" in r.message for r in caplog.records)

    def test_threshold_scan(self, rng):
        records = _records(zip(rng.poisson(6.0, 1000), rng.poisson(3.0, 1000)))
        results = threshold_scan(records, [0, 3, 6, 9])
        discards = [r.discard_fraction for r in results]
        assert discards == sorted(discards)


class TestSimulation:
    def test_conditional_mean_matches_telegraph(self, telegraph):
        sequence = PulseSequence(crc_window=20.0, readout_window=100.0)
        records = simulate_crc(sequence, telegraph, 20_000, seed=4)
        result = analyze(records, threshold=5, readout_window=100.0)

        on = telegraph.p_on * poisson.sf(5, 20.0)
        off = (1 - telegraph.p_on) * poisson.sf(5, 0.02)
        expected = (on * 100.0 + off * 0.1) / (on + off)
        assert result.lambda_hat == pytest.approx(expected, abs=0.5)
        assert result.discard_fraction == pytest.approx(1 - on - off, abs=0.02)

    def test_fixed_seed_is_reproducible(self, telegraph):
        first = simulate_crc(PulseSequence(), telegraph, 2000, seed=8)
        assert first == simulate_crc(PulseSequence(), telegraph, 2000, seed=8)

    def test_shot_count_checked(self, telegraph):
        with pytest.raises(DomainError):
            simulate_crc(PulseSequence(), telegraph, 0)

    def test_saturation_points_skip_empty_powers(self, telegraph):
        dark = TelegraphModel(rate_on=0.0, rate_off=0.0, p_on=0.5)
        series = {
            20.0: simulate_crc(PulseSequence(), telegraph, 500, seed=1),
            10.0: simulate_crc(PulseSequence(), dark, 500, seed=2),
        }
        points = saturation_points(series, threshold=5)
        assert [p for p, _, _ in points] == [20.0]
        assert points[0][1] > 0


class TestModels:
    def test_durations_must_be_positive(self):
        with pytest.raises(ValidationError):
            PulseSequence(crc_window=0.0)

    def test_probability_range(self):
        with pytest.raises(ValidationError):
            TelegraphModel(rate_on=1.0, rate_off=0.0, p_on=1.5)

    def test_missing_telegraph_key(self):
        with pytest.raises(ConfigError):
            TelegraphModel.from_dict({"rate_on": 1.0, "p_on": 0.5})

    def test_sequence_defaults(self):
        assert PulseSequence.from_dict({}) == PulseSequence(1.0, 20.0, 100.0)


class TestShotFiles:
    def test_written_shots_read_back(self, tmp_path, telegraph):
        records = simulate_crc(PulseSequence(), telegraph, 100, seed=3)
        path = write_shots(records, tmp_path / "shots.csv")
        assert path.read_text().splitlines()[0] == "crc_counts,readout_counts"
        assert read_shots(path) == records

    def test_missing_column_rejected(self, tmp_path):
        path = tmp_path / "shots.csv"
        path.write_text("crc,readout\n1,2\n")
        with pytest.raises(ArtifactError):
            read_shots(path)

    def test_report_serialises_missing_fit_as_null(self, tmp_path):
        result = analyze(_records([(1, 1)]), threshold=5)
        export_report(result, tmp_path / "report.json")
        record = json.loads((tmp_path / "report.json").read_text())
        assert record["kept"] == 0
        assert record["rate_cps"] is None
