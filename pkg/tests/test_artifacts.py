"""Tests for artifact writers, readers and run manifests."""

import json

import numpy as np
import pytest

from dinosaur_readout.artifacts import (
    MANIFEST_NAME,
    inputs_digest,
    read_csv,
    read_json,
    write_csv,
    write_json,
    write_manifest,
)
from dinosaur_readout.errors import ArtifactError


def test_csv_floats_survive_a_round_trip(tmp_path, rng):
    values = rng.standard_normal(50) * 1e3
    path = write_csv(tmp_path / "values.csv", {"x": values})
    assert np.array_equal(read_csv(path, ["x"])["x"].to_numpy(), values)
    assert not (tmp_path / "values.csv.tmp").exists()


def test_csv_creates_parent_directories(tmp_path):
    path = write_csv(tmp_path / "a" / "b" / "c.csv", {"k": [1, 2]})
    assert path.read_text().splitlines() == ["k", "1", "2"]


def test_read_csv_missing_column(tmp_path):
    path = write_csv(tmp_path / "c.csv", {"k": [1]})
    with pytest.raises(ArtifactError) as excinfo:
        read_csv(path, ["k", "probability"])
    assert "probability" in str(excinfo.value)


def test_read_missing_files(tmp_path):
    with pytest.raises(ArtifactError):
        read_csv(tmp_path / "absent.csv", [])
    with pytest.raises(ArtifactError):
        read_json(tmp_path / "absent.json")


def test_read_json_rejects_garbage(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ArtifactError):
        read_json(path)


def test_json_converts_numpy_values(tmp_path):
    path = write_json(
        tmp_path / "record.json",
        {"count": np.int64(3), "value": np.float64(0.5), "flag": np.bool_(True), "grid": np.arange(3), "path": tmp_path},
    )
    record = json.loads(path.read_text())
    assert record == {"count": 3, "value": 0.5, "flag": True, "grid": [0, 1, 2], "path": str(tmp_path)}
    assert path.read_text().endswith("}\n")


class TestManifest:
    def test_contents(self, tmp_path):
        data = tmp_path / "shots.csv"
        data.write_text("crc_counts,readout_counts\n6,2\n")
        echo = {"command": "crc-filter", "seed": 1}
        path = write_manifest(tmp_path, "crc-filter", echo, [data], ["b.json", "a.csv"], 1, "1.0.0")

        assert path.name == MANIFEST_NAME
        manifest = read_json(path)
        assert manifest["outputs"] == ["a.csv", "b.json"]
        assert manifest["config"] == echo
        assert manifest["seed"] == 1
        assert manifest["tool_version"] == "1.0.0"
        assert manifest["inputs_sha256"] == inputs_digest(echo, [data])

    def test_digest_tracks_input_bytes(self, tmp_path):
        data = tmp_path / "shots.csv"
        data.write_text("crc_counts,readout_counts\n6,2\n")
        before = inputs_digest({"seed": 1}, [data])
        data.write_text("crc_counts,readout_counts\n6,3\n")
        assert inputs_digest({"seed": 1}, [data]) != before

    def test_digest_ignores_key_order(self):
        assert inputs_digest({"a": 1, "b": 2}, []) == inputs_digest({"b": 2, "a": 1}, [])

    def test_unreadable_input(self, tmp_path):
        with pytest.raises(ArtifactError):
            inputs_digest({}, [tmp_path / "absent.csv"])
