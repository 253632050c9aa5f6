"""Tests for run configuration loading."""

from pathlib import Path

import pytest
import yaml

from dinosaur_readout.config import (
    PRESETS,
    RunConfig,
    check_inputs,
    default_output_dir,
    load_config,
    save_config,
)
from dinosaur_readout.errors import ConfigError
from dinosaur_readout.geometry import fabricated_taper
from dinosaur_readout.readout import Convention


def _write(path: Path, document) -> Path:
    path.write_text(yaml.safe_dump(document))
    return path


class TestPresets:
    @pytest.mark.parametrize("name", sorted(PRESETS))
    def test_presets_validate(self, name):
        config = load_config(name)
        assert config.command == PRESETS[name]["command"]

    def test_v2_readout(self, si_model):
        config = load_config("v2_readout")
        assert config.readout_model() == si_model
        assert config.setting("readouts") == 2

    def test_si_table1_names_the_v2_readout(self, si_model):
        config = load_config("si_table1")
        assert config.command == "ssr"
        assert config.readout_model() == si_model
        config.settings["readouts"] = 1
        assert load_config("v2_readout").setting("readouts") == 2

    def test_preset_is_a_copy(self):
        load_config("fabricated_taper").settings["nu_lo"] = 1.0
        assert PRESETS["fabricated_taper"]["settings"]["nu_lo"] == 260.0

    def test_fabricated_reflector_problem(self):
        problem = load_config("fabricated_reflector").optimization_problem()
        assert [p.path for p in problem.free][-1] == "periodic_cell.g"
        assert problem.window == (290.0, 330.0)
        assert problem.base == fabricated_taper()


class TestLoadConfig:
    def test_yaml_document(self, tmp_path, taper_document):
        path = _write(
            tmp_path / "run.yaml",
            {"command": "reflect", "device": taper_document, "settings": {"nu_step": 2.0}, "seed": 5},
        )
        config = load_config(path)
        assert config.taper() == fabricated_taper()
        assert config.setting("nu_step") == 2.0
        assert config.seed == 5

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError) as excinfo:
            load_config(tmp_path / "absent.yaml")
        assert "v2_readout" in str(excinfo.value)

    def test_invalid_yaml(self, tmp_path):
        path = tmp_path / "broken.yaml"
        path.write_text("settings: [1, 2\n")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_document_must_be_mapping(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(_write(tmp_path / "list.yaml", [1, 2, 3]))

    @pytest.mark.parametrize(
        "document",
        [{"unknown_section": 1}, {"schema_version": 2}, {"command": "teleport"}, {"seed": "many"}],
    )
    def test_schema_violations(self, tmp_path, document):
        with pytest.raises(ConfigError):
            load_config(_write(tmp_path / "bad.yaml", document))

    def test_empty_document_uses_defaults(self, tmp_path):
        path = tmp_path / "empty.yaml"
        path.write_text("")
        config = load_config(path)
        assert config.taper() == fabricated_taper()
        assert config.readout_model().label == "v2_readout"


class TestSections:
    def test_missing_sections(self):
        config = RunConfig()
        for accessor in (config.readout_models, config.telegraph_model, config.optimization_problem):
            with pytest.raises(ConfigError):
                accessor()

    def test_readout_section(self, si_model):
        data = si_model.to_dict()
        data["convention"] = "DecayDensity"
        assert RunConfig(readout=data).readout_model().convention is Convention.DECAY_DENSITY

    def test_pulse_sequence_defaults(self):
        assert RunConfig().pulse_sequence().readout_window == 100.0


class TestInputsAndEcho:
    def test_missing_input_file(self, tmp_path):
        config = RunConfig(inputs={"shots": str(tmp_path / "shots.csv")})
        with pytest.raises(ConfigError) as excinfo:
            check_inputs(config)
        assert excinfo.value.parameter == "inputs.shots"

    def test_existing_input_file(self, tmp_path):
        path = tmp_path / "shots.csv"
        path.write_text("crc_counts,readout_counts\n")
        check_inputs(RunConfig(inputs={"shots": str(path)}))

    def test_echo_omits_output_dir(self):
        echo = RunConfig(output_dir="/tmp/somewhere", seed=3).echo()
        assert "output_dir" not in echo
        assert echo["seed"] == 3

    def test_saved_config_reloads(self, tmp_path):
        config = load_config("v2_readout").model_copy(update={"seed": 42})
        path = save_config(config, tmp_path / "config.yaml")
        assert load_config(path).echo() == config.echo()
        assert not (tmp_path / "config.yaml.tmp").exists()


def test_output_dir_from_environment(monkeypatch, tmp_path):
    monkeypatch.setenv("DINOSAUR_OUTPUT_DIR", str(tmp_path / "runs"))
    assert default_output_dir() == tmp_path / "runs"
    monkeypatch.delenv("DINOSAUR_OUTPUT_DIR")
    assert default_output_dir() == Path("out")
