"""Run configuration: one flat YAML document per run, or a bundled preset."""

import copy
import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import yaml  # type: ignore
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, field_validator
from pydantic import ValidationError as SchemaError

from dinosaur_readout.crc import PulseSequence, TelegraphModel
from dinosaur_readout.errors import ConfigError
from dinosaur_readout.geometry import FABRICATED_TAPER, TaperSpec
from dinosaur_readout.readout import ReadoutModel, v2_readout_model
from dinosaur_readout.taperopt import OptimizationProblem

logger = logging.getLogger(__name__)

# Load environment variables from .env file
load_dotenv()

SCHEMA_VERSION = 1
COMMANDS = (
    "profile",
    "bands",
    "reflect",
    "converge",
    "optimize",
    "calibrate",
    "sat-reflect",
    "ssr",
    "ssr-sweep",
    "crc-filter",
    "crc-sim",
    "fit",
)


def default_output_dir() -> Path:
    return Path(os.environ.get("DINOSAUR_OUTPUT_DIR", "out")).expanduser()


def default_log_level() -> str:
    return os.environ.get("DINOSAUR_LOG_LEVEL", "INFO").upper()


class RunConfig(BaseModel):
    """Schema of a run document. Domain sections are validated by their own types."""

    model_config = ConfigDict(extra="forbid")

    schema_version: int = SCHEMA_VERSION
    command: Optional[str] = None
    inputs: Dict[str, str] = Field(default_factory=dict)
    output_dir: Optional[str] = None
    seed: Optional[int] = None
    settings: Dict[str, Any] = Field(default_factory=dict)
    device: Optional[Dict[str, Any]] = None
    readout: Optional[Dict[str, Any]] = None
    models: Optional[List[Dict[str, Any]]] = None
    sequence: Optional[Dict[str, Any]] = None
    telegraph: Optional[Dict[str, Any]] = None
    problem: Optional[Dict[str, Any]] = None

    @field_validator("schema_version")
    @classmethod
    def _known_schema(cls, value: int) -> int:
        if value != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {value}; this tool reads {SCHEMA_VERSION}")
        return value

    @field_validator("command")
    @classmethod
    def _known_command(cls, value: Optional[str]) -> Optional[str]:
        if value is not None and value not in COMMANDS:
            raise ValueError(f"unknown command '{value}'; expected one of {', '.join(COMMANDS)}")
        return value

    def setting(self, name: str, default: Any = None) -> Any:
        return self.settings.get(name, default)

    def taper(self) -> TaperSpec:
        """The device section, or the fabricated reflector when absent."""
        return TaperSpec.from_dict(self.device if self.device is not None else FABRICATED_TAPER)

    def readout_model(self) -> ReadoutModel:
        if self.readout is None:
            return v2_readout_model()
        return ReadoutModel.from_dict(self.readout)

    def readout_models(self) -> List[ReadoutModel]:
        if not self.models:
            raise ConfigError("ssr-sweep needs a 'models' list", "models", self.models)
        return [ReadoutModel.from_dict(m) for m in self.models]

    def pulse_sequence(self) -> PulseSequence:
        return PulseSequence.from_dict(self.sequence or {})

    def telegraph_model(self) -> TelegraphModel:
        if self.telegraph is None:
            raise ConfigError("crc-sim needs a 'telegraph' section", "telegraph", None)
        return TelegraphModel.from_dict(self.telegraph)

    def optimization_problem(self) -> OptimizationProblem:
        if self.problem is None:
            raise ConfigError("optimize needs a 'problem' section", "problem", None)
        return OptimizationProblem.from_dict(self.problem, self.taper())

    def echo(self) -> Dict[str, Any]:
        """Resolved document without the output directory, as recorded in manifests."""
        return self.model_dump(mode="json", exclude={"output_dir"})

    def input_paths(self) -> List[Path]:
        return [Path(p).expanduser() for _, p in sorted(self.inputs.items())]


PRESETS: Dict[str, Dict[str, Any]] = {
    "v2_readout": {
        "command": "ssr",
        "readout": v2_readout_model().to_dict(),
        "settings": {"threshold": 0, "readouts": 2, "dark_windows": 1},
    },
    "fabricated_taper": {
        "command": "reflect",
        "device": FABRICATED_TAPER,
        "settings": {"nu_lo": 260.0, "nu_hi": 380.0, "nu_step": 1.0, "loss": 0.0, "n_slices_per_cell": 32},
    },
    "fabricated_reflector": {
        "command": "optimize",
        "device": FABRICATED_TAPER,
        "problem": {
            "window": [290.0, 330.0],
            "free": [
                {"path": "cells[1].x_plus", "bounds": [320.0, 400.0]},
                {"path": "cells[2].x_plus", "bounds": [330.0, 400.0]},
                {"path": "cells[3].x_plus", "bounds": [340.0, 403.0]},
                {"path": "periodic_cell.g", "bounds": [40.0, 80.0]},
            ],
            "settings": {"grid_spacing": 2.0, "loss": 0.0, "n_slices_per_cell": 16},
        },
        "settings": {"budget": 200},
    },
}

# Alias of v2_readout.
PRESETS["si_table1"] = PRESETS["v2_readout"]


def parse_config(data: Dict[str, Any], source: str) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except SchemaError as e:
        problems = "; ".join(f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors())
        raise ConfigError(f"invalid run configuration ({problems})", "config", source) from e


def load_config(source: Union[str, Path]) -> RunConfig:
    """Resolve a preset name or read a YAML run document."""
    name = str(source)
    if name in PRESETS:
        logger.info(f"Using bundled preset '{name}'")
        return parse_config(copy.deepcopy(PRESETS[name]), name)

    path = Path(name).expanduser()
    try:
        with open(path, "r") as f:
            data = yaml.safe_load(f) or {}
    except FileNotFoundError as e:
        raise ConfigError(
            f"configuration file not found (presets: {', '.join(PRESETS)})", "config", name
        ) from e
    except yaml.YAMLError as e:
        raise ConfigError(f"invalid YAML: {e}", "config", name) from e
    if not isinstance(data, dict):
        raise ConfigError("run document must be a mapping", "config", name)
    logger.info(f"Loaded configuration from {path}")
    return parse_config(data, name)


def check_inputs(config: RunConfig) -> None:
    """Every named input file must exist before any computation starts."""
    for name, raw in sorted(config.inputs.items()):
        if not Path(raw).expanduser().is_file():
            raise ConfigError("input file does not exist", f"inputs.{name}", raw)


def save_config(config: RunConfig, destination: Union[str, Path]) -> Path:
    """Write the resolved run document as YAML, temp-then-rename."""
    path = Path(destination).expanduser()
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp_path = path.with_suffix(path.suffix + ".tmp")
    with open(tmp_path, "w") as f:
        yaml.safe_dump(config.echo(), f, sort_keys=True)
    tmp_path.replace(path)
    logger.debug(f"Saved run configuration to {path}")
    return path
