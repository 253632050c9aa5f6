"""Plot-ready artifact files: atomic CSV/JSON writers, CSV readers, run manifests."""

import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd

from dinosaur_readout.errors import ArtifactError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

FLOAT_FORMAT = "%.17g"
MANIFEST_NAME = "manifest.json"


def _atomic_target(path: PathLike) -> tuple[Path, Path]:
    target = Path(path).expanduser()
    tmp_path = target.with_suffix(target.suffix + ".tmp")
    try:
        tmp_path.parent.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ArtifactError(f"cannot create directory: {e}", target) from e
    return target, tmp_path


def write_csv(path: PathLike, columns: Mapping[str, Sequence[Any]]) -> Path:
    """Write named columns as a headed CSV, temp-then-rename.

    Floats are written with 17 significant digits so that re-reading
    reproduces every value bit for bit.
    """
    target, tmp_path = _atomic_target(path)
    frame = pd.DataFrame({name: np.asarray(values) for name, values in columns.items()})
    try:
        frame.to_csv(tmp_path, index=False, float_format=FLOAT_FORMAT)
        tmp_path.replace(target)
    except OSError as e:
        raise ArtifactError(f"cannot write CSV: {e}", target) from e
    logger.debug(f"Wrote {len(frame)} rows to {target}")
    return target


def write_json(path: PathLike, payload: Mapping[str, Any]) -> Path:
    """Write a JSON record with sorted keys, temp-then-rename."""
    target, tmp_path = _atomic_target(path)
    try:
        with open(tmp_path, "w") as f:
            json.dump(_jsonable(payload), f, indent=2, sort_keys=True)
            f.write("\n")
        tmp_path.replace(target)
    except OSError as e:
        raise ArtifactError(f"cannot write JSON: {e}", target) from e
    logger.debug(f"Wrote JSON record to {target}")
    return target


def read_csv(path: PathLike, required: Iterable[str]) -> pd.DataFrame:
    """Read a headed CSV and check that the required columns are present."""
    source = Path(path).expanduser()
    try:
        frame = pd.read_csv(source, float_precision="round_trip")
    except FileNotFoundError as e:
        raise ArtifactError("file not found", source) from e
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ArtifactError(f"cannot parse CSV: {e}", source) from e

    missing = [name for name in required if name not in frame.columns]
    if missing:
        raise ArtifactError(
            f"missing column(s) {', '.join(missing)}; found {list(frame.columns)}",
            source,
        )
    return frame


def read_json(path: PathLike) -> Dict[str, Any]:
    source = Path(path).expanduser()
    try:
        with open(source) as f:
            return json.load(f)
    except FileNotFoundError as e:
        raise ArtifactError("file not found", source) from e
    except (OSError, json.JSONDecodeError) as e:
        raise ArtifactError(f"cannot parse JSON: {e}", source) from e


def inputs_digest(config_echo: Mapping[str, Any], input_paths: Iterable[PathLike]) -> str:
    """SHA-256 over the canonical config echo followed by every input file's bytes."""
    digest = hashlib.sha256()
    digest.update(json.dumps(_jsonable(config_echo), sort_keys=True).encode())
    for path in input_paths:
        source = Path(path).expanduser()
        try:
            digest.update(source.read_bytes())
        except OSError as e:
            raise ArtifactError(f"cannot hash input: {e}", source) from e
    return digest.hexdigest()


def write_manifest(
    output_dir: PathLike,
    command: str,
    config_echo: Mapping[str, Any],
    input_paths: Iterable[PathLike],
    outputs: List[str],
    seed: Optional[int],
    tool_version: str,
) -> Path:
    """Write the per-run manifest next to the run's other artifacts."""
    paths = list(input_paths)
    manifest = {
        "tool_version": tool_version,
        "command": command,
        "seed": seed,
        "config": dict(config_echo),
        "inputs_sha256": inputs_digest(config_echo, paths),
        "outputs": sorted(outputs),
    }
    return write_json(Path(output_dir) / MANIFEST_NAME, manifest)


def _jsonable(value: Any) -> Any:
    if isinstance(value, Mapping):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, Path):
        return str(value)
    return value
