"""Charge-resonance-check post-selection of single-shot records.

Each shot is a repump pulse, a CRC window and a readout window. Shots whose
CRC count does not exceed the threshold are discarded; the retained readout
counts are fitted with a Poisson distribution.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from dinosaur_readout.artifacts import read_csv, write_csv, write_json
from dinosaur_readout.calib import Measured
from dinosaur_readout.errors import ConfigError, DomainError, ValidationError

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 5
US_PER_SECOND = 1e6
MC_BATCH_SIZE = 100_000


@dataclass(frozen=True)
class PulseSequence:
    """Durations in microseconds."""

    repump_duration: float = 1.0
    crc_window: float = 20.0
    readout_window: float = 100.0

    def __post_init__(self):
        for name in ("repump_duration", "crc_window", "readout_window"):
            value = getattr(self, name)
            if not value > 0:
                raise ValidationError("duration must be positive", name, value)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PulseSequence":
        return cls(
            repump_duration=float(data.get("repump_duration", 1.0)),
            crc_window=float(data.get("crc_window", 20.0)),
            readout_window=float(data.get("readout_window", 100.0)),
        )

    def to_dict(self) -> Dict[str, float]:
        return {
            "repump_duration": self.repump_duration,
            "crc_window": self.crc_window,
            "readout_window": self.readout_window,
        }


@dataclass(frozen=True)
class TelegraphModel:
    """Two-state emitter: on with probability p_on, rates in counts/s."""

    rate_on: float
    rate_off: float
    p_on: float

    def __post_init__(self):
        if not 0 <= self.p_on <= 1:
            raise ValidationError("p_on must lie in [0, 1]", "p_on", self.p_on)
        for name in ("rate_on", "rate_off"):
            if not getattr(self, name) >= 0:
                raise ValidationError("rates must be >= 0", name, getattr(self, name))

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TelegraphModel":
        try:
            return cls(
                rate_on=float(data["rate_on"]),
                rate_off=float(data["rate_off"]),
                p_on=float(data["p_on"]),
            )
        except KeyError as e:
            raise ConfigError("missing telegraph key", str(e), None) from e

    def to_dict(self) -> Dict[str, float]:
        return {"rate_on": self.rate_on, "rate_off": self.rate_off, "p_on": self.p_on}


@dataclass(frozen=True)
class ShotRecord:
    crc_counts: int
    readout_counts: int

    def __post_init__(self):
        for name in ("crc_counts", "readout_counts"):
            value = getattr(self, name)
            if int(value) != value or value < 0:
                raise ValidationError("counts must be nonnegative integers", name, value)
            object.__setattr__(self, name, int(value))


@dataclass
class FilterResult:
    threshold: int
    kept: List[ShotRecord]
    total: int
    discard_fraction: float
    lambda_hat: Optional[float] = None
    lambda_err: Optional[float] = None
    rate: Optional[float] = None
    rate_err: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "threshold": self.threshold,
            "kept": len(self.kept),
            "total": self.total,
            "discard_fraction": self.discard_fraction,
            "lambda_hat": self.lambda_hat,
            "lambda_err": self.lambda_err,
            "rate_cps": self.rate,
            "rate_err_cps": self.rate_err,
        }


def filter_shots(records: Sequence[ShotRecord], threshold: int = DEFAULT_THRESHOLD) -> FilterResult:
    """Keep the shots with crc_counts strictly above threshold."""
    if not records:
        raise DomainError("no shot records to filter", "records", 0)
    if threshold < 0:
        raise DomainError("threshold must be >= 0", "threshold", threshold)
    kept = [r for r in records if r.crc_counts > threshold]
    discard = 1.0 - len(kept) / len(records)
    logger.debug(f"CRC > {threshold}: kept {len(kept)} of {len(records)}")
    return FilterResult(threshold=threshold, kept=kept, total=len(records), discard_fraction=discard)


def fit_poisson(kept: Sequence[ShotRecord]) -> Tuple[float, float]:
    """Maximum-likelihood Poisson mean of the readout counts and its sqrt(lambda) error."""
    if not kept:
        raise DomainError("no retained shots to fit", "kept", 0)
    lambda_hat = float(np.mean([r.readout_counts for r in kept]))
    return lambda_hat, float(np.sqrt(lambda_hat))


def rescale_to_rate(counts: Union[Measured, Tuple[float, float]], window: float) -> Measured:
    """Counts per window (us) to counts per second."""
    if not window > 0:
        raise DomainError("window must be positive", "window", window)
    counts = counts if isinstance(counts, Measured) else Measured(*counts)
    return counts * (US_PER_SECOND / window)


def analyze(
    records: Sequence[ShotRecord],
    threshold: int = DEFAULT_THRESHOLD,
    readout_window: float = 100.0,
) -> FilterResult:
    """Filter, fit the retained readouts and convert to a count rate."""
    result = filter_shots(records, threshold)
    if not result.kept:
        logger.warning(f"Every shot failed the CRC > {threshold} check")
        return result
    lambda_hat, lambda_err = fit_poisson(result.kept)
    rate = rescale_to_rate(Measured(lambda_hat, lambda_err), readout_window)
    result.lambda_hat, result.lambda_err = lambda_hat, lambda_err
    result.rate, result.rate_err = rate.value, rate.error
    return result


def threshold_scan(
    records: Sequence[ShotRecord],
    thresholds: Sequence[int],
    readout_window: float = 100.0,
) -> List[FilterResult]:
    return [analyze(records, t, readout_window) for t in thresholds]


def saturation_points(
    series: Mapping[float, Sequence[ShotRecord]],
    threshold: int = DEFAULT_THRESHOLD,
    readout_window: float = 100.0,
) -> List[Tuple[float, float, float]]:
    """(power, rate, rate error) per excitation power, after CRC post-selection.

    Powers whose shots all fail the check are skipped.
    """
    points = []
    for power in sorted(series):
        result = analyze(series[power], threshold, readout_window)
        if result.rate is None:
            logger.warning(f"No retained shots at P={power}; point skipped")
            continue
        points.append((float(power), result.rate, result.rate_err))
    return points


def simulate_crc(
    sequence: PulseSequence,
    telegraph: TelegraphModel,
    shots: int,
    seed: Optional[int] = None,
) -> List[ShotRecord]:
    """Synthetic shots from a two-state emitter whose state is fixed within a shot."""
    if int(shots) != shots or shots < 1:
        raise DomainError("shots must be a positive integer", "shots", shots)
    n_batches = -(-int(shots) // MC_BATCH_SIZE)
    children = np.random.SeedSequence(seed).spawn(n_batches)

    crc_parts, readout_parts = [], []
    remaining = int(shots)
    for child in children:
        rng = np.random.default_rng(child)
        size = min(MC_BATCH_SIZE, remaining)
        remaining -= size
        on = rng.random(size) < telegraph.p_on
        rate = np.where(on, telegraph.rate_on, telegraph.rate_off) / US_PER_SECOND
        crc_parts.append(rng.poisson(rate * sequence.crc_window))
        readout_parts.append(rng.poisson(rate * sequence.readout_window))

    crc = np.concatenate(crc_parts)
    readout = np.concatenate(readout_parts)
    logger.info(f"Simulated {shots} CRC shots (p_on={telegraph.p_on})")
    return [ShotRecord(int(c), int(r)) for c, r in zip(crc, readout)]


def read_shots(path: Union[str, Path]) -> List[ShotRecord]:
    frame = read_csv(path, required=("crc_counts", "readout_counts"))
    return [
        ShotRecord(c.item(), r.item())
        for c, r in zip(frame["crc_counts"].to_numpy(), frame["readout_counts"].to_numpy())
    ]


def write_shots(records: Sequence[ShotRecord], destination: Union[str, Path]) -> Path:
    return write_csv(
        destination,
        {
            "crc_counts": np.array([r.crc_counts for r in records], dtype=np.int64),
            "readout_counts": np.array([r.readout_counts for r in records], dtype=np.int64),
        },
    )


def export_report(result: FilterResult, destination: Union[str, Path]) -> Path:
    return write_json(destination, result.to_dict())
