"""Photon-number statistics of optical single-shot spin readout.

A bright-state shot emits at lambda_b until intersystem crossing at a random
time t, then at the dark rate lambda_d for the rest of the window T. The
crossing time follows a bi-exponential with weights a', a'' and rates
gamma', gamma''. Two readings of the crossing kernel are supported, see
``Convention``.

Rates lambda_* are given in counts/s and used internally in counts/us;
gamma_* are in 1/us and T in us.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
from scipy.integrate import quad_vec
from scipy.stats import poisson

from dinosaur_readout.artifacts import write_csv, write_json
from dinosaur_readout.errors import (
    ConfigError,
    ConsistencyError,
    DomainError,
    QuadratureError,
    ToolkitError,
    ValidationError,
)

logger = logging.getLogger(__name__)

PER_SECOND_TO_PER_US = 1e-6
DEFAULT_K_MAX = 64
QUAD_EPSABS = 1e-9
NORMALIZATION_TOLERANCE = 1e-6
WEIGHT_TOLERANCE = 1e-9
MC_BATCH_SIZE = 100_000


class Convention(Enum):
    """How the bi-exponential crossing kernel weights the emission time."""

    KERNEL_NORMALIZED = "KernelNormalized"
    DECAY_DENSITY = "DecayDensity"

    @classmethod
    def from_string(cls, value: Union[str, "Convention"]) -> "Convention":
        if isinstance(value, cls):
            return value
        normalized = str(value).lower().replace("_", "").replace("-", "").strip()
        for member in cls:
            if member.value.lower() == normalized:
                return member
        raise ValidationError(
            "convention must be 'KernelNormalized' or 'DecayDensity'", "convention", value
        )


class SimulationMode(Enum):
    BRIGHT_DOUBLE = "bright_double"
    DARK_SINGLE = "dark_single"

    @classmethod
    def from_string(cls, value: Union[str, "SimulationMode"]) -> "SimulationMode":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower().strip())
        except ValueError as e:
            raise ValidationError("mode must be 'bright_double' or 'dark_single'", "mode", value) from e


@dataclass(frozen=True)
class ReadoutModel:
    lambda_b: float
    lambda_d: float
    a_prime: float
    a_dprime: float
    gamma_prime: float
    gamma_dprime: float
    T: float
    convention: Convention = Convention.KERNEL_NORMALIZED
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "convention", Convention.from_string(self.convention))
        for name in ("lambda_b", "lambda_d", "a_prime", "a_dprime", "gamma_prime", "gamma_dprime"):
            value = getattr(self, name)
            if not value >= 0:
                raise ValidationError("must be >= 0", name, value)
        if not math.isclose(self.a_prime + self.a_dprime, 1.0, rel_tol=0.0, abs_tol=WEIGHT_TOLERANCE):
            raise ValidationError(f"a' + a'' must equal 1, got {self.a_prime + self.a_dprime}", "a_prime", self.a_prime)
        if not self.T > 0:
            raise ValidationError("readout window must be positive", "T", self.T)
        if self.lambda_b < self.lambda_d:
            raise ValidationError(f"bright rate below dark rate {self.lambda_d}", "lambda_b", self.lambda_b)
        if self.lambda_b == self.lambda_d:
            logger.warning(f"Readout model without contrast: lambda_b = lambda_d = {self.lambda_b}")

    @property
    def rate_bright(self) -> float:
        """lambda_b in counts per microsecond."""
        return self.lambda_b * PER_SECOND_TO_PER_US

    @property
    def rate_dark(self) -> float:
        return self.lambda_d * PER_SECOND_TO_PER_US

    @property
    def components(self) -> List[tuple]:
        return [(self.a_prime, self.gamma_prime), (self.a_dprime, self.gamma_dprime)]

    def mean_counts(self, t: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        """Poisson mean of a shot whose crossing happens at time t."""
        return self.rate_bright * t + self.rate_dark * (self.T - t)

    def replace(self, **changes: Any) -> "ReadoutModel":
        data = self.to_dict()
        data.update(changes)
        return ReadoutModel.from_dict(data)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ReadoutModel":
        try:
            return cls(
                lambda_b=float(data["lambda_b"]),
                lambda_d=float(data["lambda_d"]),
                a_prime=float(data["a_prime"]),
                a_dprime=float(data["a_dprime"]),
                gamma_prime=float(data["gamma_prime"]),
                gamma_dprime=float(data["gamma_dprime"]),
                T=float(data["T"]),
                convention=data.get("convention", Convention.KERNEL_NORMALIZED),
                label=str(data.get("label", "")),
            )
        except KeyError as e:
            raise ConfigError("missing readout model key", str(e), None) from e

    def to_dict(self) -> Dict[str, Any]:
        return {
            "lambda_b": self.lambda_b,
            "lambda_d": self.lambda_d,
            "a_prime": self.a_prime,
            "a_dprime": self.a_dprime,
            "gamma_prime": self.gamma_prime,
            "gamma_dprime": self.gamma_dprime,
            "T": self.T,
            "convention": self.convention.value,
            "label": self.label,
        }


def v2_readout_model(convention: Union[str, Convention] = Convention.KERNEL_NORMALIZED) -> ReadoutModel:
    """Readout parameters of the measured V2 centre."""
    return ReadoutModel(
        lambda_b=105e3,
        lambda_d=490.0,
        a_prime=0.768,
        a_dprime=0.232,
        gamma_prime=1 / 0.48,
        gamma_dprime=1 / 3.15,
        T=10.0,
        convention=Convention.from_string(convention),
        label="v2_readout",
    )


@dataclass(frozen=True)
class PhotonPMF:
    """P(k) for k = 0..k_max, with an upper bound on the mass beyond k_max."""

    probabilities: np.ndarray
    truncation_bound: float = 0.0

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise ValidationError("probabilities must be a nonempty 1D array", "probabilities", p.shape)
        if np.any(p < 0):
            raise ValidationError("probabilities must be >= 0", "probabilities", float(p.min()))
        total = float(p.sum())
        if total > 1 + NORMALIZATION_TOLERANCE or total < 1 - NORMALIZATION_TOLERANCE - self.truncation_bound:
            raise ConsistencyError(f"photon-number distribution sums to {total}")
        object.__setattr__(self, "probabilities", p)

    @property
    def k_max(self) -> int:
        return self.probabilities.size - 1

    @property
    def mean(self) -> float:
        return float(np.dot(np.arange(self.probabilities.size), self.probabilities))

    def tail(self, threshold: int) -> float:
        """P(k > threshold)."""
        if threshold < 0:
            return float(self.probabilities.sum())
        return float(self.probabilities[int(threshold) + 1 :].sum())

    def convolve(self, other: "PhotonPMF") -> "PhotonPMF":
        """Distribution of the sum of two independent counts, on this pmf's support."""
        full = np.convolve(self.probabilities, other.probabilities)
        kept = full[: self.probabilities.size]
        dropped = float(full[self.probabilities.size :].sum())
        return PhotonPMF(kept, self.truncation_bound + other.truncation_bound + dropped)

    def to_columns(self) -> Dict[str, np.ndarray]:
        return {"k": np.arange(self.probabilities.size), "probability": self.probabilities}


@dataclass
class SSRResult:
    threshold: int
    fidelity: float
    success_rate: float
    discard_fraction: float
    pmf_bright: PhotonPMF
    pmf_dark: PhotonPMF
    convention: Convention = Convention.KERNEL_NORMALIZED

    def to_dict(self) -> Dict[str, Any]:
        return {
            "threshold": self.threshold,
            "fidelity": self.fidelity,
            "success_rate": self.success_rate,
            "discard_fraction": self.discard_fraction,
            "convention": self.convention.value,
        }


@dataclass
class SweepRow:
    label: str
    fidelity: float
    success_rate: float
    error: Optional[str] = None


def _auto_k_max(mean: float, k_max: int) -> int:
    needed = int(math.ceil(mean + 10 * math.sqrt(mean) + 20))
    if needed > k_max:
        logger.debug(f"Extending k_max from {k_max} to {needed} for mean {mean:.3f}")
    return max(k_max, needed)


def pmf_dark(model: ReadoutModel, k_max: int = DEFAULT_K_MAX, windows: int = 1) -> PhotonPMF:
    """Poisson(lambda_d * T) counts of the dark state, over ``windows`` readout windows."""
    if windows < 1:
        raise DomainError("need at least one readout window", "windows", windows)
    mu = model.rate_dark * model.T * windows
    k_max = _auto_k_max(mu, k_max)
    k = np.arange(k_max + 1)
    return PhotonPMF(poisson.pmf(k, mu), float(poisson.sf(k_max, mu)))


def _crossing_weights(model: ReadoutModel):
    """Weight function on [0, T] and the atom at T, both normalised to total mass 1."""
    T = model.T
    if model.convention is Convention.KERNEL_NORMALIZED:
        norm = sum(a * (-math.expm1(-g * T) / g if g > 0 else T) for a, g in model.components)

        def weight(t: float) -> float:
            return sum(a * math.exp(-g * t) for a, g in model.components) / norm

        return weight, 0.0

    def density(t: float) -> float:
        return sum(a * g * math.exp(-g * t) for a, g in model.components)

    survival = sum(a * math.exp(-g * T) for a, g in model.components)
    return density, survival


def pmf_bright_single(model: ReadoutModel, k_max: int = DEFAULT_K_MAX) -> PhotonPMF:
    """Bright-state counts of one readout, averaged over the crossing time.

    Each k is integrated adaptively to an absolute tolerance of 1e-9.
    """
    k_max = _auto_k_max(model.rate_bright * model.T, k_max)
    k = np.arange(k_max + 1)
    weight, survival = _crossing_weights(model)

    def integrand(t: float) -> np.ndarray:
        return weight(t) * poisson.pmf(k, model.mean_counts(t))

    values, achieved, info = quad_vec(integrand, 0.0, model.T, epsabs=QUAD_EPSABS, epsrel=0.0, norm="max", full_output=True)
    if not info.success:
        raise QuadratureError(f"bright-state quadrature did not converge: {info.message}", achieved=float(achieved))
    if survival:
        values = values + survival * poisson.pmf(k, model.rate_bright * model.T)

    bound = float(poisson.sf(k_max, model.rate_bright * model.T))
    logger.debug(f"Single-readout pmf: k_max={k_max}, quadrature error {achieved:.2e}, p(0)={values[0]:.6f}")
    return PhotonPMF(np.maximum(values, 0.0), bound)


def pmf_bright(model: ReadoutModel, readouts: int = 2, k_max: int = DEFAULT_K_MAX) -> PhotonPMF:
    """Counts summed over ``readouts`` independent readouts of the bright state."""
    if int(readouts) != readouts or readouts < 1:
        raise DomainError("readouts must be a positive integer", "readouts", readouts)
    single = pmf_bright_single(model, _auto_k_max(readouts * model.rate_bright * model.T, k_max))
    total = single
    for _ in range(int(readouts) - 1):
        total = total.convolve(single)
    return total


def pmf_bright_double(model: ReadoutModel, k_max: int = DEFAULT_K_MAX) -> PhotonPMF:
    """Nuclear-spin-assisted double readout: self-convolution of the single readout."""
    return pmf_bright(model, readouts=2, k_max=k_max)


def ssr_metrics(
    model: ReadoutModel,
    threshold: int = 0,
    readouts: int = 2,
    dark_windows: int = 1,
    k_max: int = DEFAULT_K_MAX,
) -> SSRResult:
    """Fidelity and success rate of the readout 'bright if k > threshold'.

    The dark state is compared over ``dark_windows`` windows of length T.
    """
    if int(threshold) != threshold or threshold < 0:
        raise DomainError("threshold must be a nonnegative integer", "threshold", threshold)
    threshold = int(threshold)
    bright = pmf_bright(model, readouts, k_max)
    dark = pmf_dark(model, k_max, windows=dark_windows)

    success = bright.tail(threshold)
    false_positive = float(poisson.sf(threshold, model.rate_dark * model.T * dark_windows))
    if success + false_positive == 0:
        raise DomainError("both tail probabilities vanish; fidelity undefined", "threshold", threshold)
    fidelity = success / (success + false_positive)
    return SSRResult(
        threshold=threshold,
        fidelity=fidelity,
        success_rate=success,
        discard_fraction=1.0 - success,
        pmf_bright=bright,
        pmf_dark=dark,
        convention=model.convention,
    )


def threshold_scan(
    model: ReadoutModel,
    thresholds: Sequence[int],
    readouts: int = 2,
    dark_windows: int = 1,
) -> List[SSRResult]:
    return [ssr_metrics(model, t, readouts, dark_windows) for t in thresholds]


def sweep_metrics(
    models: Sequence[ReadoutModel],
    threshold: int = 0,
    readouts: int = 2,
    dark_windows: int = 1,
) -> List[SweepRow]:
    """ssr_metrics per model in order; failures are recorded per row."""
    if not models:
        raise DomainError("sweep needs at least one model", "models", 0)
    rows = []
    for index, model in enumerate(models):
        label = model.label or f"model[{index}]"
        try:
            result = ssr_metrics(model, threshold, readouts, dark_windows)
        except ToolkitError as e:
            logger.warning(f"Sweep entry {label} failed: {e}")
            rows.append(SweepRow(label=label, fidelity=math.nan, success_rate=math.nan, error=str(e)))
            continue
        rows.append(SweepRow(label=label, fidelity=result.fidelity, success_rate=result.success_rate))
    return rows


def _sample_crossing_times(model: ReadoutModel, rng: np.random.Generator, size: int) -> np.ndarray:
    T = model.T
    amplitudes = np.array([a for a, _ in model.components])
    gammas = np.array([g for _, g in model.components])

    if model.convention is Convention.KERNEL_NORMALIZED:
        masses = np.where(gammas > 0, -np.expm1(-gammas * T) / np.where(gammas > 0, gammas, 1.0), T)
        probs = amplitudes * masses
        which = rng.choice(gammas.size, size=size, p=probs / probs.sum())
        gamma = gammas[which]
        u = rng.random(size)
        safe = np.where(gamma > 0, gamma, 1.0)
        # inverse CDF of exp(-gamma t) truncated to [0, T]
        times = -np.log1p(u * np.expm1(-safe * T)) / safe
        return np.where(gamma > 0, times, u * T)

    which = rng.choice(gammas.size, size=size, p=amplitudes / amplitudes.sum())
    gamma = gammas[which]
    safe = np.where(gamma > 0, gamma, 1.0)
    times = np.where(gamma > 0, rng.exponential(1.0 / safe), np.inf)
    return np.minimum(times, T)


def _simulate_batch(model: ReadoutModel, mode: SimulationMode, readouts: int, rng: np.random.Generator, size: int) -> np.ndarray:
    if mode is SimulationMode.DARK_SINGLE:
        return rng.poisson(model.rate_dark * model.T, size=size)
    counts = np.zeros(size, dtype=np.int64)
    for _ in range(readouts):
        t = _sample_crossing_times(model, rng, size)
        counts += rng.poisson(model.mean_counts(t))
    return counts


def simulate_histogram(
    model: ReadoutModel,
    shots: int,
    seed: Optional[int] = None,
    mode: Union[str, SimulationMode] = SimulationMode.BRIGHT_DOUBLE,
    readouts: int = 2,
) -> np.ndarray:
    """Monte Carlo photon-number histogram; index k holds the number of k-count shots.

    Shots are drawn in fixed-size batches, each with its own child of the
    seed's SeedSequence, so the result depends on the seed only.
    """
    if int(shots) != shots or shots < 1:
        raise DomainError("shots must be a positive integer", "shots", shots)
    mode = SimulationMode.from_string(mode)
    n_batches = -(-int(shots) // MC_BATCH_SIZE)
    children = np.random.SeedSequence(seed).spawn(n_batches)

    histogram = np.zeros(1, dtype=np.int64)
    remaining = int(shots)
    for child in children:
        size = min(MC_BATCH_SIZE, remaining)
        remaining -= size
        counts = _simulate_batch(model, mode, readouts, np.random.default_rng(child), size)
        batch = np.bincount(counts)
        if batch.size > histogram.size:
            histogram = np.pad(histogram, (0, batch.size - histogram.size))
        histogram[: batch.size] += batch
    logger.info(f"Simulated {shots} {mode.value} shots in {n_batches} batch(es)")
    return histogram


def total_variation(histogram: np.ndarray, pmf: PhotonPMF) -> float:
    """Total-variation distance between an empirical histogram and a pmf."""
    empirical = np.asarray(histogram, dtype=float)
    empirical = empirical / empirical.sum()
    size = max(empirical.size, pmf.probabilities.size)
    a = np.pad(empirical, (0, size - empirical.size))
    b = np.pad(pmf.probabilities, (0, size - pmf.probabilities.size))
    return 0.5 * float(np.abs(a - b).sum())


def export_pmf(pmf: PhotonPMF, destination: Union[str, Path]) -> Path:
    return write_csv(destination, pmf.to_columns())


def export_histogram(histogram: np.ndarray, destination: Union[str, Path]) -> Path:
    return write_csv(destination, {"k": np.arange(len(histogram)), "count": histogram})


def export_metrics(result: SSRResult, destination: Union[str, Path]) -> Path:
    return write_json(destination, result.to_dict())


def export_sweep(rows: Sequence[SweepRow], destination: Union[str, Path]) -> Path:
    return write_csv(
        destination,
        {
            "label": [r.label for r in rows],
            "fidelity": [r.fidelity for r in rows],
            "success_rate": [r.success_rate for r in rows],
            "error": [r.error or "" for r in rows],
        },
    )
