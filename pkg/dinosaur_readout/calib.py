"""Reflectance calibration from measured spectra and from saturation intensities."""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Union

import numpy as np

from dinosaur_readout.artifacts import read_csv
from dinosaur_readout.errors import DomainError, ValidationError
from dinosaur_readout.scatter import Spectrum

logger = logging.getLogger(__name__)

DEFAULT_ETA_RETRO = 0.97
OVERSHOOT_WARNING = 1.05


@dataclass(frozen=True)
class Measured:
    """A value with a one-sigma uncertainty, propagated to first order."""

    value: float
    error: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))
        object.__setattr__(self, "error", abs(float(self.error)))

    def __str__(self) -> str:
        return f"{self.value:.6g} ± {self.error:.2g}"

    def __add__(self, other: Union["Measured", float]) -> "Measured":
        other = _as_measured(other)
        return Measured(self.value + other.value, math.hypot(self.error, other.error))

    __radd__ = __add__

    def __sub__(self, other: Union["Measured", float]) -> "Measured":
        other = _as_measured(other)
        return Measured(self.value - other.value, math.hypot(self.error, other.error))

    def __rsub__(self, other: float) -> "Measured":
        return _as_measured(other) - self

    def __mul__(self, other: Union["Measured", float]) -> "Measured":
        other = _as_measured(other)
        return Measured(
            self.value * other.value,
            math.hypot(self.error * other.value, self.value * other.error),
        )

    __rmul__ = __mul__

    def __truediv__(self, other: Union["Measured", float]) -> "Measured":
        other = _as_measured(other)
        if other.value == 0:
            raise DomainError("division by a zero-valued measurement", "denominator", other.value)
        return Measured(
            self.value / other.value,
            math.hypot(self.error / other.value, self.value * other.error / other.value**2),
        )

    def to_dict(self) -> Dict[str, float]:
        return {"value": self.value, "error": self.error}


def _as_measured(value: Union[Measured, float]) -> Measured:
    return value if isinstance(value, Measured) else Measured(float(value), 0.0)


@dataclass(frozen=True)
class CalibrationInputs:
    nu: np.ndarray
    I_sig_R: np.ndarray
    I_ref_R: np.ndarray
    I_sig_T: np.ndarray
    I_ref_T: np.ndarray
    eta_retro: float = DEFAULT_ETA_RETRO

    def __post_init__(self):
        names = ("nu", "I_sig_R", "I_ref_R", "I_sig_T", "I_ref_T")
        for name in names:
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        for name in names[1:]:
            values = getattr(self, name)
            if values.shape != self.nu.shape:
                raise ValidationError(f"spectrum is not on the shared {self.nu.size}-point grid", name, values.size)
            if np.any(values < 0):
                raise ValidationError("intensities must be nonnegative", name, float(values.min()))
        if not 0 < self.eta_retro <= 1:
            raise ValidationError("retroreflector reflectance must lie in (0, 1]", "eta_retro", self.eta_retro)


@dataclass
class CalibratedReflectance:
    spectrum: Spectrum
    out_of_range: np.ndarray
    warnings: List[str] = field(default_factory=list)


@dataclass(frozen=True)
class SaturationReflectance:
    I_s_ref: Measured
    I_s_wg: Measured
    R_V2: Measured
    collection_fraction: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "I_s_ref": self.I_s_ref.to_dict(),
            "I_s_wg": self.I_s_wg.to_dict(),
            "R_V2": self.R_V2.to_dict(),
            "collection_fraction": self.collection_fraction,
        }


def reflectance_from_spectra(inputs: CalibrationInputs) -> CalibratedReflectance:
    """R = (I_sig_R / I_ref_R) * eta_retro * (I_ref_T / I_sig_T), flagged but never clamped."""
    for name in ("I_ref_R", "I_sig_T"):
        zero = np.flatnonzero(getattr(inputs, name) == 0)
        if zero.size:
            raise DomainError(
                f"zero denominator at {inputs.nu[zero[0]]} THz",
                name,
                0.0,
            )

    R = (inputs.I_sig_R / inputs.I_ref_R) * inputs.eta_retro * (inputs.I_ref_T / inputs.I_sig_T)
    out_of_range = (R < 0) | (R > 1)
    warnings = []
    overshoot = np.flatnonzero(R > OVERSHOOT_WARNING)
    if overshoot.size:
        message = (
            f"R exceeds {OVERSHOOT_WARNING} at {overshoot.size} frequencies "
            f"(max {R.max():.4f} at {inputs.nu[int(np.argmax(R))]} THz)"
        )
        logger.warning(message)
        warnings.append(message)
    if out_of_range.any():
        logger.info(f"{int(out_of_range.sum())} calibrated points fall outside [0, 1]")

    spectrum = Spectrum(nu=inputs.nu, R=R, T=np.zeros_like(R), S=1.0 - R)
    return CalibratedReflectance(spectrum=spectrum, out_of_range=out_of_range, warnings=warnings)


def reflectance_from_saturation(
    I_s_ref: Union[Measured, float],
    I_s_wg: Union[Measured, float],
) -> SaturationReflectance:
    """R_V2 = 2 I_s_ref / I_s_wg - 1 with the collected fraction (1 + R_V2) / 2."""
    I_s_ref, I_s_wg = _as_measured(I_s_ref), _as_measured(I_s_wg)
    if not I_s_wg.value > 0:
        raise DomainError("waveguide saturation intensity must be positive", "I_s_wg", I_s_wg.value)
    R_V2 = 2 * (I_s_ref / I_s_wg) - 1
    return SaturationReflectance(
        I_s_ref=I_s_ref,
        I_s_wg=I_s_wg,
        R_V2=R_V2,
        collection_fraction=(1.0 + R_V2.value) / 2.0,
    )


def saturation_forward(I_s_wg: float, R_V2: float) -> float:
    """Saturation intensity seen through a reflector: I_s_wg (1 + R_V2) / 2."""
    return 0.5 * I_s_wg * (1.0 + R_V2)


def load_spectrum_csv(path: Union[str, Path]):
    frame = read_csv(path, required=("nu_THz", "intensity"))
    return frame["nu_THz"].to_numpy(dtype=float), frame["intensity"].to_numpy(dtype=float)


def load_calibration_inputs(
    sig_R: Union[str, Path],
    ref_R: Union[str, Path],
    sig_T: Union[str, Path],
    ref_T: Union[str, Path],
    eta_retro: float = DEFAULT_ETA_RETRO,
) -> CalibrationInputs:
    """Read the four intensity spectra and check they share one grid."""
    loaded = {name: load_spectrum_csv(p) for name, p in zip(("I_sig_R", "I_ref_R", "I_sig_T", "I_ref_T"), (sig_R, ref_R, sig_T, ref_T))}
    nu = loaded["I_sig_R"][0]
    for name, (grid, _) in loaded.items():
        if grid.shape != nu.shape or not np.allclose(grid, nu, rtol=0, atol=1e-9):
            raise ValidationError("spectra must share one frequency grid", name, grid.size)
    return CalibrationInputs(nu=nu, eta_retro=eta_retro, **{name: values for name, (_, values) in loaded.items()})
