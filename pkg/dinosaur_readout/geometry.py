"""Corrugated unit cells, tapered reflector profiles and cross-section fill fractions.

Coordinates are in nm. Within a cell, z=0 sits on the cell boundary where the
half-width is maximal; the minimum sits at the cell centre z=a/2.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import yaml  # type: ignore
from scipy.integrate import trapezoid

from dinosaur_readout.artifacts import write_csv
from dinosaur_readout.errors import ConfigError, DomainError, GeometryError

logger = logging.getLogger(__name__)

DEFAULT_SPACING_NM = 1.0
CONTINUITY_TOLERANCE_NM = 1e-6
MIN_SAMPLES_PER_CELL = 20


def _check_exponent(e: Any, parameter: str) -> None:
    if isinstance(e, bool) or int(e) != e or int(e) < 2 or int(e) % 2:
        raise GeometryError("exponent must be an even integer >= 2", parameter, e)


@dataclass(frozen=True)
class UnitCellSpec:
    """One period of the corrugated nanobeam."""

    a: float
    A: float
    e: int
    g: float
    delta: float = 54.0

    def __post_init__(self):
        if not self.a > 0:
            raise GeometryError("cell length must be positive", "a", self.a)
        if not self.A >= 0:
            raise GeometryError("corrugation amplitude must be >= 0", "A", self.A)
        if not self.g > 0:
            raise GeometryError("gap half-width must be positive", "g", self.g)
        _check_exponent(self.e, "e")
        if not 0 < self.delta < 90:
            raise GeometryError(
                "sidewall angle must lie in (0, 90) degrees", "delta", self.delta
            )
        object.__setattr__(self, "e", int(self.e))

    @property
    def max_half_width(self) -> float:
        return 2.0 * self.A + self.g

    @property
    def min_half_width(self) -> float:
        return self.g

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "UnitCellSpec":
        try:
            return cls(
                a=float(data["a"]),
                A=float(data["A"]),
                e=data.get("e", 6),
                g=float(data["g"]),
                delta=float(data.get("delta", 54.0)),
            )
        except KeyError as e:
            raise ConfigError("missing unit cell key", str(e), None) from e

    def to_dict(self) -> Dict[str, Any]:
        return {"a": self.a, "A": self.A, "e": self.e, "g": self.g, "delta": self.delta}


@dataclass(frozen=True)
class TaperCell:
    """A tapered cell: length plus boundary maximum and centre minimum."""

    a: float
    x_plus: float
    x_minus: float

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TaperCell":
        try:
            return cls(
                a=float(data["a"]),
                x_plus=float(data["x_plus"]),
                x_minus=float(data["x_minus"]),
            )
        except KeyError as e:
            raise ConfigError("missing taper cell key", str(e), None) from e

    def to_dict(self) -> Dict[str, Any]:
        return {"a": self.a, "x_plus": self.x_plus, "x_minus": self.x_minus}


@dataclass(frozen=True)
class TaperSpec:
    """Waveguide-to-reflector taper followed by identical periodic cells.

    Cell 0 faces the waveguide: its first half keeps the waveguide
    half-width, so ``cells[0].x_minus`` must equal ``waveguide_half_width``.
    The last taper cell's boundary maximum is shared with the periodic
    section and must equal ``periodic_cell.max_half_width``.
    """

    cells: Tuple[TaperCell, ...]
    e: int
    waveguide_half_width: float
    n_periodic: int
    periodic_cell: UnitCellSpec

    def __post_init__(self):
        object.__setattr__(self, "cells", tuple(self.cells))
        _check_exponent(self.e, "e")
        object.__setattr__(self, "e", int(self.e))
        if not self.waveguide_half_width > 0:
            raise GeometryError(
                "waveguide half-width must be positive",
                "waveguide_half_width",
                self.waveguide_half_width,
            )
        if int(self.n_periodic) != self.n_periodic or self.n_periodic < 0:
            raise GeometryError(
                "periodic cell count must be a nonnegative integer",
                "n_periodic",
                self.n_periodic,
            )
        object.__setattr__(self, "n_periodic", int(self.n_periodic))

        for i, cell in enumerate(self.cells):
            if not cell.a > 0:
                raise GeometryError("cell length must be positive", f"cells[{i}].a", cell.a, index=i)
            if not cell.x_minus > 0:
                raise GeometryError(
                    "corrugation minimum must be positive", f"cells[{i}].x_minus", cell.x_minus, index=i
                )
            if cell.x_plus < cell.x_minus:
                raise GeometryError(
                    f"corrugation maximum below minimum {cell.x_minus}",
                    f"cells[{i}].x_plus",
                    cell.x_plus,
                    index=i,
                )

        if self.cells:
            first = self.cells[0]
            if abs(first.x_minus - self.waveguide_half_width) > CONTINUITY_TOLERANCE_NM:
                raise GeometryError(
                    f"discontinuity at cell 0: waveguide half-width {self.waveguide_half_width} "
                    f"differs from the cell minimum",
                    "cells[0].x_minus",
                    first.x_minus,
                    index=0,
                )
            last_index = len(self.cells) - 1
            last = self.cells[-1]
            expected = self.periodic_cell.max_half_width
            if self.n_periodic > 0 and abs(last.x_plus - expected) > CONTINUITY_TOLERANCE_NM:
                raise GeometryError(
                    f"discontinuity at cell {last_index}: periodic cell maximum is {expected}",
                    f"cells[{last_index}].x_plus",
                    last.x_plus,
                    index=last_index,
                )

    @property
    def boundaries(self) -> np.ndarray:
        """Cell boundary positions from z=0 to the reflector end."""
        lengths = [cell.a for cell in self.cells]
        lengths += [self.periodic_cell.a] * self.n_periodic
        return np.concatenate(([0.0], np.cumsum(lengths)))

    @property
    def length(self) -> float:
        return float(self.boundaries[-1])

    @property
    def cell_count(self) -> int:
        return len(self.cells) + self.n_periodic

    @property
    def max_half_width(self) -> float:
        """Largest half-width anywhere along the reflector or its waveguide."""
        candidates = [self.waveguide_half_width]
        candidates += [cell.x_plus for cell in self.cells]
        if self.n_periodic:
            candidates.append(self.periodic_cell.max_half_width)
        return max(candidates)

    def without_taper(self) -> "TaperSpec":
        """The same reflector attached to the waveguide without a taper.

        The periodic section keeps the total cell count of the tapered device.
        """
        return replace(self, cells=(), n_periodic=self.cell_count)

    def with_periodic(self, n_periodic: int) -> "TaperSpec":
        return replace(self, n_periodic=n_periodic)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TaperSpec":
        try:
            return cls(
                cells=tuple(TaperCell.from_dict(c) for c in data.get("cells", [])),
                e=data.get("e", 6),
                waveguide_half_width=float(data["waveguide_half_width"]),
                n_periodic=data.get("n_periodic", 0),
                periodic_cell=UnitCellSpec.from_dict(data["periodic_cell"]),
            )
        except KeyError as e:
            raise ConfigError("missing taper key", str(e), None) from e

    def to_dict(self) -> Dict[str, Any]:
        return {
            "cells": [cell.to_dict() for cell in self.cells],
            "e": self.e,
            "waveguide_half_width": self.waveguide_half_width,
            "n_periodic": self.n_periodic,
            "periodic_cell": self.periodic_cell.to_dict(),
        }


# Optimised tapered interface and periodic cell of the fabricated reflector.
FABRICATED_TAPER: Dict[str, Any] = {
    "cells": [
        {"a": 108.4, "x_plus": 339.1, "x_minus": 303.2},
        {"a": 247.2, "x_plus": 359.2, "x_minus": 216.1},
        {"a": 299.2, "x_plus": 371.4, "x_minus": 167.3},
        {"a": 326.7, "x_plus": 383.5, "x_minus": 137.7},
        {"a": 401.3, "x_plus": 403.2, "x_minus": 108.5},
    ],
    "e": 6,
    "waveguide_half_width": 303.2,
    "n_periodic": 13,
    "periodic_cell": {"a": 401.3, "A": 171.3, "e": 6, "g": 60.6, "delta": 54.0},
}


def fabricated_taper() -> TaperSpec:
    return TaperSpec.from_dict(FABRICATED_TAPER)


def load_taper(path: Union[str, Path]) -> TaperSpec:
    """Read a TaperSpec from a YAML document."""
    source = Path(path).expanduser()
    try:
        with open(source, "r") as f:
            data = yaml.safe_load(f) or {}
    except FileNotFoundError as e:
        raise ConfigError("taper document not found", "path", str(source)) from e
    except yaml.YAMLError as e:
        raise ConfigError(f"invalid YAML: {e}", "path", str(source)) from e
    logger.info(f"Loaded taper from {source}")
    return TaperSpec.from_dict(data.get("device", data))


@dataclass(frozen=True)
class CorrugationProfile:
    """Half-width samples x(z) along the reflector."""

    z: np.ndarray
    x: np.ndarray
    sample_spacing: float
    boundaries: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        if self.z.shape != self.x.shape or self.z.ndim != 1 or self.z.size < 2:
            raise GeometryError("profile needs matching 1D z/x arrays of >= 2 samples")
        if np.any(np.diff(self.z) <= 0):
            raise GeometryError("profile z must be strictly increasing")
        if np.any(self.x <= 0):
            raise GeometryError("profile half-width must be positive everywhere")

    @property
    def z_min(self) -> float:
        return float(self.z[0])

    @property
    def z_max(self) -> float:
        return float(self.z[-1])

    def half_width_at(self, z: Union[float, np.ndarray]) -> np.ndarray:
        return np.interp(z, self.z, self.x)

    def cell_maxima(self) -> List[float]:
        """Maximum sampled half-width of every cell between consecutive boundaries."""
        maxima = []
        for lo, hi in zip(self.boundaries[:-1], self.boundaries[1:]):
            inside = (self.z >= lo - 1e-9) & (self.z <= hi + 1e-9)
            maxima.append(float(self.x[inside].max()))
        return maxima


def corrugation_halfwidth(cell: UnitCellSpec, z: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """Half-width 2A cos^e(pi z / a) + g at distance z from a cell boundary."""
    z_arr = np.asarray(z, dtype=float)
    if np.any(z_arr < 0) or np.any(z_arr > cell.a):
        raise DomainError(f"z must lie in [0, {cell.a}]", "z", z)
    x = 2.0 * cell.A * np.cos(np.pi * z_arr / cell.a) ** cell.e + cell.g
    return float(x) if np.ndim(z) == 0 else x


def _evaluate(spec: TaperSpec, z: np.ndarray) -> np.ndarray:
    bounds = spec.boundaries
    n_taper = len(spec.cells)
    index = np.clip(np.searchsorted(bounds, z, side="right") - 1, 0, spec.cell_count - 1)
    u = z - bounds[index]
    x = np.empty_like(z)

    for i, cell in enumerate(spec.cells):
        mask = index == i
        if not mask.any():
            continue
        ui = u[mask]
        shape = np.cos(np.pi * ui / cell.a) ** spec.e
        left = spec.waveguide_half_width if i == 0 else spec.cells[i - 1].x_plus
        edge = np.where(ui < cell.a / 2, left, cell.x_plus)
        values = cell.x_minus + (edge - cell.x_minus) * shape
        if i == 0:
            values = np.where(ui < cell.a / 2, spec.waveguide_half_width, values)
        x[mask] = values

    periodic = index >= n_taper
    if periodic.any():
        x[periodic] = corrugation_halfwidth(spec.periodic_cell, np.clip(u[periodic], 0.0, spec.periodic_cell.a))
    return x


def sample_points(length: float, spacing: float) -> np.ndarray:
    """Grid k*spacing over [0, length], closed with the endpoint."""
    n = int(math.floor(length / spacing + 1e-9))
    z = np.arange(n + 1, dtype=float) * spacing
    if length - z[-1] > 1e-9 * max(1.0, length):
        z = np.append(z, length)
    else:
        z[-1] = length
    return z


def build_taper(spec: TaperSpec, spacing: float = DEFAULT_SPACING_NM) -> CorrugationProfile:
    """Sample the tapered reflector's half-width profile."""
    if not spacing > 0:
        raise DomainError("sample spacing must be positive", "spacing", spacing)
    if spec.cell_count == 0:
        raise GeometryError("reflector has no cells", "n_periodic", spec.n_periodic)

    shortest = min([c.a for c in spec.cells] + ([spec.periodic_cell.a] if spec.n_periodic else []))
    if spacing > shortest / MIN_SAMPLES_PER_CELL:
        raise GeometryError(
            f"sample spacing gives fewer than {MIN_SAMPLES_PER_CELL} samples in the shortest cell ({shortest} nm)",
            "spacing",
            spacing,
        )

    z = sample_points(spec.length, spacing)
    x = _evaluate(spec, z)
    logger.debug(f"Sampled {z.size} points over {spec.cell_count} cells")
    return CorrugationProfile(z=z, x=x, sample_spacing=spacing, boundaries=spec.boundaries)


def cell_profile(cell: UnitCellSpec, spacing: float) -> CorrugationProfile:
    """Profile of a single periodic cell."""
    spec = TaperSpec(
        cells=(),
        e=cell.e,
        waveguide_half_width=cell.max_half_width,
        n_periodic=1,
        periodic_cell=cell,
    )
    z = sample_points(cell.a, spacing)
    return CorrugationProfile(z=z, x=_evaluate(spec, z), sample_spacing=spacing, boundaries=spec.boundaries)


def fill_fraction(
    profile: CorrugationProfile,
    z_lo: float,
    z_hi: float,
    reference_half_width: float,
) -> float:
    """Mean triangular cross-section area over [z_lo, z_hi] relative to a reference.

    A triangle of half-width x and sidewall angle delta has area x^2 tan(delta),
    so the ratio is the mean of (x / reference)^2 and delta cancels.
    """
    if not reference_half_width > 0:
        raise DomainError("reference half-width must be positive", "reference_half_width", reference_half_width)
    if not z_hi > z_lo:
        raise DomainError(f"empty interval [{z_lo}, {z_hi}]", "z_hi", z_hi)
    tol = 1e-9 * max(1.0, abs(profile.z_max))
    if z_lo < profile.z_min - tol or z_hi > profile.z_max + tol:
        raise DomainError(
            f"interval [{z_lo}, {z_hi}] outside profile [{profile.z_min}, {profile.z_max}]",
            "z_lo",
            z_lo,
        )

    inner = profile.z[(profile.z > z_lo) & (profile.z < z_hi)]
    z = np.concatenate(([z_lo], inner, [z_hi]))
    ratio = (profile.half_width_at(z) / reference_half_width) ** 2
    return float(trapezoid(ratio, z) / (z_hi - z_lo))


def export_profile(profile: CorrugationProfile, destination: Union[str, Path]) -> Path:
    """Write the profile as CSV with columns z_nm,x_nm."""
    path = write_csv(destination, {"z_nm": profile.z, "x_nm": profile.x})
    logger.info(f"Exported {profile.z.size} profile samples to {path}")
    return path


def cell_segment_profile(spec: TaperSpec, index: int, samples: int) -> CorrugationProfile:
    """Profile of the index-th cell of a reflector, sampled at samples+1 points."""
    if not 0 <= index < spec.cell_count:
        raise DomainError(f"cell index outside [0, {spec.cell_count})", "index", index)
    lo, hi = spec.boundaries[index], spec.boundaries[index + 1]
    z = np.linspace(lo, hi, samples + 1)
    return CorrugationProfile(
        z=z,
        x=_evaluate(spec, z),
        sample_spacing=(hi - lo) / samples,
        boundaries=np.array([lo, hi]),
    )
