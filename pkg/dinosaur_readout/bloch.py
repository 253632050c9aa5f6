"""1D Bloch dispersion and band gaps of the effective-index unit cell.

The 3D corrugated cell is reduced to a stack of thin layers whose effective
index follows the local cross-section fill fraction. Only the scalar,
normal-incidence problem is solved, so gaps carry no TE/TM label.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Union

import numpy as np
from scipy.optimize import brentq

from dinosaur_readout.artifacts import write_csv
from dinosaur_readout.errors import DomainError, ValidationError
from dinosaur_readout.geometry import (
    CorrugationProfile,
    UnitCellSpec,
    cell_profile,
    fill_fraction,
)

logger = logging.getLogger(__name__)

SPEED_OF_LIGHT_NM_THZ = 299792.458
DEFAULT_N_MATERIAL = 2.6
# Fixed fill-fraction reference: the widest point of the fabricated reflector.
# It must not follow the geometry, or growing A or g would not raise the index.
REFERENCE_HALF_WIDTH_NM = 403.2
MIN_RECOMMENDED_SLICES = 8
SAMPLES_PER_SLICE = 64
GAP_TOLERANCE = 1e-12
EDGE_XTOL_THZ = 1e-10
POLARIZATION = "unpolarized"


class IndexMap:
    """Monotone map from cross-section fill fraction to effective index.

    The map is checked at construction on a fill grid spanning [0, 4]:
    it must return 1 for an empty cross section and never decrease.
    """

    _CHECK_GRID = np.linspace(0.0, 4.0, 401)

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], name: str = "custom"):
        self._fn = fn
        self.name = name
        values = np.asarray(fn(self._CHECK_GRID), dtype=float)
        if not math.isclose(float(values[0]), 1.0, abs_tol=1e-12):
            raise ValidationError("index map must give 1 at zero fill", "index_map(0)", float(values[0]))
        if np.any(np.diff(values) < -1e-12):
            raise ValidationError("index map must be monotone nondecreasing", "index_map", name)
        if np.any(values < 1.0 - 1e-12):
            raise ValidationError("index map must not fall below 1", "index_map", name)

    def __call__(self, fill: Union[float, np.ndarray]) -> np.ndarray:
        return np.asarray(self._fn(np.asarray(fill, dtype=float)), dtype=float)

    def __repr__(self) -> str:
        return f"IndexMap({self.name})"


def volume_average_map(n_material: float = DEFAULT_N_MATERIAL) -> IndexMap:
    """n_eff = sqrt(f n_mat^2 + (1 - f)), volume averaging of permittivity."""
    if not n_material >= 1:
        raise ValidationError("material index must be >= 1", "n_material", n_material)
    eps = n_material**2
    return IndexMap(lambda f: np.sqrt(f * eps + (1.0 - f)), name=f"volume_average(n_mat={n_material})")


@dataclass(frozen=True)
class LayerStack:
    """Ordered layers of (effective index, thickness in nm)."""

    n_eff: np.ndarray
    thickness: np.ndarray

    def __post_init__(self):
        n_eff = np.atleast_1d(np.asarray(self.n_eff, dtype=float))
        thickness = np.atleast_1d(np.asarray(self.thickness, dtype=float))
        if n_eff.shape != thickness.shape:
            raise ValidationError("n_eff and thickness must have equal length", "layers", (n_eff.size, thickness.size))
        if np.any(thickness <= 0):
            raise ValidationError("layer thicknesses must be positive", "thickness", float(thickness.min()))
        if np.any(n_eff < 1):
            raise ValidationError("effective indices must be >= 1", "n_eff", float(n_eff.min()))
        object.__setattr__(self, "n_eff", n_eff)
        object.__setattr__(self, "thickness", thickness)

    @property
    def period(self) -> float:
        return float(self.thickness.sum())

    def __len__(self) -> int:
        return int(self.n_eff.size)

    def __add__(self, other: "LayerStack") -> "LayerStack":
        return LayerStack(
            n_eff=np.concatenate((self.n_eff, other.n_eff)),
            thickness=np.concatenate((self.thickness, other.thickness)),
        )

    def repeat(self, count: int) -> "LayerStack":
        return LayerStack(n_eff=np.tile(self.n_eff, count), thickness=np.tile(self.thickness, count))

    def reversed(self) -> "LayerStack":
        return LayerStack(n_eff=self.n_eff[::-1].copy(), thickness=self.thickness[::-1].copy())

    def scaled(self, factor: float) -> "LayerStack":
        return LayerStack(n_eff=self.n_eff.copy(), thickness=self.thickness * factor)

    @classmethod
    def bilayer(cls, n1: float, d1: float, n2: float, d2: float) -> "LayerStack":
        return cls(n_eff=np.array([n1, n2]), thickness=np.array([d1, d2]))

    @classmethod
    def quarter_wave(cls, n1: float, n2: float, design_nu: float) -> "LayerStack":
        """Bilayer whose layers are a quarter wavelength thick at design_nu (THz)."""
        wavelength = SPEED_OF_LIGHT_NM_THZ / design_nu
        return cls.bilayer(n1, wavelength / (4 * n1), n2, wavelength / (4 * n2))


@dataclass(frozen=True)
class Bandgap:
    lo: float
    hi: float
    polarization: str = POLARIZATION
    truncated: bool = False

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValidationError("gap lower edge must lie below upper edge", "lo", self.lo)

    @property
    def midgap(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def gap_midgap_ratio(self) -> float:
        return (self.hi - self.lo) / self.midgap

    def to_dict(self) -> dict:
        return {
            "lo_THz": self.lo,
            "hi_THz": self.hi,
            "midgap_THz": self.midgap,
            "ratio": self.gap_midgap_ratio,
            "polarization": self.polarization,
            "truncated": self.truncated,
        }


@dataclass(frozen=True)
class BandStructure:
    """Half-trace scan plus the propagating (k_z, nu) band points."""

    nu: np.ndarray
    half_trace: np.ndarray
    period: float
    polarization: str = POLARIZATION
    k_z: np.ndarray = field(init=False)
    band_nu: np.ndarray = field(init=False)

    def __post_init__(self):
        propagating = np.abs(self.half_trace) <= 1.0
        object.__setattr__(self, "band_nu", self.nu[propagating])
        object.__setattr__(self, "k_z", np.arccos(self.half_trace[propagating]) / self.period)

    @property
    def points(self) -> List[tuple]:
        return list(zip(self.k_z.tolist(), self.band_nu.tolist()))


def slice_unit_cell(
    cell: UnitCellSpec,
    n_slices: int,
    index_map: Optional[IndexMap] = None,
    reference_half_width: Optional[float] = None,
) -> LayerStack:
    """Cut a cell into equal slices, each with the index of its mean fill fraction.

    Fill fractions are taken relative to ``reference_half_width``, by default
    REFERENCE_HALF_WIDTH_NM, shared by every cell and device.
    """
    if int(n_slices) != n_slices or n_slices < 2:
        raise DomainError("need at least 2 slices", "n_slices", n_slices)
    n_slices = int(n_slices)
    if n_slices < MIN_RECOMMENDED_SLICES:
        logger.warning(f"{n_slices} slices is a coarse approximation of the cell (< {MIN_RECOMMENDED_SLICES})")
    reference = REFERENCE_HALF_WIDTH_NM if reference_half_width is None else reference_half_width
    profile = cell_profile(cell, cell.a / (n_slices * SAMPLES_PER_SLICE))
    return slice_profile(profile, n_slices, index_map or volume_average_map(), reference)


def slice_profile(
    profile: CorrugationProfile,
    n_slices: int,
    index_map: IndexMap,
    reference_half_width: float,
) -> LayerStack:
    """Equal-thickness layers over the whole profile, indexed by mean fill fraction."""
    edges = np.linspace(profile.z_min, profile.z_max, n_slices + 1)
    fills = np.array(
        [
            fill_fraction(profile, lo, hi, reference_half_width)
            for lo, hi in zip(edges[:-1], edges[1:])
        ]
    )
    width = (profile.z_max - profile.z_min) / n_slices
    return LayerStack(n_eff=index_map(fills), thickness=np.full(n_slices, width))


def layer_matrices(n: np.ndarray, thickness: np.ndarray, nu: np.ndarray) -> np.ndarray:
    """Characteristic matrices of every layer at every frequency, shape (F, L, 2, 2).

    ``n`` may be complex; Im(n) > 0 attenuates.
    """
    nu = np.atleast_1d(np.asarray(nu, dtype=float))
    n = np.asarray(n)
    phase = 2 * np.pi * nu[:, None] * n[None, :] * thickness[None, :] / SPEED_OF_LIGHT_NM_THZ
    cos_p = np.cos(phase)
    sin_p = np.sin(phase)
    m = np.empty(phase.shape + (2, 2), dtype=complex)
    m[..., 0, 0] = cos_p
    m[..., 0, 1] = -1j * sin_p / n[None, :]
    m[..., 1, 0] = -1j * n[None, :] * sin_p
    m[..., 1, 1] = cos_p
    return m


def transfer_matrix(
    n: np.ndarray,
    thickness: np.ndarray,
    nu: Union[float, np.ndarray],
) -> np.ndarray:
    """Ordered product of the layer characteristic matrices, shape (F, 2, 2)."""
    per_layer = layer_matrices(n, thickness, nu)
    total = np.broadcast_to(np.eye(2, dtype=complex), (per_layer.shape[0], 2, 2)).copy()
    for j in range(per_layer.shape[1]):
        total = total @ per_layer[:, j]
    return total


def half_trace(stack: LayerStack, nu: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """(1/2) Tr M(nu); |value| > 1 marks a band gap."""
    nu_arr = np.atleast_1d(np.asarray(nu, dtype=float))
    if np.any(nu_arr <= 0):
        raise DomainError("frequency must be positive", "nu", nu)
    total = transfer_matrix(stack.n_eff, stack.thickness, nu_arr)
    value = 0.5 * (total[:, 0, 0] + total[:, 1, 1]).real
    return float(value[0]) if np.ndim(nu) == 0 else value


def scan_grid(nu_lo: float, nu_hi: float, resolution: float) -> np.ndarray:
    count = int(math.ceil((nu_hi - nu_lo) / resolution - 1e-9)) + 1
    return np.linspace(nu_lo, nu_hi, max(count, 2))


def band_scan(stack: LayerStack, nu_grid: Sequence[float]) -> BandStructure:
    nu = np.asarray(nu_grid, dtype=float)
    return BandStructure(nu=nu, half_trace=np.asarray(half_trace(stack, nu)), period=stack.period)


def _refine_edge(stack: LayerStack, inside: float, outside: float) -> float:
    def excess(nu: float) -> float:
        return abs(half_trace(stack, nu)) - 1.0

    f_in, f_out = excess(inside), excess(outside)
    if f_in * f_out > 0:
        return inside if abs(f_in) < abs(f_out) else outside
    lo, hi = sorted((inside, outside))
    return float(brentq(excess, lo, hi, xtol=EDGE_XTOL_THZ))


def find_bandgaps(
    stack: LayerStack,
    nu_lo: float,
    nu_hi: float,
    resolution: float,
) -> List[Bandgap]:
    """Maximal frequency intervals with |half_trace| > 1 inside [nu_lo, nu_hi]."""
    if not 0 < nu_lo < nu_hi:
        raise DomainError(f"need 0 < nu_lo < nu_hi, got nu_hi={nu_hi}", "nu_lo", nu_lo)
    if not resolution > 0:
        raise DomainError("resolution must be positive", "resolution", resolution)
    if resolution > (nu_hi - nu_lo) / 10:
        raise DomainError(
            f"resolution coarser than (nu_hi - nu_lo)/10 = {(nu_hi - nu_lo) / 10} risks missed gaps",
            "resolution",
            resolution,
        )

    grid = scan_grid(nu_lo, nu_hi, resolution)
    in_gap = np.abs(np.asarray(half_trace(stack, grid))) > 1.0 + GAP_TOLERANCE

    gaps: List[Bandgap] = []
    i = 0
    last = grid.size - 1
    while i <= last:
        if not in_gap[i]:
            i += 1
            continue
        j = i
        while j < last and in_gap[j + 1]:
            j += 1
        lo = nu_lo if i == 0 else _refine_edge(stack, grid[i], grid[i - 1])
        hi = nu_hi if j == last else _refine_edge(stack, grid[j], grid[j + 1])
        truncated = i == 0 or j == last
        if truncated:
            logger.warning(f"Gap [{lo:.4f}, {hi:.4f}] THz touches the scan boundary")
        if hi > lo:
            gaps.append(Bandgap(lo=lo, hi=hi, truncated=truncated))
        i = j + 1

    logger.debug(f"Found {len(gaps)} gap(s) in [{nu_lo}, {nu_hi}] THz")
    return gaps


def export_band_scan(bands: BandStructure, destination: Union[str, Path]) -> Path:
    return write_csv(destination, {"nu_THz": bands.nu, "half_trace": bands.half_trace})


def export_gaps(gaps: Sequence[Bandgap], destination: Union[str, Path]) -> Path:
    return write_csv(
        destination,
        {
            "lo_THz": [g.lo for g in gaps],
            "hi_THz": [g.hi for g in gaps],
            "midgap_THz": [g.midgap for g in gaps],
            "ratio": [g.gap_midgap_ratio for g in gaps],
        },
    )
