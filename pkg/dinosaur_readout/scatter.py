"""Reflection, transmission and scatter spectra of a finite reflector.

The reflector is embedded between two waveguide leads and solved with the
characteristic-matrix method. A single imaginary index stands in for every
loss channel; what is neither reflected nor transmitted is booked as scatter.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from dinosaur_readout.artifacts import write_csv, write_json
from dinosaur_readout.bloch import (
    REFERENCE_HALF_WIDTH_NM,
    SAMPLES_PER_SLICE,
    SPEED_OF_LIGHT_NM_THZ,
    IndexMap,
    LayerStack,
    slice_profile,
    slice_unit_cell,
    transfer_matrix,
    volume_average_map,
)
from dinosaur_readout.errors import ConsistencyError, DomainError, ValidationError
from dinosaur_readout.geometry import TaperSpec, cell_segment_profile

logger = logging.getLogger(__name__)

ENERGY_TOLERANCE = 1e-9
DEFAULT_LEAD_LENGTH_NM = 5000.0
DEFAULT_SLICES_PER_CELL = 32
DEFAULT_THRESHOLD = 0.5
MIN_CONVERGENCE_CELLS = 12


def default_grid() -> np.ndarray:
    """Probe frequencies 260..380 THz at 1 THz."""
    return np.linspace(260.0, 380.0, 121)


@dataclass(frozen=True)
class Spectrum:
    nu: np.ndarray
    R: np.ndarray
    T: np.ndarray
    S: np.ndarray

    def __post_init__(self):
        arrays = {}
        for name in ("nu", "R", "T", "S"):
            arrays[name] = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            object.__setattr__(self, name, arrays[name])
        if not all(a.shape == arrays["nu"].shape for a in arrays.values()):
            raise ValidationError("nu, R, T and S must share one grid", "nu", arrays["nu"].size)
        if arrays["nu"].size == 0:
            raise ValidationError("spectrum grid is empty", "nu", 0)
        if np.any(np.diff(arrays["nu"]) <= 0):
            raise ValidationError("frequency grid must be strictly increasing", "nu", None)
        imbalance = np.abs(arrays["R"] + arrays["T"] + arrays["S"] - 1.0)
        if np.any(imbalance > ENERGY_TOLERANCE):
            raise ConsistencyError(f"R + T + S deviates from 1 by {imbalance.max():.3e}")

    def __len__(self) -> int:
        return int(self.nu.size)

    def to_columns(self) -> Dict[str, np.ndarray]:
        return {"nu_THz": self.nu, "R": self.R, "T": self.T, "S": self.S}


@dataclass(frozen=True)
class OperatingRange:
    lo: float
    hi: float
    mean_R: float
    std_R: float
    threshold: float

    @property
    def width_thz(self) -> float:
        return self.hi - self.lo

    @property
    def wavelength_span_nm(self) -> float:
        """The same window expressed as a vacuum-wavelength span."""
        return SPEED_OF_LIGHT_NM_THZ / self.lo - SPEED_OF_LIGHT_NM_THZ / self.hi

    def to_dict(self) -> Dict[str, float]:
        return {
            "lo": self.lo,
            "hi": self.hi,
            "mean_R": self.mean_R,
            "std_R": self.std_R,
            "threshold": self.threshold,
        }


def _check_grid(nu_grid: Union[Sequence[float], np.ndarray]) -> np.ndarray:
    nu = np.atleast_1d(np.asarray(nu_grid, dtype=float))
    if nu.size == 0:
        raise DomainError("probe grid is empty", "nu_grid", 0)
    if np.any(nu <= 0):
        raise DomainError("probe frequencies must be positive", "nu_grid", float(nu.min()))
    return nu


def _response(
    n: np.ndarray,
    thickness: np.ndarray,
    nu: np.ndarray,
    n_in: float,
    n_out: float,
) -> Spectrum:
    total = transfer_matrix(n, thickness, nu)
    b = total[:, 0, 0] + total[:, 0, 1] * n_out
    c = total[:, 1, 0] + total[:, 1, 1] * n_out
    denominator = n_in * b + c
    r = (n_in * b - c) / denominator
    t = 2.0 * n_in / denominator

    R = np.abs(r) ** 2
    T = (n_out / n_in) * np.abs(t) ** 2
    S = 1.0 - R - T
    if np.any(S < -ENERGY_TOLERANCE):
        worst = int(np.argmin(S))
        raise ConsistencyError(f"negative scatter {S[worst]:.3e} at {nu[worst]} THz")
    # Lossless stacks leave only rounding in S.
    S = np.where(np.abs(S) < ENERGY_TOLERANCE, 0.0, S)
    return Spectrum(nu=nu, R=R, T=T, S=S)


def stack_spectrum(
    stack: LayerStack,
    nu_grid: Union[Sequence[float], np.ndarray],
    n_in: float = 1.0,
    n_out: float = 1.0,
    loss: float = 0.0,
) -> Spectrum:
    """Spectrum of an arbitrary layer stack between two semi-infinite media.

    An empty stack gives the bare n_in -> n_out interface.
    """
    if loss < 0:
        raise DomainError("loss must be >= 0", "loss", loss)
    if not (n_in >= 1 and n_out >= 1):
        raise DomainError("ambient indices must be >= 1", "n_in", (n_in, n_out))
    nu = _check_grid(nu_grid)
    return _response(stack.n_eff + 1j * loss, stack.thickness, nu, n_in, n_out)


def _empty_stack() -> LayerStack:
    return LayerStack(n_eff=np.zeros(0), thickness=np.zeros(0))


def device_stack(
    device: TaperSpec,
    n_slices_per_cell: int = DEFAULT_SLICES_PER_CELL,
    index_map: Optional[IndexMap] = None,
    reference_half_width: float = REFERENCE_HALF_WIDTH_NM,
) -> Tuple[LayerStack, float]:
    """Layer sequence of taper plus periodic cells, and the waveguide index.

    The waveguide and every cell share one fixed fill-fraction reference.
    """
    if int(n_slices_per_cell) != n_slices_per_cell or n_slices_per_cell < 2:
        raise DomainError("need at least 2 slices per cell", "n_slices_per_cell", n_slices_per_cell)
    index_map = index_map or volume_average_map()
    if not reference_half_width > 0:
        raise DomainError("reference half-width must be positive", "reference_half_width", reference_half_width)
    reference = reference_half_width
    n_waveguide = float(index_map((device.waveguide_half_width / reference) ** 2))

    stack = _empty_stack()
    for i in range(len(device.cells)):
        profile = cell_segment_profile(device, i, n_slices_per_cell * SAMPLES_PER_SLICE)
        stack = stack + slice_profile(profile, n_slices_per_cell, index_map, reference)
    if device.n_periodic:
        period = slice_unit_cell(device.periodic_cell, n_slices_per_cell, index_map, reference)
        stack = stack + period.repeat(device.n_periodic)
    logger.debug(f"Device stack: {len(stack)} layers over {device.length:.1f} nm, n_wg={n_waveguide:.4f}")
    return stack, n_waveguide


def reflectance_spectrum(
    device: TaperSpec,
    nu_grid: Optional[Union[Sequence[float], np.ndarray]] = None,
    loss: float = 0.0,
    n_slices_per_cell: int = DEFAULT_SLICES_PER_CELL,
    index_map: Optional[IndexMap] = None,
    lead_length: float = DEFAULT_LEAD_LENGTH_NM,
    reference_half_width: float = REFERENCE_HALF_WIDTH_NM,
) -> Spectrum:
    """R, T and S of the device between two waveguide leads.

    Loss enters as +i*loss on the reflector layers only; the leads stay
    lossless so that S measures what the reflector itself removes.
    """
    if loss < 0:
        raise DomainError("loss must be >= 0", "loss", loss)
    if not lead_length > 0:
        raise DomainError("lead length must be positive", "lead_length", lead_length)
    nu = _check_grid(default_grid() if nu_grid is None else nu_grid)

    reflector, n_wg = device_stack(device, n_slices_per_cell, index_map, reference_half_width)
    n = np.concatenate(([n_wg], reflector.n_eff + 1j * loss, [n_wg]))
    thickness = np.concatenate(([lead_length], reflector.thickness, [lead_length]))
    spectrum = _response(n, thickness, nu, n_wg, n_wg)
    logger.debug(
        f"Spectrum over {nu.size} frequencies: max R={spectrum.R.max():.4f}, loss={loss}"
    )
    return spectrum


def _runs(mask: np.ndarray) -> List[Tuple[int, int]]:
    runs = []
    i = 0
    while i < mask.size:
        if mask[i]:
            j = i
            while j + 1 < mask.size and mask[j + 1]:
                j += 1
            runs.append((i, j))
            i = j + 1
        else:
            i += 1
    return runs


def operating_range(spec: Spectrum, threshold: float = DEFAULT_THRESHOLD) -> Optional[OperatingRange]:
    """Widest contiguous run of grid points with R > threshold, or None."""
    if not 0 < threshold < 1:
        raise DomainError("threshold must lie in (0, 1)", "threshold", threshold)
    runs = _runs(spec.R > threshold)
    if not runs:
        logger.info(f"No grid point exceeds R={threshold}")
        return None

    # strict > keeps the first (lowest-frequency) run on ties
    best = runs[0]
    for run in runs[1:]:
        if spec.nu[run[1]] - spec.nu[run[0]] > spec.nu[best[1]] - spec.nu[best[0]]:
            best = run
    values = spec.R[best[0] : best[1] + 1]
    return OperatingRange(
        lo=float(spec.nu[best[0]]),
        hi=float(spec.nu[best[1]]),
        mean_R=float(values.mean()),
        std_R=float(values.std()),
        threshold=threshold,
    )


def band_average(spec: Spectrum, lo: float, hi: float) -> Tuple[float, float]:
    """Mean and population standard deviation of R over grid points in [lo, hi]."""
    if not lo <= hi:
        raise DomainError(f"band [{lo}, {hi}] is reversed", "lo", lo)
    inside = (spec.nu >= lo) & (spec.nu <= hi)
    if not inside.any():
        raise DomainError(
            f"band [{lo}, {hi}] THz holds no point of the grid [{spec.nu[0]}, {spec.nu[-1]}]",
            "lo",
            lo,
        )
    values = spec.R[inside]
    return float(values.mean()), float(values.std())


def convergence_scan(
    device: TaperSpec,
    n_max: int,
    nu_grid: Optional[Union[Sequence[float], np.ndarray]] = None,
    n_min: int = 1,
    loss: float = 0.0,
    n_slices_per_cell: int = DEFAULT_SLICES_PER_CELL,
    index_map: Optional[IndexMap] = None,
    reference_half_width: float = REFERENCE_HALF_WIDTH_NM,
) -> List[Tuple[int, Spectrum]]:
    """Spectra for n_min..n_max periodic cells behind a fixed taper."""
    if n_max < MIN_CONVERGENCE_CELLS:
        raise DomainError(f"n_max must be >= {MIN_CONVERGENCE_CELLS}", "n_max", n_max)
    if not 0 <= n_min <= n_max:
        raise DomainError("n_min must lie in [0, n_max]", "n_min", n_min)
    logger.info(f"Convergence scan over {n_min}..{n_max} periodic cells")
    return [
        (
            n,
            reflectance_spectrum(
                device.with_periodic(n),
                nu_grid,
                loss=loss,
                n_slices_per_cell=n_slices_per_cell,
                index_map=index_map,
                reference_half_width=reference_half_width,
            ),
        )
        for n in range(n_min, n_max + 1)
    ]


def stack_convergence(
    unit: LayerStack,
    n_max: int,
    nu_grid: Union[Sequence[float], np.ndarray],
    n_in: float = 1.0,
    n_out: float = 1.0,
    n_min: int = 1,
) -> List[Tuple[int, Spectrum]]:
    """Spectra of 1..n_max repetitions of a layer-stack unit."""
    if n_max < MIN_CONVERGENCE_CELLS:
        raise DomainError(f"n_max must be >= {MIN_CONVERGENCE_CELLS}", "n_max", n_max)
    return [
        (n, stack_spectrum(unit.repeat(n) if n else _empty_stack(), nu_grid, n_in, n_out))
        for n in range(n_min, n_max + 1)
    ]


def export_spectrum(spec: Spectrum, destination: Union[str, Path]) -> Path:
    path = write_csv(destination, spec.to_columns())
    logger.info(f"Exported spectrum to {path}")
    return path


def export_operating_range(window: Optional[OperatingRange], destination: Union[str, Path]) -> Path:
    payload = window.to_dict() if window else {"lo": None, "hi": None, "mean_R": None, "std_R": None}
    return write_json(destination, payload)
