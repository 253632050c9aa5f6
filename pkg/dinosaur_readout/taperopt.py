"""Box-bounded search over taper parameters for maximal mean reflectance.

Parameters are addressed by path into the TaperSpec document, for example
``cells[3].x_plus``, ``periodic_cell.A`` or ``waveguide_half_width``. The
two boundary values a taper shares with its neighbours are owned by the
waveguide and the periodic cell and copied into the end cells, so every
candidate is continuous by construction.
"""

import copy
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from dinosaur_readout.artifacts import write_csv, write_json
from dinosaur_readout.bloch import REFERENCE_HALF_WIDTH_NM, IndexMap, scan_grid
from dinosaur_readout.errors import ConfigError, DomainError, OptimizationError, ValidationError
from dinosaur_readout.geometry import TaperSpec
from dinosaur_readout.scatter import DEFAULT_SLICES_PER_CELL, band_average, reflectance_spectrum

logger = logging.getLogger(__name__)

EVALUATIONS_PER_PARAMETER = 10
DEFAULT_RESTARTS = 4
INITIAL_STEP = 0.1
INFEASIBLE_PENALTY = 1e6
XATOL = 1e-8
FATOL = 1e-14

_CELL_PATH = re.compile(r"^cells\[(\d+)\]\.(a|x_plus|x_minus)$")
_PERIODIC_PATH = re.compile(r"^periodic_cell\.(a|A|g)$")
_WAVEGUIDE_PATH = "waveguide_half_width"


@dataclass(frozen=True)
class FreeParameter:
    path: str
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValidationError(f"bounds must satisfy lo < hi, got hi={self.hi}", self.path, self.lo)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "FreeParameter":
        try:
            lo, hi = data["bounds"]
            return cls(path=str(data["path"]), lo=float(lo), hi=float(hi))
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError("free parameter needs 'path' and 'bounds: [lo, hi]'", "free", data) from e


@dataclass(frozen=True)
class EvaluationSettings:
    grid_spacing: float = 1.0
    loss: float = 0.0
    n_slices_per_cell: int = DEFAULT_SLICES_PER_CELL
    index_map: Optional[IndexMap] = None
    reference_half_width: float = REFERENCE_HALF_WIDTH_NM

    def __post_init__(self):
        if not self.grid_spacing > 0:
            raise ValidationError("grid spacing must be positive", "grid_spacing", self.grid_spacing)
        if self.loss < 0:
            raise ValidationError("loss must be >= 0", "loss", self.loss)
        if not self.reference_half_width > 0:
            raise ValidationError(
                "reference half-width must be positive", "reference_half_width", self.reference_half_width
            )


@dataclass(frozen=True)
class OptimizationProblem:
    base: TaperSpec
    window: Tuple[float, float]
    free: Tuple[FreeParameter, ...]
    settings: EvaluationSettings = field(default_factory=EvaluationSettings)

    def __post_init__(self):
        object.__setattr__(self, "free", tuple(self.free))
        lo, hi = self.window
        if not 0 < lo < hi:
            raise ValidationError(f"objective window must satisfy 0 < lo < hi, got hi={hi}", "window", lo)
        if not self.free:
            raise ValidationError("at least one free parameter is required", "free", ())
        paths = [p.path for p in self.free]
        if len(set(paths)) != len(paths):
            raise ValidationError("free parameters must be distinct", "free", paths)
        for path in paths:
            _check_path(self.base, path)

    @property
    def bounds(self) -> List[Tuple[float, float]]:
        return [(p.lo, p.hi) for p in self.free]

    @property
    def initial_values(self) -> np.ndarray:
        document = self.base.to_dict()
        return np.array([_get_path(document, p.path) for p in self.free])

    @classmethod
    def from_dict(cls, data: Dict[str, Any], base: TaperSpec) -> "OptimizationProblem":
        try:
            window = tuple(float(v) for v in data["window"])
            free = tuple(FreeParameter.from_dict(p) for p in data["free"])
        except (KeyError, TypeError) as e:
            raise ConfigError("problem needs 'window' and 'free'", "problem", str(e)) from e
        settings = data.get("settings", {})
        return cls(
            base=base,
            window=window,  # type: ignore[arg-type]
            free=free,
            settings=EvaluationSettings(
                grid_spacing=float(settings.get("grid_spacing", 1.0)),
                loss=float(settings.get("loss", 0.0)),
                n_slices_per_cell=int(settings.get("n_slices_per_cell", DEFAULT_SLICES_PER_CELL)),
                reference_half_width=float(settings.get("reference_half_width", REFERENCE_HALF_WIDTH_NM)),
            ),
        )


@dataclass
class SearchResult:
    x: np.ndarray
    objective: float
    trace: List[Tuple[int, float]]
    evaluations: int
    starts: int


@dataclass
class OptimizationResult:
    best: TaperSpec
    best_objective: float
    best_parameters: Dict[str, float]
    trace: List[Tuple[int, float]]
    evaluations: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            "best_objective": self.best_objective,
            "best_parameters": self.best_parameters,
            "best": self.best.to_dict(),
            "evaluations": self.evaluations,
            "trace": [{"iter": i, "objective": v} for i, v in self.trace],
        }


def _check_path(base: TaperSpec, path: str) -> None:
    if path == _WAVEGUIDE_PATH or _PERIODIC_PATH.match(path):
        return
    match = _CELL_PATH.match(path)
    if not match:
        raise ValidationError(
            "unknown parameter path; use cells[i].a|x_plus|x_minus, periodic_cell.a|A|g or waveguide_half_width",
            "free",
            path,
        )
    index, name = int(match.group(1)), match.group(2)
    if index >= len(base.cells):
        raise ValidationError(f"taper has only {len(base.cells)} cells", "free", path)
    if index == 0 and name == "x_minus":
        raise ValidationError("cells[0].x_minus follows waveguide_half_width; free that instead", "free", path)
    if index == len(base.cells) - 1 and name == "x_plus" and base.n_periodic > 0:
        raise ValidationError("the last x_plus follows the periodic cell maximum; free periodic_cell.A or .g", "free", path)


def _get_path(document: Dict[str, Any], path: str) -> float:
    match = _CELL_PATH.match(path)
    if match:
        return float(document["cells"][int(match.group(1))][match.group(2)])
    match = _PERIODIC_PATH.match(path)
    if match:
        return float(document["periodic_cell"][match.group(1)])
    return float(document[path])


def _set_path(document: Dict[str, Any], path: str, value: float) -> None:
    match = _CELL_PATH.match(path)
    if match:
        document["cells"][int(match.group(1))][match.group(2)] = value
        return
    match = _PERIODIC_PATH.match(path)
    if match:
        document["periodic_cell"][match.group(1)] = value
        return
    document[path] = value


def apply_parameters(base: TaperSpec, paths: Sequence[str], values: Sequence[float]) -> TaperSpec:
    """Copy of base with the named fields replaced and shared boundaries re-tied."""
    document = copy.deepcopy(base.to_dict())
    for path, value in zip(paths, values):
        _set_path(document, path, float(value))
    cells = document["cells"]
    if cells:
        cells[0]["x_minus"] = document["waveguide_half_width"]
        if document["n_periodic"] > 0:
            cell = document["periodic_cell"]
            cells[-1]["x_plus"] = 2.0 * cell["A"] + cell["g"]
    return TaperSpec.from_dict(document)


def mean_reflectance_objective(
    spec: TaperSpec,
    window: Tuple[float, float],
    settings: Optional[EvaluationSettings] = None,
) -> float:
    """Mean model reflectance over the window's probe grid."""
    settings = settings or EvaluationSettings()
    lo, hi = window
    grid = scan_grid(lo, hi, settings.grid_spacing)
    spectrum = reflectance_spectrum(
        spec,
        grid,
        loss=settings.loss,
        n_slices_per_cell=settings.n_slices_per_cell,
        index_map=settings.index_map,
        reference_half_width=settings.reference_half_width,
    )
    return band_average(spectrum, lo, hi)[0]


class _BudgetExhausted(Exception):
    pass


class _Recorder:
    """Counts evaluations against the budget and tracks the incumbent."""

    def __init__(self, objective: Callable[[np.ndarray], float], lo: np.ndarray, span: np.ndarray, budget: int):
        self.objective = objective
        self.lo = lo
        self.span = span
        self.budget = budget
        self.evaluations = 0
        self.best_x: Optional[np.ndarray] = None
        self.best_value = -np.inf
        self.trace: List[Tuple[int, float]] = []
        self.last_error: Optional[ValidationError] = None

    def to_physical(self, u: np.ndarray) -> np.ndarray:
        return self.lo + np.clip(u, 0.0, 1.0) * self.span

    def __call__(self, u: np.ndarray) -> float:
        if self.evaluations >= self.budget:
            raise _BudgetExhausted()
        self.evaluations += 1
        x = self.to_physical(u)
        try:
            value = float(self.objective(x))
        except ValidationError as e:
            self.last_error = e
            logger.debug(f"Infeasible candidate {x.tolist()}: {e}")
            return INFEASIBLE_PENALTY
        if value > self.best_value:
            self.best_value = value
            self.best_x = x
        self.trace.append((self.evaluations, self.best_value))
        return -value


def _initial_simplex(u0: np.ndarray) -> np.ndarray:
    dim = u0.size
    simplex = np.tile(u0, (dim + 1, 1))
    for i in range(dim):
        step = INITIAL_STEP if u0[i] + INITIAL_STEP <= 1.0 else -INITIAL_STEP
        simplex[i + 1, i] += step
    return simplex


def bounded_search(
    objective: Callable[[np.ndarray], float],
    bounds: Sequence[Tuple[float, float]],
    budget: int,
    seed: Optional[int] = None,
    x0: Optional[Sequence[float]] = None,
    restarts: int = DEFAULT_RESTARTS,
) -> SearchResult:
    """Maximise objective(x) inside a box with simplex descent and restarts.

    The search runs in the unit box. The first start is x0 (the box centre
    if omitted), the rest come from a Latin hypercube drawn with ``seed``.
    The evaluation budget is split evenly across starts. A candidate whose
    objective raises ValidationError is infeasible and penalised.
    """
    dim = len(bounds)
    if dim == 0:
        raise DomainError("no free parameters", "bounds", bounds)
    lo = np.array([b[0] for b in bounds], dtype=float)
    hi = np.array([b[1] for b in bounds], dtype=float)
    if np.any(lo >= hi):
        raise DomainError("every bound needs lo < hi", "bounds", list(bounds))
    if budget < EVALUATIONS_PER_PARAMETER * dim:
        raise DomainError(
            f"budget must be >= {EVALUATIONS_PER_PARAMETER} x {dim} free parameters", "budget", budget
        )

    span = hi - lo
    if x0 is None:
        u_first = np.full(dim, 0.5)
    else:
        u_first = np.clip((np.asarray(x0, dtype=float) - lo) / span, 0.0, 1.0)

    n_starts = max(1, min(restarts + 1, budget // (EVALUATIONS_PER_PARAMETER * dim)))
    starts = [u_first]
    if n_starts > 1:
        sampler = qmc.LatinHypercube(d=dim, seed=np.random.default_rng(seed))
        starts += list(sampler.random(n_starts - 1))

    recorder = _Recorder(objective, lo, span, budget)
    per_start = budget // n_starts
    for index, u0 in enumerate(starts):
        limit = budget if index == n_starts - 1 else min(budget, (index + 1) * per_start)
        recorder.budget = limit
        try:
            minimize(
                recorder,
                u0,
                method="Nelder-Mead",
                bounds=[(0.0, 1.0)] * dim,
                options={
                    "initial_simplex": _initial_simplex(u0),
                    "maxfev": limit,
                    "xatol": XATOL,
                    "fatol": FATOL,
                },
            )
        except _BudgetExhausted:
            pass
        logger.debug(f"Start {index}: incumbent {recorder.best_value:.6g} after {recorder.evaluations} evaluations")

    if recorder.best_x is None:
        names = ", ".join(f"[{a}, {b}]" for a, b in zip(lo, hi))
        detail = f"; last rejection: {recorder.last_error}" if recorder.last_error else ""
        raise OptimizationError(f"no feasible candidate inside bounds {names}{detail}")

    return SearchResult(
        x=recorder.best_x,
        objective=recorder.best_value,
        trace=recorder.trace,
        evaluations=recorder.evaluations,
        starts=n_starts,
    )


def optimize(problem: OptimizationProblem, budget: int, seed: Optional[int] = None) -> OptimizationResult:
    """Maximise the mean reflectance over the problem's window."""
    paths = [p.path for p in problem.free]

    def objective(x: np.ndarray) -> float:
        spec = apply_parameters(problem.base, paths, x)
        return mean_reflectance_objective(spec, problem.window, problem.settings)

    logger.info(
        f"Optimising {len(paths)} parameter(s) over {problem.window[0]}-{problem.window[1]} THz, budget {budget}"
    )
    x0 = np.clip(problem.initial_values, [p.lo for p in problem.free], [p.hi for p in problem.free])
    try:
        search = bounded_search(objective, problem.bounds, budget, seed=seed, x0=x0)
    except OptimizationError as e:
        raise OptimizationError(f"{e} (parameters: {', '.join(paths)})") from e

    best = apply_parameters(problem.base, paths, search.x)
    logger.info(f"Best mean reflectance {search.objective:.6f} after {search.evaluations} evaluations")
    return OptimizationResult(
        best=best,
        best_objective=search.objective,
        best_parameters={path: float(v) for path, v in zip(paths, search.x)},
        trace=search.trace,
        evaluations=search.evaluations,
    )


def export_trace(trace: Sequence[Tuple[int, float]], destination: Union[str, Path]) -> Path:
    return write_csv(destination, {"iter": [i for i, _ in trace], "objective": [v for _, v in trace]})


def export_result(result: OptimizationResult, destination: Union[str, Path]) -> Path:
    return write_json(destination, result.to_dict())
