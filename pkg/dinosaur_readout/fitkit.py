"""Least-squares fits for saturation curves, spectral lines and pulsed g2 histograms.

Every fitter runs the same bounded trust-region core and reports the
covariance, standard errors and a conditioning flag next to the parameters.
Initial guesses follow fixed rules, so a fit depends on its data only.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import least_squares
from scipy.special import voigt_profile

from dinosaur_readout.artifacts import read_csv, write_json
from dinosaur_readout.errors import DomainError, FitError

logger = logging.getLogger(__name__)

TOLERANCE = 1e-12
MAX_EVALUATIONS_PER_PARAMETER = 400
ILL_CONDITIONED = 1.0 / math.sqrt(np.finfo(float).eps)
LIFETIME_LIMIT_MHZ = 20.0
FWHM_GAUSS_FACTOR = 2.0 * math.sqrt(2.0 * math.log(2.0))
MAX_CORNER_PARAMETERS = 8
PEAK_INTEGRATION_SAMPLES = 4001
OVERLAP_FACTOR = 6.0


def saturation_model(P: np.ndarray, I_s: float, P_s: float, slope: float = 0.0) -> np.ndarray:
    """I(P) = I_s P / (P + P_s) + slope * P."""
    return I_s * P / (P + P_s) + slope * P


def lorentzian(f: np.ndarray, offset: float, amplitude: float, center: float, hwhm: float) -> np.ndarray:
    return offset + amplitude / (1.0 + ((f - center) / hwhm) ** 2)


def voigt(
    f: np.ndarray,
    offset: float,
    amplitude: float,
    center: float,
    sigma: float,
    gamma: float,
) -> np.ndarray:
    """Voigt line scaled so that ``amplitude`` is the peak height above offset."""
    return offset + amplitude * voigt_profile(f - center, sigma, gamma) / voigt_profile(0.0, sigma, gamma)


@dataclass
class FitReport:
    names: Tuple[str, ...]
    values: np.ndarray
    errors: np.ndarray
    covariance: np.ndarray
    residual_norm_initial: float
    residual_norm: float
    condition_number: float
    ill_conditioned: bool
    converged: bool
    evaluations: int
    message: str = ""

    @property
    def parameters(self) -> Dict[str, float]:
        return dict(zip(self.names, self.values.tolist()))

    def error_of(self, name: str) -> float:
        return float(self.errors[self.names.index(name)])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "parameters": self.parameters,
            "errors": dict(zip(self.names, self.errors.tolist())),
            "residual_norm_initial": self.residual_norm_initial,
            "residual_norm": self.residual_norm,
            "condition_number": self.condition_number,
            "ill_conditioned": self.ill_conditioned,
            "converged": self.converged,
            "evaluations": self.evaluations,
            "message": self.message,
        }


def _fit(
    model: Callable[..., np.ndarray],
    x: np.ndarray,
    y: np.ndarray,
    p0: Sequence[float],
    bounds: Tuple[Sequence[float], Sequence[float]],
    names: Sequence[str],
    scales: Sequence[float],
) -> FitReport:
    """Bounded least squares plus covariance and an identifiability check.

    ``scales`` are characteristic magnitudes per parameter. The Jacobian is
    scaled by max(|p|, scale) before its condition number is taken, so a
    parameter that barely moves the model reads as ill-conditioned.
    """
    lower = np.asarray(bounds[0], dtype=float)
    upper = np.asarray(bounds[1], dtype=float)
    p0 = np.clip(np.asarray(p0, dtype=float), lower, upper)

    def residual(p: np.ndarray) -> np.ndarray:
        return model(x, *p) - y

    initial_norm = float(np.linalg.norm(residual(p0)))
    result = least_squares(
        residual,
        p0,
        bounds=(lower, upper),
        method="trf",
        x_scale="jac",
        ftol=TOLERANCE,
        xtol=TOLERANCE,
        gtol=TOLERANCE,
        max_nfev=MAX_EVALUATIONS_PER_PARAMETER * (len(p0) + 1),
    )
    values = result.x
    final_norm = float(np.linalg.norm(result.fun))

    jac = np.asarray(result.jac, dtype=float)
    scale = np.maximum(np.abs(values), np.asarray(scales, dtype=float))
    try:
        condition = float(np.linalg.cond(jac * scale))
    except np.linalg.LinAlgError:
        condition = math.inf
    ill = not math.isfinite(condition) or condition > ILL_CONDITIONED

    n, p = y.size, values.size
    if ill:
        covariance = np.full((p, p), np.inf)
    else:
        dof = max(n - p, 1)
        covariance = (final_norm**2 / dof) * np.linalg.pinv(jac.T @ jac)
        covariance = 0.5 * (covariance + covariance.T)
    errors = np.sqrt(np.abs(np.diag(covariance)))

    if not result.success and not ill:
        raise FitError(f"least squares did not converge: {result.message}", residual_norm=final_norm)
    if ill:
        logger.warning(f"Ill-conditioned fit (condition number {condition:.3g}); parameters not all identifiable")
    logger.debug(f"Fit {names}: residual {initial_norm:.4g} -> {final_norm:.4g} in {result.nfev} evaluations")
    return FitReport(
        names=tuple(names),
        values=values,
        errors=errors,
        covariance=covariance,
        residual_norm_initial=initial_norm,
        residual_norm=final_norm,
        condition_number=condition,
        ill_conditioned=ill,
        converged=bool(result.success),
        evaluations=int(result.nfev),
        message=str(result.message),
    )


def _xy(points: Union[Sequence[Tuple[float, float]], np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
    data = np.asarray(points, dtype=float)
    if data.ndim != 2 or data.shape[1] < 2:
        raise DomainError("points must be (x, y) pairs", "points", data.shape)
    order = np.argsort(data[:, 0], kind="stable")
    return data[order, 0], data[order, 1]


@dataclass
class SaturationFit:
    I_s: float
    P_s: float
    background_slope: Optional[float]
    report: FitReport

    @property
    def covariance(self) -> np.ndarray:
        return self.report.covariance

    def to_dict(self) -> Dict[str, Any]:
        return {"I_s": self.I_s, "P_s": self.P_s, "background_slope": self.background_slope, **self.report.to_dict()}


def fit_saturation(
    points: Union[Sequence[Tuple[float, float]], np.ndarray],
    with_linear_background: bool = False,
) -> SaturationFit:
    """Fit I = I_s P / (P + P_s), optionally plus a linear background c P.

    Starts from I_s = max(I) and P_s = median(P).
    """
    P, I = _xy(points)
    needed = 4 if with_linear_background else 3
    if P.size < needed:
        raise DomainError(f"need at least {needed} points", "points", P.size)
    if np.unique(P).size != P.size:
        raise DomainError("power values must be distinct", "P", P.tolist())
    if np.any(P < 0):
        raise DomainError("powers must be >= 0", "P", float(P.min()))

    p_floor = float(P[P > 0].min()) if np.any(P > 0) else 1.0
    i_max = float(np.max(np.abs(I))) or 1.0
    p0 = [i_max, float(np.median(P))]
    lower = [0.0, 1e-3 * p_floor]
    upper = [100.0 * i_max, 100.0 * float(P.max())]
    names = ["I_s", "P_s"]
    scales = [i_max, float(np.median(P)) or p_floor]
    model = saturation_model
    if with_linear_background:
        p0.append(0.0)
        lower.append(-np.inf)
        upper.append(np.inf)
        names.append("background_slope")
        scales.append(i_max / float(P.max()))
    else:
        model = lambda P, I_s, P_s: saturation_model(P, I_s, P_s)  # noqa: E731

    report = _fit(model, P, I, p0, (lower, upper), names, scales)
    values = report.parameters
    return SaturationFit(
        I_s=values["I_s"],
        P_s=values["P_s"],
        background_slope=values.get("background_slope"),
        report=report,
    )


def _line_guess(f: np.ndarray, y: np.ndarray) -> Tuple[float, float, float, float]:
    """Offset, signed amplitude, centre and FWHM from the half-height crossings."""
    offset = 0.5 * (y[0] + y[-1])
    high, low = float(y.max()) - offset, float(y.min()) - offset
    dip = abs(low) > abs(high)
    amplitude = low if dip else high
    center = float(f[np.argmin(y)] if dip else f[np.argmax(y)])
    if amplitude == 0:
        return offset, 0.0, center, float(f[-1] - f[0]) / 4
    above = np.flatnonzero((y - offset) / amplitude > 0.5)
    step = float(f[-1] - f[0]) / (f.size - 1)
    fwhm = max(float(f[above[-1]] - f[above[0]]), step)
    return offset, amplitude, center, fwhm


@dataclass
class VoigtFit:
    center: float
    gaussian_sigma: float
    lorentzian_gamma: float
    amplitude: float
    offset: float
    report: FitReport

    @property
    def errors(self) -> Dict[str, float]:
        return dict(zip(self.report.names, self.report.errors.tolist()))

    @property
    def fwhm(self) -> float:
        """Olivero-Longbothum approximation of the Voigt FWHM."""
        f_l = 2.0 * self.lorentzian_gamma
        f_g = FWHM_GAUSS_FACTOR * self.gaussian_sigma
        return 0.5346 * f_l + math.sqrt(0.2166 * f_l**2 + f_g**2)

    def to_dict(self) -> Dict[str, Any]:
        return {"fwhm": self.fwhm, **self.report.to_dict()}


@dataclass
class LorentzFit:
    center: float
    fwhm: float
    amplitude: float
    offset: float
    report: FitReport

    @property
    def errors(self) -> Dict[str, float]:
        errors = dict(zip(self.report.names, self.report.errors.tolist()))
        errors["fwhm"] = 2.0 * errors["hwhm"]
        return errors

    def to_dict(self) -> Dict[str, Any]:
        return {"fwhm": self.fwhm, "fwhm_err": self.errors["fwhm"], **self.report.to_dict()}


def _check_line_points(f: np.ndarray, minimum: int = 6) -> None:
    if f.size < minimum:
        raise DomainError(f"need at least {minimum} points spanning the line", "points", f.size)
    if np.unique(f).size != f.size:
        raise DomainError("frequencies must be distinct", "f", f.size)


def fit_voigt(points: Union[Sequence[Tuple[float, float]], np.ndarray]) -> VoigtFit:
    f, y = _xy(points)
    _check_line_points(f)
    offset, amplitude, center, fwhm = _line_guess(f, y)
    # equal Gaussian and Lorentzian widths reproducing the observed FWHM
    fwhm_0 = 2.0 / (math.sqrt(5.0) + 1.0) * fwhm
    span = float(f[-1] - f[0])
    y_scale = float(np.max(np.abs(y))) or 1.0
    report = _fit(
        voigt,
        f,
        y,
        [offset, amplitude, center, fwhm_0 / FWHM_GAUSS_FACTOR, fwhm_0 / 2.0],
        ([-np.inf, -np.inf, f[0], 1e-9 * span, 1e-9 * span], [np.inf, np.inf, f[-1], span, span]),
        ["offset", "amplitude", "center", "sigma", "gamma"],
        [y_scale, y_scale, span, span, span],
    )
    v = report.parameters
    return VoigtFit(
        center=v["center"],
        gaussian_sigma=v["sigma"],
        lorentzian_gamma=v["gamma"],
        amplitude=v["amplitude"],
        offset=v["offset"],
        report=report,
    )


def fit_lorentzian(points: Union[Sequence[Tuple[float, float]], np.ndarray]) -> LorentzFit:
    f, y = _xy(points)
    _check_line_points(f)
    offset, amplitude, center, fwhm = _line_guess(f, y)
    span = float(f[-1] - f[0])
    y_scale = float(np.max(np.abs(y))) or 1.0
    report = _fit(
        lorentzian,
        f,
        y,
        [offset, amplitude, center, fwhm / 2.0],
        ([-np.inf, -np.inf, f[0], 1e-9 * span], [np.inf, np.inf, f[-1], span]),
        ["offset", "amplitude", "center", "hwhm"],
        [y_scale, y_scale, span, span],
    )
    v = report.parameters
    return LorentzFit(
        center=v["center"],
        fwhm=2.0 * v["hwhm"],
        amplitude=v["amplitude"],
        offset=v["offset"],
        report=report,
    )


def lifetime_broadening(fit: LorentzFit, nu_lifetime: float = LIFETIME_LIMIT_MHZ) -> float:
    """Fitted linewidth in units of the lifetime-limited linewidth."""
    if not nu_lifetime > 0:
        raise DomainError("lifetime limit must be positive", "nu_lifetime", nu_lifetime)
    return fit.fwhm / nu_lifetime


@dataclass
class G2Fit:
    tau1: float
    tau2: float
    amplitudes: np.ndarray
    peak_times: np.ndarray
    dark_count_level: float
    areas: np.ndarray
    g2_0: float
    g2_0_err: float
    report: FitReport
    warnings: List[str] = field(default_factory=list)

    @property
    def amplitude_ratio(self) -> float:
        """Centre-to-side ratio of the summed peak amplitudes."""
        totals = self.amplitudes.sum(axis=1)
        centre = self.peak_times.size // 2
        sides = np.delete(totals, centre)
        return float(totals[centre] / sides.mean())

    def to_dict(self) -> Dict[str, Any]:
        return {
            "tau1": self.tau1,
            "tau2": self.tau2,
            "dark_count_level": self.dark_count_level,
            "areas": self.areas.tolist(),
            "g2_0": self.g2_0,
            "g2_0_err": self.g2_0_err,
            "single_photon": is_single_photon(self),
            "warnings": self.warnings,
            **self.report.to_dict(),
        }


def _g2_model(peak_times: np.ndarray) -> Callable[..., np.ndarray]:
    def model(tau: np.ndarray, dark: float, tau1: float, tau2: float, *amplitudes: float) -> np.ndarray:
        a = np.asarray(amplitudes).reshape(peak_times.size, 2)
        distance = np.abs(tau[:, None] - peak_times[None, :])
        peaks = a[:, 0] * np.exp(-distance / tau1) + a[:, 1] * np.exp(-distance / tau2)
        return dark + peaks.sum(axis=1)

    return model


def _peak_areas(amplitudes: np.ndarray, tau1: float, tau2: float, period: float) -> np.ndarray:
    """Area of each dark-subtracted peak over its +-period/2 window."""
    offset = np.linspace(-period / 2, period / 2, PEAK_INTEGRATION_SAMPLES)
    shape1 = trapezoid(np.exp(-np.abs(offset) / tau1), offset)
    shape2 = trapezoid(np.exp(-np.abs(offset) / tau2), offset)
    return amplitudes[:, 0] * shape1 + amplitudes[:, 1] * shape2


def _g2_ratio(areas: np.ndarray) -> float:
    centre = areas.size // 2
    sides = np.delete(areas, centre).mean()
    if not sides > 0:
        raise FitError("side peaks have no area; g2(0) undefined", residual_norm=math.nan)
    return float(areas[centre] / sides)


def _corner_error(values: np.ndarray, errors: np.ndarray, period: float, g2_0: float) -> float:
    """Largest deviation of g2(0) over the +-1 sigma corners of the dominant parameters."""
    if not np.all(np.isfinite(errors)):
        return math.inf

    def g2_at(p: np.ndarray) -> float:
        amplitudes = np.clip(p[3:].reshape(-1, 2), 0.0, None)
        return _g2_ratio(_peak_areas(amplitudes, max(p[1], 1e-12), max(p[2], 1e-12), period))

    sensitivity = np.zeros(values.size)
    for i in range(1, values.size):
        if errors[i] == 0:
            continue
        shifted = values.copy()
        shifted[i] += errors[i]
        sensitivity[i] = abs(g2_at(shifted) - g2_0)
    dominant = [i for i in np.argsort(-sensitivity)[:MAX_CORNER_PARAMETERS] if sensitivity[i] > 0]

    worst = 0.0
    for signs in itertools.product((-1.0, 1.0), repeat=len(dominant)):
        corner = values.copy()
        for i, sign in zip(dominant, signs):
            corner[i] += sign * errors[i]
        worst = max(worst, abs(g2_at(corner) - g2_0))
    return worst


def fit_g2_pulsed(
    tau: Sequence[float],
    coincidences: Sequence[float],
    pulse_period: float,
    n_side_peaks: int = 2,
    dark_rate: float = 0.0,
) -> G2Fit:
    """Fit all peaks of a pulsed g2 histogram with shared bi-exponential decays.

    ``dark_rate`` is the flat coincidence background per bin, in the same
    units as ``coincidences``; it is held fixed and excluded from the areas.
    """
    tau = np.asarray(tau, dtype=float)
    counts = np.asarray(coincidences, dtype=float)
    if not pulse_period > 0:
        raise DomainError("pulse period must be positive", "pulse_period", pulse_period)
    if n_side_peaks < 2:
        raise DomainError("need at least 2 side peaks on each side", "n_side_peaks", n_side_peaks)
    if tau.shape != counts.shape or tau.size < 4 * (2 * n_side_peaks + 1):
        raise DomainError("histogram needs matching tau/coincidence arrays with enough bins", "tau", tau.size)
    reach = n_side_peaks * pulse_period
    if tau.min() > -reach or tau.max() < reach:
        raise DomainError(
            f"histogram must cover +-{reach} ns to include {n_side_peaks} side peaks per side",
            "tau",
            (float(tau.min()), float(tau.max())),
        )
    scale = float(counts.max())
    if not scale > 0:
        raise DomainError("histogram holds no coincidences", "coincidences", scale)

    y = counts / scale
    dark = dark_rate / scale
    peak_times = np.arange(-n_side_peaks, n_side_peaks + 1) * pulse_period
    heights = np.array([max(float(y[np.argmin(np.abs(tau - t))]) - dark, 0.0) for t in peak_times])

    p0 = [pulse_period / 10.0, pulse_period / 3.0]
    for h in heights:
        p0 += [0.7 * h, 0.3 * h]
    n_amplitudes = 2 * peak_times.size
    lower = [1e-6 * pulse_period] * 2 + [0.0] * n_amplitudes
    upper = [pulse_period] * 2 + [np.inf] * n_amplitudes
    names = ["tau1", "tau2"] + [f"A{c}[{j}]" for j in range(-n_side_peaks, n_side_peaks + 1) for c in (1, 2)]

    model = _g2_model(peak_times)
    report = _fit(
        lambda t, *p: model(t, dark, *p),
        tau,
        y,
        p0,
        (lower, upper),
        names,
        [pulse_period, pulse_period] + [1.0] * n_amplitudes,
    )
    tau1, tau2 = float(report.values[0]), float(report.values[1])
    amplitudes = report.values[2:].reshape(peak_times.size, 2)
    areas = _peak_areas(amplitudes, tau1, tau2, pulse_period)
    g2_0 = _g2_ratio(areas)

    # corner search works on the full vector with the fixed dark level in slot 0
    full_values = np.concatenate(([dark], report.values))
    full_errors = np.concatenate(([0.0], report.errors))
    g2_0_err = _corner_error(full_values, full_errors, pulse_period, g2_0)

    warnings = []
    if pulse_period < OVERLAP_FACTOR * max(tau1, tau2):
        message = f"peak windows overlap: period {pulse_period} ns < {OVERLAP_FACTOR} x tau_max {max(tau1, tau2):.3g} ns"
        logger.warning(message)
        warnings.append(message)

    logger.info(f"g2(0) = {g2_0:.4f} +- {g2_0_err:.4f}")
    return G2Fit(
        tau1=tau1,
        tau2=tau2,
        amplitudes=amplitudes * scale,
        peak_times=peak_times,
        dark_count_level=dark_rate,
        areas=areas * scale,
        g2_0=g2_0,
        g2_0_err=g2_0_err,
        report=report,
        warnings=warnings,
    )


def is_single_photon(fit: G2Fit) -> bool:
    """g2(0) stays below 1/2 across its whole maximum-error interval."""
    return fit.g2_0 + fit.g2_0_err < 0.5


def load_points(path: Union[str, Path], x_column: str, y_column: str) -> np.ndarray:
    frame = read_csv(path, required=(x_column, y_column))
    return frame[[x_column, y_column]].to_numpy(dtype=float)


def export_fit(fit: Any, destination: Union[str, Path]) -> Path:
    return write_json(destination, fit.to_dict())
