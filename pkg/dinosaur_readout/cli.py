"""Command-line front end: one subcommand per toolkit operation.

Every run resolves a RunConfig (preset or YAML, then --set/--input and
subcommand flags on top), writes its artifacts plus config.yaml and
manifest.json into the output directory, and prints a one-line summary.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import yaml  # type: ignore

from dinosaur_readout import __version__
from dinosaur_readout.artifacts import (
    MANIFEST_NAME,
    inputs_digest,
    read_json,
    write_csv,
    write_json,
    write_manifest,
)
from dinosaur_readout.bloch import (
    REFERENCE_HALF_WIDTH_NM,
    band_scan,
    export_band_scan,
    export_gaps,
    find_bandgaps,
    scan_grid,
    slice_unit_cell,
    volume_average_map,
)
from dinosaur_readout.calib import (
    Measured,
    load_calibration_inputs,
    reflectance_from_saturation,
    reflectance_from_spectra,
)
from dinosaur_readout.config import (
    COMMANDS,
    RunConfig,
    check_inputs,
    default_log_level,
    default_output_dir,
    load_config,
    parse_config,
    save_config,
)
from dinosaur_readout.crc import (
    analyze,
    export_report,
    read_shots,
    simulate_crc,
    write_shots,
)
from dinosaur_readout.crc import threshold_scan as crc_threshold_scan
from dinosaur_readout.errors import (
    EXIT_NUMERICAL,
    EXIT_OK,
    EXIT_VALIDATION,
    ConfigError,
    ToolkitError,
    exit_code_for,
)
from dinosaur_readout.fitkit import (
    export_fit,
    fit_g2_pulsed,
    fit_lorentzian,
    fit_saturation,
    fit_voigt,
    lifetime_broadening,
    load_points,
)
from dinosaur_readout.geometry import build_taper, export_profile
from dinosaur_readout.readout import (
    Convention,
    export_histogram,
    export_metrics,
    export_pmf,
    export_sweep,
    simulate_histogram,
    ssr_metrics,
    sweep_metrics,
    total_variation,
)
from dinosaur_readout.readout import threshold_scan as ssr_threshold_scan
from dinosaur_readout.scatter import (
    convergence_scan,
    export_operating_range,
    export_spectrum,
    operating_range,
    reflectance_spectrum,
)
from dinosaur_readout.taperopt import export_result, export_trace, optimize

logger = logging.getLogger(__name__)

CONFIG_ECHO_NAME = "config.yaml"
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

FIT_COLUMNS = {
    "saturation": ("P_nW", "I_cps"),
    "voigt": ("f_MHz", "contrast"),
    "lorentzian": ("f_MHz", "contrast"),
    "g2": ("tau_ns", "coincidences"),
}

Outcome = Tuple[List[str], str]


def _grid(config: RunConfig) -> np.ndarray:
    return scan_grid(
        float(config.setting("nu_lo", 260.0)),
        float(config.setting("nu_hi", 380.0)),
        float(config.setting("nu_step", 1.0)),
    )


def _index_map(config: RunConfig):
    return volume_average_map(float(config.setting("n_material", 2.6)))


def _reference(config: RunConfig) -> float:
    return float(config.setting("reference_half_width", REFERENCE_HALF_WIDTH_NM))


def _input(config: RunConfig, name: str) -> Path:
    if name not in config.inputs:
        raise ConfigError(f"'{config.command}' needs --input {name}=<path>", f"inputs.{name}", None)
    return Path(config.inputs[name]).expanduser()


def _thresholds(config: RunConfig) -> Optional[List[int]]:
    values = config.setting("scan_thresholds")
    return None if values is None else [int(v) for v in values]


def cmd_profile(config: RunConfig, out: Path) -> Outcome:
    profile = build_taper(config.taper(), float(config.setting("spacing", 1.0)))
    export_profile(profile, out / "profile.csv")
    return ["profile.csv"], f"profile: {profile.z.size} samples over {profile.z_max:.1f} nm"


def cmd_bands(config: RunConfig, out: Path) -> Outcome:
    cell = config.taper().periodic_cell
    stack = slice_unit_cell(cell, int(config.setting("n_slices", 32)), _index_map(config), _reference(config))
    nu_lo = float(config.setting("nu_lo", 150.0))
    nu_hi = float(config.setting("nu_hi", 450.0))
    resolution = float(config.setting("resolution", 0.5))

    gaps = find_bandgaps(stack, nu_lo, nu_hi, resolution)
    export_band_scan(band_scan(stack, scan_grid(nu_lo, nu_hi, resolution)), out / "bands.csv")
    export_gaps(gaps, out / "gaps.csv")
    if gaps:
        first = gaps[0]
        summary = f"bands: {len(gaps)} gap(s); first {first.lo:.2f}-{first.hi:.2f} THz (ratio {first.gap_midgap_ratio:.4f})"
    else:
        summary = f"bands: no gap in {nu_lo}-{nu_hi} THz"
    return ["bands.csv", "gaps.csv"], summary


def cmd_reflect(config: RunConfig, out: Path) -> Outcome:
    device = config.taper()
    grid = _grid(config)
    loss = float(config.setting("loss", 0.0))
    n_slices = int(config.setting("n_slices_per_cell", 32))
    index_map = _index_map(config)
    reference = _reference(config)

    spectrum = reflectance_spectrum(device, grid, loss, n_slices, index_map, reference_half_width=reference)
    window = operating_range(spectrum, float(config.setting("threshold", 0.5)))
    export_spectrum(spectrum, out / "spectrum.csv")
    export_operating_range(window, out / "operating_range.json")
    outputs = ["spectrum.csv", "operating_range.json"]

    if config.setting("compare_untapered", False) and device.cells:
        bare = reflectance_spectrum(
            device.without_taper(), grid, loss, n_slices, index_map, reference_half_width=reference
        )
        export_spectrum(bare, out / "spectrum_untapered.csv")
        outputs.append("spectrum_untapered.csv")

    if window is None:
        return outputs, f"reflect: max R {spectrum.R.max():.4f}, no operating range"
    return outputs, (
        f"reflect: operating range {window.lo:.1f}-{window.hi:.1f} THz, "
        f"mean R {window.mean_R:.4f} +- {window.std_R:.4f}"
    )


def cmd_converge(config: RunConfig, out: Path) -> Outcome:
    n_max = int(config.setting("n_max", 20))
    scans = convergence_scan(
        config.taper(),
        n_max,
        _grid(config),
        n_min=int(config.setting("n_min", 1)),
        loss=float(config.setting("loss", 0.0)),
        n_slices_per_cell=int(config.setting("n_slices_per_cell", 32)),
        index_map=_index_map(config),
        reference_half_width=_reference(config),
    )
    columns: Dict[str, List[Any]] = {"n_periodic": [], "nu_THz": [], "R": [], "T": [], "S": []}
    for n, spectrum in scans:
        columns["n_periodic"] += [n] * len(spectrum)
        for name, values in spectrum.to_columns().items():
            columns[name] += values.tolist()
    write_csv(out / "convergence.csv", columns)

    deltas = [float(np.max(np.abs(b.R - a.R))) for (_, a), (_, b) in zip(scans, scans[1:])]
    last = deltas[-1] if deltas else 0.0
    return ["convergence.csv"], f"converge: {len(scans)} spectra, last max |dR| {last:.2e}"


def cmd_optimize(config: RunConfig, out: Path) -> Outcome:
    result = optimize(config.optimization_problem(), int(config.setting("budget", 200)), config.seed)
    export_trace(result.trace, out / "trace.csv")
    export_result(result, out / "result.json")
    return ["trace.csv", "result.json"], (
        f"optimize: mean R {result.best_objective:.6f} after {result.evaluations} evaluations"
    )


def cmd_calibrate(config: RunConfig, out: Path) -> Outcome:
    inputs = load_calibration_inputs(
        _input(config, "sig_R"),
        _input(config, "ref_R"),
        _input(config, "sig_T"),
        _input(config, "ref_T"),
        eta_retro=float(config.setting("eta_retro", 0.97)),
    )
    calibrated = reflectance_from_spectra(inputs)
    columns = dict(calibrated.spectrum.to_columns())
    columns["out_of_range"] = calibrated.out_of_range
    write_csv(out / "reflectance.csv", columns)
    write_json(
        out / "calibration.json",
        {
            "eta_retro": inputs.eta_retro,
            "out_of_range": int(calibrated.out_of_range.sum()),
            "warnings": calibrated.warnings,
        },
    )
    R = calibrated.spectrum.R
    return ["reflectance.csv", "calibration.json"], f"calibrate: {R.size} points, R in [{R.min():.4f}, {R.max():.4f}]"


def cmd_sat_reflect(config: RunConfig, out: Path) -> Outcome:
    required = ("is_ref", "is_wg")
    missing = [name for name in required if config.setting(name) is None]
    if missing:
        raise ConfigError("saturation intensities are required", "--" + missing[0].replace("_", "-"), None)
    result = reflectance_from_saturation(
        Measured(float(config.setting("is_ref")), float(config.setting("is_ref_err", 0.0))),
        Measured(float(config.setting("is_wg")), float(config.setting("is_wg_err", 0.0))),
    )
    write_json(out / "sat_reflect.json", result.to_dict())
    return ["sat_reflect.json"], (
        f"sat-reflect: R_V2 = {result.R_V2.value:.3f} +- {result.R_V2.error:.3f}, "
        f"collection fraction {result.collection_fraction:.2f}"
    )


def cmd_ssr(config: RunConfig, out: Path) -> Outcome:
    model = config.readout_model()
    if config.setting("convention") is not None:
        model = model.replace(convention=Convention.from_string(config.setting("convention")).value)
    readouts = int(config.setting("readouts", 2))
    dark_windows = int(config.setting("dark_windows", 1))

    result = ssr_metrics(model, int(config.setting("threshold", 0)), readouts, dark_windows)
    export_metrics(result, out / "metrics.json")
    export_pmf(result.pmf_bright, out / "pmf_bright.csv")
    export_pmf(result.pmf_dark, out / "pmf_dark.csv")
    outputs = ["metrics.json", "pmf_bright.csv", "pmf_dark.csv"]

    thresholds = _thresholds(config)
    if thresholds:
        scan = ssr_threshold_scan(model, thresholds, readouts, dark_windows)
        write_csv(
            out / "threshold_scan.csv",
            {
                "threshold": [r.threshold for r in scan],
                "fidelity": [r.fidelity for r in scan],
                "success_rate": [r.success_rate for r in scan],
                "discard_fraction": [r.discard_fraction for r in scan],
            },
        )
        outputs.append("threshold_scan.csv")

    shots = int(config.setting("mc_shots", 0))
    if shots:
        histogram = simulate_histogram(model, shots, config.seed, "bright_double", readouts)
        export_histogram(histogram, out / "histogram.csv")
        distance = total_variation(histogram, result.pmf_bright)
        write_json(out / "monte_carlo.json", {"shots": shots, "seed": config.seed, "total_variation": distance})
        outputs += ["histogram.csv", "monte_carlo.json"]

    return outputs, (
        f"ssr: fidelity {result.fidelity:.4f}, success {result.success_rate:.4f}, "
        f"discard {result.discard_fraction:.4f} ({result.convention.value})"
    )


def cmd_ssr_sweep(config: RunConfig, out: Path) -> Outcome:
    rows = sweep_metrics(
        config.readout_models(),
        int(config.setting("threshold", 0)),
        int(config.setting("readouts", 2)),
        int(config.setting("dark_windows", 1)),
    )
    export_sweep(rows, out / "sweep.csv")
    failed = sum(1 for r in rows if r.error)
    return ["sweep.csv"], f"ssr-sweep: {len(rows)} model(s), {failed} failed"


def _crc_outputs(config: RunConfig, records, out: Path) -> Outcome:
    threshold = int(config.setting("threshold", 5))
    window = float(config.setting("readout_window", config.pulse_sequence().readout_window))
    result = analyze(records, threshold, window)
    export_report(result, out / "crc_report.json")
    outputs = ["crc_report.json"]

    thresholds = _thresholds(config)
    if thresholds:
        scan = crc_threshold_scan(records, thresholds, window)
        write_csv(
            out / "crc_threshold_scan.csv",
            {
                "threshold": [r.threshold for r in scan],
                "kept": [len(r.kept) for r in scan],
                "discard_fraction": [r.discard_fraction for r in scan],
                "lambda_hat": [np.nan if r.lambda_hat is None else r.lambda_hat for r in scan],
            },
        )
        outputs.append("crc_threshold_scan.csv")

    if result.rate is None:
        return outputs, f"crc: kept 0 of {result.total}"
    return outputs, (
        f"crc: kept {len(result.kept)} of {result.total}, "
        f"lambda {result.lambda_hat:.3f} +- {result.lambda_err:.3f}, rate {result.rate:.6g} cps"
    )


def cmd_crc_filter(config: RunConfig, out: Path) -> Outcome:
    return _crc_outputs(config, read_shots(_input(config, "shots")), out)


def cmd_crc_sim(config: RunConfig, out: Path) -> Outcome:
    records = simulate_crc(
        config.pulse_sequence(),
        config.telegraph_model(),
        int(config.setting("shots", 10_000)),
        config.seed,
    )
    write_shots(records, out / "shots.csv")
    outputs, summary = _crc_outputs(config, records, out)
    return ["shots.csv"] + outputs, summary


def cmd_fit(config: RunConfig, out: Path) -> Outcome:
    kind = str(config.setting("kind", "saturation")).lower()
    if kind not in FIT_COLUMNS:
        raise ConfigError(f"expected one of {', '.join(FIT_COLUMNS)}", "kind", kind)
    x_column, y_column = FIT_COLUMNS[kind]
    points = load_points(_input(config, "data"), config.setting("x_column", x_column), config.setting("y_column", y_column))

    if kind == "saturation":
        fit = fit_saturation(points, bool(config.setting("with_linear_background", False)))
        summary = f"fit: I_s {fit.I_s:.6g}, P_s {fit.P_s:.6g}"
    elif kind == "voigt":
        fit = fit_voigt(points)
        summary = f"fit: Voigt FWHM {fit.fwhm:.6g} at {fit.center:.6g}"
    elif kind == "lorentzian":
        fit = fit_lorentzian(points)
        ratio = lifetime_broadening(fit, float(config.setting("nu_lifetime", 20.0)))
        summary = f"fit: Lorentzian FWHM {fit.fwhm:.6g} ({ratio:.2f}x lifetime limit)"
    else:
        if config.setting("pulse_period") is None:
            raise ConfigError("g2 fits need the pulse period in ns", "pulse_period", None)
        fit = fit_g2_pulsed(
            points[:, 0],
            points[:, 1],
            float(config.setting("pulse_period")),
            int(config.setting("n_side_peaks", 2)),
            float(config.setting("dark_rate", 0.0)),
        )
        summary = f"fit: g2(0) {fit.g2_0:.4f} +- {fit.g2_0_err:.4f}"

    export_fit(fit, out / "fit.json")
    if not fit.report.converged:
        summary += " (not converged)"
    return ["fit.json"], summary


HANDLERS: Dict[str, Callable[[RunConfig, Path], Outcome]] = {
    "profile": cmd_profile,
    "bands": cmd_bands,
    "reflect": cmd_reflect,
    "converge": cmd_converge,
    "optimize": cmd_optimize,
    "calibrate": cmd_calibrate,
    "sat-reflect": cmd_sat_reflect,
    "ssr": cmd_ssr,
    "ssr-sweep": cmd_ssr_sweep,
    "crc-filter": cmd_crc_filter,
    "crc-sim": cmd_crc_sim,
    "fit": cmd_fit,
}


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--config",
        help="Preset name (si_table1 or v2_readout, fabricated_taper, fabricated_reflector) or YAML run document",
    )
    parser.add_argument("--output-dir", help="Directory for artifacts (default: $DINOSAUR_OUTPUT_DIR or ./out)")
    parser.add_argument("--seed", type=int, help="Random seed; drawn and recorded when omitted")
    parser.add_argument("--debug", action="store_true", help="Enable debug logging")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Override a numeric setting (value parsed as YAML)",
    )
    parser.add_argument(
        "--input",
        dest="inputs",
        action="append",
        default=[],
        metavar="NAME=PATH",
        help="Name an input file",
    )


def _grid_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--nu-lo", type=float, help="Lowest probe frequency (THz)")
    parser.add_argument("--nu-hi", type=float, help="Highest probe frequency (THz)")
    parser.add_argument("--nu-step", type=float, help="Probe frequency spacing (THz)")
    parser.add_argument("--loss", type=float, help="Imaginary index added to reflector layers")
    parser.add_argument("--n-slices-per-cell", type=int, help="Layers per unit cell")
    parser.add_argument("--n-material", type=float, help="Refractive index of the nanobeam material")
    parser.add_argument("--reference-half-width", type=float, help="Fill-fraction reference half-width (nm)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dinosaur-readout",
        description="Corrugated nanobeam reflector design and single-shot readout analysis",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("profile", help="Sample the corrugation half-width x(z) (nm)")
    _common(p)
    p.add_argument("--spacing", type=float, help="Sample spacing along z (nm)")

    p = sub.add_parser("bands", help="Band scan and gaps of the periodic cell (THz)")
    _common(p)
    p.add_argument("--nu-lo", type=float, help="Lowest scan frequency (THz)")
    p.add_argument("--nu-hi", type=float, help="Highest scan frequency (THz)")
    p.add_argument("--resolution", type=float, help="Scan spacing (THz)")
    p.add_argument("--n-slices", type=int, help="Layers per unit cell")
    p.add_argument("--n-material", type=float, help="Refractive index of the nanobeam material")
    p.add_argument("--reference-half-width", type=float, help="Fill-fraction reference half-width (nm)")

    p = sub.add_parser("reflect", help="Reflectance spectrum and operating range (THz)")
    _common(p)
    _grid_flags(p)
    p.add_argument("--threshold", type=float, help="Reflectance defining the operating range")
    p.add_argument("--compare-untapered", action="store_const", const=True, help="Also simulate the reflector without taper")

    p = sub.add_parser("converge", help="Spectra versus number of periodic cells")
    _common(p)
    _grid_flags(p)
    p.add_argument("--n-max", type=int, help="Largest periodic cell count (>= 12)")
    p.add_argument("--n-min", type=int, help="Smallest periodic cell count")

    p = sub.add_parser("optimize", help="Maximise mean reflectance over a window (THz)")
    _common(p)
    p.add_argument("--budget", type=int, help="Objective evaluations")

    p = sub.add_parser("calibrate", help="Reflectance from four measured spectra (THz, counts)")
    _common(p)
    p.add_argument("--eta-retro", type=float, help="Retroreflector reflectance")

    p = sub.add_parser("sat-reflect", help="Reflectance from saturation intensities (kcps)")
    _common(p)
    p.add_argument("--is-ref", type=float, help="Saturation intensity with reflector (kcps)")
    p.add_argument("--is-ref-err", type=float, help="Its one-sigma error (kcps)")
    p.add_argument("--is-wg", type=float, help="Saturation intensity of the plain waveguide (kcps)")
    p.add_argument("--is-wg-err", type=float, help="Its one-sigma error (kcps)")

    p = sub.add_parser("ssr", help="Single-shot readout fidelity (rates in cps, times in us)")
    _common(p)
    p.add_argument("--threshold", type=int, help="Bright if counts exceed this value")
    p.add_argument("--convention", choices=[c.value for c in Convention], help="Crossing kernel convention")
    p.add_argument("--readouts", type=int, help="Readouts summed per shot (2 = nuclear-assisted double readout)")
    p.add_argument("--dark-windows", type=int, help="Dark-state comparison windows of length T")
    p.add_argument("--mc-shots", type=int, help="Monte Carlo shots for the histogram cross-check")

    p = sub.add_parser("ssr-sweep", help="Readout metrics for a list of models")
    _common(p)
    p.add_argument("--threshold", type=int, help="Bright if counts exceed this value")
    p.add_argument("--readouts", type=int, help="Readouts summed per shot")
    p.add_argument("--dark-windows", type=int, help="Dark-state comparison windows of length T")

    for name, text in (
        ("crc-filter", "Post-select shot records by CRC counts (windows in us, rates in cps)"),
        ("crc-sim", "Simulate CRC shot records of a blinking emitter (rates in cps)"),
    ):
        p = sub.add_parser(name, help=text)
        _common(p)
        p.add_argument("--threshold", type=int, help="Keep shots whose CRC counts exceed this value")
        p.add_argument("--readout-window", type=float, help="Readout window (us)")
        if name == "crc-sim":
            p.add_argument("--shots", type=int, help="Number of simulated shots")

    p = sub.add_parser("fit", help="Saturation (nW, cps), line (MHz) or pulsed g2 (ns) fits")
    _common(p)
    p.add_argument("--kind", choices=sorted(FIT_COLUMNS), help="Model to fit")
    p.add_argument("--with-linear-background", action="store_const", const=True, help="Saturation: add c*P background")
    p.add_argument("--pulse-period", type=float, help="g2: excitation period (ns)")
    p.add_argument("--n-side-peaks", type=int, help="g2: side peaks per side")
    p.add_argument("--dark-rate", type=float, help="g2: flat background per bin (coincidences)")
    p.add_argument("--nu-lifetime", type=float, help="Lorentzian: lifetime-limited linewidth (MHz)")

    p = sub.add_parser("rerun", help="Re-execute the run recorded in a manifest")
    p.add_argument("manifest", help="Path to manifest.json")
    p.add_argument("--output-dir", help="Directory for the reproduced artifacts (default: <manifest dir>/rerun)")
    p.add_argument("--debug", action="store_true", help="Enable debug logging")
    return parser


_RESERVED = {"command", "config", "output_dir", "seed", "debug", "overrides", "inputs", "manifest"}


def _pairs(items: Sequence[str], flag: str) -> Dict[str, str]:
    pairs = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError("expected KEY=VALUE", flag, item)
        pairs[key.strip()] = value.strip()
    return pairs


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Merge the config document with command-line overrides."""
    config = load_config(args.config) if args.config else RunConfig()
    if config.command and config.command != args.command:
        logger.warning(f"Config was written for '{config.command}', running '{args.command}'")

    settings = dict(config.settings)
    for key, raw in _pairs(args.overrides, "--set").items():
        settings[key] = yaml.safe_load(raw)
    for key, value in vars(args).items():
        if key not in _RESERVED and value is not None:
            settings[key] = value

    inputs = dict(config.inputs)
    inputs.update(_pairs(args.inputs, "--input"))

    seed = args.seed if args.seed is not None else config.seed
    if seed is None:
        seed = int(np.random.SeedSequence().entropy % 2**32)
        logger.info(f"No seed given; using {seed}")

    output_dir = args.output_dir or config.output_dir or str(default_output_dir())
    return config.model_copy(
        update={
            "command": args.command,
            "settings": settings,
            "inputs": inputs,
            "seed": seed,
            "output_dir": output_dir,
        }
    )


def execute(config: RunConfig) -> Tuple[List[str], str]:
    """Run a resolved configuration and write its artifacts and manifest."""
    if config.command not in HANDLERS:
        raise ConfigError(f"expected one of {', '.join(COMMANDS)}", "command", config.command)
    check_inputs(config)
    out = Path(config.output_dir or default_output_dir()).expanduser()
    out.mkdir(parents=True, exist_ok=True)

    logger.info(f"Running '{config.command}' into {out}")
    outputs, summary = HANDLERS[config.command](config, out)
    save_config(config, out / CONFIG_ECHO_NAME)
    outputs = outputs + [CONFIG_ECHO_NAME]
    write_manifest(
        out,
        config.command,
        config.echo(),
        config.input_paths(),
        outputs,
        config.seed,
        __version__,
    )
    logger.info(f"Wrote {len(outputs)} artifact(s) and {MANIFEST_NAME}")
    return outputs, summary


def rerun(manifest_path: Path, output_dir: Optional[str] = None) -> Tuple[List[str], str]:
    """Re-execute the config echoed in a manifest."""
    manifest = read_json(manifest_path)
    if "config" not in manifest:
        raise ConfigError("manifest has no config echo", "manifest", str(manifest_path))
    config = parse_config(manifest["config"], str(manifest_path))
    target = output_dir or str(Path(manifest_path).expanduser().parent / "rerun")
    config = config.model_copy(update={"output_dir": target})

    digest = inputs_digest(manifest["config"], config.input_paths())
    if digest != manifest.get("inputs_sha256"):
        logger.warning("Input files changed since the recorded run; outputs may differ")
    return execute(config)


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments, execute and map the outcome to an exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_VALIDATION

    if args.debug:
        logging.getLogger("dinosaur_readout").setLevel(logging.DEBUG)

    try:
        if args.command == "rerun":
            _, summary = rerun(Path(args.manifest), args.output_dir)
        else:
            _, summary = execute(resolve_config(args))
    except ToolkitError as e:
        logger.error(f"{args.command} failed: {e}")
        return exit_code_for(e)
    except Exception as e:
        logger.exception(f"{args.command} failed with an internal error: {e}")
        return EXIT_NUMERICAL

    print(summary)
    return EXIT_OK


def main() -> None:
    logging.basicConfig(level=default_log_level(), format=LOG_FORMAT)
    sys.exit(run())


if __name__ == "__main__":
    main()
