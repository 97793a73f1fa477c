"""Command-line entry point: ``sbscool synth|sim|protocol|sweep|replay``.

Exit codes: 0 success, 2 configuration error, 3 input-file error,
4 physics or validation failure.  Errors are echoed as one JSON object
on stderr.
"""
from __future__ import annotations

import functools
import json
import logging
import math
import os
import sys
import tempfile
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click
import numpy as np

from . import __version__
from .errors import ConfigError, InputFileError, SBSError, ValidationError
from .files import (
    RunManifest,
    atomic_write,
    csv_text,
    json_text,
    read_waveform_csv,
    sha256_file,
    validate_loaded,
    write_waveform_csv,
    write_waveform_si_csv,
)
from .synthesis import CurvatureWarning, check_waveform, synthesize_combine, synthesize_sbs
from .units import CollisionConfig, config_from_mapping, load_config

log = logging.getLogger("sbscool")

WORKERS_ENV = "SBSCOOL_WORKERS"
SWAP_ERROR_LIMIT = 1e-3
STRETCH_EXCITATION_LIMIT = 1e-3


def _fail(exc: SBSError):
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": exc.exit_code}
    if isinstance(exc, ConfigError):
        payload["key"] = exc.key
    click.echo(json.dumps(payload, sort_keys=True), err=True)
    sys.exit(exc.exit_code)


def reported(fn):
    """Turn package errors into the exit-code contract."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except SBSError as exc:
            _fail(exc)

    return wrapper


def _config(path, overrides=None):
    config = load_config(path) if path else CollisionConfig()
    if overrides:
        flat = config.to_dict()
        flat.update(overrides)
        config = config_from_mapping(flat)
    return config


# --- synth -------------------------------------------------------------------


def run_synth(config: CollisionConfig, kind, out: Path):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", CurvatureWarning)
        wf = synthesize_sbs(config) if kind == "sbs" else synthesize_combine(config)
    check = check_waveform(wf)
    out.mkdir(parents=True, exist_ok=True)
    paths = [
        write_waveform_csv(wf, out / "waveform.csv"),
        write_waveform_si_csv(wf, config.units, out / "waveform_si.csv"),
    ]
    summary = {
        "kind": kind,
        "mu": wf.mu,
        "T_scaled": wf.T,
        "T_resolved_scaled": wf.meta.get("T_resolved"),
        "T_us": config.units.from_scaled(wf.T, "time") * 1e6,
        "l0_um": config.units.l0 * 1e6,
        "samples": len(wf.times),
        "checks": check.as_dict(),
        "warnings": sorted({str(w.message) for w in caught}),
    }
    paths.append(atomic_write(out / "synth.json", json_text(summary)))
    return wf, summary, paths


@click.group()
@click.version_option(__version__, prog_name="sbscool")
@click.option("-v", "--verbose", count=True, help="Increase log verbosity.")
def main(verbose):
    """Collision-based sympathetic cooling: waveform synthesis and simulation."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


@main.command()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="TOML run configuration.")
@click.option("--kind", type=click.Choice(["sbs", "combine"]), default="sbs", show_default=True)
@click.option("--out", type=click.Path(file_okay=False), required=True, help="Output directory.")
@reported
def synth(config_path, kind, out):
    """Synthesize a waveform and write CSV files plus a manifest."""
    config = _config(config_path)
    out = Path(out)
    wf, summary, paths = run_synth(config, kind, out)
    manifest = RunManifest("synth", {"kind": kind}, config.to_dict(), resolved_T=wf.T)
    for p in paths:
        manifest.record(p, out)
    manifest.write(out)
    c = summary["checks"]
    click.echo(f"T = {wf.T:.6g} / omega0 ({summary['T_us']:.4g} us), {len(wf.times)} samples")
    click.echo(f"max |coupling| = {c['max_coupling']:.3g}")
    click.echo(f"max |omega_+^2 - 1| = {c['max_omega_plus_dev']:.3g}")
    click.echo(f"max Ermakov residual = {c['max_ermakov_residual']:.3g}")
    for w in summary["warnings"]:
        click.echo(f"warning: {w}", err=True)


# --- sim ---------------------------------------------------------------------


def parse_input_state(text):
    """'vacuum', 'thermal:N', 'coherent:N', 'fock:N' or 'squeezed:DB' -> (family, value)."""
    family, _, value = text.partition(":")
    family = family.strip().lower()
    if family == "vacuum":
        return "vacuum", 0.0
    if family not in ("thermal", "coherent", "fock", "squeezed") or not value:
        raise click.BadParameter(f"unknown input state {text!r}")
    try:
        x = float(value)
    except ValueError:
        raise click.BadParameter(f"bad number in input state {text!r}") from None
    if x < 0 or (family == "fock" and x != int(x)):
        raise click.BadParameter(f"invalid value in input state {text!r}")
    return family, x


def default_cutoff(nbar):
    """Per-ion basis size with room for the Poisson tail and transient squeezing."""
    return int(math.ceil(nbar + 10 * math.sqrt(nbar))) + 12


def _gaussian_sim(wf, family, value):
    from .gaussian import (
        gaussian_report,
        ion_normalizer,
        mean_phonon,
        simulate_waveform,
        squeezed_covariance,
        thermal_covariance,
    )

    if family == "fock":
        raise click.BadParameter("number states are not Gaussian; use --method fock", param_hint="--input")
    mu = wf.mu
    mean = np.zeros(4)
    if family == "thermal":
        Sigma = thermal_covariance(value, 0.0, mu)
    elif family == "squeezed":
        Sigma = squeezed_covariance(value, 0.0, mu)
    else:
        Sigma = thermal_covariance(0.0, 0.0, mu)
        if family == "coherent":
            mean[0] = math.sqrt(2 * value)  # x1 = sqrt(2) Re(alpha)
    record = simulate_waveform(wf, Sigma, keep_history=True)
    report = gaussian_report(wf, record, Sigma)
    N = ion_normalizer(mu)
    Ninv = np.linalg.inv(N)
    rows = []
    for t, S in zip(record.times, record.S_history):
        V = S @ Sigma @ S.T
        m = N @ S @ Ninv @ mean
        n1 = mean_phonon(V, mu, "ion1") + 0.5 * (m[0] ** 2 + m[1] ** 2)
        n2 = mean_phonon(V, mu, "ion2") + 0.5 * (m[2] ** 2 + m[3] ** 2)
        rows.append((t, n1, n2, 1.0))
    report["n1_final"], report["n2_final"] = rows[-1][1], rows[-1][2]
    return report, rows


def _fock_sim(wf, family, value, cubic, printed_sign, cutoff, config):
    from .fock import AnharmonicModel, FockState, coherent_state, number_state, propagate_fock
    from .gaussian import QuadraticModel, gaussian_report, simulate_waveform, thermal_covariance

    if family not in ("vacuum", "fock", "coherent"):
        raise click.BadParameter("fock method takes vacuum, fock:N or coherent:N", param_hint="--input")
    n = cutoff or default_cutoff(value)
    psi1 = number_state(int(value), n) if family == "fock" else coherent_state(math.sqrt(value), n)
    initial = FockState.product(psi1, number_state(0, n), wf.mu)
    lam = config.units.zero_point_ratio
    quadratic = QuadraticModel.from_waveform(wf)
    run = propagate_fock(AnharmonicModel(quadratic, lam, include_cubic=cubic, printed_sign=printed_sign), initial)
    Sigma = thermal_covariance(0.0, 0.0, wf.mu)
    report = gaussian_report(wf, simulate_waveform(wf, Sigma), Sigma)
    # occupations from the auxiliary vacuum run say nothing about this input
    report.pop("n_com_final", None)
    report.pop("n_stretch_final", None)
    n1, n2 = run.final_phonons
    report.update({
        "n1_final": n1,
        "n2_final": n2,
        "cutoff": n,
        "cubic": cubic,
        "cubic_sign": "printed" if printed_sign else "taylor",
        "lambda_x0_over_l0": lam,
        "norm_drift": float(np.max(np.abs(run.norm - run.norm[0]))),
        "max_top_population": run.max_top_population,
    })
    if cubic:
        ref = propagate_fock(AnharmonicModel(quadratic, lam, include_cubic=False), initial)
        report["n1_quadratic"] = ref.final_phonons[0]
        report["n1_excess_over_quadratic"] = n1 - ref.final_phonons[0]
    rows = list(zip(run.times, run.n1, run.n2, run.norm))
    return report, rows


def run_sim(input_path, method, state, cubic, printed_sign, cutoff, config, out: Path):
    wf = read_waveform_csv(input_path)
    check = validate_loaded(wf)
    family, value = parse_input_state(state)
    if method == "gaussian":
        report, rows = _gaussian_sim(wf, family, value)
    else:
        report, rows = _fock_sim(wf, family, value, cubic, printed_sign, cutoff, config)
    report.update({"method": method, "input": state, "mu": wf.mu, "kind": wf.kind, "T_scaled": wf.T,
                   "input_checks": check.as_dict()})
    out.mkdir(parents=True, exist_ok=True)
    paths = [
        atomic_write(out / "report.json", json_text(report)),
        atomic_write(out / "trace.csv", csv_text(("t_scaled", "n1", "n2", "norm"), rows)),
    ]
    return wf, report, paths


@main.command()
@click.argument("input_path", metavar="WAVEFORM_CSV", type=click.Path(dir_okay=False))
@click.option("--method", type=click.Choice(["gaussian", "fock"]), default="gaussian", show_default=True)
@click.option("--input", "state", default="thermal:5", show_default=True,
              help="Qubit input: vacuum, thermal:N, coherent:N, fock:N or squeezed:DB; coolant starts in vacuum.")
@click.option("--cubic", type=click.Choice(["on", "off"]), default="off", show_default=True,
              help="Include the cubic Coulomb term (fock only).")
@click.option("--printed-sign", is_flag=True, help="Use the positive cubic sign instead of the Taylor sign.")
@click.option("--cutoff", type=click.IntRange(4), default=None, help="Per-ion Fock basis size.")
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="TOML run configuration.")
@click.option("--out", type=click.Path(file_okay=False), required=True)
@reported
def sim(input_path, method, state, cubic, printed_sign, cutoff, config_path, out):
    """Simulate a waveform CSV; exit 0 only if the swap error is at most 1e-3."""
    config = _config(config_path)
    out = Path(out)
    parse_input_state(state)
    wf, report, paths = run_sim(input_path, method, state, cubic == "on", printed_sign, cutoff, config, out)
    options = {"input": str(input_path), "method": method, "state": state, "cubic": cubic,
               "printed_sign": printed_sign, "cutoff": cutoff}
    manifest = RunManifest("sim", options, config.to_dict(), resolved_T=wf.T,
                           inputs={str(input_path): sha256_file(input_path)})
    for p in paths:
        manifest.record(p, out)
    manifest.write(out)
    if wf.kind == "combine":
        if "n_com_final" in report:
            click.echo(f"COM: final {report['n_com_final']:.4g}, stretch: final {report['n_stretch_final']:.4g}")
        click.echo(f"stretch excitation |eta_-|^2 {report['stretch_excitation']:.3g}")
        if not report["stretch_excitation"] <= STRETCH_EXCITATION_LIMIT:
            raise ValidationError(
                f"stretch excitation {report['stretch_excitation']:.3g} exceeds {STRETCH_EXCITATION_LIMIT:g}"
            )
        return
    click.echo(f"n1: final {report['n1_final']:.4g}, n2: final {report['n2_final']:.6g}")
    click.echo(f"swap error {report['swap_error']:.3g}")
    if "n1_excess_over_quadratic" in report:
        click.echo(f"qubit excess over quadratic run {report['n1_excess_over_quadratic']:.4g}")
    if not report["swap_error"] <= SWAP_ERROR_LIMIT:
        raise ValidationError(f"swap error {report['swap_error']:.3g} exceeds {SWAP_ERROR_LIMIT:g}")


# --- protocol ----------------------------------------------------------------


def _parse_initial(items):
    out = {}
    for item in items:
        ion, _, value = item.partition("=")
        try:
            out[ion.strip()] = float(value)
        except ValueError:
            raise click.BadParameter(f"expected ION=N, got {item!r}", param_hint="--initial") from None
    return out


def run_protocol(config, initial, out: Path):
    from .protocol import plan_pair_protocol, simulate_protocol

    plan = plan_pair_protocol(config)
    ledger = simulate_protocol(plan, initial)
    out.mkdir(parents=True, exist_ok=True)
    report = {"plan": plan.as_dict(), "ledger": ledger.as_dict()}
    paths = [
        atomic_write(out / "protocol.json", json_text(report)),
        atomic_write(out / "timeline.csv",
                     csv_text(("step", "t_start_scaled", "t_end_scaled", "participants"), plan.timeline())),
    ]
    return plan, ledger, paths


@main.command()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="TOML run configuration.")
@click.option("--transport-heating", type=float, default=None, help="Phonons added per moved ion per transport.")
@click.option("--coolants", type=int, default=None, help="Number of ground-state coolants available.")
@click.option("--initial", multiple=True, default=("Q2=5",), show_default=True,
              help="Initial thermal excitation, ION=N; repeatable.")
@click.option("--out", type=click.Path(file_okay=False), required=True)
@reported
def protocol(config_path, transport_heating, coolants, initial, out):
    """Plan and simulate the four-step ground-state qubit pair sequence."""
    overrides = {}
    if transport_heating is not None:
        overrides["protocol.transport_heating"] = transport_heating
    if coolants is not None:
        overrides["protocol.coolants"] = coolants
    config = _config(config_path, overrides)
    init = _parse_initial(initial)
    out = Path(out)
    plan, ledger, paths = run_protocol(config, init, out)
    manifest = RunManifest("protocol", {"initial": list(initial)}, config.to_dict(),
                           resolved_T=plan.active_duration)
    for p in paths:
        manifest.record(p, out)
    manifest.write(out)
    click.echo(f"active duration {plan.active_duration:.4g} / omega0")
    for entry in ledger.entries:
        vals = ", ".join(f"{k}={'-' if v is None else format(v, '.3g')}" for k, v in entry.after.items())
        click.echo(f"{entry.step:>14}: {vals}")
    if ledger.pair_modes:
        click.echo("pair modes: " + ", ".join(f"{k}={v:.3g}" for k, v in ledger.pair_modes.items()))


# --- sweep -------------------------------------------------------------------

SWEEP_COLUMNS = ("sigma_scaled", "omega0_T", "eta_minus_abs_final", "min_r_l0", "min_xi2_sq", "status")


def sweep_row(flat_config, sigma):
    """One sweep row; never raises, failures go to the status column."""
    from .gaussian import gaussian_report, simulate_waveform, vacuum_covariance

    try:
        flat = dict(flat_config)
        flat["ansatz.sigma_scaled"] = sigma
        config = config_from_mapping(flat)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", CurvatureWarning)
            wf = synthesize_sbs(config)
        Sigma = vacuum_covariance(wf.mu)
        report = gaussian_report(wf, simulate_waveform(wf, Sigma), Sigma)
        status = "curvature_warning" if caught else "ok"
        return (sigma, wf.meta["T_resolved"], report["eta_minus_abs_final"], float(np.min(wf.r)),
                float(np.min(wf.xi2_sq)), status)
    except (SBSError, ValueError, ArithmeticError) as exc:
        msg = str(exc).replace("\n", " ")
        return (sigma, "", "", "", "", f"error: {msg}")


def _workers():
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}", key=WORKERS_ENV) from None
    if n < 1:
        raise ConfigError(f"{WORKERS_ENV} must be >= 1", key=WORKERS_ENV)
    return n


def run_sweep(config, values, out: Path):
    flat = config.to_dict()
    n = min(_workers(), len(values))
    if n > 1:
        with ProcessPoolExecutor(max_workers=n) as pool:
            rows = list(pool.map(sweep_row, [flat] * len(values), values))
    else:
        rows = [sweep_row(flat, v) for v in values]
    out.mkdir(parents=True, exist_ok=True)
    return rows, [atomic_write(out / "sweep.csv", csv_text(SWEEP_COLUMNS, rows))]


def _parse_values(text):
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise click.BadParameter(f"expected comma-separated numbers, got {text!r}") from None
    if not values:
        raise click.BadParameter("need at least one value")
    return values


@main.command()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="TOML run configuration.")
@click.option("--param", type=click.Choice(["sigma"]), default="sigma", show_default=True)
@click.option("--values", required=True, help="Comma-separated scaled values, e.g. 1.41421356,1.73205081.")
@click.option("--out", type=click.Path(file_okay=False), required=True)
@reported
def sweep(config_path, param, values, out):
    """Tabulate process time and mode excitation against the ansatz width."""
    config = _config(config_path)
    vals = _parse_values(values)
    out = Path(out)
    rows, paths = run_sweep(config, vals, out)
    manifest = RunManifest("sweep", {"param": param, "values": vals}, config.to_dict())
    for p in paths:
        manifest.record(p, out)
    manifest.write(out)
    for row in rows:
        click.echo(",".join(str(x) for x in row))


# --- replay ------------------------------------------------------------------


def replay_manifest(manifest_path):
    """Re-run a manifest into a scratch directory; return {file: matches}."""
    manifest = RunManifest.read(manifest_path)
    if manifest.tool_version != __version__:
        log.warning("manifest written by version %s, replaying with %s", manifest.tool_version, __version__)
    config = config_from_mapping(manifest.config)
    opts = manifest.options
    with tempfile.TemporaryDirectory() as tmp:
        out = Path(tmp)
        if manifest.command == "synth":
            _, _, paths = run_synth(config, opts["kind"], out)
        elif manifest.command == "sim":
            src = Path(opts["input"])
            for path, digest in manifest.inputs.items():
                if not Path(path).exists() or sha256_file(path) != digest:
                    raise InputFileError(f"input {path} is missing or changed since the manifest was written")
            _, _, paths = run_sim(src, opts["method"], opts["state"], opts["cubic"] == "on",
                                  opts.get("printed_sign", False), opts.get("cutoff"), config, out)
        elif manifest.command == "protocol":
            _, _, paths = run_protocol(config, _parse_initial(opts["initial"]), out)
        elif manifest.command == "sweep":
            _, paths = run_sweep(config, opts["values"], out)
        else:
            raise InputFileError(f"unknown manifest command {manifest.command!r}")
        fresh = {str(Path(p).relative_to(out)): sha256_file(p) for p in paths}
    return {name: fresh.get(name) == digest for name, digest in manifest.outputs.items()}


@main.command()
@click.argument("manifest", type=click.Path(dir_okay=False, exists=True))
@reported
def replay(manifest):
    """Regenerate a run and compare every output digest with the manifest."""
    result = replay_manifest(manifest)
    for name, ok in sorted(result.items()):
        click.echo(f"{'identical' if ok else 'DIFFERS':>9}  {name}")
    if not all(result.values()):
        raise ValidationError("replayed outputs differ from the manifest")


if __name__ == "__main__":
    main()
