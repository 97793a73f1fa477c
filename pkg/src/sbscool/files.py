"""Waveform CSV, JSON reports and run manifests.

Data files never carry timestamps so that identical inputs give
byte-identical outputs; only the manifest records the clock.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .errors import InputFileError
from .synthesis import Waveform, check_waveform, coulomb_coupling
from .units import UnitSystem

WAVEFORM_COLUMNS = ("t_scaled", "r_l0", "xi1_sq", "xi2_sq", "R1_l0", "R2_l0", "omega_minus_sq")
SI_COLUMNS = ("t_us", "r_um", "R1_um", "R2_um", "xi1_sq_rad2_per_s2", "xi2_sq_rad2_per_s2")

# tolerances applied when a waveform is read back from text
CSV_IDENTITY_TOL = 1e-9
CSV_CLASSICAL_TOL = 1e-4
CSV_MU_TOL = 1e-8


def fmt(x):
    """Shortest repr that round-trips a double (17 significant digits at most)."""
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"refusing to write non-finite value {x}")
    return repr(x)


def atomic_write(path, data: bytes | str):
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def sha256_file(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def csv_text(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) if isinstance(v, (float, np.floating, int, np.integer)) and not isinstance(v, bool)
                         else v for v in row])
    return buf.getvalue()


def json_text(obj):
    return json.dumps(_plain(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


# --- waveforms ---------------------------------------------------------------


def waveform_rows(wf: Waveform):
    cols = (wf.times, wf.r, wf.xi1_sq, wf.xi2_sq, wf.R1, wf.R2, wf.omega_minus_sq)
    return zip(*cols)


def write_waveform_csv(wf: Waveform, path):
    return atomic_write(path, csv_text(WAVEFORM_COLUMNS, waveform_rows(wf)))


def write_waveform_si_csv(wf: Waveform, units: UnitSystem, path):
    """Companion file in microseconds, micrometres and rad^2/s^2."""
    t = units.from_scaled(wf.times, "time") * 1e6
    L = units.from_scaled(1.0, "length") * 1e6
    w2 = units.from_scaled(1.0, "frequency_sq")
    rows = zip(t, wf.r * L, wf.R1 * L, wf.R2 * L, wf.xi1_sq * w2, wf.xi2_sq * w2)
    return atomic_write(path, csv_text(SI_COLUMNS, rows))


def infer_mass_ratio(xi1_sq, xi2_sq, r):
    """mu from the curvature relation xi2^2 + 2c = mu (xi1^2 + 2c)."""
    two_c = 2 * coulomb_coupling(r)
    ratios = (xi2_sq + two_c) / (xi1_sq + two_c)
    mu = float(np.median(ratios))
    spread = float(np.max(np.abs(ratios - mu)))
    return mu, spread


def read_waveform_csv(path) -> Waveform:
    """Parse a waveform CSV; raises :class:`InputFileError` on malformed input."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise InputFileError(f"cannot read waveform {path}: {exc}") from None
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise InputFileError(f"{path}: empty file") from None
    if tuple(h.strip() for h in header) != WAVEFORM_COLUMNS:
        raise InputFileError(f"{path}: header must be {','.join(WAVEFORM_COLUMNS)}")
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(WAVEFORM_COLUMNS):
            raise InputFileError(f"{path}:{lineno}: expected {len(WAVEFORM_COLUMNS)} fields, got {len(row)}")
        try:
            rows.append([float(v) for v in row])
        except ValueError:
            raise InputFileError(f"{path}:{lineno}: non-numeric field") from None
    if len(rows) < 7:
        raise InputFileError(f"{path}: need at least 7 samples, got {len(rows)}")
    data = np.array(rows)
    if not np.all(np.isfinite(data)):
        raise InputFileError(f"{path}: non-finite values")
    t, r, xi1, xi2, R1, R2, wm = data.T
    dt = np.diff(t)
    if t[0] != 0.0 or np.any(dt <= 0) or np.max(np.abs(dt - dt.mean())) > 1e-9 * max(1.0, t[-1]):
        raise InputFileError(f"{path}: times must start at 0 on a uniform increasing grid")
    if np.any(r <= 0):
        raise InputFileError(f"{path}: separations must be positive")
    mu, spread = infer_mass_ratio(xi1, xi2, r)
    if not mu > 0 or spread > CSV_MU_TOL * max(1.0, mu):
        raise InputFileError(f"{path}: curvatures do not describe a single mass ratio (spread {spread:.3g})")
    kind = "combine" if abs(wm[-1] - 3.0) < abs(wm[-1] - 1.0) else "sbs"
    return Waveform(times=t, r=r, xi1_sq=xi1, xi2_sq=xi2, R1=R1, R2=R2, omega_minus_sq=wm,
                    kind=kind, mu=mu, meta={"source": str(path)})


def validate_loaded(wf: Waveform):
    """Re-check the constraint identities on a parsed waveform.

    The acceleration is taken by finite differences, so the equation of
    motion is checked at a looser tolerance than the algebraic identities.
    """
    check = check_waveform(wf)
    problems = []
    if check.max_coupling > CSV_IDENTITY_TOL:
        problems.append(f"mode coupling {check.max_coupling:.3g}")
    if check.max_omega_plus_dev > CSV_IDENTITY_TOL:
        problems.append(f"omega_+^2 deviation {check.max_omega_plus_dev:.3g}")
    expected = 1 + 4 * coulomb_coupling(wf.r) / math.sqrt(wf.mu)
    wm_dev = float(np.max(np.abs(wf.omega_minus_sq - expected) / expected))
    if wm_dev > CSV_IDENTITY_TOL:
        problems.append(f"omega_-^2 inconsistent with r ({wm_dev:.3g})")
    scale = max(1.0, float(np.max(np.abs(wf.R1))))
    if check.max_classical_residual > CSV_CLASSICAL_TOL * scale:
        problems.append(f"classical residual {check.max_classical_residual:.3g}")
    if problems:
        raise InputFileError("waveform fails re-validation: " + "; ".join(problems))
    return check


# --- manifests ---------------------------------------------------------------


@dataclass
class RunManifest:
    command: str
    options: dict
    config: dict
    outputs: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)
    resolved_T: float | None = None
    tool_version: str = __version__
    created: str = ""

    def record(self, path, root):
        path = Path(path)
        self.outputs[str(path.relative_to(root))] = sha256_file(path)

    def as_dict(self):
        return {
            "command": self.command,
            "options": self.options,
            "config": self.config,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "resolved_T_scaled": self.resolved_T,
            "tool_version": self.tool_version,
            "created": self.created,
        }

    def write(self, root):
        self.created = datetime.now(timezone.utc).isoformat(timespec="seconds")
        return atomic_write(Path(root) / "manifest.json", json_text(self.as_dict()))

    @classmethod
    def read(cls, path):
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
            return cls(
                command=data["command"],
                options=data["options"],
                config=data["config"],
                outputs=data.get("outputs", {}),
                inputs=data.get("inputs", {}),
                resolved_T=data.get("resolved_T_scaled"),
                tool_version=data.get("tool_version", ""),
                created=data.get("created", ""),
            )
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise InputFileError(f"cannot read manifest {path}: {exc}") from None


__all__ = [
    "RunManifest",
    "SI_COLUMNS",
    "WAVEFORM_COLUMNS",
    "atomic_write",
    "csv_text",
    "infer_mass_ratio",
    "json_text",
    "read_waveform_csv",
    "sha256_file",
    "validate_loaded",
    "write_waveform_csv",
    "write_waveform_si_csv",
]
