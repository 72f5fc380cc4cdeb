"""CSV persistence for schedules and results.

All files share one shape: `#` comment lines (metadata, then the normalized
config), a header row, then comma-separated data rows at 17 significant
digits, enough to round-trip a double exactly. Bodies carry no timestamps
unless one is passed in, so identical inputs write identical bytes.
"""

from __future__ import annotations

import io

import numpy as np

from .control import ControlSchedule, DesignReport
from .errors import ValidationError
from .robustness import EnsembleResult, SweepResult

FLOAT_FMT = "%.17g"


def fmt17(x: float) -> str:
    return FLOAT_FMT % float(x)


def _write_table(path, comments, header: str, data: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in comments:
            fh.write(f"# {line}\n" if line else "#\n")
        fh.write(header + "\n")
        np.savetxt(fh, np.atleast_2d(data), fmt=FLOAT_FMT, delimiter=",")


def write_schedule_csv(path, schedule: ControlSchedule, comments=()) -> None:
    """Schedule as t,f_1..f_F rows; the model fingerprint rides in a comment."""
    header = "t," + ",".join(f"f_{n + 1}" for n in range(schedule.n_fields))
    meta = [f"model: {schedule.model_fingerprint}", *comments]
    data = np.column_stack([schedule.times, schedule.fields])
    _write_table(path, meta, header, data)


def read_schedule_csv(path) -> ControlSchedule:
    """Inverse of write_schedule_csv."""
    fingerprint = ""
    data_lines = []
    header = None
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            s = line.strip()
            if not s:
                continue
            if s.startswith("#"):
                body = s.lstrip("#").strip()
                if body.startswith("model:"):
                    fingerprint = body.split(":", 1)[1].strip()
                continue
            if header is None:
                header = s
                continue
            data_lines.append(s)
    if header is None or not header.startswith("t,"):
        raise ValidationError(f"{path}: not a schedule file (missing header)")
    if not data_lines:
        raise ValidationError(f"{path}: schedule has no rows")
    arr = np.loadtxt(io.StringIO("\n".join(data_lines)), delimiter=",",
                     ndmin=2)
    if arr.shape[1] != header.count(",") + 1 or arr.shape[1] < 2:
        raise ValidationError(f"{path}: malformed schedule rows")
    return ControlSchedule(times=arr[:, 0], fields=arr[:, 1:],
                           model_fingerprint=fingerprint)


def write_design_csv(path, report: DesignReport, comments=()) -> None:
    """Design diagnostics: t,V,fidelity,f_1..f_F at the recorded times."""
    schedule = report.schedule
    stride = schedule.n_steps // (report.times_recorded.size - 1)
    fields = schedule.fields[::stride]
    header = "t,V,fidelity," + ",".join(
        f"f_{n + 1}" for n in range(schedule.n_fields))
    meta = [f"model: {schedule.model_fingerprint}",
            f"drift_cancel_clamps: {report.drift_cancel_clamps}",
            f"gains: {', '.join(fmt17(g) for g in report.gains)}",
            *comments]
    data = np.column_stack([report.times_recorded, report.lyapunov_trace,
                            report.fidelity_trace, fields])
    _write_table(path, meta, header, data)


def write_replay_csv(path, times: np.ndarray, series: np.ndarray,
                     comments=()) -> None:
    _write_table(path, comments, "t,fidelity", np.column_stack([times, series]))


def write_sweep_csv(path, result: SweepResult, comments=()) -> None:
    """Row-major axis1,axis2,fidelity rows, one per grid point."""
    a1 = result.grid.axis1.points()
    a2 = result.grid.axis2.points()
    x1 = np.repeat(a1, a2.size)
    x2 = np.tile(a2, a1.size)
    meta = [f"model: {result.schedule_fingerprint}",
            f"axis1: {result.grid.axis1.name}",
            f"axis2: {result.grid.axis2.name}", *comments]
    data = np.column_stack([x1, x2, result.values.ravel()])
    _write_table(path, meta, "axis1,axis2,fidelity", data)


def write_ensemble_csv(path, result: EnsembleResult, comments=()) -> None:
    meta = [f"trials: {result.trials}", *comments]
    data = np.column_stack([result.times, result.mean, result.min, result.max,
                            result.stddev, result.trial0])
    _write_table(path, meta, "t,mean,min,max,stddev,trial0", data)


def write_complex_matrix(path, a: np.ndarray) -> None:
    """Row-major re,im pairs: row i holds re(a[i,0]),im(a[i,0]),re(a[i,1]),..."""
    a = np.atleast_2d(np.asarray(a, dtype=complex))
    out = np.empty((a.shape[0], 2 * a.shape[1]))
    out[:, 0::2] = a.real
    out[:, 1::2] = a.imag
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        np.savetxt(fh, out, fmt=FLOAT_FMT, delimiter=",")


def read_complex_matrix(path) -> np.ndarray:
    """Inverse of write_complex_matrix."""
    arr = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    if arr.shape[1] % 2 != 0:
        raise ValueError(f"{path}: expected re,im pairs per row, got "
                         f"{arr.shape[1]} columns")
    return arr[:, 0::2] + 1j * arr[:, 1::2]
