"""Lyapunov feedback design emitting open-loop control schedules.

V(rho) = Tr(rho_D^2) - Tr(rho rho_D) is driven down by state feedback
f_n = gain_n * Tr([-i H_n, rho] rho_D) on every control except one, which is
reserved for cancelling the dissipative drift term Tr(L(rho) rho_D) so the
remaining decrease is a sum of squares. The closed loop is simulated once,
the fields are recorded on the integration grid, and the result replays as
an open-loop schedule.

The drift-cancel field is a quotient and needs two protections: a guard that
zeroes it when the denominator is resolution-level small, and a magnitude cap
that keeps it bounded when the denominator is merely small. Both count as
clamp events. Capping scales the quotient by some alpha in [0, 1], which
leaves a drift contribution (1 - alpha) * num in dV/dt; num <= 0 whenever
the channel moves population out of the target (decay orientation), so the
cap never breaks monotonicity, it only slows convergence.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .dynamics import (ControlSystemModel, IntegratorConfig, LindbladChannel,
                       _dissipator_batch, dissipator)
from .errors import IntegrationError, PhysicalityError, ValidationError
from .linalg import commutator, require_same_dim, trace_product
from .states import _is_pure, check_density_matrix, purity

TIME_GRID_TOL = 1e-12
FEEDBACK_IMAG_TOL = 1e-10
LYAPUNOV_FLOOR = -1e-10
MAX_SCHEDULE_VALUES = 10_000_000
STATIONARY_TARGET_TOL = 1e-12


def fingerprint_model(model: ControlSystemModel) -> str:
    """Hex digest of the model's matrices, rates, and drift-cancel index."""
    h = hashlib.sha256()
    def feed(a):
        h.update(np.ascontiguousarray(a, dtype=complex).tobytes())
    feed(model.h0)
    h.update(bytes([model.n_controls]))
    for hn in model.controls:
        feed(hn)
    h.update(bytes([len(model.channel.jump_operators)]))
    for j in model.channel.jump_operators:
        feed(j)
    h.update(np.asarray(model.channel.rates, dtype=float).tobytes())
    idx = -1 if model.drift_cancel_index is None else model.drift_cancel_index
    h.update(idx.to_bytes(2, "big", signed=True))
    return h.hexdigest()


@dataclass(frozen=True)
class ControlSchedule:
    """Open-loop fields on a uniform time grid; fields[k] belongs to times[k]."""

    times: np.ndarray
    fields: np.ndarray
    model_fingerprint: str = ""

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        f = np.asarray(self.fields, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise ValidationError("schedule needs a 1-d grid of >= 2 times")
        if f.ndim != 2 or f.shape[0] != t.size:
            raise ValidationError(f"fields shape {f.shape} does not match "
                                  f"{t.size} grid times")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(f))):
            raise ValidationError("schedule contains non-finite values")
        dt = t[1] - t[0]
        if dt <= 0:
            raise ValidationError("schedule times must increase")
        if np.max(np.abs(np.diff(t) - dt)) > TIME_GRID_TOL:
            raise ValidationError("schedule time grid is not uniform")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "fields", f)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def t_final(self) -> float:
        return float(self.times[-1])

    @property
    def n_steps(self) -> int:
        return self.times.size - 1

    @property
    def n_fields(self) -> int:
        return self.fields.shape[1]


@dataclass(frozen=True)
class DesignReport:
    """Everything the design phase produced, schedule plus diagnostics."""

    schedule: ControlSchedule
    times_recorded: np.ndarray
    lyapunov_trace: np.ndarray
    fidelity_trace: np.ndarray
    clamp_windows: np.ndarray
    final_state: np.ndarray
    drift_cancel_clamps: int
    gains: tuple[float, ...]


def lyapunov_value(rho: np.ndarray, rho_d: np.ndarray) -> float:
    """V = Tr(rho_D^2) - Tr(rho rho_D), clamped to 0 from rounding below."""
    require_same_dim(rho, rho_d)
    if not _is_pure(rho_d):
        raise ValidationError("lyapunov_value requires a pure target")
    v = purity(rho_d) - trace_product(rho, rho_d).real
    if v < 0.0:
        if v <= LYAPUNOV_FLOOR:
            raise PhysicalityError(f"lyapunov value {v} below floor")
        v = 0.0
    return float(v)


def feedback_field(h_n: np.ndarray, rho: np.ndarray,
                   rho_d: np.ndarray) -> float:
    """Unit-gain feedback Tr([-i H_n, rho] rho_D); must come out real."""
    require_same_dim(h_n, rho)
    require_same_dim(rho, rho_d)
    g = -1j * trace_product(commutator(h_n, rho), rho_d)
    if abs(g.imag) > FEEDBACK_IMAG_TOL:
        raise PhysicalityError(f"feedback field has imaginary residue {g.imag}")
    return float(g.real)


def drift_cancel_field(h_n0: np.ndarray, rho: np.ndarray, rho_d: np.ndarray,
                       channel: LindbladChannel, guard_eps: float = 1e-8,
                       field_cap: float = 1.0) -> tuple[float, bool]:
    """Field on the reserved control cancelling Tr(L(rho) rho_D) in dV/dt.

    Returns (value, clamped). The quotient is zeroed when its denominator is
    below guard_eps and clipped to +-field_cap otherwise; either intervention
    reports clamped=True.
    """
    num = -trace_product(rho_d, dissipator(channel, rho)).real
    den = feedback_field(h_n0, rho, rho_d)
    if abs(den) < guard_eps:
        return 0.0, True
    v = num / den
    if abs(v) > field_cap:
        return math.copysign(field_cap, v), True
    return float(v), False


def invariant_set_residual(model: ControlSystemModel, rho: np.ndarray,
                           rho_d: np.ndarray) -> np.ndarray:
    """|Tr(rho_D H_n rho - H_n rho_D rho)| per feedback control.

    All entries vanish exactly on the invariant set where the feedback loop
    can stall short of the target.
    """
    c = rho @ rho_d - rho_d @ rho
    out = [abs(trace_product(h_n, c))
           for n, h_n in enumerate(model.controls)
           if n != model.drift_cancel_index]
    return np.array(out)


def stage_fields_for_replay(schedule: ControlSchedule) -> np.ndarray:
    """Midpoint field values for RK4 replay of a stored schedule.

    Interior midpoints use the cubic interpolant through the four nearest
    grid values; the two boundary cells fall back to linear. Cubic accuracy
    here is what keeps an open-loop replay at the design step size matching
    the closed-loop trajectory to integrator precision.
    """
    f = schedule.fields
    s = schedule.n_steps
    mids = 0.5 * (f[:-1] + f[1:])
    if s >= 3:
        mids[1:-1] = (-f[:-3] + 9.0 * f[1:-2] + 9.0 * f[2:-1] - f[3:]) / 16.0
    return mids


def _validate_gains(gains, n_controls: int,
                    drift_index: int | None) -> np.ndarray:
    if gains is None:
        return np.ones(n_controls)
    g = np.asarray(gains, dtype=float)
    if g.shape != (n_controls,):
        raise ValidationError(f"expected {n_controls} gains, got shape {g.shape}")
    if np.any(g <= 0) or not np.all(np.isfinite(g)):
        raise ValidationError("gains must be positive and finite")
    if drift_index is not None and g[drift_index] != 1.0:
        raise ValidationError("the drift-cancel control is a computed "
                              "quotient; its gain must stay 1")
    return g


def design_schedule(model: ControlSystemModel, rho0: np.ndarray,
                    rho_d: np.ndarray, config: IntegratorConfig, *,
                    gains=None, guard_eps: float = 1e-8,
                    field_cap: float = 1.0) -> DesignReport:
    """Simulate the Lyapunov closed loop and record the open-loop schedule.

    Fields are recomputed from the running state at every RK4 stage; the
    schedule stores the values seen at the grid times. State hygiene (trace,
    hermiticity, spectrum, purity) is checked at each recorded time and a
    violation aborts with the failure time.
    """
    if model.n_controls == 0:
        raise ValidationError("design needs at least one control")
    require_same_dim(model.h0, rho0)
    check_density_matrix(rho0)
    check_density_matrix(rho_d)
    if not _is_pure(rho_d, tol=1e-8):
        raise ValidationError("design requires a pure target state")
    if float(np.max(np.abs(commutator(model.h0, rho_d)))) > STATIONARY_TARGET_TOL:
        raise ValidationError("design requires a target stationary under h0")
    if (config.n_steps + 1) * model.n_controls > MAX_SCHEDULE_VALUES:
        raise ValidationError("schedule would exceed the size bound; "
                              "increase dt or reduce t_final")
    if guard_eps <= 0:
        raise ValidationError("guard_eps must be positive")
    if field_cap <= 0:
        raise ValidationError("field_cap must be positive")
    gains_arr = _validate_gains(gains, model.n_controls, model.drift_cancel_index)

    nf = model.n_controls
    n0 = model.drift_cancel_index
    channel = model.channel
    k_dec = channel.decay_matrix()
    h0 = model.h0
    hs = model.controls
    rho = np.array(rho0, dtype=complex)
    rho_d = np.array(rho_d, dtype=complex)

    clamps = 0

    def stage(state):
        # returns (fields, rhs) with fields recomputed from the stage state
        nonlocal clamps
        c = state @ rho_d - rho_d @ state
        f = np.empty(nf)
        for n in range(nf):
            f[n] = np.sum(hs[n] * c.T).imag
        f *= gains_arr
        if n0 is not None:
            diss = _dissipator_batch(channel, k_dec, state)
            num = -np.sum(rho_d * diss.T).real
            den = f[n0]
            if abs(den) < guard_eps:
                f[n0] = 0.0
                clamps += 1
            else:
                v = num / den
                if abs(v) > field_cap:
                    f[n0] = math.copysign(field_cap, v)
                    clamps += 1
                else:
                    f[n0] = v
        h = h0
        for n in range(nf):
            if f[n] != 0.0:
                h = h + f[n] * hs[n]
        rhs = -1j * (h @ state - state @ h)
        if n0 is not None:
            rhs = rhs + diss
        return f, rhs

    steps = config.n_steps
    stride = config.record_stride
    dt = config.dt
    n_rec = config.n_recorded
    node_fields = np.empty((steps + 1, nf))
    times_rec = np.arange(n_rec) * (stride * dt)
    lyap = np.empty(n_rec)
    fid = np.empty(n_rec)
    clamp_windows = np.zeros(n_rec, dtype=int)

    pd2 = purity(rho_d)

    def record(idx):
        overlap = np.sum(rho_d * rho.T).real
        lyap[idx] = max(pd2 - overlap, 0.0)
        fid[idx] = math.sqrt(max(overlap, 0.0))
        try:
            check_density_matrix(rho)
        except PhysicalityError as e:
            raise IntegrationError(str(e), times_rec[idx]) from e
        p = trace_product(rho, rho).real
        if p > 1.0 + 1e-8:
            raise IntegrationError(f"purity {p:.12f} exceeds 1", times_rec[idx])

    record(0)
    rec_idx = 1
    window_start = clamps
    for k in range(steps):
        f_node, k1 = stage(rho)
        node_fields[k] = f_node
        _, k2 = stage(rho + (0.5 * dt) * k1)
        _, k3 = stage(rho + (0.5 * dt) * k2)
        _, k4 = stage(rho + dt * k3)
        rho = rho + (dt / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
        if (k + 1) % stride == 0:
            record(rec_idx)
            clamp_windows[rec_idx] = clamps - window_start
            window_start = clamps
            rec_idx += 1
    node_fields[steps], _ = stage(rho)

    schedule = ControlSchedule(
        times=np.arange(steps + 1) * dt,
        fields=node_fields,
        model_fingerprint=fingerprint_model(model))
    return DesignReport(
        schedule=schedule, times_recorded=times_rec, lyapunov_trace=lyap,
        fidelity_trace=fid, clamp_windows=clamp_windows,
        final_state=rho, drift_cancel_clamps=clamps,
        gains=tuple(float(g) for g in gains_arr))
