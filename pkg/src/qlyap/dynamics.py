"""Lindblad master-equation right-hand side and a fixed-step RK4 integrator.

The integrator is deliberately fixed-step: the design phase samples control
fields on a uniform grid that the replay phase consumes, so adaptive stepping
would break schedule replayability. If a state drifts out of the physical
cone the run aborts with the failure time; nothing is renormalized silently.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import IntegrationError, ValidationError
from .linalg import require_hermitian, require_same_dim, require_square
from .states import check_density_matrix

HERM_STEP_TOL = 1e-9
PURITY_CEIL = 1.0 + 1e-8


@dataclass(frozen=True)
class LindbladChannel:
    """Jump operators J_m with nonnegative rates lambda_m; empty = closed system."""

    jump_operators: tuple[np.ndarray, ...] = ()
    rates: tuple[float, ...] = ()

    def __post_init__(self):
        if len(self.jump_operators) != len(self.rates):
            raise ValidationError("one rate per jump operator required")
        for j in self.jump_operators:
            require_square(j, "jump operator")
        dims = {j.shape[0] for j in self.jump_operators}
        if len(dims) > 1:
            raise ValidationError(f"jump operators disagree on dimension: {dims}")
        for r in self.rates:
            if not (r >= 0.0):
                raise ValidationError(f"rates must be >= 0, got {r}")

    @property
    def is_empty(self) -> bool:
        return len(self.jump_operators) == 0

    def decay_matrix(self) -> np.ndarray | None:
        """Precomputed K = sum_m lambda_m J_m^dagger J_m for the anticommutator part."""
        if self.is_empty:
            return None
        k = np.zeros_like(self.jump_operators[0])
        for j, lam in zip(self.jump_operators, self.rates):
            k = k + lam * (j.conj().T @ j)
        return k


@dataclass(frozen=True)
class ControlSystemModel:
    """Free Hamiltonian, control Hamiltonians, decoherence channel, and the
    index of the control reserved for drift cancellation.

    drift_cancel_index is a 0-based position in `controls`; it must be set
    exactly when the channel is nonempty (open systems need the cancellation,
    closed ones have nothing to cancel).
    """

    h0: np.ndarray
    controls: tuple[np.ndarray, ...]
    channel: LindbladChannel = field(default_factory=LindbladChannel)
    drift_cancel_index: int | None = None

    def __post_init__(self):
        require_hermitian(self.h0, 1e-10, "h0")
        for i, h in enumerate(self.controls):
            require_hermitian(h, 1e-10, f"control {i}")
            require_same_dim(self.h0, h)
        if not self.channel.is_empty:
            require_same_dim(self.h0, self.channel.jump_operators[0])
            if self.drift_cancel_index is None:
                raise ValidationError("open system requires a drift_cancel_index")
            if not 0 <= self.drift_cancel_index < len(self.controls):
                raise ValidationError(
                    f"drift_cancel_index {self.drift_cancel_index} out of range")
        elif self.drift_cancel_index is not None:
            raise ValidationError("drift_cancel_index is meaningless for a "
                                  "closed system")

    @property
    def dim(self) -> int:
        return self.h0.shape[0]

    @property
    def n_controls(self) -> int:
        return len(self.controls)


@dataclass(frozen=True)
class IntegratorConfig:
    """Fixed-step RK4 settings; record_stride thins the stored trace."""

    dt: float = 1e-3
    t_final: float = 10.0
    record_stride: int = 10

    def __post_init__(self):
        if self.dt <= 0:
            raise ValidationError(f"dt must be positive, got {self.dt}")
        if self.t_final < self.dt:
            raise ValidationError("t_final must be at least one step")
        steps = self.t_final / self.dt
        if abs(steps - round(steps)) > 1e-9 * max(steps, 1.0):
            raise ValidationError(
                f"t_final/dt = {steps} is not an integer step count")
        if self.record_stride < 1:
            raise ValidationError("record_stride must be >= 1")
        if int(round(steps)) % self.record_stride != 0:
            raise ValidationError("record_stride must divide the step count "
                                  "so the final time is recorded")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))

    @property
    def n_recorded(self) -> int:
        return self.n_steps // self.record_stride + 1


def dissipator(channel: LindbladChannel, rho: np.ndarray) -> np.ndarray:
    """L(rho) = sum_m lambda_m (J rho J^dag - (J^dag J rho + rho J^dag J)/2)."""
    require_square(rho, "rho")
    if channel.is_empty:
        return np.zeros_like(rho, dtype=complex)
    require_same_dim(channel.jump_operators[0], rho)
    out = np.zeros_like(rho, dtype=complex)
    for j, lam in zip(channel.jump_operators, channel.rates):
        jd = j.conj().T
        jdj = jd @ j
        out += lam * (j @ rho @ jd - 0.5 * (jdj @ rho + rho @ jdj))
    return out


def _dissipator_batch(channel: LindbladChannel, k: np.ndarray | None,
                      rho: np.ndarray) -> np.ndarray:
    # broadcastable over leading batch axes; k = channel.decay_matrix()
    if channel.is_empty:
        return np.zeros_like(rho)
    out = -0.5 * (k @ rho + rho @ k)
    for j, lam in zip(channel.jump_operators, channel.rates):
        out += lam * (j @ rho @ j.conj().T)
    return out


def master_rhs(model: ControlSystemModel, rho: np.ndarray,
               field_values: Sequence[float]) -> np.ndarray:
    """drho/dt = -i[H0 + sum_n f_n H_n, rho] + L(rho)."""
    if len(field_values) != model.n_controls:
        raise ValidationError(f"expected {model.n_controls} field values, "
                              f"got {len(field_values)}")
    require_same_dim(model.h0, rho)
    h = model.h0
    for f, hn in zip(field_values, model.controls):
        if f != 0.0:
            h = h + f * hn
    out = -1j * (h @ rho - rho @ h)
    if not model.channel.is_empty:
        out = out + dissipator(model.channel, rho)
    return out


def _hygiene_check(rho: np.ndarray, t: float) -> None:
    try:
        check_density_matrix(rho, herm_tol=HERM_STEP_TOL)
    except Exception as e:
        raise IntegrationError(str(e), t) from e
    p = float(np.sum((rho * rho.conj().T).real))
    if p > PURITY_CEIL:
        raise IntegrationError(f"purity {p:.12f} exceeds 1", t)


def rk4_step(model: ControlSystemModel, rho: np.ndarray,
             fields_callback: Callable[[float], Sequence[float]],
             t: float, dt: float) -> np.ndarray:
    """One classical RK4 update; fields_callback is sampled at t, t+dt/2, t+dt."""
    f0 = fields_callback(t)
    fm = fields_callback(t + 0.5 * dt)
    f1 = fields_callback(t + dt)
    k1 = master_rhs(model, rho, f0)
    k2 = master_rhs(model, rho + 0.5 * dt * k1, fm)
    k3 = master_rhs(model, rho + 0.5 * dt * k2, fm)
    k4 = master_rhs(model, rho + dt * k3, f1)
    out = rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    _hygiene_check(out, t + dt)
    return out


def propagate_target(h0: np.ndarray, rho_d0: np.ndarray,
                     config: IntegratorConfig) -> tuple[np.ndarray, np.ndarray]:
    """Free evolution drho_D/dt = -i[H0, rho_D] at the recorded times.

    Returns (times, states) with states[k] the target at times[k]. A target
    commuting with H0 (within 1e-12) short-circuits to a constant trajectory.
    """
    require_hermitian(h0, 1e-10, "h0")
    check_density_matrix(rho_d0)
    times = np.arange(config.n_recorded) * (config.record_stride * config.dt)
    comm_norm = float(np.max(np.abs(h0 @ rho_d0 - rho_d0 @ h0)))
    if comm_norm < 1e-12:
        states = np.broadcast_to(rho_d0, (times.size,) + rho_d0.shape).copy()
        return times, states
    free = ControlSystemModel(h0=h0, controls=())
    states = np.empty((times.size,) + rho_d0.shape, dtype=complex)
    states[0] = rho_d0
    rho = rho_d0
    idx = 1
    for k in range(config.n_steps):
        rho = rk4_step(free, rho, lambda t: (), k * config.dt, config.dt)
        if (k + 1) % config.record_stride == 0:
            states[idx] = rho
            idx += 1
    return times, states
