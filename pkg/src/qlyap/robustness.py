"""Open-loop replay against perturbed plants, uncertainty sweeps, ensembles.

Everything here replays one fixed schedule. Grid points and noise trials are
independent, so they are integrated as stacked lanes (B, N, N) in a single
vectorized RK4 pass; per-lane arithmetic is identical whatever the batch
split, which is what makes results byte-stable across --jobs settings. All
randomness is pre-drawn per trial from a seed derived as (master seed, trial
index), so chunking cannot change a trial's noise stream.
"""

from __future__ import annotations

import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .control import (ControlSchedule, DesignReport, fingerprint_model,
                      stage_fields_for_replay)
from .dynamics import ControlSystemModel, _dissipator_batch
from .errors import IntegrationError, ValidationError
from .models import ModelBundle
from .states import _is_pure

MAX_NOISE_ABS = 10.0
TRACE_TOL = 1e-6
HERM_TOL = 1e-9
EIG_FLOOR = -1e-6
PURITY_CEIL = 1.0 + 1e-8


@dataclass(frozen=True)
class NoiseSpec:
    """Multiplicative control noise f_n -> f_n (1 + delta_n).

    ranges holds one (lo, hi) pair per control. per-step mode resamples every
    integration step (the same delta serves all four RK4 stages of a step);
    per-run draws one delta_n per control for the whole replay. Degenerate
    ranges (lo == hi) bypass the generator entirely, so their results do not
    depend on the seed.
    """

    ranges: tuple[tuple[float, float], ...]
    mode: str = "per-step"
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("per-step", "per-run"):
            raise ValidationError(f"noise mode must be per-step or per-run, "
                                  f"got {self.mode!r}")
        clean = []
        for pair in self.ranges:
            lo, hi = (float(pair[0]), float(pair[1]))
            if not lo <= hi:
                raise ValidationError(f"noise range needs lo <= hi, got {pair}")
            if max(abs(lo), abs(hi)) > MAX_NOISE_ABS:
                raise ValidationError(f"|delta| <= {MAX_NOISE_ABS} required, "
                                      f"got {pair}")
            clean.append((lo, hi))
        object.__setattr__(self, "ranges", tuple(clean))
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValidationError("seed must fit in 64 unsigned bits")

    @classmethod
    def zero(cls, n_controls: int) -> "NoiseSpec":
        return cls(ranges=((0.0, 0.0),) * n_controls)

    @property
    def n_controls(self) -> int:
        return len(self.ranges)

    @property
    def is_degenerate(self) -> bool:
        return all(lo == hi for lo, hi in self.ranges)

    @property
    def is_zero(self) -> bool:
        return all(lo == 0.0 == hi for lo, hi in self.ranges)

    def lows(self) -> np.ndarray:
        return np.array([r[0] for r in self.ranges])

    def highs(self) -> np.ndarray:
        return np.array([r[1] for r in self.ranges])


@dataclass(frozen=True)
class SweepAxis:
    """One perturbation direction sampled at count points from lo to hi."""

    name: str
    lo: float
    hi: float
    count: int

    def __post_init__(self):
        if self.count < 2:
            raise ValidationError("sweep axis needs count >= 2")
        if not self.lo < self.hi:
            raise ValidationError(f"sweep axis needs lo < hi, got "
                                  f"[{self.lo}, {self.hi}]")

    def points(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.count)


@dataclass(frozen=True)
class SweepGrid:
    axis1: SweepAxis
    axis2: SweepAxis

    def __post_init__(self):
        if self.axis1.name == self.axis2.name:
            raise ValidationError("sweep axes must differ")


@dataclass(frozen=True)
class SweepResult:
    grid: SweepGrid
    values: np.ndarray
    seed: int
    schedule_fingerprint: str
    dt: float
    t_final: float
    wall_time: float


@dataclass(frozen=True)
class EnsembleResult:
    times: np.ndarray
    mean: np.ndarray
    min: np.ndarray
    max: np.ndarray
    stddev: np.ndarray
    trial0: np.ndarray
    final_fidelities: np.ndarray
    seed: int
    trials: int


def _noise_multipliers(noise: NoiseSpec, n_steps: int,
                       rng: np.random.Generator | None) -> np.ndarray:
    """(1 + delta) factors: shape (F,) per-run, (S, F) per-step."""
    los, his = noise.lows(), noise.highs()
    if noise.mode == "per-run":
        d = los if noise.is_degenerate else rng.uniform(los, his)
        return 1.0 + d
    if noise.is_degenerate:
        return 1.0 + np.broadcast_to(los, (n_steps, los.size)).copy()
    return 1.0 + rng.uniform(los, his, size=(n_steps, los.size))


def _check_lanes(rho: np.ndarray, t: float, lane_offset: int) -> None:
    tr = np.einsum("bii->b", rho)
    bad = np.abs(tr - 1.0) > TRACE_TOL
    if np.any(bad):
        b = int(np.argmax(bad))
        raise IntegrationError(f"replay lane {lane_offset + b}: trace "
                               f"{tr[b]:.9f} drifted", t)
    herm = np.max(np.abs(rho - rho.conj().transpose(0, 2, 1)), axis=(1, 2))
    if np.any(herm > HERM_TOL):
        b = int(np.argmax(herm))
        raise IntegrationError(f"replay lane {lane_offset + b}: hermiticity "
                               f"defect {herm[b]:.3e}", t)
    w = np.linalg.eigvalsh(0.5 * (rho + rho.conj().transpose(0, 2, 1)))
    if np.any(w[:, 0] < EIG_FLOOR):
        b = int(np.argmin(w[:, 0]))
        raise IntegrationError(f"replay lane {lane_offset + b}: eigenvalue "
                               f"{w[b, 0]:.3e} below floor", t)
    p = np.einsum("bij,bji->b", rho, rho).real
    if np.any(p > PURITY_CEIL):
        b = int(np.argmax(p))
        raise IntegrationError(f"replay lane {lane_offset + b}: purity "
                               f"{p[b]:.12f} exceeds 1", t)


def _replay_core(model: ControlSystemModel, h_lanes: np.ndarray,
                 rho0: np.ndarray, nodes: np.ndarray, mids: np.ndarray,
                 dt: float, target_states: np.ndarray, stride: int,
                 mults: np.ndarray | None = None, noise_mode: str = "per-step",
                 lane_offset: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized RK4 replay over stacked lanes.

    h_lanes (B, N, N) is the per-lane free Hamiltonian; nodes/mids are the
    schedule fields at grid times and step midpoints; mults scales fields
    per lane, shaped (B, F) in per-run mode or (S, B, F) in per-step mode.
    Returns (fidelity series (n_rec, B), final states (B, N, N)).
    """
    channel = model.channel
    k_dec = channel.decay_matrix()
    ctl = np.stack([np.asarray(c, dtype=complex) for c in model.controls])
    b_lanes = h_lanes.shape[0]
    n_steps = nodes.shape[0] - 1
    n_rec = n_steps // stride + 1
    fid = np.empty((n_rec, b_lanes))
    const_target = target_states.ndim == 2
    rho = np.broadcast_to(np.asarray(rho0, dtype=complex),
                          h_lanes.shape).copy()

    def record(idx: int, t: float) -> None:
        rd = target_states if const_target else target_states[idx]
        overlap = np.einsum("ij,bji->b", rd, rho).real
        fid[idx] = np.sqrt(np.clip(overlap, 0.0, None))
        _check_lanes(rho, t, lane_offset)

    def rhs(h_stage, state):
        out = -1j * (h_stage @ state - state @ h_stage)
        if not channel.is_empty:
            out += _dissipator_batch(channel, k_dec, state)
        return out

    record(0, 0.0)
    rec_idx = 1
    for k in range(n_steps):
        if mults is None:
            h_a = h_lanes + np.einsum("f,fij->ij", nodes[k], ctl)
            h_m = h_lanes + np.einsum("f,fij->ij", mids[k], ctl)
            h_b = h_lanes + np.einsum("f,fij->ij", nodes[k + 1], ctl)
        else:
            m = mults[k] if noise_mode == "per-step" else mults
            h_a = h_lanes + np.einsum("bf,fij->bij", nodes[k] * m, ctl)
            h_m = h_lanes + np.einsum("bf,fij->bij", mids[k] * m, ctl)
            h_b = h_lanes + np.einsum("bf,fij->bij", nodes[k + 1] * m, ctl)
        k1 = rhs(h_a, rho)
        k2 = rhs(h_m, rho + (0.5 * dt) * k1)
        k3 = rhs(h_m, rho + (0.5 * dt) * k2)
        k4 = rhs(h_b, rho + dt * k3)
        rho = rho + (dt / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
        if (k + 1) % stride == 0:
            record(rec_idx, (k + 1) * dt)
            rec_idx += 1
    return fid, rho


def _replay_worker(payload):
    (model, h_lanes, rho0, nodes, mids, dt, target_states, stride, mults,
     noise_mode, lane_offset) = payload
    fid, _ = _replay_core(model, h_lanes, rho0, nodes, mids, dt,
                          target_states, stride, mults, noise_mode,
                          lane_offset)
    return fid


def _run_chunks(payloads, jobs: int):
    if jobs <= 1 or len(payloads) <= 1:
        return [_replay_worker(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=min(jobs, len(payloads))) as pool:
        return list(pool.map(_replay_worker, payloads))


def _default_stride(n_steps: int) -> int:
    return 10 if n_steps % 10 == 0 else 1


def _as_schedule(design) -> ControlSchedule:
    return design.schedule if isinstance(design, DesignReport) else design


def replay_open_loop(plant: ControlSystemModel, rho0: np.ndarray,
                     schedule: ControlSchedule, target_traj,
                     noise: NoiseSpec | None = None,
                     record_stride: int | None = None
                     ) -> tuple[np.ndarray, float]:
    """Drive the plant with the stored fields and report fidelity over time.

    target_traj is either a constant target density matrix or a (times,
    states) pair from propagate_target; recording follows its time grid. A
    plant whose fingerprint differs from the schedule's gets a warning, not
    an error: replaying against perturbed plants is the point.
    """
    if schedule.n_fields != plant.n_controls:
        raise ValidationError(f"schedule has {schedule.n_fields} fields, "
                              f"plant has {plant.n_controls} controls")
    if isinstance(target_traj, tuple):
        t_times, t_states = target_traj
        t_states = np.asarray(t_states, dtype=complex)
        if t_times.size < 2 or abs(t_times[-1] - schedule.t_final) > 1e-9:
            raise ValidationError("target trajectory must cover the schedule")
        stride_f = (t_times[1] - t_times[0]) / schedule.dt
        stride = int(round(stride_f))
        if abs(stride_f - stride) > 1e-9 or stride < 1:
            raise ValidationError("target trajectory grid must subsample the "
                                  "schedule grid")
    else:
        t_states = np.asarray(target_traj, dtype=complex)
        stride = record_stride or _default_stride(schedule.n_steps)
    if schedule.n_steps % stride != 0:
        raise ValidationError("record stride must divide the step count")
    if not _is_pure(t_states if t_states.ndim == 2 else t_states[0], tol=1e-8):
        raise ValidationError("replay fidelity tracking needs a pure target")
    fp = fingerprint_model(plant)
    if schedule.model_fingerprint and fp != schedule.model_fingerprint:
        warnings.warn("schedule was designed for a different model "
                      f"({schedule.model_fingerprint[:12]} != {fp[:12]})")

    noise = noise or NoiseSpec.zero(plant.n_controls)
    if noise.n_controls != plant.n_controls:
        raise ValidationError(f"noise spec covers {noise.n_controls} "
                              f"controls, plant has {plant.n_controls}")
    rng = None
    if not noise.is_degenerate:
        rng = np.random.default_rng(np.random.SeedSequence(noise.seed))
    mults = None
    if not noise.is_zero:
        m = _noise_multipliers(noise, schedule.n_steps, rng)
        mults = m[:, None, :] if noise.mode == "per-step" else m[None, :]
    fid, _ = _replay_core(
        model=plant, h_lanes=plant.h0[None], rho0=rho0,
        nodes=schedule.fields, mids=stage_fields_for_replay(schedule),
        dt=schedule.dt, target_states=t_states, stride=stride, mults=mults,
        noise_mode=noise.mode)
    series = fid[:, 0]
    return series, float(series[-1])


def sweep_uncertainty(design, bundle: ModelBundle, grid: SweepGrid,
                      record_stride: int | None = None, jobs: int = 1,
                      seed: int = 0) -> SweepResult:
    """Final replay fidelity on a 2-d grid of free-Hamiltonian offsets.

    The schedule is fixed; each grid point perturbs the plant along the
    bundle's named directions. Values are row-major over (axis1, axis2) and
    independent of how lanes are split across workers.
    """
    t0 = time.perf_counter()
    schedule = _as_schedule(design)
    for axis in (grid.axis1, grid.axis2):
        if axis.name not in bundle.perturbation_ops:
            raise ValidationError(f"unknown sweep axis {axis.name!r}; have "
                                  f"{sorted(bundle.perturbation_ops)}")
    if schedule.n_fields != bundle.model.n_controls:
        raise ValidationError("schedule does not match the model family")
    stride = record_stride or _default_stride(schedule.n_steps)
    if schedule.n_steps % stride != 0:
        raise ValidationError("record stride must divide the step count")
    x1 = grid.axis1.points()
    x2 = grid.axis2.points()
    p1 = bundle.perturbation_ops[grid.axis1.name]
    p2 = bundle.perturbation_ops[grid.axis2.name]
    h_all = (bundle.model.h0[None, None]
             + x1[:, None, None, None] * p1[None, None]
             + x2[None, :, None, None] * p2[None, None])
    b_total = x1.size * x2.size
    h_all = h_all.reshape(b_total, *bundle.model.h0.shape)

    nodes = schedule.fields
    mids = stage_fields_for_replay(schedule)
    n_chunks = max(1, min(jobs, b_total))
    bounds = np.linspace(0, b_total, n_chunks + 1).astype(int)
    payloads = [
        (bundle.model, h_all[lo:hi], bundle.rho0, nodes, mids, schedule.dt,
         bundle.rho_d, stride, None, "per-step", int(lo))
        for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
    finals = np.concatenate([fid[-1] for fid in _run_chunks(payloads, jobs)])
    return SweepResult(
        grid=grid, values=finals.reshape(x1.size, x2.size), seed=seed,
        schedule_fingerprint=schedule.model_fingerprint, dt=schedule.dt,
        t_final=schedule.t_final, wall_time=time.perf_counter() - t0)


def noise_ensemble(design, plant: ControlSystemModel, rho0: np.ndarray,
                   rho_d: np.ndarray, noise: NoiseSpec, trials: int = 100,
                   record_stride: int | None = None,
                   jobs: int = 1) -> EnsembleResult:
    """Monte Carlo of noisy replays: per-time stats plus per-trial finals.

    Trial k draws its noise from a generator seeded by (noise.seed, k), so
    the ensemble is reproducible and trial-order independent.
    """
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    schedule = _as_schedule(design)
    if schedule.n_fields != plant.n_controls:
        raise ValidationError("schedule does not match the plant")
    if noise.n_controls != plant.n_controls:
        raise ValidationError(f"noise spec covers {noise.n_controls} "
                              f"controls, plant has {plant.n_controls}")
    stride = record_stride or _default_stride(schedule.n_steps)
    if schedule.n_steps % stride != 0:
        raise ValidationError("record stride must divide the step count")
    n_steps = schedule.n_steps
    per_trial = []
    for trial in range(trials):
        rng = None
        if not noise.is_degenerate:
            rng = np.random.default_rng(
                np.random.SeedSequence(noise.seed, spawn_key=(trial,)))
        per_trial.append(_noise_multipliers(noise, n_steps, rng))
    stacked = np.stack(per_trial)
    # per-step draws arrive as (B, S, F); the engine indexes steps first
    mults = stacked.transpose(1, 0, 2) if noise.mode == "per-step" else stacked

    nodes = schedule.fields
    mids = stage_fields_for_replay(schedule)
    n_chunks = max(1, min(jobs, trials))
    bounds = np.linspace(0, trials, n_chunks + 1).astype(int)
    payloads = []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        if hi <= lo:
            continue
        chunk = mults[:, lo:hi] if noise.mode == "per-step" else mults[lo:hi]
        h_lanes = np.broadcast_to(plant.h0, (hi - lo, *plant.h0.shape))
        payloads.append((plant, h_lanes, rho0, nodes, mids, schedule.dt,
                         rho_d, stride, chunk, noise.mode, int(lo)))
    fid = np.concatenate(_run_chunks(payloads, jobs), axis=1)
    times = np.arange(fid.shape[0]) * (stride * schedule.dt)
    return EnsembleResult(
        times=times, mean=fid.mean(axis=1), min=fid.min(axis=1),
        max=fid.max(axis=1), stddev=fid.std(axis=1), trial0=fid[:, 0],
        final_fidelities=fid[-1].copy(), seed=noise.seed, trials=trials)
