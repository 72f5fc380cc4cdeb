"""Sectioned key-value run configuration: parse, validate, normalize.

A run is fully described by one INI-style file. parse_config fills every
default and rejects unknown keys outright (with section and line context),
so a config that parses today parses identically tomorrow; normalized_dump
re-emits the effective settings in canonical form and round-trips through
parse_config unchanged. Keys are case-insensitive; values keep their case.

Four-level perturbation offsets and sweep ranges are expressed in units of
gamma_unit (default: the summed decay rate), matching how free-Hamiltonian
uncertainty bounds are usually quoted for that system.
"""

from __future__ import annotations

import math
import re
from configparser import ConfigParser
from configparser import Error as ConfigParserError
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dynamics import ControlSystemModel, IntegratorConfig, LindbladChannel
from .errors import ConfigError, ValidationError
from .models import (FourLevelParams, ModelBundle, TwoLevelParams,
                     four_level_bundle, two_level_bundle)
from .robustness import NoiseSpec, SweepAxis, SweepGrid

FAMILIES = ("two-level", "four-level", "raw-matrices")
SECTIONS = ("model", "integrator", "control", "perturbation", "noise",
            "sweep", "run")

_TWO_LEVEL_KEYS = {"family", "omega", "beta0", "phi0", "gamma_unit"}
_FOUR_LEVEL_KEYS = {"family", "omega_rabi", "phi", "delta_0", "delta_1",
                    "delta_2", "gamma", "gamma_1", "gamma_2", "gamma_3",
                    "beta_1", "beta_2", "beta_3", "lindblad_orientation",
                    "gamma_unit"}
_RAW_FIXED_KEYS = {"family", "h0", "rho0", "target", "drift_cancel_index",
                   "gamma_unit"}
_RAW_PATTERNS = (re.compile(r"control_[1-9]\d*$"),
                 re.compile(r"jump_[1-9]\d*$"),
                 re.compile(r"rate_[1-9]\d*$"),
                 re.compile(r"perturbation_[xz]$"))


@dataclass(frozen=True)
class RawParams:
    """File-backed model family: complex matrices from CSV re,im pairs."""

    h0_path: str
    control_paths: tuple[str, ...]
    rho0_path: str
    target_path: str
    jump_paths: tuple[str, ...] = ()
    rates: tuple[float, ...] = ()
    drift_cancel_index: int | None = None
    perturbation_paths: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class RunConfig:
    """Validated, fully defaulted settings for one CLI run."""

    family: str
    two_level: TwoLevelParams | None
    four_level: FourLevelParams | None
    raw: RawParams | None
    orientation: str
    gamma_unit: float
    integrator: IntegratorConfig
    gains: tuple[float, ...] | None
    guard_eps: float
    field_cap: float
    perturbation: dict[str, float]
    noise: NoiseSpec
    trials: int
    sweep: SweepGrid | None
    seed: int
    schedule_path: str | None
    output_path: str

    @property
    def n_controls(self) -> int:
        if self.family == "two-level":
            return 1
        if self.family == "four-level":
            return 3
        return len(self.raw.control_paths)


def _line_of(text: str, section: str, key: str | None) -> int | None:
    in_section = False
    for i, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if s.startswith("["):
            was = in_section
            in_section = s == f"[{section}]"
            if in_section and key is None:
                return i
            if was and not in_section and key is not None:
                return None
            continue
        if in_section and s and not s.startswith(("#", ";")):
            name = re.split(r"[=:]", s, maxsplit=1)[0].strip().lower()
            if name == key:
                return i
    return None


class _Parser:
    """Wraps ConfigParser with whitelist checks and located error messages."""

    def __init__(self, text: str, overrides=()):
        self.text = text
        self.override_keys = {(s.lower(), k.lower()) for s, k, _ in overrides}
        self.cp = ConfigParser(interpolation=None,
                               inline_comment_prefixes=("#", ";"))
        try:
            self.cp.read_string(text)
        except ConfigParserError as e:
            raise ConfigError(f"config syntax: {e}") from e
        for section, key, value in overrides:
            section = section.lower()
            if not self.cp.has_section(section):
                self.cp.add_section(section)
            self.cp.set(section, key.lower(), str(value))

    def err(self, section: str, key: str | None, message: str):
        loc = f"[{section}]" if key is None else f"[{section}] {key}"
        line = None
        if (section, key) not in self.override_keys:
            line = _line_of(self.text, section, key)
        if line is not None:
            loc = f"{loc} (line {line})"
        raise ConfigError(f"{loc}: {message}")

    def has(self, section: str, key: str) -> bool:
        return self.cp.has_option(section, key)

    def raw(self, section: str, key: str) -> str:
        return self.cp.get(section, key).strip()

    def text_value(self, section: str, key: str, default: str | None) -> str | None:
        return self.raw(section, key) if self.has(section, key) else default

    def float_value(self, section: str, key: str, default: float) -> float:
        if not self.has(section, key):
            return default
        v = self.raw(section, key)
        try:
            out = float(v)
        except ValueError:
            self.err(section, key, f"expected a number, got {v!r}")
        if not math.isfinite(out):
            self.err(section, key, f"expected a finite number, got {v!r}")
        return out

    def int_value(self, section: str, key: str, default: int | None) -> int | None:
        if not self.has(section, key):
            return default
        v = self.raw(section, key)
        try:
            return int(v, 0)
        except ValueError:
            self.err(section, key, f"expected an integer, got {v!r}")

    def choice(self, section: str, key: str, default: str,
               allowed: tuple[str, ...]) -> str:
        v = self.text_value(section, key, default)
        if v not in allowed:
            self.err(section, key,
                     f"expected one of {', '.join(allowed)}, got {v!r}")
        return v

    def pair(self, section: str, key: str) -> tuple[float, float]:
        parts = [p.strip() for p in self.raw(section, key).split(",")]
        if len(parts) != 2:
            self.err(section, key, "expected 'lo, hi'")
        try:
            return float(parts[0]), float(parts[1])
        except ValueError:
            self.err(section, key, f"expected two numbers, got "
                                   f"{self.raw(section, key)!r}")

    def check_keys(self, section: str, allowed: set[str], patterns=()):
        if not self.cp.has_section(section):
            return
        for key in self.cp.options(section):
            if key in allowed or any(p.match(key) for p in patterns):
                continue
            self.err(section, key, "unknown key")


def _parse_model(p: _Parser):
    if not p.cp.has_section("model") or not p.has("model", "family"):
        raise ConfigError("[model] family: required")
    family = p.choice("model", "family", None, FAMILIES)
    orientation = "decay"
    two = four = raw = None
    if family == "two-level":
        p.check_keys("model", _TWO_LEVEL_KEYS)
        try:
            two = TwoLevelParams(
                omega=p.float_value("model", "omega", 4.0),
                beta0=p.float_value("model", "beta0", math.pi / 4),
                phi0=p.float_value("model", "phi0", math.pi / 4))
        except ValidationError as e:
            p.err("model", None, str(e))
        default_unit = 1.0
    elif family == "four-level":
        p.check_keys("model", _FOUR_LEVEL_KEYS)
        gamma = p.float_value("model", "gamma", 1.0)
        if gamma < 0:
            p.err("model", "gamma", f"gammas >= 0 required, got {gamma}")
        gammas = tuple(p.float_value("model", f"gamma_{j}", gamma / 3.0)
                       for j in (1, 2, 3))
        orientation = p.choice("model", "lindblad_orientation", "decay",
                               ("decay", "absorption"))
        try:
            four = FourLevelParams(
                omega_rabi=p.float_value("model", "omega_rabi", 5.0),
                phi=p.float_value("model", "phi", math.pi / 5),
                deltas=tuple(p.float_value("model", f"delta_{j}", d)
                             for j, d in ((0, 4.0), (1, 2.0), (2, 2.0))),
                gammas=gammas,
                betas=tuple(p.float_value("model", f"beta_{j}", b)
                            for j, b in ((1, math.pi / 5), (2, math.pi / 4),
                                         (3, math.pi / 3))))
        except ValidationError as e:
            p.err("model", None, str(e))
        default_unit = four.gamma_total
    else:
        p.check_keys("model", _RAW_FIXED_KEYS, _RAW_PATTERNS)
        raw = _parse_raw(p)
        default_unit = 1.0
    unit = p.float_value("model", "gamma_unit", default_unit)
    if unit <= 0:
        p.err("model", "gamma_unit", f"must be positive, got {unit}")
    return family, two, four, raw, orientation, unit


def _numbered(p: _Parser, prefix: str) -> list[str]:
    found = sorted(int(k.split("_")[1]) for k in p.cp.options("model")
                   if re.match(rf"{prefix}_[1-9]\d*$", k))
    if found != list(range(1, len(found) + 1)):
        p.err("model", f"{prefix}_*",
              f"{prefix}_1..{prefix}_N must be contiguous, found {found}")
    return [p.raw("model", f"{prefix}_{i}") for i in found]


def _parse_raw(p: _Parser) -> RawParams:
    for key in ("h0", "rho0", "target"):
        if not p.has("model", key):
            p.err("model", key, "required for raw-matrices")
    controls = _numbered(p, "control")
    if not controls:
        p.err("model", "control_1", "at least one control matrix required")
    jumps = _numbered(p, "jump")
    rates = _numbered(p, "rate")
    if len(rates) != len(jumps):
        p.err("model", "rate_*", f"{len(jumps)} jump(s) need "
                                 f"{len(jumps)} rate(s), found {len(rates)}")
    try:
        rates_f = tuple(float(r) for r in rates)
    except ValueError:
        p.err("model", "rate_*", f"expected numbers, got {rates}")
    idx = p.int_value("model", "drift_cancel_index", None)
    perturbations = []
    for axis in ("x", "z"):
        if p.has("model", f"perturbation_{axis}"):
            perturbations.append((f"d{axis}",
                                  p.raw("model", f"perturbation_{axis}")))
    return RawParams(
        h0_path=p.raw("model", "h0"), control_paths=tuple(controls),
        rho0_path=p.raw("model", "rho0"), target_path=p.raw("model", "target"),
        jump_paths=tuple(jumps), rates=rates_f, drift_cancel_index=idx,
        perturbation_paths=tuple(perturbations))


def _perturbation_names(family: str, raw: RawParams | None) -> tuple[str, ...]:
    if family == "raw-matrices":
        return tuple(name for name, _ in raw.perturbation_paths)
    return ("dx", "dz")


def _parse_noise(p: _Parser, family: str, n_controls: int,
                 seed: int) -> NoiseSpec:
    p.check_keys("noise", {"mode", "range"},
                 (re.compile(r"range_[1-9]\d*$"),))
    default_mode = "per-run" if family == "four-level" else "per-step"
    mode = p.choice("noise", "mode", default_mode, ("per-step", "per-run"))
    has_shared = p.cp.has_section("noise") and p.has("noise", "range")
    numbered = []
    if p.cp.has_section("noise"):
        numbered = sorted(int(k.split("_")[1]) for k in p.cp.options("noise")
                          if re.match(r"range_[1-9]\d*$", k))
    if has_shared and numbered:
        p.err("noise", "range", "give either one shared range or per-control "
                                "range_N keys, not both")
    if numbered:
        if numbered != list(range(1, n_controls + 1)):
            p.err("noise", "range_*", f"need range_1..range_{n_controls}, "
                                      f"found {numbered}")
        ranges = tuple(p.pair("noise", f"range_{i}") for i in numbered)
    elif has_shared:
        ranges = (p.pair("noise", "range"),) * n_controls
    else:
        ranges = ((0.0, 0.0),) * n_controls
    try:
        return NoiseSpec(ranges=ranges, mode=mode, seed=seed)
    except ValidationError as e:
        p.err("noise", None, str(e))


def _parse_axis(p: _Parser, key: str, names: tuple[str, ...],
                default: SweepAxis | None) -> SweepAxis | None:
    if not (p.cp.has_section("sweep") and p.has("sweep", key)):
        return default
    parts = [s.strip() for s in p.raw("sweep", key).split(",")]
    if len(parts) != 4:
        p.err("sweep", key, "expected 'name, lo, hi, count'")
    name = parts[0]
    if name not in names:
        p.err("sweep", key, f"unknown axis {name!r}; have {list(names)}")
    try:
        lo, hi, count = float(parts[1]), float(parts[2]), int(parts[3])
    except ValueError:
        p.err("sweep", key, f"expected 'name, lo, hi, count', got "
                            f"{p.raw('sweep', key)!r}")
    try:
        return SweepAxis(name=name, lo=lo, hi=hi, count=count)
    except ValidationError as e:
        p.err("sweep", key, str(e))


def parse_config(text: str, overrides=()) -> RunConfig:
    """Parse config text (plus --section.key overrides) into a RunConfig.

    overrides is an iterable of (section, key, value) strings applied on top
    of the file before validation.
    """
    p = _Parser(text, overrides)
    for section in p.cp.sections():
        if section not in SECTIONS:
            p.err(section, None, "unknown section")

    family, two, four, raw, orientation, unit = _parse_model(p)
    names = _perturbation_names(family, raw)

    p.check_keys("integrator", {"dt", "t_final", "record_stride"})
    try:
        integrator = IntegratorConfig(
            dt=p.float_value("integrator", "dt", 1e-3),
            t_final=p.float_value("integrator", "t_final", 10.0),
            record_stride=p.int_value("integrator", "record_stride", 10))
    except ValidationError as e:
        p.err("integrator", None, str(e))

    p.check_keys("control", {"gains", "guard_eps", "field_cap"})
    gains = None
    if p.cp.has_section("control") and p.has("control", "gains"):
        parts = [s.strip() for s in p.raw("control", "gains").split(",")]
        try:
            gains = tuple(float(g) for g in parts)
        except ValueError:
            p.err("control", "gains", f"expected numbers, got {parts}")
    guard_eps = p.float_value("control", "guard_eps", 1e-8)
    field_cap = p.float_value("control", "field_cap", 1.0)
    if guard_eps <= 0:
        p.err("control", "guard_eps", "must be positive")
    if field_cap <= 0:
        p.err("control", "field_cap", "must be positive")

    p.check_keys("perturbation", set(names))
    perturbation = {name: p.float_value("perturbation", name, 0.0)
                    for name in names}

    n_controls = 1 if family == "two-level" else (
        3 if family == "four-level" else len(raw.control_paths))
    if gains is not None and len(gains) != n_controls:
        p.err("control", "gains",
              f"expected {n_controls} values, got {len(gains)}")

    p.check_keys("run", {"seed", "trials", "schedule", "output"})
    seed = p.int_value("run", "seed", 0)
    if not 0 <= seed < 2 ** 64:
        p.err("run", "seed", "must fit in 64 unsigned bits")
    trials = p.int_value("run", "trials", 100)
    if trials < 1:
        p.err("run", "trials", "must be >= 1")

    noise = _parse_noise(p, family, n_controls, seed)

    p.check_keys("sweep", {"axis1", "axis2"})
    if family == "two-level":
        d1 = SweepAxis("dx", -1.0, 1.0, 41)
        d2 = SweepAxis("dz", -1.0, 1.0, 41)
    else:
        d1 = SweepAxis("dx", -0.5, 0.5, 9) if "dx" in names else None
        d2 = SweepAxis("dz", -0.5, 0.5, 9) if "dz" in names else None
    sweep = None
    if p.cp.has_section("sweep"):
        axis1 = _parse_axis(p, "axis1", names, d1)
        axis2 = _parse_axis(p, "axis2", names, d2)
        if axis1 is None or axis2 is None:
            p.err("sweep", None, "axis1 and axis2 required")
        try:
            sweep = SweepGrid(axis1=axis1, axis2=axis2)
        except ValidationError as e:
            p.err("sweep", None, str(e))

    return RunConfig(
        family=family, two_level=two, four_level=four, raw=raw,
        orientation=orientation, gamma_unit=unit, integrator=integrator,
        gains=gains, guard_eps=guard_eps, field_cap=field_cap,
        perturbation=perturbation, noise=noise, trials=trials, sweep=sweep,
        seed=seed, schedule_path=p.text_value("run", "schedule", None),
        output_path=p.text_value("run", "output", "."))


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def normalized_dump(config: RunConfig) -> str:
    """Canonical text for a RunConfig; parse_config(dump) == config."""
    c = config
    lines = ["[model]", f"family = {c.family}"]
    if c.family == "two-level":
        t = c.two_level
        lines += [f"omega = {_fmt(t.omega)}", f"beta0 = {_fmt(t.beta0)}",
                  f"phi0 = {_fmt(t.phi0)}"]
    elif c.family == "four-level":
        f = c.four_level
        lines += [f"omega_rabi = {_fmt(f.omega_rabi)}", f"phi = {_fmt(f.phi)}"]
        lines += [f"delta_{j} = {_fmt(d)}" for j, d in enumerate(f.deltas)]
        lines += [f"gamma_{j + 1} = {_fmt(g)}" for j, g in enumerate(f.gammas)]
        lines += [f"beta_{j + 1} = {_fmt(b)}" for j, b in enumerate(f.betas)]
        lines += [f"lindblad_orientation = {c.orientation}"]
    else:
        r = c.raw
        lines += [f"h0 = {r.h0_path}"]
        lines += [f"control_{i + 1} = {path}"
                  for i, path in enumerate(r.control_paths)]
        lines += [f"jump_{i + 1} = {path}"
                  for i, path in enumerate(r.jump_paths)]
        lines += [f"rate_{i + 1} = {_fmt(rate)}"
                  for i, rate in enumerate(r.rates)]
        lines += [f"rho0 = {r.rho0_path}", f"target = {r.target_path}"]
        if r.drift_cancel_index is not None:
            lines += [f"drift_cancel_index = {r.drift_cancel_index}"]
        lines += [f"perturbation_{name[1]} = {path}"
                  for name, path in r.perturbation_paths]
    lines += [f"gamma_unit = {_fmt(c.gamma_unit)}", "", "[integrator]",
              f"dt = {_fmt(c.integrator.dt)}",
              f"t_final = {_fmt(c.integrator.t_final)}",
              f"record_stride = {c.integrator.record_stride}", "", "[control]",
              f"guard_eps = {_fmt(c.guard_eps)}",
              f"field_cap = {_fmt(c.field_cap)}"]
    if c.gains is not None:
        lines += ["gains = " + ", ".join(_fmt(g) for g in c.gains)]
    lines += ["", "[perturbation]"]
    lines += [f"{name} = {_fmt(value)}"
              for name, value in sorted(c.perturbation.items())]
    lines += ["", "[noise]", f"mode = {c.noise.mode}"]
    lines += [f"range_{i + 1} = {_fmt(lo)}, {_fmt(hi)}"
              for i, (lo, hi) in enumerate(c.noise.ranges)]
    if c.sweep is not None:
        lines += ["", "[sweep]"]
        for key, axis in (("axis1", c.sweep.axis1), ("axis2", c.sweep.axis2)):
            lines += [f"{key} = {axis.name}, {_fmt(axis.lo)}, "
                      f"{_fmt(axis.hi)}, {axis.count}"]
    lines += ["", "[run]", f"seed = {c.seed}", f"trials = {c.trials}"]
    if c.schedule_path is not None:
        lines += [f"schedule = {c.schedule_path}"]
    lines += [f"output = {c.output_path}", ""]
    return "\n".join(lines)


def scaled_offsets(config: RunConfig) -> dict[str, float]:
    """Perturbation offsets in plant units (config values times gamma_unit)."""
    return {k: v * config.gamma_unit for k, v in config.perturbation.items()}


def scaled_grid(config: RunConfig) -> SweepGrid | None:
    """Sweep grid in plant units (config ranges times gamma_unit)."""
    if config.sweep is None:
        return None
    u = config.gamma_unit

    def scale(a: SweepAxis) -> SweepAxis:
        return SweepAxis(name=a.name, lo=a.lo * u, hi=a.hi * u, count=a.count)

    return SweepGrid(axis1=scale(config.sweep.axis1),
                     axis2=scale(config.sweep.axis2))


def build_bundle(config: RunConfig, base_dir: str | Path = ".") -> ModelBundle:
    """Materialize the configured model family into a ModelBundle."""
    if config.family == "two-level":
        return two_level_bundle(config.two_level)
    if config.family == "four-level":
        return four_level_bundle(config.four_level, config.orientation)
    return _build_raw(config.raw, Path(base_dir))


def _load_matrix(path: Path, what: str) -> np.ndarray:
    from .reporting import read_complex_matrix
    if not path.is_file():
        raise ConfigError(f"[model] {what}: file not found: {path}")
    try:
        return read_complex_matrix(path)
    except (ValueError, OSError) as e:
        raise ConfigError(f"[model] {what}: unreadable matrix: {e}") from e


def _build_raw(raw: RawParams, base: Path) -> ModelBundle:
    h0 = _load_matrix(base / raw.h0_path, "h0")
    controls = tuple(_load_matrix(base / p, f"control_{i + 1}")
                     for i, p in enumerate(raw.control_paths))
    jumps = tuple(_load_matrix(base / p, f"jump_{i + 1}")
                  for i, p in enumerate(raw.jump_paths))
    rho0 = _load_matrix(base / raw.rho0_path, "rho0")
    target = _load_matrix(base / raw.target_path, "target")
    channel = LindbladChannel(jump_operators=jumps, rates=raw.rates)
    model = ControlSystemModel(h0=h0, controls=controls, channel=channel,
                               drift_cancel_index=raw.drift_cancel_index)
    ops = {name: _load_matrix(base / p, f"perturbation_{name[1]}")
           for name, p in raw.perturbation_paths}
    return ModelBundle(model=model, rho0=rho0, rho_d=target,
                       perturbation_ops=ops)
