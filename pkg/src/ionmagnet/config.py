"""
Flat ``section.key = value`` run configuration.

Blank lines and ``#`` comments are ignored.  Frequencies are given as
frequency/2π in kHz and times in µs; the builders convert to rad/s and
seconds.  Every key has a default (the experiment's parameter set), so an
empty file is a complete configuration.
"""

from __future__ import annotations

import difflib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .ising import IsingConfig, RampSchedule
from .measurement import DetectionModel
from .phonon import WalkingWaveParams

TWO_PI = 2.0 * math.pi


class ConfigError(ValueError):
    pass


def _float(text):
    value = float(text)
    if not math.isfinite(value):
        raise ValueError("not a finite number")
    return value


def _int(text):
    value = float(text)
    if value != int(value):
        raise ValueError("not an integer")
    return int(value)


def _bool(text):
    low = text.strip().lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError("not a boolean")


def _optional_float(text):
    return None if text.strip().lower() in ("", "none") else _float(text)


def _float_list(text):
    if text.strip().lower() in ("", "none"):
        return None
    return [_float(part) for part in text.replace(";", ",").split(",") if part.strip()]


def _choice(*options):
    def parse(text):
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text

    return parse


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], Any]
    default: Any
    check: Callable[[Any], bool] | None = None
    requirement: str = ""
    help: str = ""


def _positive(v):
    return v > 0


def _nonneg(v):
    return v >= 0


SCHEMA: dict[str, Key] = {
    "ising.n_spins": Key(_int, 2, lambda v: 2 <= v <= 10, "2 <= n_spins <= 10"),
    "ising.bx_khz": Key(_float, 4.24, _positive, "> 0", "transverse field B_x/2π in kHz"),
    "ising.j_max_over_bx": Key(_float, 5.2, _nonneg, ">= 0", "|J_max| / B_x"),
    "ising.coupling": Key(_choice("ferro", "antiferro"), "ferro", help="sign of J (ferro: J < 0)"),
    "ising.bz_khz": Key(_float, 0.0, help="bias field B_z/2π in kHz"),
    "ising.coupling_range": Key(_choice("nearest_neighbour", "all_pairs"), "nearest_neighbour"),
    "ising.gamma_dephasing": Key(_float, 0.0, _nonneg, ">= 0", "dephasing rate in 1/s"),
    "ising.field_sign": Key(_int, -1, lambda v: v in (-1, 1), "+1 or -1"),
    "ising.orientation": Key(_choice("plus_x", "minus_x"), "plus_x"),
    "ramp.t_total_us": Key(_float, 125.0, _positive, "> 0"),
    "ramp.t_linear_end_us": Key(_float, 50.0, _positive, "> 0"),
    "ramp.linear_end_fraction": Key(_float, 5e-4, lambda v: 0 <= v <= 1, "in [0, 1]"),
    "ramp.alpha_per_us": Key(_float, 0.026, _positive, "> 0"),
    "ramp.beta": Key(_float, 4.0),
    "ramp.n_steps": Key(_int, 50, _positive, ">= 1"),
    "integrator.dt_ns": Key(_float, 10.0, _positive, "> 0"),
    "integrator.self_check": Key(_bool, True),
    "sweep.points": Key(_int, 50, _positive, ">= 1"),
    "sweep.max_ratio": Key(_optional_float, None, lambda v: v is None or v >= 0, ">= 0"),
    "sweep.ratios": Key(_float_list, None),
    "parity.points": Key(_int, 24, lambda v: v >= 8, ">= 8"),
    "parity.target_contrast": Key(_optional_float, None, lambda v: v is None or 0 < v < 1, "in (0, 1)"),
    "phonon.omega_stretch_khz": Key(_float, 3700.0, _positive, "> 0"),
    "phonon.omega_com_khz": Key(_float, 2100.0, _positive, "> 0"),
    "phonon.delta_khz": Key(_float, -250.0, lambda v: v != 0, "!= 0"),
    "phonon.j_target_khz": Key(_float, 22.1, _positive, "> 0"),
    "phonon.g_up_khz": Key(_optional_float, None),
    "phonon.force_ratio": Key(_float, -1.5, lambda v: v == -1.5, "exactly -1.5"),
    "phonon.fock_levels": Key(_int, 12, lambda v: v >= 8, ">= 8"),
    "phonon.lamb_dicke": Key(_float, 0.1, _positive, "> 0"),
    "phonon.n_loops": Key(_int, 1, _positive, ">= 1"),
    "phonon.samples": Key(_int, 101, lambda v: v >= 2, ">= 2"),
    "detect.mean_bright": Key(_float, 40.0, _positive, "> 0"),
    "detect.mean_dark": Key(_float, 6.0, _positive, "> 0"),
    "detect.window_us": Key(_float, 160.0, _positive, "> 0"),
    "detect.n_shots": Key(_int, 10_000, lambda v: v >= 100, ">= 100"),
    "detect.probs": Key(_float_list, None, lambda v: v is None or len(v) == 3, "three values P_dd, P_uu, P_mixed"),
    "detect.histogram": Key(str, "", help="fit this photons,count CSV instead of simulating"),
    "gap.n_min": Key(_int, 2, lambda v: v >= 2, ">= 2"),
    "gap.n_max": Key(_int, 6, lambda v: 2 <= v <= 10, "<= 10"),
    "gap.j_over_bx": Key(_float, 5.0),
    "run.seed": Key(_int, 0, _nonneg, ">= 0"),
    "run.out": Key(str, "out"),
    "run.workers": Key(_int, 1, _positive, ">= 1"),
}


@dataclass
class RunConfig:
    values: dict[str, Any] = field(default_factory=lambda: {k: v.default for k, v in SCHEMA.items()})
    source: str = "<defaults>"

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def with_overrides(self, **overrides) -> "RunConfig":
        vals = dict(self.values)
        for k, v in overrides.items():
            key = k.replace("__", ".")
            if key not in SCHEMA:
                raise ConfigError(_unknown_key_message(key))
            vals[key] = v
        cfg = RunConfig(vals, self.source)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        v = self.values
        if v["ramp.t_linear_end_us"] >= v["ramp.t_total_us"]:
            raise ConfigError("ramp.t_linear_end_us must be smaller than ramp.t_total_us")
        if v["detect.mean_bright"] <= v["detect.mean_dark"]:
            raise ConfigError("detect.mean_bright must exceed detect.mean_dark")
        if abs(v["phonon.delta_khz"]) >= v["phonon.omega_stretch_khz"]:
            raise ConfigError("|phonon.delta_khz| must be below phonon.omega_stretch_khz")
        if v["gap.n_min"] > v["gap.n_max"]:
            raise ConfigError("gap.n_min exceeds gap.n_max")
        if v["ising.gamma_dephasing"] > 0 and v["ising.n_spins"] > 3:
            raise ConfigError("dephasing (ising.gamma_dephasing > 0) supports at most 3 spins")
        probs = v["detect.probs"]
        if probs is not None and (min(probs) < 0 or abs(sum(probs) - 1) > 1e-9):
            raise ConfigError("detect.probs must be non-negative and sum to 1")
        for section, build in (
            ("ramp", self.schedule),
            ("ising", self.ising_config),
            ("phonon", self.walking_wave),
            ("detect", self.detection_model),
        ):
            try:
                build()
            except ValueError as exc:
                raise ConfigError(f"{section}: {exc}") from exc
        ratios = self.sweep_ratios()
        top = v["ising.j_max_over_bx"]
        if any(r < 0 or r > top * (1 + 1e-12) for r in ratios):
            raise ConfigError(f"sweep ratios must lie in [0, ising.j_max_over_bx = {top:g}]")

    def ising_config(self) -> IsingConfig:
        v = self.values
        bx = TWO_PI * v["ising.bx_khz"] * 1e3
        sign = -1.0 if v["ising.coupling"] == "ferro" else 1.0
        return IsingConfig(
            n_spins=v["ising.n_spins"],
            B_x=bx,
            J_max=sign * v["ising.j_max_over_bx"] * bx,
            B_z_bias=TWO_PI * v["ising.bz_khz"] * 1e3,
            coupling_range=v["ising.coupling_range"],
            gamma_dephasing=v["ising.gamma_dephasing"],
            field_sign=v["ising.field_sign"],
        )

    def schedule(self) -> RampSchedule:
        v = self.values
        return RampSchedule(
            T_total=v["ramp.t_total_us"] / 1e6,
            t_linear_end=v["ramp.t_linear_end_us"] / 1e6,
            linear_end_fraction=v["ramp.linear_end_fraction"],
            alpha=v["ramp.alpha_per_us"],
            beta=v["ramp.beta"],
            n_steps=v["ramp.n_steps"],
        )

    @property
    def dt(self) -> float:
        return self.values["integrator.dt_ns"] / 1e9

    def sweep_ratios(self) -> list[float]:
        v = self.values
        if v["sweep.ratios"] is not None:
            return list(v["sweep.ratios"])
        top = v["sweep.max_ratio"]
        if top is None:
            top = v["ising.j_max_over_bx"]
        n = v["sweep.points"]
        return (top * np.arange(1, n + 1) / n).tolist()

    def walking_wave(self) -> WalkingWaveParams:
        v = self.values
        common = dict(
            omega_stretch=TWO_PI * v["phonon.omega_stretch_khz"] * 1e3,
            delta=TWO_PI * v["phonon.delta_khz"] * 1e3,
            force_ratio=v["phonon.force_ratio"],
            fock_levels=v["phonon.fock_levels"],
            lamb_dicke=v["phonon.lamb_dicke"],
            omega_com=TWO_PI * v["phonon.omega_com_khz"] * 1e3,
        )
        if v["phonon.g_up_khz"] is not None:
            return WalkingWaveParams(g_up=TWO_PI * v["phonon.g_up_khz"] * 1e3, **common)
        return WalkingWaveParams.calibrated(TWO_PI * v["phonon.j_target_khz"] * 1e3, **common)

    def detection_model(self) -> DetectionModel:
        v = self.values
        return DetectionModel(
            mean_bright=v["detect.mean_bright"],
            mean_dark=v["detect.mean_dark"],
            window=v["detect.window_us"] / 1e6,
        )


def _unknown_key_message(key: str) -> str:
    close = difflib.get_close_matches(key, SCHEMA.keys(), n=1, cutoff=0.0)
    hint = f"; did you mean '{close[0]}'?" if close else ""
    return f"unknown key '{key}'{hint}"


def parse_config_text(text: str, source: str = "<string>") -> RunConfig:
    values = {k: v.default for k, v in SCHEMA.items()}
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{source}:{lineno}"
        if "=" not in line:
            raise ConfigError(f"{where}: expected 'section.key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"{where}: {_unknown_key_message(key)}")
        if key in seen:
            raise ConfigError(f"{where}: '{key}' already set on line {seen[key]}")
        seen[key] = lineno
        spec = SCHEMA[key]
        try:
            parsed = spec.parse(value)
        except ValueError as exc:
            raise ConfigError(f"{where}: bad value {value!r} for '{key}': {exc}") from None
        if spec.check is not None and not spec.check(parsed):
            raise ConfigError(f"{where}: '{key}' = {value} out of range (requires {spec.requirement})")
        values[key] = parsed
    cfg = RunConfig(values, source)
    cfg.validate()
    return cfg


def parse_config(path) -> RunConfig:
    """Read and validate a configuration file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(path.read_text(encoding="utf-8"), str(path))
