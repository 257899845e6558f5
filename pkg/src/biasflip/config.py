"""Run configuration: INI-style text with unit-suffixed keys, or the same layout as JSON.

Example::

    [scenario]
    preset = ion-be9
    well = left

    [protocol]
    kind = compensated
    t_final_s = 1e-07

    [numerics]
    grid_points = 256

    [output]
    directory = out
    formats = csv,json
"""

from __future__ import annotations

import configparser
import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

from biasflip.experiments import PRESETS, Scenario, atom_rb87, ion_be9, make_scenario
from biasflip.potentials import AtomLatticeParams, IonQuarticParams
from biasflip.protocols import ProtocolKind


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioBlock:
    preset: Optional[str] = "ion-be9"
    kind: Optional[str] = None  # ion | atom, for custom scenarios
    well: str = "left"
    mass_kg: Optional[float] = None
    alpha_N_per_m: Optional[float] = None
    beta_N_per_m3: Optional[float] = None
    gamma0_N: Optional[float] = None
    trap_omega_rad_per_s: Optional[float] = None
    v0_J: Optional[float] = None
    d_lattice_m: Optional[float] = None
    delta_x0_m: Optional[float] = None
    target_states: str = "exact"


@dataclass(frozen=True)
class ProtocolBlock:
    kind: str = "compensated"
    t_final_s: Optional[float] = None
    lambda_start_si: Optional[float] = None  # N (ion) or m (atom)
    lambda_end_si: Optional[float] = None


@dataclass(frozen=True)
class NumericsBlock:
    grid_points: Optional[int] = None
    grid_span_m: Optional[float] = None
    dt_s: Optional[float] = None
    snapshot_stride: Optional[int] = None


@dataclass(frozen=True)
class OutputBlock:
    directory: str = "."
    formats: tuple[str, ...] = ("csv", "json")


@dataclass(frozen=True)
class RunConfig:
    scenario: ScenarioBlock = field(default_factory=ScenarioBlock)
    protocol: ProtocolBlock = field(default_factory=ProtocolBlock)
    numerics: NumericsBlock = field(default_factory=NumericsBlock)
    output: OutputBlock = field(default_factory=OutputBlock)

    def to_text(self) -> str:
        """Canonical form: fixed section order, sorted keys, repr floats, unset keys omitted."""
        lines = []
        for name in _SECTIONS:
            block = getattr(self, name)
            lines.append(f"[{name}]")
            for key in sorted(f.name for f in fields(block)):
                value = getattr(block, key)
                if value is None:
                    continue
                lines.append(f"{key} = {_format(value)}")
            lines.append("")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        out = {}
        for name in _SECTIONS:
            block = getattr(self, name)
            out[name] = {
                f.name: (list(v) if isinstance(v, tuple) else v)
                for f in fields(block)
                if (v := getattr(block, f.name)) is not None
            }
        return out


_SECTIONS = ("scenario", "protocol", "numerics", "output")
_BLOCKS = {
    "scenario": ScenarioBlock,
    "protocol": ProtocolBlock,
    "numerics": NumericsBlock,
    "output": OutputBlock,
}


def _format(value) -> str:
    if isinstance(value, tuple):
        return ",".join(value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _coerce(block_cls, key: str, raw):
    hints = {f.name: f.type for f in fields(block_cls)}
    if key not in hints:
        raise ConfigError(f"unknown key {key!r} in [{block_cls.__name__}]")
    hint = str(hints[key])
    try:
        if "tuple" in hint:
            items = raw if isinstance(raw, list) else str(raw).split(",")
            return tuple(s.strip() for s in items if str(s).strip())
        if "float" in hint:
            value = float(raw)
            if not math.isfinite(value):
                raise ValueError("not finite")
            return value
        if "int" in hint:
            if isinstance(raw, float) and not raw.is_integer():
                raise ValueError("not an integer")
            return int(raw)
        return str(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key!r}: {raw!r} ({exc})") from None


def config_from_dict(data: dict) -> RunConfig:
    blocks = {}
    for name, values in data.items():
        if name not in _BLOCKS:
            raise ConfigError(f"unknown section [{name}]")
        if not isinstance(values, dict):
            raise ConfigError(f"section [{name}] must be a table")
        cls = _BLOCKS[name]
        blocks[name] = cls(**{k: _coerce(cls, k, v) for k, v in values.items()})
    cfg = RunConfig(**blocks)
    validate(cfg)
    return cfg


def parse_config(text: str) -> RunConfig:
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            return config_from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from None
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keys are case-sensitive (unit suffixes)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    return config_from_dict({s: dict(parser.items(s)) for s in parser.sections()})


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return parse_config(text)


def validate(cfg: RunConfig) -> None:
    sc = cfg.scenario
    if sc.well not in ("left", "right"):
        raise ConfigError("scenario.well must be left or right")
    if sc.target_states not in ("exact", "harmonic"):
        raise ConfigError("scenario.target_states must be exact or harmonic")
    if sc.preset is not None and sc.preset != "custom" and sc.preset not in PRESETS:
        raise ConfigError(f"unknown preset {sc.preset!r}; choose from {sorted(PRESETS)}")
    if sc.preset in (None, "custom"):
        if sc.kind == "ion":
            needed = ("mass_kg", "alpha_N_per_m", "beta_N_per_m3", "gamma0_N")
        elif sc.kind == "atom":
            needed = ("mass_kg", "trap_omega_rad_per_s", "v0_J", "d_lattice_m", "delta_x0_m")
        else:
            raise ConfigError("custom scenarios need kind = ion or atom")
        missing = [k for k in needed if getattr(sc, k) is None]
        if missing:
            raise ConfigError(f"custom {sc.kind} scenario is missing {missing}")
    try:
        ProtocolKind(cfg.protocol.kind)
    except ValueError:
        raise ConfigError(f"unknown protocol kind {cfg.protocol.kind!r}") from None
    n = cfg.numerics.grid_points
    if n is not None and (n < 2 or n & (n - 1)):
        raise ConfigError("numerics.grid_points must be a power of two")


def build_scenario(cfg: RunConfig) -> Scenario:
    sc = cfg.scenario
    kw = {"target_states": sc.target_states}
    if sc.preset in (None, "custom"):
        if sc.kind == "ion":
            params = IonQuarticParams(sc.alpha_N_per_m, sc.beta_N_per_m3, sc.gamma0_N, sc.mass_kg)
        else:
            params = AtomLatticeParams(sc.trap_omega_rad_per_s, sc.v0_J, sc.d_lattice_m, sc.delta_x0_m, sc.mass_kg)
        base = make_scenario(params, sc.well, name="custom", **kw)
    else:
        overrides = {}
        if sc.preset == "ion-be9":
            for key, arg in (("alpha_N_per_m", "alpha"), ("beta_N_per_m3", "beta"), ("gamma0_N", "gamma0")):
                if getattr(sc, key) is not None:
                    overrides[arg] = getattr(sc, key)
            base = ion_be9(sc.well, **overrides, **kw)
        else:
            if sc.delta_x0_m is not None:
                overrides["delta_x0"] = sc.delta_x0_m
            if sc.d_lattice_m is not None:
                overrides["d_lattice"] = sc.d_lattice_m
            base = atom_rb87(sc.well, **overrides, **kw)
    num = cfg.numerics
    if num.grid_points is None and num.grid_span_m is None:
        return base
    span = None
    if num.grid_span_m is not None:
        span = base.scale.to_internal(num.grid_span_m, "length")
    return make_scenario(
        base.params,
        base.well,
        name=base.name,
        span_a0=span,
        n_points=num.grid_points,
        windowed=base.windowed,
        target_states=sc.target_states,
    )
