"""Experiment configuration: INI-style files with strict key checking.

Frequencies and rates in config files are ordinary frequencies in Hz and are
multiplied by 2*pi on their way into the engine; drive amplitudes are in
sqrt(Hz) and times in seconds.  Unknown sections or keys are rejected so that
typos cannot silently fall back to defaults.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, replace

from .fock import ModeSpace
from .lindblad import TWO_PI, IntegratorConfig, SystemSpec
from .reservoir import EncodingSpec


class ConfigError(Exception):
    """Bad configuration file or option (CLI exit status 2)."""


# section -> key -> default (as written in a config file)
DEFAULTS = {
    "system": {
        "omega_a": "10e9",
        "omega_b": "9.5e9",
        "g": "700e6",
        "kappa_a": "17e6",
        "kappa_b": "21e6",
        "eps_a": "1e6",
        "eps_b": "5e5",
        "collapse_mode": "combined",
        "frame": "lab",
        "delta_a": "0",
        "delta_b": "0",
    },
    "space": {"k_a": "5", "k_b": "5"},
    "integrator": {
        "dt": "1e-12",
        "t_end": "100e-9",
        "sample_interval": "2e-9",
        "method": "rk4_fixed",
        "leakage_tol": "1e-4",
    },
    "encoding": {
        "eps_a_max": "1e6",
        "eps_b_max": "2e5",
        "duration": "100e-9",
        "readout_time": "100e-9",
    },
    "sweep": {
        "num_points": "51",
        "seed": "20260809",
        "kappa_grid": "5e6, 20e6, 100e6",
        "dt_grid": "",
        "seq_len": "160",
        "max_delay": "10",
        "ridge": "1e-6",
        "dynamics_cases": "",
    },
    "output": {"directory": "results", "prefix": "run"},
}

_HZ_SYSTEM_KEYS = ("omega_a", "omega_b", "g", "kappa_a", "kappa_b", "delta_a", "delta_b")

# keys accepted inside a dynamics-case override, mapped to their target block
_CASE_SYSTEM_KEYS = set(DEFAULTS["system"])
_CASE_SPACE_KEYS = set(DEFAULTS["space"])
_CASE_INTEGRATOR_KEYS = set(DEFAULTS["integrator"])


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    system: SystemSpec
    space: ModeSpace
    integrator: IntegratorConfig
    encoding: EncodingSpec
    num_points: int
    seed: int
    kappa_grid: tuple[float, ...]  # Hz, as configured
    dt_grid: tuple[float, ...]  # seconds, one per kappa (broadcast if single)
    seq_len: int
    max_delay: int
    ridge: float
    dynamics_cases: tuple[tuple[str, dict], ...]
    out_dir: str
    prefix: str
    resolved: dict  # flat "section.key" -> string, for the run manifest


def _merge(path: str | None) -> dict:
    values = {s: dict(kv) for s, kv in DEFAULTS.items()}
    if path is None:
        return values
    parser = configparser.ConfigParser(interpolation=None)
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path!r}")
    for section in parser.sections():
        if section not in values:
            raise ConfigError(f"unknown config section [{section}]")
        for key, value in parser.items(section):
            if key not in values[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            values[section][key] = value.strip()
    return values


def _as_float(values: dict, section: str, key: str) -> float:
    raw = values[section][key]
    try:
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key} = {raw!r} is not a number") from exc


def _as_int(values: dict, section: str, key: str) -> int:
    x = _as_float(values, section, key)
    if x != int(x):
        raise ConfigError(f"[{section}] {key} must be an integer, got {x}")
    return int(x)


def _as_float_list(values: dict, section: str, key: str) -> tuple[float, ...]:
    raw = values[section][key].strip()
    if not raw:
        return ()
    try:
        return tuple(float(tok) for tok in raw.split(","))
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key} = {raw!r} is not a comma-separated number list") from exc


def _parse_cases(raw: str) -> tuple[tuple[str, dict], ...]:
    """'label: key=value key=value; label2: ...' -> ((label, {key: value}), ...)."""
    cases = []
    for chunk in raw.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        if ":" not in chunk:
            raise ConfigError(f"dynamics case {chunk!r} lacks a 'label:' prefix")
        label, _, body = chunk.partition(":")
        label = label.strip()
        if not label or not label.replace("_", "").isalnum():
            raise ConfigError(f"bad dynamics case label {label!r}")
        overrides = {}
        for tok in body.split():
            if "=" not in tok:
                raise ConfigError(f"bad override {tok!r} in dynamics case {label!r}")
            key, _, val = tok.partition("=")
            known = _CASE_SYSTEM_KEYS | _CASE_SPACE_KEYS | _CASE_INTEGRATOR_KEYS
            if key not in known:
                raise ConfigError(f"unknown override key {key!r} in dynamics case {label!r}")
            overrides[key] = val
        cases.append((label, overrides))
    return tuple(cases)


def _build_system(sys_values: dict) -> SystemSpec:
    kwargs = {}
    for key in _HZ_SYSTEM_KEYS + ("eps_a", "eps_b"):
        try:
            kwargs[key] = float(sys_values[key])
        except ValueError as exc:
            raise ConfigError(f"[system] {key} = {sys_values[key]!r} is not a number") from exc
    try:
        return SystemSpec.from_hz(
            collapse_mode=sys_values["collapse_mode"],
            frame=sys_values["frame"],
            **kwargs,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | None) -> ExperimentConfig:
    """Parse a config file (or pure defaults when path is None)."""
    values = _merge(path)
    system = _build_system(values["system"])
    try:
        space = ModeSpace((_as_int(values, "space", "k_a"), _as_int(values, "space", "k_b")))
        integrator = IntegratorConfig(
            dt=_as_float(values, "integrator", "dt"),
            t_end=_as_float(values, "integrator", "t_end"),
            sample_interval=_as_float(values, "integrator", "sample_interval"),
            method=values["integrator"]["method"],
            leakage_tol=_as_float(values, "integrator", "leakage_tol"),
        )
        encoding = EncodingSpec(
            eps_a_max=_as_float(values, "encoding", "eps_a_max"),
            eps_b_max=_as_float(values, "encoding", "eps_b_max"),
            duration=_as_float(values, "encoding", "duration"),
            readout_time=_as_float(values, "encoding", "readout_time"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    kappa_grid = _as_float_list(values, "sweep", "kappa_grid")
    dt_grid = _as_float_list(values, "sweep", "dt_grid")
    if not dt_grid:
        dt_grid = (integrator.dt,) * len(kappa_grid)
    elif len(dt_grid) == 1:
        dt_grid = dt_grid * len(kappa_grid)
    elif len(dt_grid) != len(kappa_grid):
        raise ConfigError(
            f"dt_grid has {len(dt_grid)} entries but kappa_grid has {len(kappa_grid)}"
        )
    num_points = _as_int(values, "sweep", "num_points")
    if num_points < 2:
        raise ConfigError("num_points must be >= 2")

    resolved = {f"{s}.{k}": v for s, kv in values.items() for k, v in kv.items()}
    return ExperimentConfig(
        system=system,
        space=space,
        integrator=integrator,
        encoding=encoding,
        num_points=num_points,
        seed=_as_int(values, "sweep", "seed"),
        kappa_grid=kappa_grid,
        dt_grid=dt_grid,
        seq_len=_as_int(values, "sweep", "seq_len"),
        max_delay=_as_int(values, "sweep", "max_delay"),
        ridge=_as_float(values, "sweep", "ridge"),
        dynamics_cases=_parse_cases(values["sweep"]["dynamics_cases"]),
        out_dir=values["output"]["directory"],
        prefix=values["output"]["prefix"],
        resolved=resolved,
    )


def apply_case(
    config: ExperimentConfig, overrides: dict
) -> tuple[SystemSpec, ModeSpace, IntegratorConfig]:
    """Resolve one dynamics case: per-case overrides on system, space, integrator."""
    sys_kw, space_kw, int_kw = {}, {}, {}
    for key, raw in overrides.items():
        if key in ("collapse_mode", "frame", "method"):
            val = raw
        else:
            try:
                val = float(raw)
            except ValueError as exc:
                raise ConfigError(f"case override {key} = {raw!r} is not a number") from exc
        if key in _CASE_SYSTEM_KEYS:
            sys_kw[key] = TWO_PI * val if key in _HZ_SYSTEM_KEYS else val
        elif key in _CASE_SPACE_KEYS:
            space_kw[key] = int(val)
        else:
            int_kw[key] = val
    try:
        system = replace(config.system, **sys_kw)
        space = (
            ModeSpace((space_kw.get("k_a", config.space.dims[0]),
                       space_kw.get("k_b", config.space.dims[1])))
            if space_kw
            else config.space
        )
        integrator = replace(config.integrator, **int_kw) if int_kw else config.integrator
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return system, space, integrator
