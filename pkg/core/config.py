"""
Run configuration from a flat key=value file (dotenv syntax: `#` comments,
blank lines, optional quotes).
"""
from __future__ import annotations

import hashlib
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional

import numpy as np
from dotenv import dotenv_values

from core.model import (ModelParams, ParameterError, SensitivitySpec, bounds_dominate,
                        sensitivity_bounds)
from core.output import read_fields
from core.solver import FieldTriple, Grid, InitialData, InitKind, Scheme, SolverConfig

logger = logging.getLogger(__name__)

MODEL_KEYS = ("d1", "d2", "d3", "mu1", "mu2", "a1", "a2", "alpha", "beta", "gamma")
SENSITIVITY_KEYS = ("chi_kind", "chi1", "chi2", "K1", "K2", "M1", "M2", "chi_table")
SOLVER_KEYS = ("nx", "ny", "lx", "ly", "dt", "t_end", "scheme", "cfl_safety", "snapshot_every",
               "init_kind", "init_amplitude", "seed", "init_modes", "init_floor", "init_dir")
HYPOTHESIS_KEYS = ("n", "convex", "p_exp", "eta", "c_chi")
KNOWN_KEYS = frozenset(MODEL_KEYS + SENSITIVITY_KEYS + SOLVER_KEYS + HYPOTHESIS_KEYS)

DEFAULTS: Dict[str, str] = {
    "chi_kind": "constant",
    "chi1": "0", "chi2": "0",
    "nx": "128", "lx": "1.0", "ly": "1.0",
    "dt": "0.01", "t_end": "20.0",
    "scheme": "explicit-euler",
    "cfl_safety": "0.2",
    "snapshot_every": "10",
    "init_kind": "random",
    "init_amplitude": "0.1",
    "seed": "0",
    "init_modes": "1",
    "init_floor": "1e-6",
    "n": "2", "convex": "true",
    "p_exp": "3", "eta": "0.5", "c_chi": "inf",
}


class ConfigError(ValueError):
    """Unreadable config file, missing key or invalid value."""


@dataclass(frozen=True)
class HypothesisSettings:
    """Parameters only the hypothesis checkers use."""

    n: int = 2
    convex: bool = True
    p_exp: float = 3.0
    eta: float = 0.5
    c_chi: float = math.inf


@dataclass(frozen=True)
class RunConfig:
    path: Optional[str]
    model: ModelParams
    sensitivity: SensitivitySpec
    grid: Grid
    solver: SolverConfig
    init: InitialData
    hypotheses: HypothesisSettings
    raw: Dict[str, str] = field(default_factory=dict)


def config_hash(path: str) -> str:
    with open(path, "rb") as f:
        return hashlib.sha256(f.read()).hexdigest()


def load_config(path: str) -> RunConfig:
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    values = dotenv_values(path)
    return parse_config(values, base_dir=os.path.dirname(os.path.abspath(path)), path=path)


def _float(values: Mapping[str, str], key: str) -> float:
    raw = values.get(key)
    if raw is None:
        raise ConfigError(f"missing required key '{key}'")
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"key '{key}' must be a number, got {raw!r}") from None


def _int(values: Mapping[str, str], key: str) -> int:
    number = _float(values, key)
    if not number.is_integer():
        raise ConfigError(f"key '{key}' must be an integer, got {values[key]!r}")
    return int(number)


def _bool(values: Mapping[str, str], key: str) -> bool:
    raw = values[key].strip().lower()
    if raw in ("1", "true", "yes", "on"):
        return True
    if raw in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"key '{key}' must be a boolean, got {values[key]!r}")


def _choice(values: Mapping[str, str], key: str, enum_type):
    raw = values[key].strip()
    try:
        return enum_type(raw)
    except ValueError:
        options = ", ".join(member.value for member in enum_type)
        raise ConfigError(f"key '{key}' must be one of {options}; got {raw!r}") from None


def _resolve(base_dir: Optional[str], path: str) -> str:
    if base_dir is None or os.path.isabs(path):
        return path
    return os.path.join(base_dir, path)


def _sensitivity(values: Mapping[str, str], base_dir: Optional[str]) -> SensitivitySpec:
    kind = values["chi_kind"].strip()
    try:
        if kind == "constant":
            return SensitivitySpec.constant(_float(values, "chi1"), _float(values, "chi2"))
        if kind == "reciprocal":
            return SensitivitySpec.reciprocal(_float(values, "K1"), _float(values, "K2"))
        if kind == "tabulated":
            if not values.get("chi_table"):
                raise ConfigError("chi_kind=tabulated needs chi_table (CSV with columns w,chi1,chi2)")
            table_path = _resolve(base_dir, values["chi_table"])
            try:
                table = np.loadtxt(table_path, delimiter=",", skiprows=1, ndmin=2)
            except OSError as exc:
                raise ConfigError(f"cannot read chi_table {table_path}: {exc}") from exc
            return SensitivitySpec.tabulated(table[:, 0], table[:, 1], table[:, 2])
    except ParameterError as exc:
        raise ConfigError(str(exc)) from exc
    raise ConfigError(f"chi_kind must be constant, reciprocal or tabulated; got {kind!r}")


def _grid(values: Mapping[str, str]) -> Grid:
    try:
        if values.get("ny"):
            return Grid.rectangle(_float(values, "lx"), _float(values, "ly"),
                                  _int(values, "nx"), _int(values, "ny"))
        return Grid.interval(_float(values, "lx"), _int(values, "nx"))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def _initial_data(values: Mapping[str, str], grid: Grid, base_dir: Optional[str]) -> InitialData:
    kind = _choice(values, "init_kind", InitKind)
    try:
        modes = tuple(int(m) for m in values["init_modes"].split(",") if m.strip())
    except ValueError:
        raise ConfigError(f"init_modes must be comma-separated integers, got {values['init_modes']!r}") from None
    source: Optional[FieldTriple] = None
    if kind is InitKind.FROM_FILE:
        if not values.get("init_dir"):
            raise ConfigError("init_kind=from-file needs init_dir")
        directory = _resolve(base_dir, values["init_dir"])
        try:
            source = read_fields(directory, grid)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot load initial fields from {directory}: {exc}") from exc
    try:
        return InitialData(kind=kind, amplitude=_float(values, "init_amplitude"), modes=modes or (1,),
                           seed=_int(values, "seed"), floor=_float(values, "init_floor"), source=source)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def parse_config(raw: Mapping[str, Optional[str]], base_dir: Optional[str] = None,
                 path: Optional[str] = None) -> RunConfig:
    """Build every run object from already-read key/value pairs."""
    unknown = sorted(k for k in raw if k not in KNOWN_KEYS)
    for key in unknown:
        logger.warning("ignoring unknown config key '%s'", key)
    values: Dict[str, str] = dict(DEFAULTS)
    values.update({k: v for k, v in raw.items() if v is not None and v.strip() != ""})

    spec = _sensitivity(values, base_dir)
    try:
        model = ModelParams(**{k: _float(values, k) for k in MODEL_KEYS})
        model.check_stability_regime()
    except ParameterError as exc:
        raise ConfigError(str(exc)) from exc

    M1_sampled, M2_sampled = sensitivity_bounds(spec)
    M1 = _float(values, "M1") if "M1" in values else M1_sampled
    M2 = _float(values, "M2") if "M2" in values else M2_sampled
    try:
        model = model.with_bounds(M1, M2)
    except ParameterError as exc:
        raise ConfigError(str(exc)) from exc
    if not bounds_dominate(model, spec):
        logger.warning("M1=%g, M2=%g do not dominate the sampled sensitivities", M1, M2)

    grid = _grid(values)
    try:
        solver = SolverConfig(
            dt=_float(values, "dt"), t_end=_float(values, "t_end"),
            scheme=_choice(values, "scheme", Scheme),
            cfl_safety=_float(values, "cfl_safety"),
            snapshot_every=_int(values, "snapshot_every"),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc

    hypotheses = HypothesisSettings(
        n=_int(values, "n"), convex=_bool(values, "convex"),
        p_exp=_float(values, "p_exp"), eta=_float(values, "eta"), c_chi=_float(values, "c_chi"),
    )
    return RunConfig(path=path, model=model, sensitivity=spec, grid=grid, solver=solver,
                     init=_initial_data(values, grid, base_dir), hypotheses=hypotheses,
                     raw={k: v for k, v in values.items()})

