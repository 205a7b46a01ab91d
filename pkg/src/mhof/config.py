"""Experiment configuration files (JSON) and their grid expansion.

Unknown keys are rejected at every level. A scheme entry may carry a
``grid`` object mapping field names to value lists; the lists expand as a
Cartesian product in the order the keys appear. The special grid key
``mu0_each`` takes a list of scalars and expands to every per-component
combination (``d`` components).
"""

from __future__ import annotations

import itertools
import json
import os
from dataclasses import dataclass, fields
from pathlib import Path

from mhof.controller import ControllerConfig
from mhof.errors import ConfigError
from mhof.plant import OptimizerState, ProblemSpec
from mhof.schemes import SchemeConfig

TOP_KEYS = {"problem", "optimizer", "schemes", "seeds", "output"}
OPTIMIZER_KEYS = {"kind", "lr", "inner_steps"}
SCHEME_KEYS = {"scheme", "mu0", "warmup_epochs", "B", "controller", "grid"}
PROBLEM_KEYS = {f.name for f in fields(ProblemSpec)}
CONTROLLER_KEYS = {f.name for f in fields(ControllerConfig)}
GRID_KEYS = (SCHEME_KEYS - {"scheme", "controller", "grid"}) | CONTROLLER_KEYS | {"mu0_each"}


@dataclass
class ExperimentConfig:
    problem: ProblemSpec
    optimizer: OptimizerState
    inner_steps: int
    grids: dict  # scheme name -> list[SchemeConfig], in file order
    seeds: list
    output: str

    def n_runs(self) -> int:
        return sum(len(v) for v in self.grids.values()) * len(self.seeds)


def _unknown(obj: dict, allowed: set, where: str) -> None:
    extra = sorted(set(obj) - allowed)
    if extra:
        raise ConfigError(f"unknown key(s) {extra}", field=f"{where}.{extra[0]}" if where else extra[0])


def _obj(value, where: str) -> dict:
    if not isinstance(value, dict):
        raise ConfigError("expected an object", field=where)
    return value


def _tuplify(v):
    if isinstance(v, list):
        return tuple(_tuplify(x) for x in v)
    return v


def _problem(raw: dict) -> ProblemSpec:
    _unknown(raw, PROBLEM_KEYS, "problem")
    raw = {k: _tuplify(v) for k, v in raw.items()}
    try:
        spec = ProblemSpec(**raw)
    except TypeError as exc:
        raise ConfigError(str(exc), field="problem") from None
    spec.validate()
    return spec


def _mu0(value, where: str):
    if isinstance(value, bool) or not isinstance(value, (int, float, list)):
        raise ConfigError("mu0 must be a number or a list of numbers", field=where)
    if isinstance(value, list):
        if not value or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in value):
            raise ConfigError("mu0 must be a number or a list of numbers", field=where)
        if any(x <= 0 for x in value):
            raise ConfigError("every mu0 component must be positive", field=where)
        return tuple(float(x) for x in value)
    if value <= 0:
        raise ConfigError("mu0 must be positive", field=where)
    return float(value)


def _expand_scheme(raw: dict, idx: int, d: int, inner_steps: int) -> list[SchemeConfig]:
    where = f"schemes[{idx}]"
    _unknown(raw, SCHEME_KEYS, where)
    if "scheme" not in raw:
        raise ConfigError("missing 'scheme'", field=f"{where}.scheme")
    base = {k: v for k, v in raw.items() if k not in ("controller", "grid")}
    ctrl_raw = _obj(raw.get("controller", {}), f"{where}.controller")
    _unknown(ctrl_raw, CONTROLLER_KEYS, f"{where}.controller")
    grid = _obj(raw.get("grid", {}), f"{where}.grid")
    _unknown(grid, GRID_KEYS, f"{where}.grid")

    axes = []
    for key, values in grid.items():
        if not isinstance(values, list) or not values:
            raise ConfigError("grid values must be a non-empty list", field=f"{where}.grid.{key}")
        if key == "mu0_each":
            axes.append([("mu0", list(combo)) for combo in itertools.product(values, repeat=d)])
        else:
            axes.append([(key, v) for v in values])

    out = []
    for combo in itertools.product(*axes) if axes else [()]:
        s = dict(base)
        c = dict(ctrl_raw)
        for key, v in combo:
            (c if key in CONTROLLER_KEYS else s)[key] = v
        field_where = f"{where}.mu0"
        try:
            cfg = SchemeConfig(
                scheme=s["scheme"],
                mu0=_mu0(s.get("mu0", 1.0), field_where),
                warmup_epochs=int(s.get("warmup_epochs", 50)),
                controller=ControllerConfig(**c) if s["scheme"] == "mhof" else None,
                B=int(s.get("B", 500)),
                inner_steps=inner_steps,
            )
        except TypeError as exc:
            raise ConfigError(str(exc), field=f"{where}.controller") from None
        try:
            cfg.validate()
            cfg.mu_vector(d)
        except ConfigError as exc:
            sub = f"controller.{exc.field}" if exc.field in CONTROLLER_KEYS else exc.field
            raise ConfigError(str(exc), field=f"{where}.{sub}") from None
        out.append(cfg)
    return out


def parse(raw: dict, seed_override: str | None = None) -> ExperimentConfig:
    raw = _obj(raw, "")
    _unknown(raw, TOP_KEYS, "")
    for key in ("problem", "schemes"):
        if key not in raw:
            raise ConfigError(f"missing {key!r}", field=key)
    problem = _problem(_obj(raw["problem"], "problem"))
    opt_raw = _obj(raw.get("optimizer", {}), "optimizer")
    _unknown(opt_raw, OPTIMIZER_KEYS, "optimizer")
    opt = OptimizerState(kind=opt_raw.get("kind", "adam"), lr=float(opt_raw.get("lr", 0.05)))
    opt.validate()
    inner = opt_raw.get("inner_steps", 5)
    if not isinstance(inner, int) or inner < 1:
        raise ConfigError("inner_steps must be a positive integer", field="optimizer.inner_steps")
    d = problem.d
    schemes = raw["schemes"]
    if not isinstance(schemes, list) or not schemes:
        raise ConfigError("schemes must be a non-empty list", field="schemes")
    grids: dict = {}
    for i, entry in enumerate(schemes):
        cfgs = _expand_scheme(_obj(entry, f"schemes[{i}]"), i, d, inner)
        grids.setdefault(cfgs[0].scheme, []).extend(cfgs)
    if seed_override is not None and seed_override.strip():
        try:
            seeds = [int(seed_override)]
        except ValueError:
            raise ConfigError(f"MHOF_SEED must be an integer, got {seed_override!r}", field="MHOF_SEED") from None
    else:
        seeds = raw.get("seeds", [0])
        if (not isinstance(seeds, list) or not seeds
                or not all(isinstance(s, int) and not isinstance(s, bool) for s in seeds)):
            raise ConfigError("seeds must be a non-empty list of integers", field="seeds")
    output = raw.get("output", "runs")
    if not isinstance(output, str):
        raise ConfigError("output must be a string", field="output")
    return ExperimentConfig(problem, opt, inner, grids, list(seeds), output)


def load(path, env=None) -> ExperimentConfig:
    env = os.environ if env is None else env
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno}: {exc.msg}", field="file") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", field="file") from None
    return parse(raw, env.get("MHOF_SEED"))
