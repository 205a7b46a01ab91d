"""Training schemes: the hierarchical feedback loop and open-loop baselines."""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from mhof import controller as ctl
from mhof.errors import ConfigError, NumericError
from mhof.plant import OptimizerState, ProblemSpec, epoch, make_problem
from mhof.trace import EpochRecord, Trace

log = logging.getLogger(__name__)

SCHEMES = ("mhof", "fixed", "warmup-linear", "warmup-sigmoid")
WARMUP_FLOOR = 1e-6


@dataclass(frozen=True)
class SchemeConfig:
    scheme: str = "mhof"
    # initial multiplier for mhof, ultimate multiplier for the baselines;
    # a scalar broadcasts over all regularizers
    mu0: float | tuple = 1.0
    warmup_epochs: int = 50
    controller: ctl.ControllerConfig | None = field(default_factory=ctl.ControllerConfig)
    B: int = 500
    inner_steps: int = 5

    def validate(self) -> None:
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}", field="scheme")
        mu0 = np.asarray(self.mu0, dtype=np.float64)
        if mu0.size == 0 or not np.all(np.isfinite(mu0)) or np.any(mu0 <= 0):
            raise ConfigError("every mu0 component must be positive and finite", field="mu0")
        if self.B < 1:
            raise ConfigError("B must be >= 1", field="B")
        if self.inner_steps < 1:
            raise ConfigError("inner_steps must be >= 1", field="inner_steps")
        if self.scheme.startswith("warmup") and self.warmup_epochs < 1:
            raise ConfigError("warmup_epochs must be >= 1", field="warmup_epochs")
        if self.scheme == "mhof":
            if self.controller is None:
                raise ConfigError("mhof scheme requires a controller config", field="controller")
            self.controller.validate(mu0)

    def mu_vector(self, d: int) -> np.ndarray:
        mu = np.asarray(self.mu0, dtype=np.float64).reshape(-1)
        if mu.size == 1:
            return np.full(d, mu[0])
        if mu.size != d:
            raise ConfigError(f"mu0 has {mu.size} components, problem has d={d}", field="mu0")
        return mu.copy()

    def to_dict(self) -> dict:
        out = asdict(self)
        if isinstance(self.mu0, tuple):
            out["mu0"] = list(self.mu0)
        return out

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class RunResult:
    trace: Trace
    selected_epoch: int
    final_ehv: float
    error: str | None = None
    failed_epoch: int | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def schedule(cfg: SchemeConfig, k: int, mu_ult: np.ndarray) -> np.ndarray:
    """Open-loop multiplier at epoch ``k`` for the baseline schemes."""
    if cfg.scheme == "fixed":
        return mu_ult.copy()
    frac = k / cfg.warmup_epochs
    if cfg.scheme == "warmup-linear":
        return mu_ult * max(min(1.0, frac), WARMUP_FLOOR)
    if cfg.scheme == "warmup-sigmoid":
        return mu_ult / (1.0 + np.exp(-8.0 * (frac - 0.5)))
    raise ConfigError(f"{cfg.scheme!r} has no open-loop schedule", field="scheme")


def select_model(trace: Trace) -> int:
    """Epoch of the last setpoint shrink, or 0 when none occurred."""
    shrinks = trace.shrink_epochs()
    return shrinks[-1] if shrinks else 0


def _meta(problem, opt: OptimizerState, cfg: SchemeConfig, seed: int) -> dict:
    spec = problem.spec
    meta = {
        "problem": asdict(spec),
        "problem_digest": spec.digest(),
        "scheme": cfg.to_dict(),
        "scheme_digest": cfg.digest(),
        "optimizer": {"kind": opt.kind, "lr": opt.lr},
        "seed": int(seed),
        "d": problem.d,
        "B": cfg.B,
        "failed_epoch": None,
    }
    # normalise tuples to lists so a saved and reloaded meta compares equal
    return json.loads(json.dumps(meta))


def run(prob, opt: OptimizerState, cfg: SchemeConfig, seed: int) -> RunResult:
    """Train one model under ``cfg``.

    The mhof loop, per epoch: update the multipliers from the latest output,
    run the plant for ``inner_steps`` with those multipliers, measure, then
    adapt the setpoint. Record ``k`` holds the multiplier used to produce
    ``theta^(k)`` and the setpoint after adaptation.
    """
    if isinstance(prob, ProblemSpec):
        prob = make_problem(prob)
    cfg.validate()
    opt.validate()
    opt = opt.fresh()
    trace = Trace(_meta(prob, opt, cfg, seed))
    d = prob.d
    mu0 = cfg.mu_vector(d)
    theta = prob.init_theta(seed)
    out = prob.evaluate(theta)
    closed_loop = cfg.scheme == "mhof"

    if closed_loop:
        st = ctl.init(out.reg, out.ell, mu0, cfg.controller)
        trace.append(EpochRecord(0, out.ell, out.reg, st.mu, st.b))
    else:
        trace.append(EpochRecord(0, out.ell, out.reg, schedule(cfg, 0, mu0), None))

    k = 0
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            for k in range(1, cfg.B + 1):
                if closed_loop:
                    st = ctl.mu_step(st, out.reg, cfg.controller)
                    mu = st.mu
                else:
                    mu = schedule(cfg, k, mu0)
                opt, theta = epoch(prob, opt, theta, mu, cfg.inner_steps)
                out = prob.evaluate(theta)
                if closed_loop:
                    st, shrank = ctl.setpoint_step(st, out.reg, out.ell, k, cfg.controller)
                    trace.append(EpochRecord(k, out.ell, out.reg, mu, st.b, shrank))
                else:
                    trace.append(EpochRecord(k, out.ell, out.reg, mu, None))
    except NumericError as exc:
        log.warning("run aborted at epoch %d: %s", k, exc)
        trace.meta["failed_epoch"] = k
        trace.meta["error"] = str(exc)
        return RunResult(trace, _selected(trace, closed_loop), trace.records[-1].ehv,
                         error=str(exc), failed_epoch=k)
    return RunResult(trace, _selected(trace, closed_loop), trace.records[-1].ehv)


def _selected(trace: Trace, closed_loop: bool) -> int:
    # open-loop baselines have no setpoint; their model is the last one trained
    return select_model(trace) if closed_loop else trace.records[-1].k


# ---------------------------------------------------------------------------
# grid comparison
# ---------------------------------------------------------------------------

def iqr(values) -> float:
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return float("nan")
    q75, q25 = np.percentile(v, [75, 25])
    return float(q75 - q25)


@dataclass
class Cell:
    scheme: str
    config_index: int
    seed: int
    config: SchemeConfig
    result: RunResult | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None and self.result is not None and self.result.ok

    def row(self) -> dict:
        c = self.config
        row = {
            "scheme": self.scheme,
            "config": self.config_index,
            "seed": self.seed,
            "mu0": json.dumps(np.asarray(c.mu0).tolist()),
            "rho": c.controller.rho if c.scheme == "mhof" else "",
            "eta": c.controller.eta if c.scheme == "mhof" else "",
            "status": "ok" if self.ok else "failed",
            "error": self.error or (self.result.error if self.result else "") or "",
        }
        res = self.result
        if res is not None and res.trace.records:
            final = res.trace.records[-1]
            sel = res.trace.records[res.selected_epoch]
            row.update({
                "final_epoch": final.k,
                "final_ell": final.ell,
                "final_reg": json.dumps(final.reg.tolist()),
                "ehv": final.ehv,
                "selected_epoch": sel.k,
                "selected_ell": sel.ell,
                "selected_reg": json.dumps(sel.reg.tolist()),
                "shrinks": len(res.trace.shrink_epochs()),
            })
        return row


@dataclass
class Comparison:
    cells: list
    dispersion: dict

    def rows(self) -> list[dict]:
        return [c.row() for c in self.cells]


def _run_cell(spec: ProblemSpec, opt: OptimizerState, cfg: SchemeConfig, seed: int):
    try:
        return run(spec, opt, cfg, seed), None
    except Exception as exc:  # a broken cell must not take down the grid
        return None, f"{type(exc).__name__}: {exc}"


def grid_compare(prob, opt: OptimizerState, grids: dict, seeds: Sequence[int],
                 parallelism: int = 1) -> Comparison:
    """Run every (scheme config, seed) cell and summarise dispersion.

    Cells are ordered by (scheme in ``grids`` order, config index, seed), and
    that order is independent of ``parallelism``.
    """
    if not grids or not any(grids.values()):
        raise ConfigError("grid is empty", field="schemes")
    if not seeds:
        raise ConfigError("no seeds given", field="seeds")
    spec = prob if isinstance(prob, ProblemSpec) else prob.spec
    cells = [Cell(scheme, i, int(s), cfg)
             for scheme, cfgs in grids.items()
             for i, cfg in enumerate(cfgs)
             for s in seeds]
    if parallelism <= 1 or len(cells) == 1:
        outcomes = [_run_cell(spec, opt, c.config, c.seed) for c in cells]
    else:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            futures = [pool.submit(_run_cell, spec, opt, c.config, c.seed) for c in cells]
            outcomes = [f.result() for f in futures]
    for cell, (res, err) in zip(cells, outcomes):
        cell.result, cell.error = res, err
    return Comparison(cells, _dispersion(cells))


def _dispersion(cells) -> dict:
    out = {}
    for scheme in dict.fromkeys(c.scheme for c in cells):
        mine = [c for c in cells if c.scheme == scheme]
        ok = [c for c in mine if c.ok]
        sel = [c.result.trace.records[c.result.selected_epoch].ell for c in ok]
        fin = [c.result.trace.records[-1].ell for c in ok]
        out[scheme] = {
            "cells": len(mine),
            "failed": len(mine) - len(ok),
            "iqr_selected_ell": iqr(sel),
            "iqr_final_ell": iqr(fin),
            "median_selected_ell": float(np.median(sel)) if sel else float("nan"),
            "median_final_ell": float(np.median(fin)) if fin else float("nan"),
        }
    return out
