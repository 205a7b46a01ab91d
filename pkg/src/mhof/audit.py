"""Invariant checks on stored traces."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mhof.controller import (ellbound_diagnostic, longest_hypothesis_segment, regslide_check,
                             vector_slide_check)
from mhof.core import dominates
from mhof.schemes import select_model
from mhof.trace import Trace

# |log(mu * exp(x)) - log(mu)| can exceed |x| by a few ulps
LOG_RATE_TOL = 1e-12


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str = ""

    def line(self, label: str = "") -> str:
        head = "PASS" if self.passed else "FAIL"
        label = f"{label} " if label else ""
        return f"{head} {label}{self.name}" + (f": {self.detail}" if self.detail else "")


def _controller_cfg(trace: Trace) -> dict:
    scheme = trace.meta.get("scheme") or {}
    return scheme.get("controller") or {}


def is_closed_loop(trace: Trace) -> bool:
    return (trace.meta.get("scheme") or {}).get("scheme", "mhof") == "mhof"


def check_mu_bounds(trace: Trace) -> Check:
    mu = trace.matrix("mu")
    clip = _controller_cfg(trace).get("mu_clip", np.inf) if is_closed_loop(trace) else np.inf
    bad = np.flatnonzero(~np.all((mu > 0) & (mu <= clip), axis=1))
    return Check("mu-bounds", bad.size == 0, f"epochs {bad[:5].tolist()}" if bad.size else "")


def check_rate_limit(trace: Trace) -> Check:
    v_sat = _controller_cfg(trace).get("v_sat")
    if v_sat is None:
        return Check("mu-rate-limit", True, "not applicable")
    step = np.abs(np.diff(np.log(trace.matrix("mu")), axis=0))
    bad = np.flatnonzero(np.any(step > v_sat + LOG_RATE_TOL, axis=1)) + 1
    return Check("mu-rate-limit", bad.size == 0, f"epochs {bad[:5].tolist()}" if bad.size else "")


def check_setpoint_monotone(trace: Trace) -> Check:
    if any(r.b is None for r in trace.records):
        return Check("setpoint-monotonicity", True, "not applicable")
    b = trace.matrix("b")
    bad = np.flatnonzero(np.any(np.diff(b, axis=0) > 0, axis=1)) + 1
    return Check("setpoint-monotonicity", bad.size == 0, f"epochs {bad[:5].tolist()}" if bad.size else "")


def check_ehv_monotone(trace: Trace) -> Check:
    ehv = trace.column("ehv")
    bad = np.flatnonzero(np.diff(ehv) < 0) + 1
    ok = bad.size == 0 and ehv[0] == 0.0
    return Check("ehv-monotonicity", ok, f"epochs {bad[:5].tolist()}" if bad.size else "")


def shrink_descent_violations(trace: Trace) -> list[tuple[int, int]]:
    """Pairs (earlier, shrink) where the shrink epoch fails to dominate the
    earlier shrink epoch or epoch 0 with strictly smaller ell."""
    recs = trace.records
    anchors = [0]
    bad = []
    for k in trace.shrink_epochs():
        cur = recs[k]
        for j in anchors:
            prev = recs[j]
            if not (cur.ell < prev.ell and dominates(cur.reg, prev.reg)):
                bad.append((j, k))
        anchors.append(k)
    return bad


def check_shrink_descent(trace: Trace) -> Check:
    bad = shrink_descent_violations(trace)
    return Check("shrink-implies-descent", not bad, f"pairs {bad[:5]}" if bad else "")


def check_selection(trace: Trace) -> Check:
    if not is_closed_loop(trace):
        return Check("model-selection", True, "not applicable")
    sel = select_model(trace)
    if not trace.shrink_epochs():
        return Check("model-selection", sel == 0, f"selected {sel} without shrinks")
    s, z = trace.records[sel], trace.records[0]
    ok = s.ell < z.ell and dominates(s.reg, z.reg)
    return Check("model-selection", ok, "" if ok else f"epoch {sel} does not dominate epoch 0")


def regslide_pairs(trace: Trace):
    """Reports for consecutive epochs (scalar regularizer only)."""
    recs = trace.records
    return [(k, regslide_check((recs[k].objective(), recs[k].mu), (recs[k + 1].objective(), recs[k + 1].mu)))
            for k in range(len(recs) - 1)]


def check_regslide(trace: Trace) -> Check:
    if trace.d != 1:
        recs = trace.records
        bad = [k for k in range(len(recs) - 1)
               if vector_slide_check((recs[k].objective(), recs[k].mu),
                                     (recs[k + 1].objective(), recs[k + 1].mu)) is False]
        return Check("reg-slide", not bad, f"steps {bad[:5]}" if bad else "vector form")
    pairs = [(k, rep) for k, rep in regslide_pairs(trace) if rep.slider_holds]
    bad = [k for k, rep in pairs if not rep.claims_hold]
    return Check("reg-slide", not bad, f"{len(pairs)} slider steps" + (f", failing {bad[:5]}" if bad else ""))


def check_ellbound(trace: Trace, atol: float = 1e-9) -> Check:
    if trace.d != 1:
        return Check("ell-bound", True, "not applicable (d > 1)")
    seg = longest_hypothesis_segment(trace)
    if seg is None:
        return Check("ell-bound", True, "no hypothesis-satisfying segment")
    rep = ellbound_diagnostic(trace, *seg, atol=atol)
    return Check("ell-bound", bool(rep.bound_holds),
                 f"segment {seg[0]}..{seg[1]}, slack {rep.slack:.3g}")


ALL_CHECKS = (check_mu_bounds, check_rate_limit, check_setpoint_monotone, check_ehv_monotone,
              check_shrink_descent, check_selection, check_regslide, check_ellbound)


def audit(trace: Trace) -> list[Check]:
    return [fn(trace) for fn in ALL_CHECKS]
