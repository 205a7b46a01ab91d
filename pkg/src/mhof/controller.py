"""Hierarchical multiplier controller.

Two levels:

* a PI-like law that multiplies each multiplier by ``exp(K_I * delta_I)``,
  with the exponent clamped to ``[-v_sat, v_sat]`` and the result capped at
  ``mu_clip``;
* a setpoint ``b`` that only moves when the measured regularizers dominate it
  and the empirical risk reaches a new running minimum.

States are immutable; every step returns a new :class:`ControllerState`.
"""

from __future__ import annotations

import logging
from fractions import Fraction
from dataclasses import dataclass, field, replace

import numpy as np

from mhof.core import ObjectiveVector, dominates
from mhof.errors import ConfigError, DimensionError

log = logging.getLogger(__name__)

GAIN_EPS = 1e-12
MU_FLOOR = np.finfo(np.float64).tiny


@dataclass(frozen=True)
class ControllerConfig:
    rho: float = 0.9
    eta: float = 0.5
    v_sat: float = 1.0
    mu_clip: float = 1e4
    xi_d: float = 0.5
    smoothing_enabled: bool = False
    xi_o: float = 0.1
    xi_r: float = 0.9

    def validate(self, mu0=None) -> None:
        def open_unit(name):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ConfigError(f"{name} must lie in (0, 1), got {v}", field=name)

        def closed_unit(name):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}", field=name)

        open_unit("rho")
        open_unit("eta")
        for name in ("xi_d", "xi_o", "xi_r"):
            closed_unit(name)
        if not self.v_sat > 0:
            raise ConfigError(f"v_sat must be positive, got {self.v_sat}", field="v_sat")
        if not self.mu_clip > 0:
            raise ConfigError(f"mu_clip must be positive, got {self.mu_clip}", field="mu_clip")
        if mu0 is not None and np.any(np.asarray(mu0) > self.mu_clip):
            raise ConfigError("mu_clip must be >= every mu0 component", field="mu_clip")


@dataclass(frozen=True)
class ControllerState:
    mu: np.ndarray
    b: np.ndarray
    K_I: np.ndarray
    delta_I: np.ndarray
    ell_min: float
    O_R: np.ndarray
    r: np.ndarray
    # Last committed shrink value; equals b unless smoothing is on.
    target: np.ndarray
    shrink_epochs: tuple = field(default=())

    @property
    def d(self) -> int:
        return self.mu.size


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64).reshape(-1)
    a.setflags(write=False)
    return a


def init(R0, ell0: float, mu0, cfg: ControllerConfig) -> ControllerState:
    """Initial state: ``b = rho * R0`` and gains normalised so that the first
    full error ``R0 - b`` maps to an exponent of ``eta * v_sat``."""
    R0 = _frozen(R0)
    mu0 = _frozen(np.broadcast_to(np.asarray(mu0, dtype=np.float64), R0.shape))
    if not np.all(np.isfinite(R0)):
        raise ValueError("R0 must be finite")
    if np.any(mu0 <= 0):
        raise ConfigError("every mu0 component must be positive", field="mu0")
    cfg.validate(mu0)
    b = _frozen(cfg.rho * R0)
    delta0 = R0 - b
    mag = np.abs(delta0)
    if np.any(mag < GAIN_EPS):
        log.warning("initial error is zero for components %s; using gain floor",
                    np.flatnonzero(mag < GAIN_EPS).tolist())
    K_I = _frozen(cfg.eta * cfg.v_sat / np.maximum(mag, GAIN_EPS))
    return ControllerState(
        mu=mu0,
        b=b,
        K_I=K_I,
        delta_I=_frozen(np.zeros_like(R0)),
        ell_min=float(ell0),
        O_R=R0,
        r=b,
        target=b,
    )


def _check_dim(st: ControllerState, R) -> np.ndarray:
    R = np.asarray(R, dtype=np.float64).reshape(-1)
    if R.size != st.d:
        raise DimensionError(f"expected {st.d} regularizer values, got {R.size}")
    return R


def smoothed_output(st: ControllerState, R_k, cfg: ControllerConfig) -> np.ndarray:
    return cfg.xi_o * st.O_R + (1.0 - cfg.xi_o) * np.asarray(R_k, dtype=np.float64)


def mu_step(st: ControllerState, R_k, cfg: ControllerConfig) -> ControllerState:
    R_k = _check_dim(st, R_k)
    if cfg.smoothing_enabled:
        O_R = smoothed_output(st, R_k, cfg)
        e = O_R - st.b
    else:
        O_R = st.O_R
        e = R_k - st.b
    delta_I = (1.0 - cfg.xi_d) * st.delta_I + cfg.xi_d * e
    exponent = np.clip(st.K_I * delta_I, -cfg.v_sat, cfg.v_sat)
    mu = np.clip(st.mu * np.exp(exponent), MU_FLOOR, cfg.mu_clip)
    return replace(st, mu=_frozen(mu), delta_I=_frozen(delta_I), O_R=_frozen(O_R))


def setpoint_step(st: ControllerState, R_k, ell_k: float, epoch: int,
                  cfg: ControllerConfig) -> tuple[ControllerState, bool]:
    """Shrink the setpoint on Pareto descent.

    Shrinks iff the (smoothed, when enabled) output dominates the current
    setpoint and ``ell_k`` is strictly below every earlier ``ell``.
    ``ell_min`` tracks the all-epoch running minimum.
    """
    if epoch < 1:
        raise ValueError("setpoint_step needs epoch >= 1")
    R_k = _check_dim(st, R_k)
    ell_k = float(ell_k)
    measured = smoothed_output(st, R_k, cfg) if cfg.smoothing_enabled else R_k
    shrank = dominates(measured, st.b) and ell_k < st.ell_min
    ell_min = min(st.ell_min, ell_k)
    target = _frozen(measured) if shrank else st.target
    shrink_epochs = st.shrink_epochs + (epoch,) if shrank else st.shrink_epochs
    if cfg.smoothing_enabled:
        # target <= r always holds, so r only ever moves down
        r = _frozen(cfg.xi_r * st.r + (1.0 - cfg.xi_r) * target)
        b = r
    else:
        r = target
        b = target
    new = replace(st, b=b, r=r, target=target, ell_min=ell_min, shrink_epochs=shrink_epochs)
    return new, shrank


# ---------------------------------------------------------------------------
# descent diagnostics
# ---------------------------------------------------------------------------

# The slider inequalities compare sums that agree to the last few bits once a
# run has converged, so floating-point evaluation flips them on rounding noise.
# Every float is an exact rational; evaluating on Fractions makes the checks
# below exact statements about the recorded values.

def _q(x) -> Fraction:
    return Fraction(float(x))


def _qvec(a) -> list:
    return [Fraction(float(x)) for x in np.asarray(a).reshape(-1)]


def _qdot(u, v) -> Fraction:
    return sum((a * b for a, b in zip(u, v)), Fraction(0))


@dataclass(frozen=True)
class RegSlideReport:
    improve_new: bool
    deteriorate_old: bool
    mu_increase: bool
    slider_holds: bool
    # margins are >= 0 when the corresponding claim holds
    r_decrease_margin: float
    ell_increase_margin: float
    bound_margin: float
    claims_hold: bool | None


def _unpack(pair):
    ov, mu = pair
    if not isinstance(ov, ObjectiveVector):
        ov = ObjectiveVector(ov[0], ov[1])
    mu = np.asarray(mu, dtype=np.float64).reshape(-1)
    return ov, mu


def regslide_check(prev, nxt) -> RegSlideReport:
    """Check one step against the reg-Pareto slider conditions (scalar case).

    ``prev`` and ``nxt`` are ``(ObjectiveVector, mu)`` pairs where ``mu`` is the
    multiplier that produced that parameter state. Evaluated exactly.
    """
    (o0, m0), (o1, m1) = _unpack(prev), _unpack(nxt)
    if o0.d != 1 or o1.d != 1 or m0.size != 1 or m1.size != 1:
        raise DimensionError("reg-slide check is defined for a single regularizer only")
    l0, l1 = _q(o0.ell), _q(o1.ell)
    r0, r1 = _q(o0.reg[0]), _q(o1.reg[0])
    mu0, mu1 = _q(m0[0]), _q(m1[0])
    improve = l1 + mu1 * r1 <= l0 + mu1 * r0
    deteriorate = l1 + mu0 * r1 >= l0 + mu0 * r0
    increase = mu1 >= mu0
    holds = improve and deteriorate and increase
    r_margin = r0 - r1
    ell_margin = l1 - l0
    bound = mu1 * (r0 - r1) - (l1 - l0)
    claims = (r_margin >= 0 and ell_margin >= 0 and bound >= 0) if holds else None
    return RegSlideReport(improve, deteriorate, increase, holds,
                          float(r_margin), float(ell_margin), float(bound), claims)


def vector_slide_check(prev, nxt) -> bool | None:
    """Weaker multi-regularizer claim: when every multiplier component grows and
    both slider inequalities hold, some regularizer component did not increase.

    Returns ``None`` when the hypothesis is not met.
    """
    (o0, m0), (o1, m1) = _unpack(prev), _unpack(nxt)
    if not np.all(m1 > m0):
        return None
    l0, l1 = _q(o0.ell), _q(o1.ell)
    r0, r1 = _qvec(o0.reg), _qvec(o1.reg)
    q0, q1 = _qvec(m0), _qvec(m1)
    improve = l1 + _qdot(q1, r1) <= l0 + _qdot(q1, r0)
    deteriorate = l1 + _qdot(q0, r1) >= l0 + _qdot(q0, r0)
    if not (improve and deteriorate):
        return None
    return bool(np.any(o1.reg <= o0.reg))


@dataclass(frozen=True)
class EllBoundReport:
    start: int
    end: int
    k_gt: tuple
    k_lt: tuple
    k_lt_plus: tuple
    k_lt_minus: tuple
    S_gt: np.ndarray
    S_lt: np.ndarray
    S_lt_plus: np.ndarray
    S_lt_minus: np.ndarray
    hypothesis_violations: tuple
    ell_start: float
    ell_end: float
    bound_rhs: float
    # None when the bound is not asserted (d > 1 or hypothesis violated)
    bound_holds: bool | None
    slack: float


class _ExactSeries:
    def __init__(self, trace):
        recs = trace.records
        self.ell = [_q(r.ell) for r in recs]
        self.reg = [_qvec(r.reg) for r in recs]
        self.mu = [_qvec(r.mu) for r in recs]
        self.d = recs[0].reg.size

    def __len__(self):
        return len(self.ell)

    def penalized(self, k, mu_index):
        return self.ell[k] + _qdot(self.mu[mu_index], self.reg[k])

    def hypothesis(self, k) -> bool:
        # improvement under the new multiplier, multiplier non-decreasing
        improve = self.penalized(k + 1, k + 1) <= self.penalized(k, k + 1)
        return improve and all(b >= a for a, b in zip(self.mu[k], self.mu[k + 1]))


def ellbound_diagnostic(trace, start: int = 0, end: int | None = None,
                        atol: float = 1e-9) -> EllBoundReport:
    """Accumulated-change bound on ``ell`` over records ``start..end``.

    Splits steps by whether the old-multiplier penalized loss deteriorated,
    sums the multiplier-weighted regularizer decreases of each group, and
    asserts ``ell[end] <= ell[start] + S_gt + S_lt`` when the per-step
    hypothesis held throughout (scalar case only).
    """
    ser = _ExactSeries(trace)
    n = len(ser)
    end = n - 1 if end is None else end
    if not 0 <= start < end < n:
        raise ValueError(f"need 0 <= start < end < {n}, got start={start}, end={end}")
    d = ser.d
    groups = {name: [] for name in ("gt", "lt", "lt_plus", "lt_minus")}
    sums = {name: [Fraction(0)] * d for name in groups}
    bad = []

    def add(name, k, weights, dR):
        groups[name].append(k)
        sums[name] = [s + w * x for s, w, x in zip(sums[name], weights, dR)]

    for k in range(start, end):
        dR = [a - b for a, b in zip(ser.reg[k], ser.reg[k + 1])]
        if ser.penalized(k + 1, k) >= ser.penalized(k, k):
            add("gt", k, ser.mu[k + 1], dR)
        else:
            add("lt", k, ser.mu[k], dR)
            add("lt_minus" if ser.ell[k + 1] < ser.ell[k] else "lt_plus", k, ser.mu[k], dR)
        if not ser.hypothesis(k):
            bad.append(k)
    rhs = ser.ell[start] + sum(sums["gt"]) + sum(sums["lt"])
    slack = rhs - ser.ell[end]
    holds = None
    if d == 1 and not bad:
        holds = bool(slack >= -_q(atol))

    def arr(name):
        return np.array([float(x) for x in sums[name]])

    return EllBoundReport(
        start=start, end=end,
        k_gt=tuple(groups["gt"]), k_lt=tuple(groups["lt"]),
        k_lt_plus=tuple(groups["lt_plus"]), k_lt_minus=tuple(groups["lt_minus"]),
        S_gt=arr("gt"), S_lt=arr("lt"), S_lt_plus=arr("lt_plus"), S_lt_minus=arr("lt_minus"),
        hypothesis_violations=tuple(bad), ell_start=float(ser.ell[start]), ell_end=float(ser.ell[end]),
        bound_rhs=float(rhs), bound_holds=holds, slack=float(slack),
    )


def longest_hypothesis_segment(trace) -> tuple[int, int] | None:
    """Longest run of consecutive records over which every step satisfies the
    bound's hypothesis. Returns ``(start, end)`` record indices or ``None``."""
    ser = _ExactSeries(trace)
    best = None
    run_start = None
    for k in range(len(ser) - 1):
        if ser.hypothesis(k):
            if run_start is None:
                run_start = k
            seg = (run_start, k + 1)
            if best is None or seg[1] - seg[0] > best[1] - best[0]:
                best = seg
        else:
            run_start = None
    return best
