"""Synthetic multi-term problems and the low-level optimizers that drive them.

Two problem kinds:

``quadratic``
    ``ell = 0.5 |theta - a|^2`` and ``R_i = 0.5 |theta - c_i|^2``. The penalized
    minimizer is ``(a + sum mu_i c_i) / (1 + sum mu_i)``.
``toy-mlp``
    One tanh hidden layer with softmax output, trained full-batch on two
    Gaussian blobs. Regularizers are chosen from ``l2``, ``l1`` (smoothed),
    and ``act`` (mean squared hidden activation).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from mhof.errors import ConfigError, DimensionError, NumericError

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
L1_SMOOTH = 1e-8
REGULARIZERS = ("l2", "l1", "act")


def counter_rng(seed: int) -> np.random.Generator:
    """Philox-backed generator; the stream is a pure function of ``seed``."""
    return np.random.Generator(np.random.Philox(key=int(seed) & 0xFFFFFFFFFFFFFFFF))


@dataclass(frozen=True)
class ProblemSpec:
    kind: str = "quadratic"
    d: int = 1
    # quadratic
    p: int = 4
    anchor: tuple | None = None
    centers: tuple | None = None
    seed: int = 0
    # toy-mlp
    hidden: int = 8
    n_per_class: int = 200
    regularizers: tuple = REGULARIZERS

    def validate(self) -> None:
        if self.kind not in ("quadratic", "toy-mlp"):
            raise ConfigError(f"unknown problem kind {self.kind!r}", field="problem.kind")
        if self.kind == "toy-mlp":
            if not self.regularizers or any(r not in REGULARIZERS for r in self.regularizers):
                raise ConfigError(f"regularizers must be a non-empty subset of {REGULARIZERS}",
                                  field="problem.regularizers")
            if len(set(self.regularizers)) != len(self.regularizers):
                raise ConfigError("duplicate regularizer", field="problem.regularizers")
            if self.d != len(self.regularizers):
                raise ConfigError(f"d={self.d} but {len(self.regularizers)} regularizers listed",
                                  field="problem.d")
            if self.hidden < 1 or self.n_per_class < 1:
                raise ConfigError("hidden and n_per_class must be positive", field="problem.hidden")
            return
        if self.d < 1:
            raise ConfigError("d must be >= 1", field="problem.d")
        if self.p < 1:
            raise ConfigError("p must be >= 1", field="problem.p")
        if self.anchor is not None and len(self.anchor) != self.p:
            raise ConfigError("anchor length must equal p", field="problem.anchor")
        if self.centers is not None:
            if len(self.centers) != self.d or any(len(c) != self.p for c in self.centers):
                raise ConfigError("centers must be d vectors of length p", field="problem.centers")

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


class QuadraticProblem:
    kind = "quadratic"

    def __init__(self, spec: ProblemSpec):
        self.spec = spec
        rng = counter_rng(spec.seed)
        anchor = rng.normal(size=spec.p) if spec.anchor is None else np.asarray(spec.anchor, float)
        centers = (rng.normal(size=(spec.d, spec.p)) * 2.0 if spec.centers is None
                   else np.asarray(spec.centers, float).reshape(spec.d, spec.p))
        pts = np.vstack([anchor, centers])
        for i in range(len(pts)):
            for j in range(i + 1, len(pts)):
                if np.array_equal(pts[i], pts[j]):
                    raise ConfigError("quadratic anchors must be pairwise distinct", field="problem.centers")
        self.anchor = anchor
        self.centers = centers
        self.p = spec.p
        self.d = spec.d

    def init_theta(self, seed: int) -> np.ndarray:
        rng = counter_rng(seed)
        middle = np.vstack([self.anchor, self.centers]).mean(axis=0)
        return middle + 3.0 * rng.normal(size=self.p)

    def evaluate(self, theta):
        from mhof.core import ObjectiveVector

        theta = _check_theta(self, theta)
        ell = 0.5 * float(np.sum((theta - self.anchor) ** 2))
        reg = 0.5 * np.sum((theta[None, :] - self.centers) ** 2, axis=1)
        _require_finite(ell, reg, ("R_%d" % i for i in range(self.d)))
        return ObjectiveVector(ell, reg)

    def grad_penalized(self, theta, mu) -> np.ndarray:
        theta = _check_theta(self, theta)
        mu = _check_mu(self, mu)
        g = (theta - self.anchor) + mu @ (theta[None, :] - self.centers)
        if not np.all(np.isfinite(g)):
            raise NumericError("non-finite gradient of penalized loss", term="grad")
        return g

    def minimizer(self, mu) -> np.ndarray:
        mu = _check_mu(self, mu)
        return (self.anchor + mu @ self.centers) / (1.0 + mu.sum())


class ToyMLP:
    """Two-class classifier ``x -> softmax(W2 tanh(W1 x + b1) + b2)``.

    ``theta`` packs ``W1 (h, 2)``, ``b1 (h,)``, ``W2 (2, h)``, ``b2 (2,)`` in
    that order.
    """

    kind = "toy-mlp"

    def __init__(self, spec: ProblemSpec):
        self.spec = spec
        self.h = spec.hidden
        self.d = len(spec.regularizers)
        self.regularizers = tuple(spec.regularizers)
        self.p = 2 * self.h + self.h + 2 * self.h + 2
        self.X, self.y = make_blobs(spec.seed, spec.n_per_class)
        # weight entries only; biases are not regularized
        mask = np.zeros(self.p, dtype=bool)
        mask[: 2 * self.h] = True
        mask[3 * self.h: 5 * self.h] = True
        self.weight_mask = mask

    def unpack(self, theta):
        h = self.h
        W1 = theta[: 2 * h].reshape(h, 2)
        b1 = theta[2 * h: 3 * h]
        W2 = theta[3 * h: 5 * h].reshape(2, h)
        b2 = theta[5 * h:]
        return W1, b1, W2, b2

    def init_theta(self, seed: int) -> np.ndarray:
        rng = counter_rng(seed)
        theta = 0.5 * rng.normal(size=self.p)
        theta[~self.weight_mask] = 0.0
        return theta

    def _forward(self, theta):
        W1, b1, W2, b2 = self.unpack(theta)
        H = np.tanh(self.X @ W1.T + b1)
        Z = H @ W2.T + b2
        Z = Z - Z.max(axis=1, keepdims=True)
        logp = Z - np.log(np.exp(Z).sum(axis=1, keepdims=True))
        return H, logp

    def _reg_values(self, theta, H):
        w = theta[self.weight_mask]
        vals = {
            "l2": 0.5 * float(w @ w),
            "l1": float(np.sum(np.sqrt(w * w + L1_SMOOTH))),
            "act": float(np.mean(H * H)),
        }
        return np.array([vals[r] for r in self.regularizers])

    def evaluate(self, theta):
        from mhof.core import ObjectiveVector

        theta = _check_theta(self, theta)
        H, logp = self._forward(theta)
        ell = -float(np.mean(logp[np.arange(self.y.size), self.y]))
        reg = self._reg_values(theta, H)
        _require_finite(ell, reg, self.regularizers)
        return ObjectiveVector(ell, reg)

    def grad_penalized(self, theta, mu) -> np.ndarray:
        theta = _check_theta(self, theta)
        mu = _check_mu(self, mu)
        weights = dict(zip(self.regularizers, mu))
        W1, b1, W2, b2 = self.unpack(theta)
        n = self.y.size
        H, logp = self._forward(theta)
        # cross-entropy backward
        dZ = np.exp(logp)
        dZ[np.arange(n), self.y] -= 1.0
        dZ /= n
        dW2 = dZ.T @ H
        db2 = dZ.sum(axis=0)
        dH = dZ @ W2
        if "act" in weights:
            dH = dH + weights["act"] * 2.0 * H / H.size
        dA = dH * (1.0 - H * H)
        dW1 = dA.T @ self.X
        db1 = dA.sum(axis=0)
        g = np.concatenate([dW1.ravel(), db1, dW2.ravel(), db2])
        w = theta[self.weight_mask]
        if "l2" in weights:
            g[self.weight_mask] += weights["l2"] * w
        if "l1" in weights:
            g[self.weight_mask] += weights["l1"] * w / np.sqrt(w * w + L1_SMOOTH)
        if not np.all(np.isfinite(g)):
            raise NumericError("non-finite gradient of penalized loss", term="grad")
        return g


def make_blobs(seed: int, n_per_class: int):
    """Two 2-D Gaussian blobs centred at (-1, -1) and (1, 1), unit variance."""
    rng = counter_rng(seed)
    X0 = rng.normal(size=(n_per_class, 2)) + np.array([-1.0, -1.0])
    X1 = rng.normal(size=(n_per_class, 2)) + np.array([1.0, 1.0])
    X = np.vstack([X0, X1])
    y = np.concatenate([np.zeros(n_per_class, dtype=np.int64), np.ones(n_per_class, dtype=np.int64)])
    return X, y


def make_problem(spec: ProblemSpec):
    spec.validate()
    if spec.kind == "quadratic":
        return QuadraticProblem(spec)
    return ToyMLP(spec)


def _check_theta(prob, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    if theta.size != prob.p:
        raise DimensionError(f"theta has length {theta.size}, problem expects {prob.p}")
    return theta


def _check_mu(prob, mu) -> np.ndarray:
    mu = np.asarray(mu, dtype=np.float64).reshape(-1)
    if mu.size != prob.d:
        raise DimensionError(f"mu has length {mu.size}, problem expects {prob.d}")
    return mu


def _require_finite(ell, reg, names) -> None:
    if not np.isfinite(ell):
        raise NumericError(f"non-finite value in term ell: {ell}", term="ell")
    for name, v in zip(names, reg):
        if not np.isfinite(v):
            raise NumericError(f"non-finite value in term {name}: {v}", term=name)


def evaluate(prob, theta):
    return prob.evaluate(theta)


def grad_penalized(prob, theta, mu):
    return prob.grad_penalized(theta, mu)


# ---------------------------------------------------------------------------
# optimizers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OptimizerState:
    kind: str = "adam"
    lr: float = 0.05
    m: np.ndarray | None = field(default=None, compare=False)
    v: np.ndarray | None = field(default=None, compare=False)
    t: int = 0

    def validate(self) -> None:
        if self.kind not in ("sgd", "adam"):
            raise ConfigError(f"unknown optimizer {self.kind!r}", field="optimizer.kind")
        if not self.lr > 0:
            raise ConfigError(f"lr must be positive, got {self.lr}", field="optimizer.lr")

    def fresh(self) -> "OptimizerState":
        return OptimizerState(self.kind, self.lr)


def optimizer_step(opt: OptimizerState, theta, grad):
    theta = np.asarray(theta, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != theta.shape:
        raise DimensionError(f"gradient shape {grad.shape} != parameter shape {theta.shape}")
    if opt.kind == "sgd":
        return opt, theta - opt.lr * grad
    m = np.zeros_like(theta) if opt.m is None else opt.m
    v = np.zeros_like(theta) if opt.v is None else opt.v
    t = opt.t + 1
    m = ADAM_BETA1 * m + (1.0 - ADAM_BETA1) * grad
    v = ADAM_BETA2 * v + (1.0 - ADAM_BETA2) * grad * grad
    m_hat = m / (1.0 - ADAM_BETA1 ** t)
    v_hat = v / (1.0 - ADAM_BETA2 ** t)
    theta = theta - opt.lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return replace(opt, m=m, v=v, t=t), theta


def epoch(prob, opt: OptimizerState, theta, mu, inner_steps: int = 5):
    """``inner_steps`` full-batch optimizer steps with ``mu`` held fixed."""
    if inner_steps < 1:
        raise ValueError("inner_steps must be >= 1")
    theta = np.asarray(theta, dtype=np.float64)
    for _ in range(inner_steps):
        g = prob.grad_penalized(theta, mu)
        opt, theta = optimizer_step(opt, theta, g)
        if not np.all(np.isfinite(theta)):
            raise NumericError("parameters became non-finite", term="theta")
    return opt, theta
