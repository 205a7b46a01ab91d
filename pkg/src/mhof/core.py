"""Pareto-order mathematics: dominance, non-dominated filtering, hypervolume."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from mhof import _kernels
from mhof.errors import DimensionError


@dataclass(frozen=True)
class ObjectiveVector:
    """One observation of all loss terms: empirical risk ``ell`` and the
    regularization values ``reg``."""

    ell: float
    reg: np.ndarray

    def __post_init__(self):
        reg = np.array(self.reg, dtype=np.float64).reshape(-1)
        reg.setflags(write=False)
        object.__setattr__(self, "ell", float(self.ell))
        object.__setattr__(self, "reg", reg)
        if reg.size < 1:
            raise DimensionError("ObjectiveVector needs at least one regularizer value")
        if not np.isfinite(self.ell) or not np.all(np.isfinite(reg)):
            raise ValueError(f"non-finite objective vector: ell={self.ell}, reg={reg.tolist()}")

    @property
    def d(self) -> int:
        return self.reg.size

    def as_array(self) -> np.ndarray:
        return np.concatenate(([self.ell], self.reg))

    def __eq__(self, other):
        if not isinstance(other, ObjectiveVector):
            return NotImplemented
        return self.ell == other.ell and np.array_equal(self.reg, other.reg)

    def __hash__(self):
        return hash((self.ell, self.reg.tobytes()))


@dataclass(frozen=True)
class RefPoint:
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64).reshape(-1)
        v.setflags(write=False)
        if not np.all(np.isfinite(v)):
            raise ValueError("reference point must be finite")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_objective(cls, ov: ObjectiveVector) -> "RefPoint":
        return cls(ov.as_array())

    @property
    def dim(self) -> int:
        return self.values.size


@dataclass
class Archive:
    """Visited outputs in epoch order. Append-only; duplicates allowed."""

    points: list = field(default_factory=list)

    def append(self, ov: ObjectiveVector) -> None:
        if self.points and ov.d != self.points[0].d:
            raise DimensionError(f"archive holds d={self.points[0].d}, got d={ov.d}")
        self.points.append(ov)

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def as_array(self) -> np.ndarray:
        if not self.points:
            return np.zeros((0, 0))
        return np.stack([p.as_array() for p in self.points])


def _vec(u) -> np.ndarray:
    if isinstance(u, ObjectiveVector):
        return u.as_array()
    return np.asarray(u, dtype=np.float64).reshape(-1)


def _same_len(u: np.ndarray, v: np.ndarray) -> None:
    if u.shape != v.shape:
        raise DimensionError(f"length mismatch: {u.size} vs {v.size}")


def dominates(u, v) -> bool:
    """True iff every component of ``u`` is <= the matching component of ``v``.

    This is the weak (reflexive) relation: ``dominates(x, x)`` holds.
    """
    u, v = _vec(u), _vec(v)
    _same_len(u, v)
    return bool(np.all(u <= v))


def equivalent(u, v) -> bool:
    """Mutual non-dominance."""
    u, v = _vec(u), _vec(v)
    _same_len(u, v)
    return not np.all(u <= v) and not np.all(v <= u)


def pareto_filter(arch: Archive | Iterable[ObjectiveVector]) -> list[ObjectiveVector]:
    """Points of ``arch`` not dominated by any other point, in archive order.

    Among componentwise-equal points the earliest one is kept.
    """
    pts = list(arch)
    if not pts:
        return []
    mat = np.stack([p.as_array() for p in pts])
    keep = _kernels.nondominated_mask(mat)
    return [p for p, k in zip(pts, keep) if k]


def _as_matrix(points, dim: int) -> np.ndarray:
    if isinstance(points, np.ndarray):
        mat = np.asarray(points, dtype=np.float64)
        if mat.size == 0:
            return np.zeros((0, dim))
    else:
        rows = [_vec(p) for p in points]
        if not rows:
            return np.zeros((0, dim))
        if any(r.size != dim for r in rows):
            bad = next(r.size for r in rows if r.size != dim)
            raise DimensionError(f"point of dimension {bad} against reference of dimension {dim}")
        mat = np.stack(rows)
    if mat.ndim != 2 or mat.shape[1] != dim:
        raise DimensionError(f"points of shape {mat.shape} against reference of dimension {dim}")
    return mat


def _ref_values(ref) -> np.ndarray:
    return ref.values if isinstance(ref, RefPoint) else RefPoint(ref).values


def _clip(mat: np.ndarray, ref: np.ndarray) -> np.ndarray:
    # Coordinates worse than the reference collapse onto its boundary, giving
    # zero-width boxes; points equal to ref in some coordinate add nothing.
    mat = np.minimum(mat, ref)
    return mat[np.all(mat < ref, axis=1)]


def hypervolume(points, ref) -> float:
    """Exact measure of the union of boxes ``[p, ref]`` (minimization).

    Computed by recursive dimension sweep: sort on the last coordinate, slice,
    recurse on the remaining coordinates.
    """
    r = _ref_values(ref)
    mat = _clip(_as_matrix(points, r.size), r)
    if mat.shape[0] == 0:
        return 0.0
    mat = mat[_kernels.nondominated_mask(mat)]
    return max(_kernels.hv(mat, r), 0.0)


def hypervolume_mc(points, ref, samples: int, seed: int) -> tuple[float, float]:
    """Monte-Carlo estimate of :func:`hypervolume` with its binomial standard
    error. Samples come from a seeded counter-based generator, so repeated
    calls are bit-identical."""
    if samples <= 0:
        raise ValueError("samples must be positive")
    r = _ref_values(ref)
    mat = _clip(_as_matrix(points, r.size), r)
    if mat.shape[0] == 0:
        return 0.0, 0.0
    lo = mat.min(axis=0)
    box = float(np.prod(r - lo))
    if box <= 0.0:
        return 0.0, 0.0
    hits = _kernels.mc_count(mat, lo, r, samples, seed)
    frac = hits / samples
    return box * frac, box * float(np.sqrt(frac * (1.0 - frac) / samples))


def ehv_of_archive(arch: Archive | Sequence[ObjectiveVector], ref) -> float:
    """Dominated hypervolume of the archive's non-dominated points relative to
    ``ref`` (the epoch-0 output of the run)."""
    front = pareto_filter(arch)
    if not front:
        return 0.0
    return hypervolume([p.as_array() for p in front], ref)


class HypervolumeTracker:
    """Running dominated hypervolume of a growing point set.

    Each insertion adds the new point's exclusive contribution, so the value is
    non-decreasing by construction. Agrees with :func:`ehv_of_archive` up to
    floating-point summation order.
    """

    def __init__(self, ref):
        self.ref = _ref_values(ref)
        self.front = np.zeros((0, self.ref.size))
        self.value = 0.0

    def add(self, point) -> float:
        q = np.minimum(_vec(point), self.ref)
        if q.size != self.ref.size:
            raise DimensionError(f"point of dimension {q.size} against reference of dimension {self.ref.size}")
        if np.any(q >= self.ref):
            return self.value
        front = self.front
        if front.shape[0] and np.any(np.all(front <= q, axis=1)):
            return self.value
        own = float(np.prod(self.ref - q))
        if front.shape[0]:
            limited = np.maximum(front, q)
            limited = limited[np.all(limited < self.ref, axis=1)]
            if limited.shape[0]:
                limited = limited[_kernels.nondominated_mask(limited)]
                own -= _kernels.hv(limited, self.ref)
            front = front[~np.all(q <= front, axis=1)]
        self.front = np.vstack([front, q])
        self.value += max(own, 0.0)
        return self.value
