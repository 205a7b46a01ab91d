"""Hot numeric kernels with a numba path and a pure-numpy fallback.

Set ``MHOF_DISABLE_NUMBA=1`` before import to force the numpy path. Both paths
are exercised by the test-suite and compared in ``benchmarks/bench_kernels.py``.
"""

import os

import numpy as np

_DISABLED = os.environ.get("MHOF_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError
    from numba import njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - depends on environment
    HAVE_NUMBA = False

BACKEND = "numba" if HAVE_NUMBA else "numpy"

# splitmix64 constants
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_TO_UNIT = 1.0 / 9007199254740992.0  # 2**-53


# ---------------------------------------------------------------------------
# numpy reference implementations
# ---------------------------------------------------------------------------

def nondominated_mask_np(pts):
    """Mask of points not weakly dominated by another point.

    Among componentwise-equal duplicates only the first occurrence survives.
    """
    n = pts.shape[0]
    if n == 0:
        return np.zeros(0, dtype=np.bool_)
    le = np.all(pts[:, None, :] <= pts[None, :, :], axis=2)  # le[j, i]: j dominates i
    eq = le & le.T
    strict = le & ~eq
    earlier = np.tri(n, k=-1, dtype=np.bool_)  # earlier[i, j] true iff j < i
    dup_of_earlier = np.any(eq & earlier, axis=1)
    return ~(strict.any(axis=0) | dup_of_earlier)


def hv2d_np(pts, ref):
    if pts.shape[0] == 0:
        return 0.0
    order = np.argsort(pts[:, 0], kind="mergesort")
    x = pts[order, 0]
    y = pts[order, 1]
    prev = np.minimum.accumulate(np.concatenate(([ref[1]], y)))[:-1]
    gain = np.maximum(prev - y, 0.0)
    return float(np.sum((ref[0] - x) * gain))


def hv_np(pts, ref):
    n, dim = pts.shape
    if n == 0:
        return 0.0
    if dim == 1:
        return float(ref[0] - pts[:, 0].min())
    if dim == 2:
        return hv2d_np(pts, ref)
    order = np.argsort(pts[:, dim - 1], kind="mergesort")
    s = pts[order]
    tops = np.append(s[1:, dim - 1], ref[dim - 1])
    vol = 0.0
    for i in range(n):
        h = tops[i] - s[i, dim - 1]
        if h > 0.0:
            sub = s[: i + 1, : dim - 1]
            sub = sub[nondominated_mask_np(sub)]
            vol += hv_np(sub, ref[: dim - 1]) * h
    return vol


def _splitmix64_np(x):
    with np.errstate(over="ignore"):
        z = x + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))


def uniform_np(seed, start, count, dim):
    """Counter-based uniforms in [0, 1): sample ``i``, coordinate ``j`` hashes
    counter ``(start + i) * dim + j`` under the given seed."""
    key = _splitmix64_np(np.uint64(seed & 0xFFFFFFFFFFFFFFFF))
    ctr = (np.arange(start, start + count, dtype=np.uint64)[:, None] * np.uint64(dim)
           + np.arange(dim, dtype=np.uint64)[None, :])
    z = _splitmix64_np(ctr ^ key)
    return (z >> np.uint64(11)).astype(np.float64) * _TO_UNIT


def mc_count_np(pts, lo, hi, samples, seed, chunk=1 << 16):
    dim = pts.shape[1]
    span = hi - lo
    hits = 0
    for start in range(0, samples, chunk):
        m = min(chunk, samples - start)
        x = lo + uniform_np(seed, start, m, dim) * span
        dominated = np.zeros(m, dtype=np.bool_)
        for p in pts:
            dominated |= np.all(p <= x, axis=1)
        hits += int(dominated.sum())
    return hits


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def nondominated_mask_nb(pts):
        n, dim = pts.shape
        keep = np.ones(n, dtype=np.bool_)
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                le = True
                ge = True
                for c in range(dim):
                    if pts[j, c] > pts[i, c]:
                        le = False
                    if pts[j, c] < pts[i, c]:
                        ge = False
                if le and (not ge or j < i):
                    keep[i] = False
                    break
        return keep

    @njit(cache=True)
    def hv2d_nb(pts, ref):
        order = np.argsort(pts[:, 0], kind="mergesort")
        area = 0.0
        ymin = ref[1]
        for idx in order:
            y = pts[idx, 1]
            if y < ymin:
                area += (ref[0] - pts[idx, 0]) * (ymin - y)
                ymin = y
        return area

    @njit(cache=True)
    def hv_nb(pts, ref):
        n, dim = pts.shape
        if n == 0:
            return 0.0
        if dim == 1:
            return ref[0] - pts[:, 0].min()
        if dim == 2:
            return hv2d_nb(pts, ref)
        order = np.argsort(pts[:, dim - 1], kind="mergesort")
        s = pts[order]
        sub_ref = ref[: dim - 1].copy()
        vol = 0.0
        for i in range(n):
            top = ref[dim - 1] if i == n - 1 else s[i + 1, dim - 1]
            h = top - s[i, dim - 1]
            if h > 0.0:
                sub = s[: i + 1, : dim - 1].copy()
                sub = sub[nondominated_mask_nb(sub)]
                vol += hv_nb(sub, sub_ref) * h
        return vol

    @njit(cache=True)
    def _splitmix64_nb(x):
        z = x + np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))

    @njit(cache=True)
    def mc_count_nb(pts, lo, hi, samples, seed):
        n, dim = pts.shape
        key = _splitmix64_nb(np.uint64(seed))
        x = np.empty(dim)
        hits = 0
        for i in range(samples):
            base = np.uint64(i) * np.uint64(dim)
            for c in range(dim):
                z = _splitmix64_nb((base + np.uint64(c)) ^ key)
                x[c] = lo[c] + np.float64(z >> np.uint64(11)) * _TO_UNIT * (hi[c] - lo[c])
            for k in range(n):
                inside = True
                for c in range(dim):
                    if pts[k, c] > x[c]:
                        inside = False
                        break
                if inside:
                    hits += 1
                    break
        return hits


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

def _f64(a):
    # read-only inputs would compile a second signature of the recursive kernel
    return np.require(a, dtype=np.float64, requirements=("C", "W"))


def set_backend(name: str) -> str:
    """Switch dispatch between ``"numba"`` and ``"numpy"``; returns the old one."""
    global BACKEND
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is unavailable or disabled")
    old, BACKEND = BACKEND, name
    return old


def nondominated_mask(pts):
    pts = _f64(pts)
    if BACKEND == "numba" and pts.shape[0] > 0:
        return nondominated_mask_nb(pts)
    return nondominated_mask_np(pts)


def hv(pts, ref):
    """Dominated volume of ``pts`` (already clipped to ``ref``) up to ``ref``."""
    pts = _f64(pts)
    ref = _f64(ref)
    if pts.shape[0] == 0:
        return 0.0
    if BACKEND == "numba":
        return float(hv_nb(pts, ref))
    return hv_np(pts, ref)


def mc_count(pts, lo, hi, samples, seed):
    pts, lo, hi = _f64(pts), _f64(lo), _f64(hi)
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    if BACKEND == "numba":
        return int(mc_count_nb(pts, lo, hi, int(samples), np.uint64(seed)))
    return mc_count_np(pts, lo, hi, int(samples), seed)
