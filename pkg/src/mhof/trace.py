"""Per-epoch run records, line-delimited persistence, and the eHV series."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from mhof.core import HypervolumeTracker, ObjectiveVector
from mhof.errors import SchemaError, SequencingError, TraceParseError

RECORD_FIELDS = ("k", "ell", "reg", "mu", "b", "shrank", "ehv")


@dataclass
class EpochRecord:
    k: int
    ell: float
    reg: np.ndarray
    mu: np.ndarray
    b: np.ndarray | None  # None for open-loop schedules, which have no setpoint
    shrank: bool = False
    ehv: float | None = None

    def objective(self) -> ObjectiveVector:
        return ObjectiveVector(self.ell, self.reg)

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "ell": self.ell,
            "reg": self.reg.tolist(),
            "mu": self.mu.tolist(),
            "b": None if self.b is None else self.b.tolist(),
            "shrank": self.shrank,
            "ehv": self.ehv,
        }

    def same_as(self, other: "EpochRecord") -> bool:
        def eq(a, b):
            if a is None or b is None:
                return a is None and b is None
            return np.array_equal(a, b)

        return (self.k == other.k and self.ell == other.ell and self.shrank == other.shrank
                and self.ehv == other.ehv and eq(self.reg, other.reg) and eq(self.mu, other.mu)
                and eq(self.b, other.b))


class Trace:
    """Epoch records ``k = 0..B``. Record 0 is the reference point for eHV."""

    def __init__(self, meta: dict | None = None):
        self.meta = dict(meta or {})
        self.records: list[EpochRecord] = []
        self._hv: HypervolumeTracker | None = None

    def __len__(self):
        return len(self.records)

    @property
    def d(self) -> int | None:
        if self.records:
            return self.records[0].reg.size
        return self.meta.get("d")

    def append(self, rec: EpochRecord) -> EpochRecord:
        """Append ``rec``, filling its ``ehv`` from the archive so far."""
        expected = self.records[-1].k + 1 if self.records else 0
        if rec.k != expected:
            raise SequencingError(f"expected record k={expected}, got k={rec.k}")
        rec.reg = np.array(rec.reg, dtype=np.float64).reshape(-1)
        rec.mu = np.array(rec.mu, dtype=np.float64).reshape(-1)
        if rec.b is not None:
            rec.b = np.array(rec.b, dtype=np.float64).reshape(-1)
        d = self.d
        if d is not None and rec.reg.size != d:
            raise SchemaError(f"record k={rec.k} has {rec.reg.size} regularizers, trace has d={d}")
        ov = rec.objective()
        if rec.k == 0:
            if rec.shrank:
                raise SequencingError("record 0 cannot be a shrink event")
            self._hv = HypervolumeTracker(ov.as_array())
            rec.ehv = 0.0
        else:
            tracker = self._tracker()
            rec.ehv = tracker.add(ov.as_array())
        self.records.append(rec)
        return rec

    def _tracker(self) -> HypervolumeTracker:
        if self._hv is None:
            self._hv = HypervolumeTracker(self.records[0].objective().as_array())
            for r in self.records[1:]:
                self._hv.add(r.objective().as_array())
        return self._hv

    # convenience views
    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def matrix(self, name: str) -> np.ndarray:
        return np.stack([getattr(r, name) for r in self.records])

    def shrink_epochs(self) -> list[int]:
        return [r.k for r in self.records if r.shrank]

    def objectives(self) -> list[ObjectiveVector]:
        return [r.objective() for r in self.records]

    def same_as(self, other: "Trace") -> bool:
        return (self.meta == other.meta and len(self) == len(other)
                and all(a.same_as(b) for a, b in zip(self.records, other.records)))


def dumps(trace: Trace) -> str:
    lines = [json.dumps(trace.meta, sort_keys=True, allow_nan=False)]
    lines += [json.dumps(r.to_json(), allow_nan=False) for r in trace.records]
    return "\n".join(lines) + "\n"


def save(trace: Trace, path) -> None:
    # floats go through repr, the shortest round-trip decimal
    Path(path).write_text(dumps(trace), encoding="utf-8")


def _vector(obj, key, line, d, nullable=False):
    v = obj.get(key)
    if v is None and nullable:
        return None
    if not isinstance(v, list) or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
        raise TraceParseError(f"field {key!r} must be a list of numbers", line=line)
    if d is not None and len(v) != d:
        raise SchemaError(f"field {key!r} has length {len(v)}, meta says d={d}", line=line)
    return np.array(v, dtype=np.float64)


def loads(text: str) -> Trace:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise TraceParseError("empty trace file", line=1)
    try:
        meta = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise TraceParseError(f"bad meta header: {exc.msg}", line=1) from None
    if not isinstance(meta, dict):
        raise TraceParseError("meta header must be an object", line=1)
    d = meta.get("d")
    trace = Trace(meta)
    last_good = None
    for lineno, raw in enumerate(lines[1:], start=2):
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            where = "no complete epoch" if last_good is None else f"last complete epoch k={last_good}"
            raise TraceParseError(f"malformed record ({exc.msg}); {where}", line=lineno) from None
        if not isinstance(obj, dict) or set(obj) != set(RECORD_FIELDS):
            raise TraceParseError(f"record must have exactly the fields {RECORD_FIELDS}", line=lineno)
        k = obj["k"]
        if not isinstance(k, int) or isinstance(k, bool):
            raise TraceParseError("field 'k' must be an integer", line=lineno)
        rec = EpochRecord(
            k=k,
            ell=float(obj["ell"]),
            reg=_vector(obj, "reg", lineno, d),
            mu=_vector(obj, "mu", lineno, d),
            b=_vector(obj, "b", lineno, d, nullable=True),
            shrank=bool(obj["shrank"]),
            ehv=float(obj["ehv"]),
        )
        expected = trace.records[-1].k + 1 if trace.records else 0
        if rec.k != expected:
            raise TraceParseError(f"expected k={expected}, got k={rec.k}", line=lineno)
        trace.records.append(rec)
        last_good = rec.k
    B = meta.get("B")
    if isinstance(B, int) and meta.get("failed_epoch") is None and len(trace.records) != B + 1:
        raise TraceParseError(
            f"truncated trace: expected {B + 1} records, last complete epoch k={last_good}",
            line=len(lines) + 1)
    return trace


def load(path) -> Trace:
    return loads(Path(path).read_text(encoding="utf-8"))
