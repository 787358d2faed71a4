"""Confusion counting, rate curves and operating-point selection.

A comparison with score ``s`` is accepted (predicted genuine) iff ``s > tau``;
ties at the threshold are rejected.
"""

from __future__ import annotations

import csv
import io
import math
import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ._io import atomic_write_text, format_float
from .errors import CurveError, ParameterError
from .scores import ScoreRecord


@dataclass(frozen=True)
class ConfusionCounts:
    tg: int
    ti: int
    fg: int
    fi: int

    def __post_init__(self):
        if min(self.tg, self.ti, self.fg, self.fi) < 0:
            raise ValueError(f"negative confusion count in {self}")

    @property
    def n_genuine(self) -> int:
        return self.tg + self.fi

    @property
    def n_impostor(self) -> int:
        return self.ti + self.fg

    @property
    def total(self) -> int:
        return self.tg + self.ti + self.fg + self.fi

    @property
    def predicted_genuine(self) -> int:
        return self.tg + self.fg

    def to_dict(self) -> dict:
        return {"tg": self.tg, "ti": self.ti, "fg": self.fg, "fi": self.fi}


def _ratio(num: int, den: int) -> float | None:
    return num / den if den else None


@dataclass(frozen=True)
class RateSet:
    """Rates at one threshold. A rate is ``None`` when its denominator is zero."""

    threshold: float
    counts: ConfusionCounts
    tgr: float | None
    tir: float | None
    fgr: float | None
    fir: float | None

    @classmethod
    def from_counts(cls, threshold: float, counts: ConfusionCounts) -> "RateSet":
        ng, ni = counts.n_genuine, counts.n_impostor
        return cls(
            float(threshold),
            counts,
            tgr=_ratio(counts.tg, ng),
            tir=_ratio(counts.ti, ni),
            fgr=_ratio(counts.fg, ni),
            fir=_ratio(counts.fi, ng),
        )

    @property
    def predicted_genuine_rate(self) -> float | None:
        return _ratio(self.counts.predicted_genuine, self.counts.total)

    @property
    def precision(self) -> float | None:
        return _ratio(self.counts.tg, self.counts.predicted_genuine)

    @property
    def base_rate(self) -> float | None:
        return _ratio(self.counts.n_genuine, self.counts.total)

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "counts": self.counts.to_dict(),
            "tgr": self.tgr,
            "tir": self.tir,
            "fgr": self.fgr,
            "fir": self.fir,
        }


# ---------------------------------------------------------------------------
# array core


class ScoreArrays:
    """Sorted genuine and impostor score arrays for fast threshold queries."""

    def __init__(self, genuine: np.ndarray, impostor: np.ndarray):
        self.genuine = np.sort(np.asarray(genuine, dtype=np.float64))
        self.impostor = np.sort(np.asarray(impostor, dtype=np.float64))

    @classmethod
    def from_records(cls, records: Sequence[ScoreRecord]) -> "ScoreArrays":
        scores = np.fromiter((r.score for r in records), dtype=np.float64, count=len(records))
        mask = np.fromiter((r.genuine for r in records), dtype=bool, count=len(records))
        return cls(scores[mask], scores[~mask])

    @property
    def n_genuine(self) -> int:
        return len(self.genuine)

    @property
    def n_impostor(self) -> int:
        return len(self.impostor)

    def counts(self, thresholds) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Vectorised (tg, ti, fg, fi) over an array of thresholds."""
        t = np.asarray(thresholds, dtype=np.float64)
        rejected_g = np.searchsorted(self.genuine, t, side="right")
        rejected_i = np.searchsorted(self.impostor, t, side="right")
        tg = self.n_genuine - rejected_g
        fg = self.n_impostor - rejected_i
        return tg, rejected_i, fg, rejected_g

    def counts_at(self, tau: float) -> ConfusionCounts:
        tg, ti, fg, fi = self.counts([tau])
        return ConfusionCounts(int(tg[0]), int(ti[0]), int(fg[0]), int(fi[0]))


def count_confusion(records: Sequence[ScoreRecord], tau: float) -> ConfusionCounts:
    return ScoreArrays.from_records(records).counts_at(tau)


def candidate_thresholds(scores) -> np.ndarray:
    """Midpoints between consecutive distinct scores plus one sentinel on each side.

    Each candidate yields a distinct accept/reject split, and every split that
    a threshold can produce is represented exactly once.
    """
    s = np.unique(np.asarray(scores, dtype=np.float64))
    if s.size == 0:
        raise CurveError("no scores")
    lo, hi = s[0], s[-1]
    below = lo - max(1.0, abs(lo))
    above = hi + max(1.0, abs(hi))
    a, b = s[:-1], s[1:]
    mid = a + (b - a) / 2.0
    # adjacent doubles: a rounded-up midpoint would reject b as well
    mid = np.where(mid >= b, a, mid)
    return np.concatenate(([below], mid, [above]))


def _check_both_labels(arr: ScoreArrays) -> None:
    if arr.n_genuine == 0:
        raise CurveError("rate curve needs genuine records; none present")
    if arr.n_impostor == 0:
        raise CurveError("rate curve needs impostor records; none present")


def rate_curve(records: Sequence[ScoreRecord]) -> list[RateSet]:
    """RateSets at every candidate threshold, ascending by threshold."""
    arr = ScoreArrays.from_records(records)
    _check_both_labels(arr)
    return curve_from_arrays(arr)


def curve_from_arrays(arr: ScoreArrays) -> list[RateSet]:
    _check_both_labels(arr)
    thresholds = candidate_thresholds(np.concatenate((arr.genuine, arr.impostor)))
    tg, ti, fg, fi = arr.counts(thresholds)
    return [
        RateSet.from_counts(t, ConfusionCounts(int(a), int(b), int(c), int(d)))
        for t, a, b, c, d in zip(thresholds, tg, ti, fg, fi)
    ]


# ---------------------------------------------------------------------------
# operating points

_KINDS = ("eer", "fgr", "zfgr", "zfir", "near-zfir", "fixed")


@dataclass(frozen=True)
class OperatingPointSpec:
    """A threshold-selection rule: ``eer``, ``fgr@<target>``, ``zfgr``,
    ``zfir``, ``near-zfir`` or ``fixed@<tau>``."""

    kind: str
    value: float | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ParameterError(f"unknown operating point kind {self.kind!r}")
        if self.kind in ("fgr", "fixed"):
            if self.value is None or not math.isfinite(self.value):
                raise ParameterError(f"operating point {self.kind!r} needs a finite value")
            if self.kind == "fgr" and not 0.0 <= self.value <= 1.0:
                raise ParameterError(f"FGR target must lie in [0, 1], got {self.value}")
        elif self.value is not None:
            raise ParameterError(f"operating point {self.kind!r} takes no value")

    @property
    def label(self) -> str:
        return self.kind if self.value is None else f"{self.kind}@{self.value!r}"

    @classmethod
    def parse(cls, text: str) -> "OperatingPointSpec":
        text = text.strip().lower()
        m = re.fullmatch(r"(fgr|fixed)@(.+)", text)
        if m:
            try:
                value = float(m.group(2))
            except ValueError:
                raise ParameterError(f"bad operating point value in {text!r}") from None
            return cls(m.group(1), value)
        return cls(text)

    @classmethod
    def parse_list(cls, text: str) -> list["OperatingPointSpec"]:
        specs = [cls.parse(t) for t in text.split(",") if t.strip()]
        if not specs:
            raise ParameterError("no operating points given")
        return specs


EER = OperatingPointSpec("eer")
ZFGR = OperatingPointSpec("zfgr")
ZFIR = OperatingPointSpec("zfir")
NEAR_ZFIR = OperatingPointSpec("near-zfir")


def fgr_target(t: float) -> OperatingPointSpec:
    return OperatingPointSpec("fgr", t)


def fixed(tau: float) -> OperatingPointSpec:
    return OperatingPointSpec("fixed", tau)


@dataclass(frozen=True)
class OperatingPoint:
    spec: OperatingPointSpec
    resolved_threshold: float
    achieved: RateSet
    value: float | None = None  # EER value for eer; fir at the point for fgr targets
    warnings: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "kind": self.spec.kind,
            "parameter": self.spec.value,
            "label": self.spec.label,
            "threshold": self.resolved_threshold,
            "value": self.value,
            "achieved": self.achieved.to_dict(),
            "warnings": list(self.warnings),
        }


def resolve_operating_point(curve: Sequence[RateSet], spec: OperatingPointSpec) -> OperatingPoint:
    """Pick the threshold on ``curve`` (ascending) that realises ``spec``.

    * eer: minimises |fgr - fir|, ties to the smaller threshold; value is
      (fgr + fir) / 2 there, without interpolation.
    * fgr@t: smallest threshold with fgr <= t; value is the fir there.
    * zfir: largest threshold with fir == 0.
    * zfgr: smallest threshold with fgr == 0.
    * near-zfir: smallest threshold with fir > 0.
    """
    if not curve:
        raise CurveError("empty rate curve")
    if any(r.fgr is None or r.fir is None for r in curve):
        raise CurveError("rate curve lacks genuine or impostor records")
    kind = spec.kind
    warnings: list[str] = []
    value = None

    if kind == "eer":
        best = min(curve, key=lambda r: (abs(r.fgr - r.fir), r.threshold))
        value = (best.fgr + best.fir) / 2.0
    elif kind == "fgr":
        best = next(r for r in curve if r.fgr <= spec.value)  # top sentinel has fgr == 0
        value = best.fir
        if best.fgr * 10.0 < spec.value:
            warnings.append(
                f"sparse data: achieved fgr {best.fgr:.6g} is more than 10x below target {spec.value:g}"
            )
    elif kind == "zfir":
        best = [r for r in curve if r.fir == 0][-1]  # bottom sentinel always qualifies
    elif kind == "zfgr":
        best = next(r for r in curve if r.fgr == 0)
    elif kind == "near-zfir":
        best = next(r for r in curve if r.fir > 0)
    else:
        raise ParameterError("fixed thresholds are resolved against records; use resolve()")
    return OperatingPoint(spec, best.threshold, best, value, tuple(warnings))


def resolve_fixed(records: Sequence[ScoreRecord], tau: float) -> OperatingPoint:
    spec = fixed(tau)
    return OperatingPoint(spec, float(tau), RateSet.from_counts(tau, count_confusion(records, tau)))


def resolve(records: Sequence[ScoreRecord], spec: OperatingPointSpec, curve: Sequence[RateSet] | None = None) -> OperatingPoint:
    """Resolve ``spec`` on the pooled records (curve built if not supplied)."""
    if spec.kind == "fixed":
        return resolve_fixed(records, spec.value)
    return resolve_operating_point(curve if curve is not None else rate_curve(records), spec)


# ---------------------------------------------------------------------------
# DET export

DET_COLUMNS = ("threshold", "fgr", "fir", "tgr", "tir", "tg", "ti", "fg", "fi")


def format_det_csv(curve: Sequence[RateSet]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DET_COLUMNS)
    for r in sorted(curve, key=lambda r: r.threshold):
        rates = ["" if v is None else format_float(v) for v in (r.fgr, r.fir, r.tgr, r.tir)]
        c = r.counts
        w.writerow([format_float(r.threshold), *rates, c.tg, c.ti, c.fg, c.fi])
    return buf.getvalue()


def write_det_csv(curve: Sequence[RateSet], path: str | os.PathLike) -> Path:
    return atomic_write_text(path, format_det_csv(curve))
