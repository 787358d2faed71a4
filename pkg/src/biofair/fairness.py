"""Group fairness criteria at a shared decision threshold, plus the audit driver.

Three criteria are evaluated per partition:

* equalised odds: per-cell TGR and FGR must agree,
* statistical parity: per-cell predicted-genuine rate must agree,
* predictive parity: per-cell precision tg / (tg + fg) must agree.

Every pair of cells contributes an absolute gap |a - b| and a relative gap
|a - b| / ((a + b) / 2). A partition is flagged unfair when its largest
absolute gap exceeds epsilon.
"""

from __future__ import annotations

import csv
import enum
import io
import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import __version__
from ._io import canonical_json, format_float
from .errors import BiofairError, CriterionError
from .rates import (
    ConfusionCounts,
    OperatingPoint,
    OperatingPointSpec,
    RateSet,
    ScoreArrays,
    curve_from_arrays,
    resolve_operating_point,
)
from .scores import AttributeSchema, GroupPartition, ScoreRecord, SummaryRow, demographic_summary, partition

REPORT_SCHEMA_VERSION = "biofair.report/1"
DEFAULT_EPSILON = 0.05
RATE_IDENTITY_TOL = 1e-12


class Criterion(str, enum.Enum):
    EQUALISED_ODDS = "equalised_odds"
    STATISTICAL_PARITY = "statistical_parity"
    PREDICTIVE_PARITY = "predictive_parity"

    @property
    def components(self) -> tuple[str, ...]:
        return _COMPONENTS[self]


_COMPONENTS = {
    Criterion.EQUALISED_ODDS: ("tgr", "fgr"),
    Criterion.STATISTICAL_PARITY: ("rate",),
    Criterion.PREDICTIVE_PARITY: ("precision",),
}


def absolute_gap(a: float | None, b: float | None) -> float | None:
    if a is None or b is None:
        return None
    return abs(a - b)


def relative_gap(a: float | None, b: float | None) -> float | None:
    """|a - b| relative to the pair mean; None when a + b == 0."""
    if a is None or b is None or a + b == 0:
        return None
    return abs(a - b) / ((a + b) / 2.0)


def _div(num: int, den: int) -> float | None:
    return num / den if den else None


def cell_values(criterion: Criterion, c: ConfusionCounts) -> dict[str, float | None]:
    if criterion is Criterion.EQUALISED_ODDS:
        return {"tgr": _div(c.tg, c.n_genuine), "fgr": _div(c.fg, c.n_impostor)}
    if criterion is Criterion.STATISTICAL_PARITY:
        return {"rate": _div(c.predicted_genuine, c.total)}
    return {"precision": _div(c.tg, c.predicted_genuine)}


_UNDEFINED_REASON = {
    "tgr": "no genuine records",
    "fgr": "no impostor records",
    "rate": "empty cell",
    "precision": "no predicted-genuine comparisons (division by zero); use near-zfir rather than zfir",
}


@dataclass(frozen=True)
class PairGap:
    cell_a: str
    cell_b: str
    abs_gap: Mapping[str, float | None]
    rel_gap: Mapping[str, float | None]

    @property
    def excluded(self) -> bool:
        return all(v is None for v in self.abs_gap.values())

    def to_dict(self) -> dict:
        return {"cell_a": self.cell_a, "cell_b": self.cell_b, "abs": dict(self.abs_gap), "rel": dict(self.rel_gap)}


@dataclass(frozen=True)
class CriterionGap:
    criterion: Criterion
    epsilon: float
    cell_values: Mapping[str, Mapping[str, float | None]]
    pairs: tuple[PairGap, ...]
    max_abs: Mapping[str, float | None]
    max_rel: Mapping[str, float | None]
    max_abs_gap: float | None
    max_rel_gap: float | None
    unfair: bool
    notes: tuple[str, ...] = ()

    def gap(self, a: str, b: str) -> PairGap:
        for p in self.pairs:
            if (p.cell_a, p.cell_b) in ((a, b), (b, a)):
                return p
        raise KeyError((a, b))

    def to_dict(self) -> dict:
        return {
            "criterion": self.criterion.value,
            "epsilon": self.epsilon,
            "cell_values": {k: dict(v) for k, v in self.cell_values.items()},
            "pairs": [p.to_dict() for p in self.pairs],
            "max_abs": dict(self.max_abs),
            "max_rel": dict(self.max_rel),
            "max_abs_gap": self.max_abs_gap,
            "max_rel_gap": self.max_rel_gap,
            "unfair": self.unfair,
            "notes": list(self.notes),
        }


def _max(values) -> float | None:
    vals = [v for v in values if v is not None]
    return max(vals) if vals else None


def criterion_gap(
    criterion: Criterion, counts: Mapping[str, ConfusionCounts], epsilon: float = DEFAULT_EPSILON
) -> CriterionGap:
    """Pairwise gaps for ``criterion`` given per-cell confusion counts (cell order kept)."""
    comps = criterion.components
    values = {label: cell_values(criterion, c) for label, c in counts.items()}
    notes = []
    for label, vals in values.items():
        for comp, v in vals.items():
            if v is None:
                notes.append(f"cell {label}: {comp} undefined ({_UNDEFINED_REASON[comp]}); pairs with it excluded")
    if criterion is Criterion.PREDICTIVE_PARITY and values and all(v["precision"] is None for v in values.values()):
        raise CriterionError(
            "predictive parity undefined in every cell: no predicted-genuine comparisons "
            "(division by zero); evaluate at near-zfir instead of zfir"
        )
    pairs = tuple(
        PairGap(
            a,
            b,
            {k: absolute_gap(values[a][k], values[b][k]) for k in comps},
            {k: relative_gap(values[a][k], values[b][k]) for k in comps},
        )
        for a, b in itertools.combinations(values, 2)
    )
    max_abs = {k: _max(p.abs_gap[k] for p in pairs) for k in comps}
    max_rel = {k: _max(p.rel_gap[k] for p in pairs) for k in comps}
    max_abs_gap = _max(max_abs.values())
    if not pairs:
        notes.append("no pairs: partition has fewer than two cells")
    elif max_abs_gap is None:
        notes.append("no pairs: every pair has an undefined component")
    return CriterionGap(
        criterion,
        epsilon,
        values,
        pairs,
        max_abs,
        max_rel,
        max_abs_gap,
        _max(max_rel.values()),
        unfair=max_abs_gap is not None and max_abs_gap > epsilon,
        notes=tuple(notes),
    )


def cell_arrays(part: GroupPartition, records: Sequence[ScoreRecord]) -> dict[str, ScoreArrays]:
    out = {}
    for cell in part.cells:
        sc = np.fromiter((records[i].score for i in cell.indices), dtype=np.float64, count=cell.size)
        g = np.fromiter((records[i].genuine for i in cell.indices), dtype=bool, count=cell.size)
        out[cell.label] = ScoreArrays(sc[g], sc[~g])
    return out


def cell_counts(part: GroupPartition, records: Sequence[ScoreRecord], tau: float) -> dict[str, ConfusionCounts]:
    return {label: arr.counts_at(tau) for label, arr in cell_arrays(part, records).items()}


def equalised_odds(part: GroupPartition, records: Sequence[ScoreRecord], tau: float, epsilon: float = DEFAULT_EPSILON) -> CriterionGap:
    return criterion_gap(Criterion.EQUALISED_ODDS, cell_counts(part, records, tau), epsilon)


def statistical_parity(part: GroupPartition, records: Sequence[ScoreRecord], tau: float, epsilon: float = DEFAULT_EPSILON) -> CriterionGap:
    return criterion_gap(Criterion.STATISTICAL_PARITY, cell_counts(part, records, tau), epsilon)


def predictive_parity(part: GroupPartition, records: Sequence[ScoreRecord], tau: float, epsilon: float = DEFAULT_EPSILON) -> CriterionGap:
    return criterion_gap(Criterion.PREDICTIVE_PARITY, cell_counts(part, records, tau), epsilon)


def bayes_residual_from_counts(c: ConfusionCounts) -> float | None:
    """|precision - tgr * base_rate / predicted_rate|, or None if any factor is undefined."""
    n = c.total
    if n == 0 or c.n_genuine == 0 or c.predicted_genuine == 0:
        return None
    precision = c.tg / c.predicted_genuine
    tgr = c.tg / c.n_genuine
    base_rate = c.n_genuine / n
    predicted_rate = c.predicted_genuine / n
    return abs(precision - tgr * base_rate / predicted_rate)


def rate_identities_hold(r: RateSet) -> bool:
    c = r.counts
    ok = c.tg + c.fi == c.n_genuine and c.ti + c.fg == c.n_impostor
    if r.tgr is not None:
        ok = ok and abs(r.tgr + r.fir - 1.0) <= RATE_IDENTITY_TOL
    if r.tir is not None:
        ok = ok and abs(r.tir + r.fgr - 1.0) <= RATE_IDENTITY_TOL
    return ok


# ---------------------------------------------------------------------------
# descriptive score statistics


@dataclass(frozen=True)
class BucketStats:
    cell: str
    label: str
    count: int
    mean: float | None
    std: float | None  # sample (n - 1); None below two records

    def to_dict(self) -> dict:
        return {"cell": self.cell, "label": self.label, "count": self.count, "mean": self.mean, "std": self.std}


@dataclass(frozen=True)
class MeanDifference:
    cell_a: str
    cell_b: str
    label: str
    d: float | None

    def to_dict(self) -> dict:
        return {"cell_a": self.cell_a, "cell_b": self.cell_b, "label": self.label, "d": self.d}


@dataclass(frozen=True)
class GroupScoreStats:
    buckets: tuple[BucketStats, ...]
    differences: tuple[MeanDifference, ...]

    def bucket(self, cell: str, label: str) -> BucketStats:
        for b in self.buckets:
            if b.cell == cell and b.label == label:
                return b
        raise KeyError((cell, label))

    def to_dict(self) -> dict:
        return {"buckets": [b.to_dict() for b in self.buckets], "differences": [d.to_dict() for d in self.differences]}


def _bucket(cell: str, label: str, x: np.ndarray) -> BucketStats:
    n = len(x)
    mean = float(np.mean(x)) if n else None
    std = float(np.std(x, ddof=1)) if n >= 2 else None
    return BucketStats(cell, label, n, mean, std)


def _standardized_difference(a: BucketStats, b: BucketStats) -> float | None:
    if a.std is None or b.std is None:
        return None
    pooled_var = ((a.count - 1) * a.std**2 + (b.count - 1) * b.std**2) / (a.count + b.count - 2)
    if pooled_var == 0:
        return 0.0 if a.mean == b.mean else None
    return (a.mean - b.mean) / math.sqrt(pooled_var)


def group_score_stats(part: GroupPartition, records: Sequence[ScoreRecord]) -> GroupScoreStats:
    """Mean and sample std of scores per (cell, label), and Cohen's d between cells."""
    arrays = cell_arrays(part, records)
    buckets = []
    for label, arr in arrays.items():
        buckets.append(_bucket(label, "genuine", arr.genuine))
        buckets.append(_bucket(label, "impostor", arr.impostor))
    index = {(b.cell, b.label): b for b in buckets}
    diffs = tuple(
        MeanDifference(a, b, lab, _standardized_difference(index[a, lab], index[b, lab]))
        for a, b in itertools.combinations(arrays, 2)
        for lab in ("genuine", "impostor")
    )
    return GroupScoreStats(tuple(buckets), diffs)


# ---------------------------------------------------------------------------
# audit


def thread_cap() -> int:
    try:
        return max(1, int(os.environ.get("BIOFAIR_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class AuditEntry:
    partition: str
    operating_point: str
    threshold: float | None
    cell_rates: Mapping[str, RateSet]
    criteria: Mapping[Criterion, CriterionGap]
    errors: Mapping[str, str]
    bayes_max_residual: float | None
    rate_identities_ok: bool

    @property
    def unfair(self) -> bool:
        return any(g.unfair for g in self.criteria.values())

    def to_dict(self) -> dict:
        return {
            "partition": self.partition,
            "operating_point": self.operating_point,
            "threshold": self.threshold,
            "cell_rates": {k: v.to_dict() for k, v in self.cell_rates.items()},
            "criteria": {k.value: v.to_dict() for k, v in self.criteria.items()},
            "errors": dict(self.errors),
            "checks": {"bayes_max_residual": self.bayes_max_residual, "rate_identities_ok": self.rate_identities_ok},
        }


@dataclass(frozen=True)
class PartitionInfo:
    name: str
    axes: tuple[str, ...]
    sizes: Mapping[str, int]
    empty_cells: tuple[str, ...]
    score_stats: GroupScoreStats | None
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "axes": list(self.axes),
            "cell_sizes": dict(self.sizes),
            "empty_cells": list(self.empty_cells),
            "score_stats": None if self.score_stats is None else self.score_stats.to_dict(),
            "error": self.error,
        }


@dataclass(frozen=True)
class FairnessReport:
    epsilon: float
    config: Mapping
    input_digest: str | None
    schema_digest: str
    n_records: int
    operating_points: Mapping[str, OperatingPoint]
    operating_point_errors: Mapping[str, str]
    partitions: tuple[PartitionInfo, ...]
    entries: tuple[AuditEntry, ...]
    demographics: tuple[SummaryRow, ...] = ()
    tool_version: str = __version__

    @property
    def unfair(self) -> bool:
        return any(e.unfair for e in self.entries)

    def entry(self, partition: str, operating_point: str) -> AuditEntry:
        for e in self.entries:
            if e.partition == partition and e.operating_point == operating_point:
                return e
        raise KeyError((partition, operating_point))

    def to_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "tool_version": self.tool_version,
            "epsilon": self.epsilon,
            "config": dict(self.config),
            "input_digest": self.input_digest,
            "schema_digest": self.schema_digest,
            "n_records": self.n_records,
            "operating_points": {k: v.to_dict() for k, v in self.operating_points.items()},
            "operating_point_errors": dict(self.operating_point_errors),
            "partitions": [p.to_dict() for p in self.partitions],
            "entries": [e.to_dict() for e in self.entries],
            "demographics": [r.to_dict() for r in self.demographics],
            "unfair": self.unfair,
        }

    def to_json(self) -> str:
        return canonical_json(self.to_dict())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        comp_cols = [f"{k}_{kind}" for k in ("tgr", "fgr", "rate", "precision") for kind in ("abs", "rel")]
        w.writerow(["partition", "operating_point", "threshold", "criterion", "cell_a", "cell_b", *comp_cols, "unfair", "note"])

        def fmt(v):
            return "" if v is None else format_float(v)

        for e in self.entries:
            thr = fmt(e.threshold)
            for crit in Criterion:
                if crit not in e.criteria:
                    w.writerow([e.partition, e.operating_point, thr, crit.value, "", "", *[""] * len(comp_cols), "", e.errors.get(crit.value, "")])
                    continue
                gap = e.criteria[crit]
                if not gap.pairs:
                    w.writerow([e.partition, e.operating_point, thr, crit.value, "", "", *[""] * len(comp_cols), "false", "no pairs"])
                for p in gap.pairs:
                    row = []
                    for k in ("tgr", "fgr", "rate", "precision"):
                        row += [fmt(p.abs_gap.get(k)), fmt(p.rel_gap.get(k))]
                    flagged = any(v is not None and v > gap.epsilon for v in p.abs_gap.values())
                    note = "excluded: undefined value" if p.excluded else ""
                    w.writerow([e.partition, e.operating_point, thr, crit.value, p.cell_a, p.cell_b, *row, str(flagged).lower(), note])
        return buf.getvalue()


def _evaluate(name: str, counts: Mapping[str, ConfusionCounts], op_label: str, tau: float, epsilon: float) -> AuditEntry:
    criteria, errors = {}, {}
    for crit in Criterion:
        try:
            criteria[crit] = criterion_gap(crit, counts, epsilon)
        except BiofairError as exc:
            errors[crit.value] = str(exc)
    rates = {label: RateSet.from_counts(tau, c) for label, c in counts.items()}
    residuals = [r for r in (bayes_residual_from_counts(c) for c in counts.values()) if r is not None]
    return AuditEntry(
        partition=name,
        operating_point=op_label,
        threshold=tau,
        cell_rates=rates,
        criteria=criteria,
        errors=errors,
        bayes_max_residual=max(residuals) if residuals else None,
        rate_identities_ok=all(rate_identities_hold(r) for r in rates.values()),
    )


def audit(
    records: Sequence[ScoreRecord],
    schema: AttributeSchema,
    partitions: Sequence[Sequence[str]],
    operating_points: Sequence[OperatingPointSpec],
    epsilon: float = DEFAULT_EPSILON,
) -> FairnessReport:
    """Evaluate all criteria for every partition at every operating point.

    Operating points are resolved once on the pooled curve of all records and
    the resulting threshold is shared by every cell. Failures in one entry are
    recorded on that entry instead of aborting the run.
    """
    pooled = ScoreArrays.from_records(records)
    resolved: dict[str, OperatingPoint] = {}
    op_errors: dict[str, str] = {}
    curve = None
    for spec in operating_points:
        try:
            if spec.kind == "fixed":
                tau = spec.value
                resolved[spec.label] = OperatingPoint(spec, tau, RateSet.from_counts(tau, pooled.counts_at(tau)))
            else:
                if curve is None:
                    curve = curve_from_arrays(pooled)
                resolved[spec.label] = resolve_operating_point(curve, spec)
        except BiofairError as exc:
            op_errors[spec.label] = str(exc)

    infos, jobs = [], []
    for axes in partitions:
        name = "+".join(axes)
        try:
            part = partition(records, schema, axes)
        except BiofairError as exc:
            infos.append(PartitionInfo(name, tuple(axes), {}, (), None, error=str(exc)))
            continue
        arrays = cell_arrays(part, records)
        infos.append(
            PartitionInfo(name, part.axes, {c.label: c.size for c in part.cells}, part.empty_cells, group_score_stats(part, records))
        )
        for label, op in resolved.items():
            jobs.append((name, arrays, label, op.resolved_threshold))

    def run(job):
        name, arrays, label, tau = job
        counts = {cell: arr.counts_at(tau) for cell, arr in arrays.items()}
        return _evaluate(name, counts, label, tau, epsilon)

    with ThreadPoolExecutor(max_workers=thread_cap()) as pool:
        entries = tuple(pool.map(run, jobs))

    config = {
        "epsilon": epsilon,
        "partitions": ["+".join(a) for a in partitions],
        "operating_points": [s.label for s in operating_points],
        "threshold_protocol": "shared: one threshold per operating point, resolved on pooled records; per-group thresholds not computed",
        "unfair_rule": "max absolute pairwise gap > epsilon",
    }
    return FairnessReport(
        epsilon=epsilon,
        config=config,
        input_digest=getattr(records, "digest", None),
        schema_digest=schema.digest,
        n_records=len(records),
        operating_points=resolved,
        operating_point_errors=op_errors,
        partitions=tuple(infos),
        entries=entries,
        demographics=tuple(demographic_summary(records, schema)),
    )
