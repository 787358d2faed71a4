"""Exhaustive threshold sweep checking whether equalised odds, statistical
parity and predictive parity can hold together between two groups.

Any threshold where all three hold is classified by the escape clause that
explains it: a perfect split, a (near) trivial classifier, or base rates that
already agree within epsilon. A satisfying threshold none of these explain is
a counterexample.
"""

from __future__ import annotations

import enum
import itertools
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import PartitionError
from .fairness import DEFAULT_EPSILON, bayes_residual_from_counts, cell_arrays, cell_counts
from .rates import ScoreArrays, candidate_thresholds
from .scores import GroupPartition, ScoreRecord
from .synth import generate, random_overlapping_pair, trial_seeds


class Classification(str, enum.Enum):
    TRIVIAL_ACCEPT_ALL = "TrivialAcceptAll"
    TRIVIAL_REJECT_ALL = "TrivialRejectAll"
    PERFECT_SYSTEM = "PerfectSystem"
    EQUAL_BASE_RATES = "EqualBaseRates"
    UNCLASSIFIED = "Unclassified"

    @property
    def trivial(self) -> bool:
        return self in (Classification.TRIVIAL_ACCEPT_ALL, Classification.TRIVIAL_REJECT_ALL)


@dataclass(frozen=True)
class ThresholdResult:
    threshold: float
    eo_holds: bool
    sp_holds: bool
    pp_holds: bool | None  # None: precision undefined in a cell
    classification: Classification | None = None

    @property
    def satisfied(self) -> bool:
        return self.eo_holds and self.sp_holds and self.pp_holds is True

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "eo": self.eo_holds,
            "sp": self.sp_holds,
            "pp": self.pp_holds,
            "classification": self.classification,
        }


@dataclass(frozen=True)
class PairVerdict:
    cell_a: str
    cell_b: str
    epsilon: float
    base_rates: tuple[float, float]
    results: tuple[ThresholdResult, ...]

    @property
    def base_rate_gap(self) -> float:
        return abs(self.base_rates[0] - self.base_rates[1])

    @property
    def satisfying(self) -> tuple[ThresholdResult, ...]:
        return tuple(r for r in self.results if r.satisfied)

    @property
    def classifications(self) -> Counter:
        return Counter(r.classification for r in self.satisfying)

    @property
    def counterexamples(self) -> tuple[ThresholdResult, ...]:
        return tuple(r for r in self.satisfying if r.classification is Classification.UNCLASSIFIED)

    def to_dict(self, detail: bool = True) -> dict:
        d = {
            "cells": [self.cell_a, self.cell_b],
            "epsilon": self.epsilon,
            "base_rates": list(self.base_rates),
            "base_rate_gap": self.base_rate_gap,
            "n_thresholds": len(self.results),
            "n_satisfying": len(self.satisfying),
            "classifications": {k.value: v for k, v in sorted(self.classifications.items(), key=lambda kv: kv[0].value)},
            "n_counterexamples": len(self.counterexamples),
        }
        if detail:
            d["satisfying"] = [r.to_dict() for r in self.satisfying]
            d["per_threshold"] = [r.to_dict() for r in self.results]
        else:
            d["counterexample_thresholds"] = [r.threshold for r in self.counterexamples]
        return d


def _summary(classes: Counter) -> str:
    if classes.get(Classification.UNCLASSIFIED):
        return "SATISFIABLE (Unclassified)"
    nontrivial = sorted(c.value for c in classes if not c.trivial)
    if nontrivial:
        return f"SATISFIABLE ({', '.join(nontrivial)})"
    return "IMPOSSIBLE-CONFIRMED"


@dataclass(frozen=True)
class ImpossibilityVerdict:
    epsilon: float
    pairs: tuple[PairVerdict, ...]
    notes: tuple[str, ...] = ()

    @property
    def satisfying_thresholds(self) -> tuple[ThresholdResult, ...]:
        return tuple(r for p in self.pairs for r in p.satisfying)

    @property
    def classifications(self) -> Counter:
        total: Counter = Counter()
        for p in self.pairs:
            total.update(p.classifications)
        return total

    @property
    def confirmed(self) -> bool:
        """No satisfying threshold escapes every clause."""
        return not any(p.counterexamples for p in self.pairs)

    def summary_line(self) -> str:
        return _summary(self.classifications)

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "confirmed": self.confirmed,
            "summary": self.summary_line(),
            "notes": list(self.notes),
            "pairs": [p.to_dict() for p in self.pairs],
        }


def _classify(pred_rate: float, perfect: bool, base_rate_gap: float, epsilon: float) -> Classification:
    if perfect:
        return Classification.PERFECT_SYSTEM
    if pred_rate >= 1.0 - epsilon:
        return Classification.TRIVIAL_ACCEPT_ALL
    if pred_rate <= epsilon:
        return Classification.TRIVIAL_REJECT_ALL
    if base_rate_gap < epsilon:
        return Classification.EQUAL_BASE_RATES
    return Classification.UNCLASSIFIED


def verify_pair(label_a: str, a: ScoreArrays, label_b: str, b: ScoreArrays, epsilon: float = DEFAULT_EPSILON) -> PairVerdict:
    """Sweep every candidate threshold of the two cells' pooled scores."""
    for label, arr in ((label_a, a), (label_b, b)):
        if arr.n_genuine == 0 or arr.n_impostor == 0:
            raise PartitionError(f"cell {label!r} needs both genuine and impostor records")
    thresholds = candidate_thresholds(np.concatenate((a.genuine, a.impostor, b.genuine, b.impostor)))

    def stats(arr: ScoreArrays):
        tg, ti, fg, fi = arr.counts(thresholds)
        pred = tg + fg
        with np.errstate(invalid="ignore", divide="ignore"):
            precision = np.where(pred > 0, tg / np.maximum(pred, 1), np.nan)
        n = arr.n_genuine + arr.n_impostor
        return tg / arr.n_genuine, fg / arr.n_impostor, pred / n, precision, pred, fg, fi

    tgr_a, fgr_a, rate_a, prec_a, pred_a, fg_a, fi_a = stats(a)
    tgr_b, fgr_b, rate_b, prec_b, pred_b, fg_b, fi_b = stats(b)
    eo = (np.abs(tgr_a - tgr_b) < epsilon) & (np.abs(fgr_a - fgr_b) < epsilon)
    sp = np.abs(rate_a - rate_b) < epsilon
    pp_defined = (pred_a > 0) & (pred_b > 0)
    with np.errstate(invalid="ignore"):
        pp = np.abs(prec_a - prec_b) < epsilon

    n_total = a.n_genuine + a.n_impostor + b.n_genuine + b.n_impostor
    pooled_rate = (pred_a + pred_b) / n_total
    perfect = (fg_a + fg_b == 0) & (fi_a + fi_b == 0)
    base_rates = (
        a.n_genuine / (a.n_genuine + a.n_impostor),
        b.n_genuine / (b.n_genuine + b.n_impostor),
    )
    gap = abs(base_rates[0] - base_rates[1])

    results = []
    for k, tau in enumerate(thresholds):
        pp_k = bool(pp[k]) if pp_defined[k] else None
        r = ThresholdResult(float(tau), bool(eo[k]), bool(sp[k]), pp_k)
        if r.satisfied:
            r = ThresholdResult(r.threshold, True, True, True, _classify(float(pooled_rate[k]), bool(perfect[k]), gap, epsilon))
        results.append(r)
    return PairVerdict(label_a, label_b, epsilon, base_rates, tuple(results))


def verify(records: Sequence[ScoreRecord], part: GroupPartition, epsilon: float = DEFAULT_EPSILON) -> ImpossibilityVerdict:
    """Check every decision threshold between the cells of ``part``.

    Partitions with more than two cells are checked pair by pair.
    """
    cells = [c for c in part.cells if c.indices]
    if len(cells) < 2:
        raise PartitionError(f"partition {part.name!r} needs at least two non-empty cells, has {len(cells)}")
    arrays = cell_arrays(part, records)
    notes = []
    if len(cells) > 2:
        notes.append(f"{len(cells)} cells: checked as {len(cells) * (len(cells) - 1) // 2} pairwise two-group problems")
    if part.empty_cells:
        notes.append(f"empty cells skipped: {list(part.empty_cells)}")
    pairs = tuple(
        verify_pair(x.label, arrays[x.label], y.label, arrays[y.label], epsilon) for x, y in itertools.combinations(cells, 2)
    )
    return ImpossibilityVerdict(epsilon, pairs, tuple(notes))


def bayes_residual(records: Sequence[ScoreRecord], part: GroupPartition, tau: float) -> dict[str, float | None]:
    """Per cell, |precision - tgr * base_rate / predicted_rate| at ``tau`` (None if undefined)."""
    return {label: bayes_residual_from_counts(c) for label, c in cell_counts(part, records, tau).items()}


@dataclass(frozen=True)
class TrialOutcome:
    trial_seed: int
    separation: float
    verdict: PairVerdict

    def to_dict(self) -> dict:
        return {"trial_seed": self.trial_seed, "separation": self.separation, **self.verdict.to_dict(detail=False)}


@dataclass(frozen=True)
class TrialsVerdict:
    seed: int
    epsilon: float
    trials: tuple[TrialOutcome, ...]

    @property
    def n_confirmed(self) -> int:
        return sum(1 for t in self.trials if not t.verdict.counterexamples)

    @property
    def confirmed(self) -> bool:
        return self.n_confirmed == len(self.trials)

    def summary_line(self) -> str:
        classes: Counter = Counter()
        for t in self.trials:
            classes.update(t.verdict.classifications)
        return f"{_summary(classes)} {self.n_confirmed}/{len(self.trials)} trials"

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "epsilon": self.epsilon,
            "n_trials": len(self.trials),
            "n_confirmed": self.n_confirmed,
            "confirmed": self.confirmed,
            "summary": self.summary_line(),
            "trials": [t.to_dict() for t in self.trials],
        }


def verify_synthetic(trials: int, seed: int, epsilon: float = DEFAULT_EPSILON) -> TrialsVerdict:
    """Run the sweep on ``trials`` random two-group populations with unequal
    base rates and overlapping score distributions."""
    outcomes = []
    for ts in trial_seeds(seed, trials):
        spec = random_overlapping_pair(ts)
        records = generate(spec)
        g = {c.label: ([], []) for c in spec.cells}
        for r in records:
            g[r.attributes["group"]][0 if r.genuine else 1].append(r.score)
        (la, (ga, ia)), (lb, (gb, ib)) = g.items()
        v = verify_pair(la, ScoreArrays(np.array(ga), np.array(ia)), lb, ScoreArrays(np.array(gb), np.array(ib)), epsilon)
        outcomes.append(TrialOutcome(ts, spec.metadata["separation"], v))
    return TrialsVerdict(seed, epsilon, tuple(outcomes))
