import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from biofair.errors import CurveError, ParameterError
from biofair.rates import (
    DET_COLUMNS,
    EER,
    NEAR_ZFIR,
    ZFGR,
    ZFIR,
    ConfusionCounts,
    OperatingPointSpec,
    RateSet,
    candidate_thresholds,
    count_confusion,
    fgr_target,
    fixed,
    format_det_csv,
    rate_curve,
    resolve,
    resolve_operating_point,
)
from conftest import datasets, make_records, naive_counts


def test_manual_count_example():
    records = make_records([0.9, 0.8, 0.4], [0.6, 0.3, 0.1])
    assert count_confusion(records, 0.5) == ConfusionCounts(tg=2, ti=2, fg=1, fi=1)


def test_boundary_thresholds():
    records = make_records([0.9, 0.8, 0.4], [0.6, 0.3, 0.1])
    assert count_confusion(records, -10) == ConfusionCounts(3, 0, 3, 0)
    assert count_confusion(records, 10) == ConfusionCounts(0, 3, 0, 3)


def test_ties_are_rejected():
    records = make_records([0.5], [0.5])
    assert count_confusion(records, 0.5) == ConfusionCounts(0, 1, 0, 1)


def test_negative_counts_rejected():
    with pytest.raises(ValueError):
        ConfusionCounts(-1, 0, 0, 0)


def test_undefined_rates_are_none():
    r = RateSet.from_counts(0.0, ConfusionCounts(0, 2, 0, 0))
    assert r.tgr is None and r.fir is None
    assert r.tir == 1.0 and r.fgr == 0.0
    assert r.precision is None


def test_separated_curve_five_points():
    curve = rate_curve(make_records([0.8, 0.6], [0.4, 0.2]))
    assert len(curve) == 5
    mid = [r for r in curve if r.threshold == 0.5]
    assert len(mid) == 1 and mid[0].fgr == 0 and mid[0].fir == 0


def test_identical_multisets_mirror():
    scores = [0.1, 0.4, 0.4, 0.7, 0.9]
    for r in rate_curve(make_records(scores, scores)):
        assert r.counts.fg + r.counts.fi == len(scores)
        assert r.fgr == pytest.approx(1 - r.fir, abs=1e-15)


def test_all_scores_equal_two_points():
    curve = rate_curve(make_records([0.3, 0.3], [0.3]))
    assert len(curve) == 2
    assert (curve[0].tgr, curve[0].fgr) == (1.0, 1.0)
    assert (curve[1].tgr, curve[1].fgr) == (0.0, 0.0)


def test_single_label_names_missing():
    with pytest.raises(CurveError, match="impostor"):
        rate_curve(make_records([0.1, 0.2], []))
    with pytest.raises(CurveError, match="genuine"):
        rate_curve(make_records([], [0.1]))


def test_adjacent_doubles_split():
    a = 1.0
    b = math.nextafter(a, 2.0)
    t = candidate_thresholds([a, b])
    assert len(t) == 3
    assert a <= t[1] < b


def test_operating_points_separated():
    curve = rate_curve(make_records([0.8, 0.6], [0.4, 0.2]))
    eer = resolve_operating_point(curve, EER)
    assert eer.value == 0 and eer.resolved_threshold == 0.5
    z = resolve_operating_point(curve, ZFIR)
    assert z.achieved.fir == 0 and z.resolved_threshold == 0.5
    zg = resolve_operating_point(curve, ZFGR)
    assert zg.achieved.fgr == 0 and zg.resolved_threshold == 0.5
    nz = resolve_operating_point(curve, NEAR_ZFIR)
    assert nz.resolved_threshold == 0.7 and nz.achieved.fir == 0.5


def test_fgr_target_scan():
    # explicit curve: fgr 0.5, 0.1, 0.002, 0.0005, 0 over 2000 impostors
    fgs = [1000, 200, 4, 1, 0]
    curve = [
        RateSet.from_counts(float(k), ConfusionCounts(tg=10 - k, ti=2000 - fg, fg=fg, fi=k))
        for k, fg in enumerate(fgs)
    ]
    assert [r.fgr for r in curve] == [0.5, 0.1, 0.002, 0.0005, 0.0]
    op = resolve_operating_point(curve, fgr_target(0.001))
    assert op.achieved.fgr == 0.0005
    assert op.resolved_threshold == 3.0
    assert op.value == op.achieved.fir


def test_fgr_target_sparse_warning():
    curve = rate_curve(make_records([0.8, 0.6], [0.4, 0.2]))
    assert resolve_operating_point(curve, fgr_target(0.3)).warnings
    assert not resolve_operating_point(curve, fgr_target(0.5)).warnings


def test_eer_tie_prefers_smaller_threshold():
    curve = rate_curve(make_records([0.4, 0.8], [0.2, 0.6]))
    eer = resolve_operating_point(curve, EER)
    tied = [r.threshold for r in curve if abs(r.fgr - r.fir) == abs(eer.achieved.fgr - eer.achieved.fir)]
    assert eer.resolved_threshold == min(tied)


@pytest.mark.parametrize("text", ["fgr@-0.1", "fgr@1.5", "fgr@x", "bogus", "eer@1", "fixed@nan"])
def test_bad_operating_points(text):
    with pytest.raises(ParameterError):
        OperatingPointSpec.parse(text)


def test_parse_list_and_labels():
    specs = OperatingPointSpec.parse_list("eer, fgr@0.001,zfgr,zfir,near-zfir,fixed@0.25")
    assert [s.label for s in specs] == ["eer", "fgr@0.001", "zfgr", "zfir", "near-zfir", "fixed@0.25"]


def test_fixed_resolves_from_records():
    records = make_records([0.9, 0.8, 0.4], [0.6, 0.3, 0.1])
    op = resolve(records, fixed(0.5))
    assert op.achieved.counts == ConfusionCounts(2, 2, 1, 1)
    with pytest.raises(ParameterError):
        resolve_operating_point(rate_curve(records), fixed(0.5))


def test_det_csv_shape():
    text = format_det_csv(rate_curve(make_records([0.8, 0.6], [0.4, 0.2])))
    rows = list(csv.reader(io.StringIO(text)))
    assert tuple(rows[0]) == DET_COLUMNS
    assert len(rows) == 6
    th = [float(r[0]) for r in rows[1:]]
    assert th == sorted(th)


@given(datasets())
@settings(max_examples=300)
def test_curve_matches_naive_oracle(records):
    for r in rate_curve(records):
        tg, ti, fg, fi = naive_counts(records, r.threshold)
        assert (r.counts.tg, r.counts.ti, r.counts.fg, r.counts.fi) == (tg, ti, fg, fi)
        assert r.tgr == tg / (tg + fi) and r.fgr == fg / (fg + ti)


@given(datasets())
@settings(max_examples=300)
def test_candidates_cover_every_split_once(records):
    curve = rate_curve(records)
    scores = sorted({r.score for r in records})
    # probing every score and the gaps around them finds exactly the curve's splits
    probes = [scores[0] - 1] + scores
    splits = {naive_counts(records, t) for t in probes}
    got = [(r.counts.tg, r.counts.ti, r.counts.fg, r.counts.fi) for r in curve]
    assert len(got) == len(set(got)) == len(splits)
    assert set(got) == splits


@given(datasets())
@settings(max_examples=300)
def test_monotone_and_identities(records):
    curve = rate_curve(records)
    for a, b in zip(curve, curve[1:]):
        assert a.threshold < b.threshold
        assert a.fgr >= b.fgr and a.fir <= b.fir
    for r in curve:
        assert r.tgr + r.fir == pytest.approx(1, abs=1e-12)
        assert r.tir + r.fgr == pytest.approx(1, abs=1e-12)


@given(datasets(), st.floats(0, 1))
@settings(max_examples=300)
def test_fgr_target_never_exceeds(records, t):
    curve = rate_curve(records)
    op = resolve_operating_point(curve, fgr_target(t))
    assert op.achieved.fgr <= t
    assert op.achieved.fgr == max(r.fgr for r in curve if r.fgr <= t)


@given(datasets())
@settings(max_examples=300)
def test_eer_neighbour_consistency(records):
    curve = rate_curve(records)
    op = resolve_operating_point(curve, EER)
    i = next(k for k, r in enumerate(curve) if r.threshold == op.resolved_threshold)
    gap = abs(op.achieved.fgr - op.achieved.fir)
    for j in (i - 1, i + 1):
        if 0 <= j < len(curve):
            assert gap <= abs(curve[j].fgr - curve[j].fir)
    assert op.value == (op.achieved.fgr + op.achieved.fir) / 2


@given(datasets())
@settings(max_examples=200)
def test_zero_points(records):
    curve = rate_curve(records)
    assert resolve_operating_point(curve, ZFIR).achieved.fir == 0
    assert resolve_operating_point(curve, ZFGR).achieved.fgr == 0
    assert resolve_operating_point(curve, NEAR_ZFIR).achieved.fir > 0


def test_scale_invariance_on_counts():
    rng = np.random.default_rng(3)
    g, i = rng.normal(1, 1, 50), rng.normal(0, 1, 50)
    base = make_records(g, i)
    moved = make_records(3 * g + 7, 3 * i + 7)
    for tau in np.linspace(-2, 3, 23):
        assert count_confusion(base, tau) == count_confusion(moved, 3 * tau + 7)
