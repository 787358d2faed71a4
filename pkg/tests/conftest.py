import numpy as np
import pytest
from hypothesis import strategies as st

from biofair.scores import AttributeSchema, Attribute, Label, ScoreRecord, partition


def make_records(genuine=(), impostor=(), prefix="r", **attrs):
    out = []
    for i, s in enumerate(genuine):
        out.append(ScoreRecord(f"{prefix}g{i}", float(s), Label.GENUINE, dict(attrs)))
    for i, s in enumerate(impostor):
        out.append(ScoreRecord(f"{prefix}i{i}", float(s), Label.IMPOSTOR, dict(attrs)))
    return out


GROUP_SCHEMA = AttributeSchema((Attribute("group", "categorical", values=("A", "B")),))


def two_groups(a_gen, a_imp, b_gen, b_imp):
    records = make_records(a_gen, a_imp, prefix="a", group="A") + make_records(b_gen, b_imp, prefix="b", group="B")
    return records, partition(records, GROUP_SCHEMA, ["group"])


def naive_counts(records, tau):
    """Per-record loop, kept deliberately independent of the library."""
    tg = ti = fg = fi = 0
    for r in records:
        accepted = r.score > tau
        if r.label is Label.GENUINE:
            if accepted:
                tg += 1
            else:
                fi += 1
        else:
            if accepted:
                fg += 1
            else:
                ti += 1
    return tg, ti, fg, fi


def random_dataset(rng: np.random.Generator, max_size=200, groups=("A", "B")):
    """Random labelled scores; coarse rounding makes ties common."""
    n = int(rng.integers(2, max_size + 1))
    decimals = int(rng.integers(0, 4))
    scores = np.round(rng.normal(0, 1, n), decimals)
    labels = rng.random(n) < rng.uniform(0.1, 0.9)
    labels[0], labels[1] = True, False
    grp = rng.choice(groups, n)
    return [
        ScoreRecord(f"p{i}", float(s), Label.GENUINE if g else Label.IMPOSTOR, {"group": str(c)})
        for i, (s, g, c) in enumerate(zip(scores, labels, grp))
    ]


score_st = st.floats(-5, 5, allow_nan=False, allow_infinity=False).map(lambda x: round(x, 2))


@st.composite
def datasets(draw, min_size=2, max_size=60):
    gen = draw(st.lists(score_st, min_size=1, max_size=max_size // 2))
    imp = draw(st.lists(score_st, min_size=1, max_size=max_size // 2))
    return make_records(gen, imp, group="A")


@st.composite
def grouped_datasets(draw, max_size=60):
    parts = []
    for g in ("A", "B"):
        gen = draw(st.lists(score_st, min_size=1, max_size=max_size // 4))
        imp = draw(st.lists(score_st, min_size=1, max_size=max_size // 4))
        parts += make_records(gen, imp, prefix=g, group=g)
    return parts


@pytest.fixture
def group_schema():
    return GROUP_SCHEMA
