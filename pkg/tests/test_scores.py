import pytest
from hypothesis import given, settings, strategies as st

from biofair.errors import DatasetError, PartitionError, RowError, SchemaError
from biofair.scores import (
    Attribute,
    AttributeSchema,
    Bin,
    Label,
    ScoreRecord,
    default_schema,
    demographic_summary,
    load_scores,
    partition,
    write_scores,
)

HEADER = "pair_id,score,label,age,gender,race\n"


def write(tmp_path, body, header=HEADER):
    p = tmp_path / "scores.csv"
    p.write_text(header + body, encoding="utf-8")
    return p


def rec(i, age=30, gender="M", race="European", score=0.5, label=Label.GENUINE):
    return ScoreRecord(f"p{i}", score, label, {"age": age, "gender": gender, "race": race})


def test_load_two_rows(tmp_path):
    p = write(tmp_path, "p1,0.91,genuine,30,M,European\np2,0.12,IMPOSTOR,50,F,African\n")
    records = load_scores(p, default_schema())
    assert len(records) == 2
    assert records[0] == ScoreRecord("p1", 0.91, Label.GENUINE, {"age": 30, "gender": "M", "race": "European"})
    assert records[1].label is Label.IMPOSTOR
    assert records[1].attributes == {"age": 50, "gender": "F", "race": "African"}
    assert len(records.digest) == 64


def test_nan_score_cites_line(tmp_path):
    p = write(tmp_path, "p1,0.91,genuine,30,M,European\nq,NaN,genuine,30,M,European\n")
    with pytest.raises(RowError, match="line 3") as exc:
        load_scores(p, default_schema())
    assert exc.value.line == 3


@pytest.mark.parametrize("bad", ["inf", "-Infinity", "abc", ""])
def test_bad_scores_rejected(tmp_path, bad):
    p = write(tmp_path, f"p1,{bad},genuine,30,M,European\n")
    with pytest.raises(RowError, match="line 2"):
        load_scores(p, default_schema())


def test_missing_column_named(tmp_path):
    p = write(tmp_path, "p1,0.9,genuine,30,M\n", header="pair_id,score,label,age,gender\n")
    with pytest.raises(SchemaError, match="'race'"):
        load_scores(p, default_schema())


@pytest.mark.parametrize(
    "row",
    [
        "p1,0.9,genuine,30,X,European",  # undeclared value
        "p1,0.9,genuine,,M,European",  # empty attribute is never imputed
        "p1,0.9,genuine,200,M,European",  # outside declared range
        "p1,0.9,match,30,M,European",  # bad label
    ],
)
def test_row_errors(tmp_path, row):
    with pytest.raises(RowError):
        load_scores(write(tmp_path, row + "\n"), default_schema())


def test_empty_file(tmp_path):
    p = tmp_path / "e.csv"
    p.write_text("")
    with pytest.raises(DatasetError):
        load_scores(p, default_schema())
    with pytest.raises(DatasetError):
        load_scores(write(tmp_path, ""), default_schema())


def test_plusvein_shaped_file(tmp_path):
    # 60 subjects x 24 images: one score row per image comparison
    rows = []
    for subj in range(60):
        for k in range(24):
            lab = "genuine" if k % 2 else "impostor"
            rows.append(f"s{subj}-{k},{(subj * 24 + k) / 1440},{lab},{20 + subj % 50},{'MF'[subj % 2]},European")
    records = load_scores(write(tmp_path, "\n".join(rows) + "\n"), default_schema())
    assert len(records) == 1440


def test_schema_roundtrip_and_validation(tmp_path):
    s = default_schema()
    p = tmp_path / "schema.json"
    s.save(p)
    assert AttributeSchema.load(p) == s
    assert AttributeSchema.load(p).digest == s.digest
    with pytest.raises(SchemaError, match="overlaps"):
        Attribute("age", "integer", min=0, max=99, bins=(Bin("a", upto=45), Bin("b", above=40)))
    with pytest.raises(SchemaError, match="gap"):
        Attribute("age", "integer", min=0, max=99, bins=(Bin("a", upto=40), Bin("b", above=45)))
    with pytest.raises(SchemaError, match="exhaustive"):
        Attribute("race", "categorical", values=("x", "y"), bins=(Bin("only", values=("x",)),))
    with pytest.raises(SchemaError, match="duplicate bin"):
        Attribute("g", "categorical", values=("x", "y"), bins=(Bin("b", values=("x",)), Bin("b", values=("y",))))
    with pytest.raises(SchemaError):
        AttributeSchema.load(tmp_path / "missing.json")


def test_age_boundary_inclusive_young():
    age = default_schema().attribute("age")
    assert age.bin_of(45) == "young"
    assert age.bin_of(46) == "old"
    assert default_schema(age_boundary=50).attribute("age").bin_of(48) == "young"


def test_partition_single_axis():
    records = [rec(0, age=30), rec(1, age=50)]
    part = partition(records, default_schema(), ["age"])
    assert part.labels == ("young", "old")
    assert part.cell("young").indices == (0,)
    assert part.cell("old").indices == (1,)


def test_partition_intersectional():
    records = [rec(0, 30, "F"), rec(1, 50, "F"), rec(2, 30, "M"), rec(3, 50, "M")]
    part = partition(records, default_schema(), ["age", "gender"])
    assert set(part.labels) == {"young-F", "old-F", "young-M", "old-M"}
    assert all(c.size == 1 for c in part.cells)
    assert part.name == "age+gender"


def test_partition_race_binning():
    # by hand: European -> European; East Asian, African -> non-European
    records = [rec(0, race="European"), rec(1, race="East Asian"), rec(2, race="African")]
    part = partition(records, default_schema(), ["race"])
    assert part.cell("European").size == 1
    assert part.cell("non-European").size == 2


def test_partition_reports_empty_cells():
    part = partition([rec(0, 30, "F")], default_schema(), ["age", "gender"])
    assert set(part.empty_cells) == {"old-F", "young-M", "old-M"}
    assert part.total() == 1


def test_partition_errors():
    with pytest.raises(PartitionError, match="unknown attribute"):
        partition([rec(0)], default_schema(), ["height"])
    with pytest.raises(PartitionError):
        partition([ScoreRecord("x", 0.1, Label.GENUINE, {"gender": "F"})], default_schema(), ["age"])


def test_summary_gender_split():
    records = [rec(i, gender="M") for i in range(6)] + [rec(i + 6, gender="F") for i in range(4)]
    rows = {(r.attribute, r.value): r for r in demographic_summary(records, default_schema())}
    assert rows["gender", "M"].fraction == pytest.approx(0.6)
    assert rows["gender", "F"].fraction == pytest.approx(0.4)


def test_summary_single_record():
    rows = demographic_summary([rec(0)], default_schema())
    assert {(r.attribute, r.value): r.fraction for r in rows if r.level == "bin" and r.count}[("age", "young")] == 1.0


def test_summary_race_split_raw_labels_kept():
    labels = ("European", "East Asian", "Central Asian", "Label-D", "African")
    schema = AttributeSchema(
        (
            Attribute(
                "race",
                "categorical",
                values=labels,
                bins=(Bin("European", values=("European",)), Bin("non-European", values=labels[1:])),
            ),
        )
    )
    counts = (54, 3, 1, 1, 1)  # 60 subjects
    records = [
        ScoreRecord(f"{lab}{k}", 0.0, Label.GENUINE, {"race": lab}) for lab, n in zip(labels, counts) for k in range(n)
    ]
    raw = {r.value: r for r in demographic_summary(records, schema) if r.level == "raw"}
    for lab, pct in zip(labels, (0.90, 0.05, 0.016, 0.016, 0.016)):
        assert abs(raw[lab].count - pct * 60) <= 1
    binned = {r.value: r.fraction for r in demographic_summary(records, schema) if r.level == "bin"}
    assert binned == pytest.approx({"European": 0.9, "non-European": 0.1})


def test_summary_fractions_sum_to_one():
    records = [rec(i, age=20 + 7 * i, gender="MF"[i % 2]) for i in range(11)]
    rows = demographic_summary(records, default_schema())
    for attr in ("age", "gender", "race"):
        assert sum(r.fraction for r in rows if r.attribute == attr and r.level == "bin") == pytest.approx(1.0)


def test_summary_empty():
    with pytest.raises(DatasetError):
        demographic_summary([], default_schema())


record_st = st.builds(
    lambda i, s, g, a, gen, race: ScoreRecord(
        f"id{i}", s, Label.GENUINE if g else Label.IMPOSTOR, {"age": a, "gender": gen, "race": race}
    ),
    st.integers(0, 10**6),
    st.floats(allow_nan=False, allow_infinity=False),
    st.booleans(),
    st.integers(0, 130),
    st.sampled_from(["F", "M"]),
    st.sampled_from(["European", "East Asian", "Central Asian", "African", "Other"]),
)


@given(st.lists(record_st, min_size=1, max_size=30))
@settings(max_examples=150, deadline=None)
def test_ingestion_is_lossless(tmp_path_factory, records):
    schema = default_schema()
    p = tmp_path_factory.mktemp("rt") / "s.csv"
    write_scores(records, schema, p)
    loaded = load_scores(p, schema)
    assert [(r.score, r.label, dict(r.attributes)) for r in loaded] == [
        (r.score, r.label, dict(r.attributes)) for r in records
    ]


@given(st.lists(record_st, min_size=1, max_size=30), st.randoms())
@settings(max_examples=150)
def test_partition_exhaustive_and_order_free(records, rnd):
    schema = default_schema()
    part = partition(records, schema, ["age", "gender"])
    assert part.total() == len(records)
    seen = sorted(i for c in part.cells for i in c.indices)
    assert seen == list(range(len(records)))

    shuffled = list(records)
    rnd.shuffle(shuffled)
    other = partition(shuffled, schema, ["age", "gender"])
    assert other.labels == part.labels
    for a, b in zip(part.cells, other.cells):
        assert sorted(records[i].pair_id for i in a.indices) == sorted(shuffled[i].pair_id for i in b.indices)
