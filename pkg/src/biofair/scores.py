"""Score records, attribute schemas, score-file ingestion and demographic partitions."""

from __future__ import annotations

import csv
import enum
import io
import itertools
import json
import math
import os
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence, Union

from ._io import atomic_write_text, canonical_json, format_float, sha256_bytes
from .errors import DatasetError, PartitionError, RowError, SchemaError

AttrValue = Union[str, int]

REQUIRED_COLUMNS = ("pair_id", "score", "label")


class Label(str, enum.Enum):
    GENUINE = "genuine"
    IMPOSTOR = "impostor"

    @classmethod
    def parse(cls, raw: str) -> "Label":
        try:
            return cls(raw.strip().lower())
        except ValueError:
            raise ValueError(f"label must be 'genuine' or 'impostor', got {raw!r}") from None


@dataclass(frozen=True)
class ScoreRecord:
    """One comparison attempt, attributed to the enrolled subject."""

    pair_id: str
    score: float
    label: Label
    attributes: Mapping[str, AttrValue] = field(default_factory=dict, hash=False)

    @property
    def genuine(self) -> bool:
        return self.label is Label.GENUINE


class RecordSet(list):
    """A list of ScoreRecord that remembers where it came from.

    ``digest`` is the SHA-256 of the source bytes (score file or canonical
    population spec) and ends up in report provenance.
    """

    def __init__(self, records: Iterable[ScoreRecord] = (), digest: str | None = None, source: str | None = None):
        super().__init__(records)
        self.digest = digest
        self.source = source


# ---------------------------------------------------------------------------
# schema


@dataclass(frozen=True)
class Bin:
    name: str
    values: tuple[str, ...] | None = None  # categorical
    above: int | None = None  # integer: value > above
    upto: int | None = None  # integer: value <= upto

    def contains(self, value: AttrValue) -> bool:
        if self.values is not None:
            return value in self.values
        if self.above is not None and not value > self.above:
            return False
        if self.upto is not None and not value <= self.upto:
            return False
        return True

    def to_dict(self) -> dict:
        d: dict = {"name": self.name}
        if self.values is not None:
            d["values"] = list(self.values)
        if self.above is not None:
            d["above"] = self.above
        if self.upto is not None:
            d["upto"] = self.upto
        return d


@dataclass(frozen=True)
class Attribute:
    name: str
    kind: str  # "categorical" | "integer"
    values: tuple[str, ...] = ()
    min: int | None = None
    max: int | None = None
    bins: tuple[Bin, ...] = ()

    def __post_init__(self):
        if self.kind not in ("categorical", "integer"):
            raise SchemaError(f"attribute {self.name!r}: unknown kind {self.kind!r}")
        names = [b.name for b in self.bins]
        if len(set(names)) != len(names):
            raise SchemaError(f"attribute {self.name!r}: duplicate bin names")
        if self.kind == "categorical":
            self._check_categorical()
        else:
            self._check_integer()

    def _check_categorical(self):
        if not self.values:
            raise SchemaError(f"attribute {self.name!r}: categorical attribute needs 'values'")
        if len(set(self.values)) != len(self.values):
            raise SchemaError(f"attribute {self.name!r}: duplicate values")
        if not self.bins:
            object.__setattr__(self, "bins", tuple(Bin(v, values=(v,)) for v in self.values))
            return
        seen: Counter = Counter()
        for b in self.bins:
            if b.values is None:
                raise SchemaError(f"attribute {self.name!r}: bin {b.name!r} needs 'values'")
            for v in b.values:
                if v not in self.values:
                    raise SchemaError(f"attribute {self.name!r}: bin {b.name!r} lists undeclared value {v!r}")
                seen[v] += 1
        for v in self.values:
            if seen[v] != 1:
                raise SchemaError(
                    f"attribute {self.name!r}: value {v!r} falls in {seen[v]} bins; bins must be exhaustive and disjoint"
                )

    def _check_integer(self):
        if self.min is None or self.max is None or self.min > self.max:
            raise SchemaError(f"attribute {self.name!r}: integer attribute needs min <= max")
        if not self.bins:
            raise SchemaError(f"attribute {self.name!r}: integer attribute needs bins")
        spans = []
        for b in self.bins:
            if b.values is not None:
                raise SchemaError(f"attribute {self.name!r}: integer bin {b.name!r} takes 'above'/'upto', not 'values'")
            lo = self.min if b.above is None else max(self.min, b.above + 1)
            hi = self.max if b.upto is None else min(self.max, b.upto)
            if lo > hi:
                raise SchemaError(f"attribute {self.name!r}: bin {b.name!r} is empty over [{self.min}, {self.max}]")
            spans.append((lo, hi, b.name))
        spans.sort()
        expected = self.min
        for lo, hi, name in spans:
            if lo != expected:
                what = "overlaps" if lo < expected else "leaves a gap before"
                raise SchemaError(f"attribute {self.name!r}: bin {name!r} {what} value {expected}")
            expected = hi + 1
        if expected != self.max + 1:
            raise SchemaError(f"attribute {self.name!r}: bins do not reach max {self.max}")

    def parse(self, raw: str) -> AttrValue:
        raw = raw.strip()
        if raw == "":
            raise ValueError(f"attribute {self.name!r} is empty")
        if self.kind == "categorical":
            if raw not in self.values:
                raise ValueError(f"attribute {self.name!r}: undeclared value {raw!r}")
            return raw
        try:
            value = int(raw)
        except ValueError:
            raise ValueError(f"attribute {self.name!r}: {raw!r} is not an integer") from None
        if not self.min <= value <= self.max:
            raise ValueError(f"attribute {self.name!r}: {value} outside [{self.min}, {self.max}]")
        return value

    def bin_of(self, value: AttrValue) -> str:
        for b in self.bins:
            if b.contains(value):
                return b.name
        raise PartitionError(f"attribute {self.name!r}: value {value!r} is outside every declared bin")

    def to_dict(self) -> dict:
        d: dict = {"name": self.name, "kind": self.kind, "bins": [b.to_dict() for b in self.bins]}
        if self.kind == "categorical":
            d["values"] = list(self.values)
        else:
            d["min"], d["max"] = self.min, self.max
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "Attribute":
        try:
            name, kind = d["name"], d["kind"]
        except KeyError as exc:
            raise SchemaError(f"attribute entry missing {exc.args[0]!r}") from None
        bins = []
        for b in d.get("bins", ()):
            if "name" not in b:
                raise SchemaError(f"attribute {name!r}: bin without a name")
            bins.append(
                Bin(
                    str(b["name"]),
                    values=tuple(str(v) for v in b["values"]) if "values" in b else None,
                    above=b.get("above"),
                    upto=b.get("upto"),
                )
            )
        return cls(
            name=str(name),
            kind=str(kind),
            values=tuple(str(v) for v in d.get("values", ())),
            min=d.get("min"),
            max=d.get("max"),
            bins=tuple(bins),
        )


@dataclass(frozen=True)
class AttributeSchema:
    attributes: tuple[Attribute, ...]

    def __post_init__(self):
        names = [a.name for a in self.attributes]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate attribute names in schema")
        clash = set(names) & set(REQUIRED_COLUMNS)
        if clash:
            raise SchemaError(f"attribute name(s) {sorted(clash)} collide with reserved columns")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.attributes)

    def attribute(self, name: str) -> Attribute:
        for a in self.attributes:
            if a.name == name:
                return a
        raise PartitionError(f"unknown attribute {name!r}; schema declares {list(self.names)}")

    def to_dict(self) -> dict:
        return {"attributes": [a.to_dict() for a in self.attributes]}

    @property
    def digest(self) -> str:
        return sha256_bytes(canonical_json(self.to_dict()).encode())

    @classmethod
    def from_dict(cls, d: Mapping) -> "AttributeSchema":
        if not isinstance(d, Mapping) or "attributes" not in d:
            raise SchemaError("schema document must be an object with an 'attributes' list")
        return cls(tuple(Attribute.from_dict(a) for a in d["attributes"]))

    @classmethod
    def load(cls, path: str | os.PathLike) -> "AttributeSchema":
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except FileNotFoundError:
            raise SchemaError(f"schema file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise SchemaError(f"schema file {path} is not valid JSON: {exc}") from None
        return cls.from_dict(doc)

    def save(self, path: str | os.PathLike) -> Path:
        return atomic_write_text(path, canonical_json(self.to_dict()))


def default_schema(age_boundary: int = 45) -> AttributeSchema:
    """Age young/old split at ``age_boundary`` (inclusive on the young side),
    binary gender, and race collapsed to European / non-European."""
    non_european = ("East Asian", "Central Asian", "African", "Other")
    return AttributeSchema(
        (
            Attribute(
                "age",
                "integer",
                min=0,
                max=130,
                bins=(Bin("young", upto=age_boundary), Bin("old", above=age_boundary)),
            ),
            Attribute("gender", "categorical", values=("F", "M")),
            Attribute(
                "race",
                "categorical",
                values=("European",) + non_european,
                bins=(Bin("European", values=("European",)), Bin("non-European", values=non_european)),
            ),
        )
    )


# ---------------------------------------------------------------------------
# ingestion


def _parse_rows(text: str, schema: AttributeSchema, source: str) -> list[ScoreRecord]:
    reader = csv.reader(io.StringIO(text, newline=""))
    try:
        header = next(reader)
    except StopIteration:
        raise DatasetError(f"{source}: file is empty") from None
    header = [h.strip() for h in header]
    for col in REQUIRED_COLUMNS + schema.names:
        if col not in header:
            raise SchemaError(f"{source}: missing required column {col!r}")
    pos = {name: header.index(name) for name in REQUIRED_COLUMNS + schema.names}

    records = []
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise RowError(line, f"expected {len(header)} fields, got {len(row)}")
        raw_score = row[pos["score"]].strip()
        try:
            score = float(raw_score)
        except ValueError:
            raise RowError(line, f"score {raw_score!r} is not a number") from None
        if not math.isfinite(score):
            raise RowError(line, f"score {raw_score!r} is not finite")
        try:
            label = Label.parse(row[pos["label"]])
            attrs = {a.name: a.parse(row[pos[a.name]]) for a in schema.attributes}
        except ValueError as exc:
            raise RowError(line, str(exc)) from None
        pair_id = row[pos["pair_id"]].strip()
        if not pair_id:
            raise RowError(line, "pair_id is empty")
        records.append(ScoreRecord(pair_id, score, label, attrs))
    if not records:
        raise DatasetError(f"{source}: no data rows")
    return records


def load_scores(path: str | os.PathLike, schema: AttributeSchema) -> RecordSet:
    """Read a score CSV into a RecordSet.

    Columns are ``pair_id, score, label`` followed by one column per schema
    attribute; extra columns are ignored. Every row must validate against the
    schema; nothing is imputed.
    """
    try:
        data = Path(path).read_bytes()
    except FileNotFoundError:
        raise DatasetError(f"score file not found: {path}") from None
    try:
        text = data.decode("utf-8-sig")
    except UnicodeDecodeError as exc:
        raise DatasetError(f"{path}: not UTF-8 ({exc})") from None
    return RecordSet(_parse_rows(text, schema, str(path)), digest=sha256_bytes(data), source=str(path))


def format_scores(records: Sequence[ScoreRecord], schema: AttributeSchema) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REQUIRED_COLUMNS + schema.names)
    for r in records:
        w.writerow([r.pair_id, format_float(r.score), r.label.value] + [r.attributes[n] for n in schema.names])
    return buf.getvalue()


def write_scores(records: Sequence[ScoreRecord], schema: AttributeSchema, path: str | os.PathLike) -> Path:
    return atomic_write_text(path, format_scores(records, schema))


# ---------------------------------------------------------------------------
# partitions


@dataclass(frozen=True)
class Cell:
    label: str
    indices: tuple[int, ...]

    @property
    def size(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class GroupPartition:
    name: str
    axes: tuple[str, ...]
    cells: tuple[Cell, ...]

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(c.label for c in self.cells)

    @property
    def empty_cells(self) -> tuple[str, ...]:
        return tuple(c.label for c in self.cells if not c.indices)

    def cell(self, label: str) -> Cell:
        for c in self.cells:
            if c.label == label:
                return c
        raise KeyError(label)

    def total(self) -> int:
        return sum(c.size for c in self.cells)


def partition(
    records: Sequence[ScoreRecord], schema: AttributeSchema, axes: Sequence[str], name: str | None = None
) -> GroupPartition:
    """Split records into the cross product of the bins of ``axes``.

    Cell labels join bin names with ``-`` in axis order (``young-F``). Cells
    for unobserved combinations are kept with no indices.
    """
    if not axes:
        raise PartitionError("partition needs at least one axis")
    if len(set(axes)) != len(axes):
        raise PartitionError(f"repeated axis in {list(axes)}")
    attrs = [schema.attribute(a) for a in axes]
    combos = list(itertools.product(*[[b.name for b in a.bins] for a in attrs]))
    members: dict[tuple[str, ...], list[int]] = {c: [] for c in combos}
    for i, r in enumerate(records):
        key = []
        for a in attrs:
            if a.name not in r.attributes:
                raise PartitionError(f"record {r.pair_id!r} has no attribute {a.name!r}")
            key.append(a.bin_of(r.attributes[a.name]))
        members[tuple(key)].append(i)
    cells = tuple(Cell("-".join(c), tuple(members[c])) for c in combos)
    part = GroupPartition(name or "+".join(axes), tuple(axes), cells)
    assert part.total() == len(records)
    return part


# ---------------------------------------------------------------------------
# summary


@dataclass(frozen=True)
class SummaryRow:
    attribute: str
    level: str  # "bin" or "raw"
    value: str
    count: int
    fraction: float

    def to_dict(self) -> dict:
        return {
            "attribute": self.attribute,
            "level": self.level,
            "value": self.value,
            "count": self.count,
            "fraction": self.fraction,
        }


def demographic_summary(records: Sequence[ScoreRecord], schema: AttributeSchema) -> list[SummaryRow]:
    """Counts and fractions per bin for every attribute, plus raw-value
    counts for categorical attributes (raw labels are kept only here)."""
    if not records:
        raise DatasetError("demographic summary of an empty record set")
    n = len(records)
    rows = []
    for a in schema.attributes:
        bins = Counter(a.bin_of(r.attributes[a.name]) for r in records)
        rows += [SummaryRow(a.name, "bin", b.name, bins[b.name], bins[b.name] / n) for b in a.bins]
        if a.kind == "categorical" and any(len(b.values or ()) > 1 for b in a.bins):
            raw = Counter(r.attributes[a.name] for r in records)
            rows += [SummaryRow(a.name, "raw", v, raw[v], raw[v] / n) for v in a.values]
    return rows
