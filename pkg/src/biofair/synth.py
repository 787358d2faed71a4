"""Seeded synthetic score populations.

Each cell draws genuine and impostor scores from its own distributions.
Sampling is a fixed, portable stream: MT19937 seeded through
``init_by_array`` (CPython's ``random.Random(seed)``), 53-bit uniforms from
``genrand_res53``, and Gaussian variates by inverting the normal CDF
(Wichura's AS241, as in ``statistics.NormalDist.inv_cdf``). Draws happen cell
by cell, genuine before impostor, in spec order.
"""

from __future__ import annotations

import json
import os
import random
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Mapping, Union

from ._io import canonical_json, sha256_bytes
from .errors import SpecError
from .scores import Attribute, AttributeSchema, Bin, Label, RecordSet, ScoreRecord

GENERATOR = "mt19937-res53/normal-inv-cdf-as241/v1"


@dataclass(frozen=True)
class Gaussian:
    mean: float
    std: float

    def __post_init__(self):
        if not self.std > 0:
            raise SpecError(f"Gaussian std must be positive, got {self.std}")

    def to_dict(self) -> dict:
        return {"gaussian": {"mean": self.mean, "std": self.std}}


@dataclass(frozen=True)
class ScoreList:
    scores: tuple[float, ...]

    def to_dict(self) -> dict:
        return {"scores": list(self.scores)}


Distribution = Union[Gaussian, ScoreList]


@dataclass(frozen=True)
class CellSpec:
    label: str
    attributes: Mapping[str, Union[str, int]]
    n_genuine: int
    n_impostor: int
    genuine: Distribution | None = None
    impostor: Distribution | None = None

    def __post_init__(self):
        if self.n_genuine < 0 or self.n_impostor < 0:
            raise SpecError(f"cell {self.label!r}: negative count")
        if self.n_genuine + self.n_impostor == 0:
            raise SpecError(f"cell {self.label!r}: no records")
        for name, n, dist in (("genuine", self.n_genuine, self.genuine), ("impostor", self.n_impostor, self.impostor)):
            if n and dist is None:
                raise SpecError(f"cell {self.label!r}: {n} {name} records but no distribution")
            if isinstance(dist, ScoreList) and len(dist.scores) != n:
                raise SpecError(f"cell {self.label!r}: {name} list has {len(dist.scores)} scores, count is {n}")

    @property
    def base_rate(self) -> float:
        return self.n_genuine / (self.n_genuine + self.n_impostor)

    def to_dict(self) -> dict:
        d = {"label": self.label, "attributes": dict(self.attributes)}
        for name, n, dist in (("genuine", self.n_genuine, self.genuine), ("impostor", self.n_impostor, self.impostor)):
            entry = {"count": n}
            if dist is not None:
                entry.update(dist.to_dict())
            d[name] = entry
        return d


@dataclass(frozen=True)
class PopulationSpec:
    cells: tuple[CellSpec, ...]
    seed: int = 0
    name: str = "custom"
    metadata: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if not self.cells:
            raise SpecError("population spec has no cells")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise SpecError(f"seed must be a non-negative integer, got {self.seed!r}")
        labels = [c.label for c in self.cells]
        if len(set(labels)) != len(labels):
            raise SpecError("duplicate cell labels")

    @property
    def base_rates(self) -> dict[str, float]:
        return {c.label: c.base_rate for c in self.cells}

    @property
    def base_rate_gap(self) -> float:
        rates = list(self.base_rates.values())
        return max(rates) - min(rates)

    def with_seed(self, seed: int) -> "PopulationSpec":
        return PopulationSpec(self.cells, seed, self.name, self.metadata)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "seed": self.seed,
            "generator": GENERATOR,
            "cells": [c.to_dict() for c in self.cells],
            "base_rates": self.base_rates,
            "base_rate_gap": self.base_rate_gap,
            "metadata": dict(self.metadata),
        }

    @property
    def digest(self) -> str:
        return sha256_bytes(canonical_json(self.to_dict()).encode())

    @classmethod
    def from_dict(cls, d: Mapping) -> "PopulationSpec":
        try:
            cells = tuple(_cell_from_dict(c) for c in d["cells"])
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, SpecError):
                raise
            raise SpecError(f"malformed population spec: {exc!r}") from None
        return cls(cells, seed=d.get("seed", 0), name=d.get("name", "custom"), metadata=d.get("metadata", {}))

    @classmethod
    def load(cls, path: str | os.PathLike) -> "PopulationSpec":
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.from_dict(json.load(fh))
        except FileNotFoundError:
            raise SpecError(f"population spec not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise SpecError(f"population spec {path} is not valid JSON: {exc}") from None


def _dist_from_dict(d: Mapping) -> Distribution | None:
    if "gaussian" in d:
        g = d["gaussian"]
        return Gaussian(float(g["mean"]), float(g["std"]))
    if "scores" in d:
        return ScoreList(tuple(float(s) for s in d["scores"]))
    return None


def _cell_from_dict(d: Mapping) -> CellSpec:
    gen, imp = d.get("genuine", {}), d.get("impostor", {})
    return CellSpec(
        label=str(d["label"]),
        attributes=dict(d.get("attributes", {})),
        n_genuine=int(gen.get("count", 0)),
        n_impostor=int(imp.get("count", 0)),
        genuine=_dist_from_dict(gen),
        impostor=_dist_from_dict(imp),
    )


class _Stream:
    def __init__(self, seed: int):
        self._rng = random.Random(seed)

    def uniform_open(self) -> float:
        u = self._rng.random()
        return u if u > 0.0 else 2.0**-53

    def draw(self, dist: Distribution, n: int) -> list[float]:
        if isinstance(dist, ScoreList):
            return list(dist.scores)
        nd = NormalDist(dist.mean, dist.std)
        return [nd.inv_cdf(self.uniform_open()) for _ in range(n)]


def generate(spec: PopulationSpec) -> RecordSet:
    """Sample every cell of ``spec``. Same spec and seed give the same scores bit for bit."""
    stream = _Stream(spec.seed)
    records = []
    for cell in spec.cells:
        for label, n, dist, tag in (
            (Label.GENUINE, cell.n_genuine, cell.genuine, "g"),
            (Label.IMPOSTOR, cell.n_impostor, cell.impostor, "i"),
        ):
            if not n:
                continue
            for i, s in enumerate(stream.draw(dist, n)):
                records.append(ScoreRecord(f"{cell.label}-{tag}{i:06d}", s, label, dict(cell.attributes)))
    return RecordSet(records, digest=spec.digest, source=f"synth:{spec.name}:seed={spec.seed}")


def schema_for(spec: PopulationSpec) -> AttributeSchema:
    """A schema whose bins are exactly the attribute values used by the cells."""
    names: list[str] = []
    for c in spec.cells:
        names += [n for n in c.attributes if n not in names]
    attrs = []
    for name in names:
        vals = {c.attributes.get(name) for c in spec.cells}
        if None in vals:
            raise SpecError(f"attribute {name!r} missing from some cells")
        if all(isinstance(v, int) and not isinstance(v, bool) for v in vals):
            ordered = sorted(vals)
            bins = tuple(
                Bin(str(v), above=None if i == 0 else ordered[i - 1], upto=None if i == len(ordered) - 1 else v)
                for i, v in enumerate(ordered)
            )
            attrs.append(Attribute(name, "integer", min=ordered[0], max=ordered[-1], bins=bins))
        else:
            attrs.append(Attribute(name, "categorical", values=tuple(sorted(str(v) for v in vals))))
    return AttributeSchema(tuple(attrs))


def preset_unequal_base_rates(seed: int = 7) -> PopulationSpec:
    """Two groups sharing score distributions but with genuine base rates 0.6 and 0.3.

    Illustrative values, not calibrated to any real matcher: genuine scores
    N(3, 1), impostor scores N(0, 1), 1000 comparisons per group.
    """
    genuine, impostor = Gaussian(3.0, 1.0), Gaussian(0.0, 1.0)
    cells = (
        CellSpec("A", {"group": "A"}, 600, 400, genuine, impostor),
        CellSpec("B", {"group": "B"}, 300, 700, genuine, impostor),
    )
    return PopulationSpec(cells, seed=seed, name="unequal-base-rates", metadata={"illustrative": True})


PRESETS = {"unequal-base-rates": preset_unequal_base_rates}


def random_overlapping_pair(seed: int) -> PopulationSpec:
    """Random two-group population with base-rate gap in [0.1, 0.4] and
    overlapping score distributions (genuine mean at most one impostor std
    above the impostor mean)."""
    rng = random.Random(seed)
    # margin so rounding rates to integer counts (n >= 200) keeps the gap >= 0.1
    gap = rng.uniform(0.105, 0.4)
    low = rng.uniform(0.1, 0.9 - gap)
    rates = (low + gap, low) if rng.random() < 0.5 else (low, low + gap)
    separation = rng.uniform(0.0, 1.0)
    impostor = Gaussian(0.0, 1.0)
    genuine = Gaussian(separation, rng.uniform(0.8, 1.2))
    cells = []
    for label, rate in zip(("A", "B"), rates):
        n = rng.randint(200, 600)
        n_gen = min(n - 1, max(1, round(rate * n)))
        cells.append(CellSpec(label, {"group": label}, n_gen, n - n_gen, genuine, impostor))
    sub_seed = rng.getrandbits(32)
    return PopulationSpec(
        tuple(cells), seed=sub_seed, name="random-overlapping-pair", metadata={"trial_seed": seed, "separation": separation}
    )


def trial_seeds(seed: int, trials: int) -> list[int]:
    rng = random.Random(seed)
    return [rng.getrandbits(32) for _ in range(trials)]
