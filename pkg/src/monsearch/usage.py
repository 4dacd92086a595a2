"""Per-species usage frequencies and EV-spread archetypes."""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .core import DataError

EV_ARCHETYPES: dict[str, tuple[int, ...]] = {
    "physical_sweeper": (0, 252, 0, 0, 4, 252),
    "special_sweeper": (0, 0, 0, 252, 4, 252),
    "physical_bulky": (252, 252, 0, 0, 4, 0),
    "special_bulky": (252, 0, 0, 252, 4, 0),
    "physical_wall": (252, 0, 252, 0, 4, 0),
    "special_wall": (252, 0, 4, 0, 252, 0),
    "mixed": (0, 128, 0, 128, 0, 252),
    "uniform": (84, 84, 84, 84, 84, 84),
}
FALLBACK_SPREAD = "uniform"

TABLES = ("moves", "items", "spreads", "natures", "tera_types", "abilities")


def snap_spread(evs: Sequence[int]) -> str:
    """Nearest archetype by L1 distance; ties go to the lexicographically first name."""
    return min(sorted(EV_ARCHETYPES), key=lambda k: sum(abs(a - b) for a, b in zip(evs, EV_ARCHETYPES[k])))


def argmax(table: dict) -> Optional[str]:
    if not table:
        return None
    return min(table, key=lambda k: (-table[k], k))


def ranked(table: dict) -> list[str]:
    return sorted(table, key=lambda k: (-table[k], k))


@dataclass
class SpeciesUsage:
    count: int = 0
    moves: dict = field(default_factory=dict)
    items: dict = field(default_factory=dict)
    spreads: dict = field(default_factory=dict)
    natures: dict = field(default_factory=dict)
    tera_types: dict = field(default_factory=dict)
    abilities: dict = field(default_factory=dict)


@dataclass
class UsageStats:
    species: dict = field(default_factory=dict)  # name -> SpeciesUsage

    def get(self, name: str) -> Optional[SpeciesUsage]:
        return self.species.get(name)

    def to_json(self) -> str:
        doc = {n: {"count": u.count, **{t: getattr(u, t) for t in TABLES}} for n, u in sorted(self.species.items())}
        return json.dumps({"version": 1, "species": doc}, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "UsageStats":
        try:
            doc = json.loads(text)
            out = {}
            for n, d in doc["species"].items():
                out[n] = SpeciesUsage(count=int(d["count"]), **{t: dict(d.get(t, {})) for t in TABLES})
        except (ValueError, KeyError, TypeError) as exc:
            raise DataError(f"bad usage stats file: {exc}") from None
        return cls(out)

    @classmethod
    def load(cls, path) -> "UsageStats":
        try:
            return cls.from_json(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise DataError(f"usage stats file not found: {path}") from None

    def most_used(self, exclude: Iterable[str] = ()) -> Optional[str]:
        ex = set(exclude)
        cands = {n: u.count for n, u in self.species.items() if n not in ex}
        return argmax(cands)


class UsageCounter:
    """Accumulates raw counts; merging is associative and order-independent."""

    def __init__(self):
        self.count: Counter = Counter()
        self.tables: dict = {}

    def _table(self, species, name) -> Counter:
        return self.tables.setdefault((species, name), Counter())

    def add(self, species: str, moves: Iterable[str] = (), item: Optional[str] = None,
            evs: Optional[Sequence[int]] = None, nature: Optional[str] = None, tera_type: Optional[str] = None,
            ability: Optional[str] = None):
        self.count[species] += 1
        for m in moves:
            self._table(species, "moves")[m] += 1
        for name, v in (("items", item), ("natures", nature), ("tera_types", tera_type), ("abilities", ability)):
            if v is not None:
                self._table(species, name)[v] += 1
        if evs is not None:
            self._table(species, "spreads")[snap_spread(evs)] += 1

    def merge(self, other: "UsageCounter") -> "UsageCounter":
        out = UsageCounter()
        out.count = self.count + other.count
        for src in (self.tables, other.tables):
            for k, c in src.items():
                out.tables.setdefault(k, Counter()).update(c)
        return out

    def finish(self) -> UsageStats:
        out = {}
        for sp, n in sorted(self.count.items()):
            u = SpeciesUsage(count=n)
            for t in TABLES:
                c = self.tables.get((sp, t))
                if c:
                    z = sum(c.values())
                    setattr(u, t, {k: v / z for k, v in sorted(c.items())})
            out[sp] = u
        return UsageStats(out)
