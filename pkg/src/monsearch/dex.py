"""Species, move and team data files."""
from __future__ import annotations

import json
import random
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Optional, Sequence

from .core import DataError, MoveSpec, PokemonSpec, StatBlock, TYPES, _data_text, load_typechart, TypeChart


@dataclass(frozen=True)
class SpeciesEntry:
    name: str
    types: tuple[str, ...]
    base_stats: StatBlock
    ability: str
    random_level: int
    sets: tuple[dict, ...]


class Dex:
    """In-memory view of the species, move and type-chart data files."""

    def __init__(self, species: dict[str, SpeciesEntry], moves: dict[str, MoveSpec], chart: TypeChart):
        self.species = species
        self.moves = moves
        self.chart = chart

    @classmethod
    def from_json(cls, species_doc: dict, moves_doc: dict, chart: Optional[TypeChart] = None) -> "Dex":
        moves = {}
        for d in moves_doc["moves"]:
            m = MoveSpec.from_dict(d)
            moves[m.name] = m
        species = {}
        for d in species_doc["species"]:
            types = tuple(d["types"])
            for t in types:
                if t not in TYPES:
                    raise DataError(f"species {d['name']}: unknown type {t!r}")
            for s in d.get("sets", ()):
                for mv in s["moves"]:
                    if mv not in moves:
                        raise DataError(f"species {d['name']}: unknown move {mv!r}")
            species[d["name"]] = SpeciesEntry(
                name=d["name"], types=types, base_stats=StatBlock.of(d["base_stats"]),
                ability=d.get("ability", "none"), random_level=int(d.get("random_level", 80)),
                sets=tuple(d.get("sets", ())),
            )
        return cls(species, moves, chart or load_typechart())

    def move(self, name: str) -> MoveSpec:
        try:
            return self.moves[name]
        except KeyError:
            raise DataError(f"unknown move {name!r}") from None

    def entry(self, name: str) -> SpeciesEntry:
        try:
            return self.species[name]
        except KeyError:
            raise DataError(f"unknown species {name!r}") from None

    def make(self, species: str, moves: Optional[Sequence[str]] = None, level: int = 100,
             item: Optional[str] = None, ability: Optional[str] = None, nature: Optional[str] = None,
             evs: Optional[Sequence[int]] = None, ivs: Sequence[int] = (31,) * 6,
             tera_type: Optional[str] = None, set_index: int = 0) -> PokemonSpec:
        """Build a spec, taking unspecified fields from the species' set ``set_index``."""
        e = self.entry(species)
        base = e.sets[set_index % len(e.sets)] if e.sets else {}
        names = list(moves) if moves is not None else list(base.get("moves", ()))
        return PokemonSpec(
            species=species, level=level, types=e.types, base_stats=e.base_stats,
            moves=tuple(self.move(n) for n in names),
            ability=ability if ability is not None else e.ability,
            item=item if item is not None else base.get("item", "none"),
            nature=nature if nature is not None else base.get("nature", "serious"),
            evs=tuple(evs if evs is not None else base.get("evs", (84,) * 6)),
            ivs=tuple(ivs),
            tera_type=tera_type if tera_type is not None else base.get("tera_type", e.types[0]),
        )

    def spec_from_dict(self, d: dict) -> PokemonSpec:
        """Known species go through ``make``; others need inline ``types`` and ``base_stats``."""
        try:
            if d["species"] not in self.species and "types" in d and "base_stats" in d:
                return PokemonSpec(
                    d["species"], int(d.get("level", 100)), tuple(d["types"]), StatBlock.of(d["base_stats"]),
                    tuple(self.move(n) for n in d["moves"]), ability=d.get("ability") or "none",
                    item=d.get("item") or "none", nature=d.get("nature") or "serious",
                    evs=tuple(d.get("evs") or (0,) * 6), ivs=tuple(d.get("ivs", (31,) * 6)),
                    tera_type=d.get("tera_type"),
                )
            return self.make(
                d["species"], moves=d.get("moves"), level=int(d.get("level", 100)), item=d.get("item"),
                ability=d.get("ability"), nature=d.get("nature"), evs=d.get("evs"),
                ivs=d.get("ivs", (31,) * 6), tera_type=d.get("tera_type"),
            )
        except KeyError as exc:
            raise DataError(f"team member missing field {exc.args[0]!r}") from None

    def random_team(self, rng: random.Random, size: int = 6, pool: Optional[Sequence[str]] = None) -> list[PokemonSpec]:
        """Random-battle style team: distinct species at their scaled levels, random sets."""
        names = sorted(pool if pool is not None else self.species)
        if len(names) < size:
            raise DataError("species pool smaller than team size")
        picks = rng.sample(names, size)
        out = []
        for n in picks:
            e = self.species[n]
            out.append(self.make(n, level=e.random_level, set_index=rng.randrange(max(1, len(e.sets)))))
        return out


def spec_to_dict(spec: PokemonSpec) -> dict:
    return {
        "species": spec.species, "level": spec.level, "moves": [m.name for m in spec.moves],
        "ability": spec.ability, "item": spec.item, "nature": spec.nature,
        "evs": list(spec.evs), "ivs": list(spec.ivs), "tera_type": spec.tera_type,
        "types": list(spec.types), "base_stats": list(spec.base_stats.as_tuple()),
    }


@lru_cache(maxsize=None)
def load_dex() -> Dex:
    return Dex.from_json(json.loads(_data_text("species.json")), json.loads(_data_text("moves.json")))


def load_team(path_or_name: str, dex: Optional[Dex] = None) -> list[PokemonSpec]:
    """Load a team file; bare names resolve to the bundled ``data/teams`` directory."""
    dex = dex or load_dex()
    p = Path(path_or_name)
    try:
        if p.suffix == ".json" and p.exists():
            doc = json.loads(p.read_text(encoding="utf-8"))
        else:
            doc = json.loads(_data_text(f"teams/{path_or_name}.json"))
    except FileNotFoundError:
        raise DataError(f"team file not found: {path_or_name}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"team file {path_or_name}: invalid JSON ({exc})") from None
    if not isinstance(doc, list) or not 1 <= len(doc) <= 6:
        raise DataError(f"team file {path_or_name}: expected a JSON array of 1..6 members")
    return [dex.spec_from_dict(d) for d in doc]
