"""Domain vocabulary: types, moves, stats, latent battle states and observations.

Hot-path records (``BattlePokemon``, ``BattleState``, ``Action``) are NamedTuples
because the engine and the search create millions of them; everything else is a
frozen dataclass validated at construction.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Iterable, NamedTuple, Optional, Sequence


class MonsearchError(Exception):
    """Base class for package errors."""


class DataError(MonsearchError, ValueError):
    """Malformed or unknown data (types, species, moves, files)."""


class ContractViolation(MonsearchError, RuntimeError):
    """A caller broke an operation's precondition."""


TYPES: tuple[str, ...] = (
    "normal", "fire", "water", "electric", "grass", "ice", "fighting", "poison",
    "ground", "flying", "psychic", "bug", "rock", "ghost", "dragon", "dark",
    "steel", "fairy",
)

STAT_NAMES = ("hp", "attack", "defense", "special_attack", "special_defense", "speed")
# boost stages exclude hp
BOOST_NAMES = STAT_NAMES[1:]

CATEGORIES = ("physical", "special", "status-inflict", "stat-boost", "heal", "hazard", "pivot")
DAMAGING = frozenset({"physical", "special", "pivot"})
STATUSES = ("burn", "poison", "paralysis")


# ---------------------------------------------------------------- type chart


@dataclass(frozen=True, eq=False)
class TypeChart:
    """Attack-type by defend-type multiplier table."""

    types: tuple[str, ...]
    matrix: tuple[tuple[float, ...], ...]
    version: str = "gen6+"
    index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.matrix) != len(self.types) or any(len(r) != len(self.types) for r in self.matrix):
            raise DataError("type chart matrix must be square and match the type list")
        for row in self.matrix:
            for v in row:
                if v not in (0, 0.5, 1, 2):
                    raise DataError(f"single-type multiplier {v} not in {{0, 0.5, 1, 2}}")
        object.__setattr__(self, "index", {t: i for i, t in enumerate(self.types)})

    def single(self, attack: str, defend: str) -> float:
        try:
            return self.matrix[self.index[attack]][self.index[defend]]
        except KeyError as exc:
            raise DataError(f"unknown type {exc.args[0]!r}") from None


def _data_text(name: str) -> str:
    return resources.files("monsearch").joinpath("data/" + name).read_text(encoding="utf-8")


@lru_cache(maxsize=None)
def load_typechart() -> TypeChart:
    raw = json.loads(_data_text("typechart.json"))
    return TypeChart(
        types=tuple(raw["types"]),
        matrix=tuple(tuple(float(v) for v in row) for row in raw["matrix"]),
        version=raw.get("version", "gen6+"),
    )


def type_effectiveness(chart: TypeChart, move_type: str, defender_types: Iterable[str]) -> float:
    """Product of single-type multipliers of ``move_type`` against each defending type."""
    m = 1.0
    for t in defender_types:
        m *= chart.single(move_type, t)
    return m


# ---------------------------------------------------------------- moves and stats


@dataclass(frozen=True)
class MoveSpec:
    name: str
    type: str
    category: str
    power: int
    accuracy: float = 1.0
    priority: int = 0
    status: Optional[str] = None  # inflicted by status-inflict moves
    secondary_status: Optional[str] = None
    secondary_chance: float = 0.0
    boosts: tuple[tuple[str, int], ...] = ()
    heal: float = 0.0
    split: Optional[str] = None  # damage class of pivot moves

    def __post_init__(self):
        if self.type not in TYPES:
            raise DataError(f"move {self.name}: unknown type {self.type!r}")
        if self.category not in CATEGORIES:
            raise DataError(f"move {self.name}: unknown category {self.category!r}")
        if self.power < 0:
            raise DataError(f"move {self.name}: negative power")
        if (self.power > 0) != (self.category in DAMAGING):
            raise DataError(f"move {self.name}: power must be positive iff the move deals damage")
        if not 0.0 < self.accuracy <= 1.0:
            raise DataError(f"move {self.name}: accuracy must lie in (0, 1]")
        if self.category == "status-inflict" and self.status not in STATUSES:
            raise DataError(f"move {self.name}: status-inflict needs a status payload")
        if self.category == "pivot" and self.split not in ("physical", "special"):
            raise DataError(f"move {self.name}: pivot needs split physical|special")
        if self.secondary_status is not None and self.secondary_status not in STATUSES:
            raise DataError(f"move {self.name}: bad secondary status")
        for stat, _ in self.boosts:
            if stat not in BOOST_NAMES:
                raise DataError(f"move {self.name}: bad boost stat {stat!r}")

    @property
    def damaging(self) -> bool:
        return self.power > 0

    @property
    def damage_class(self) -> Optional[str]:
        if self.category == "pivot":
            return self.split
        if self.category in ("physical", "special"):
            return self.category
        return None

    @classmethod
    def from_dict(cls, d: dict) -> "MoveSpec":
        sec = d.get("secondary") or {}
        return cls(
            name=d["name"], type=d["type"], category=d["category"], power=int(d["power"]),
            accuracy=float(d.get("accuracy", 1.0)), priority=int(d.get("priority", 0)),
            status=d.get("status"), secondary_status=sec.get("status"),
            secondary_chance=float(sec.get("chance", 0.0)),
            boosts=tuple(sorted((d.get("boosts") or {}).items())),
            heal=float(d.get("heal", 0.0)), split=d.get("split"),
        )


@dataclass(frozen=True)
class StatBlock:
    hp: int
    attack: int
    defense: int
    special_attack: int
    special_defense: int
    speed: int

    def __post_init__(self):
        for name in STAT_NAMES:
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise DataError(f"stat {name} must be a positive integer, got {v!r}")

    def as_tuple(self) -> tuple[int, ...]:
        return (self.hp, self.attack, self.defense, self.special_attack, self.special_defense, self.speed)

    @classmethod
    def of(cls, values: Sequence[int]) -> "StatBlock":
        if len(values) != 6:
            raise DataError("a stat block needs exactly 6 values")
        return cls(*(int(v) for v in values))


# nature -> (raised stat index, lowered stat index); neutral natures map to None
_NATURE_ORDER = (
    ("hardy", "lonely", "adamant", "naughty", "brave"),
    ("bold", "docile", "impish", "lax", "relaxed"),
    ("modest", "mild", "bashful", "rash", "quiet"),
    ("calm", "gentle", "careful", "quirky", "sassy"),
    ("timid", "hasty", "jolly", "naive", "serious"),
)
# rows raise and columns lower atk, def, spa, spd, spe
_ROW_STAT = _COL_STAT = (1, 2, 3, 4, 5)
NATURES: dict[str, Optional[tuple[int, int]]] = {}
for _r, _row in enumerate(_NATURE_ORDER):
    for _c, _name in enumerate(_row):
        up, down = _ROW_STAT[_r], _COL_STAT[_c]
        NATURES[_name] = None if up == down else (up, down)
del _r, _row, _c, _name, up, down


@dataclass(frozen=True)
class PokemonSpec:
    species: str
    level: int
    types: tuple[str, ...]
    base_stats: StatBlock
    moves: tuple[MoveSpec, ...]
    ability: str = "none"
    item: str = "none"
    nature: str = "serious"
    evs: tuple[int, ...] = (0, 0, 0, 0, 0, 0)
    ivs: tuple[int, ...] = (31, 31, 31, 31, 31, 31)
    tera_type: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "types", tuple(self.types))
        object.__setattr__(self, "moves", tuple(self.moves))
        object.__setattr__(self, "evs", tuple(int(v) for v in self.evs))
        object.__setattr__(self, "ivs", tuple(int(v) for v in self.ivs))
        if self.tera_type is None:
            object.__setattr__(self, "tera_type", self.types[0] if self.types else None)
        who = self.species
        if not 1 <= self.level <= 100:
            raise DataError(f"{who}: level must be in 1..100")
        if not 1 <= len(self.types) <= 2 or len(set(self.types)) != len(self.types):
            raise DataError(f"{who}: needs 1 or 2 distinct types")
        for t in self.types + (self.tera_type,):
            if t not in TYPES:
                raise DataError(f"{who}: unknown type {t!r}")
        if not 1 <= len(self.moves) <= 4:
            raise DataError(f"{who}: needs 1..4 moves")
        if len({m.name for m in self.moves}) != len(self.moves):
            raise DataError(f"{who}: duplicate moves")
        if len(self.evs) != 6 or len(self.ivs) != 6:
            raise DataError(f"{who}: EVs and IVs need 6 entries")
        if any(not 0 <= e <= 252 for e in self.evs) or sum(self.evs) > 510:
            raise DataError(f"{who}: EVs must be 0..252 each and sum to at most 510")
        if any(not 0 <= i <= 31 for i in self.ivs):
            raise DataError(f"{who}: IVs must be 0..31")
        if self.nature not in NATURES:
            raise DataError(f"{who}: unknown nature {self.nature!r}")

    def move_index(self, name: str) -> int:
        for i, m in enumerate(self.moves):
            if m.name == name:
                return i
        raise DataError(f"{self.species} has no move {name!r}")


def compute_stats(spec: PokemonSpec) -> StatBlock:
    """Mainline stat formula with integer nature arithmetic."""
    out = []
    nat = NATURES[spec.nature]
    L = spec.level
    for i, base in enumerate(spec.base_stats.as_tuple()):
        core = (2 * base + spec.ivs[i] + spec.evs[i] // 4) * L // 100
        if i == 0:
            out.append(core + L + 10)
            continue
        v = core + 5
        if nat is not None:
            if nat[0] == i:
                v = v * 11 // 10
            elif nat[1] == i:
                v = v * 9 // 10
        out.append(v)
    return StatBlock(*out)


# ---------------------------------------------------------------- latent state


class BattlePokemon(NamedTuple):
    spec: PokemonSpec
    stats: StatBlock
    hp: float  # integer in sampled play; expected-mode successors may carry fractional means
    status: Optional[str] = None
    boosts: tuple[int, int, int, int, int] = (0, 0, 0, 0, 0)
    tera: bool = False
    dmax: int = 0  # 0 inactive, 1..3 turns remaining, -1 spent

    @property
    def max_hp(self) -> int:
        return self.stats.hp * 2 if self.dmax > 0 else self.stats.hp

    @property
    def fainted(self) -> bool:
        return self.hp <= 0

    @property
    def defensive_types(self) -> tuple[str, ...]:
        return (self.spec.tera_type,) if self.tera else self.spec.types

    @property
    def species(self) -> str:
        return self.spec.species


def fresh(spec: PokemonSpec) -> BattlePokemon:
    stats = compute_stats(spec)
    return BattlePokemon(spec, stats, stats.hp)


@dataclass(frozen=True)
class Rules:
    """Scenario-level toggles carried by every state."""

    tera: bool = False
    dynamax: bool = False
    weather: Optional[str] = None  # "rain" | "sun" | None
    level: Optional[int] = 100  # format level; None means per-species random-battle levels


class BattleState(NamedTuple):
    teams: tuple[tuple[BattlePokemon, ...], tuple[BattlePokemon, ...]]
    active: tuple[int, int]
    rules: Rules
    turn: int = 0
    hazards: tuple[bool, bool] = (False, False)  # hazard laid on side i
    clocks: tuple[float, float] = (150.0, 150.0)
    tera_ok: tuple[bool, bool] = (True, True)
    dmax_ok: tuple[bool, bool] = (True, True)
    must_switch: tuple[bool, bool] = (False, False)
    winner: Optional[int] = None  # 0, 1, or -1 for a draw
    reason: Optional[str] = None

    @property
    def terminal(self) -> bool:
        return self.winner is not None

    def active_mon(self, player: int) -> BattlePokemon:
        return self.teams[player][self.active[player]]

    def reward(self, player: int = 0) -> float:
        if self.winner is None:
            raise ContractViolation("reward of a non-terminal state")
        if self.winner == -1:
            return 0.5
        return 1.0 if self.winner == player else 0.0


def new_battle(team0: Sequence[PokemonSpec], team1: Sequence[PokemonSpec], rules: Rules = Rules(),
               clock: float = 150.0) -> BattleState:
    for team in (team0, team1):
        if not 1 <= len(team) <= 6:
            raise DataError("teams need 1..6 members")
        if len({s.species for s in team}) != len(team):
            raise DataError("species must be unique within a team")
    return BattleState(
        teams=(tuple(fresh(s) for s in team0), tuple(fresh(s) for s in team1)),
        active=(0, 0), rules=rules, clocks=(clock, clock),
    )


# ---------------------------------------------------------------- actions

MOVE, SWITCH, TERA, DMAX, PASS = "move", "switch", "tera_move", "dynamax_move", "pass"
ACTION_KINDS = (MOVE, SWITCH, TERA, DMAX, PASS)


class Action(NamedTuple):
    kind: str
    index: int
    actor: int

    @property
    def uses_move(self) -> bool:
        return self.kind in (MOVE, TERA, DMAX)


def legal_actions(state: BattleState, player: int) -> list[Action]:
    if state.winner is not None:
        raise ContractViolation("no legal actions in a terminal state")
    team = state.teams[player]
    act = state.active[player]
    switches = [Action(SWITCH, i, player) for i, p in enumerate(team) if i != act and p.hp > 0]
    if state.must_switch[player]:
        return switches
    if state.must_switch[1 - player]:
        return [Action(PASS, 0, player)]
    mon = team[act]
    n = len(mon.spec.moves)
    out = [Action(MOVE, i, player) for i in range(n)]
    out.extend(switches)
    if state.rules.tera and state.tera_ok[player] and not mon.tera:
        out.extend(Action(TERA, i, player) for i in range(n))
    if state.rules.dynamax and state.dmax_ok[player] and mon.dmax == 0:
        out.extend(Action(DMAX, i, player) for i in range(n))
    return out


def _species(x) -> str:
    return x.species if hasattr(x, "species") else str(x)


def label_for(action: Action, team: Sequence, active: int) -> str:
    if action.kind == PASS:
        return "pass"
    if action.kind == SWITCH:
        return f"switch {_species(team[action.index])}"
    mon = team[active]
    spec = mon.spec if hasattr(mon, "spec") else mon
    name = spec.moves[action.index].name
    if action.kind == TERA:
        return f"terastallize {name}"
    if action.kind == DMAX:
        return f"dynamax {name}"
    return f"move {name}"


# ---------------------------------------------------------------- observations


class OpponentView(NamedTuple):
    """What a player has seen of one opposing team slot."""

    species: str
    level: int
    hp_frac: float
    status: Optional[str] = None
    moves: tuple[str, ...] = ()
    item: Optional[str] = None
    ability: Optional[str] = None
    tera_type: Optional[str] = None
    tera: bool = False
    dmax: int = 0
    boosts: tuple[int, int, int, int, int] = (0, 0, 0, 0, 0)

    @property
    def fainted(self) -> bool:
        return self.hp_frac <= 0


class Observation(NamedTuple):
    viewer: int
    turn: int
    own: tuple[BattlePokemon, ...]
    own_active: int
    opp: tuple[Optional[OpponentView], ...]
    opp_active: Optional[int]
    rules: Rules
    hazards: tuple[bool, bool]  # (own side, opponent side)
    clocks: tuple[float, float]  # (own, opponent)
    tera_ok: tuple[bool, bool]
    dmax_ok: tuple[bool, bool]
    must_switch: tuple[bool, bool]
    history: tuple[tuple[dict, ...], ...] = ()
    winner: Optional[int] = None  # from the viewer's frame: 0 self, 1 opponent, -1 draw

    @property
    def terminal(self) -> bool:
        return self.winner is not None

    @property
    def own_mon(self) -> BattlePokemon:
        return self.own[self.own_active]

    @property
    def opp_mon(self) -> Optional[OpponentView]:
        return None if self.opp_active is None else self.opp[self.opp_active]

    def legal(self) -> list[Action]:
        """Legal actions of the viewer; everything needed is on the viewer's side."""
        if self.winner is not None:
            raise ContractViolation("no legal actions in a terminal observation")
        p = self.viewer
        switches = [Action(SWITCH, i, p) for i, m in enumerate(self.own) if i != self.own_active and m.hp > 0]
        if self.must_switch[0]:
            return switches
        if self.must_switch[1]:
            return [Action(PASS, 0, p)]
        mon = self.own[self.own_active]
        n = len(mon.spec.moves)
        out = [Action(MOVE, i, p) for i in range(n)]
        out.extend(switches)
        if self.rules.tera and self.tera_ok[0] and not mon.tera:
            out.extend(Action(TERA, i, p) for i in range(n))
        if self.rules.dynamax and self.dmax_ok[0] and mon.dmax == 0:
            out.extend(Action(DMAX, i, p) for i in range(n))
        return out

    def label(self, action: Action) -> str:
        return label_for(action, self.own, self.own_active)


def lead_events(state: BattleState) -> list[dict]:
    """Public switch-in events announcing both leads; the first entry of every battle log."""
    out = []
    for p in (0, 1):
        mon = state.active_mon(p)
        out.append({"type": "switch", "side": p, "slot": state.active[p], "species": mon.species,
                    "level": mon.spec.level, "hp": hp_percent(mon.hp, mon.max_hp)})
    return out


def hp_percent(hp: float, max_hp: int) -> int:
    """Public HP readout: whole percent, never 0 while alive."""
    if hp <= 0:
        return 0
    return max(1, min(100, math.ceil(100.0 * hp / max_hp - 1e-9)))


def _fold(views: list, opp_active, events: Iterable[dict], opp_side: int):
    """Apply public events about ``opp_side`` to the per-slot views."""
    for ev in events:
        if ev.get("side") != opp_side:
            continue
        t = ev["type"]
        if t == "switch":
            slot = ev["slot"]
            v = views[slot]
            if v is None:
                v = OpponentView(ev["species"], ev["level"], ev["hp"] / 100.0)
            else:
                v = v._replace(hp_frac=ev["hp"] / 100.0, boosts=(0, 0, 0, 0, 0), dmax=0)
            if opp_active is not None and opp_active != slot and views[opp_active] is not None:
                old = views[opp_active]
                views[opp_active] = old._replace(boosts=(0, 0, 0, 0, 0), dmax=0)
            views[slot] = v
            opp_active = slot
            continue
        if opp_active is None:
            continue
        v = views[opp_active]
        if t == "move":
            if ev["move"] not in v.moves:
                v = v._replace(moves=v.moves + (ev["move"],))
        elif t in ("damage", "heal"):
            v = v._replace(hp_frac=ev["hp"] / 100.0)
        elif t == "status":
            v = v._replace(status=ev["status"])
        elif t == "boost":
            b = list(v.boosts)
            i = BOOST_NAMES.index(ev["stat"])
            b[i] = max(-6, min(6, b[i] + ev["amount"]))
            v = v._replace(boosts=tuple(b))
        elif t == "tera":
            v = v._replace(tera=True, tera_type=ev["tera_type"])
        elif t == "dynamax":
            v = v._replace(dmax=3, hp_frac=ev["hp"] / 100.0)
        elif t == "dynamax_end":
            v = v._replace(dmax=-1, hp_frac=ev["hp"] / 100.0)
        elif t == "item":
            v = v._replace(item=ev["item"])
        elif t == "ability":
            v = v._replace(ability=ev["ability"])
        elif t == "faint":
            v = v._replace(hp_frac=0.0)
        views[opp_active] = v
    return views, opp_active


def _opp_budget(events: Iterable[dict], opp_side: int, tera_ok: bool, dmax_ok: bool):
    for ev in events:
        if ev.get("side") == opp_side:
            if ev["type"] == "tera":
                tera_ok = False
            elif ev["type"] == "dynamax":
                dmax_ok = False
    return tera_ok, dmax_ok


def _frame_winner(state: BattleState, player: int) -> Optional[int]:
    if state.winner is None:
        return None
    if state.winner == -1:
        return -1
    return 0 if state.winner == player else 1


def observe(state: BattleState, player: int, log: Sequence[Sequence[dict]], history: int = 8) -> Observation:
    """Project the latent state onto what ``player`` knows.

    ``log`` is the per-turn list of public event lists since battle start.
    Opponent information comes only from that log; own information is exact.
    """
    opp = 1 - player
    views: list = [None] * len(state.teams[opp])
    opp_active = None
    flat = [ev for turn in log for ev in turn]
    views, opp_active = _fold(views, opp_active, flat, opp)
    t_ok, d_ok = _opp_budget(flat, opp, True, True)
    hist = tuple(tuple(t) for t in log[-history:]) if history > 0 else ()
    return _assemble(state, player, tuple(views), opp_active, (t_ok, d_ok), hist)


def advance(obs: Observation, state: BattleState, events: Sequence[dict], history: int = 8) -> Observation:
    """Incremental ``observe``: fold one more turn of events into ``obs``."""
    opp = 1 - obs.viewer
    views, opp_active = _fold(list(obs.opp), obs.opp_active, events, opp)
    budget = _opp_budget(events, opp, obs.tera_ok[1], obs.dmax_ok[1])
    hist = (obs.history + (tuple(events),))[-history:] if history > 0 else ()
    return _assemble(state, obs.viewer, tuple(views), opp_active, budget, hist)


def _assemble(state, player, views, opp_active, opp_budget, hist) -> Observation:
    opp = 1 - player
    return Observation(
        viewer=player,
        turn=state.turn,
        own=state.teams[player],
        own_active=state.active[player],
        opp=views,
        opp_active=opp_active,
        rules=state.rules,
        hazards=(state.hazards[player], state.hazards[opp]),
        clocks=(state.clocks[player], state.clocks[opp]),
        tera_ok=(state.tera_ok[player], opp_budget[0]),
        dmax_ok=(state.dmax_ok[player], opp_budget[1]),
        must_switch=(state.must_switch[player], state.must_switch[opp]),
        history=hist,
        winner=_frame_winner(state, player),
    )
