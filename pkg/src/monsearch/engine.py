"""Turn resolution, damage, clocks.

A single resolution routine serves both transition modes. Every random
decision goes through a chooser object: the sampled chooser draws from an
RNG, the expected chooser enumerates branches by replaying the routine with a
scripted prefix of decisions. Damage rolls never branch in expected mode;
they are carried as exact probability distributions over hit points and
reduced to their mean when the turn ends. A plain hit that may miss (or be
stopped by paralysis) is folded into that distribution, so the only branch
it creates is whether the defender faints.
"""
from __future__ import annotations

import math
import random
from functools import lru_cache
from typing import NamedTuple, Optional, Sequence

from .core import (
    DMAX, MOVE, SWITCH, TERA, Action, BattlePokemon, BattleState, ContractViolation, TypeChart,
    hp_percent, legal_actions, load_typechart, type_effectiveness,
)

CRIT_RATE = 1.0 / 24.0
CRIT_MULT = 1.5
ROLL_MIN = 0.85
EXPECTED_ROLL = 0.925
DMAX_TURNS = 3
RESIDUAL_DIVISOR = 16
# relative slack so that exact products like 86 * 1.5 do not floor to 128 in binary floating point
_FLOOR_SLACK = 1e-12

CLOCK_BANK = 150.0
CLOCK_INCREMENT = 15.0

BOOST_INDEX = {"attack": 0, "defense": 1, "special_attack": 2, "special_defense": 3, "speed": 4}


# ---------------------------------------------------------------- damage formula


class DamageContext(NamedTuple):
    level: int
    power: int
    attack: int
    defense: int
    targets: float = 1.0
    parental_bond: float = 1.0
    weather: float = 1.0
    glaive_rush: float = 1.0
    critical: float = 1.0
    random: float = 1.0
    stab: float = 1.0
    type: float = 1.0
    burn: float = 1.0
    other: float = 1.0
    zmove: float = 1.0
    terashield: float = 1.0


def base_damage(level: int, power: int, attack: int, defense: int) -> float:
    return ((2 * level / 5 + 2) * power * attack / defense) / 50 + 2


def modifier(ctx: DamageContext) -> float:
    return (ctx.targets * ctx.parental_bond * ctx.weather * ctx.glaive_rush * ctx.critical * ctx.random
            * ctx.stab * ctx.type * ctx.burn * ctx.other * ctx.zmove * ctx.terashield)


def damage(ctx: DamageContext) -> int:
    """Hit points removed: the floored product of the base term and every multiplier."""
    if ctx.power < 0 or ctx.attack < 1 or ctx.defense < 1:
        raise ContractViolation("damage needs power >= 0 and positive attack/defense")
    if ctx.type == 0:
        return 0
    x = base_damage(ctx.level, ctx.power, ctx.attack, ctx.defense) * modifier(ctx)
    return max(0, math.floor(x * (1 + _FLOOR_SLACK)))


def boost_multiplier(stage: int) -> float:
    return (2 + stage) / 2 if stage >= 0 else 2 / (2 - stage)


def effective_stat(value: int, stage: int) -> int:
    return max(1, int(value * boost_multiplier(stage))) if stage else value


def effective_speed(mon: BattlePokemon) -> int:
    s = effective_stat(mon.stats.speed, mon.boosts[4])
    return s // 2 if mon.status == "paralysis" else s


def move_type(mon: BattlePokemon, move) -> str:
    if move.name == "terablast" and mon.tera:
        return mon.spec.tera_type
    return move.type


def stab_multiplier(mon: BattlePokemon, mtype: str) -> float:
    types = mon.spec.types
    if mon.tera:
        tt = mon.spec.tera_type
        if mtype == tt:
            return 2.0 if tt in types else 1.5
    return 1.5 if mtype in types else 1.0


def weather_multiplier(weather: Optional[str], mtype: str) -> float:
    if weather == "rain":
        return 1.5 if mtype == "water" else 0.5 if mtype == "fire" else 1.0
    if weather == "sun":
        return 1.5 if mtype == "fire" else 0.5 if mtype == "water" else 1.0
    return 1.0


def hook_multiplier(att: BattlePokemon, dfd: BattlePokemon, move, mtype: str, cls: str, eff: float):
    """Item and ability multipliers folded into the "other" slot, with what they reveal."""
    m = 1.0
    reveals = []
    item = att.spec.item
    if item == "lifeorb":
        m *= 1.3
        reveals.append(("item", item))
    elif item == "choiceband" and cls == "physical":
        m *= 1.5
        reveals.append(("item", item))
    elif item == "choicespecs" and cls == "special":
        m *= 1.5
        reveals.append(("item", item))
    elif item == "expertbelt" and eff > 1:
        m *= 1.2
        reveals.append(("item", item))
    elif item == "lightball" and att.spec.species == "pikachu":
        m *= 2.0
        reveals.append(("item", item))
    ab = att.spec.ability
    if ab == "technician" and move.power <= 60:
        m *= 1.5
        reveals.append(("ability", ab))
    elif ab == "hugepower" and cls == "physical":
        m *= 2.0
        reveals.append(("ability", ab))
    if dfd.spec.ability == "thickfat" and mtype in ("fire", "ice"):
        m *= 0.5
        reveals.append(("defender_ability", "thickfat"))
    return m, reveals


def make_context(att: BattlePokemon, dfd: BattlePokemon, move, weather: Optional[str] = None,
                 chart: Optional[TypeChart] = None, roll: float = 1.0, crit: bool = False):
    """Damage context of ``att`` using ``move`` on ``dfd`` plus the hook reveals it triggers."""
    chart = chart or load_typechart()
    mtype = move_type(att, move)
    cls = move.damage_class
    power = move.power
    if att.dmax > 0:
        power = power * 13 // 10
    if cls == "physical":
        a = effective_stat(att.stats.attack, att.boosts[0])
        d = effective_stat(dfd.stats.defense, dfd.boosts[1])
    else:
        a = effective_stat(att.stats.special_attack, att.boosts[2])
        d = effective_stat(dfd.stats.special_defense, dfd.boosts[3])
    eff = _eff(chart, mtype, dfd.defensive_types)
    other, reveals = hook_multiplier(att, dfd, move, mtype, cls, eff)
    ctx = DamageContext(
        level=att.spec.level, power=power, attack=a, defense=d,
        weather=weather_multiplier(weather, mtype),
        critical=CRIT_MULT if crit else 1.0, random=roll,
        stab=stab_multiplier(att, mtype), type=eff,
        burn=0.5 if (att.status == "burn" and cls == "physical") else 1.0,
        other=other,
    )
    return ctx, reveals


@lru_cache(maxsize=1 << 16)
def _eff(chart: TypeChart, mtype: str, types: tuple) -> float:
    return type_effectiveness(chart, mtype, types)


def expected_context(att: BattlePokemon, dfd: BattlePokemon, move, weather=None, chart=None) -> DamageContext:
    """Context with the mean roll and no critical hit, used for turns-to-KO estimates."""
    return make_context(att, dfd, move, weather, chart, roll=EXPECTED_ROLL)[0]


def roll_base(att: BattlePokemon, dfd: BattlePokemon, move, weather, chart):
    """Fast path of ``make_context`` + ``_roll_base``: (value, type multiplier, reveals)."""
    mtype = move_type(att, move)
    cls = move.damage_class
    power = move.power
    if att.dmax > 0:
        power = power * 13 // 10
    ab, db = att.boosts, dfd.boosts
    if cls == "physical":
        a = effective_stat(att.stats.attack, ab[0]) if ab[0] else att.stats.attack
        d = effective_stat(dfd.stats.defense, db[1]) if db[1] else dfd.stats.defense
        burn = 0.5 if att.status == "burn" else 1.0
    else:
        a = effective_stat(att.stats.special_attack, ab[2]) if ab[2] else att.stats.special_attack
        d = effective_stat(dfd.stats.special_defense, db[3]) if db[3] else dfd.stats.special_defense
        burn = 1.0
    eff = _eff(chart, mtype, dfd.defensive_types)
    other, reveals = hook_multiplier(att, dfd, move, mtype, cls, eff)
    c0 = base_damage(att.spec.level, power, a, d) * (
        1.0 * 1.0 * weather_multiplier(weather, mtype) * 1.0
        * stab_multiplier(att, mtype) * eff * burn * other * 1.0 * 1.0)
    return c0, eff, reveals


def _roll_base(ctx: DamageContext) -> float:
    """The product of everything except the roll and the critical multiplier."""
    return base_damage(ctx.level, ctx.power, ctx.attack, ctx.defense) * (
        ctx.targets * ctx.parental_bond * ctx.weather * ctx.glaive_rush
        * ctx.stab * ctx.type * ctx.burn * ctx.other * ctx.zmove * ctx.terashield)


# ---------------------------------------------------------------- distributions


class Dist(tuple):
    """Finite distribution: a tuple of (value, probability) pairs."""

    def mean(self) -> float:
        return sum(v * p for v, p in self)

    def mass(self, pred) -> float:
        return sum(p for v, p in self if pred(v))

    def map(self, f) -> "Dist":
        acc: dict = {}
        for v, p in self:
            w = f(v)
            acc[w] = acc.get(w, 0.0) + p
        return Dist(acc.items())

    def condition(self, pred) -> "Dist":
        kept = [(v, p) for v, p in self if pred(v)]
        z = sum(p for _, p in kept)
        return Dist((v, p / z) for v, p in kept)


def _roll_dist(c: float) -> dict:
    """Distribution of floor(c * r) for r = 1 - 0.15 u, u uniform on [0, 1)."""
    cs = c * (1 + _FLOOR_SLACK)
    lo = math.floor(cs * ROLL_MIN)
    hi = math.floor(cs)
    out = {}
    span = 1 - ROLL_MIN

    def u_at(d):  # largest u with cs * r >= d
        return min(1.0, max(0.0, (1 - d / cs) / span))

    for d in range(lo, hi + 1):
        p = u_at(d) - u_at(d + 1)
        if p > 0:
            out[d] = p
    return out


@lru_cache(maxsize=1 << 16)
def damage_distribution(c0: float) -> Dist:
    """Exact damage distribution including the critical-hit chance."""
    acc: dict = {}
    for mult, w in ((1.0, 1 - CRIT_RATE), (CRIT_MULT, CRIT_RATE)):
        for d, p in _roll_dist(c0 * mult).items():
            acc[d] = acc.get(d, 0.0) + p * w
    return Dist(sorted(acc.items()))


def sample_damage(c0: float, rng: random.Random) -> int:
    crit = rng.random() < CRIT_RATE
    u = rng.random()
    c = c0 * CRIT_MULT if crit else c0
    return math.floor(c * (1 - (1 - ROLL_MIN) * u) * (1 + _FLOOR_SLACK))


# ---------------------------------------------------------------- choosers


class _Sampler:
    __slots__ = ("rng",)
    folds = False  # draws every coin

    def __init__(self, rng):
        self.rng = rng

    def coin(self, p: float) -> bool:
        if p >= 1.0:
            return True
        if p <= 0.0:
            return False
        return self.rng.random() < p

    def damage(self, c0: float):
        return sample_damage(c0, self.rng)

    def fainted(self, hp):
        return hp <= 0, hp


class _Enumerator:
    """Replays a decision script and records unexplored alternatives."""

    __slots__ = ("script", "taken", "prob", "pending")
    folds = True  # folds miss/paralysis into the damage distribution when no KO hinges on it

    def __init__(self, script):
        self.script = script
        self.taken = []
        self.prob = 1.0
        self.pending = []

    def _decide(self, p_true: float) -> bool:
        i = len(self.taken)
        if i < len(self.script):
            choice = self.script[i]
        else:
            choice = True
            self.pending.append(self.taken + [False])
        self.taken.append(choice)
        self.prob *= p_true if choice else 1.0 - p_true
        return choice

    def coin(self, p: float) -> bool:
        if p >= 1.0:
            return True
        if p <= 0.0:
            return False
        return self._decide(p)

    def damage(self, c0: float):
        return damage_distribution(c0)

    def fainted(self, hp):
        if not isinstance(hp, Dist):
            return hp <= 0, hp
        p = hp.mass(_dead)
        if p <= 0.0:
            return False, hp
        if p >= 1.0 - 1e-15:
            return True, 0
        if self._decide(p):
            return True, 0
        return False, hp.condition(_alive)


def _dead(v):
    return v <= 0


def _alive(v):
    return v > 0


# ---------------------------------------------------------------- hp arithmetic (numbers or Dists)


def _sub(hp, dmg):
    if isinstance(hp, Dist):
        if isinstance(dmg, Dist):
            acc: dict = {}
            for h, ph in hp:
                for d, pd in dmg:
                    w = h - d if h > d else 0
                    acc[w] = acc.get(w, 0.0) + ph * pd
            return Dist(acc.items())
        return hp.map(lambda h: h - dmg if h > dmg else 0)
    if isinstance(dmg, Dist):
        return dmg.map(lambda d: hp - d if hp > d else 0)
    return hp - dmg if hp > dmg else 0


def _apply(hp, f):
    return hp.map(f) if isinstance(hp, Dist) else f(hp)


def _mean(hp) -> float:
    return hp.mean() if isinstance(hp, Dist) else hp


def _halve(h):
    return math.ceil(h / 2)


# ---------------------------------------------------------------- transition


class Branch(NamedTuple):
    prob: float
    state: BattleState
    events: tuple


class TransitionOutcome(NamedTuple):
    branches: tuple  # of Branch; exactly one in sampled mode
    elapsed: tuple = (0.0, 0.0)

    @property
    def state(self) -> BattleState:
        return self.branches[0].state

    @property
    def events(self) -> tuple:
        return self.branches[0].events


def immune_to_status(mon: BattlePokemon, status: str) -> bool:
    t = mon.defensive_types
    if status == "burn":
        return "fire" in t
    if status == "poison":
        return "poison" in t or "steel" in t
    if status == "paralysis":
        return "electric" in t
    return False


_tnew = tuple.__new__
_NO_BOOSTS = (0, 0, 0, 0, 0)


class _World:
    """Mutable scratch copy of a state for one resolution pass."""

    __slots__ = ("teams", "active", "hazards", "tera_ok", "dmax_ok", "must_switch", "events", "pivot", "ch",
                 "rules", "chart")

    def __init__(self, s: BattleState, ch, chart):
        self.teams = [list(s.teams[0]), list(s.teams[1])]
        self.active = list(s.active)
        self.hazards = list(s.hazards)
        self.tera_ok = list(s.tera_ok)
        self.dmax_ok = list(s.dmax_ok)
        self.must_switch = [False, False]
        self.events = []
        self.pivot = [False, False]
        self.ch = ch
        self.rules = s.rules
        self.chart = chart

    def mon(self, p) -> BattlePokemon:
        return self.teams[p][self.active[p]]

    def put(self, p, mon):
        self.teams[p][self.active[p]] = mon

    def _hp_event(self, p, kind, mon, **extra):
        ev = {"type": kind, "side": p, "hp": hp_percent(_mean(mon.hp), mon.max_hp)}
        ev.update(extra)
        self.events.append(ev)

    def switch_in(self, p, idx):
        out = self.mon(p)
        if out.hp > 0:
            if out.dmax > 0:
                out = out._replace(dmax=-1, hp=_apply(out.hp, _halve))
            out = out._replace(boosts=(0, 0, 0, 0, 0))
            self.put(p, out)
        self.active[p] = idx
        mon = self.mon(p)
        self.events.append({"type": "switch", "side": p, "slot": idx, "species": mon.spec.species,
                            "level": mon.spec.level, "hp": hp_percent(_mean(mon.hp), mon.max_hp)})
        if self.hazards[p]:
            eff = _eff(self.chart, "rock", mon.defensive_types)
            self.hurt(p, int(mon.max_hp * eff) // 8, "hazard")

    def hurt(self, p, dmg, source) -> bool:
        """Subtract ``dmg`` from the active of ``p``; report and return whether it fainted."""
        team = self.teams[p]
        k = self.active[p]
        mon = team[k]
        h = mon.hp
        if h.__class__ is not Dist and dmg.__class__ is not Dist:
            hp = h - dmg if h > dmg else 0
            dead = hp <= 0
        else:
            dead, hp = self.ch.fainted(_sub(h, dmg))
        if dead:
            team[k] = _tnew(BattlePokemon, (mon[0], mon[1], 0, None, _NO_BOOSTS, mon[5],
                                            -1 if mon[6] > 0 else mon[6]))
            self.events.append({"type": "damage", "side": p, "hp": 0, "source": source})
            self.events.append({"type": "faint", "side": p})
        else:
            team[k] = mon = _tnew(BattlePokemon, (mon[0], mon[1], hp, mon[3], mon[4], mon[5], mon[6]))
            self.events.append({"type": "damage", "side": p, "hp": hp_percent(_mean(hp), mon.max_hp),
                                "source": source})
        return dead

    def alive(self, p) -> bool:
        h = self.teams[p][self.active[p]].hp
        return h.__class__ is Dist or h > 0

    def use_move(self, p, i):
        att = self.mon(p)
        move = att.spec.moves[i]
        q = 1 - p
        ch = self.ch
        self.events.append({"type": "move", "side": p, "move": move.name})
        if ch.folds and move.power > 0 and self._fold_hit(p, att, move):
            return
        if att.status == "paralysis" and not ch.coin(0.75):
            self.events.append({"type": "cant", "side": p, "reason": "paralysis"})
            return
        cat = move.category
        if move.power > 0:
            dfd = self.mon(q)
            if not self.alive(q):
                self.events.append({"type": "fail", "side": p})
                return
            c0, eff, reveals = roll_base(att, dfd, move, self.rules.weather, self.chart)
            if eff == 0:
                self.events.append({"type": "immune", "side": q})
                return
            if not ch.coin(move.accuracy):
                self.events.append({"type": "miss", "side": p})
                return
            for kind, name in reveals:
                if kind == "item":
                    self.events.append({"type": "item", "side": p, "item": name})
                elif kind == "ability":
                    self.events.append({"type": "ability", "side": p, "ability": name})
                else:
                    self.events.append({"type": "ability", "side": q, "ability": name})
            if self.hurt(q, ch.damage(c0), "move"):
                pass
            elif move.secondary_status and dfd.status is None and not immune_to_status(dfd, move.secondary_status):
                if ch.coin(move.secondary_chance):
                    self.put(q, self.mon(q)._replace(status=move.secondary_status))
                    self.events.append({"type": "status", "side": q, "status": move.secondary_status})
            if cat == "pivot":
                self.pivot[p] = True
            return
        if cat == "status-inflict":
            dfd = self.mon(q)
            if (not self.alive(q) or dfd.status is not None
                    or _eff(self.chart, move.type, dfd.defensive_types) == 0
                    or immune_to_status(dfd, move.status)):
                self.events.append({"type": "fail", "side": p})
                return
            if not ch.coin(move.accuracy):
                self.events.append({"type": "miss", "side": p})
                return
            self.put(q, dfd._replace(status=move.status))
            self.events.append({"type": "status", "side": q, "status": move.status})
        elif cat == "stat-boost":
            b = list(att.boosts)
            for stat, amount in move.boosts:
                j = BOOST_INDEX[stat]
                new = max(-6, min(6, b[j] + amount))
                if new != b[j]:
                    self.events.append({"type": "boost", "side": p, "stat": stat, "amount": new - b[j]})
                b[j] = new
            self.put(p, att._replace(boosts=tuple(b)))
        elif cat == "heal":
            mx = att.max_hp
            amt = int(mx * move.heal)
            att = att._replace(hp=_apply(att.hp, lambda h: min(mx, h + amt)))
            self.put(p, att)
            self._hp_event(p, "heal", att)
        elif cat == "hazard":
            if self.hazards[q]:
                self.events.append({"type": "fail", "side": p})
            else:
                self.hazards[q] = True
                self.events.append({"type": "hazard", "side": q})

    def _fold_hit(self, p, att, move) -> bool:
        """Expected mode: apply an uncertain hit as one damage distribution that includes 0.

        Only for plain hits (no secondary effect, pivot or reveal), so a miss and
        a non-lethal hit lead to the same successor apart from HP. ``hurt``
        still branches on whether the defender faints. Returns False when the
        ordinary path must run instead.
        """
        hit = move.accuracy * (0.75 if att.status == "paralysis" else 1.0)
        if hit >= 1.0 or move.secondary_status or move.category == "pivot":
            return False
        q = 1 - p
        if not self.alive(q):
            return False
        c0, eff, reveals = roll_base(att, self.mon(q), move, self.rules.weather, self.chart)
        if eff == 0 or reveals:
            return False
        dist = self.ch.damage(c0)
        mixed: dict = {0: 1.0 - hit}
        for d, pd in dist:
            mixed[d] = mixed.get(d, 0.0) + pd * hit
        self.hurt(q, Dist(mixed.items()), "move")
        return True

    def residual(self, p):
        mon = self.mon(p)
        if not self.alive(p):
            return
        if mon.status in ("burn", "poison"):
            if self.hurt(p, max(1, mon.stats.hp // RESIDUAL_DIVISOR), mon.status):
                return
            mon = self.mon(p)
        if mon.dmax > 0:
            left = mon.dmax - 1
            if left == 0:
                mon = mon._replace(dmax=-1, hp=_apply(mon.hp, _halve))
                self.put(p, mon)
                self._hp_event(p, "dynamax_end", mon)
            else:
                self.put(p, mon._replace(dmax=left))


def _has_reserve(team, active) -> bool:
    return any(m.hp > 0 for i, m in enumerate(team) if i != active)


def _order(w: _World, acts, ch) -> list:
    movers = [p for p in (0, 1) if acts[p].kind in (MOVE, TERA, DMAX)]
    if len(movers) < 2:
        return movers
    m0, m1 = w.mon(0), w.mon(1)
    pr0 = m0.spec.moves[acts[0].index].priority
    pr1 = m1.spec.moves[acts[1].index].priority
    if pr0 != pr1:
        return [0, 1] if pr0 > pr1 else [1, 0]
    s0, s1 = effective_speed(m0), effective_speed(m1)
    if s0 != s1:
        return [0, 1] if s0 > s1 else [1, 0]
    return [0, 1] if ch.coin(0.5) else [1, 0]


def turn_order(state: BattleState, a: Action, b: Action) -> list[tuple[float, list[int]]]:
    """Resolution order of the two actions as weighted alternatives.

    Returns ``[(prob, [first, second]), ...]``; switches precede moves and a
    speed tie yields two alternatives at 0.5 each.
    """
    acts = (a, b)
    switchers = [p for p in (0, 1) if acts[p].kind == SWITCH]
    w = _World(state, None, load_typechart())
    movers = [p for p in (0, 1) if acts[p].kind in (MOVE, TERA, DMAX)]
    if len(movers) == 2:
        m0, m1 = w.mon(0), w.mon(1)
        pr0 = m0.spec.moves[a.index].priority
        pr1 = m1.spec.moves[b.index].priority
        s0, s1 = effective_speed(m0), effective_speed(m1)
        if pr0 == pr1 and s0 == s1:
            return [(0.5, switchers + [0, 1]), (0.5, switchers + [1, 0])]
        first = 0 if (pr0, s0) > (pr1, s1) else 1
        return [(1.0, switchers + [first, 1 - first])]
    return [(1.0, switchers + movers)]


def _resolve(state: BattleState, a: Action, b: Action, ch, chart) -> tuple[BattleState, list]:
    w = _World(state, ch, chart)
    acts = (a, b)
    replacement = state.must_switch[0] or state.must_switch[1]
    for p in (0, 1):
        if acts[p].kind == SWITCH:
            w.switch_in(p, acts[p].index)
    if not replacement:
        for p in (0, 1):
            kind = acts[p].kind
            if kind == TERA:
                w.put(p, w.mon(p)._replace(tera=True))
                w.tera_ok[p] = False
                w.events.append({"type": "tera", "side": p, "tera_type": w.mon(p).spec.tera_type})
            elif kind == DMAX:
                mon = w.mon(p)
                mon = mon._replace(dmax=DMAX_TURNS, hp=_apply(mon.hp, lambda h: h * 2))
                w.put(p, mon)
                w.dmax_ok[p] = False
                w._hp_event(p, "dynamax", mon)
        for p in _order(w, acts, ch):
            if w.alive(p):
                w.use_move(p, acts[p].index)
        for p in (0, 1):
            w.residual(p)
    return _finish(state, w)


def _finish(state: BattleState, w: _World) -> tuple[BattleState, list]:
    teams = []
    alive = []
    for team in w.teams:
        live = False
        for i, m in enumerate(team):
            if isinstance(m.hp, Dist):
                team[i] = m = m._replace(hp=m.hp.mean())
            if m.hp > 0:
                live = True
        teams.append(tuple(team))
        alive.append(live)
    winner = None
    reason = None
    must = [False, False]
    if not alive[0] and not alive[1]:
        winner, reason = -1, "faint"
    elif not alive[0]:
        winner, reason = 1, "faint"
    elif not alive[1]:
        winner, reason = 0, "faint"
    else:
        for p in (0, 1):
            act = w.active[p]
            if teams[p][act].hp <= 0 or (w.pivot[p] and _has_reserve(teams[p], act)):
                must[p] = True
    if winner is not None:
        w.events.append({"type": "win", "side": winner})
    new = BattleState(tuple(teams), tuple(w.active), state.rules, state.turn + 1, tuple(w.hazards),
                      state.clocks, tuple(w.tera_ok), tuple(w.dmax_ok), tuple(must), winner, reason)
    return new, w.events


def _signature(s: BattleState):
    return (s.active, s.hazards, s.tera_ok, s.dmax_ok, s.must_switch, s.winner,
            tuple((m.hp, m.status, m.boosts, m.tera, m.dmax) for t in s.teams for m in t))


def step(state: BattleState, a: Action, b: Action, mode: str = "sampled", rng: Optional[random.Random] = None,
         chart: Optional[TypeChart] = None, check: bool = True) -> TransitionOutcome:
    """Advance one decision point.

    ``a`` is player 0's action and ``b`` player 1's. In sampled mode ``rng``
    drives every random event; in expected mode all branches are returned
    with their probabilities, identical successors merged.
    """
    if state.winner is not None:
        raise ContractViolation("step on a terminal state")
    if check:
        if a.actor != 0 or b.actor != 1:
            raise ContractViolation("actions must belong to players 0 and 1 in that order")
        if a not in legal_actions(state, 0) or b not in legal_actions(state, 1):
            raise ContractViolation(f"illegal action pair {a}, {b}")
    chart = chart or load_typechart()
    if mode == "sampled":
        if rng is None:
            raise ContractViolation("sampled mode needs an rng")
        s, ev = _resolve(state, a, b, _Sampler(rng), chart)
        return TransitionOutcome((Branch(1.0, s, tuple(ev)),))
    if mode != "expected":
        raise ContractViolation(f"unknown mode {mode!r}")
    stack = [[]]
    merged: dict = {}
    order = []
    while stack:
        script = stack.pop()
        en = _Enumerator(script)
        s, ev = _resolve(state, a, b, en, chart)
        stack.extend(reversed(en.pending))
        key = _signature(s)
        if key in merged:
            p, s0, ev0 = merged[key]
            merged[key] = (p + en.prob, s0, ev0)
        else:
            merged[key] = (en.prob, s, tuple(ev))
            order.append(key)
    return TransitionOutcome(tuple(Branch(*merged[k]) for k in order))


# ---------------------------------------------------------------- clocks


def clock_allowance(bank: float) -> float:
    """Seconds a player may spend on the current decision."""
    return min(CLOCK_BANK, bank + CLOCK_INCREMENT)


def apply_clock(state: BattleState, elapsed: Sequence[float]) -> BattleState:
    """Charge thinking time to both players.

    The per-decision increment is credited before the charge and the bank is
    capped at its starting value; spending more than the allowance loses.
    """
    if any(e < 0 for e in elapsed):
        raise ContractViolation("elapsed time must be non-negative")
    if state.winner is not None:
        return state
    clocks = list(state.clocks)
    late = []
    for p in (0, 1):
        allow = clock_allowance(clocks[p])
        if elapsed[p] > allow:
            late.append(p)
            clocks[p] = 0.0
        else:
            clocks[p] = allow - elapsed[p]
    if not late:
        return state._replace(clocks=tuple(clocks))
    winner = -1 if len(late) == 2 else 1 - late[0]
    return state._replace(clocks=tuple(clocks), winner=winner, reason="timeout")
