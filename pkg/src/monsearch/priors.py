"""Action sampling, opponent modelling and leaf valuation.

Each role has a deterministic heuristic implementation and an LLM-backed one
that falls back to the heuristic whenever the endpoint fails or its reply
cannot be turned into a legal answer.
"""
from __future__ import annotations

import logging
import threading
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence

from .core import (
    DMAX, MOVE, PASS, SWITCH, TERA, Action, BattlePokemon, BattleState, NATURES, TYPES, Observation,
    PokemonSpec, StatBlock, compute_stats, label_for, legal_actions, load_typechart,
)
from .dex import Dex, load_dex
from .engine import effective_speed
from .lookahead import TTK_CAP, best_ttk, move_key
from .usage import EV_ARCHETYPES, FALLBACK_SPREAD, UsageStats, argmax, ranked

log = logging.getLogger(__name__)

DEFAULT_M = 3
DEFAULT_HISTORY = 8


@dataclass
class PromptContext:
    strategy: str = ""
    history: int = DEFAULT_HISTORY
    usage: Optional[UsageStats] = None
    reports: Optional[str] = None

    def __post_init__(self):
        if self.history < 0:
            raise ValueError("history window must be >= 0")


class ActionSampler(Protocol):
    def sample(self, obs: Observation, ctx: PromptContext, m: int, state: Optional[BattleState] = None) -> list[Action]:
        ...


class OpponentModel(Protocol):
    def estimate_state(self, obs: Observation) -> BattleState:
        ...

    def sample_actions(self, obs: Observation, m: int, state: Optional[BattleState] = None) -> list[Action]:
        ...


class ValueFunction(Protocol):
    def evaluate(self, obs: Observation, state: Optional[BattleState] = None) -> float:
        ...


class FallbackCounter:
    """Thread-safe tally of provider fallbacks per role."""

    def __init__(self):
        self._c: Counter = Counter()
        self._lock = threading.Lock()

    def add(self, role: str, reason: str = ""):
        with self._lock:
            self._c[role] += 1
            if reason:
                self._c[f"{role}:{reason}"] += 1

    def __getitem__(self, role: str) -> int:
        with self._lock:
            return self._c[role]

    def total(self) -> int:
        with self._lock:
            return sum(v for k, v in self._c.items() if ":" not in k)

    def snapshot(self) -> dict:
        with self._lock:
            return dict(self._c)


# ---------------------------------------------------------------- opponent estimation


_STAND_IN_BASE = StatBlock(80, 80, 80, 80, 80, 80)


def _spec_for(dex: Dex, species: str, level: int, moves: Sequence[str], item: str, ability: Optional[str],
              nature: str, evs, tera: Optional[str]) -> PokemonSpec:
    nature = nature if nature in NATURES else "serious"
    tera = tera if tera in TYPES else None
    known = [m for m in moves if m in dex.moves][:4]
    if species in dex.species:
        e = dex.species[species]
        if not known:
            known = list(e.sets[0]["moves"]) if e.sets else ["tackle"]
        return PokemonSpec(species, level, e.types, e.base_stats, tuple(dex.moves[m] for m in known),
                           ability=ability or e.ability, item=item, nature=nature, evs=tuple(evs),
                           tera_type=tera or e.types[0])
    # unknown species: neutral stand-in so estimation stays total
    return PokemonSpec(species, level, ("normal",), _STAND_IN_BASE, tuple(dex.moves[m] for m in known or ["tackle"]),
                       ability=ability or "none", item=item, nature=nature, evs=tuple(evs), tera_type=tera or "normal")


def estimate_opponent_stats(obs: Observation, usage: Optional[UsageStats], dex: Optional[Dex] = None) -> list:
    """Estimated spec per opposing slot (None for unrevealed) from usage argmax."""
    dex = dex or load_dex()
    out = []
    for v in obs.opp:
        if v is None:
            out.append(None)
            continue
        u = usage.get(v.species) if usage is not None else None
        revealed = list(v.moves)
        if u is not None:
            fill = [m for m in ranked(u.moves) if m not in revealed and m in dex.moves]
            moves = (revealed + fill)[:4]
            item = v.item or argmax(u.items) or "none"
            spread = EV_ARCHETYPES[argmax(u.spreads) or FALLBACK_SPREAD]
            nature = argmax(u.natures) or "serious"
            tera = v.tera_type or argmax(u.tera_types)
            ability = v.ability or argmax(u.abilities)
        else:
            moves = revealed
            if v.species in dex.species and dex.species[v.species].sets:
                moves = (revealed + [m for m in dex.species[v.species].sets[0]["moves"] if m not in revealed])[:4]
            item = v.item or "none"
            spread = EV_ARCHETYPES[FALLBACK_SPREAD]
            nature = "serious"
            tera = v.tera_type
            ability = v.ability
        out.append(_spec_for(dex, v.species, v.level, moves, item, ability, nature, spread, tera))
    return out


def _placeholder(dex: Dex, usage: Optional[UsageStats], taken: set, level: Optional[int]) -> PokemonSpec:
    name = usage.most_used(taken) if usage is not None else None
    if name is None or name not in dex.species:
        name = next(n for n in sorted(dex.species) if n not in taken)
    e = dex.species[name]
    lvl = level if level is not None else e.random_level
    u = usage.get(name) if usage is not None else None
    if u is not None and u.moves:
        moves = [m for m in ranked(u.moves) if m in dex.moves][:4]
        return _spec_for(dex, name, lvl, moves, argmax(u.items) or "none", argmax(u.abilities),
                         argmax(u.natures) or "serious", EV_ARCHETYPES[argmax(u.spreads) or FALLBACK_SPREAD],
                         argmax(u.tera_types))
    return dex.make(name, level=lvl, item="none", nature="serious", evs=EV_ARCHETYPES[FALLBACK_SPREAD])


class HeuristicOpponentModel:
    """Usage-argmax state estimate; opponent actions ranked by the heuristic ranking."""

    def __init__(self, usage: Optional[UsageStats] = None, dex: Optional[Dex] = None):
        self.usage = usage
        self.dex = dex or load_dex()
        self._cache: dict = {}

    def estimate_state(self, obs: Observation) -> BattleState:
        p, q = obs.viewer, 1 - obs.viewer
        specs = estimate_opponent_stats(obs, self.usage, self.dex)
        taken = {v.species for v in obs.opp if v is not None}
        team = []
        for v, spec in zip(obs.opp, specs):
            if spec is None:
                spec = self._placeholder(taken, obs.rules.level)
                taken.add(spec.species)
                team.append(BattlePokemon(spec, compute_stats(spec), compute_stats(spec).hp))
                continue
            stats = compute_stats(spec)
            mon = BattlePokemon(spec, stats, 0, v.status, v.boosts, v.tera, v.dmax)
            hp = 0 if v.hp_frac <= 0 else max(1, round(v.hp_frac * mon.max_hp))
            team.append(mon._replace(hp=hp))
        teams = [None, None]
        teams[p] = obs.own
        teams[q] = tuple(team)
        active = [0, 0]
        active[p] = obs.own_active
        active[q] = obs.opp_active if obs.opp_active is not None else 0
        def pair(own, opp):
            out = [None, None]
            out[p], out[q] = own, opp
            return tuple(out)
        winner = None
        if obs.winner is not None:
            winner = -1 if obs.winner == -1 else (p if obs.winner == 0 else q)
        return BattleState(
            teams=tuple(teams), active=tuple(active), rules=obs.rules, turn=obs.turn,
            hazards=pair(*obs.hazards), clocks=pair(*obs.clocks), tera_ok=pair(*obs.tera_ok),
            dmax_ok=pair(*obs.dmax_ok), must_switch=pair(*obs.must_switch), winner=winner,
        )

    def _placeholder(self, taken, level):
        key = (frozenset(taken), level)
        if key not in self._cache:
            self._cache[key] = _placeholder(self.dex, self.usage, set(taken), level)
        return self._cache[key]

    def sample_actions(self, obs: Observation, m: int, state: Optional[BattleState] = None) -> list[Action]:
        est = state if state is not None else self.estimate_state(obs)
        q = 1 - obs.viewer
        return rank_actions(est, q, opponent_legal(obs, est))[:max(1, m)]


def opponent_legal(obs: Observation, est: BattleState) -> list[Action]:
    """Opponent actions legal in the estimate, switching only to revealed teammates when any exist."""
    q = 1 - obs.viewer
    acts = legal_actions(est, q)
    revealed = {i for i, v in enumerate(obs.opp) if v is not None}
    known = [a for a in acts if a.kind != SWITCH or a.index in revealed]
    if any(a.kind != SWITCH for a in acts) or any(a.kind == SWITCH for a in known):
        return known or acts
    return acts


# ---------------------------------------------------------------- ranking


def matchup_differential(state: BattleState, player: int, slot: int, chart=None) -> int:
    """(opponent TTK against ``slot``) minus (``slot``'s TTK against the opposing active), capped."""
    mon = state.teams[player][slot]
    foe = state.active_mon(1 - player)
    if foe.hp <= 0 or mon.hp <= 0:
        return 0
    w = state.rules.weather
    ours = min(TTK_CAP, best_ttk(mon, foe, w, chart))
    theirs = min(TTK_CAP, best_ttk(foe, mon, w, chart))
    return theirs - ours


def rank_switches(state: BattleState, player: int, switches: Sequence[Action]) -> list[Action]:
    chart = load_typechart()
    return sorted(switches, key=lambda a: (-matchup_differential(state, player, a.index, chart), a.index))


def rank_actions(state: BattleState, player: int, legal: Sequence[Action]) -> list[Action]:
    """Full deterministic ranking; any prefix is the sampler's answer for that budget."""
    legal = list(legal)
    if not legal or legal[0].kind == PASS:
        return legal
    switches = [a for a in legal if a.kind == SWITCH]
    movers = [a for a in legal if a.kind != SWITCH]
    sw = rank_switches(state, player, switches)
    if not movers:
        return sw
    chart = load_typechart()
    keys = {a: move_key(state, player, a, chart) for a in movers}
    kind_order = {MOVE: 0, TERA: 1, DMAX: 2}
    best = min(movers, key=lambda a: (keys[a], kind_order[a.kind]))
    out = [best]
    if sw:
        out.append(sw[0])
    for kind in (TERA, DMAX):
        vs = [a for a in movers if a.kind == kind]
        if vs:
            out.append(min(vs, key=lambda a: (keys[a][2], a.index)))
    plain = sorted((a for a in movers if a.kind == MOVE), key=lambda a: (keys[a][0], keys[a][2], a.index))
    rest = sorted((a for a in movers if a.kind != MOVE), key=lambda a: (keys[a][0], keys[a][2], kind_order[a.kind], a.index))
    out.extend(plain)
    out.extend(rest)
    out.extend(sw)
    return list(dict.fromkeys(out))


class HeuristicSampler:
    """Lookahead-driven candidate actions for the player to move."""

    def __init__(self, opponent: Optional[HeuristicOpponentModel] = None):
        self.opponent = opponent or HeuristicOpponentModel()

    def sample(self, obs: Observation, ctx: Optional[PromptContext] = None, m: int = DEFAULT_M,
               state: Optional[BattleState] = None) -> list[Action]:
        est = state if state is not None else self.opponent.estimate_state(obs)
        return rank_actions(est, obs.viewer, obs.legal())[:max(1, m)]


def heuristic_sample(obs: Observation, ctx: Optional[PromptContext], m: int, usage: Optional[UsageStats] = None):
    return HeuristicSampler(HeuristicOpponentModel(usage)).sample(obs, ctx, m)


# ---------------------------------------------------------------- valuation


@dataclass(frozen=True)
class ValueWeights:
    hp: float = 0.35
    alive: float = 0.35
    ttk: float = 0.2
    speed: float = 0.05
    switch: float = 0.05

    def total(self) -> float:
        return self.hp + self.alive + self.ttk + self.speed + self.switch


def switch_counts(history, viewer: int) -> tuple[int, int]:
    """Voluntary switches (own, opponent) in the history window; replacements after a faint do not count."""
    own = opp = 0
    fainted = set()
    for turn in history:
        for ev in turn:
            if ev["type"] == "switch":
                side = ev["side"]
                if side in fainted:
                    fainted.discard(side)
                elif side == viewer:
                    own += 1
                else:
                    opp += 1
            elif ev["type"] == "faint":
                fainted.add(ev["side"])
    return own, opp


def state_features(state: BattleState, player: int, switches: tuple[int, int] = (0, 0)) -> dict:
    q = 1 - player
    mine, theirs = state.teams[player], state.teams[q]
    n = max(len(mine), len(theirs))
    hp = (sum(max(0.0, m.hp) / m.max_hp for m in mine) - sum(max(0.0, m.hp) / m.max_hp for m in theirs)) / n
    alive = (sum(m.hp > 0 for m in mine) - sum(m.hp > 0 for m in theirs)) / n
    a, b = state.active_mon(player), state.active_mon(q)
    if a.hp > 0 and b.hp > 0:
        w = state.rules.weather
        t_us = min(TTK_CAP, best_ttk(a, b, w))
        t_them = min(TTK_CAP, best_ttk(b, a, w))
        ttk = (t_them - t_us) / (t_them + t_us)
        sa, sb = effective_speed(a), effective_speed(b)
        speed = float((sa > sb) - (sa < sb))
    else:
        ttk = speed = 0.0
    own_sw, opp_sw = switches
    sw = (opp_sw - own_sw) / (opp_sw + own_sw + 1)
    return {"hp": hp, "alive": alive, "ttk": ttk, "speed": speed, "switch": sw}


def state_value(state: BattleState, player: int, weights: ValueWeights = ValueWeights(),
                switches: tuple[int, int] = (0, 0)) -> float:
    """Affine map of antisymmetric features onto [0, 1]; terminal states score their reward."""
    if state.winner is not None:
        return state.reward(player)
    f = state_features(state, player, switches)
    score = sum(getattr(weights, k) * v for k, v in f.items())
    return min(1.0, max(0.0, 0.5 + 0.5 * score / weights.total()))


class HeuristicValue:
    def __init__(self, opponent: Optional[HeuristicOpponentModel] = None, weights: ValueWeights = ValueWeights()):
        self.opponent = opponent or HeuristicOpponentModel()
        self.weights = weights

    def evaluate(self, obs: Observation, state: Optional[BattleState] = None) -> float:
        if obs.winner is not None:
            return {0: 1.0, 1: 0.0, -1: 0.5}[obs.winner]
        est = state if state is not None else self.opponent.estimate_state(obs)
        return state_value(est, obs.viewer, self.weights, switch_counts(obs.history, obs.viewer))


def heuristic_value(obs: Observation, usage: Optional[UsageStats] = None, weights: ValueWeights = ValueWeights()) -> float:
    return HeuristicValue(HeuristicOpponentModel(usage), weights).evaluate(obs)


# ---------------------------------------------------------------- provider bundle and LLM-backed roles


@dataclass
class Providers:
    sampler: ActionSampler
    opponent: OpponentModel
    value: ValueFunction
    ctx: PromptContext = field(default_factory=PromptContext)
    fallbacks: FallbackCounter = field(default_factory=FallbackCounter)


def heuristic_providers(usage: Optional[UsageStats] = None, weights: ValueWeights = ValueWeights(),
                        history: int = DEFAULT_HISTORY) -> Providers:
    opp = HeuristicOpponentModel(usage)
    return Providers(HeuristicSampler(opp), opp, HeuristicValue(opp, weights), PromptContext(history=history, usage=usage))


def team_strategy(obs: Observation) -> str:
    """One-line plan from our team and the opponents seen so far; computed once per battle."""
    own = ", ".join(m.species for m in obs.own)
    seen = ", ".join(v.species for v in obs.opp if v is not None) or "unknown"
    fast = max(obs.own, key=lambda m: m.stats.speed).species
    bulky = max(obs.own, key=lambda m: m.stats.hp * (m.stats.defense + m.stats.special_defense)).species
    return (f"Our team: {own}. Opponents seen: {seen}. Lead with favourable matchups, "
            f"use {fast} to clean up weakened targets and keep {bulky} healthy as a pivot.")


class _LLMRole:
    def __init__(self, client, fallback_counter: FallbackCounter, model: str = "default", timeout: float = 10.0,
                 max_tokens: int = 64):
        self.client = client
        self.counter = fallback_counter
        self.model = model
        self.timeout = timeout
        self.max_tokens = max_tokens

    def _ask(self, messages):
        from .llm import ChatRequest

        req = ChatRequest(self.model, tuple(messages), 0.0, self.max_tokens, self.timeout)
        try:
            return self.client.complete(req)
        except Exception as exc:  # a broken client must never stall the agent
            log.warning("LLM client raised %s", exc)
            return None


class LLMSampler(_LLMRole):
    """Puts the LLM's pick first, then pads with heuristic candidates."""

    def __init__(self, client, fallback: HeuristicSampler, counter: FallbackCounter, **kw):
        super().__init__(client, counter, **kw)
        self.fallback = fallback

    def sample(self, obs, ctx=None, m=DEFAULT_M, state=None):
        from .llm import Rejection, build_prompt, menu_for, parse_action

        ctx = ctx or PromptContext()
        est = state if state is not None else self.fallback.opponent.estimate_state(obs)
        base = self.fallback.sample(obs, ctx, len(obs.legal()), state=est)
        menu = menu_for(obs)
        rep = self._ask(build_prompt(obs, ctx, "player", est, menu))
        if rep is None or not rep.ok:
            self.counter.add("player", "transport")
            return base[:max(1, m)]
        pick = parse_action(rep.text, menu)
        if isinstance(pick, Rejection):
            self.counter.add("player", pick.reason)
            return base[:max(1, m)]
        return list(dict.fromkeys([pick] + base))[:max(1, m)]


class LLMOpponentModel(_LLMRole):
    def __init__(self, client, fallback: HeuristicOpponentModel, counter: FallbackCounter, ctx: Optional[PromptContext] = None, **kw):
        super().__init__(client, counter, **kw)
        self.fallback = fallback
        self.ctx = ctx or PromptContext()

    def estimate_state(self, obs):
        return self.fallback.estimate_state(obs)

    def sample_actions(self, obs, m=DEFAULT_M, state=None):
        from .llm import Rejection, build_prompt, parse_action

        est = state if state is not None else self.fallback.estimate_state(obs)
        q = 1 - obs.viewer
        legal = opponent_legal(obs, est)
        base = rank_actions(est, q, legal)
        menu = [(label_for(a, est.teams[q], est.active[q]), a) for a in legal]
        rep = self._ask(build_prompt(obs, self.ctx, "opponent", est, menu))
        if rep is None or not rep.ok:
            self.counter.add("opponent", "transport")
            return base[:max(1, m)]
        pick = parse_action(rep.text, menu)
        if isinstance(pick, Rejection):
            self.counter.add("opponent", pick.reason)
            return base[:max(1, m)]
        return list(dict.fromkeys([pick] + base))[:max(1, m)]


class LLMValue(_LLMRole):
    def __init__(self, client, fallback: HeuristicValue, counter: FallbackCounter, ctx: Optional[PromptContext] = None, **kw):
        super().__init__(client, counter, **kw)
        self.fallback = fallback
        self.ctx = ctx or PromptContext()

    def evaluate(self, obs, state=None):
        from .llm import build_prompt, parse_score

        if obs.winner is not None:
            return self.fallback.evaluate(obs, state)
        est = state if state is not None else self.fallback.opponent.estimate_state(obs)
        rep = self._ask(build_prompt(obs, self.ctx, "value", est))
        if rep is None or not rep.ok:
            self.counter.add("value", "transport")
            return self.fallback.evaluate(obs, est)
        score = parse_score(rep.text)
        if score is None:
            self.counter.add("value", "unparsable")
            return self.fallback.evaluate(obs, est)
        return score


def llm_providers(client, usage: Optional[UsageStats] = None, weights: ValueWeights = ValueWeights(),
                  history: int = DEFAULT_HISTORY, model: str = "default", timeout: float = 10.0) -> Providers:
    opp = HeuristicOpponentModel(usage)
    ctx = PromptContext(history=history, usage=usage)
    counter = FallbackCounter()
    kw = {"model": model, "timeout": timeout}
    return Providers(
        sampler=LLMSampler(client, HeuristicSampler(opp), counter, **kw),
        opponent=LLMOpponentModel(client, opp, counter, ctx, **kw),
        value=LLMValue(client, HeuristicValue(opp, weights), counter, ctx, **kw),
        ctx=ctx, fallbacks=counter,
    )


# function-style entry points named after the roles
def llm_sample(providers: Providers, obs: Observation, m: int = DEFAULT_M, state=None) -> list[Action]:
    return providers.sampler.sample(obs, providers.ctx, m, state)


def llm_opponent(providers: Providers, obs: Observation, m: int = DEFAULT_M, state=None) -> list[Action]:
    return providers.opponent.sample_actions(obs, m, state)


def llm_value(providers: Providers, obs: Observation, state=None) -> float:
    return providers.value.evaluate(obs, state)
