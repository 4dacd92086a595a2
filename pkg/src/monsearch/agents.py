"""Baseline bots, scripted adversaries, search-based planners and a terminal human player."""
from __future__ import annotations

import random
from typing import Callable, Optional, Sequence

from .core import (
    MOVE, PASS, SWITCH, Action, BattleState, Observation, load_typechart, type_effectiveness,
)
from .dex import load_dex
from .engine import immune_to_status
from .lookahead import best_ttk, expected_damage, one_step_best_move, turns_to_ko
from .priors import HeuristicOpponentModel, Providers, heuristic_providers, matchup_differential
from .search import SearchConfig, fast_select, search
from .usage import UsageStats


class Agent:
    """Base agent: ``act`` maps an observation to one of ``obs.legal()``."""

    name = "agent"

    def __init__(self, seed: int = 0):
        self.seed = seed

    def reset(self, seed: int, player: int):
        self.seed = seed

    def act(self, obs: Observation) -> Action:
        raise NotImplementedError


def _only_pass(legal):
    return len(legal) == 1 and legal[0].kind == PASS


class RandomAgent(Agent):
    name = "random"

    def __init__(self, seed: int = 0):
        super().__init__(seed)
        self.rng = random.Random(seed)

    def reset(self, seed, player):
        super().reset(seed, player)
        self.rng = random.Random(seed)

    def act(self, obs):
        return self.rng.choice(obs.legal())


class MaxPowerAgent(Agent):
    """Highest base-power move, lowest index on ties; switches only when forced."""

    name = "max_power"

    def act(self, obs):
        legal = obs.legal()
        moves = [a for a in legal if a.kind == MOVE]
        if not moves:
            return min(legal, key=lambda a: a.index)
        spec = obs.own_mon.spec
        return max(moves, key=lambda a: (spec.moves[a.index].power, -a.index))


class _Estimating(Agent):
    def __init__(self, seed: int = 0, usage: Optional[UsageStats] = None):
        super().__init__(seed)
        self.model = HeuristicOpponentModel(usage)

    def estimate(self, obs) -> BattleState:
        return self.model.estimate_state(obs)


def defensive_switch(obs: Observation, est: BattleState, switches: Sequence[Action]) -> Action:
    """Switch-in taking the least type effectiveness from the opposing active's types."""
    chart = load_typechart()
    foe = est.active_mon(1 - obs.viewer)
    foe_types = foe.defensive_types

    def key(a):
        mon = obs.own[a.index]
        taken = max(type_effectiveness(chart, t, mon.defensive_types) for t in foe_types)
        dealt = max(type_effectiveness(chart, t, foe.defensive_types) for t in mon.spec.types)
        return (taken, -dealt, a.index)

    return min(switches, key=key)


class OneStepAgent(_Estimating):
    name = "one_step"

    def act(self, obs):
        legal = obs.legal()
        if _only_pass(legal):
            return legal[0]
        est = self.estimate(obs)
        if obs.must_switch[0]:
            return defensive_switch(obs, est, legal)
        return one_step_best_move(obs, est)


def _differential(est, player, slot, chart):
    return matchup_differential(est, player, slot, chart)


class AbyssalAgent(_Estimating):
    """Rule cascade: bad-matchup switch, one-shot, biggest hit, lowest index."""

    name = "abyssal"

    def act(self, obs):
        legal = obs.legal()
        if _only_pass(legal):
            return legal[0]
        est = self.estimate(obs)
        p = obs.viewer
        chart = load_typechart()
        switches = [a for a in legal if a.kind == SWITCH]
        if obs.must_switch[0]:
            return max(switches, key=lambda a: (_differential(est, p, a.index, chart), -a.index))
        if switches:
            here = _differential(est, p, obs.own_active, chart)
            if here < -2:
                best = max(switches, key=lambda a: (_differential(est, p, a.index, chart), -a.index))
                if _differential(est, p, best.index, chart) >= here + 2:
                    return best
        return abyssal_move(est, p, [a for a in legal if a.kind == MOVE]) or legal[0]


def abyssal_move(est: BattleState, player: int, moves: Sequence[Action]) -> Optional[Action]:
    if not moves:
        return None
    me, foe = est.active_mon(player), est.active_mon(1 - player)
    w = est.rules.weather
    spec = me.spec
    for a in sorted(moves, key=lambda a: a.index):
        if spec.moves[a.index].power and turns_to_ko(me, foe, spec.moves[a.index], w) == 1:
            return a
    return max(moves, key=lambda a: (expected_damage(me, foe, spec.moves[a.index], w), -a.index))


class StallerAgent(_Estimating):
    """Defensive script: attack only under pressure, otherwise heal, status, hazards."""

    name = "staller"
    heal_threshold = 0.5

    def act(self, obs):
        legal = obs.legal()
        if _only_pass(legal):
            return legal[0]
        est = self.estimate(obs)
        p = obs.viewer
        if obs.must_switch[0]:
            chart = load_typechart()
            return max(legal, key=lambda a: (_differential(est, p, a.index, chart), -a.index))
        moves = [a for a in legal if a.kind == MOVE]
        if not moves:
            return legal[0]
        return staller_move(est, p, moves, obs.hazards[1], self.heal_threshold)


def staller_move(est: BattleState, player: int, moves: Sequence[Action], hazard_set: bool,
                 heal_threshold: float = 0.5) -> Action:
    me, foe = est.active_mon(player), est.active_mon(1 - player)
    w = est.rules.weather
    spec = me.spec
    by = lambda cat: [a for a in moves if spec.moves[a.index].category == cat]
    attacks = [a for a in moves if spec.moves[a.index].power > 0]
    if attacks and best_ttk(foe, me, w) <= 2:
        return abyssal_move(est, player, attacks)
    heals = by("heal")
    if heals and me.hp / me.max_hp < heal_threshold:
        return heals[0]
    if foe.status is None:
        chart = load_typechart()
        for a in by("status-inflict"):
            m = spec.moves[a.index]
            if type_effectiveness(chart, m.type, foe.defensive_types) > 0 and not immune_to_status(foe, m.status):
                return a
    hazards = by("hazard")
    if hazards and not hazard_set:
        return hazards[0]
    if attacks:
        return abyssal_move(est, player, attacks)
    return moves[0]


def last_opponent_move(obs: Observation) -> Optional[str]:
    opp = 1 - obs.viewer
    for turn in reversed(obs.history):
        for ev in reversed(turn):
            if ev["type"] == "move" and ev["side"] == opp:
                return ev["move"]
    return None


class HyperSwitcherAgent(_Estimating):
    """On even turns, switches into a teammate resisting the last opposing move; otherwise best move."""

    name = "hyper_switcher"

    def act(self, obs):
        legal = obs.legal()
        if _only_pass(legal):
            return legal[0]
        est = self.estimate(obs)
        if obs.must_switch[0]:
            return defensive_switch(obs, est, legal)
        switches = [a for a in legal if a.kind == SWITCH]
        if obs.turn % 2 == 0 and switches:
            pick = resisting_switch(obs, switches)
            if pick is not None:
                return pick
        return one_step_best_move(obs, est)


def resisting_switch(obs: Observation, switches: Sequence[Action]) -> Optional[Action]:
    name = last_opponent_move(obs)
    dex = load_dex()
    if name is None or name not in dex.moves:
        return None
    move = dex.moves[name]
    if move.power == 0:
        return None
    chart = load_typechart()
    foe_view = obs.opp_mon
    mtype = move.type
    if name == "terablast" and foe_view is not None and foe_view.tera and foe_view.tera_type:
        mtype = foe_view.tera_type
    scored = []
    for a in switches:
        eff = type_effectiveness(chart, mtype, obs.own[a.index].defensive_types)
        if eff < 1:
            scored.append((eff, a.index, a))
    return min(scored)[2] if scored else None


class PlannerAgent(Agent):
    """Minimax search over provider-sampled actions."""

    name = "planner"

    def __init__(self, providers: Optional[Providers] = None, cfg: Optional[SearchConfig] = None, seed: int = 0,
                 budget: Optional[float] = None):
        super().__init__(seed)
        self.providers = providers or heuristic_providers()
        self.cfg = cfg or SearchConfig()
        self.budget = budget
        self.last = None

    def act(self, obs):
        if self.cfg.mode == "fast":
            self.last = fast_select(obs, self.providers, self.cfg, budget=self.budget)
        else:
            self.last = search(obs, self.providers, self.cfg, budget=self.budget)
        return self.last.action


class HumanAgent(Agent):
    """Terminal player: shows the labelled menu and re-prompts until a valid number is entered."""

    name = "human"

    def __init__(self, input_fn: Callable[[str], str] = input, output: Callable[[str], None] = print, seed: int = 0):
        super().__init__(seed)
        self.input_fn = input_fn
        self.output = output

    def act(self, obs):
        legal = obs.legal()
        self.output(render_status(obs))
        for i, a in enumerate(legal, 1):
            self.output(f"  {i}. {obs.label(a)}")
        while True:
            try:
                raw = self.input_fn(f"choose 1-{len(legal)}: ")
            except EOFError:
                raise SystemExit("input closed") from None
            raw = raw.strip()
            if raw.isdigit() and 1 <= int(raw) <= len(legal):
                return legal[int(raw) - 1]
            self.output(f"invalid choice {raw!r}; enter a number from 1 to {len(legal)}")


def render_status(obs: Observation) -> str:
    me = obs.own_mon
    lines = [f"turn {obs.turn}  clock {obs.clocks[0]:.0f}s"]
    lines.append(f"you: {me.species} {round(100 * max(0, me.hp) / me.max_hp)}%" + (f" ({me.status})" if me.status else ""))
    v = obs.opp_mon
    if v is not None:
        lines.append(f"foe: {v.species} {round(100 * v.hp_frac)}%" + (f" ({v.status})" if v.status else ""))
    for turn in obs.history[-1:]:
        from .llm import render_event

        for ev in turn:
            text = render_event(ev, obs.viewer)
            if text:
                lines.append("  " + text)
    return "\n".join(lines)


AGENT_NAMES = ("random", "max_power", "one_step", "abyssal", "staller", "hyper_switcher", "planner",
               "planner_fast", "llm_planner", "human")


def make_agent(name: str, seed: int = 0, usage: Optional[UsageStats] = None, cfg: Optional[SearchConfig] = None,
               providers: Optional[Providers] = None, budget: Optional[float] = None) -> Agent:
    if name == "random":
        return RandomAgent(seed)
    if name == "max_power":
        return MaxPowerAgent(seed)
    if name == "one_step":
        return OneStepAgent(seed, usage)
    if name == "abyssal":
        return AbyssalAgent(seed, usage)
    if name == "staller":
        return StallerAgent(seed, usage)
    if name == "hyper_switcher":
        return HyperSwitcherAgent(seed, usage)
    if name in ("planner", "planner_fast", "llm_planner"):
        cfg = cfg or SearchConfig()
        if name == "planner_fast":
            cfg = SearchConfig(**{**cfg.__dict__, "mode": "fast"})
        if name == "llm_planner" and providers is None:
            raise ValueError("llm_planner needs LLM providers")
        agent = PlannerAgent(providers or heuristic_providers(usage), cfg, seed, budget)
        agent.name = name
        return agent
    if name == "human":
        return HumanAgent()
    raise ValueError(f"unknown agent {name!r}; choose from {', '.join(AGENT_NAMES)}")
