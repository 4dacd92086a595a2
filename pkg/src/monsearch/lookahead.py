"""One-step lookahead: turns-to-KO tables and their text rendering."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

from .core import (
    DMAX, MOVE, TERA, Action, BattlePokemon, BattleState, ContractViolation, MonsearchError,
    Observation, legal_actions, load_typechart,
)
from .engine import damage, effective_speed, expected_context

SENTINEL = 9999
TTK_CAP = 20  # used when TTKs enter differences, so sentinels do not swamp them

HYPOTHESES = ("none", "defender_tera", "both_tera", "attacker_tera")


class NoMoveAvailable(MonsearchError):
    """The player must switch; there is no move to recommend."""


def expected_damage(att: BattlePokemon, dfd: BattlePokemon, move, weather: Optional[str] = None, chart=None) -> float:
    """Accuracy-weighted damage at the mean roll, without critical hits."""
    if move.power == 0:
        return 0.0
    d = damage(expected_context(att, dfd, move, weather, chart))
    p = move.accuracy * (0.75 if att.status == "paralysis" else 1.0)
    return d * p


def ttk_from(hp: float, dmg: float) -> int:
    if dmg <= 0:
        return SENTINEL
    if hp <= 0:
        return 1
    return max(1, min(SENTINEL, math.ceil(hp / dmg - 1e-9)))


def turns_to_ko(att: BattlePokemon, dfd: BattlePokemon, move, weather: Optional[str] = None, chart=None) -> int:
    """Hits of ``move`` needed to bring ``dfd`` from its current HP to 0."""
    return ttk_from(dfd.hp, expected_damage(att, dfd, move, weather, chart))


def with_tera(mon: BattlePokemon) -> BattlePokemon:
    return mon if mon.tera else mon._replace(tera=True)


def with_dynamax(mon: BattlePokemon) -> BattlePokemon:
    if mon.dmax != 0:
        return mon
    return mon._replace(dmax=3, hp=mon.hp * 2)


def best_ttk(att: BattlePokemon, dfd: BattlePokemon, weather=None, chart=None) -> int:
    if not att.spec.moves:
        return SENTINEL
    return min(turns_to_ko(att, dfd, m, weather, chart) for m in att.spec.moves)


def best_damage(att: BattlePokemon, dfd: BattlePokemon, weather=None, chart=None) -> float:
    return max((expected_damage(att, dfd, m, weather, chart) for m in att.spec.moves), default=0.0)


def speed_sign(a: BattlePokemon, b: BattlePokemon) -> int:
    sa, sb = effective_speed(a), effective_speed(b)
    return (sa > sb) - (sa < sb)


@dataclass(frozen=True)
class MatchupReport:
    attacker: str
    defender: str
    speed: int  # +1 attacker faster, -1 slower, 0 tie
    moves: tuple[str, ...]
    ttk: dict  # hypothesis -> per-move turns-to-KO, aligned with ``moves``
    opponent_moves: tuple[str, ...]
    opponent_ttk: tuple[int, ...]
    tera_enabled: bool = False

    def render(self) -> str:
        a, d = self.attacker, self.defender
        lines = [f"{a} vs. {d}:"]
        if self.speed > 0:
            lines.append(f"{a} outspeeds {d}")
        elif self.speed < 0:
            lines.append(f"{d} outspeeds {a}")
        else:
            lines.append(f"{a} and {d} tie in speed")
        headers = {
            "none": f"{a}'s moves:",
            "defender_tera": f"{a}'s moves if opponent's {d} uses 'terastallize':",
            "both_tera": f"{a}'s moves if it uses 'terastallize' and opponent's {d} uses 'terastallize':",
            "attacker_tera": f"{a}'s moves if it uses 'terastallize' and opponent's {d} does NOT use 'terastallize':",
        }
        for h in HYPOTHESES if self.tera_enabled else ("none",):
            lines.append(headers[h])
            for name, k in zip(self.moves, self.ttk[h]):
                lines.append(f"{name}: {k} turns to KO opponent's pokemon")
        lines.append(f"Opponent moves: {d}")
        for name, k in zip(self.opponent_moves, self.opponent_ttk):
            lines.append(f"{name}: {k} turns to KO your pokemon")
        return "\n".join(lines)


def matchup(att: BattlePokemon, dfd: BattlePokemon, weather=None, tera_enabled=False, chart=None) -> MatchupReport:
    chart = chart or load_typechart()
    variants = {
        "none": (att, dfd),
        "defender_tera": (att, with_tera(dfd)),
        "both_tera": (with_tera(att), with_tera(dfd)),
        "attacker_tera": (with_tera(att), dfd),
    }
    ttk = {h: tuple(turns_to_ko(x, y, m, weather, chart) for m in att.spec.moves) for h, (x, y) in variants.items()}
    return MatchupReport(
        attacker=att.species, defender=dfd.species, speed=speed_sign(att, dfd),
        moves=tuple(m.name for m in att.spec.moves), ttk=ttk,
        opponent_moves=tuple(m.name for m in dfd.spec.moves),
        opponent_ttk=tuple(turns_to_ko(dfd, att, m, weather, chart) for m in dfd.spec.moves),
        tera_enabled=tera_enabled,
    )


def _check_estimate(obs: Observation, est: BattleState):
    if est is None:
        raise ContractViolation("an estimated opponent state is required")
    if est.teams[obs.viewer] != obs.own:
        raise ContractViolation("estimate does not match the observer's own team")


def matchup_report(obs: Observation, est: BattleState, attacker_slot: Optional[int] = None) -> MatchupReport:
    """Report for our active (or ``attacker_slot``) against the estimated opposing active."""
    _check_estimate(obs, est)
    p = obs.viewer
    slot = obs.own_active if attacker_slot is None else attacker_slot
    return matchup(est.teams[p][slot], est.active_mon(1 - p), obs.rules.weather, obs.rules.tera)


def render_for(state: BattleState, player: int) -> str:
    """Plain-text damage summary for ``player`` on a (possibly estimated) latent state.

    When the player must switch, there is one block per switch-in candidate
    under a "Requires switch:" header; otherwise one block for the active.
    """
    w, tera = state.rules.weather, state.rules.tera
    foe = state.active_mon(1 - player)
    if state.must_switch[player]:
        slots = [i for i, m in enumerate(state.teams[player]) if i != state.active[player] and m.hp > 0]
        blocks = ["Requires switch:"] + [matchup(state.teams[player][s], foe, w, tera).render() for s in slots]
        return "\n".join(blocks)
    return matchup(state.active_mon(player), foe, w, tera).render()


def render_lookahead(obs: Observation, est: BattleState) -> str:
    _check_estimate(obs, est)
    return render_for(est, obs.viewer)


# ---------------------------------------------------------------- move choice


def variant_mons(state: BattleState, player: int, action: Action):
    """The attacker and defender as they would stand after ``action``'s mechanic activates."""
    me = state.active_mon(player)
    if action.kind == TERA:
        me = with_tera(me)
    elif action.kind == DMAX:
        me = with_dynamax(me)
    return me, state.active_mon(1 - player)


def move_key(state: BattleState, player: int, action: Action, chart=None):
    """Ranking key of a move-using action: own TTK, then opponent TTK against us (larger first)."""
    chart = chart or load_typechart()
    w = state.rules.weather
    me, foe = variant_mons(state, player, action)
    move = me.spec.moves[action.index]
    dmg = expected_damage(me, foe, move, w, chart)
    ours = ttk_from(foe.hp, dmg)
    theirs = best_ttk(foe, me, w, chart)
    return (ours, -theirs, -dmg, action.index)


def best_move_for(state: BattleState, player: int, actions: Optional[Sequence[Action]] = None) -> Action:
    """The one-step-lookahead choice among move-using actions."""
    if actions is None:
        actions = legal_actions(state, player)
    moves = [a for a in actions if a.kind in (MOVE, TERA, DMAX)]
    if not moves:
        raise NoMoveAvailable("no move-using action is legal")
    chart = load_typechart()
    return min(moves, key=lambda a: (move_key(state, player, a, chart), a.kind != MOVE))


def one_step_best_move(obs: Observation, est: BattleState) -> Action:
    _check_estimate(obs, est)
    return best_move_for(est, obs.viewer, obs.legal())
