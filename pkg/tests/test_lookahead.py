import random
import re

import pytest

from monsearch import lookahead
from monsearch.core import MOVE, TERA, Action, ContractViolation, Rules, lead_events, observe
from monsearch.engine import damage, expected_context
from monsearch.lookahead import (
    SENTINEL, NoMoveAvailable, best_move_for, expected_damage, matchup, matchup_report, one_step_best_move,
    render_for, ttk_from, turns_to_ko,
)
from monsearch.priors import HeuristicOpponentModel

from util import DEX, battle, custom, mon


def test_ttk_ceiling():
    assert ttk_from(300, 86) == 4
    assert ttk_from(86, 86) == 1
    assert ttk_from(50, 86) == 1
    assert ttk_from(300, 0) == SENTINEL


def test_status_move_is_sentinel():
    a, b = battle([mon("snorlax", ["toxic"])], [mon("blissey", ["tackle"])]).teams
    assert turns_to_ko(a[0], b[0], a[0].spec.moves[0]) == SENTINEL


def test_ttk_matches_repeated_hits():
    rng = random.Random(0)
    names = sorted(DEX.species)
    moves = [m for m in DEX.moves.values() if m.power > 0]
    for _ in range(1000):
        sa, sb = rng.sample(names, 2)
        mv = rng.choice(moves)
        s = battle([mon(sa, [mv.name])], [mon(sb, ["tackle"])])
        att, dfd = s.teams[0][0], s.teams[1][0]
        dfd = dfd._replace(hp=rng.randint(1, dfd.max_hp))
        per_hit = damage(expected_context(att, dfd, mv)) * mv.accuracy
        hp, hits = dfd.hp, 0
        while hp > 0 and hits < SENTINEL and per_hit > 0:
            hp -= per_hit
            hits += 1
        want = hits if per_hit > 0 else SENTINEL
        assert turns_to_ko(att, dfd, mv) == want


def _render_state(must_switch=True):
    a = [mon("garchomp", ["earthquake"]),
         mon("dragapult", ["dragondarts", "uturn", "quickattack", "terablast"], tera_type="ghost")]
    b = [mon("primarina", ["moonblast", "psychicnoise", "surf", "flipturn"], tera_type="water")]
    s = battle(a, b, Rules(tera=True))
    if must_switch:
        s = s._replace(teams=((s.teams[0][0]._replace(hp=0), s.teams[0][1]), s.teams[1]), must_switch=(True, False))
    return s


SHAPE = """Requires switch:
dragapult vs. primarina:
dragapult outspeeds primarina
dragapult's moves:
dragondarts: K turns to KO opponent's pokemon
uturn: K turns to KO opponent's pokemon
quickattack: K turns to KO opponent's pokemon
terablast: K turns to KO opponent's pokemon
dragapult's moves if opponent's primarina uses 'terastallize':
dragondarts: K turns to KO opponent's pokemon
uturn: K turns to KO opponent's pokemon
quickattack: K turns to KO opponent's pokemon
terablast: K turns to KO opponent's pokemon
dragapult's moves if it uses 'terastallize' and opponent's primarina uses 'terastallize':
dragondarts: K turns to KO opponent's pokemon
uturn: K turns to KO opponent's pokemon
quickattack: K turns to KO opponent's pokemon
terablast: K turns to KO opponent's pokemon
dragapult's moves if it uses 'terastallize' and opponent's primarina does NOT use 'terastallize':
dragondarts: K turns to KO opponent's pokemon
uturn: K turns to KO opponent's pokemon
quickattack: K turns to KO opponent's pokemon
terablast: K turns to KO opponent's pokemon
Opponent moves: primarina
moonblast: K turns to KO your pokemon
psychicnoise: K turns to KO your pokemon
surf: K turns to KO your pokemon
flipturn: K turns to KO your pokemon"""


def test_render_section_structure():
    text = render_for(_render_state(), 0)
    assert re.sub(r": \d+ turns", ": K turns", text) == SHAPE


def test_render_is_byte_stable():
    s = _render_state()
    assert render_for(s, 0) == render_for(_render_state(), 0)


def test_tera_hypotheses_change_numbers():
    rep = matchup(*[t[0] for t in battle(
        [mon("dragapult", ["dragondarts", "shadowball"], tera_type="ghost")],
        [mon("primarina", ["moonblast"], tera_type="water")], Rules(tera=True)).teams], tera_enabled=True)
    # dragon hits a fairy not at all, but a terastallized water primarina takes it
    assert rep.ttk["none"][0] == SENTINEL
    assert rep.ttk["defender_tera"][0] < SENTINEL


def test_immune_defender_all_sentinel():
    s = battle([mon("snorlax", ["tackle", "bodyslam", "doubleedge"])], [mon("gengar", ["shadowball"])])
    obs = observe(s, 0, [lead_events(s)])
    est = HeuristicOpponentModel().estimate_state(obs)
    rep = matchup_report(obs, est)
    assert set(rep.ttk["none"]) == {SENTINEL}
    assert one_step_best_move(obs, est) == Action(MOVE, 0, 0)


def test_faster_one_shot_marked():
    a = custom("fast", ["fighting"], [100, 200, 100, 100, 100, 200], ["closecombat", "tackle"])
    b = custom("frail", ["normal"], [40, 40, 40, 40, 40, 40], ["tackle"])
    s = battle([a], [b])
    obs = observe(s, 0, [lead_events(s)])
    est = s  # truthful estimate
    rep = matchup_report(obs, est)
    assert rep.speed == 1
    assert rep.ttk["none"][0] == 1
    assert "fast outspeeds frail" in rep.render()
    assert one_step_best_move(obs, est) == Action(MOVE, 0, 0)


def test_argmin_ttk():
    att = mon("snorlax", ["tackle", "bodyslam", "quickattack"])
    s = battle([att], [mon("blissey", ["softboiled"])])
    ttk = [turns_to_ko(s.teams[0][0], s.teams[1][0], m) for m in att.moves]
    best = best_move_for(s, 0)
    assert ttk[best.index] == min(ttk)
    assert best.index == 1


def test_ttk_tie_takes_first():
    att = mon("snorlax", ["tackle", "quickattack"])
    s = battle([att], [mon("blissey", ["softboiled"])])
    assert best_move_for(s, 0) == Action(MOVE, 0, 0)


def test_ttk_tie_prefers_surviving_longer():
    # the tera variant makes snorlax a ghost, immune to the opposing fighting move
    att = mon("snorlax", ["bodyslam"], tera_type="ghost")
    s = battle([att], [mon("lucario", ["closecombat"])], Rules(tera=True))
    k_plain = lookahead.move_key(s, 0, Action(MOVE, 0, 0))
    k_tera = lookahead.move_key(s, 0, Action(TERA, 0, 0))
    assert k_plain[0] == k_tera[0] and k_tera[1] < k_plain[1]
    assert best_move_for(s, 0) == Action(TERA, 0, 0)


@pytest.mark.parametrize("scale", [0.5, 2.0, 3.7, 10.0])
def test_choice_invariant_under_damage_rescaling(monkeypatch, scale):
    rng = random.Random(int(scale * 10))
    cases = []
    for _ in range(30):
        sa, sb = rng.sample(sorted(DEX.species), 2)
        s = battle([DEX.make(sa)], [DEX.make(sb)], Rules(tera=True))
        cases.append((s, best_move_for(s, 0)))
    orig = lookahead.expected_damage
    monkeypatch.setattr(lookahead, "expected_damage", lambda *a, **k: orig(*a, **k) * scale)
    for s, want in cases:
        teams = tuple(tuple(m._replace(hp=m.hp * scale) for m in t) for t in s.teams)
        assert best_move_for(s._replace(teams=teams), 0) == want


def test_no_move_available_when_forced_to_switch():
    s = _render_state()
    with pytest.raises(NoMoveAvailable):
        best_move_for(s, 0)


def test_report_needs_matching_estimate():
    s = _render_state(must_switch=False)
    obs = observe(s, 0, [lead_events(s)])
    with pytest.raises(ContractViolation):
        matchup_report(obs, None)
    other = battle([mon("snorlax", ["tackle"])], [mon("blissey", ["tackle"])])
    with pytest.raises(ContractViolation):
        matchup_report(obs, other)


def test_paralysis_scales_expected_damage():
    a, b = battle([mon("snorlax", ["bodyslam"])], [mon("blissey", ["tackle"])]).teams
    m = a[0].spec.moves[0]
    base = expected_damage(a[0], b[0], m)
    assert expected_damage(a[0]._replace(status="paralysis"), b[0], m) == pytest.approx(0.75 * base)
