import itertools
import random

import pytest
from hypothesis import given, settings, strategies as st

from monsearch.core import (
    DMAX, MOVE, PASS, SWITCH, TERA, TYPES, Action, ContractViolation, DataError, PokemonSpec, Rules, StatBlock,
    compute_stats, lead_events, legal_actions, load_typechart, observe, type_effectiveness,
)
from monsearch.engine import step

from util import DEX, battle, custom, mon, random_game


def flat_spec(base, level=100, evs=(0,) * 6, ivs=(31,) * 6, nature="serious"):
    return PokemonSpec("x", level, ("normal",), StatBlock.of(base), (DEX.move("tackle"),),
                       evs=evs, ivs=ivs, nature=nature)


# ---------------------------------------------------------------- stats


def test_stats_base_100_level_100():
    s = compute_stats(flat_spec([100] * 6))
    assert s.as_tuple() == (341, 236, 236, 236, 236, 236)


def test_stats_formula_floor_at_level_1():
    s = compute_stats(flat_spec([1] * 6, level=1, ivs=(0,) * 6))
    assert s.as_tuple() == (11, 5, 5, 5, 5, 5)


def test_stats_deterministic():
    a = flat_spec([80, 90, 100, 110, 120, 130])
    assert compute_stats(a) == compute_stats(flat_spec([80, 90, 100, 110, 120, 130]))


def test_nature_raises_and_lowers():
    neutral = compute_stats(flat_spec([100] * 6))
    adamant = compute_stats(flat_spec([100] * 6, nature="adamant"))
    assert adamant.attack == 236 * 11 // 10
    assert adamant.special_attack == 236 * 9 // 10
    assert adamant.hp == neutral.hp and adamant.speed == neutral.speed


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 5), st.integers(0, 251), st.integers(0, 30), st.integers(1, 100), st.integers(1, 255))
def test_stats_monotone_in_ev_and_iv(i, ev, iv, level, base):
    evs = [0] * 6
    evs[i] = ev
    ivs = [iv] * 6
    lo = compute_stats(flat_spec([base] * 6, level, evs=evs, ivs=ivs)).as_tuple()
    evs2 = list(evs)
    evs2[i] = ev + 1
    assert compute_stats(flat_spec([base] * 6, level, evs=evs2, ivs=ivs)).as_tuple()[i] >= lo[i]
    ivs2 = list(ivs)
    ivs2[i] = iv + 1
    assert compute_stats(flat_spec([base] * 6, level, evs=evs, ivs=ivs2)).as_tuple()[i] >= lo[i]


def test_ev_budget_enforced():
    with pytest.raises(DataError):
        flat_spec([100] * 6, evs=(252, 252, 8, 0, 0, 0))


# ---------------------------------------------------------------- type chart


def test_type_examples():
    chart = load_typechart()
    assert type_effectiveness(chart, "water", ["fire"]) == 2.0
    assert type_effectiveness(chart, "normal", ["ghost"]) == 0.0
    assert type_effectiveness(chart, "electric", ["water", "flying"]) == 4.0


def test_dual_type_is_product_everywhere():
    chart = load_typechart()
    assert len(chart.types) == 18
    for a, d1, d2 in itertools.product(TYPES, TYPES, TYPES):
        assert type_effectiveness(chart, a, (d1, d2)) == chart.single(a, d1) * chart.single(a, d2)


def test_unknown_type_is_data_error():
    with pytest.raises(DataError):
        type_effectiveness(load_typechart(), "sound", ["fire"])


# ---------------------------------------------------------------- legal actions


def six(moves=("tackle", "earthquake", "icebeam", "thunderbolt")):
    names = ["snorlax", "garchomp", "blissey", "heatran", "zapdos", "toxapex"]
    return [mon(n, moves) for n in names]


def test_thirteen_actions_with_tera():
    s = battle(six(), six(), Rules(tera=True))
    acts = legal_actions(s, 0)
    assert len(acts) == 13
    assert [a.kind for a in acts].count(MOVE) == 4
    assert [a.kind for a in acts].count(SWITCH) == 5
    assert [a.kind for a in acts].count(TERA) == 4


def test_last_mon_one_move_no_mechanics():
    s = battle([mon("snorlax", ["tackle"])], [mon("blissey", ["tackle"])], Rules(tera=True, dynamax=True))
    s = s._replace(tera_ok=(False, True), dmax_ok=(False, True))
    assert legal_actions(s, 0) == [Action(MOVE, 0, 0)]


def test_dynamax_variants_listed():
    s = battle([mon("snorlax", ["tackle", "earthquake"])], [mon("blissey", ["tackle"])], Rules(dynamax=True))
    kinds = [a.kind for a in legal_actions(s, 0)]
    assert kinds == [MOVE, MOVE, DMAX, DMAX]


def test_fainted_active_switches_only():
    s = battle(six(), six())
    team = list(s.teams[0])
    team[0] = team[0]._replace(hp=0)
    s = s._replace(teams=(tuple(team), s.teams[1]), must_switch=(True, False))
    acts = legal_actions(s, 0)
    assert acts and all(a.kind == SWITCH for a in acts)
    assert legal_actions(s, 1) == [Action(PASS, 0, 1)]


def test_terminal_has_no_actions():
    s = battle(six(), six())._replace(winner=0)
    with pytest.raises(ContractViolation):
        legal_actions(s, 0)


# ---------------------------------------------------------------- observations


def test_turn_one_reveals_only_the_lead():
    s = battle(six(), six())
    obs = observe(s, 0, [lead_events(s)])
    assert obs.opp_active == 0
    lead = obs.opp[0]
    assert (lead.species, lead.level, lead.hp_frac) == ("snorlax", 100, 1.0)
    assert lead.moves == () and lead.item is None
    assert all(v is None for v in obs.opp[1:])


def test_revealed_moves_are_exactly_those_used():
    a = [mon("snorlax", ["recover", "swordsdance", "bodyslam"])]
    b = [mon("blissey", ["softboiled", "calmmind", "tackle", "icebeam"])]
    s = battle(a, b)
    log = [lead_events(s)]
    rng = random.Random(0)
    for i in (0, 1, 0):
        out = step(s, Action(MOVE, 0, 0), Action(MOVE, i, 1), rng=rng)
        s = out.state
        log.append(list(out.events))
    obs = observe(s, 0, log)
    assert sorted(obs.opp[0].moves) == ["calmmind", "softboiled"]


def test_own_section_equals_latent_team():
    states, log = random_game(11)
    s = states[len(states) // 2]
    k = len(states) // 2
    for p in (0, 1):
        obs = observe(s, p, log[: k + 1])
        assert obs.own == s.teams[p]
        assert obs.own_active == s.active[p]
        assert obs.clocks == (s.clocks[p], s.clocks[1 - p])
        assert obs.tera_ok[0] == s.tera_ok[p]


def _audit(obs, log, opp):
    """Every opponent field in ``obs`` must be justified by a public event about ``opp``."""
    events = [e for t in log for e in t if e.get("side") == opp]
    shown = {e["slot"]: e for e in events if e["type"] == "switch"}
    moves, items, abilities = {}, {}, {}
    active = None
    for e in events:
        if e["type"] == "switch":
            active = e["slot"]
        elif e["type"] == "move":
            moves.setdefault(active, set()).add(e["move"])
        elif e["type"] == "item":
            items[active] = e["item"]
        elif e["type"] == "ability":
            abilities[active] = e["ability"]
    for slot, v in enumerate(obs.opp):
        if v is None:
            assert slot not in shown
            continue
        assert slot in shown
        assert v.species == shown[slot]["species"] and v.level == shown[slot]["level"]
        assert set(v.moves) == moves.get(slot, set())
        assert v.item == items.get(slot)
        assert v.ability == abilities.get(slot)
        if v.tera:
            assert any(e["type"] == "tera" for e in events)


def test_observation_leak_audit_on_random_games():
    for seed in range(40):
        states, log = random_game(seed)
        for k in range(0, len(states), 3):
            for p in (0, 1):
                _audit(observe(states[k], p, log[: k + 1]), log[: k + 1], 1 - p)


def test_history_window():
    states, log = random_game(5)
    obs = observe(states[-1], 0, log, history=3)
    assert len(obs.history) == min(3, len(log))
    assert observe(states[-1], 0, log, history=0).history == ()


def test_legal_nonempty_on_random_games():
    for seed in range(30):
        states, _ = random_game(seed, Rules(dynamax=True))
        for s in states:
            if s.winner is None:
                assert legal_actions(s, 0) and legal_actions(s, 1)


def test_custom_spec_validation():
    with pytest.raises(DataError):
        custom("x", ["normal", "normal"], [50] * 6, ["tackle"])
    with pytest.raises(DataError):
        custom("x", ["normal"], [50] * 6, [])
