import random

import pytest

from monsearch.core import MOVE, PASS, SWITCH, Action, Rules, lead_events, legal_actions, observe
from monsearch.lookahead import one_step_best_move
from monsearch.llm import ScriptedChatClient
from monsearch.priors import (
    FallbackCounter, HeuristicOpponentModel, HeuristicSampler, HeuristicValue, LLMSampler, ValueWeights,
    estimate_opponent_stats, heuristic_providers, heuristic_sample, heuristic_value, llm_opponent, llm_providers,
    llm_sample, llm_value, opponent_legal, state_value, switch_counts, team_strategy,
)
from monsearch.usage import EV_ARCHETYPES, FALLBACK_SPREAD, SpeciesUsage, UsageCounter, UsageStats

from util import DEX, battle, mon, random_game, random_position


def _lead_obs(opp="garchomp", own=("snorlax", "blissey", "heatran", "zapdos")):
    a = [mon(n, ["tackle", "earthquake"]) for n in own]
    b = [mon(opp, ["earthquake", "dragonclaw"]), mon("toxapex", ["scald"])]
    s = battle(a, b, Rules(tera=True))
    return s, observe(s, 0, [lead_events(s)])


def _positions(n, seed=0):
    out = []
    for i in range(n):
        s, _, _, log = random_position(seed + i)
        out.append((s, observe(s, i % 2, log)))
    return out


# ---------------------------------------------------------------- sampling


def test_budget_one_is_one_step_choice():
    for s, obs in _positions(60):
        est = HeuristicOpponentModel().estimate_state(obs)
        got = HeuristicSampler().sample(obs, None, 1)
        if obs.legal() == [Action(PASS, 0, obs.viewer)]:
            assert got == obs.legal()
        elif obs.must_switch[0]:
            assert len(got) == 1 and got[0].kind == SWITCH
        else:
            assert got == [one_step_best_move(obs, est)]


def test_budget_saturates_to_all_legal():
    for s, obs in _positions(40, 100):
        legal = obs.legal()
        got = heuristic_sample(obs, None, len(legal) + 3)
        assert sorted(got) == sorted(legal)
        assert len(set(got)) == len(got)


def test_forced_switch_samples_switches_only():
    s, _ = _lead_obs()
    team = (s.teams[0][0]._replace(hp=0),) + s.teams[0][1:]
    s = s._replace(teams=(team, s.teams[1]), must_switch=(True, False))
    obs = observe(s, 0, [lead_events(s)])
    got = heuristic_sample(obs, None, 5)
    assert got and all(a.kind == SWITCH for a in got)


def test_sampler_is_deterministic_prefix():
    for s, obs in _positions(20, 200):
        long = heuristic_sample(obs, None, 6)
        for m in range(1, 6):
            assert heuristic_sample(obs, None, m) == long[:m]


# ---------------------------------------------------------------- stat estimation


def _usage(**tables):
    return UsageStats({"garchomp": SpeciesUsage(count=10, **tables)})


def test_point_mass_spread():
    _, obs = _lead_obs()
    spec = estimate_opponent_stats(obs, _usage(spreads={"physical_wall": 1.0}))[0]
    assert spec.evs == EV_ARCHETYPES["physical_wall"]


def test_absent_species_uniform_fallback():
    _, obs = _lead_obs()
    spec = estimate_opponent_stats(obs, UsageStats({"snorlax": SpeciesUsage(count=3)}))[0]
    assert spec.evs == EV_ARCHETYPES[FALLBACK_SPREAD]
    assert spec.item == "none"
    assert estimate_opponent_stats(obs, None)[0].evs == EV_ARCHETYPES[FALLBACK_SPREAD]


def test_sixty_forty_takes_the_sixty():
    _, obs = _lead_obs()
    u = _usage(spreads={"special_sweeper": 0.4, "physical_sweeper": 0.6},
               items={"leftovers": 0.4, "choiceband": 0.6}, natures={"jolly": 0.6, "adamant": 0.4})
    spec = estimate_opponent_stats(obs, u)[0]
    assert spec.evs == EV_ARCHETYPES["physical_sweeper"]
    assert (spec.item, spec.nature) == ("choiceband", "jolly")


def test_ties_break_lexicographically():
    _, obs = _lead_obs()
    spec = estimate_opponent_stats(obs, _usage(spreads={"special_wall": 0.5, "mixed": 0.5}))[0]
    assert spec.evs == EV_ARCHETYPES["mixed"]


def test_unrevealed_slots_are_none():
    _, obs = _lead_obs()
    out = estimate_opponent_stats(obs, None)
    assert out[0] is not None and out[1] is None


def test_revealed_moves_kept_first():
    s, _ = _lead_obs()
    from monsearch.engine import step
    out = step(s, Action(MOVE, 0, 0), Action(MOVE, 1, 1), rng=random.Random(1))
    obs = observe(out.state, 0, [lead_events(s), list(out.events)])
    u = _usage(moves={"swordsdance": 0.9, "earthquake": 0.8, "stoneedge": 0.5})
    names = [m.name for m in estimate_opponent_stats(obs, u)[0].moves]
    assert names[0] == "dragonclaw"
    assert names[1:] == ["swordsdance", "earthquake", "stoneedge"]


def test_estimated_ev_sums_bounded():
    rng = random.Random(3)
    names = sorted(DEX.species)
    for _ in range(50):
        uc = UsageCounter()
        for _ in range(30):
            evs = [0] * 6
            budget = 510
            for i in rng.sample(range(6), 6):
                v = rng.randint(0, min(252, budget))
                evs[i] = v
                budget -= v
            uc.add(rng.choice(names), evs=evs, nature=rng.choice(["jolly", "modest", "bold"]))
        usage = uc.finish()
        states, log = random_game(rng.randrange(10**6))
        k = len(states) // 2
        obs = observe(states[k], 0, log[: k + 1])
        for spec in estimate_opponent_stats(obs, usage):
            if spec is not None:
                assert sum(spec.evs) <= 510
        est = HeuristicOpponentModel(usage).estimate_state(obs)
        assert all(sum(m.spec.evs) <= 510 for m in est.teams[1])


def test_estimate_matches_observation():
    for s, obs in _positions(30, 300):
        est = HeuristicOpponentModel().estimate_state(obs)
        p = obs.viewer
        assert est.teams[p] == obs.own
        for v, m in zip(obs.opp, est.teams[1 - p]):
            if v is not None:
                assert m.species == v.species and (m.hp > 0) == (v.hp_frac > 0)
        assert len(opponent_legal(obs, est)) >= 1


# ---------------------------------------------------------------- valuation


def test_terminal_overrides():
    s, obs = _lead_obs()
    for w, want in ((0, 1.0), (1, 0.0), (-1, 0.5)):
        assert state_value(s._replace(winner=w), 0) == want
        assert heuristic_value(obs._replace(winner=w)) == want


def test_mirror_is_half():
    team = [mon("garchomp", ["earthquake"]), mon("toxapex", ["scald"])]
    s = battle(team, team)
    assert state_value(s, 0) == pytest.approx(0.5)
    assert state_value(s, 1) == pytest.approx(0.5)


def test_antisymmetry_over_random_states():
    for seed in range(30):
        states, log = random_game(seed)
        for s in states[::5]:
            if s.winner is None:
                assert state_value(s, 0, switches=(2, 1)) + state_value(s, 1, switches=(1, 2)) == pytest.approx(1.0)


def test_extra_survivor_scores_higher():
    team = [mon("garchomp", ["earthquake"]), mon("toxapex", ["scald"]), mon("blissey", ["tackle"])]
    s = battle(team, team)
    down = s._replace(teams=(s.teams[0], s.teams[1][:2] + (s.teams[1][2]._replace(hp=0),)))
    assert state_value(down, 0) > state_value(s, 0)
    assert state_value(down, 1) < state_value(s, 1)


def test_value_bounded():
    for s, obs in _positions(40, 400):
        v = HeuristicValue().evaluate(obs)
        assert 0.0 <= v <= 1.0


def test_switch_counts_ignore_replacements():
    hist = [[{"type": "switch", "side": 0}, {"type": "switch", "side": 1}],
            [{"type": "faint", "side": 1}, {"type": "switch", "side": 1}],
            [{"type": "switch", "side": 0}]]
    assert switch_counts(hist, 0) == (2, 1)
    assert switch_counts(hist, 1) == (1, 2)


def test_weights_change_value():
    s, _ = _lead_obs()
    s = s._replace(teams=(s.teams[0][:2], s.teams[1]))
    a = state_value(s, 0, ValueWeights(hp=1, alive=0, ttk=0, speed=0, switch=0))
    b = state_value(s, 0, ValueWeights(hp=0, alive=0, ttk=1, speed=0, switch=0))
    assert a == pytest.approx(0.5) and b != pytest.approx(0.5)


def test_team_strategy_mentions_both_sides():
    _, obs = _lead_obs()
    text = team_strategy(obs)
    assert "snorlax" in text and "garchomp" in text


# ---------------------------------------------------------------- LLM-backed roles


def test_llm_switch_to_slot_three():
    _, obs = _lead_obs()
    prov = llm_providers(ScriptedChatClient([{"pattern": "Available actions", "reply": "switch to slot 3"}]))
    assert llm_sample(prov, obs, 3)[0] == Action(SWITCH, 2, 0)
    assert prov.fallbacks.total() == 0


def test_llm_illegal_reply_falls_back():
    _, obs = _lead_obs()
    prov = llm_providers(ScriptedChatClient([{"pattern": ".", "reply": "move hyperbeam"}]))
    want = heuristic_sample(obs, None, 3)
    assert llm_sample(prov, obs, 3) == want
    assert prov.fallbacks["player"] == 1
    llm_opponent(prov, obs, 2)
    assert prov.fallbacks["opponent"] == 1


def test_llm_transport_failure_falls_back():
    _, obs = _lead_obs()
    prov = llm_providers(ScriptedChatClient([{"pattern": ".", "status": 503}]))
    assert llm_value(prov, obs) == HeuristicValue().evaluate(obs)
    assert prov.fallbacks["value"] == 1


def test_llm_score():
    _, obs = _lead_obs()
    prov = llm_providers(ScriptedChatClient([{"pattern": "score from 0 to 10", "reply": "7/10"}]))
    assert llm_value(prov, obs) == pytest.approx(0.7)


def test_raising_client_counts_as_fallback():
    class Broken:
        def complete(self, req):
            raise RuntimeError("boom")
    _, obs = _lead_obs()
    counter = FallbackCounter()
    s = LLMSampler(Broken(), HeuristicSampler(), counter)
    assert s.sample(obs, None, 2) == heuristic_sample(obs, None, 2)
    assert counter["player"] == 1


def _babbler(seed):
    words = ["move tackle", "switch to slot 2", "switch to slot 6", "terastallize earthquake", "pass", "7/10",
             "nonsense", "move earthquake", "switch blissey", "dynamax tackle", "42%"]
    rng = random.Random(seed)

    class Client:
        def complete(self, req):
            from monsearch.llm import ChatReply
            return ChatReply(text=rng.choice(words))
    return Client()


def test_provider_outputs_always_legal():
    families = [heuristic_providers(), llm_providers(_babbler(0))]
    for seed in range(25):
        states, log = random_game(500 + seed, size=4)
        for k in range(0, len(states), 4):
            s = states[k]
            if s.winner is not None:
                continue
            for p in (0, 1):
                obs = observe(s, p, log[: k + 1])
                for prov in families:
                    est = prov.opponent.estimate_state(obs)
                    acts = prov.sampler.sample(obs, prov.ctx, 3, state=est)
                    assert acts and len(set(acts)) == len(acts)
                    assert set(acts) <= set(legal_actions(s, p))
                    opp = prov.opponent.sample_actions(obs, 3, state=est)
                    assert opp and set(opp) <= set(legal_actions(est, 1 - p))
                    assert 0.0 <= prov.value.evaluate(obs, est) <= 1.0


def test_pass_only_when_waiting():
    s, _ = _lead_obs()
    team = (s.teams[1][0]._replace(hp=0),) + s.teams[1][1:]
    s = s._replace(teams=(s.teams[0], team), must_switch=(False, True))
    obs = observe(s, 0, [lead_events(s)])
    assert heuristic_sample(obs, None, 3) == [Action(PASS, 0, 0)]
