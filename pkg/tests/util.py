"""Shared builders for the test suite."""
import random
from dataclasses import replace

from monsearch.core import (
    PokemonSpec, Rules, StatBlock, lead_events, legal_actions, new_battle, observe,
)
from monsearch.dex import load_dex
from monsearch.engine import step

DEX = load_dex()
ZERO_EVS = (0, 0, 0, 0, 0, 0)


def mon(species, moves, level=100, **kw):
    """Spec with plain defaults (no item, neutral nature, zero EVs) unless overridden."""
    kw.setdefault("item", "none")
    kw.setdefault("nature", "serious")
    kw.setdefault("evs", ZERO_EVS)
    kw.setdefault("ability", "none")
    return DEX.make(species, list(moves), level=level, **kw)


def custom(name, types, base, moves, level=100, **kw):
    """Spec with arbitrary types and base stats; ``moves`` are dex move names."""
    return PokemonSpec(name, level, tuple(types), StatBlock.of(base), tuple(DEX.move(m) for m in moves), **kw)


def battle(team0, team1, rules=Rules()):
    return new_battle(team0, team1, rules)


def random_teams(rng, size=6, level=100):
    return tuple([replace(s, level=level) for s in DEX.random_team(rng, size)] for _ in range(2))


def random_game(seed, rules=Rules(tera=True), size=6, max_turns=300, on_step=None):
    """Random-vs-random game; returns (states, log) where log[0] is the lead events.

    ``on_step(before, a, b, outcome)`` is called after every transition.
    """
    rng = random.Random(seed)
    t0, t1 = random_teams(rng, size)
    state = new_battle(t0, t1, rules)
    log = [lead_events(state)]
    states = [state]
    while state.winner is None and state.turn < max_turns:
        a = rng.choice(legal_actions(state, 0))
        b = rng.choice(legal_actions(state, 1))
        out = step(state, a, b, rng=rng)
        if on_step is not None:
            on_step(state, a, b, out)
        state = out.state
        log.append(list(out.events))
        states.append(state)
    return states, log


def random_position(seed, rules=Rules(tera=True), size=6):
    """A non-terminal state reached by random play, with a random legal action pair."""
    rng = random.Random(seed)
    states, log = random_game(seed, rules, size)
    live = [i for i, s in enumerate(states) if s.winner is None]
    i = rng.choice(live)
    s = states[i]
    return s, rng.choice(legal_actions(s, 0)), rng.choice(legal_actions(s, 1)), log[: i + 1]


def obs_at(state, player, log, history=8):
    return observe(state, player, log, history)
