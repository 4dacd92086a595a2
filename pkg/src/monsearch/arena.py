"""Scenarios, clocked matches, round-robin Elo arenas and 1v1 puzzle suites."""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .core import (
    BattleState, MonsearchError, PokemonSpec, Rules, advance, lead_events,
    legal_actions, new_battle, observe,
)
from .dex import load_dex, load_team
from .engine import apply_clock, step
from .replay import ReplayWriter, action_record

log = logging.getLogger(__name__)

MAX_TURNS = 200


# ---------------------------------------------------------------- scenarios


@dataclass(frozen=True)
class Scenario:
    """A battle format: mechanics plus either fixed team files or random-team generation."""

    name: str
    rules: Rules = Rules()
    teams: Optional[tuple[str, str]] = None  # team file names/paths; None means random teams
    team_size: int = 6

    def make_teams(self, seed: int) -> tuple[list[PokemonSpec], list[PokemonSpec]]:
        if self.teams is not None:
            return load_team(self.teams[0]), load_team(self.teams[1])
        rng = random.Random(f"teams:{seed}")
        dex = load_dex()
        t0 = dex.random_team(rng, self.team_size)
        t1 = dex.random_team(rng, self.team_size)
        if self.rules.level is not None:
            t0 = [dataclasses.replace(s, level=self.rules.level) for s in t0]
            t1 = [dataclasses.replace(s, level=self.rules.level) for s in t1]
        return t0, t1


SCENARIOS = {
    "gen9ou": Scenario("gen9ou", Rules(tera=True), ("ou_a", "ou_b")),
    "gen9ou-mirror": Scenario("gen9ou-mirror", Rules(tera=True), ("mirror", "mirror")),
    "gen9ou-stall": Scenario("gen9ou-stall", Rules(tera=True), ("ou_a", "stall")),
    "gen8random": Scenario("gen8random", Rules(dynamax=True, level=None)),
    "gen8random-nodmax": Scenario("gen8random-nodmax", Rules(level=None)),
    "1v1": Scenario("1v1", Rules(), None, team_size=1),
}


def get_scenario(name: str) -> Scenario:
    try:
        return SCENARIOS[name]
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}") from None


# ---------------------------------------------------------------- clocks


class WallClock:
    def now(self) -> float:
        return time.perf_counter()

    def sleep(self, seconds: float):
        time.sleep(seconds)


class VirtualClock:
    """Deterministic clock: time only moves when someone sleeps or advances it."""

    def __init__(self, start: float = 0.0):
        self.t = start

    def now(self) -> float:
        return self.t

    def sleep(self, seconds: float):
        self.t += seconds

    advance = sleep


# ---------------------------------------------------------------- matches


@dataclass
class MatchResult:
    winner: Optional[int]  # 0, 1 or -1 for a draw
    turns: int
    reason: str  # "faint" | "timeout" | "forfeit" | "turn_limit"
    timeout: bool = False
    forfeit: Optional[int] = None  # the side that forfeited
    error: Optional[str] = None
    replay: str = ""
    final_state: Optional[BattleState] = None
    observations: list = field(default_factory=list)  # (turn, player, Observation) when recorded

    def score(self, side: int) -> float:
        if self.winner == -1:
            return 0.5
        return 1.0 if self.winner == side else 0.0


def run_match(agent_a, agent_b, scenario: Scenario, seed: int, clock=None, max_turns: int = MAX_TURNS,
              history: int = 8, teams=None, record_observations: bool = False) -> MatchResult:
    """Play one battle. Player 0 is ``agent_a``.

    Engine randomness comes from ``random.Random(seed)`` only; agents are reset
    with their own derived seeds. Each decision's thinking time is measured on
    ``clock`` and charged to that player's bank; an agent that raises or returns
    an illegal action forfeits.
    """
    clock = clock or WallClock()
    t0, t1 = teams if teams is not None else scenario.make_teams(seed)
    state = new_battle(t0, t1, scenario.rules)
    agents = (agent_a, agent_b)
    for p, ag in enumerate(agents):
        ag.reset(seed * 2 + p + 1, p)
    rng = random.Random(seed)
    start = lead_events(state)
    writer = ReplayWriter(scenario.name, [getattr(a, "name", "agent") for a in agents], (t0, t1), scenario.rules,
                          seed, start, scenario.name)
    obs = [observe(state, p, [start], history) for p in (0, 1)]
    observations = []
    steps = 0
    winner = reason = error = None
    forfeit = None
    while state.winner is None and steps < max_turns:
        acts = []
        spent = []
        for p in (0, 1):
            legal = legal_actions(state, p)
            if record_observations:
                observations.append((steps, p, obs[p]))
            t = clock.now()
            try:
                a = agents[p].act(obs[p])
            except Exception as exc:  # an agent fault loses the game, it never crashes the harness
                log.warning("agent %s raised %r", getattr(agents[p], "name", p), exc)
                forfeit, error = p, f"{type(exc).__name__}: {exc}"
                break
            spent.append(clock.now() - t)
            if a not in legal:
                forfeit, error = p, f"illegal action {a!r}"
                break
            acts.append(a)
        if forfeit is not None:
            winner, reason = 1 - forfeit, "forfeit"
            break
        clocked = apply_clock(state, spent)
        if clocked.winner is not None:
            state = clocked
            break
        out = step(clocked, acts[0], acts[1], rng=rng)
        writer.turn(clocked.turn, {p: action_record(acts[p], state.teams[p], state.active[p]) for p in (0, 1)},
                    out.events)
        state = out.state
        obs = [advance(obs[p], state, out.events, history) for p in (0, 1)]
        steps += 1
    if winner is None:
        if state.winner is not None:
            winner, reason = state.winner, state.reason or "faint"
        else:
            winner, reason = -1, "turn_limit"
    state = state._replace(winner=winner, reason=reason)
    writer.outcome(winner, reason, steps, {"forfeit": forfeit} if forfeit is not None else None)
    return MatchResult(winner, steps, reason, reason == "timeout", forfeit, error, writer.text(), state, observations)


# ---------------------------------------------------------------- Elo


ELO_K = 32.0
ELO_START = 1000.0


def elo_expected(ra: float, rb: float) -> float:
    return 1.0 / (1.0 + 10.0 ** ((rb - ra) / 400.0))


def elo_from_winrate(w: float) -> float:
    """Rating offset implied by win rate ``w``; infinite (signed) at 0 and 1."""
    if not 0.0 <= w <= 1.0:
        raise ValueError("win rate must lie in [0, 1]")
    if w == 0.0:
        return -math.inf
    if w == 1.0:
        return math.inf
    return 400.0 * math.log10(w / (1.0 - w)) + 0.0  # + 0.0 turns -0.0 into 0.0


@dataclass
class EloTable:
    k: float = ELO_K
    start: float = ELO_START
    ratings: dict = field(default_factory=dict)
    games: dict = field(default_factory=dict)
    wins: dict = field(default_factory=dict)
    losses: dict = field(default_factory=dict)
    draws: dict = field(default_factory=dict)

    def add(self, name: str):
        for d, v in ((self.ratings, self.start), (self.games, 0), (self.wins, 0), (self.losses, 0), (self.draws, 0)):
            d.setdefault(name, v)

    def update(self, a: str, b: str, score_a: float):
        """Record one game; ``score_a`` is 1, 0.5 or 0 from ``a``'s side."""
        self.add(a)
        self.add(b)
        ea = elo_expected(self.ratings[a], self.ratings[b])
        delta = self.k * (score_a - ea)
        self.ratings[a] = max(0.0, self.ratings[a] + delta)
        self.ratings[b] = max(0.0, self.ratings[b] - delta)
        self.games[a] += 1
        self.games[b] += 1
        if score_a == 1.0:
            self.wins[a] += 1
            self.losses[b] += 1
        elif score_a == 0.0:
            self.wins[b] += 1
            self.losses[a] += 1
        else:
            self.draws[a] += 1
            self.draws[b] += 1


# ---------------------------------------------------------------- arenas

AgentFactory = Callable[[], object]


@dataclass
class ArenaReport:
    agents: list
    elo: EloTable
    wins: list  # wins[i][j]: fraction of i-vs-j games won by i
    draws: list
    avg_turns: dict
    reference: str
    games_per_pair: int

    def score(self, i: int, j: int) -> float:
        return self.wins[i][j] + 0.5 * self.draws[i][j]

    def winrate_vs_ref(self, name: str) -> float:
        i, r = self.agents.index(name), self.agents.index(self.reference)
        return 0.5 if i == r else self.score(i, r)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["agent", "winrate_vs_ref", "elo", "avg_turns"])
        for name in self.agents:
            w.writerow([name, f"{self.winrate_vs_ref(name):.4f}", f"{self.elo.ratings[name]:.1f}",
                        f"{self.avg_turns[name]:.2f}"])
        return buf.getvalue()

    def matrix_json(self) -> str:
        n = len(self.agents)
        return json.dumps({
            "agents": self.agents, "reference": self.reference, "games_per_pair": self.games_per_pair,
            "wins": self.wins, "draws": self.draws,
            "score": [[self.score(i, j) if i != j else None for j in range(n)] for i in range(n)],
        }, indent=1, sort_keys=True)


def pair_seed(seed: int, i: int, j: int, g: int) -> int:
    return random.Random(f"{seed}:{i}:{j}:{g}").randrange(2 ** 31)


def run_arena(agents: Sequence[tuple[str, AgentFactory]], scenario: Scenario, games_per_pair: int, seed: int,
              reference: Optional[str] = None, workers: int = 1, clock_factory=None,
              on_result: Optional[Callable] = None) -> ArenaReport:
    """Round robin; sides alternate by game index and Elo is updated in a fixed order.

    Updates interleave pairs game by game (all pairs' game 0, then game 1, ...)
    so no pair's games are all applied at once; the order never depends on
    which worker finished first.
    """
    if len(agents) < 2:
        raise ValueError("an arena needs at least two agents")
    names = [n for n, _ in agents]
    if len(set(names)) != len(names):
        raise ValueError("agent names must be unique")
    reference = reference or names[0]
    if reference not in names:
        raise ValueError(f"reference agent {reference!r} is not in the arena")
    pairs = [(i, j) for i in range(len(agents)) for j in range(i + 1, len(agents))]
    jobs = [(g, i, j) for g in range(games_per_pair) for (i, j) in pairs]

    def play(job):
        g, i, j = job
        a, b = agents[i][1](), agents[j][1]()
        first, second = (a, b) if g % 2 == 0 else (b, a)
        clock = clock_factory() if clock_factory else None
        res = run_match(first, second, scenario, pair_seed(seed, i, j, g), clock=clock)
        score_i = res.score(0) if g % 2 == 0 else res.score(1)
        return job, score_i, res

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(play, jobs))
    else:
        results = [play(j) for j in jobs]
    n = len(agents)
    elo = EloTable()
    for name in names:
        elo.add(name)
    wins = [[0.0] * n for _ in range(n)]
    draws = [[0.0] * n for _ in range(n)]
    turns = {name: [] for name in names}
    for (g, i, j), score_i, res in results:  # already in (game, pair) order
        elo.update(names[i], names[j], score_i)
        if score_i == 1.0:
            wins[i][j] += 1
        elif score_i == 0.0:
            wins[j][i] += 1
        else:
            draws[i][j] += 1
            draws[j][i] += 1
        turns[names[i]].append(res.turns)
        turns[names[j]].append(res.turns)
        if on_result is not None:
            on_result((g, names[i], names[j]), res)
    for i in range(n):
        for j in range(n):
            if i != j:
                wins[i][j] /= games_per_pair
                draws[i][j] /= games_per_pair
    avg = {k: (sum(v) / len(v) if v else 0.0) for k, v in turns.items()}
    return ArenaReport(names, elo, wins, draws, avg, reference, games_per_pair)


# ---------------------------------------------------------------- puzzles


class PuzzleGenerationError(MonsearchError):
    pass


@dataclass
class PuzzleSpec:
    scenario_id: str
    teams: tuple  # (side A team, side B team) as spec lists
    rules: Rules
    certificate: dict  # {"seed", "replay"}: an Abyssal-vs-Abyssal game won by side A

    def verify(self) -> bool:
        """Re-simulate the certificate; True when side A wins."""
        from .replay import final_state, loads_native

        rec = loads_native(self.certificate["replay"])
        return final_state(rec).winner == 0


def _draw_spec(dex, pool_entry, rng, level):
    if isinstance(pool_entry, PokemonSpec):
        return pool_entry
    e = dex.entry(pool_entry)
    k = rng.randrange(max(1, len(e.sets)))
    return dex.make(pool_entry, level=level if level is not None else e.random_level, set_index=k)


def generate_1v1_puzzles(pool: Sequence, count: int, seed: int, rules: Rules = Rules(),
                         opp_pool: Optional[Sequence] = None, max_attempts: Optional[int] = None,
                         scenario_id: str = "1v1") -> list[PuzzleSpec]:
    """Rejection-sample 1v1 matchups that the Abyssal stand-in wins as side A.

    ``pool`` holds species names or ready specs; side B draws from ``opp_pool``
    when given. Raises ``PuzzleGenerationError`` if fewer than ``count`` are
    found within ``max_attempts`` draws.
    """
    from .agents import AbyssalAgent

    if not pool or (opp_pool is not None and not opp_pool):
        raise ValueError("species pool must be non-empty")
    dex = load_dex()
    rng = random.Random(seed)
    max_attempts = max_attempts or max(100, 20 * count)
    scen = Scenario(scenario_id, rules, None, 1)
    out = []
    attempts = 0
    while len(out) < count:
        if attempts >= max_attempts:
            raise PuzzleGenerationError(f"only {len(out)} of {count} feasible puzzles after {attempts} draws")
        attempts += 1
        a = _draw_spec(dex, rng.choice(list(pool)), rng, rules.level)
        b_pool = [x for x in (opp_pool or pool) if (x.species if isinstance(x, PokemonSpec) else x) != a.species]
        if not b_pool:
            continue
        b = _draw_spec(dex, rng.choice(b_pool), rng, rules.level)
        s = rng.randrange(2 ** 31)
        res = run_match(AbyssalAgent(), AbyssalAgent(), scen, s, clock=VirtualClock(), teams=([a], [b]))
        if res.winner == 0:
            out.append(PuzzleSpec(scenario_id, ([a], [b]), rules, {"seed": s, "replay": res.replay}))
    return out


@dataclass
class PuzzleScore:
    wins: int
    draws: int
    games: int

    @property
    def rate(self) -> float:
        return (self.wins + 0.5 * self.draws) / self.games if self.games else float("nan")


def evaluate_puzzles(puzzles: Sequence[PuzzleSpec], agent_factory: AgentFactory, opponent_factory: AgentFactory,
                     seed: int, clock_factory=None) -> PuzzleScore:
    """Side-A win rate of ``agent_factory`` over the puzzles, on fresh seeds."""
    wins = draws = 0
    for i, pz in enumerate(puzzles):
        s = random.Random(f"eval:{seed}:{i}").randrange(2 ** 31)
        scen = Scenario(pz.scenario_id, pz.rules, None, 1)
        clock = clock_factory() if clock_factory else VirtualClock()
        res = run_match(agent_factory(), opponent_factory(), scen, s, clock=clock, teams=pz.teams)
        wins += res.winner == 0
        draws += res.winner == -1
    return PuzzleScore(wins, draws, len(puzzles))


def binomial_ci(successes: float, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """Wilson score interval."""
    if n == 0:
        return 0.0, 1.0
    p = successes / n
    if p in (0.0, 1.0):
        # the bound on the observed side is exact; avoid rounding just short of it
        other = z * z / (n + z * z)
        return (0.0, other) if p == 0.0 else (1.0 - other, 1.0)
    den = 1 + z * z / n
    mid = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return max(0.0, mid - half), min(1.0, mid + half)


def two_proportion_ok(p1: float, p2: float, n1: int, n2: int, z: float = 1.959963984540054) -> bool:
    """True unless ``p1`` is significantly below ``p2`` (one-sided reading of the 95% interval)."""
    se = math.sqrt(max(p1 * (1 - p1) / n1 + p2 * (1 - p2) / n2, 1e-12))
    return p1 - p2 + z * se >= 0


__all__ = [
    "Scenario", "SCENARIOS", "get_scenario", "WallClock", "VirtualClock", "MatchResult", "run_match",
    "EloTable", "elo_expected", "elo_from_winrate", "ArenaReport", "run_arena", "PuzzleSpec",
    "PuzzleGenerationError", "generate_1v1_puzzles", "evaluate_puzzles", "PuzzleScore", "binomial_ci",
    "two_proportion_ok", "MAX_TURNS",
]
