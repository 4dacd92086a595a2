"""Depth-limited maximin search with expectation over chance outcomes.

The search runs over any world model that exposes the small interface of
``WorldModel``; ``BattleWorld`` adapts a battle observation plus providers.
Each ply serializes the simultaneous turn as max (our action), then min
(opponent action), then a chance node over engine outcomes.
"""
from __future__ import annotations

import gc
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Protocol, Sequence

from .core import Action, BattleState, ContractViolation, Observation, advance, legal_actions, load_typechart
from .engine import CLOCK_INCREMENT, step
from .lookahead import NoMoveAvailable, move_key, one_step_best_move
from .priors import Providers, rank_actions

MAX, MIN, CHANCE, LEAF = "max", "min", "chance", "leaf"
# Budget kept back for unwinding after the cutoff: a provider call that starts just before the
# deadline still runs to completion (a few milliseconds), so short budgets need a fixed floor.
UNWIND_RESERVE = 0.05
UNWIND_FLOOR = 0.01


def _expansion_deadline(t0: float, budget: float) -> float:
    reserve = min(0.25 * budget, max(UNWIND_RESERVE * budget, UNWIND_FLOOR))
    return t0 + budget - reserve


@dataclass
class SearchConfig:
    depth: int = 2
    m_player: int = 3
    m_opponent: int = 3
    budget: float = 10.0  # seconds per decision, before clock-aware capping
    mode: str = "full"  # "full" | "fast"
    max_nodes: Optional[int] = None
    workers: int = 1
    budget_fraction: float = 0.6
    fast_clock_threshold: float = 30.0

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.m_player < 1 or self.m_opponent < 1:
            raise ValueError("branching must be >= 1")
        if self.budget <= 0:
            raise ValueError("budget must be > 0")
        if self.mode not in ("full", "fast"):
            raise ValueError(f"unknown search mode {self.mode!r}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass
class SearchNode:
    kind: str
    state: Any = None
    children: list = field(default_factory=list)  # (edge label, SearchNode); chance labels are probabilities
    value: Optional[float] = None
    frontier: bool = False  # scored by the value function because the budget ran out


def backup(node: SearchNode) -> float:
    """Set and return the node's value from its children."""
    if node.kind == LEAF:
        if node.value is None:
            raise ContractViolation("leaf has no value")
        return node.value
    if not node.children:
        raise ContractViolation(f"{node.kind} node has no children")
    vals = []
    for _, child in node.children:
        if child.value is None:
            raise ContractViolation("backup over an unevaluated child")
        vals.append(child.value)
    if node.kind == MAX:
        node.value = max(vals)
    elif node.kind == MIN:
        node.value = min(vals)
    elif node.kind == CHANCE:
        probs = [p for p, _ in node.children]
        if abs(sum(probs) - 1.0) > 1e-9:
            raise ContractViolation(f"chance probabilities sum to {sum(probs)!r}")
        node.value = sum(p * v for p, v in zip(probs, vals))
    else:
        raise ContractViolation(f"unknown node kind {node.kind!r}")
    return node.value


class WorldModel(Protocol):
    def root(self) -> Any: ...
    def is_terminal(self, s) -> bool: ...
    def reward(self, s) -> float: ...
    def forced_action(self, s) -> Optional[Any]: ...
    def player_actions(self, s, m: int) -> Sequence: ...
    def opponent_actions(self, s, m: int) -> Sequence: ...
    def transitions(self, s, a, b) -> Sequence[tuple[float, Any]]: ...
    def evaluate(self, s) -> float: ...


@dataclass
class SearchResult:
    action: Any
    value: Optional[float]
    diagnostics: dict
    tree: Optional[SearchNode] = None


class _Run:
    def __init__(self, world, cfg: SearchConfig, deadline: float, max_nodes: Optional[int]):
        self.world = world
        self.cfg = cfg
        self.deadline = deadline
        self.max_nodes = max_nodes
        self.nodes = 0
        self.leaves = 0
        self.frontiers = 0
        self._frontier_cache: dict = {}
        self._lock = threading.Lock()

    def exhausted(self) -> bool:
        if self.max_nodes is not None and self.nodes >= self.max_nodes:
            return True
        return time.perf_counter() >= self.deadline

    def _count(self):
        with self._lock:
            self.nodes += 1

    def frontier(self, s) -> SearchNode:
        key = id(s)
        with self._lock:
            hit = self._frontier_cache.get(key)
        if hit is None:
            v = self.world.reward(s) if self.world.is_terminal(s) else self.world.evaluate(s)
            with self._lock:
                self._frontier_cache[key] = (s, v)
                self.frontiers += 1
        else:
            v = hit[1]
        return SearchNode(LEAF, s, value=v, frontier=True)

    def leaf(self, s) -> SearchNode:
        self._count()
        v = self.world.reward(s) if self.world.is_terminal(s) else self.world.evaluate(s)
        with self._lock:
            self.leaves += 1
        return SearchNode(LEAF, s, value=v)

    def expand_max(self, s, depth: int) -> SearchNode:
        if self.world.is_terminal(s) or depth >= self.cfg.depth:
            return self.leaf(s)
        if self.exhausted():
            return self.frontier(s)
        self._count()
        node = SearchNode(MAX, s)
        for a in self.world.player_actions(s, self.cfg.m_player):
            node.children.append((a, self.expand_min(s, a, depth)))
        backup(node)
        return node

    def expand_min(self, s, a, depth: int) -> SearchNode:
        if self.exhausted():
            return self.frontier(s)
        self._count()
        node = SearchNode(MIN, s)
        for b in self.world.opponent_actions(s, self.cfg.m_opponent):
            node.children.append((b, self.expand_chance(s, a, b, depth)))
        backup(node)
        return node

    def expand_chance(self, s, a, b, depth: int) -> SearchNode:
        if self.exhausted():
            return self.frontier(s)
        self._count()
        node = SearchNode(CHANCE, s)
        for p, s2 in self.world.transitions(s, a, b):
            # past the deadline the remaining outcomes share this node's (cached) frontier score
            child = self.frontier(s) if self.exhausted() else self.expand_max(s2, depth + 1)
            node.children.append((p, child))
        backup(node)
        return node


@contextmanager
def _cyclic_gc_paused():
    """Full collections can stall for tens of milliseconds; trees are acyclic so refcounting suffices."""
    was = gc.isenabled()
    gc.disable()
    try:
        yield
    finally:
        if was:
            gc.enable()


def search_world(world, cfg: SearchConfig, budget: Optional[float] = None, keep_tree: bool = False) -> SearchResult:
    """Maximin over sampled edges from ``world.root()``; see ``SearchConfig`` for the limits."""
    with _cyclic_gc_paused():
        return _search_world(world, cfg, budget, keep_tree)


def _search_world(world, cfg: SearchConfig, budget: Optional[float], keep_tree: bool) -> SearchResult:
    t0 = time.perf_counter()
    budget = cfg.budget if budget is None else budget
    s = world.root()
    if world.is_terminal(s):
        raise ContractViolation("search from a terminal state")
    diag = {"expanded_nodes": 0, "leaves": 0, "frontier_leaves": 0, "degenerate": False, "root_values": []}
    forced = world.forced_action(s)
    if forced is not None:
        diag.update(elapsed=time.perf_counter() - t0, forced=True)
        return SearchResult(forced, None, diag)
    run = _Run(world, cfg, _expansion_deadline(t0, budget), cfg.max_nodes)
    root = SearchNode(MAX, s)
    run._count()
    acts = list(world.player_actions(s, cfg.m_player))
    if not acts:
        raise ContractViolation("the sampler returned no actions")
    if cfg.workers > 1 and len(acts) > 1:
        with ThreadPoolExecutor(max_workers=min(cfg.workers, len(acts))) as ex:
            subs = list(ex.map(lambda a: run.expand_min(s, a, 0), acts))
    else:
        subs = [run.expand_min(s, a, 0) for a in acts]
    root.children = list(zip(acts, subs))
    backup(root)
    diag.update(expanded_nodes=run.nodes, leaves=run.leaves, frontier_leaves=run.frontiers)
    diag["root_values"] = [[str(a), n.value] for a, n in root.children]
    if run.leaves == 0:
        # nothing was genuinely evaluated: fall back to the sampler's preference
        diag.update(degenerate=True, elapsed=time.perf_counter() - t0)
        return SearchResult(acts[0], None, diag, root if keep_tree else None)
    best_a, best_v = acts[0], root.children[0][1].value
    for a, n in root.children[1:]:
        if n.value > best_v:  # strict: ties keep the sampler's earlier choice
            best_a, best_v = a, n.value
    diag["elapsed"] = time.perf_counter() - t0
    diag["chosen"] = str(best_a)
    return SearchResult(best_a, best_v, diag, root if keep_tree else None)


# ---------------------------------------------------------------- battles


class BattleWorld:
    """Search nodes are (estimated latent state, observation) pairs seen by ``obs.viewer``."""

    def __init__(self, obs: Observation, providers: Providers, est: Optional[BattleState] = None,
                 history: Optional[int] = None):
        self.obs = obs
        self.providers = providers
        self.viewer = obs.viewer
        self.history = providers.ctx.history if history is None else history
        self.chart = load_typechart()
        self.calls = {"sampler": 0, "opponent": 0, "value": 0}
        self._lock = threading.Lock()
        self._root = (est if est is not None else providers.opponent.estimate_state(obs), obs)

    def _tick(self, role):
        with self._lock:
            self.calls[role] += 1

    def root(self):
        return self._root

    def is_terminal(self, s) -> bool:
        return s[0].winner is not None

    def reward(self, s) -> float:
        return s[0].reward(self.viewer)

    def forced_action(self, s):
        legal = s[1].legal()
        return legal[0] if len(legal) == 1 else None

    def player_actions(self, s, m):
        est, obs = s
        legal = obs.legal()
        if len(legal) == 1:
            return legal
        self._tick("sampler")
        acts = [a for a in self.providers.sampler.sample(obs, self.providers.ctx, m, state=est) if a in legal]
        return list(dict.fromkeys(acts)) or rank_actions(est, self.viewer, legal)[:m]

    def opponent_actions(self, s, m):
        est, obs = s
        q = 1 - self.viewer
        legal = legal_actions(est, q)
        if len(legal) == 1:
            return legal
        self._tick("opponent")
        acts = [a for a in self.providers.opponent.sample_actions(obs, m, state=est) if a in legal]
        return list(dict.fromkeys(acts)) or rank_actions(est, q, legal)[:m]

    def transitions(self, s, a, b):
        est, obs = s
        x, y = (a, b) if self.viewer == 0 else (b, a)
        out = step(est, x, y, "expected", chart=self.chart, check=False)
        return [(br.prob, (br.state, advance(obs, br.state, br.events, self.history))) for br in out.branches]

    def evaluate(self, s) -> float:
        self._tick("value")
        return self.providers.value.evaluate(s[1], state=s[0])


def alive_count(obs: Observation) -> tuple[int, int]:
    own = sum(m.hp > 0 for m in obs.own)
    opp = sum(1 for v in obs.opp if v is None or v.hp_frac > 0)
    return own, opp


def turn_budget(cfg: SearchConfig, obs: Observation) -> float:
    """Per-decision seconds: a fraction of (increment + bank spread over the expected remaining turns)."""
    own, opp = alive_count(obs)
    remaining = max(4, 2 * (own + opp))
    share = cfg.budget_fraction * (CLOCK_INCREMENT + obs.clocks[0] / remaining)
    return max(1e-3, min(cfg.budget, share))


def search(obs: Observation, providers: Providers, cfg: SearchConfig = SearchConfig(), est: Optional[BattleState] = None,
           budget: Optional[float] = None, keep_tree: bool = False) -> SearchResult:
    if obs.winner is not None:
        raise ContractViolation("search on a terminal observation")
    t0 = time.perf_counter()
    budget = turn_budget(cfg, obs) if budget is None else budget
    with _cyclic_gc_paused():
        world = BattleWorld(obs, providers, est)  # opponent estimation is charged to the same budget
        res = search_world(world, cfg, max(1e-6, budget - (time.perf_counter() - t0)), keep_tree)
    res.diagnostics["elapsed"] = time.perf_counter() - t0
    res.diagnostics["provider_calls"] = dict(world.calls)
    res.diagnostics["fallbacks"] = providers.fallbacks.snapshot()
    return res


# ---------------------------------------------------------------- fast variant

Selector = Callable[[Observation, BattleState, Action, SearchConfig], str]


def heuristic_selector(obs: Observation, est: BattleState, look: Action, cfg: SearchConfig) -> str:
    """"lookahead" when short on clock or when the lookahead move knocks out in one turn."""
    if obs.clocks[0] < cfg.fast_clock_threshold:
        return "lookahead"
    if look.uses_move and move_key(est, obs.viewer, look)[0] == 1:
        return "lookahead"
    return "search"


def lookahead_action(obs: Observation, est: BattleState) -> Action:
    legal = obs.legal()
    try:
        return one_step_best_move(obs, est)
    except NoMoveAvailable:
        return rank_actions(est, obs.viewer, legal)[0]


def fast_select(obs: Observation, providers: Providers, cfg: SearchConfig = SearchConfig(mode="fast"),
                selector: Optional[Selector] = None, budget: Optional[float] = None) -> SearchResult:
    legal = obs.legal()
    if len(legal) == 1:
        return SearchResult(legal[0], None, {"route": "forced"})
    est = providers.opponent.estimate_state(obs)
    look = lookahead_action(obs, est)
    try:
        route = (selector or heuristic_selector)(obs, est, look, cfg)
    except Exception:
        route = "lookahead"
    if route != "search":
        return SearchResult(look, None, {"route": "lookahead"})
    reduced = SearchConfig(**{**cfg.__dict__, "depth": max(1, cfg.depth - 1), "mode": "full"})
    res = search(obs, providers, reduced, est=est, budget=budget)
    res.diagnostics["route"] = "search"
    return res
