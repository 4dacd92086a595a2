"""A small simultaneous-move stochastic game and a brute-force minimax oracle."""
import random
from dataclasses import dataclass


@dataclass
class ToyGame:
    n_a: int
    n_b: int
    horizon: int
    seed: int
    chance: bool = True
    max_branches: int = 3

    def __post_init__(self):
        self._rng = random.Random(self.seed)
        self._trans = {}
        self._leaf = {}

    def transitions(self, s, a, b):
        key = (s, a, b)
        if key not in self._trans:
            k = self._rng.randint(1, self.max_branches) if self.chance else 1
            w = [self._rng.randint(1, 9) for _ in range(k)]
            z = sum(w)
            self._trans[key] = [(x / z, s + ((a, b, i),)) for i, x in enumerate(w)]
        return self._trans[key]

    def value(self, s):
        if s not in self._leaf:
            self._leaf[s] = self._rng.random()
        return self._leaf[s]


def brute_force(game: ToyGame, s=(), depth=0):
    """Full-tree maximin: max over a of min over b of expected child value."""
    if depth == game.horizon:
        return game.value(s)
    best = None
    for a in range(game.n_a):
        worst = None
        for b in range(game.n_b):
            v = sum(p * brute_force(game, s2, depth + 1) for p, s2 in game.transitions(s, a, b))
            worst = v if worst is None else min(worst, v)
        best = worst if best is None else max(best, worst)
    return best


def brute_force_action(game: ToyGame):
    vals = []
    for a in range(game.n_a):
        vals.append(min(sum(p * brute_force(game, s2, 1) for p, s2 in game.transitions((), a, b))
                        for b in range(game.n_b)))
    return max(range(game.n_a), key=lambda a: (vals[a], -a)), max(vals)


class ToyWorld:
    """Adapter exposing a ``ToyGame`` through the search world interface."""

    def __init__(self, game: ToyGame, transform=lambda v: v, order=None):
        self.game = game
        self.transform = transform
        self.order = order or list(range(game.n_a))

    def root(self):
        return ()

    def is_terminal(self, s):
        return len(s) >= self.game.horizon

    def reward(self, s):
        return self.transform(self.game.value(s))

    def forced_action(self, s):
        return 0 if self.game.n_a == 1 else None

    def player_actions(self, s, m):
        return self.order[:m]

    def opponent_actions(self, s, m):
        return list(range(self.game.n_b))[:m]

    def transitions(self, s, a, b):
        return self.game.transitions(s, a, b)

    def evaluate(self, s):
        return self.transform(self.game.value(s))
