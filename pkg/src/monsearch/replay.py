"""Replay logs: the native JSONL format, a Showdown-protocol importer, infoset
reconstruction, usage aggregation and the action-prediction benchmark."""
from __future__ import annotations

import csv
import io
import json
import math
import random
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

from .core import (
    MOVE, PASS, SWITCH, Action, BattlePokemon, BattleState, DataError, MonsearchError, Observation,
    Rules, compute_stats, label_for, lead_events, new_battle, observe,
)
from .dex import Dex, load_dex, spec_to_dict
from .engine import step
from .usage import EV_ARCHETYPES, FALLBACK_SPREAD, UsageCounter, UsageStats, argmax, ranked

REPLAY_VERSION = 1
SIDES = ("p1", "p2")
ELO_BUCKETS = (1200, 1400, 1600, 1800)
UNRATED = "unrated"  # bucket for decisions without a known rating


class ReplayParseError(MonsearchError, ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


# ---------------------------------------------------------------- records


@dataclass
class Step:
    """One decision point: at most one action per side plus the public events it produced."""

    turn: int
    actions: dict = field(default_factory=dict)  # side index -> {"kind", "index", "label"}
    events: list = field(default_factory=list)


@dataclass
class ReplayRecord:
    format: str
    players: list  # [{"name", "elo"}, ...] for p1, p2
    steps: list  # of Step
    winner: Optional[int] = None  # 0, 1, -1 draw
    turns: int = 0
    reason: Optional[str] = None
    teams: Optional[list] = None  # full team dicts when known (native replays)
    rules: Optional[Rules] = None
    seed: Optional[int] = None
    start_events: list = field(default_factory=list)
    skipped_lines: int = 0

    def elo(self, side: Optional[int] = None) -> Optional[float]:
        if side is not None:
            return self.players[side].get("elo")
        known = [p.get("elo") for p in self.players if p.get("elo") is not None]
        return sum(known) / len(known) if known else None


def action_record(action: Action, team, active: int) -> dict:
    return {"kind": action.kind, "index": action.index, "label": label_for(action, team, active)}


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def rules_to_dict(rules: Rules) -> dict:
    return {"tera": rules.tera, "dynamax": rules.dynamax, "weather": rules.weather, "level": rules.level}


def rules_from_dict(d: dict) -> Rules:
    return Rules(bool(d.get("tera", False)), bool(d.get("dynamax", False)), d.get("weather"), d.get("level", 100))


class ReplayWriter:
    """Accumulates a native replay; ``text()`` is byte-stable for identical inputs."""

    def __init__(self, fmt: str, players: Sequence[str], teams, rules: Rules, seed: int, start_events, scenario: str = ""):
        self.lines = [_dumps({
            "type": "header", "version": REPLAY_VERSION, "format": fmt, "scenario": scenario or fmt,
            "players": [{"name": n, "elo": None} for n in players],
            "teams": [[spec_to_dict(s) for s in team] for team in teams],
            "rules": rules_to_dict(rules), "seed": seed, "start": list(start_events),
        })]

    def turn(self, turn: int, actions: dict, events: Sequence[dict]):
        self.lines.append(_dumps({
            "type": "turn", "turn": turn,
            "actions": {SIDES[p]: a for p, a in sorted(actions.items())},
            "events": list(events),
        }))

    def outcome(self, winner: Optional[int], reason: Optional[str], turns: int, extra: Optional[dict] = None):
        w = {None: None, -1: "draw", 0: "p1", 1: "p2"}[winner]
        doc = {"type": "outcome", "winner": w, "reason": reason, "turns": turns}
        doc.update(extra or {})
        self.lines.append(_dumps(doc))

    def text(self) -> str:
        return "\n".join(self.lines) + "\n"


def loads_native(text: str) -> ReplayRecord:
    """Parse a native JSONL replay."""
    header = None
    steps = []
    outcome = None
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ReplayParseError(f"invalid JSON ({exc.msg})", n) from None
        kind = doc.get("type")
        if kind == "header":
            if header is not None:
                raise ReplayParseError("duplicate header", n)
            if doc.get("version") != REPLAY_VERSION:
                raise ReplayParseError(f"unsupported replay version {doc.get('version')!r}", n)
            header = doc
        elif kind == "turn":
            if header is None or outcome is not None:
                raise ReplayParseError("turn record outside header/outcome framing", n)
            acts = {SIDES.index(k): v for k, v in doc["actions"].items()}
            steps.append(Step(doc["turn"], acts, list(doc["events"])))
        elif kind == "outcome":
            if header is None or outcome is not None:
                raise ReplayParseError("misplaced outcome record", n)
            outcome = doc
        else:
            raise ReplayParseError(f"unknown record type {kind!r}", n)
    if header is None:
        raise ReplayParseError("missing header", 1)
    if outcome is None:
        raise ReplayParseError("missing outcome record", len(text.splitlines()) + 1)
    w = {None: None, "draw": -1, "p1": 0, "p2": 1}[outcome["winner"]]
    return ReplayRecord(
        format=header["format"], players=header["players"], steps=steps, winner=w, turns=outcome["turns"],
        reason=outcome.get("reason"), teams=header["teams"], rules=rules_from_dict(header["rules"]),
        seed=header["seed"], start_events=header.get("start", []),
    )


def load_replay(path) -> ReplayRecord:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise DataError(f"replay file not found: {path}") from None
    if p.suffix == ".jsonl":
        return loads_native(text)
    return parse_showdown_log(text)


# ---------------------------------------------------------------- native re-simulation


def _teams(record: ReplayRecord, dex: Optional[Dex] = None):
    dex = dex or load_dex()
    return [[dex.spec_from_dict(d) for d in team] for team in record.teams]


def _action_of(rec: dict, actor: int) -> Action:
    return Action(rec["kind"], int(rec["index"]), actor)


def resimulate(record: ReplayRecord, dex: Optional[Dex] = None, upto: Optional[int] = None):
    """Replay recorded actions through the engine with the recorded seed.

    Yields ``(state_before, step, state_after)`` for each step. The engine RNG
    is consumed exactly as during the original match, so the result is exact.
    """
    if record.teams is None:
        raise DataError("re-simulation needs a replay with full team data")
    t0, t1 = _teams(record, dex)
    state = new_battle(t0, t1, record.rules or Rules())
    rng = random.Random(record.seed)
    for i, st in enumerate(record.steps):
        if upto is not None and i >= upto:
            return
        a, b = _action_of(st.actions[0], 0), _action_of(st.actions[1], 1)
        after = step(state, a, b, rng=rng).state
        yield state, st, after
        state = after


def final_state(record: ReplayRecord, dex: Optional[Dex] = None) -> BattleState:
    """Terminal state of a native replay; clock and forfeit endings come from the outcome record."""
    t0, t1 = _teams(record, dex)
    state = new_battle(t0, t1, record.rules or Rules())
    for _, _, state in resimulate(record, dex):
        pass
    if state.winner is None and record.winner is not None:
        state = state._replace(winner=record.winner, reason=record.reason)
    return state


# ---------------------------------------------------------------- Showdown importer


_ID = re.compile(r"[^a-z0-9]")


def to_id(name: str) -> str:
    return _ID.sub("", name.lower())


def _side(tok: str, n: int) -> int:
    tag = tok.split(":", 1)[0].strip()[:2]
    if tag not in SIDES:
        raise ReplayParseError(f"unknown side {tok!r}", n)
    return SIDES.index(tag)


def _hp(tok: str, n: int) -> int:
    tok = tok.strip().split(" ")[0]
    if tok in ("0", ""):
        return 0
    try:
        cur, mx = tok.split("/")
        cur, mx = float(cur), float(mx)
    except ValueError:
        raise ReplayParseError(f"bad HP field {tok!r}", n) from None
    if cur <= 0:
        return 0
    return max(1, min(100, math.ceil(100.0 * cur / mx - 1e-9)))


KNOWN_LINES = frozenset({"player", "turn", "move", "switch", "drag", "faint", "-damage", "win", "tier"})


def parse_showdown_log(text: str) -> ReplayRecord:
    """Import the pipe-delimited protocol subset: player, turn, move, switch, faint, -damage, win.

    Other line types are skipped and counted. Framing errors (a missing
    ``|win|``, a side acting twice in one turn, turns out of order) raise
    ``ReplayParseError`` naming the line.
    """
    players = [{"name": None, "elo": None}, {"name": None, "elo": None}]
    fmt = "unknown"
    slots: list[list[str]] = [[], []]
    active = [None, None]
    steps: list[Step] = []
    cur = Step(0)
    fainted = [False, False]
    turn = 0
    winner = None
    skipped = 0
    lines = text.splitlines()
    start: list = []

    def new_step(t):
        nonlocal cur
        if cur.actions or cur.events:
            if cur.actions:
                steps.append(cur)
            elif not steps and cur.turn == 0:
                start.extend(cur.events)
            elif steps:
                steps[-1].events.extend(cur.events)
            else:
                start.extend(cur.events)
        cur = Step(t)
        fainted[0] = fainted[1] = False

    for n, raw in enumerate(lines, 1):
        line = raw.rstrip("\r")
        if not line.startswith("|"):
            continue
        parts = line.split("|")
        kind = parts[1] if len(parts) > 1 else ""
        if kind == "":
            continue
        if winner is not None:
            raise ReplayParseError("content after |win|", n)
        if kind not in KNOWN_LINES:
            skipped += 1
            continue
        if kind == "tier":
            fmt = to_id(parts[2]) if len(parts) > 2 else fmt
        elif kind == "player":
            if len(parts) < 3 or parts[2] not in SIDES:
                raise ReplayParseError("malformed |player| line", n)
            s = SIDES.index(parts[2])
            if len(parts) > 3 and parts[3]:
                players[s]["name"] = parts[3]
            if len(parts) > 5 and parts[5].strip().isdigit():
                players[s]["elo"] = int(parts[5])
        elif kind == "turn":
            try:
                t = int(parts[2])
            except (IndexError, ValueError):
                raise ReplayParseError("malformed |turn| line", n) from None
            if t != turn + 1:
                raise ReplayParseError(f"turn {t} follows turn {turn}", n)
            new_step(t)
            turn = t
        elif kind in ("switch", "drag"):
            if len(parts) < 4:
                raise ReplayParseError("malformed |switch| line", n)
            s = _side(parts[2], n)
            details = parts[3].split(",")
            species = to_id(details[0])
            level = 100
            for d in details[1:]:
                d = d.strip()
                if d.startswith("L") and d[1:].isdigit():
                    level = int(d[1:])
            hp = _hp(parts[4], n) if len(parts) > 4 else 100
            if species not in slots[s]:
                slots[s].append(species)
            slot = slots[s].index(species)
            if kind == "switch" and turn > 0:
                if s in cur.actions or fainted[s]:
                    # a replacement (after a faint or a pivot) starts its own decision point
                    new_step(cur.turn)
                cur.actions[s] = {"kind": SWITCH, "index": slot, "label": f"switch {species}"}
            cur.events.append({"type": "switch", "side": s, "slot": slot, "species": species, "level": level, "hp": hp})
            active[s] = slot
        elif kind == "move":
            if len(parts) < 4:
                raise ReplayParseError("malformed |move| line", n)
            s = _side(parts[2], n)
            move = to_id(parts[3])
            if turn == 0:
                new_step(1)
                turn = 1
            if s in cur.actions:
                raise ReplayParseError(f"{SIDES[s]} acts twice in turn {turn}", n)
            cur.actions[s] = {"kind": MOVE, "index": None, "label": f"move {move}"}
            cur.events.append({"type": "move", "side": s, "move": move})
        elif kind == "faint":
            if len(parts) < 3:
                raise ReplayParseError("malformed |faint| line", n)
            s = _side(parts[2], n)
            fainted[s] = True
            cur.events.append({"type": "faint", "side": s})
        elif kind == "-damage":
            if len(parts) < 4:
                raise ReplayParseError("malformed |-damage| line", n)
            s = _side(parts[2], n)
            cur.events.append({"type": "damage", "side": s, "hp": _hp(parts[3], n), "source": "move"})
        elif kind == "win":
            name = parts[2] if len(parts) > 2 else ""
            names = [p["name"] for p in players]
            if name in names:
                winner = names.index(name)
            elif name == "":
                winner = -1
            else:
                raise ReplayParseError(f"winner {name!r} is not a registered player", n)
            cur.events.append({"type": "win", "side": winner})
    if winner is None:
        raise ReplayParseError("log ends without a |win| line", len(lines) + 1)
    new_step(turn)
    return ReplayRecord(format=fmt, players=players, steps=steps, winner=winner, turns=max(turn, 1 if steps else 0),
                        reason="faint", start_events=start, skipped_lines=skipped)


# ---------------------------------------------------------------- infoset reconstruction


@dataclass
class DecisionPoint:
    """A labelled decision: what ``obs.viewer`` saw and the action ``actor`` took."""

    obs: Observation
    actor: int
    truth: str  # action label
    legal: list  # labels the predictor may choose from
    elo: Optional[float] = None
    role: str = "player"
    turn: int = 0


@dataclass
class Reconstruction:
    points: list
    skipped: int = 0
    player_turns: int = 0


def _log_of(record: ReplayRecord):
    return [list(record.start_events)] + [list(s.events) for s in record.steps]


def reconstruct_infosets(record: ReplayRecord, usage: Optional[UsageStats] = None, history: int = 8,
                         roles: Sequence[str] = ("player",), dex: Optional[Dex] = None) -> Reconstruction:
    """One labelled pair per player decision.

    Native replays are re-simulated, so own-side information is exact.
    Imported logs only show what a spectator saw; own teams are completed from
    usage statistics (or the dex's default sets) and inconsistent turns are skipped.
    """
    if record.teams is not None:
        return _reconstruct_native(record, history, roles, usage, dex)
    return _reconstruct_spectator(record, usage, history, roles, dex or load_dex())


def _opp_labels(obs: Observation, usage, model_cache: dict):
    from .priors import HeuristicOpponentModel, opponent_legal

    model = model_cache.setdefault("m", HeuristicOpponentModel(usage))
    est = model.estimate_state(obs)
    q = 1 - obs.viewer
    return [label_for(a, est.teams[q], est.active[q]) for a in opponent_legal(obs, est)]


def _points_for(obs_by_side, actions, record, roles, turn, usage, cache, out):
    for p in (0, 1):
        rec = actions.get(p)
        if rec is None or rec["kind"] == PASS:
            continue
        if "player" in roles:
            obs = obs_by_side[p]
            out.append(DecisionPoint(obs, p, rec["label"], [obs.label(a) for a in obs.legal()],
                                     record.elo(p), "player", turn))
        if "opponent" in roles:
            obs = obs_by_side[1 - p]
            out.append(DecisionPoint(obs, p, rec["label"], _opp_labels(obs, usage, cache),
                                     record.elo(p), "opponent", turn))


def _reconstruct_native(record, history, roles, usage, dex) -> Reconstruction:
    log = [list(record.start_events)]
    points: list = []
    cache: dict = {}
    turns = 0
    skipped = 0
    for state, st, after in resimulate(record, dex):
        obs = {p: observe(state, p, log, history) for p in (0, 1)}
        for p in (0, 1):
            rec = st.actions[p]
            if rec["kind"] != PASS:
                turns += 1
        _points_for(obs, st.actions, record, roles, st.turn, usage, cache, points)
        log.append(list(st.events))
    return Reconstruction(points, skipped, turns)


def _own_sets(record: ReplayRecord, dex: Dex, usage: Optional[UsageStats]):
    """Per side: species (slot order) -> the moves it was seen using over the whole game."""
    seen: list[dict] = [{}, {}]
    active = [None, None]
    for ev in [e for turn in _log_of(record) for e in turn]:
        s = ev.get("side")
        if ev["type"] == "switch":
            seen[s].setdefault(ev["species"], {"slot": ev["slot"], "level": ev["level"], "moves": []})
            active[s] = ev["species"]
        elif ev["type"] == "move" and active[s] is not None:
            mv = seen[s][active[s]]["moves"]
            if ev["move"] not in mv:
                mv.append(ev["move"])
    return seen


def _complete_spec(dex: Dex, usage, species: str, level: int, used: Sequence[str]):
    if species not in dex.species:
        return None
    used = [m for m in used if m in dex.moves]
    u = usage.get(species) if usage is not None else None
    fill = ranked(u.moves) if u is not None else []
    fill = fill + list(dex.species[species].sets[0]["moves"] if dex.species[species].sets else [])
    moves = list(dict.fromkeys(used + [m for m in fill if m in dex.moves]))[:4]
    if u is not None:
        return dex.make(species, moves, level, item=argmax(u.items) or "none", nature=argmax(u.natures) or "serious",
                        evs=EV_ARCHETYPES[argmax(u.spreads) or FALLBACK_SPREAD], tera_type=argmax(u.tera_types))
    return dex.make(species, moves, level)


def _reconstruct_spectator(record, usage, history, roles, dex) -> Reconstruction:
    seen = _own_sets(record, dex, usage)
    teams = []
    for s in (0, 1):
        order = sorted(seen[s].items(), key=lambda kv: kv[1]["slot"])
        specs = [_complete_spec(dex, usage, sp, d["level"], d["moves"]) for sp, d in order]
        teams.append(specs)
    rules = Rules()
    points: list = []
    cache: dict = {}
    skipped = 0
    turns = 0
    log = [list(record.start_events)]
    hp = [[100] * len(teams[0]), [100] * len(teams[1])]
    active = [0, 0]

    def fold_hp(events):
        for ev in events:
            s = ev.get("side")
            if ev["type"] == "switch":
                active[s] = ev["slot"]
                hp[s][ev["slot"]] = ev["hp"]
            elif ev["type"] == "damage":
                hp[s][active[s]] = ev["hp"]
            elif ev["type"] == "faint":
                hp[s][active[s]] = 0

    fold_hp(record.start_events)
    for st in record.steps:
        acting = [p for p in (0, 1) if p in st.actions]
        turns += len(acting)
        usable = all(None not in teams[p] for p in (0, 1)) and all(teams[p] for p in (0, 1))
        if usable:
            mons = []
            for p in (0, 1):
                row = []
                for i, spec in enumerate(teams[p]):
                    stats = compute_stats(spec)
                    h = hp[p][i]
                    row.append(BattlePokemon(spec, stats, 0 if h <= 0 else max(1, round(h / 100 * stats.hp))))
                mons.append(tuple(row))
            must = tuple(mons[p][active[p]].hp <= 0 for p in (0, 1))
            state = BattleState((mons[0], mons[1]), tuple(active), rules, st.turn, must_switch=must)
            obs = {p: observe(state, p, log, history) for p in (0, 1)}
            actions = {}
            for p in acting:
                labels = [obs[p].label(a) for a in obs[p].legal()]
                if st.actions[p]["label"] in labels:
                    actions[p] = st.actions[p]
                else:
                    skipped += 1
            _points_for(obs, actions, record, roles, st.turn, usage, cache, points)
        else:
            skipped += len(acting)
        fold_hp(st.events)
        log.append(list(st.events))
    return Reconstruction(points, skipped, turns)


# ---------------------------------------------------------------- usage aggregation


def aggregate_usage(records: Iterable[ReplayRecord]) -> UsageStats:
    """Usage tables from full team data where available, otherwise from revealed moves."""
    counter = UsageCounter()
    n = 0
    for rec in records:
        n += 1
        if rec.teams is not None:
            for team in rec.teams:
                for d in team:
                    counter.add(d["species"], d.get("moves", ()), d.get("item"), d.get("evs"), d.get("nature"),
                                d.get("tera_type"), d.get("ability"))
            continue
        seen = _own_sets(rec, load_dex(), None)
        for side in seen:
            for species, d in side.items():
                counter.add(species, d["moves"])
    if n == 0:
        raise DataError("usage aggregation needs at least one record")
    return counter.finish()


def ingest_directory(root, workers: int = 1) -> tuple[UsageStats, list[ReplayRecord], list[tuple[str, str]]]:
    """Parse every replay file under ``root``; unreadable files are reported, not fatal."""
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"not a directory: {root}")
    files = sorted(p for p in root.rglob("*") if p.suffix in (".jsonl", ".log", ".txt"))
    records, errors = [], []
    for f in files:
        try:
            records.append(load_replay(f))
        except (ReplayParseError, DataError, KeyError, TypeError) as exc:
            errors.append((str(f), str(exc)))
    if not records:
        raise DataError(f"no parsable replays under {root}")
    return aggregate_usage(records), records, errors


# ---------------------------------------------------------------- prediction benchmark


def nearest_bucket(elo: float) -> int:
    return min(ELO_BUCKETS, key=lambda b: (abs(b - elo), b))


@dataclass
class PredictionReport:
    k_max: int = 5
    counts: dict = field(default_factory=dict)  # (bucket, role) -> n
    hits: dict = field(default_factory=dict)  # (bucket, role) -> [hits at k=1..k_max]
    illegal: int = 0
    unbucketed: int = 0  # decisions reported under the unrated bucket

    def accuracy(self, bucket: int, role: str, k: int) -> float:
        n = self.counts.get((bucket, role), 0)
        return self.hits[(bucket, role)][k - 1] / n if n else float("nan")

    def overall(self, role: str, k: int) -> float:
        n = sum(v for (b, r), v in self.counts.items() if r == role)
        h = sum(v[k - 1] for (b, r), v in self.hits.items() if r == role)
        return h / n if n else float("nan")

    def check_monotone(self) -> bool:
        return all(all(h[i] <= h[i + 1] for i in range(len(h) - 1)) for h in self.hits.values())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["elo_bucket", "role", "n"] + [f"top{k}" for k in range(1, self.k_max + 1)])
        for (b, r) in sorted(self.counts, key=lambda k: (str(k[0]), k[1])):
            n = self.counts[(b, r)]
            w.writerow([b, r, n] + [f"{self.hits[(b, r)][k] / n:.4f}" for k in range(self.k_max)])
        return buf.getvalue()


Predictor = Callable[[DecisionPoint], Sequence[str]]


def predict_benchmark(points: Iterable[DecisionPoint], predictor: Predictor, k_max: int = 5) -> PredictionReport:
    """Top-k hit rates per Elo bucket and role; predicted labels outside the legal menu are dropped and counted."""
    rep = PredictionReport(k_max=k_max)
    for dp in points:
        if dp.elo is None:
            rep.unbucketed += 1
        key = (UNRATED if dp.elo is None else nearest_bucket(dp.elo), dp.role)
        legal = set(dp.legal)
        ranking = []
        for lab in predictor(dp):
            if lab not in legal:
                rep.illegal += 1
            elif lab not in ranking:
                ranking.append(lab)
        rep.counts[key] = rep.counts.get(key, 0) + 1
        h = rep.hits.setdefault(key, [0] * k_max)
        if dp.truth in ranking[:k_max]:
            for k in range(ranking.index(dp.truth), k_max):
                h[k] += 1
    if not rep.check_monotone():
        raise AssertionError("top-k accuracy must be monotone in k")
    return rep


def oracle_predictor(dp: DecisionPoint) -> list[str]:
    return [dp.truth]


def uniform_predictor(seed: int = 0) -> Predictor:
    rng = random.Random(seed)

    def pred(dp):
        labels = list(dp.legal)
        rng.shuffle(labels)
        return labels

    return pred


def heuristic_predictor(usage: Optional[UsageStats] = None) -> Predictor:
    """Ranks with the heuristic sampler (player role) or opponent model (opponent role)."""
    from .priors import HeuristicOpponentModel, opponent_legal, rank_actions

    model = HeuristicOpponentModel(usage)

    def pred(dp):
        obs = dp.obs
        est = model.estimate_state(obs)
        if dp.role == "player":
            return [obs.label(a) for a in rank_actions(est, obs.viewer, obs.legal())]
        q = 1 - obs.viewer
        acts = rank_actions(est, q, opponent_legal(obs, est))
        return [label_for(a, est.teams[q], est.active[q]) for a in acts]

    return pred


def provider_predictor(providers, k_max: int = 5) -> Predictor:
    """Ranks with a provider bundle (e.g. LLM-backed sampler and opponent model)."""

    def pred(dp):
        obs = dp.obs
        est = providers.opponent.estimate_state(obs)
        if dp.role == "player":
            return [obs.label(a) for a in providers.sampler.sample(obs, providers.ctx, k_max, state=est)]
        q = 1 - obs.viewer
        return [label_for(a, est.teams[q], est.active[q]) for a in providers.opponent.sample_actions(obs, k_max, state=est)]

    return pred


# ---------------------------------------------------------------- dataset statistics


def dataset_stats(records: Iterable[ReplayRecord], width: int = 50) -> dict:
    """Elo histogram with per-bin mean game length; bins are [lo, lo + width)."""
    bins: dict = {}
    for rec in records:
        elo = rec.elo()
        if elo is None:
            continue
        lo = int(elo // width * width)
        n, total = bins.get(lo, (0, 0))
        bins[lo] = (n + 1, total + rec.turns)
    if not bins:
        raise DataError("no record with a known Elo rating")
    return {lo: {"count": n, "mean_turns": total / n} for lo, (n, total) in sorted(bins.items())}


def dataset_stats_csv(stats: dict, width: int = 50) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["elo_lo", "elo_hi", "count", "mean_turns"])
    for lo, d in stats.items():
        w.writerow([lo, lo + width, d["count"], f"{d['mean_turns']:.3f}"])
    return buf.getvalue()


# ---------------------------------------------------------------- synthetic calibration corpus


def calibration_corpus(n_games: int, seed: int = 0, history: int = 8) -> list[DecisionPoint]:
    """Turn-one decisions of full six-Pokemon tera battles with random teams.

    Every decision has exactly 13 legal actions (4 moves, 5 switches, 4 tera
    variants), so uniform guessing has top-1 accuracy 1/13 exactly.
    """
    dex = load_dex()
    rng = random.Random(seed)
    rules = Rules(tera=True)
    points = []
    for g in range(n_games):
        t0, t1 = dex.random_team(rng, 6), dex.random_team(rng, 6)
        t0 = [s if len(s.moves) == 4 else dex.make(s.species) for s in t0]
        t1 = [s if len(s.moves) == 4 else dex.make(s.species) for s in t1]
        state = new_battle(t0, t1, rules)
        log = [lead_events(state)]
        elo = [rng.choice(ELO_BUCKETS) + rng.randint(-99, 99) for _ in (0, 1)]
        for p in (0, 1):
            obs = observe(state, p, log, history)
            legal = obs.legal()
            a = rng.choice(legal)
            points.append(DecisionPoint(obs, p, obs.label(a), [obs.label(x) for x in legal], elo[p], "player", 0))
    return points


__all__ = [
    "ReplayRecord", "Step", "ReplayWriter", "ReplayParseError", "loads_native", "load_replay", "resimulate",
    "final_state", "parse_showdown_log", "reconstruct_infosets", "DecisionPoint", "aggregate_usage",
    "ingest_directory", "predict_benchmark", "PredictionReport", "oracle_predictor", "uniform_predictor",
    "heuristic_predictor", "provider_predictor", "dataset_stats", "dataset_stats_csv", "calibration_corpus",
    "nearest_bucket", "action_record",
]
