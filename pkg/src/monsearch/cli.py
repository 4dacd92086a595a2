"""Command-line entry point: battle, arena, puzzle, predict, ingest and play."""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .config import ConfigError, RunConfig, resolve
from .core import ContractViolation, DataError, MonsearchError
from .replay import ReplayParseError

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RUNTIME = 0, 2, 3, 4

log = logging.getLogger("monsearch")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", metavar="PATH", help="YAML or JSON run configuration")
    p.add_argument("--seed", type=int, help="master seed (required by randomized commands)")
    p.add_argument("--scenario", help="battle format (gen9ou, gen9ou-mirror, gen8random, gen8random-nodmax, 1v1, ...)")
    p.add_argument("--agents", help="comma-separated agent names")
    p.add_argument("--games", type=int, help="games per pair (arena) or puzzle count (puzzle)")
    p.add_argument("--llm-endpoint", metavar="URL", help="chat-completions endpoint (or MONSEARCH_LLM_ENDPOINT)")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="monsearch", description="Battle engine, search agents and evaluation harness.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = sub.add_parser("battle", help="play one battle and write its replay and result")
    _common(p)
    p = sub.add_parser("arena", help="round-robin arena with Elo table and win-rate matrix")
    _common(p)
    p.add_argument("--reference", help="agent whose win rate column is reported (default: first agent)")
    p.add_argument("--save-replays", action="store_true", help="write every game's replay")
    p = sub.add_parser("puzzle", help="generate 1v1 puzzles and score agents on them")
    _common(p)
    p = sub.add_parser("predict", help="action-prediction benchmark over replays")
    _common(p)
    p.add_argument("--replays", metavar="DIR", help="replay directory (omit for the synthetic calibration corpus)")
    p.add_argument("--predictor", choices=("oracle", "uniform", "heuristic", "llm"))
    p.add_argument("--usage", metavar="PATH", help="usage statistics file")
    p = sub.add_parser("ingest", help="aggregate usage statistics and dataset stats from replays")
    _common(p)
    p.add_argument("--replays", metavar="DIR", required=True, help="replay directory")
    p = sub.add_parser("play", help="play against an agent in the terminal")
    _common(p)
    return parser


def _flags(ns) -> dict:
    out = {}
    for k in ("seed", "scenario", "agents", "games", "out", "replays", "predictor", "usage"):
        v = getattr(ns, k, None)
        if v is not None:
            out[k] = v
    if ns.llm_endpoint:
        out["llm"] = {"endpoint": ns.llm_endpoint}
    return out


# ---------------------------------------------------------------- wiring


def _usage(cfg: RunConfig):
    if not cfg.usage:
        return None
    from .usage import UsageStats

    return UsageStats.load(cfg.usage)


def _client(cfg: RunConfig):
    from .llm import CachedChatClient, HttpChatClient, ScriptedChatClient

    if cfg.llm.transcript:
        return CachedChatClient(ScriptedChatClient.from_file(cfg.llm.transcript))
    if not cfg.llm.endpoint:
        raise ConfigError("llm.endpoint: an LLM provider is configured but no endpoint or transcript is set")
    return CachedChatClient(HttpChatClient.from_env(cfg.llm.endpoint, max_in_flight=cfg.llm.max_in_flight))


def make_providers(cfg: RunConfig, usage=None, force_llm: bool = False):
    from .priors import (
        HeuristicOpponentModel, HeuristicSampler, HeuristicValue, LLMOpponentModel, LLMSampler, LLMValue,
        PromptContext, Providers, FallbackCounter,
    )

    kinds = {r: ("llm" if force_llm else cfg.providers[r]) for r in ("sampler", "opponent", "value")}
    opp = HeuristicOpponentModel(usage)
    ctx = PromptContext(history=cfg.history, usage=usage)
    counter = FallbackCounter()
    sampler, model, value = HeuristicSampler(opp), opp, HeuristicValue(opp, cfg.weights)
    if "llm" in kinds.values():
        client = _client(cfg)
        kw = {"model": cfg.llm.model, "timeout": cfg.llm.timeout}
        if kinds["sampler"] == "llm":
            sampler = LLMSampler(client, sampler, counter, **kw)
        if kinds["opponent"] == "llm":
            model = LLMOpponentModel(client, opp, counter, ctx, **kw)
        if kinds["value"] == "llm":
            value = LLMValue(client, value, counter, ctx, **kw)
    return Providers(sampler, model, value, ctx, counter)


def agent_factory(cfg: RunConfig, name: str, usage=None):
    from .agents import make_agent

    def build():
        prov = None
        if name in ("planner", "planner_fast", "llm_planner"):
            prov = make_providers(cfg, usage, force_llm=(name == "llm_planner"))
        return make_agent(name, seed=0, usage=usage, cfg=cfg.search, providers=prov)

    return build


def _scenario(cfg: RunConfig):
    from .arena import Scenario, get_scenario

    sc = get_scenario(cfg.scenario)
    if cfg.team_a or cfg.team_b:
        from .dex import load_team

        a = cfg.team_a or (sc.teams[0] if sc.teams else None)
        b = cfg.team_b or (sc.teams[1] if sc.teams else None)
        if a is None or b is None:
            raise ConfigError("team_a/team_b: random-team scenarios need both team files to override")
        load_team(a), load_team(b)  # validate early
        sc = Scenario(sc.name, sc.rules, (a, b), sc.team_size)
    return sc


def _clock(cfg: RunConfig):
    from .arena import VirtualClock, WallClock

    return VirtualClock() if cfg.clock == "virtual" else WallClock()


def _outdir(cfg: RunConfig) -> Path:
    p = Path(cfg.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


# ---------------------------------------------------------------- commands


def cmd_battle(cfg: RunConfig, ns) -> int:
    from .arena import run_match

    seed = cfg.require_seed("battle")
    if len(cfg.agents) != 2:
        raise ConfigError("agents: battle needs exactly two agents")
    usage = _usage(cfg)
    a, b = (agent_factory(cfg, n, usage)() for n in cfg.agents)
    res = run_match(a, b, _scenario(cfg), seed, clock=_clock(cfg), history=cfg.history)
    out = _outdir(cfg)
    (out / "battle.jsonl").write_text(res.replay, encoding="utf-8")
    result = {"agents": cfg.agents, "scenario": cfg.scenario, "seed": seed, "winner": res.winner,
              "turns": res.turns, "reason": res.reason, "timeout": res.timeout, "forfeit": res.forfeit,
              "error": res.error}
    (out / "result.json").write_text(json.dumps(result, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    who = {0: cfg.agents[0], 1: cfg.agents[1], -1: "draw"}[res.winner]
    print(f"winner: {who} after {res.turns} turns ({res.reason})")
    return EXIT_OK


def cmd_arena(cfg: RunConfig, ns) -> int:
    from .arena import run_arena

    seed = cfg.require_seed("arena")
    if len(cfg.agents) < 2:
        raise ConfigError("agents: an arena needs at least two agents")
    if len(set(cfg.agents)) != len(cfg.agents):
        raise ConfigError("agents: names must be unique")
    usage = _usage(cfg)
    out = _outdir(cfg)
    rdir = out / "replays" if getattr(ns, "save_replays", False) else None

    def save_replay(key, res):
        g, a, b = key
        rdir.mkdir(exist_ok=True)
        (rdir / f"{a}_vs_{b}_{g:04d}.jsonl").write_text(res.replay, encoding="utf-8")

    reference = getattr(ns, "reference", None)
    if reference is not None and reference not in cfg.agents:
        raise ConfigError(f"reference: {reference!r} is not one of the agents")
    rep = run_arena([(n, agent_factory(cfg, n, usage)) for n in cfg.agents], _scenario(cfg), cfg.games, seed,
                    reference=reference, workers=cfg.workers,
                    clock_factory=(lambda: _clock(cfg)), on_result=save_replay if rdir else None)
    (out / "arena.csv").write_text(rep.to_csv(), encoding="utf-8")
    (out / "matrix.json").write_text(rep.matrix_json() + "\n", encoding="utf-8")
    sys.stdout.write(rep.to_csv())
    return EXIT_OK


def cmd_puzzle(cfg: RunConfig, ns) -> int:
    from .agents import make_agent
    from .arena import evaluate_puzzles, generate_1v1_puzzles, binomial_ci
    from .dex import load_dex, spec_to_dict
    from .replay import rules_to_dict

    seed = cfg.require_seed("puzzle")
    usage = _usage(cfg)
    rules = _scenario(cfg).rules
    pool = sorted(load_dex().species)
    puzzles = generate_1v1_puzzles(pool, cfg.games, seed, rules)
    out = _outdir(cfg)
    with open(out / "puzzles.jsonl", "w", encoding="utf-8") as fh:
        for pz in puzzles:
            fh.write(json.dumps({"scenario": pz.scenario_id, "rules": rules_to_dict(pz.rules),
                                 "teams": [[spec_to_dict(s) for s in t] for t in pz.teams],
                                 "certificate_seed": pz.certificate["seed"]}, sort_keys=True) + "\n")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["agent", "opponent", "winrate", "ci_low", "ci_high", "games"])
    for name in cfg.agents:
        for opp in ("abyssal", "random"):
            sc = evaluate_puzzles(puzzles, agent_factory(cfg, name, usage), lambda o=opp: make_agent(o), seed,
                                  clock_factory=lambda: _clock(cfg))
            lo, hi = binomial_ci(sc.wins + 0.5 * sc.draws, sc.games)
            w.writerow([name, opp, f"{sc.rate:.4f}", f"{lo:.4f}", f"{hi:.4f}", sc.games])
    (out / "puzzle_results.csv").write_text(buf.getvalue(), encoding="utf-8")
    sys.stdout.write(buf.getvalue())
    return EXIT_OK


def cmd_predict(cfg: RunConfig, ns) -> int:
    from .replay import (
        calibration_corpus, heuristic_predictor, ingest_directory, oracle_predictor, predict_benchmark,
        provider_predictor, reconstruct_infosets, uniform_predictor,
    )

    usage = _usage(cfg)
    if cfg.replays:
        _, records, errors = ingest_directory(cfg.replays)
        for f, e in errors:
            log.warning("skipped %s: %s", f, e)
        points, skipped = [], 0
        for rec in records:
            r = reconstruct_infosets(rec, usage, cfg.history, roles=("player", "opponent"))
            points.extend(r.points)
            skipped += r.skipped
    else:
        seed = cfg.require_seed("predict")
        points, skipped = calibration_corpus(cfg.games, seed, cfg.history), 0
    if cfg.predictor == "oracle":
        pred = oracle_predictor
    elif cfg.predictor == "uniform":
        pred = uniform_predictor(cfg.require_seed("predict"))
    elif cfg.predictor == "llm":
        pred = provider_predictor(make_providers(cfg, usage, force_llm=True))
    else:
        pred = heuristic_predictor(usage)
    rep = predict_benchmark(points, pred)
    out = _outdir(cfg)
    (out / "prediction.csv").write_text(rep.to_csv(), encoding="utf-8")
    sys.stdout.write(rep.to_csv())
    print(f"decisions: {len(points)}  skipped turns: {skipped}  illegal predictions: {rep.illegal}")
    return EXIT_OK


def cmd_ingest(cfg: RunConfig, ns) -> int:
    from .replay import dataset_stats, dataset_stats_csv, ingest_directory

    if not cfg.replays:
        raise ConfigError("replays: ingest needs a replay directory")
    usage, records, errors = ingest_directory(cfg.replays)
    out = _outdir(cfg)
    (out / "usage.json").write_text(usage.to_json() + "\n", encoding="utf-8")
    try:
        stats = dataset_stats(records)
        (out / "dataset_stats.csv").write_text(dataset_stats_csv(stats), encoding="utf-8")
    except DataError as exc:
        log.warning("%s", exc)
    for f, e in errors:
        print(f"skipped {f}: {e}", file=sys.stderr)
    print(f"ingested {len(records)} replays, {len(usage.species)} species")
    return EXIT_OK


def cmd_play(cfg: RunConfig, ns, input_fn=input, output=print) -> int:
    from .agents import HumanAgent
    from .arena import WallClock, run_match

    seed = cfg.require_seed("play")
    opponent = [a for a in cfg.agents if a != "human"]
    name = opponent[0] if opponent else "one_step"
    agent = agent_factory(cfg, name, _usage(cfg))()
    human = HumanAgent(input_fn, output)
    res = run_match(human, agent, _scenario(cfg), seed, clock=WallClock(), history=cfg.history)
    result = {-1: "draw", 0: "you win", 1: f"{name} wins"}[res.winner]
    output(f"{result} after {res.turns} turns ({res.reason})")
    if cfg.out:
        out = _outdir(cfg)
        (out / "play.jsonl").write_text(res.replay, encoding="utf-8")
    return EXIT_OK


COMMANDS = {"battle": cmd_battle, "arena": cmd_arena, "puzzle": cmd_puzzle, "predict": cmd_predict,
            "ingest": cmd_ingest, "play": cmd_play}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve(_flags(ns), ns.config)
        return COMMANDS[ns.command](cfg, ns)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, ReplayParseError, KeyError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (MonsearchError, ContractViolation, RuntimeError, OSError, ValueError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
