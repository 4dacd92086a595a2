"""Run configuration: flags over config file over environment."""
from __future__ import annotations

import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import yaml

from .core import MonsearchError
from .priors import ValueWeights
from .search import SearchConfig

ENV_PREFIX = "MONSEARCH_"
PROVIDER_KINDS = ("heuristic", "llm")
ROLES = ("sampler", "opponent", "value")


class ConfigError(MonsearchError, ValueError):
    """Invalid or missing configuration; the message names the field or file."""


@dataclass
class LLMSettings:
    endpoint: Optional[str] = None
    model: str = "default"
    timeout: float = 10.0
    max_in_flight: int = 4
    transcript: Optional[str] = None  # scripted replies instead of a live endpoint


@dataclass
class RunConfig:
    scenario: str = "gen9ou"
    team_a: Optional[str] = None
    team_b: Optional[str] = None
    agents: list = field(default_factory=lambda: ["one_step", "random"])
    providers: dict = field(default_factory=lambda: {r: "heuristic" for r in ROLES})
    search: SearchConfig = field(default_factory=SearchConfig)
    weights: ValueWeights = field(default_factory=ValueWeights)
    history: int = 8
    llm: LLMSettings = field(default_factory=LLMSettings)
    seed: Optional[int] = None
    games: int = 25
    out: str = "out"
    usage: Optional[str] = None
    replays: Optional[str] = None
    predictor: str = "heuristic"
    clock: str = "wall"  # "wall" | "virtual"
    workers: int = 1

    def require_seed(self, command: str) -> int:
        if self.seed is None:
            raise ConfigError(f"seed: '{command}' is randomized and needs an explicit --seed")
        return self.seed


_SIMPLE = {"scenario": str, "team_a": str, "team_b": str, "seed": int, "games": int, "out": str, "usage": str,
           "replays": str, "predictor": str, "clock": str, "workers": int, "history": int}


def _coerce(name, value, kind):
    if value is None:
        return None
    try:
        if kind is int and isinstance(value, bool):
            raise ValueError
        return kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: expected {kind.__name__}, got {value!r}") from None


def _agents(value, name="agents") -> list:
    if isinstance(value, str):
        items = [x.strip() for x in value.split(",") if x.strip()]
    elif isinstance(value, (list, tuple)):
        items = [str(x).strip() for x in value]
    else:
        raise ConfigError(f"{name}: expected a list or comma-separated string")
    if not items:
        raise ConfigError(f"{name}: at least one agent is required")
    return items


def _sub(dc_type, current, doc: dict, prefix: str):
    if not isinstance(doc, dict):
        raise ConfigError(f"{prefix}: expected a mapping")
    known = {f.name: f for f in fields(dc_type)}
    kw = {f: getattr(current, f) for f in known}
    for k, v in doc.items():
        if k not in known:
            raise ConfigError(f"{prefix}.{k}: unknown field")
        cur = kw[k]
        kind = type(cur) if cur is not None else (str if k in ("endpoint", "transcript") else int)
        kw[k] = _coerce(f"{prefix}.{k}", v, kind) if kind in (int, float, str) else v
    try:
        return dc_type(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{prefix}: {exc}") from None


def apply_mapping(cfg: RunConfig, doc: dict, source: str) -> RunConfig:
    """Overlay a parsed document onto ``cfg``; unknown keys are errors."""
    for k, v in doc.items():
        if v is None:
            continue
        if k in _SIMPLE:
            setattr(cfg, k, _coerce(k, v, _SIMPLE[k]))
        elif k == "agents":
            cfg.agents = _agents(v)
        elif k == "providers":
            if not isinstance(v, dict):
                raise ConfigError("providers: expected a mapping of role to provider")
            prov = dict(cfg.providers)
            for role, kind in v.items():
                if role not in ROLES:
                    raise ConfigError(f"providers.{role}: unknown role (use {', '.join(ROLES)})")
                if kind not in PROVIDER_KINDS:
                    raise ConfigError(f"providers.{role}: unknown provider {kind!r}")
                prov[role] = kind
            cfg.providers = prov
        elif k == "search":
            cfg.search = _sub(SearchConfig, cfg.search, v, "search")
        elif k == "weights":
            cfg.weights = _sub(ValueWeights, cfg.weights, v, "weights")
        elif k == "llm":
            cfg.llm = _sub(LLMSettings, cfg.llm, v, "llm")
        else:
            raise ConfigError(f"{k}: unknown field in {source}")
    return cfg


def load_config_file(path) -> dict:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path}: not valid YAML/JSON ({exc})") from None
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigError(f"config file {path}: top level must be a mapping")
    return doc


def env_mapping(environ=None) -> dict:
    env = os.environ if environ is None else environ
    out: dict = {}
    for key in ("SEED", "SCENARIO", "AGENTS", "GAMES", "OUT", "USAGE"):
        v = env.get(ENV_PREFIX + key)
        if v:
            out[key.lower()] = v
    llm = {}
    if env.get(ENV_PREFIX + "LLM_ENDPOINT"):
        llm["endpoint"] = env[ENV_PREFIX + "LLM_ENDPOINT"]
    if env.get(ENV_PREFIX + "LLM_MODEL"):
        llm["model"] = env[ENV_PREFIX + "LLM_MODEL"]
    if llm:
        out["llm"] = llm
    return out


def resolve(flags: dict, config_path: Optional[str] = None, environ=None) -> RunConfig:
    """Merge environment, then the config file, then explicit flags."""
    cfg = RunConfig()
    apply_mapping(cfg, env_mapping(environ), "environment")
    if config_path:
        apply_mapping(cfg, load_config_file(config_path), str(config_path))
    apply_mapping(cfg, {k: v for k, v in flags.items() if v is not None}, "flags")
    validate(cfg)
    return cfg


def validate(cfg: RunConfig):
    from .agents import AGENT_NAMES
    from .arena import SCENARIOS

    if cfg.scenario not in SCENARIOS:
        raise ConfigError(f"scenario: unknown scenario {cfg.scenario!r} (choose from {', '.join(SCENARIOS)})")
    for a in cfg.agents:
        if a not in AGENT_NAMES:
            raise ConfigError(f"agents: unknown agent {a!r} (choose from {', '.join(AGENT_NAMES)})")
    if cfg.games < 1:
        raise ConfigError("games: must be >= 1")
    if cfg.history < 0:
        raise ConfigError("history: must be >= 0")
    if cfg.clock not in ("wall", "virtual"):
        raise ConfigError("clock: must be 'wall' or 'virtual'")
    if cfg.predictor not in ("oracle", "uniform", "heuristic", "llm"):
        raise ConfigError(f"predictor: unknown predictor {cfg.predictor!r}")
    if cfg.workers < 1:
        raise ConfigError("workers: must be >= 1")
    for name in ("team_a", "team_b", "usage", "llm.transcript"):
        obj, attr = (cfg.llm, "transcript") if name == "llm.transcript" else (cfg, name)
        v = getattr(obj, attr)
        if v and (name != "team_a" and name != "team_b" or v.endswith(".json")) and not Path(v).exists():
            raise ConfigError(f"{name}: file not found: {v}")
