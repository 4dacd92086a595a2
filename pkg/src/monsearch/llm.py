"""Chat-completion client, prompt assembly and constrained reply parsing.

The bridge talks to any HTTP endpoint that accepts
``{model, messages: [{role, content}], temperature, max_tokens}`` and answers
either with an OpenAI-style ``choices[0].message.content`` or a top-level
``content``/``text`` field. ``ScriptedChatClient`` and ``StubServer`` replay
JSONL transcripts for offline tests.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import NamedTuple, Optional, Sequence

import httpx

from .core import BOOST_NAMES, SWITCH, Action, DataError, Observation

log = logging.getLogger(__name__)

ENV_ENDPOINT = "MONSEARCH_LLM_ENDPOINT"
ENV_API_KEY = "MONSEARCH_LLM_API_KEY"
ENV_MODEL = "MONSEARCH_LLM_MODEL"


@dataclass(frozen=True)
class ChatRequest:
    model: str
    messages: tuple  # of {"role": str, "content": str}
    temperature: float = 0.0
    max_tokens: int = 64
    timeout: float = 10.0

    def body(self) -> dict:
        return {"model": self.model, "messages": [dict(m) for m in self.messages],
                "temperature": self.temperature, "max_tokens": self.max_tokens}

    def key(self) -> str:
        return hashlib.sha256(json.dumps(self.body(), sort_keys=True).encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ChatReply:
    text: Optional[str] = None
    error: Optional[str] = None
    latency: float = 0.0
    usage: Optional[dict] = None
    status: Optional[int] = None

    def __post_init__(self):
        if (self.text is None) == (self.error is None):
            raise ValueError("a reply carries exactly one of text and error")

    @property
    def ok(self) -> bool:
        return self.text is not None


def _extract_text(doc) -> Optional[str]:
    if isinstance(doc, dict):
        ch = doc.get("choices")
        if isinstance(ch, list) and ch:
            first = ch[0] or {}
            msg = first.get("message") or {}
            if isinstance(msg.get("content"), str):
                return msg["content"]
            if isinstance(first.get("text"), str):
                return first["text"]
        for k in ("content", "text"):
            if isinstance(doc.get(k), str):
                return doc[k]
    return None


class HttpChatClient:
    """POSTs chat requests with one retry on connection failure or 5xx."""

    def __init__(self, endpoint: str, api_key: Optional[str] = None, max_in_flight: int = 4, retries: int = 1,
                 transport: Optional[httpx.BaseTransport] = None):
        self.endpoint = endpoint
        self.api_key = api_key
        self.retries = retries
        self._slots = threading.BoundedSemaphore(max_in_flight)
        self._client = httpx.Client(transport=transport)

    @classmethod
    def from_env(cls, endpoint: Optional[str] = None, **kw) -> "HttpChatClient":
        url = endpoint or os.environ.get(ENV_ENDPOINT)
        if not url:
            raise DataError(f"no LLM endpoint configured (flag or {ENV_ENDPOINT})")
        return cls(url, api_key=os.environ.get(ENV_API_KEY), **kw)

    def close(self):
        self._client.close()

    def complete(self, req: ChatRequest) -> ChatReply:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        t0 = time.monotonic()
        deadline = t0 + req.timeout
        with self._slots:
            attempt = 0
            while True:
                left = deadline - time.monotonic()
                if left <= 0:
                    return ChatReply(error="timeout", latency=time.monotonic() - t0)
                try:
                    r = self._client.post(self.endpoint, json=req.body(), headers=headers, timeout=left)
                except httpx.TimeoutException:
                    # a retry would overrun the caller's budget
                    return ChatReply(error="timeout", latency=time.monotonic() - t0)
                except httpx.TransportError as exc:
                    if attempt < self.retries:
                        attempt += 1
                        continue
                    return ChatReply(error=f"transport: {exc}", latency=time.monotonic() - t0)
                if r.status_code >= 500 and attempt < self.retries:
                    attempt += 1
                    continue
                lat = time.monotonic() - t0
                if not 200 <= r.status_code < 300:
                    return ChatReply(error=f"http {r.status_code}", status=r.status_code, latency=lat)
                try:
                    doc = r.json()
                except ValueError:
                    return ChatReply(error="malformed body", status=r.status_code, latency=lat)
                text = _extract_text(doc)
                if text is None:
                    return ChatReply(error="no text in body", status=r.status_code, latency=lat)
                usage = doc.get("usage") if isinstance(doc, dict) else None
                return ChatReply(text=text, status=r.status_code, latency=lat, usage=usage)


# ---------------------------------------------------------------- transcripts


def load_transcript(path) -> list[dict]:
    """Read a JSONL transcript: one ``{pattern, reply|replies, status?, delay?}`` object per line."""
    entries = []
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except FileNotFoundError:
        raise DataError(f"transcript not found: {path}") from None
    for n, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            e = json.loads(line)
            re.compile(e["pattern"])
        except (ValueError, KeyError, re.error) as exc:
            raise DataError(f"{path}:{n}: bad transcript entry ({exc})") from None
        entries.append(e)
    return entries


class _Script:
    """Pattern matching with per-entry reply sequences (the last reply repeats)."""

    def __init__(self, entries: Sequence[dict]):
        self.entries = [dict(e) for e in entries]
        self.calls = [0] * len(self.entries)
        self.lock = threading.Lock()

    def next(self, prompt: str) -> Optional[dict]:
        with self.lock:
            for i, e in enumerate(self.entries):
                if re.search(e["pattern"], prompt, re.S):
                    seq = e.get("replies")
                    if seq:
                        step = seq[min(self.calls[i], len(seq) - 1)]
                    else:
                        step = {k: e[k] for k in ("reply", "status", "delay") if k in e}
                    self.calls[i] += 1
                    return step
        return None


def _prompt_text(messages) -> str:
    return "\n".join(m["content"] for m in messages)


class ScriptedChatClient:
    """In-process transcript replay; ``delay`` entries count as timeouts when they exceed the request's."""

    def __init__(self, entries: Sequence[dict]):
        self.script = _Script(entries)
        self.calls = 0

    @classmethod
    def from_file(cls, path) -> "ScriptedChatClient":
        return cls(load_transcript(path))

    def complete(self, req: ChatRequest) -> ChatReply:
        self.calls += 1
        step = self.script.next(_prompt_text(req.messages))
        if step is None:
            return ChatReply(error="no scripted reply")
        if step.get("delay", 0) > req.timeout:
            return ChatReply(error="timeout", latency=req.timeout)
        status = step.get("status", 200)
        if not 200 <= status < 300:
            return ChatReply(error=f"http {status}", status=status)
        return ChatReply(text=str(step.get("reply", "")), status=status)


class StubServer:
    """Local HTTP endpoint serving a transcript, for end-to-end client tests."""

    def __init__(self, entries: Sequence[dict], host: str = "127.0.0.1", port: int = 0):
        script = _Script(entries)
        self.requests: list = []
        requests = self.requests

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                n = int(self.headers.get("Content-Length", 0))
                try:
                    body = json.loads(self.rfile.read(n) or b"{}")
                except ValueError:
                    body = {}
                requests.append(body)
                step = script.next(_prompt_text(body.get("messages", []))) or {"status": 404, "reply": ""}
                if step.get("delay"):
                    time.sleep(step["delay"])
                status = step.get("status", 200)
                payload = json.dumps({"choices": [{"message": {"role": "assistant", "content": step.get("reply", "")}}],
                                      "usage": {"completion_tokens": 1}}).encode("utf-8")
                try:
                    self.send_response(status)
                    self.send_header("Content-Type", "application/json")
                    self.send_header("Content-Length", str(len(payload)))
                    self.end_headers()
                    self.wfile.write(payload)
                except (BrokenPipeError, ConnectionResetError):
                    pass

            def log_message(self, *args):
                pass

        self.server = ThreadingHTTPServer((host, port), Handler)
        self.server.daemon_threads = True
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        host, port = self.server.server_address[:2]
        return f"http://{host}:{port}/v1/chat/completions"

    def __enter__(self):
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.server.shutdown()
        self.server.server_close()


class CachedChatClient:
    """Memoizes successful replies by request hash; call ``reset`` between battles."""

    def __init__(self, inner):
        self.inner = inner
        self._cache: dict = {}
        self._lock = threading.Lock()
        self.hits = 0

    def complete(self, req: ChatRequest) -> ChatReply:
        k = req.key()
        with self._lock:
            if k in self._cache:
                self.hits += 1
                return self._cache[k]
        rep = self.inner.complete(req)
        if rep.ok:
            with self._lock:
                self._cache[k] = rep
        return rep

    def reset(self):
        with self._lock:
            self._cache.clear()


# ---------------------------------------------------------------- prompts


ROLE_PREAMBLE = {
    "player": "You are playing a competitive turn-based monster battle. Pick your next action.",
    "opponent": "You are predicting the next action of a player in a competitive turn-based monster battle.",
    "value": "You are judging a position in a competitive turn-based monster battle.",
}
ROLE_INSTRUCTIONS = {
    "player": "Reply with exactly one label from the action list.",
    "opponent": "Reply with exactly one label from the action list: the action this player is most likely to take.",
    "value": "Reply with a score from 0 to 10, where 10 means you are certain to win.",
}
VALUE_CRITERIA = (
    "Checklist:\n"
    "- damage: what your active deals to theirs, and what theirs deals back\n"
    "- speed: who moves first this turn\n"
    "- numbers: pokemon left standing on each side\n"
    "- tempo: needless switches waste turns"
)


def _fmt_boosts(b) -> str:
    parts = [f"{n} {v:+d}" for n, v in zip(BOOST_NAMES, b) if v]
    return f" [{', '.join(parts)}]" if parts else ""


def render_state(own, own_active: int, opp_lines: Sequence[str], turn: int, hazards, weather, clocks=None) -> str:
    lines = [f"Turn {turn}."]
    lines.append("Your team:")
    for i, m in enumerate(own):
        tag = " (active)" if i == own_active else ""
        st = f" {m.status}" if m.status else ""
        extra = " terastallized" if m.tera else ""
        extra += " dynamaxed" if m.dmax > 0 else ""
        hp = 0 if m.hp <= 0 else max(1, round(100 * m.hp / m.max_hp))
        mv = ", ".join(x.name for x in m.spec.moves)
        lines.append(f"- {m.species}{tag}: {hp}% hp{st}{extra}{_fmt_boosts(m.boosts)}; moves: {mv}")
    lines.append("Opponent's team (as seen):")
    lines.extend(opp_lines)
    f = []
    if hazards[0]:
        f.append("hazard on your side")
    if hazards[1]:
        f.append("hazard on the opponent's side")
    if weather:
        f.append(f"weather: {weather}")
    if clocks is not None:
        f.append(f"your clock: {clocks[0]:.0f}s")
    lines.append("Field: " + (", ".join(f) if f else "clear"))
    return "\n".join(lines)


def _opp_lines_from_views(obs: Observation) -> list[str]:
    out = []
    for i, v in enumerate(obs.opp):
        if v is None:
            out.append("- (unrevealed)")
            continue
        tag = " (active)" if i == obs.opp_active else ""
        st = f" {v.status}" if v.status else ""
        mv = ", ".join(v.moves) if v.moves else "none seen"
        it = f"; item: {v.item}" if v.item else ""
        out.append(f"- {v.species}{tag}: {round(100 * v.hp_frac)}% hp{st}{_fmt_boosts(v.boosts)}; moves seen: {mv}{it}")
    return out


def _opp_lines_from_team(team, active) -> list[str]:
    out = []
    for i, m in enumerate(team):
        tag = " (active)" if i == active else ""
        hp = 0 if m.hp <= 0 else max(1, round(100 * m.hp / m.max_hp))
        out.append(f"- {m.species}{tag}: {hp}% hp")
    return out


def render_event(ev: dict, viewer: int) -> str:
    who = "you" if ev.get("side") == viewer else "opponent"
    t = ev["type"]
    if t == "switch":
        return f"{who} sent out {ev['species']}"
    if t == "move":
        return f"{who} used {ev['move']}"
    if t == "damage":
        return f"{who} took damage ({ev['hp']}% left)"
    if t == "heal":
        return f"{who} healed ({ev['hp']}% left)"
    if t == "status":
        return f"{who} became {ev['status']}ed" if ev["status"] != "paralysis" else f"{who} became paralyzed"
    if t == "faint":
        return f"{who} fainted"
    if t == "boost":
        return f"{who} {ev['stat']} {ev['amount']:+d}"
    if t == "tera":
        return f"{who} terastallized into {ev['tera_type']}"
    if t == "win":
        return "the battle ended"
    return f"{who}: {t}"


def menu_for(obs: Observation) -> list[tuple[str, Action]]:
    return [(obs.label(a), a) for a in obs.legal()]


def build_prompt(obs: Observation, ctx, role: str = "player", est=None, menu=None) -> list[dict]:
    """Deterministic chat messages for one decision.

    Sections, in order: strategy, state, history (omitted when the window is
    0), the damage-calculator block, the labelled action menu and the role's
    instructions. ``est`` is the estimated latent state used for the lookahead
    block and for the opponent role's swapped perspective.
    """
    from .lookahead import render_for  # local import: lookahead depends on core only

    if role not in ROLE_PREAMBLE:
        raise ValueError(f"unknown role {role!r}")
    p = obs.viewer
    parts = [f"Team strategy:\n{ctx.strategy or 'none yet'}"]
    if role == "opponent" and est is not None:
        q = 1 - p
        state = render_state(est.teams[q], est.active[q], _opp_lines_from_team(est.teams[p], est.active[p]),
                             obs.turn, (obs.hazards[1], obs.hazards[0]), obs.rules.weather)
    else:
        state = render_state(obs.own, obs.own_active, _opp_lines_from_views(obs), obs.turn, obs.hazards,
                             obs.rules.weather, obs.clocks)
    parts.append(f"Observable state:\n{state}")
    if ctx.history > 0:
        hist = obs.history[-ctx.history:]
        who = p if role != "opponent" else 1 - p
        lines = []
        for k, turn in enumerate(hist):
            evs = "; ".join(render_event(e, who) for e in turn) or "nothing"
            lines.append(f"{k + 1}. {evs}")
        parts.append(f"Battle history (last {ctx.history} turns):\n" + ("\n".join(lines) if lines else "(none)"))
    if est is not None:
        side = p if role != "opponent" else 1 - p
        parts.append("Damage calculator:\n" + render_for(est, side))
    if role != "value":
        labels = [lab for lab, _ in (menu if menu is not None else menu_for(obs))]
        parts.append("Available actions:\n" + "\n".join(f"- {lab}" for lab in labels))
    else:
        parts.append(VALUE_CRITERIA)
    parts.append(ROLE_INSTRUCTIONS[role])
    return [{"role": "system", "content": ROLE_PREAMBLE[role]}, {"role": "user", "content": "\n\n".join(parts)}]


# ---------------------------------------------------------------- parsing


class Rejection(NamedTuple):
    reason: str  # "absent" | "ambiguous"
    candidates: tuple = ()


def _aliases(menu: Sequence[tuple[str, Action]]) -> list[tuple[str, Action]]:
    out = [(lab.lower(), a) for lab, a in menu]
    for lab, a in menu:
        if a.kind == SWITCH:
            out.append((f"switch to slot {a.index + 1}", a))
    return out


def parse_action(text: str, menu: Sequence[tuple[str, Action]]):
    """Map a reply onto exactly one menu entry, or return a ``Rejection``.

    Menu labels (and ``switch to slot N`` aliases, 1-based) found in the reply
    win, ignoring matches nested inside a longer match. Failing that, the reply
    itself may be a unique substring of one label.
    """
    if not menu:
        raise ValueError("parse_action needs a non-empty menu")
    low = (text or "").lower()
    spans = []
    for lab, a in _aliases(menu):
        start = low.find(lab)
        while start >= 0:
            spans.append((start, start + len(lab), a))
            start = low.find(lab, start + 1)
    kept = [s for s in spans if not any(o[0] <= s[0] and s[1] <= o[1] and (o[1] - o[0]) > (s[1] - s[0]) for o in spans)]
    hits = list(dict.fromkeys(a for _, _, a in kept))
    if len(hits) == 1:
        return hits[0]
    if len(hits) > 1:
        return Rejection("ambiguous", tuple(hits))
    core = re.sub(r"[^a-z0-9 ]+", " ", low).strip()
    core = re.sub(r"\s+", " ", core)
    if core:
        subs = list(dict.fromkeys(a for lab, a in _aliases(menu) if core in lab))
        if len(subs) == 1:
            return subs[0]
        if len(subs) > 1:
            return Rejection("ambiguous", tuple(subs))
    return Rejection("absent")


_FRACTION = re.compile(r"(-?\d+(?:\.\d+)?)\s*/\s*(\d+(?:\.\d+)?)")
_PERCENT = re.compile(r"(-?\d+(?:\.\d+)?)\s*%")
_NUMBER = re.compile(r"-?\d+(?:\.\d+)?")


def parse_score(text: str) -> Optional[float]:
    """Normalize "x/y", "x%" or a bare number (0-1, 0-10 or 0-100 scale) to [0, 1]."""
    text = text or ""
    m = _FRACTION.search(text)
    if m:
        x, y = float(m.group(1)), float(m.group(2))
        if y <= 0 or not 0 <= x <= y:
            return None
        return x / y
    m = _PERCENT.search(text)
    if m:
        x = float(m.group(1))
        return x / 100 if 0 <= x <= 100 else None
    m = _NUMBER.search(text)
    if not m:
        return None
    x = float(m.group(0))
    if 0 <= x <= 1:
        return x
    if 1 < x <= 10:
        return x / 10
    if 10 < x <= 100:
        return x / 100
    return None
