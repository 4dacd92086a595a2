import hashlib
import json
import re
import time
from pathlib import Path

import pytest

from monsearch.core import MOVE, SWITCH, TERA, Action, DataError, Rules, lead_events, observe
from monsearch.llm import (
    CachedChatClient, ChatReply, ChatRequest, HttpChatClient, Rejection, ScriptedChatClient, StubServer,
    build_prompt, load_transcript, menu_for, parse_action, parse_score,
)
from monsearch.priors import HeuristicOpponentModel, PromptContext

from util import battle, mon, random_game

SNAPSHOTS = Path(__file__).parent / "data" / "prompt_snapshots.json"


def _obs(history=8):
    a = [mon("dragapult", ["dragondarts", "uturn"]), mon("glimmora", ["powergem"]), mon("garchomp", ["earthquake"])]
    b = [mon("primarina", ["moonblast", "surf"])]
    s = battle(a, b, Rules(tera=True))
    return s, observe(s, 0, [lead_events(s)], history)


def _req(text="hi", timeout=2.0):
    return ChatRequest("m", ({"role": "user", "content": text},), timeout=timeout)


# ---------------------------------------------------------------- prompts


def test_prompt_deterministic():
    s, obs = _obs()
    ctx = PromptContext(strategy="win")
    assert build_prompt(obs, ctx, "player", s) == build_prompt(obs, ctx, "player", s)


def test_zero_history_omits_section():
    s, obs = _obs()
    with_hist = build_prompt(obs, PromptContext(strategy="x", history=3), "player", s)[1]["content"]
    without = build_prompt(obs, PromptContext(strategy="x", history=0), "player", s)[1]["content"]
    assert "Battle history" in with_hist
    assert "Battle history" not in without


def test_prompt_has_ttk_lines_and_menu():
    s, obs = _obs()
    text = build_prompt(obs, PromptContext(strategy="x"), "player", s)[1]["content"]
    assert re.search(r"^dragondarts: \d+ turns to KO opponent's pokemon$", text, re.M)
    assert re.search(r"^moonblast: \d+ turns to KO your pokemon$", text, re.M)
    for label, _ in menu_for(obs):
        assert f"- {label}" in text
    heads = ["Team strategy:", "Observable state:", "Battle history", "Damage calculator:", "Available actions:"]
    pos = [text.index(h) for h in heads]
    assert pos == sorted(pos)


def test_value_role_lists_criteria_not_menu():
    s, obs = _obs()
    text = build_prompt(obs, PromptContext(strategy="x"), "value", s)[1]["content"]
    assert "Available actions" not in text
    assert "Checklist:" in text and "score from 0 to 10" in text


def test_opponent_role_swaps_perspective():
    s, obs = _obs()
    text = build_prompt(obs, PromptContext(strategy="x"), "opponent", s)[1]["content"]
    assert "- primarina (active)" in text.split("Opponent's team")[0]
    assert re.search(r"^moonblast: \d+ turns to KO opponent's pokemon$", text, re.M)


def _curated():
    """20 positions taken from seeded random games, with the heuristic estimate."""
    model = HeuristicOpponentModel()
    out = []
    for seed in range(20):
        states, log = random_game(1000 + seed)
        k = (seed * 7) % max(1, len(states) - 1)
        while states[k].winner is not None:
            k -= 1
        obs = observe(states[k], seed % 2, log[: k + 1], 8)
        out.append((obs, model.estimate_state(obs)))
    return out


def _digest(obs, est):
    ctx = PromptContext(strategy="snapshot", history=4)
    blob = json.dumps([build_prompt(obs, ctx, r, est) for r in ("player", "opponent", "value")], sort_keys=True)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def test_prompt_snapshots():
    cases = _curated()
    got = [_digest(o, e) for o, e in cases]
    assert got == [_digest(o, e) for o, e in cases]
    assert got == json.loads(SNAPSHOTS.read_text())


# ---------------------------------------------------------------- transport


def test_scripted_client_echo():
    c = ScriptedChatClient([{"pattern": "hello", "reply": "world"}])
    rep = c.complete(_req("say hello"))
    assert rep.ok and rep.text == "world"
    assert not c.complete(_req("other")).ok


def test_reply_has_exactly_one_of_text_and_error():
    with pytest.raises(ValueError):
        ChatReply()
    with pytest.raises(ValueError):
        ChatReply(text="a", error="b")


def test_http_stub_echo():
    with StubServer([{"pattern": "ping", "reply": "pong"}]) as srv:
        c = HttpChatClient(srv.url)
        rep = c.complete(_req("ping"))
        c.close()
    assert rep.text == "pong" and rep.status == 200
    assert srv.requests[0]["messages"][0]["content"] == "ping"
    assert set(srv.requests[0]) == {"model", "messages", "temperature", "max_tokens"}


def test_http_timeout_is_error_and_bounded():
    with StubServer([{"pattern": ".", "reply": "late", "delay": 1.5}]) as srv:
        c = HttpChatClient(srv.url)
        t0 = time.monotonic()
        rep = c.complete(_req(timeout=0.3))
        took = time.monotonic() - t0
        c.close()
    assert rep.error == "timeout"
    assert took < 1.0


def test_http_retry_after_500():
    entries = [{"pattern": ".", "replies": [{"status": 500, "reply": ""}, {"reply": "ok"}]}]
    with StubServer(entries) as srv:
        c = HttpChatClient(srv.url)
        rep = c.complete(_req())
        c.close()
    assert rep.text == "ok"
    assert len(srv.requests) == 2


def test_http_gives_up_after_one_retry():
    with StubServer([{"pattern": ".", "status": 503, "reply": ""}]) as srv:
        c = HttpChatClient(srv.url)
        rep = c.complete(_req())
        c.close()
    assert not rep.ok and rep.status == 503
    assert len(srv.requests) == 2


def test_http_no_retry_on_4xx():
    with StubServer([{"pattern": ".", "status": 400, "reply": ""}]) as srv:
        c = HttpChatClient(srv.url)
        rep = c.complete(_req())
        c.close()
    assert rep.error == "http 400" and len(srv.requests) == 1


def test_unreachable_endpoint_is_error_reply():
    c = HttpChatClient("http://127.0.0.1:9/v1")
    rep = c.complete(_req(timeout=1.0))
    c.close()
    assert not rep.ok


def test_cache_hits_and_reset():
    inner = ScriptedChatClient([{"pattern": ".", "reply": "x"}])
    c = CachedChatClient(inner)
    c.complete(_req("a"))
    c.complete(_req("a"))
    c.complete(_req("b"))
    assert inner.calls == 2 and c.hits == 1
    c.reset()
    c.complete(_req("a"))
    assert inner.calls == 3


def test_transcript_loading(tmp_path):
    p = tmp_path / "t.jsonl"
    p.write_text('{"pattern": "a", "reply": "b"}\n\n{"pattern": "c", "replies": [{"reply": "d"}]}\n')
    assert len(load_transcript(p)) == 2
    p.write_text('{"pattern": "(", "reply": "b"}\n')
    with pytest.raises(DataError):
        load_transcript(p)
    with pytest.raises(DataError):
        load_transcript(tmp_path / "missing.jsonl")


# ---------------------------------------------------------------- parsing


def test_parse_label_match():
    _, obs = _obs()
    menu = menu_for(obs)
    assert parse_action("I choose: switch glimmora", menu) == Action(SWITCH, 1, 0)
    assert parse_action("MOVE UTURN please", menu) == Action(MOVE, 1, 0)


def test_parse_longest_label_wins():
    _, obs = _obs()
    # "terastallize dragondarts" contains no other label, "move dragondarts" is a different label
    assert parse_action("terastallize dragondarts", menu_for(obs)) == Action(TERA, 0, 0)


def test_parse_absent_and_ambiguous():
    _, obs = _obs()
    menu = menu_for(obs)
    assert parse_action("no idea", menu) == Rejection("absent")
    r = parse_action("move uturn or switch garchomp", menu)
    assert isinstance(r, Rejection) and r.reason == "ambiguous"
    assert parse_action("dragondarts", menu).reason == "ambiguous"


def test_parse_slot_alias():
    _, obs = _obs()
    assert parse_action("switch to slot 3", menu_for(obs)) == Action(SWITCH, 2, 0)


def test_parse_unique_substring():
    _, obs = _obs()
    menu = menu_for(obs)
    assert parse_action("glimmora", menu) == Action(SWITCH, 1, 0)
    # plain and tera variants both carry the move name
    assert parse_action("uturn", menu).reason == "ambiguous"


def test_parse_output_always_in_menu():
    _, obs = _obs()
    menu = menu_for(obs)
    acts = {a for _, a in menu}
    words = ["move", "switch", "uturn", "glimmora", "garchomp", "terastallize", "slot 2", "slot 9", "dragondarts", "x"]
    import itertools
    for n in (1, 2, 3):
        for combo in itertools.permutations(words, n):
            r = parse_action(" ".join(combo), menu)
            assert isinstance(r, Rejection) or r in acts


def test_parse_needs_menu():
    with pytest.raises(ValueError):
        parse_action("x", [])


@pytest.mark.parametrize("text,want", [
    ("7/10", 0.7), ("score: 3 / 4", 0.75), ("65%", 0.65), ("0.4", 0.4), ("8", 0.8), ("42", 0.42),
    ("none", None), ("11/10", None), ("250", None),
])
def test_parse_score(text, want):
    got = parse_score(text)
    assert got == (pytest.approx(want) if want is not None else None)
