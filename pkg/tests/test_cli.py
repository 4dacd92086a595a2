import csv
import io
import json

import pytest

from monsearch import cli
from monsearch.config import ConfigError, env_mapping, resolve
from monsearch.replay import loads_native


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for k in list(env_mapping()) + ["llm_endpoint", "llm_model"]:
        monkeypatch.delenv("MONSEARCH_" + k.upper(), raising=False)


def run(*argv):
    return cli.main(list(argv))


def test_battle_writes_deterministic_replay(tmp_path, capsys):
    outs = []
    for i in range(2):
        d = tmp_path / f"run{i}"
        code = run("battle", "--seed", "4", "--agents", "abyssal,random", "--out", str(d))
        assert code == cli.EXIT_OK
        outs.append((d / "battle.jsonl").read_bytes())
    assert outs[0] == outs[1]
    rec = loads_native(outs[0].decode())
    result = json.loads((tmp_path / "run0" / "result.json").read_text())
    assert result["winner"] == rec.winner and result["turns"] == rec.turns
    assert "winner:" in capsys.readouterr().out


def test_arena_csv_has_one_row_per_agent(tmp_path, capsys):
    code = run("arena", "--seed", "1", "--agents", "random,max_power,one_step", "--games", "2",
               "--scenario", "1v1", "--out", str(tmp_path), "--save-replays")
    assert code == cli.EXIT_OK
    rows = list(csv.DictReader(io.StringIO((tmp_path / "arena.csv").read_text())))
    assert len(rows) == 3 and list(rows[0]) == ["agent", "winrate_vs_ref", "elo", "avg_turns"]
    assert len(list((tmp_path / "replays").iterdir())) == 6
    assert json.loads((tmp_path / "matrix.json").read_text())["agents"] == ["random", "max_power", "one_step"]


def test_missing_seed_is_config_error(tmp_path, capsys):
    assert run("battle", "--out", str(tmp_path)) == cli.EXIT_CONFIG
    assert "seed" in capsys.readouterr().err


def test_unknown_flag_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        run("battle", "--sed", "1")
    assert exc.value.code == cli.EXIT_CONFIG


def test_help_lists_flags(capsys):
    with pytest.raises(SystemExit) as exc:
        run("arena", "--help")
    assert exc.value.code == 0
    text = capsys.readouterr().out
    for flag in ("--config", "--seed", "--scenario", "--agents", "--games", "--llm-endpoint", "--out"):
        assert flag in text


def test_unknown_agent_and_scenario(tmp_path, capsys):
    assert run("battle", "--seed", "1", "--agents", "oracle,random", "--out", str(tmp_path)) == cli.EXIT_CONFIG
    assert "agents" in capsys.readouterr().err
    assert run("battle", "--seed", "1", "--scenario", "gen1", "--out", str(tmp_path)) == cli.EXIT_CONFIG
    assert "scenario" in capsys.readouterr().err


def test_llm_without_endpoint_is_config_error(tmp_path, capsys):
    code = run("battle", "--seed", "1", "--agents", "llm_planner,random", "--out", str(tmp_path))
    assert code == cli.EXIT_CONFIG
    assert "llm.endpoint" in capsys.readouterr().err


def test_empty_replay_dir_is_data_error(tmp_path, capsys):
    (tmp_path / "in").mkdir()
    assert run("ingest", "--replays", str(tmp_path / "in"), "--out", str(tmp_path / "o")) == cli.EXIT_DATA


def test_runtime_failure_exits_4(tmp_path, monkeypatch, capsys):
    def boom(cfg, ns):
        raise RuntimeError("engine fault")
    monkeypatch.setitem(cli.COMMANDS, "battle", boom)
    assert run("battle", "--seed", "1") == cli.EXIT_RUNTIME
    assert "engine fault" in capsys.readouterr().err


def test_ingest_then_predict(tmp_path, capsys):
    rdir = tmp_path / "replays"
    assert run("arena", "--seed", "2", "--agents", "random,abyssal", "--games", "3", "--scenario", "gen8random",
               "--out", str(tmp_path / "a"), "--save-replays") == 0
    (tmp_path / "a" / "replays").rename(rdir)
    assert run("ingest", "--replays", str(rdir), "--out", str(tmp_path / "i")) == 0
    assert (tmp_path / "i" / "usage.json").exists()
    assert run("predict", "--replays", str(rdir), "--predictor", "oracle", "--usage",
               str(tmp_path / "i" / "usage.json"), "--out", str(tmp_path / "p")) == 0
    rows = list(csv.DictReader(io.StringIO((tmp_path / "p" / "prediction.csv").read_text())))
    # from the opponent's side the true move may not be among the estimated options
    assert [float(r["top1"]) for r in rows if r["role"] == "player"] == [1.0]


def test_predict_calibration_corpus(tmp_path, capsys):
    assert run("predict", "--seed", "0", "--games", "5", "--predictor", "uniform", "--out", str(tmp_path)) == 0
    assert "decisions: 10" in capsys.readouterr().out


def test_puzzle_command(tmp_path, capsys):
    assert run("puzzle", "--seed", "3", "--games", "3", "--agents", "one_step", "--out", str(tmp_path)) == 0
    assert len((tmp_path / "puzzles.jsonl").read_text().splitlines()) == 3
    rows = list(csv.DictReader(io.StringIO((tmp_path / "puzzle_results.csv").read_text())))
    assert [r["opponent"] for r in rows] == ["abyssal", "random"]


def test_play_reprompts(tmp_path):
    cfg = resolve({"seed": 5, "scenario": "1v1", "agents": "random"})
    answers = iter(["", "zz", "0"] + ["1"] * 500)
    shown = []
    assert cli.cmd_play(cfg, None, input_fn=lambda p: next(answers), output=shown.append) == 0
    assert sum("invalid choice" in s for s in shown) == 3
    assert any("after" in s and "turns" in s for s in shown)


# ---------------------------------------------------------------- configuration


def test_precedence_flags_over_file_over_env(tmp_path):
    f = tmp_path / "run.yaml"
    f.write_text("seed: 2\nscenario: gen8random\ngames: 7\nsearch:\n  depth: 3\n")
    env = {"MONSEARCH_SEED": "1", "MONSEARCH_SCENARIO": "1v1", "MONSEARCH_GAMES": "9", "MONSEARCH_OUT": "envout"}
    cfg = resolve({"seed": 3}, str(f), environ=env)
    assert cfg.seed == 3 and cfg.scenario == "gen8random" and cfg.games == 7 and cfg.out == "envout"
    assert cfg.search.depth == 3
    assert resolve({}, None, environ=env).seed == 1


def test_config_errors_name_the_field(tmp_path):
    bad = tmp_path / "bad.yaml"
    for text, field in (("seed: x\n", "seed"), ("colour: red\n", "colour"), ("search:\n  depth: 0\n", "search"),
                        ("providers:\n  value: oracle\n", "providers.value"), ("- 1\n", "top level")):
        bad.write_text(text)
        with pytest.raises(ConfigError, match=field):
            resolve({}, str(bad), environ={})
    with pytest.raises(ConfigError, match="not found"):
        resolve({}, str(tmp_path / "nope.yaml"), environ={})


def test_json_config_accepted(tmp_path):
    f = tmp_path / "run.json"
    f.write_text(json.dumps({"agents": ["planner", "random"], "providers": {"value": "llm"}}))
    cfg = resolve({}, str(f), environ={})
    assert cfg.agents == ["planner", "random"] and cfg.providers["value"] == "llm"
