import csv
import json

import pytest

from dita.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, EXIT_USAGE, run
from dita.evaluate import compare, dump_episode, eval_specs, evaluate, run_agent
from dita.train import train

from test_train import small_cfg

SMALL = ["--set", 'env.train_presets=["bathroom"]', "--set", 'env.test_presets=["bathroom"]',
         "--set", "env.train_rooms=2", "--set", "env.test_rooms=2", "--set", "policy.hidden=8",
         "--set", "judge.width=4", "--set", "judge.buffer=8", "--set", "train.workers=1",
         "--set", "train.episodes_joint=5", "--set", "train.episodes_total=8"]


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert run(["train", "--out", str(out), "--progress", "0", *SMALL]) == EXIT_OK
    return out


def test_eval_specs_cycle_rooms_and_are_seeded():
    cfg = small_cfg()
    specs = eval_specs(cfg)
    assert len(specs) == 2 * 25
    assert specs[0].room is not specs[1].room and specs[0].room.same_layout(specs[2].room)
    assert [(s.target_type, s.start_seed) for s in eval_specs(cfg)] == [(s.target_type, s.start_seed) for s in specs]


def test_agents_share_episodes_and_are_deterministic():
    cfg = small_cfg()
    res = train(cfg)
    specs = eval_specs(cfg, 6)
    a = run_agent("dita", res.model, specs, cfg)
    b = run_agent("dita", res.model, specs, cfg)
    assert a == b
    r = run_agent("random", None, specs, cfg)
    assert [x.optimal_actions for x in r] == [x.optimal_actions for x in a]
    reports = evaluate(res.model, cfg, 6)
    assert set(reports) == {"gate_off", "gate_on"} and reports["gate_on"].n == 6
    reports, records = compare(res.model, cfg, 4)
    assert set(reports) == {"random", "ablated", "dita"}


def test_dump_episode_schema():
    cfg = small_cfg()
    res = train(cfg)
    doc = dump_episode(res.model, cfg, 3, "dita")
    assert doc["schema"] == "dita-trajectory" and doc["version"] == 1
    assert len(doc["steps"]) == doc["actions_taken"]
    step = doc["steps"][0]
    assert set(step) == {"t", "pose", "action", "rule_fired", "p_con", "judge", "reward", "effective"}
    assert dump_episode(res.model, cfg, 3, "dita") == doc


def test_cli_train_writes_outputs(trained):
    for name in ("checkpoint.json", "train_log.csv", "judge_log.csv", "resolved_config.txt"):
        assert (trained / name).exists()


def test_cli_eval_compare_and_dump(trained, tmp_path):
    ck = str(trained / "checkpoint.json")
    assert run(["eval", "--checkpoint", ck, "--out", str(tmp_path / "e"), "--episodes", "4"]) == EXIT_OK
    for gate in ("gate_off", "gate_on"):
        with open(tmp_path / "e" / f"metrics_{gate}.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert list(rows[0]) == ["filter", "n", "sr", "spl"] and [r["filter"] for r in rows] == ["all", "L>=5"]
    assert run(["compare", "--checkpoint", ck, "--out", str(tmp_path / "c"), "--episodes", "4"]) == EXIT_OK
    assert len(json.loads((tmp_path / "c" / "compare.json").read_text())) == 3
    assert run(["dump-episode", "--checkpoint", ck, "--out", str(tmp_path / "d"), "--index", "1"]) == EXIT_OK
    assert json.loads((tmp_path / "d" / "episode_1_dita.json").read_text())["schema"] == "dita-trajectory"
    assert run(["dump-episode", "--agent", "random", "--out", str(tmp_path / "d"), *SMALL]) == EXIT_OK


def test_cli_gen_rooms(tmp_path):
    assert run(["gen-rooms", "--out", str(tmp_path), *SMALL]) == EXIT_OK
    doc = json.loads((tmp_path / "rooms.json").read_text())
    assert len(doc["train"]) == 2 and len(doc["test"]) == 2


def test_cli_exit_codes(tmp_path, trained):
    assert run([]) == EXIT_USAGE
    assert run(["train", "--bogus"]) == EXIT_USAGE
    assert run(["eval", "--out", str(tmp_path)]) == EXIT_USAGE  # missing --checkpoint
    assert run(["train", "--out", str(tmp_path), "--set", "train.workers=0"]) == EXIT_CONFIG
    bad = tmp_path / "bad.cfg"
    bad.write_text("train.unknown = 1\n")
    assert run(["train", "--config", str(bad), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert run(["eval", "--checkpoint", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == EXIT_IO
    corrupt = tmp_path / "corrupt.json"
    corrupt.write_text("{not json")
    assert run(["eval", "--checkpoint", str(corrupt), "--out", str(tmp_path)]) == EXIT_IO
    assert run(["--help"]) == EXIT_OK
