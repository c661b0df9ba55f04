import numpy as np
import pytest

from dita.checkpoint import CheckpointData, dumps, loads, read_checkpoint, write_checkpoint
from dita.config import SCHEMA, RunConfig, parse_config, parse_text
from dita.errors import CheckpointVersionError, ConfigError, MalformedCheckpointError


def test_defaults_validate_and_round_trip():
    cfg = parse_config(None)
    assert cfg["train.workers"] == 4 and cfg["train.episodes_joint"] == 20000
    assert cfg["train.episodes_total"] == 50000 and cfg["judge.buffer"] == 64
    assert cfg["judge.focal_gamma"] == 0.7 and cfg["env.max_steps"] == 100
    assert parse_text(cfg.to_text()).values == cfg.values


def test_parse_values_and_comments():
    cfg = parse_text("# comment\ntrain.workers = 2\npolicy.optimizer = sgd\nenv.test_presets = [\"kitchen\"]\n"
                     "judge.learning_rate = 1\n\n")
    assert cfg["train.workers"] == 2 and cfg["policy.optimizer"] == "sgd"
    assert cfg["env.test_presets"] == ["kitchen"]
    assert cfg["judge.learning_rate"] == 1.0 and isinstance(cfg["judge.learning_rate"], float)


@pytest.mark.parametrize("text", [
    "train.nope = 1",
    "train.workers = 0",
    "train.workers = 1.5",
    "train.workers = true",
    "train.episodes_joint = 10\ntrain.episodes_total = 5",
    "train.workers = 1\ntrain.workers = 2",
    "env.test_presets = [\"attic\"]",
    "policy.optimizer = rmsprop",
    "judge.collect = sometimes",
    "train.workers",
    "policy.adjacency = [[1, 0], [0, 1]]",
    "env.targets = {\"attic\": [\"Mug\"]}",
])
def test_invalid_configs_are_rejected(text):
    with pytest.raises(ConfigError):
        parse_text(text)


def test_replace_overrides_and_validates():
    cfg = RunConfig().replace(train__workers=1, policy__hidden=8)
    assert cfg["train.workers"] == 1 and cfg["policy.hidden"] == 8
    with pytest.raises(ConfigError):
        RunConfig().replace(train__bogus=1)


def test_custom_world_from_config():
    text = ('env.catalog = [{"name": "Cup", "size": 0.2, "band": "mid"}, {"name": "Box", "size": 0.5, "band": "low"}]\n'
            'env.presets = [{"id": "cell", "width": 6, "height": 6, "obstacle_density": 0.0, '
            '"pool": ["Cup", "Box"], "targets": ["Cup"]}]\n'
            'env.train_presets = ["cell"]\nenv.test_presets = ["cell"]\nenv.targets = {"cell": ["Box"]}\n')
    cfg = parse_text(text)
    world = cfg.world()
    assert world.n_types == 2 and world.target_ids("cell") == [1]


def test_every_schema_default_passes_its_own_check():
    for name, key in SCHEMA.items():
        if key.check is not None and key.default is not None:
            assert key.check(key.default), name


def _ck():
    rng = np.random.default_rng(0)
    return CheckpointData({"a.W": rng.standard_normal((2, 3)), "a.b": np.array([1e-300, -0.0])},
                          {"h.W": rng.standard_normal((1, 1))}, 3, 4, 10, True, "train.workers = 1\n", {"k": 1})


def test_checkpoint_round_trip_is_exact(tmp_path):
    ck = _ck()
    path = write_checkpoint(ck, tmp_path / "c.json")
    back = read_checkpoint(path)
    for k in ck.policy:
        assert back.policy[k].tobytes() == ck.policy[k].tobytes()
    assert (back.policy_version, back.judge_version, back.episodes, back.judge_frozen) == (3, 4, 10, True)
    assert back.config_text == ck.config_text and back.extra == {"k": 1}
    assert dumps(back) == dumps(ck)


def test_checkpoint_errors():
    text = dumps(_ck())
    with pytest.raises(CheckpointVersionError):
        loads(text.replace('"version":1', '"version":2'))
    with pytest.raises(MalformedCheckpointError):
        loads(text[:-5])
    with pytest.raises(MalformedCheckpointError):
        loads(text.replace('"shape":[2,3]', '"shape":[4,3]'))
    with pytest.raises(MalformedCheckpointError):
        loads('{"format": "dita-checkpoint", "version": 1}')
