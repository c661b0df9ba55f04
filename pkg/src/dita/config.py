"""Run configuration: a flat ``section.key = value`` text format with a typed schema.

One assignment per line; ``#`` starts a comment. Values are JSON literals
(``100``, ``1e-3``, ``true``, ``"adam"``, ``["kitchen", "living"]``); a bare
word that is not valid JSON is read as a string. Every key is checked against
``SCHEMA``; unknown keys, wrong types and out-of-range values raise ConfigError.

Example::

    train.episodes_total = 50000
    train.workers = 1
    policy.optimizer = adam
    env.test_presets = ["kitchen", "bathroom"]
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from .env import EpisodeConfig
from .errors import ConfigError
from .world import World, catalog_to_dicts, default_world, make_catalog, make_preset, preset_to_dict, TRAIN_PRESETS


@dataclass(frozen=True)
class Key:
    default: Any
    kind: type | tuple
    check: Callable[[Any], bool] | None = None
    rule: str = ""


def _positive(v):
    return v > 0


def _nonneg(v):
    return v >= 0


def _at_least_one(v):
    return v >= 1


def _one_of(*choices):
    return lambda v: v in choices


_LIST = list
_OPT_LIST = (list, type(None))

SCHEMA: dict[str, Key] = {
    # environment and room sets
    "env.max_steps": Key(100, int, _at_least_one, ">= 1"),
    "env.step_penalty": Key(-0.01, float, lambda v: v <= 0, "<= 0"),
    "env.success_reward": Key(5.0, float, _positive, "> 0"),
    "env.success_distance": Key(1.5, float, _positive, "> 0"),
    "env.catalog": Key(None, _OPT_LIST, rule="list of {name, size, band} or null for the built-in catalog"),
    "env.presets": Key(None, _OPT_LIST, rule="list of preset objects or null for the built-in presets"),
    "env.targets": Key({}, dict, rule="preset id -> list of target names"),
    "env.train_presets": Key(list(TRAIN_PRESETS), _LIST, lambda v: len(v) > 0, "non-empty"),
    "env.test_presets": Key(list(TRAIN_PRESETS), _LIST, lambda v: len(v) > 0, "non-empty"),
    "env.train_rooms": Key(20, int, _at_least_one, ">= 1 rooms per preset"),
    "env.test_rooms": Key(10, int, _at_least_one, ">= 1 rooms per preset"),
    "env.test_seed_offset": Key(1000, int, _nonneg, ">= 0"),
    # feature space
    "perception.d_emb": Key(16, int, _at_least_one, ">= 1"),
    "perception.scene_dim": Key(64, int, _at_least_one, ">= 1"),
    "perception.embedding_seed": Key(0, int, _nonneg, ">= 0"),
    # navigation policy
    "policy.hidden": Key(64, int, _at_least_one, ">= 1"),
    "policy.gcn_dim": Key(8, int, _at_least_one, ">= 1"),
    "policy.gcn_layers": Key(1, int, _one_of(1, 2), "1 or 2"),
    "policy.recurrent": Key(True, bool),
    "policy.done_bias": Key(0.0, float, rule="initial bias of the Done logit"),
    "policy.adjacency": Key(None, _OPT_LIST, rule="N x N list or null for preset co-occurrence"),
    "policy.optimizer": Key("adam", str, _one_of("sgd", "adam"), "sgd or adam"),
    "policy.learning_rate": Key(1e-3, float, _positive, "> 0"),
    "policy.gamma": Key(0.99, float, lambda v: 0 < v <= 1, "in (0, 1]"),
    "policy.entropy": Key(0.05, float, _nonneg, ">= 0"),
    "policy.value_coef": Key(0.5, float, _nonneg, ">= 0"),
    "policy.grad_clip": Key(40.0, float, _nonneg, ">= 0 (0 disables)"),
    "policy.segment": Key(20, int, _at_least_one, ">= 1"),
    # termination judge
    "judge.width": Key(64, int, _at_least_one, ">= 1"),
    "judge.expand": Key(2, int, _at_least_one, ">= 1"),
    "judge.optimizer": Key("adam", str, _one_of("sgd", "adam"), "sgd or adam"),
    "judge.learning_rate": Key(1e-3, float, _positive, "> 0"),
    "judge.focal_gamma": Key(0.7, float, _nonneg, ">= 0"),
    "judge.label_threshold": Key(4.0, float),
    "judge.buffer": Key(64, int, _at_least_one, ">= 1"),
    "judge.collect": Key("every_step", str, _one_of("every_step", "done_only"), "every_step or done_only"),
    "judge.oracle_labels": Key(False, bool),
    # training schedule
    "train.workers": Key(4, int, _at_least_one, ">= 1"),
    "train.mode": Key("async", str, _one_of("async", "sync"), "async or sync"),
    "train.episodes_joint": Key(20000, int, _nonneg, ">= 0"),
    "train.episodes_total": Key(50000, int, _nonneg, ">= 0"),
    "train.seed": Key(0, int, _nonneg, ">= 0"),
    "train.auto_freeze": Key(False, bool),
    "train.auto_freeze_window": Key(100, int, _at_least_one, ">= 1"),
    "train.auto_freeze_tol": Key(0.01, float, _nonneg, ">= 0"),
    # evaluation
    "eval.episodes_per_room": Key(25, int, _at_least_one, ">= 1"),
    "eval.seed": Key(0, int, _nonneg, ">= 0"),
}


def _coerce(name: str, raw: Any) -> Any:
    spec = SCHEMA[name]
    kinds = spec.kind if isinstance(spec.kind, tuple) else (spec.kind,)
    value = raw
    if float in kinds and isinstance(raw, int) and not isinstance(raw, bool):
        value = float(raw)
    ok = any(isinstance(value, k) and not (k is int and isinstance(value, bool)) for k in kinds)
    if not ok:
        names = " or ".join("null" if k is type(None) else k.__name__ for k in kinds)
        raise ConfigError(f"{name}: expected {names}, got {raw!r}")
    if spec.check is not None and value is not None and not spec.check(value):
        raise ConfigError(f"{name}: value {raw!r} out of range ({spec.rule})")
    return value


@dataclass
class RunConfig:
    """Schema-validated key/value configuration with defaults applied."""
    values: dict = field(default_factory=lambda: {k: v.default for k, v in SCHEMA.items()})

    def __getitem__(self, key: str):
        return self.values[key]

    def replace(self, **updates) -> "RunConfig":
        """Copy with ``section__key=value`` overrides applied and validated."""
        merged = dict(self.values)
        for k, v in updates.items():
            name = k.replace("__", ".")
            if name not in SCHEMA:
                raise ConfigError(f"unknown key {name!r}")
            merged[name] = _coerce(name, v)
        out = RunConfig(merged)
        out.validate()
        return out

    def validate(self) -> None:
        if self["train.episodes_joint"] > self["train.episodes_total"]:
            raise ConfigError("train.episodes_joint must not exceed train.episodes_total")
        world = self.world()
        for key in ("env.train_presets", "env.test_presets"):
            for p in self[key]:
                if p not in world.presets:
                    raise ConfigError(f"{key}: unknown preset {p!r}")
                if not world.target_ids(p):
                    raise ConfigError(f"{key}: preset {p!r} has no targets")
        adj = self["policy.adjacency"]
        if adj is not None:
            n = world.n_types
            if len(adj) != n or any(len(r) != n for r in adj):
                raise ConfigError(f"policy.adjacency must be {n} x {n}")

    def world(self) -> World:
        catalog = make_catalog(self["env.catalog"]) if self["env.catalog"] is not None else default_world().catalog
        if self["env.presets"] is not None:
            presets = [make_preset(p) for p in self["env.presets"]]
        else:
            presets = list(default_world().presets.values())
        targets = self["env.targets"]
        ids = {p.preset_id for p in presets}
        for pid, names in targets.items():
            if pid not in ids:
                raise ConfigError(f"env.targets: unknown preset {pid!r}")
        resolved = []
        for p in presets:
            d = preset_to_dict(p)
            if p.preset_id in targets:
                d["targets"] = list(targets[p.preset_id])
            resolved.append(make_preset(d))
        return World(catalog, {p.preset_id: p for p in resolved})

    def env_config(self) -> EpisodeConfig:
        return EpisodeConfig(max_steps=self["env.max_steps"], step_penalty=self["env.step_penalty"],
                             success_reward=self["env.success_reward"],
                             success_distance=self["env.success_distance"])

    def to_text(self) -> str:
        """The resolved configuration in the same format ``parse_config`` reads."""
        lines = []
        section = None
        for k in SCHEMA:
            head = k.split(".")[0]
            if head != section:
                if section is not None:
                    lines.append("")
                section = head
            lines.append(f"{k} = {json.dumps(self.values[k], sort_keys=True)}")
        return "\n".join(lines) + "\n"

    def resolved_world_dict(self) -> dict:
        w = self.world()
        return {"catalog": catalog_to_dicts(w.catalog), "presets": [preset_to_dict(p) for p in w.presets.values()]}


def parse_text(text: str) -> RunConfig:
    values = {k: v.default for k, v in SCHEMA.items()}
    seen = set()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'section.key = value'")
        name, raw = (s.strip() for s in line.split("=", 1))
        if name not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {name!r}")
        if name in seen:
            raise ConfigError(f"line {lineno}: duplicate key {name!r}")
        seen.add(name)
        try:
            parsed = json.loads(raw)
        except json.JSONDecodeError:
            if not raw or any(c in raw for c in "[]{}\",") or " " in raw:
                raise ConfigError(f"line {lineno}: cannot parse value for {name!r}: {raw!r}") from None
            parsed = raw
        values[name] = _coerce(name, parsed)
    cfg = RunConfig(values)
    cfg.validate()
    return cfg


def parse_config(path: str | Path | None) -> RunConfig:
    """Read and validate a configuration file; ``None`` gives all defaults."""
    if path is None:
        cfg = RunConfig()
        cfg.validate()
        return cfg
    return parse_text(Path(path).read_text())


def write_resolved(cfg: RunConfig, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "resolved_config.txt"
    path.write_text(cfg.to_text())
    return path
