"""Held-out evaluation, agent comparison and trajectory dumps.

Every agent sees the same list of (room, target, start seed) episodes and the
same per-episode random stream, so differences come from the agents alone.
"""
from __future__ import annotations

import numpy as np

from .agent import EpisodeSpec, Model, run_episode, run_random_episode
from .config import RunConfig
from .metrics import MetricsReport, split_report
from .train import present_targets, room_set

AGENTS = ("random", "ablated", "dita")
TRAJECTORY_SCHEMA = "dita-trajectory"
TRAJECTORY_VERSION = 1


def eval_specs(cfg: RunConfig, n_episodes: int | None = None) -> list[EpisodeSpec]:
    """Episodes on the held-out rooms, cycling over rooms so any prefix is spread evenly."""
    world = cfg.world()
    rooms = room_set(world, cfg["env.test_presets"], cfg["env.test_rooms"], cfg["env.test_seed_offset"])
    n = len(rooms) * cfg["eval.episodes_per_room"] if n_episodes is None else n_episodes
    rng = np.random.default_rng([cfg["eval.seed"], 0xE7A1])
    specs = []
    for k in range(n):
        room = rooms[k % len(rooms)]
        targets = present_targets(world, room)
        specs.append(EpisodeSpec(room, int(targets[int(rng.integers(len(targets)))]), int(rng.integers(2**31))))
    return specs


def _episode_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(index), 0xA9E])


def run_agent(agent: str, model: Model | None, specs, cfg: RunConfig, traces: list | None = None,
              first_index: int = 0) -> list:
    if agent not in AGENTS:
        raise ValueError(f"unknown agent {agent!r}")
    env_config = cfg.env_config()
    records = []
    for i, spec in enumerate(specs):
        rng = _episode_rng(cfg["eval.seed"], first_index + i)
        trace = [] if traces is not None else None
        if agent == "random":
            rec = run_random_episode(spec, env_config, rng, trace)
        else:
            rec = run_episode(model, spec, env_config, rng, gate=agent == "dita", trace=trace)
        records.append(rec)
        if traces is not None:
            traces.append(trace)
    return records


def evaluate(model: Model, cfg: RunConfig, n_episodes: int | None = None) -> dict[str, MetricsReport]:
    """The same checkpoint with the judge gate off and on."""
    specs = eval_specs(cfg, n_episodes)
    return {"gate_off": split_report(run_agent("ablated", model, specs, cfg)),
            "gate_on": split_report(run_agent("dita", model, specs, cfg))}


def compare(model: Model, cfg: RunConfig, n_episodes: int | None = None,
            agents=AGENTS) -> tuple[dict[str, MetricsReport], dict[str, list]]:
    """Reports and raw records per agent over one shared episode list."""
    specs = eval_specs(cfg, n_episodes)
    records = {a: run_agent(a, model, specs, cfg) for a in agents}
    return {a: split_report(r) for a, r in records.items()}, records


def comparison_table(reports: dict[str, MetricsReport]) -> list[dict]:
    rows = []
    for agent, rep in reports.items():
        for filt, sub in rep.sub.items():
            rows.append({"agent": agent, "filter": filt, "n": sub.n, "sr": sub.sr, "spl": sub.spl})
    return rows


def dump_episode(model: Model | None, cfg: RunConfig, index: int = 0, agent: str = "dita") -> dict:
    """Per-step record of one evaluation episode."""
    specs = eval_specs(cfg, index + 1)
    spec = specs[index]
    traces: list = []
    rec = run_agent(agent, model, [spec], cfg, traces, first_index=index)[0]
    return {
        "schema": TRAJECTORY_SCHEMA,
        "version": TRAJECTORY_VERSION,
        "agent": agent,
        "room": f"{spec.room.room_preset_id}/{spec.room.seed}",
        "target_type": spec.target_type,
        "start_seed": spec.start_seed,
        "success": rec.success,
        "actions_taken": rec.actions_taken,
        "optimal_actions": rec.optimal_actions,
        "steps": traces[0],
    }
