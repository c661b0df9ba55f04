"""Reward-supervised parallel training.

Workers repeatedly snapshot the shared policy parameters, roll out one
segment in train mode, and submit actor-critic gradients. The same rewards
label every collected effective state for the judge: while the global episode
count is below ``episodes_joint`` those samples fill a batch buffer and each
full batch takes one judge optimizer step. After that the judge is frozen.

With one worker, or in ``sync`` mode, everything runs in the calling thread
in a fixed order and a run is reproducible bit for bit. ``async`` mode with
several workers uses threads that apply gradients as they arrive.
"""
from __future__ import annotations

import csv
import logging
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .agent import EpisodeRunner, EpisodeSpec, Model
from .checkpoint import CheckpointData, read_checkpoint, write_checkpoint
from .config import RunConfig, parse_text, write_resolved
from .control import ControlMode
from .env import GridRoom, generate_room
from .errors import ConfigError, MalformedCheckpointError, ShapeError
from .judge import NEGATIVE, POSITIVE, BatchBuffer, JudgeNet, batch_loss_and_grads, label_from_reward
from .metrics import ema_smooth
from .perception import Embeddings
from .policy import A2CCoefficients, PolicyNet, a2c_update, cooccurrence_adjacency
from .world import World

log = logging.getLogger(__name__)

TRAIN_LOG_FIELDS = ["episode", "worker", "steps", "return", "success", "judge_loss", "judge_pos_frac"]
JUDGE_LOG_FIELDS = ["batch", "episode", "loss", "pos_frac", "labels"]


@dataclass(frozen=True)
class TrainConfig:
    worker_count: int = 4
    episodes_joint: int = 20000
    episodes_total: int = 50000
    mode: str = "async"
    seed: int = 0
    segment: int = 20
    grad_clip: float = 40.0
    coef: A2CCoefficients = A2CCoefficients()
    policy_optimizer: str = "adam"
    policy_lr: float = 1e-3
    judge_optimizer: str = "adam"
    judge_lr: float = 1e-3
    focal_gamma: float = 0.7
    label_threshold: float = 4.0
    buffer_capacity: int = 64
    collect: str = "every_step"
    oracle_labels: bool = False
    auto_freeze: bool = False
    auto_freeze_window: int = 100
    auto_freeze_tol: float = 0.01

    def __post_init__(self):
        if self.worker_count < 1:
            raise ConfigError("worker_count must be >= 1")
        if not 0 <= self.episodes_joint <= self.episodes_total:
            raise ConfigError("need 0 <= episodes_joint <= episodes_total")
        if self.mode not in ("async", "sync"):
            raise ConfigError(f"unknown training mode {self.mode!r}")
        if self.collect not in ("every_step", "done_only"):
            raise ConfigError(f"unknown judge collection mode {self.collect!r}")

    @classmethod
    def from_run_config(cls, cfg: RunConfig) -> "TrainConfig":
        return cls(
            worker_count=cfg["train.workers"], episodes_joint=cfg["train.episodes_joint"],
            episodes_total=cfg["train.episodes_total"], mode=cfg["train.mode"], seed=cfg["train.seed"],
            segment=cfg["policy.segment"], grad_clip=cfg["policy.grad_clip"],
            coef=A2CCoefficients(cfg["policy.gamma"], cfg["policy.entropy"], cfg["policy.value_coef"]),
            policy_optimizer=cfg["policy.optimizer"], policy_lr=cfg["policy.learning_rate"],
            judge_optimizer=cfg["judge.optimizer"], judge_lr=cfg["judge.learning_rate"],
            focal_gamma=cfg["judge.focal_gamma"], label_threshold=cfg["judge.label_threshold"],
            buffer_capacity=cfg["judge.buffer"], collect=cfg["judge.collect"],
            oracle_labels=cfg["judge.oracle_labels"], auto_freeze=cfg["train.auto_freeze"],
            auto_freeze_window=cfg["train.auto_freeze_window"], auto_freeze_tol=cfg["train.auto_freeze_tol"],
        )


# -- model and episode construction ----------------------------------------------

def build_networks(cfg: RunConfig, world: World) -> tuple[Embeddings, PolicyNet, JudgeNet]:
    emb = Embeddings(world.n_types, cfg["perception.d_emb"], cfg["perception.embedding_seed"],
                     cfg["perception.scene_dim"])
    if cfg["policy.adjacency"] is None:
        A = cooccurrence_adjacency(world)
    else:
        A = nn.row_normalize(np.array(cfg["policy.adjacency"], dtype=float))
    policy = PolicyNet(world.n_types, emb.d_emb, A, hidden=cfg["policy.hidden"], gcn_dim=cfg["policy.gcn_dim"],
                       gcn_layers=cfg["policy.gcn_layers"], recurrent=cfg["policy.recurrent"],
                       done_bias=cfg["policy.done_bias"])
    judge = JudgeNet(scene_dim=emb.scene_dim, emb_dim=emb.d_emb, width=cfg["judge.width"],
                     expand=cfg["judge.expand"])
    return emb, policy, judge


def build_model(cfg: RunConfig, seed: int) -> Model:
    """Freshly initialized networks for ``cfg``; initialization depends only on ``seed``."""
    emb, policy, judge = build_networks(cfg, cfg.world())
    rng = np.random.default_rng([int(seed), 0x1417])
    return Model(emb, policy, judge, policy.init(rng), judge.init(rng))


def room_set(world: World, presets, n_rooms: int, seed_offset: int = 0) -> list[GridRoom]:
    return [generate_room(p, seed_offset + i, world) for p in presets for i in range(n_rooms)]


def present_targets(world: World, room: GridRoom) -> list[int]:
    return [t for t in world.target_ids(room.room_preset_id) if room.instances_of(t)]


def sample_episode(world: World, rooms: list[GridRoom], rng: np.random.Generator) -> EpisodeSpec:
    room = rooms[int(rng.integers(len(rooms)))]
    targets = present_targets(world, room)
    return EpisodeSpec(room, int(targets[int(rng.integers(len(targets)))]), int(rng.integers(2**31)))


# -- shared parameters -----------------------------------------------------------

class SharedParams:
    """Authoritative parameters; snapshots and updates are serialized by one lock."""

    def __init__(self, policy: dict, judge: dict, policy_optimizer=None, judge_optimizer=None,
                 grad_clip: float = 0.0):
        self.policy = policy
        self.judge = judge
        self.policy_optimizer = policy_optimizer
        self.judge_optimizer = judge_optimizer
        self.grad_clip = grad_clip
        self.policy_version = 0
        self.judge_version = 0
        self.judge_frozen = False
        self._lock = threading.Lock()

    def snapshot(self) -> dict:
        with self._lock:
            return nn.clone(self.policy)

    def judge_snapshot(self) -> dict:
        with self._lock:
            return nn.clone(self.judge)

    def apply_policy_gradients(self, grads: dict) -> int:
        if self.grad_clip > 0:
            grads = nn.clip_by_global_norm(grads, self.grad_clip)
        with self._lock:
            self.policy_optimizer.step(self.policy, grads)
            self.policy_version += 1
            return self.policy_version

    def apply_judge_batch(self, net: JudgeNet, batch, gamma: float) -> float | None:
        """One judge step on ``batch``; returns its pre-update loss, or None once frozen."""
        with self._lock:
            if self.judge_frozen:
                return None
            loss, grads = batch_loss_and_grads(net, self.judge, batch, gamma)
            self.judge_optimizer.step(self.judge, grads)
            self.judge_version += 1
            return loss

    def freeze_judge(self) -> None:
        with self._lock:
            self.judge_frozen = True

    def to_checkpoint(self, config_text: str = "", episodes: int = 0, extra: dict | None = None) -> CheckpointData:
        with self._lock:
            return CheckpointData(nn.clone(self.policy), nn.clone(self.judge), self.policy_version,
                                  self.judge_version, episodes, self.judge_frozen, config_text, extra or {})

    @classmethod
    def from_checkpoint(cls, ck: CheckpointData) -> "SharedParams":
        sp = cls(ck.policy, ck.judge)
        sp.policy_version, sp.judge_version, sp.judge_frozen = ck.policy_version, ck.judge_version, ck.judge_frozen
        return sp


def save_checkpoint(shared: SharedParams, path, config_text: str = "", episodes: int = 0,
                    extra: dict | None = None) -> Path:
    return write_checkpoint(shared.to_checkpoint(config_text, episodes, extra), path)


def load_checkpoint(path) -> SharedParams:
    return SharedParams.from_checkpoint(read_checkpoint(path))


def model_from_checkpoint(path) -> tuple[Model, RunConfig]:
    """Rebuild the networks described by the checkpoint's stored configuration."""
    ck = read_checkpoint(path)
    cfg = parse_text(ck.config_text)
    emb, policy, judge = build_networks(cfg, cfg.world())
    for name, params, net_params in (("policy", ck.policy, policy.init(np.random.default_rng(0))),
                                     ("judge", ck.judge, judge.init(np.random.default_rng(0)))):
        try:
            nn.check_congruent(net_params, params)
        except ShapeError as exc:
            raise MalformedCheckpointError(f"{name} tensors do not match the stored configuration: {exc}") from None
    return Model(emb, policy, judge, ck.policy, ck.judge), cfg


# -- training loop ---------------------------------------------------------------

@dataclass
class _Worker:
    index: int
    runner: EpisodeRunner
    rng: np.random.Generator
    active: bool = False
    judge_losses: list = field(default_factory=list)
    judge_pos: list = field(default_factory=list)


@dataclass
class TrainResult:
    shared: SharedParams
    model: Model
    log_rows: list
    judge_rows: list
    freeze_episode: int | None
    config_text: str


class Trainer:
    def __init__(self, cfg: RunConfig, progress_every: int = 0):
        self.cfg = cfg
        self.tc = TrainConfig.from_run_config(cfg)
        self.world = cfg.world()
        self.model = build_model(cfg, self.tc.seed)
        self.rooms = room_set(self.world, cfg["env.train_presets"], cfg["env.train_rooms"])
        for room in self.rooms:
            if not present_targets(self.world, room):
                raise ConfigError(f"room {room.room_preset_id}/{room.seed} contains none of its targets")
        tc = self.tc
        self.shared = SharedParams(self.model.policy_params, self.model.judge_params,
                                   nn.make_optimizer(tc.policy_optimizer, tc.policy_lr),
                                   nn.make_optimizer(tc.judge_optimizer, tc.judge_lr), tc.grad_clip)
        if tc.episodes_joint == 0:
            self.shared.freeze_judge()
        self.buffer = BatchBuffer(tc.buffer_capacity)
        self.env_config = cfg.env_config()
        streams = np.random.SeedSequence([tc.seed, 0x7EA1]).spawn(tc.worker_count)
        self.workers = []
        for i, ss in enumerate(streams):
            ep_ss, act_ss = ss.spawn(2)
            runner = EpisodeRunner(self.model, self.env_config, np.random.default_rng(act_ss))
            self.workers.append(_Worker(i, runner, np.random.default_rng(ep_ss)))
        self.claimed = 0
        self.completed = 0
        self.log_rows: list[dict] = []
        self.judge_rows: list[dict] = []
        self.judge_losses: list[float] = []
        self.freeze_episode: int | None = 0 if tc.episodes_joint == 0 else None
        self.progress_every = progress_every
        self._count_lock = threading.Lock()

    # episode bookkeeping

    def _claim(self) -> bool:
        with self._count_lock:
            if self.claimed >= self.tc.episodes_total:
                return False
            self.claimed += 1
            return True

    def _start(self, w: _Worker) -> bool:
        if not self._claim():
            w.active = False
            return False
        w.runner.begin(sample_episode(self.world, self.rooms, w.rng))
        w.active = True
        w.judge_losses, w.judge_pos = [], []
        return True

    def _finish(self, w: _Worker) -> None:
        r = w.runner
        with self._count_lock:
            row = {"episode": self.completed, "worker": w.index, "steps": r.steps,
                   "return": round(r.episode_return, 10), "success": int(r.success),
                   "judge_loss": float(np.mean(w.judge_losses)) if w.judge_losses else "",
                   "judge_pos_frac": float(np.mean(w.judge_pos)) if w.judge_pos else ""}
            self.log_rows.append(row)
            self.completed += 1
            done = self.completed
        if done == self.tc.episodes_joint and not self.shared.judge_frozen:
            self._freeze(done)
        if self.progress_every and done % self.progress_every == 0:
            recent = self.log_rows[-self.progress_every:]
            log.info("episode %d: success %.3f, mean steps %.1f, judge batches %d", done,
                     np.mean([x["success"] for x in recent]), np.mean([x["steps"] for x in recent]),
                     len(self.judge_rows))
        w.active = False

    def _freeze(self, episode: int) -> None:
        self.shared.freeze_judge()
        self.freeze_episode = episode
        log.info("judge frozen after %d episodes", episode)

    # judge pipeline

    def _label(self, step) -> int:
        if self.tc.oracle_labels:
            return POSITIVE if step.oracle_positive else NEGATIVE
        return label_from_reward(step.reward, self.tc.label_threshold)

    def _collect(self, w: _Worker, traj) -> None:
        for s in traj.steps:
            if self.shared.judge_frozen:
                return
            if not s.state_emb.effective:
                continue
            if self.tc.collect == "done_only" and not s.done_sampled:
                continue
            batch = self.buffer.push(s.state_emb, self._label(s))
            if batch is None:
                continue
            loss = self.shared.apply_judge_batch(self.model.judge, batch, self.tc.focal_gamma)
            if loss is None:
                return
            labels = [b.label for b in batch]
            pos = float(np.mean([lab == POSITIVE for lab in labels]))
            w.judge_losses.append(loss)
            w.judge_pos.append(pos)
            with self._count_lock:
                self.judge_rows.append({"batch": len(self.judge_rows), "episode": self.completed,
                                        "loss": loss, "pos_frac": pos,
                                        "labels": "".join("1" if lab == POSITIVE else "0" for lab in labels)})
                self.judge_losses.append(loss)
                saturated = self.tc.auto_freeze and self._saturated()
            if saturated:
                self._freeze(self.completed)

    def _saturated(self) -> bool:
        n = self.tc.auto_freeze_window
        if len(self.judge_losses) <= n:
            return False
        ema = ema_smooth(self.judge_losses[-(2 * n + 1):])
        before, now = ema[-n - 1], ema[-1]
        return before - now < self.tc.auto_freeze_tol * before

    # segments

    def _rollout(self, w: _Worker, params: dict):
        traj = w.runner.rollout(params, ControlMode.TRAIN, max_len=self.tc.segment, keep_cache=True)
        grads, _ = a2c_update(self.model.policy, params, traj, self.tc.coef, use_cached=True)
        return traj, grads

    def _absorb(self, w: _Worker, traj, grads) -> None:
        self.shared.apply_policy_gradients(grads)
        self._collect(w, traj)
        if w.runner.finished:
            self._finish(w)

    def _run_ordered(self) -> None:
        """All workers step one segment from a common snapshot, then apply in worker order."""
        for w in self.workers:
            self._start(w)
        while any(w.active for w in self.workers):
            params = self.shared.snapshot()
            results = [(w, *self._rollout(w, params)) for w in self.workers if w.active]
            for w, traj, grads in results:
                self._absorb(w, traj, grads)
                if not w.active:
                    self._start(w)

    def _run_threads(self) -> None:
        errors = []

        def loop(w: _Worker):
            try:
                while w.active or self._start(w):
                    traj, grads = self._rollout(w, self.shared.snapshot())
                    self._absorb(w, traj, grads)
            except BaseException as exc:  # surfaced in the coordinator
                errors.append(exc)

        threads = [threading.Thread(target=loop, args=(w,), name=f"worker-{w.index}") for w in self.workers]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        if errors:
            raise errors[0]

    def run(self) -> TrainResult:
        if self.tc.mode == "sync" or self.tc.worker_count == 1:
            self._run_ordered()
        else:
            self._run_threads()
        self.log_rows.sort(key=lambda r: r["episode"])
        return TrainResult(self.shared, self.model, self.log_rows, self.judge_rows, self.freeze_episode,
                           self.cfg.to_text())


def write_csv(rows: list[dict], fields: list[str], path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r)
    return path


def train(cfg: RunConfig, out_dir=None, progress_every: int = 0) -> TrainResult:
    """Run training; with ``out_dir`` also write checkpoint, logs and the resolved config."""
    result = Trainer(cfg, progress_every).run()
    if out_dir is not None:
        out = Path(out_dir)
        write_resolved(cfg, out)
        extra = {"freeze_episode": result.freeze_episode}
        save_checkpoint(result.shared, out / "checkpoint.json", result.config_text, len(result.log_rows), extra)
        write_csv(result.log_rows, TRAIN_LOG_FIELDS, out / "train_log.csv")
        write_csv(result.judge_rows, JUDGE_LOG_FIELDS, out / "judge_log.csv")
    return result
