"""Glue between environment, perception, networks and action control."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .control import ControlMode, decide_action
from .env import N_ACTIONS, AgentPose, EpisodeConfig, GridRoom, is_success_pose, reset, step
from .judge import JudgeNet, judge_forward
from .metrics import EpisodeRecord, optimal_episode_length
from .perception import ContextMatrix, Embeddings, StateEmb, build_context_matrix, build_state_emb, detect
from .policy import PolicyNet, Trajectory, TrajectoryStep, build_node_feature_matrix


@dataclass
class Observation:
    detections: list
    context: ContextMatrix
    node_features: np.ndarray
    state_emb: StateEmb


def observe(room: GridRoom, pose: AgentPose, target_type: int, embeddings: Embeddings) -> Observation:
    dets = detect(room, pose)
    ctx = build_context_matrix(dets, target_type, embeddings)
    return Observation(dets, ctx, build_node_feature_matrix(ctx, embeddings),
                       build_state_emb(ctx, dets, target_type, embeddings))


@dataclass
class Model:
    """Everything needed to act: networks, their parameters and the feature space."""
    embeddings: Embeddings
    policy: PolicyNet
    judge: JudgeNet
    policy_params: dict
    judge_params: dict


@dataclass
class EpisodeSpec:
    room: GridRoom
    target_type: int
    start_seed: int


class EpisodeRunner:
    """Owns one environment and steps it with the policy, segment by segment."""

    def __init__(self, model: Model, env_config: EpisodeConfig, rng: np.random.Generator):
        self.model = model
        self.env_config = env_config
        self.rng = rng
        self.spec: EpisodeSpec | None = None

    def begin(self, spec: EpisodeSpec) -> None:
        self.spec = spec
        self.cfg = EpisodeConfig(self.env_config.max_steps, self.env_config.step_penalty,
                                 self.env_config.success_reward, self.env_config.success_distance,
                                 spec.target_type)
        self.start_pose = reset(spec.room, self.cfg, spec.start_seed)
        self.pose = self.start_pose
        self.steps = 0
        self.episode_return = 0.0
        self.hidden = self.model.policy.initial_hidden()
        self.prev_action = -1
        self.obs = observe(spec.room, self.pose, spec.target_type, self.model.embeddings)
        self.finished = False
        self.success = False

    def rollout(self, policy_params=None, mode: str = ControlMode.TRAIN, judge_params=None,
                max_len: int = 20, trace: list | None = None, keep_cache: bool = False) -> Trajectory:
        """Run up to ``max_len`` steps of the current episode.

        In eval mode the judge is consulted on effective states when
        ``judge_params`` is given; otherwise actions come from p_con alone.
        """
        m = self.model
        params = m.policy_params if policy_params is None else policy_params
        traj = Trajectory(h0=self.hidden.copy())
        room, target = self.spec.room, self.spec.target_type
        for _ in range(max_len):
            obs = self.obs
            out, cache = m.policy.forward(params, obs.node_features, obs.context.rows, self.hidden, self.prev_action)
            judged = None
            if mode == ControlMode.EVAL and judge_params is not None and obs.state_emb.effective:
                judged = judge_forward(m.judge, obs.state_emb, judge_params)
            decision = decide_action(out.p_con, judged, mode, self.rng)
            a = decision.action
            pose_before = self.pose
            self.pose, outcome = step(room, self.pose, self.cfg, a, obs.detections, self.steps)
            self.steps = outcome.steps_taken
            self.episode_return += outcome.reward
            oracle = obs.state_emb.effective and is_success_pose(room, pose_before, obs.detections, self.cfg)
            traj.steps.append(TrajectoryStep(
                node_features=obs.node_features, context=obs.context.rows, prev_action=self.prev_action,
                action=a, reward=outcome.reward, value=out.value,
                log_prob=float(np.log(max(out.p_con[a], 1e-300))), terminal=outcome.terminated,
                cache=(out, cache) if keep_cache else None, state_emb=obs.state_emb,
                rule_fired=decision.rule_fired, success=outcome.success,
                oracle_positive=bool(oracle), done_sampled=a == N_ACTIONS - 1))
            if trace is not None:
                trace.append({
                    "t": self.steps - 1,
                    "pose": {"x": pose_before.position[0], "y": pose_before.position[1],
                             "heading": pose_before.heading, "pitch": pose_before.pitch},
                    "action": a,
                    "rule_fired": decision.rule_fired,
                    "p_con": [float(v) for v in out.p_con],
                    "judge": None if judged is None else {"p_d": judged.p_d, "p_n": judged.p_n},
                    "reward": outcome.reward,
                    "effective": bool(obs.state_emb.effective),
                })
            self.hidden = out.hidden
            self.prev_action = a
            if outcome.terminated:
                self.finished = True
                self.success = outcome.success
                return traj
            self.obs = observe(room, self.pose, target, m.embeddings)
        out, _ = m.policy.forward(params, self.obs.node_features, self.obs.context.rows, self.hidden, self.prev_action)
        traj.bootstrap_value = out.value
        return traj


def worker_rollout(runner: EpisodeRunner, params, mode=ControlMode.TRAIN, rng=None, max_len: int = 20,
                   judge_params=None) -> Trajectory:
    if rng is not None:
        runner.rng = rng
    return runner.rollout(params, mode, judge_params, max_len)


def run_episode(model: Model, spec: EpisodeSpec, env_config: EpisodeConfig, rng: np.random.Generator,
                gate: bool = True, trace: list | None = None) -> EpisodeRecord:
    """Evaluate one episode with the gate on (judge consulted) or off."""
    runner = EpisodeRunner(model, env_config, rng)
    runner.begin(spec)
    while not runner.finished:
        runner.rollout(mode=ControlMode.EVAL, judge_params=model.judge_params if gate else None,
                       max_len=env_config.max_steps, trace=trace)
    optimal = optimal_episode_length(spec.room, runner.start_pose, spec.target_type, runner.cfg)
    return EpisodeRecord(runner.success, runner.steps, optimal, f"{spec.room.room_preset_id}/{spec.room.seed}",
                         spec.target_type, spec.start_seed)


def run_random_episode(spec: EpisodeSpec, env_config: EpisodeConfig, rng: np.random.Generator,
                       trace: list | None = None) -> EpisodeRecord:
    """Uniformly random actions, Done included."""
    cfg = EpisodeConfig(env_config.max_steps, env_config.step_penalty, env_config.success_reward,
                        env_config.success_distance, spec.target_type)
    pose = start = reset(spec.room, cfg, spec.start_seed)
    steps, success = 0, False
    while True:
        dets = detect(spec.room, pose)
        a = int(rng.integers(N_ACTIONS))
        before = pose
        pose, outcome = step(spec.room, pose, cfg, a, dets, steps)
        steps = outcome.steps_taken
        if trace is not None:
            trace.append({"t": steps - 1, "pose": {"x": before.position[0], "y": before.position[1],
                                                   "heading": before.heading, "pitch": before.pitch},
                          "action": a, "rule_fired": "random", "p_con": [1.0 / N_ACTIONS] * N_ACTIONS,
                          "judge": None, "reward": outcome.reward,
                          "effective": any(d.type_id == spec.target_type for d in dets)})
        if outcome.terminated:
            success = outcome.success
            break
    optimal = optimal_episode_length(spec.room, start, spec.target_type, cfg)
    return EpisodeRecord(success, steps, optimal, f"{spec.room.room_preset_id}/{spec.room.seed}",
                         spec.target_type, spec.start_seed)
