"""Final action selection from the policy distribution and the judge output.

At evaluation time, on states where the target is visible::

    p_d + p_done >= 1.5           -> Done
    otherwise draw d ~ [p_d, p_n]:  d -> sample p_con,  n -> sample p_con without Done

Training always samples ``p_con`` directly. Every decision consumes exactly
two uniforms (judge draw, action draw), so ``decide_from_uniforms`` evaluated
on arrays of uniforms is the same law that ``decide_action`` applies once.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .env import N_ACTIONS, Action
from .errors import ContractError
from .judge import JudgeOutput

DONE = int(Action.DONE)
THRESHOLD = 1.5


class ControlMode(str, enum.Enum):
    TRAIN = "train"
    EVAL = "eval"


RULES = ("threshold_done", "judge_d_then_pcon", "judge_n_then_psub", "train_bypass", "no_judge_pcon")


@dataclass(frozen=True)
class ActionDecision:
    action: int
    rule_fired: str


def restrict_to_sub(p_con) -> np.ndarray:
    """Drop Done and renormalize; all mass on Done falls back to uniform over the rest."""
    p = np.array(p_con, dtype=float)
    p[DONE] = 0.0
    total = p.sum()
    if total <= 0.0:
        p[:] = 1.0 / (N_ACTIONS - 1)
        p[DONE] = 0.0
        return p
    return p / total


def _sample(p: np.ndarray, u):
    cdf = np.cumsum(p)
    idx = np.searchsorted(cdf, u, side="right")
    last = int(np.flatnonzero(p > 0)[-1])
    return np.minimum(idx, last)


def decide_from_uniforms(p_con, judge_output: JudgeOutput | None, mode, u_judge, u_action):
    """Vectorized decision law. Returns (actions, rule indices into ``RULES``)."""
    mode = ControlMode(mode)
    p_con = np.asarray(p_con, dtype=float)
    u_judge = np.asarray(u_judge, dtype=float)
    u_action = np.asarray(u_action, dtype=float)
    if mode is ControlMode.TRAIN:
        if judge_output is not None:
            raise ContractError("judge output must not be supplied in train mode")
        return _sample(p_con, u_action), np.full(u_action.shape, RULES.index("train_bypass"))
    if judge_output is None:
        return _sample(p_con, u_action), np.full(u_action.shape, RULES.index("no_judge_pcon"))
    if judge_output.p_d + p_con[DONE] >= THRESHOLD:
        return np.full(u_action.shape, DONE), np.full(u_action.shape, RULES.index("threshold_done"))
    use_con = u_judge < judge_output.p_d
    actions = np.where(use_con, _sample(p_con, u_action), _sample(restrict_to_sub(p_con), u_action))
    rules = np.where(use_con, RULES.index("judge_d_then_pcon"), RULES.index("judge_n_then_psub"))
    return actions, rules


def decide_action(p_con, judge_output: JudgeOutput | None, mode, rng: np.random.Generator) -> ActionDecision:
    u = rng.random(2)
    a, r = decide_from_uniforms(p_con, judge_output, mode, u[0], u[1])
    return ActionDecision(int(a), RULES[int(r)])

