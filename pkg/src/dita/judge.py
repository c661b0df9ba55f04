"""Termination classifier trained online from reward-derived labels.

Each part of the state embedding (scene features, target row, target type
embedding) is mapped to a common width by its own expand/squeeze stack; the
three results are concatenated and classified into [terminate, continue].
"""
from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import ContractError
from .perception import StateEmb, normalize_rows

POSITIVE, NEGATIVE = 0, 1  # class indices of p_d and p_n


@dataclass(frozen=True)
class JudgeOutput:
    p_d: float
    p_n: float


@dataclass(frozen=True)
class JudgeSample:
    state_emb: StateEmb
    label: int  # POSITIVE or NEGATIVE

    def __post_init__(self):
        if not self.state_emb.effective:
            raise ContractError("judge samples must come from effective states")


class JudgeNet:
    def __init__(self, scene_dim: int = 64, emb_dim: int = 16, width: int = 64, expand: int = 2):
        self.width = width
        wide = expand * width
        self.scene = nn.MLP("scene", [scene_dim, wide, width], ["leaky", "leaky"])
        self.target = nn.MLP("target", [emb_dim, wide, width], ["leaky", "leaky"])
        self.tag = nn.MLP("tag", [5, wide, width], ["leaky", "leaky"])
        self.head = nn.MLP("head", [3 * width, width, 2], ["leaky", "linear"])

    def init(self, rng: np.random.Generator) -> nn.Params:
        p = {}
        for part in (self.scene, self.target, self.tag, self.head):
            p.update(part.init(rng))
        return p

    @staticmethod
    def inputs(states) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        scene = np.stack([s.scene_emb for s in states])
        target = np.stack([s.target_emb for s in states])
        # the target is always visible here, so its position and apparent size are centered on [-1, 1]
        tag = normalize_rows(np.stack([s.tag_vec for s in states]))
        tag[:, 1:4] = 2.0 * tag[:, 1:4] - 1.0
        return scene, target, tag

    def forward(self, params, scene, target, tag):
        """Batched forward. Returns (logits, probs, cache)."""
        ys, cs_ = [], []
        for part, x in ((self.scene, scene), (self.target, target), (self.tag, tag)):
            y, c = part.forward(params, x)
            ys.append(y)
            cs_.append(c)
        joint = np.concatenate(ys, axis=1)
        logits, hc = self.head.forward(params, joint)
        return logits, nn.softmax(logits, axis=1), (cs_, hc)

    def backward(self, params, cache, dlogits):
        if cache is None:
            raise ContractError("backward called without forward activations")
        cs_, hc = cache
        grads, djoint = self.head.backward(params, hc, dlogits)
        w = self.width
        for k, part in enumerate((self.scene, self.target, self.tag)):
            g, _ = part.backward(params, cs_[k], djoint[:, k * w:(k + 1) * w])
            grads.update(g)
        return grads


def is_effective_state(state_emb: StateEmb) -> bool:
    return bool(state_emb.effective)


def judge_forward(net: JudgeNet, state_emb: StateEmb, params) -> JudgeOutput:
    if not state_emb.effective:
        raise ContractError("judge is only defined on effective states")
    _, probs, _ = net.forward(params, *net.inputs([state_emb]))
    return JudgeOutput(float(probs[0, POSITIVE]), float(probs[0, NEGATIVE]))


def label_from_reward(reward: float, tau: float = 4.0) -> int:
    return POSITIVE if reward >= tau else NEGATIVE


def batch_loss_and_grads(net: JudgeNet, params, samples, gamma: float = 0.7):
    """Mean focal loss over ``samples`` and its gradient."""
    if not samples:
        raise ContractError("empty judge batch")
    labels = np.array([s.label for s in samples])
    logits, probs, cache = net.forward(params, *net.inputs([s.state_emb for s in samples]))
    rows = np.arange(len(samples))
    p_true = np.clip(probs[rows, labels], 1e-300, 1.0)
    loss = float(np.mean(nn.focal_loss(p_true, gamma)))
    g = nn.focal_loss_logit_grad(p_true, gamma) / len(samples)
    dlogits = np.empty_like(logits)
    dlogits[rows, labels] = g
    dlogits[rows, 1 - labels] = -g
    return loss, net.backward(params, cache, dlogits)


def train_on_batch(net: JudgeNet, params, batch, optimizer, gamma: float = 0.7):
    """One optimizer step on the batch; returns (params, pre-update mean focal loss)."""
    loss, grads = batch_loss_and_grads(net, params, batch, gamma)
    optimizer.step(params, grads)
    return params, loss


def accuracy(net: JudgeNet, params, samples) -> float:
    labels = np.array([s.label for s in samples])
    _, probs, _ = net.forward(params, *net.inputs([s.state_emb for s in samples]))
    return float(np.mean(np.argmax(probs, axis=1) == labels))


class BatchBuffer:
    """Fixed-capacity sample store; a push that fills it hands back the whole batch."""

    def __init__(self, capacity: int = 64):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.samples: list[JudgeSample] = []
        self._lock = threading.Lock()

    def __len__(self):
        return len(self.samples)

    def push(self, state_emb: StateEmb, label: int) -> list[JudgeSample] | None:
        if not state_emb.effective:
            raise ContractError("non-effective states are never pushed")
        sample = JudgeSample(state_emb, label)
        with self._lock:
            self.samples.append(sample)
            if len(self.samples) >= self.capacity:
                batch, self.samples = self.samples, []
                return batch
        return None


def push_sample(buffer: BatchBuffer, state_emb: StateEmb, label: int):
    return buffer.push(state_emb, label)
