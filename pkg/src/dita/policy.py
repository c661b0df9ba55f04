"""Actor-critic navigation policy: graph layer + context matrix -> recurrent cell -> heads.

Per step::

    G  = leaky(A_hat @ NF @ W_g)                      (one or two graph layers)
    x  = [vec(G), vec(normalize_rows(context))]
    h  = tanh(W_x x + W_h h_prev + b)                 (feed-forward mode: prev action one-hot appended, no W_h)
    p  = softmax(W_pi h + b_pi),  V = w_v . h + b_v
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .env import N_ACTIONS
from .errors import ContractError, ShapeError
from .perception import ContextMatrix, Embeddings, normalize_rows


def cooccurrence_adjacency(world) -> np.ndarray:
    """Types sharing a room preset pool are linked; self loops added, rows sum to 1."""
    n = world.n_types
    A = np.zeros((n, n))
    for preset in world.presets.values():
        ids = [world.type_id(name) for name in preset.pool]
        for i in ids:
            for j in ids:
                if i != j:
                    A[i, j] = 1.0
    return nn.row_normalize(A)


def build_node_feature_matrix(context: ContextMatrix, embeddings: Embeddings) -> np.ndarray:
    """Row i = [frame-wide detection bits (N_C), embedding of type i (d_emb)]."""
    n = embeddings.n_types
    if len(context) != n:
        raise ShapeError("context matrix and embeddings disagree on catalog size")
    bits = np.broadcast_to(context.rows[:, 0], (n, n))
    return np.hstack([bits, embeddings.vectors])


@dataclass
class PolicyOutput:
    p_con: np.ndarray
    value: float
    hidden: np.ndarray
    logits: np.ndarray


@dataclass
class TrajectoryStep:
    node_features: np.ndarray
    context: np.ndarray  # raw context rows (N_C, 5)
    prev_action: int
    action: int
    reward: float
    value: float
    log_prob: float
    terminal: bool
    cache: tuple | None = None  # forward activations under the rollout parameters
    state_emb: object = None
    rule_fired: str = ""
    success: bool = False
    oracle_positive: bool = False
    done_sampled: bool = False


@dataclass
class Trajectory:
    steps: list = field(default_factory=list)
    h0: np.ndarray | None = None
    bootstrap_value: float = 0.0

    def __len__(self):
        return len(self.steps)

    @property
    def ended(self) -> bool:
        return bool(self.steps) and self.steps[-1].terminal

    def validate(self) -> None:
        for s in self.steps[:-1]:
            if s.terminal:
                raise ContractError("terminal step must be last in a trajectory")


class PolicyNet:
    def __init__(self, n_types: int, d_emb: int, adjacency: np.ndarray, hidden: int = 64,
                 gcn_dim: int = 8, gcn_layers: int = 1, recurrent: bool = True, done_bias: float = 0.0):
        if gcn_layers not in (1, 2):
            raise ShapeError("gcn_layers must be 1 or 2")
        self.n_types = n_types
        self.d_emb = d_emb
        self.A = np.asarray(adjacency, dtype=float)
        if self.A.shape != (n_types, n_types):
            raise ShapeError("adjacency must be N_C x N_C")
        self.hidden = hidden
        self.gcn_dim = gcn_dim
        self.gcn_layers = gcn_layers
        self.recurrent = recurrent
        self.done_bias = done_bias  # initial Done logit offset; negative keeps early episodes exploring
        self.n_in = n_types * gcn_dim + n_types * 5 + (0 if recurrent else N_ACTIONS)

    def init(self, rng: np.random.Generator) -> nn.Params:
        p = {}
        fan = self.n_types + self.d_emb
        for i in range(self.gcn_layers):
            W, _ = nn.init_dense(rng, fan, self.gcn_dim, "leaky")
            p[f"gcn{i}.W"] = W.T.copy()
            fan = self.gcn_dim
        p["rnn.Wx"], p["rnn.b"] = nn.init_dense(rng, self.n_in, self.hidden, "tanh")
        if self.recurrent:
            p["rnn.Wh"] = nn.init_dense(rng, self.hidden, self.hidden, "tanh", gain=0.5)[0]
        p["pi.W"], p["pi.b"] = nn.init_dense(rng, self.hidden, N_ACTIONS, "linear", gain=0.01)
        p["pi.b"][N_ACTIONS - 1] = self.done_bias
        p["v.W"], p["v.b"] = nn.init_dense(rng, self.hidden, 1, "linear", gain=0.1)
        return p

    def initial_hidden(self) -> np.ndarray:
        return np.zeros(self.hidden)

    def forward(self, params: nn.Params, node_features: np.ndarray, context_rows: np.ndarray,
                hidden: np.ndarray, prev_action: int = -1):
        """One step. Returns (PolicyOutput, cache)."""
        H = node_features
        gcn_cache = []
        for i in range(self.gcn_layers):
            AH = self.A @ H
            Z = AH @ params[f"gcn{i}.W"]
            H = nn.leaky_relu(Z)
            gcn_cache.append((AH, Z))
        parts = [H.ravel(), normalize_rows(context_rows).ravel()]
        if not self.recurrent:
            onehot = np.zeros(N_ACTIONS)
            if prev_action >= 0:
                onehot[prev_action] = 1.0
            parts.append(onehot)
        x = np.concatenate(parts)
        pre = params["rnn.Wx"] @ x + params["rnn.b"]
        if self.recurrent:
            pre = pre + params["rnn.Wh"] @ hidden
        h = np.tanh(pre)
        logits = params["pi.W"] @ h + params["pi.b"]
        p = nn.softmax(logits)
        value = float(params["v.W"][0] @ h + params["v.b"][0])
        cache = (gcn_cache, x, hidden, h, p)
        return PolicyOutput(p, value, h, logits), cache

    def backward(self, params: nn.Params, caches: list, dlogits: list, dvalues: list) -> nn.Params:
        """Backpropagation through time over one segment of cached steps."""
        if not caches:
            raise ContractError("backward called without forward activations")
        T = len(caches)
        Hs = np.stack([c[3] for c in caches])
        Hprev = np.stack([c[2] for c in caches])
        Xs = np.stack([c[1] for c in caches])
        DL = np.asarray(dlogits, dtype=float).reshape(T, -1)
        DV = np.asarray(dvalues, dtype=float).reshape(T)
        # only the recurrence needs the sequential sweep
        DH = DL @ params["pi.W"] + DV[:, None] * params["v.W"][0]
        Dpre = np.empty_like(Hs)
        dh_next = np.zeros(self.hidden)
        for t in reversed(range(T)):
            h = Hs[t]
            dpre = (DH[t] + dh_next) * (1.0 - h * h)
            Dpre[t] = dpre
            if self.recurrent:
                dh_next = params["rnn.Wh"].T @ dpre
        grads = {
            "pi.W": DL.T @ Hs, "pi.b": DL.sum(axis=0),
            "v.W": (DV @ Hs)[None, :], "v.b": np.array([DV.sum()]),
            "rnn.Wx": Dpre.T @ Xs, "rnn.b": Dpre.sum(axis=0),
        }
        if self.recurrent:
            grads["rnn.Wh"] = Dpre.T @ Hprev
        n_g = self.n_types * self.gcn_dim
        dG = (Dpre @ params["rnn.Wx"][:, :n_g]).reshape(T, self.n_types, self.gcn_dim)
        for i in reversed(range(self.gcn_layers)):
            AH = np.stack([c[0][i][0] for c in caches])
            Z = np.stack([c[0][i][1] for c in caches])
            dZ = dG * nn.leaky_relu_grad(Z)
            grads[f"gcn{i}.W"] = AH.reshape(T * self.n_types, -1).T @ dZ.reshape(T * self.n_types, -1)
            if i > 0:
                dG = np.einsum("ij,tjk,lk->til", self.A.T, dZ, params[f"gcn{i}.W"])
        return grads


def policy_forward(net: PolicyNet, node_features, context: ContextMatrix, params, hidden, prev_action=-1):
    return net.forward(params, node_features, context.rows, hidden, prev_action)[0]


def compute_returns_and_advantages(rewards, values, terminal_last: bool, bootstrap_value: float, gamma: float):
    """Discounted returns with bootstrap on a non-terminal cut, and ``R_t - V(s_t)``."""
    n = len(rewards)
    if n == 0:
        raise ContractError("empty trajectory")
    returns = np.empty(n)
    running = 0.0 if terminal_last else float(bootstrap_value)
    for t in reversed(range(n)):
        running = rewards[t] + gamma * running
        returns[t] = running
    return returns, returns - np.asarray(values, dtype=float)


@dataclass(frozen=True)
class A2CCoefficients:
    gamma: float = 0.99
    entropy: float = 0.01
    value: float = 0.5


def _segment_forward(net: PolicyNet, params, traj: Trajectory, use_cached: bool = False):
    if use_cached and all(s.cache is not None for s in traj.steps):
        return [s.cache[0] for s in traj.steps], [s.cache[1] for s in traj.steps]
    h = traj.h0 if traj.h0 is not None else net.initial_hidden()
    outs, caches = [], []
    for s in traj.steps:
        out, cache = net.forward(params, s.node_features, s.context, h, s.prev_action)
        outs.append(out)
        caches.append(cache)
        h = out.hidden
    return outs, caches


def a2c_loss(net: PolicyNet, params, traj: Trajectory, returns, advantages, coef: A2CCoefficients) -> float:
    """Segment loss with returns and advantages held fixed."""
    outs, _ = _segment_forward(net, params, traj)
    loss = 0.0
    for t, (s, o) in enumerate(zip(traj.steps, outs)):
        logp = nn.log_softmax(o.logits)
        entropy = -float(np.sum(o.p_con * logp))
        loss += -logp[s.action] * advantages[t] - coef.entropy * entropy + coef.value * (returns[t] - o.value) ** 2
    return float(loss)


def a2c_update(net: PolicyNet, params, traj: Trajectory, coef: A2CCoefficients = A2CCoefficients(),
               use_cached: bool = False):
    """Gradients of the actor-critic loss over one trajectory segment.

    ``use_cached`` reuses the activations recorded during the rollout; only
    valid when ``params`` are the parameters the rollout ran with.
    Returns (grads, info) where info holds the loss, returns and advantages used.
    """
    traj.validate()
    outs, caches = _segment_forward(net, params, traj, use_cached)
    values = [o.value for o in outs]
    rewards = [s.reward for s in traj.steps]
    returns, adv = compute_returns_and_advantages(rewards, values, traj.ended, traj.bootstrap_value, coef.gamma)
    dlogits, dvalues = [], []
    loss = 0.0
    for t, (s, o) in enumerate(zip(traj.steps, outs)):
        p = o.p_con
        logp = nn.log_softmax(o.logits)
        entropy = -float(np.sum(p * logp))
        onehot = np.zeros(N_ACTIONS)
        onehot[s.action] = 1.0
        # d(-log p_a * adv)/dz = -(onehot - p) * adv ; d(-beta H)/dz = beta * p * (log p + H)
        dl = -(onehot - p) * adv[t] + coef.entropy * p * (logp + entropy)
        dlogits.append(dl)
        dvalues.append(-2.0 * coef.value * (returns[t] - o.value))
        loss += -logp[s.action] * adv[t] - coef.entropy * entropy + coef.value * (returns[t] - o.value) ** 2
    grads = net.backward(params, caches, dlogits, dvalues)
    return grads, {"loss": loss, "returns": returns, "advantages": adv}
