"""Small dense / graph / recurrent network kernel with hand-written gradients.

Parameters are plain ``dict[str, np.ndarray]`` keyed ``"<layer>.W"`` and
``"<layer>.b"``; gradients use the same keys and shapes. Weights are stored
``(out, in)`` so a layer computes ``W @ x + b``. Everything is float64.
"""
from __future__ import annotations

import hashlib
import math
from typing import Callable

import numpy as np

from .errors import ContractError, DomainError, ShapeError

LEAKY_SLOPE = 0.01

Params = dict


def dense_forward(W: np.ndarray, b: np.ndarray, x: np.ndarray) -> np.ndarray:
    """``W @ x + b`` for a vector, or row-wise for a (batch, in) matrix."""
    x = np.asarray(x, dtype=float)
    if W.ndim != 2 or b.shape != (W.shape[0],) or x.shape[-1] != W.shape[1]:
        raise ShapeError(f"dense: W{W.shape}, b{b.shape}, x{x.shape}")
    return x @ W.T + b


def leaky_relu(x, alpha: float = LEAKY_SLOPE):
    return np.where(x >= 0, x, alpha * x)


def leaky_relu_grad(x, alpha: float = LEAKY_SLOPE):
    return np.where(x >= 0, 1.0, alpha)


def softmax(z, axis: int = -1) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(z, axis: int = -1) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    s = z - z.max(axis=axis, keepdims=True)
    return s - np.log(np.exp(s).sum(axis=axis, keepdims=True))


def focal_loss(p_true, gamma: float = 0.7):
    """``-(1 - p)**gamma * ln(p)`` for the probability assigned to the true class."""
    p = np.asarray(p_true, dtype=float)
    if np.any(p <= 0) or np.any(p > 1) or gamma < 0:
        raise DomainError("focal loss needs 0 < p_true <= 1 and gamma >= 0")
    out = -np.power(1.0 - p, gamma) * np.log(p)
    return float(out) if out.ndim == 0 else out


def focal_loss_logit_grad(p_true, gamma: float = 0.7):
    """d focal_loss / d z_true for a two-way softmax (d/dz_other is the negation).

    Written so it stays finite at p_true = 1 for gamma < 1.
    """
    p = np.asarray(p_true, dtype=float)
    q = 1.0 - p
    return gamma * p * np.power(q, gamma) * np.log(p) - np.power(q, gamma + 1.0)


def _activate(z, kind: str):
    if kind == "leaky":
        return leaky_relu(z)
    if kind == "tanh":
        return np.tanh(z)
    if kind == "linear":
        return z
    raise ValueError(f"unknown activation {kind!r}")


def _activate_grad(z, a, kind: str):
    if kind == "leaky":
        return leaky_relu_grad(z)
    if kind == "tanh":
        return 1.0 - a * a
    return np.ones_like(z)


def gcn_layer(H: np.ndarray, A_hat: np.ndarray, W: np.ndarray, activation: str = "leaky") -> np.ndarray:
    """One graph convolution ``act(A_hat @ H @ W)``; W is (in_features, out_features)."""
    n = H.shape[0]
    if A_hat.shape != (n, n) or W.shape[0] != H.shape[1]:
        raise ShapeError(f"gcn: H{H.shape}, A{A_hat.shape}, W{W.shape}")
    return _activate(A_hat @ H @ W, activation)


def recurrent_step(W_x, W_h, b, x, h_prev) -> np.ndarray:
    """Elman cell: ``tanh(W_x x + W_h h_prev + b)``."""
    if W_x.shape[1] != len(x) or W_h.shape != (W_x.shape[0], len(h_prev)) or b.shape != (W_x.shape[0],):
        raise ShapeError(f"recurrent: W_x{W_x.shape}, W_h{W_h.shape}, b{b.shape}, x{np.shape(x)}, h{np.shape(h_prev)}")
    return np.tanh(W_x @ x + W_h @ h_prev + b)


def row_normalize(A: np.ndarray) -> np.ndarray:
    """Add self loops and normalize rows to sum 1."""
    A = np.asarray(A, dtype=float) + np.eye(len(A))
    return A / A.sum(axis=1, keepdims=True)


def init_dense(rng: np.random.Generator, n_in: int, n_out: int, activation: str = "leaky", gain: float = 1.0):
    scale = gain * math.sqrt((2.0 if activation == "leaky" else 1.0) / n_in)
    return rng.standard_normal((n_out, n_in)) * scale, np.zeros(n_out)


class MLP:
    """A stack of dense layers; each layer's activation is named explicitly."""

    def __init__(self, prefix: str, sizes: list[int], activations: list[str]):
        if len(activations) != len(sizes) - 1:
            raise ShapeError("one activation per layer required")
        self.prefix = prefix
        self.sizes = list(sizes)
        self.activations = list(activations)

    def keys(self, i: int) -> tuple[str, str]:
        return f"{self.prefix}{i}.W", f"{self.prefix}{i}.b"

    def init(self, rng: np.random.Generator, gain: float = 1.0) -> Params:
        params = {}
        for i, act in enumerate(self.activations):
            kw, kb = self.keys(i)
            params[kw], params[kb] = init_dense(rng, self.sizes[i], self.sizes[i + 1], act, gain)
        return params

    def forward(self, params: Params, x: np.ndarray):
        """Returns (output, cache). Accepts a vector or a (batch, in) matrix."""
        a = np.atleast_2d(np.asarray(x, dtype=float))
        cache = [a]
        for i, act in enumerate(self.activations):
            kw, kb = self.keys(i)
            z = dense_forward(params[kw], params[kb], a)
            a = _activate(z, act)
            cache.append((z, a))
        out = a if np.ndim(x) > 1 else a[0]
        return out, cache

    def backward(self, params: Params, cache, dy: np.ndarray):
        """Returns (grads, d_input) given the cache from ``forward`` and dL/d_output."""
        if not cache:
            raise ContractError("backward called without forward activations")
        dy = np.atleast_2d(np.asarray(dy, dtype=float))
        grads = {}
        for i in reversed(range(len(self.activations))):
            z, a = cache[i + 1]
            a_prev = cache[i] if i == 0 else cache[i][1]
            dz = dy * _activate_grad(z, a, self.activations[i])
            kw, kb = self.keys(i)
            grads[kw] = dz.T @ a_prev
            grads[kb] = dz.sum(axis=0)
            dy = dz @ params[kw]
        return grads, dy


# -- parameter containers -----------------------------------------------------

def clone(params: Params) -> Params:
    return {k: v.copy() for k, v in params.items()}


def zeros_like(params: Params) -> Params:
    return {k: np.zeros_like(v) for k, v in params.items()}


def accumulate(total: Params, grads: Params) -> Params:
    for k, g in grads.items():
        total[k] += g
    return total


def global_norm(grads: Params) -> float:
    return math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))


def clip_by_global_norm(grads: Params, max_norm: float) -> Params:
    norm = global_norm(grads)
    if max_norm > 0 and norm > max_norm:
        s = max_norm / norm
        return {k: g * s for k, g in grads.items()}
    return grads


def check_congruent(params: Params, grads: Params) -> None:
    if params.keys() != grads.keys():
        raise ShapeError(f"parameter/gradient keys differ: {sorted(set(params) ^ set(grads))}")
    for k, v in params.items():
        if v.shape != grads[k].shape:
            raise ShapeError(f"{k}: param {v.shape} vs grad {grads[k].shape}")


def params_digest(params: Params) -> str:
    h = hashlib.sha256()
    for k in sorted(params):
        h.update(k.encode())
        h.update(np.ascontiguousarray(params[k], dtype="<f8").tobytes())
    return h.hexdigest()


def sgd_step(params: Params, grads: Params, learning_rate: float) -> Params:
    """Return ``params - lr * grads`` (new arrays)."""
    check_congruent(params, grads)
    return {k: v - learning_rate * grads[k] for k, v in params.items()}


class SGD:
    def __init__(self, learning_rate: float):
        self.learning_rate = learning_rate

    def step(self, params: Params, grads: Params) -> None:
        check_congruent(params, grads)
        for k, g in grads.items():
            params[k] -= self.learning_rate * g


class Adam:
    def __init__(self, learning_rate: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.learning_rate = learning_rate
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m: np.ndarray | None = None  # flat moments over sorted keys
        self.v: np.ndarray | None = None

    def step(self, params: Params, grads: Params) -> None:
        check_congruent(params, grads)
        keys = sorted(params)
        g = np.concatenate([grads[k].ravel() for k in keys])
        if self.m is None:
            self.m = np.zeros_like(g)
            self.v = np.zeros_like(g)
        self.t += 1
        self.m *= self.beta1
        self.m += (1.0 - self.beta1) * g
        self.v *= self.beta2
        self.v += (1.0 - self.beta2) * g * g
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        upd = (self.learning_rate / c1) * self.m / (np.sqrt(self.v / c2) + self.eps)
        i = 0
        for k in keys:
            n = params[k].size
            params[k] -= upd[i:i + n].reshape(params[k].shape)
            i += n


def make_optimizer(name: str, learning_rate: float):
    if name == "sgd":
        return SGD(learning_rate)
    if name == "adam":
        return Adam(learning_rate)
    raise ValueError(f"unknown optimizer {name!r}")


def finite_diff_check(loss_fn: Callable[[Params], float], params: Params, analytic: Params,
                      eps: float = 1e-6) -> float:
    """Max relative error between ``analytic`` and central differences of ``loss_fn``.

    Relative error per entry is ``|a - n| / max(1e-12, |a| + |n|)``.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise DomainError("eps must lie in [1e-7, 1e-3]")
    check_congruent(params, analytic)
    work = clone(params)
    worst = 0.0
    for k in sorted(work):
        arr = work[k]
        flat = arr.reshape(-1)
        ga = analytic[k].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = loss_fn(work)
            flat[i] = orig - eps
            down = loss_fn(work)
            flat[i] = orig
            num = (up - down) / (2.0 * eps)
            rel = abs(ga[i] - num) / max(1e-12, abs(ga[i]) + abs(num))
            worst = max(worst, rel)
    return worst
