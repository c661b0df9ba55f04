import numpy as np
import pytest
from hypothesis import given, strategies as st

from dita import nn
from dita.errors import ContractError
from dita.judge import (
    NEGATIVE, POSITIVE, BatchBuffer, JudgeNet, JudgeSample, batch_loss_and_grads, is_effective_state, judge_forward,
    label_from_reward, train_on_batch,
)
from dita.perception import StateEmb, normalize_rows


def state(rng, visible=True, scene_dim=64, emb_dim=16):
    tag = np.array([1.0 if visible else 0.0, rng.uniform(0, 300), rng.uniform(0, 300), rng.uniform(0, 1), 1.0])
    return StateEmb(rng.standard_normal(scene_dim), tag, rng.standard_normal(emb_dim), visible)


def reference_forward(params, s):
    """Straight-line forward pass written out layer by layer."""
    def stack(prefix, x):
        for i in range(2):
            x = params[f"{prefix}{i}.W"] @ x + params[f"{prefix}{i}.b"]
            x = np.where(x > 0, x, 0.01 * x)
        return x
    tag = normalize_rows(s.tag_vec[None, :])[0]
    tag[1:4] = 2 * tag[1:4] - 1
    joint = np.concatenate([stack("scene", s.scene_emb), stack("target", s.target_emb), stack("tag", tag)])
    h = params["head0.W"] @ joint + params["head0.b"]
    h = np.where(h > 0, h, 0.01 * h)
    z = params["head1.W"] @ h + params["head1.b"]
    e = np.exp(z - z.max())
    return e / e.sum()


def test_forward_matches_reference_and_is_a_distribution():
    rng = np.random.default_rng(0)
    net = JudgeNet(width=8, expand=2)
    params = net.init(rng)
    for _ in range(10):
        s = state(rng)
        out = judge_forward(net, s, params)
        ref = reference_forward(params, s)
        assert out.p_d == pytest.approx(ref[POSITIVE], abs=1e-14)
        assert out.p_d + out.p_n == pytest.approx(1.0, abs=1e-12)
        assert 0 < out.p_d < 1
        assert judge_forward(net, s, params) == out


def test_non_effective_state_is_rejected():
    rng = np.random.default_rng(0)
    net = JudgeNet(width=4)
    params = net.init(rng)
    s = state(rng, visible=False)
    assert not is_effective_state(s) and is_effective_state(state(rng))
    with pytest.raises(ContractError):
        judge_forward(net, s, params)
    with pytest.raises(ContractError):
        BatchBuffer().push(s, NEGATIVE)
    with pytest.raises(ContractError):
        JudgeSample(s, NEGATIVE)


def test_labels_from_reward():
    assert label_from_reward(4.99) == POSITIVE
    assert label_from_reward(4.0) == POSITIVE
    assert label_from_reward(-0.01) == NEGATIVE
    assert label_from_reward(3.9999) == NEGATIVE


def test_buffer_triggers_at_capacity():
    rng = np.random.default_rng(0)
    buf = BatchBuffer(64)
    for _ in range(63):
        assert buf.push(state(rng), NEGATIVE) is None
    batch = buf.push(state(rng), POSITIVE)
    assert len(batch) == 64 and len(buf) == 0
    for _ in range(10):
        buf.push(state(rng), NEGATIVE)
    assert buf.push(state(rng), NEGATIVE) is None and len(buf) == 11


def test_focal_batch_loss_properties():
    rng = np.random.default_rng(1)
    net = JudgeNet(width=8)
    params = net.init(rng)
    batch = [JudgeSample(state(rng), int(rng.integers(2))) for _ in range(16)]
    loss, _ = batch_loss_and_grads(net, params, batch)
    loss2, _ = batch_loss_and_grads(net, params, batch + batch)
    assert loss2 == pytest.approx(loss, rel=1e-14)
    with pytest.raises(ContractError):
        batch_loss_and_grads(net, params, [])


def test_confident_correct_batch_has_negligible_loss():
    rng = np.random.default_rng(2)
    net = JudgeNet(width=4)
    params = net.init(rng)
    params["head1.W"][:] = 0.0
    params["head1.b"][:] = [40.0, -40.0]
    batch = [JudgeSample(state(rng), POSITIVE) for _ in range(8)]
    loss, grads = batch_loss_and_grads(net, params, batch)
    assert loss < 1e-15 and nn.global_norm(grads) < 1e-12


@pytest.mark.parametrize("seed", range(3))
def test_judge_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    net = JudgeNet(scene_dim=6, emb_dim=4, width=3, expand=2)
    params = net.init(rng)
    batch = [JudgeSample(state(rng, scene_dim=6, emb_dim=4), int(rng.integers(2))) for _ in range(5)]
    _, grads = batch_loss_and_grads(net, params, batch, 0.7)
    err = nn.finite_diff_check(lambda p: batch_loss_and_grads(net, p, batch, 0.7)[0], params, grads, eps=1e-6)
    assert err < 1e-4


def test_training_reduces_loss():
    rng = np.random.default_rng(3)
    net = JudgeNet(width=16)
    params = net.init(rng)
    batch = [JudgeSample(state(rng), int(rng.integers(2))) for _ in range(32)]
    opt = nn.Adam(1e-2)
    first = None
    for _ in range(50):
        params, loss = train_on_batch(net, params, batch, opt)
        first = loss if first is None else first
    assert loss < 0.5 * first
