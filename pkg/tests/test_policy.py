import numpy as np
import pytest
from hypothesis import given, strategies as st

from dita import nn
from dita.agent import EpisodeRunner, EpisodeSpec, Model
from dita.env import EpisodeConfig, generate_room
from dita.errors import ContractError, ShapeError
from dita.judge import JudgeNet
from dita.perception import ContextMatrix, Embeddings, build_context_matrix, Detection, normalize_rows
from dita.policy import (
    A2CCoefficients, PolicyNet, Trajectory, TrajectoryStep, a2c_loss, a2c_update, build_node_feature_matrix,
    compute_returns_and_advantages, cooccurrence_adjacency, policy_forward,
)
from dita.world import default_world

N, D = 5, 4


def tiny_net(seed=0, **kw):
    rng = np.random.default_rng(seed)
    A = nn.row_normalize((rng.random((N, N)) > 0.5).astype(float))
    net = PolicyNet(N, D, A, hidden=6, gcn_dim=3, **kw)
    return net, net.init(rng), rng


def random_inputs(rng):
    rows = np.zeros((N, 5))
    vis = rng.random(N) < 0.5
    rows[vis, 0] = 1.0
    rows[vis, 1:3] = rng.uniform(0, 300, (vis.sum(), 2))
    rows[vis, 3] = rng.uniform(0.01, 1, vis.sum())
    rows[:, 4] = rng.uniform(-1, 1, N)
    emb = rng.standard_normal((N, D))
    nf = np.hstack([np.broadcast_to(rows[:, 0], (N, N)), emb])
    return nf, rows


def random_traj(net, params, rng, T, terminal):
    traj = Trajectory(h0=np.tanh(rng.standard_normal(net.hidden)) if net.recurrent else np.zeros(net.hidden))
    for t in range(T):
        nf, rows = random_inputs(rng)
        traj.steps.append(TrajectoryStep(nf, rows, int(rng.integers(-1, 6)), int(rng.integers(6)),
                                         float(rng.choice([-0.01, 4.99])), 0.0, 0.0, terminal and t == T - 1))
    traj.bootstrap_value = float(rng.standard_normal())
    return traj


def test_node_feature_matrix_layout():
    emb = Embeddings(6, d_emb=4)
    ctx = build_context_matrix([], 0, emb)
    nf = build_node_feature_matrix(ctx, emb)
    assert nf.shape == (6, 10) and not nf[:, :6].any()
    ctx = build_context_matrix([Detection(3, 0, 10.0, 20.0, 0.1, 2.0)], 0, emb)
    nf = build_node_feature_matrix(ctx, emb)
    assert nf[:, 3].tolist() == [1.0] * 6 and nf[:, :6].sum() == 6
    np.testing.assert_array_equal(nf[:, 6:], emb.vectors)
    with pytest.raises(ShapeError):
        build_node_feature_matrix(ContextMatrix(np.zeros((5, 5))), emb)


def test_cooccurrence_adjacency_is_row_stochastic():
    A = cooccurrence_adjacency(default_world())
    assert np.allclose(A.sum(axis=1), 1.0) and np.all(np.diag(A) > 0)
    assert np.array_equal(A > 0, (A > 0).T)


def reference_value(net, params, nf, rows, h_prev):
    G = nf
    for i in range(net.gcn_layers):
        G = net.A @ G @ params[f"gcn{i}.W"]
        G = np.maximum(G, 0.01 * G)
    x = np.concatenate([G.ravel(), normalize_rows(rows).ravel()])
    h = np.tanh(params["rnn.Wx"] @ x + params["rnn.Wh"] @ h_prev + params["rnn.b"])
    return float(params["v.W"][0] @ h + params["v.b"][0]), h


@pytest.mark.parametrize("layers", [1, 2])
def test_forward_matches_reference(layers):
    net, params, rng = tiny_net(1, gcn_layers=layers)
    nf, rows = random_inputs(rng)
    h0 = np.tanh(rng.standard_normal(6))
    out = policy_forward(net, nf, ContextMatrix(rows), params, h0)
    v, h = reference_value(net, params, nf, rows, h0)
    assert out.value == pytest.approx(v, abs=1e-13)
    np.testing.assert_allclose(out.hidden, h, atol=1e-14)
    assert out.p_con.sum() == pytest.approx(1.0, abs=1e-12) and np.all(out.p_con >= 0)
    again = policy_forward(net, nf, ContextMatrix(rows), params, h0)
    np.testing.assert_array_equal(again.p_con, out.p_con)


def test_done_bias_initialisation():
    net, params, rng = tiny_net(0, done_bias=-2.0)
    assert params["pi.b"][5] == -2.0 and not params["pi.b"][:5].any()


def test_returns_examples():
    r, adv = compute_returns_and_advantages([-0.01, 4.99], [1.0, 2.0], True, 0.0, 0.99)
    np.testing.assert_allclose(r, [4.9301, 4.99], atol=1e-12)
    np.testing.assert_allclose(adv, [3.9301, 2.99], atol=1e-12)
    r, _ = compute_returns_and_advantages([1.0, 2.0, 3.0], [0, 0, 0], False, 10.0, 0.0)
    assert r.tolist() == [1.0, 2.0, 3.0]
    r, adv = compute_returns_and_advantages([2.5], [0.5], True, 99.0, 0.9)
    assert r.tolist() == [2.5] and adv.tolist() == [2.0]
    with pytest.raises(ContractError):
        compute_returns_and_advantages([], [], True, 0.0, 0.99)


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=20), st.floats(-3, 3), st.floats(0, 1), st.booleans())
def test_returns_are_linear_in_rewards(rewards, c, gamma, terminal):
    r1, _ = compute_returns_and_advantages(rewards, [0.0] * len(rewards), terminal, 0.0, gamma)
    r2, _ = compute_returns_and_advantages([c * x for x in rewards], [0.0] * len(rewards), terminal, 0.0, gamma)
    np.testing.assert_allclose(r2, c * r1, atol=1e-9)


@pytest.mark.parametrize("recurrent,layers,T,terminal", [
    (True, 1, 2, True), (True, 2, 2, False), (False, 1, 3, True), (True, 1, 5, False),
])
def test_a2c_gradients_match_finite_differences(recurrent, layers, T, terminal):
    net, params, rng = tiny_net(2, gcn_layers=layers, recurrent=recurrent)
    traj = random_traj(net, params, rng, T, terminal)
    coef = A2CCoefficients(gamma=0.99, entropy=0.05, value=0.5)
    grads, info = a2c_update(net, params, traj, coef)
    loss = lambda p: a2c_loss(net, p, traj, info["returns"], info["advantages"], coef)
    assert info["loss"] == pytest.approx(loss(params), rel=1e-12)
    assert nn.finite_diff_check(loss, params, grads, eps=1e-6) < 1e-4


def test_a2c_policy_term_isolated():
    net, params, rng = tiny_net(3)
    traj = random_traj(net, params, rng, 1, True)
    coef = A2CCoefficients(gamma=0.99, entropy=0.0, value=0.0)
    grads, info = a2c_update(net, params, traj, coef)
    # single step, no entropy, no value: dL/dlogits = -(onehot - p) * adv
    out = policy_forward(net, traj.steps[0].node_features, ContextMatrix(traj.steps[0].context), params, traj.h0)
    onehot = np.eye(6)[traj.steps[0].action]
    np.testing.assert_allclose(grads["pi.b"], -(onehot - out.p_con) * info["advantages"][0], atol=1e-12)
    assert not grads["v.W"].any() and not grads["v.b"].any()


def test_trajectory_rejects_inner_terminal():
    net, params, rng = tiny_net(0)
    traj = random_traj(net, params, rng, 3, False)
    traj.steps[0].terminal = True
    with pytest.raises(ContractError):
        a2c_update(net, params, traj)


def _model(seed=0):
    world = default_world()
    emb = Embeddings(world.n_types, 16, 0)
    net = PolicyNet(world.n_types, 16, cooccurrence_adjacency(world), hidden=16)
    judge = JudgeNet(width=8)
    rng = np.random.default_rng(seed)
    return Model(emb, net, judge, net.init(rng), judge.init(rng))


def test_rollout_max_steps_one_and_support():
    model = _model()
    room = generate_room("kitchen", 1)
    spec = EpisodeSpec(room, room.objects[0].type_id, 4)
    runner = EpisodeRunner(model, EpisodeConfig(max_steps=1), np.random.default_rng(0))
    runner.begin(spec)
    traj = runner.rollout()
    assert len(traj) == 1 and traj.ended
    runner = EpisodeRunner(model, EpisodeConfig(), np.random.default_rng(0))
    runner.begin(spec)
    traj = runner.rollout(max_len=20)
    for s in traj.steps:
        assert np.exp(s.log_prob) > 0 and s.rule_fired == "train_bypass"


def test_rollout_is_deterministic_under_seed():
    model = _model()
    room = generate_room("living", 2)
    spec = EpisodeSpec(room, room.objects[0].type_id, 9)
    runs = []
    for _ in range(2):
        runner = EpisodeRunner(model, EpisodeConfig(), np.random.default_rng(5))
        runner.begin(spec)
        runs.append([(s.action, s.reward) for s in runner.rollout(max_len=100).steps])
    assert runs[0] == runs[1]


def test_cached_gradients_equal_recomputed():
    model = _model()
    room = generate_room("bedroom", 0)
    runner = EpisodeRunner(model, EpisodeConfig(), np.random.default_rng(1))
    runner.begin(EpisodeSpec(room, room.objects[0].type_id, 2))
    traj = runner.rollout(max_len=20, keep_cache=True)
    g1, _ = a2c_update(model.policy, model.policy_params, traj, use_cached=True)
    g2, _ = a2c_update(model.policy, model.policy_params, traj, use_cached=False)
    for k in g1:
        np.testing.assert_allclose(g1[k], g2[k], atol=1e-12)
