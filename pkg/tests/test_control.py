import numpy as np
import pytest
from hypothesis import given, strategies as st

from dita.control import RULES, ControlMode, decide_action, decide_from_uniforms, restrict_to_sub
from dita.errors import ContractError
from dita.judge import JudgeOutput

from oracles import mixture_law


def test_restrict_to_sub_examples():
    np.testing.assert_allclose(restrict_to_sub(np.full(6, 1 / 6)), [0.2] * 5 + [0.0])
    p = np.array([0.1, 0.2, 0.3, 0.25, 0.15, 0.0])
    np.testing.assert_allclose(restrict_to_sub(p), p)
    np.testing.assert_allclose(restrict_to_sub([0, 0, 0, 0, 0, 1.0]), [0.2] * 5 + [0.0])


def test_threshold_forces_done():
    p = np.array([0.06] * 5 + [0.7])
    for seed in range(20):
        d = decide_action(p, JudgeOutput(0.9, 0.1), ControlMode.EVAL, np.random.default_rng(seed))
        assert d.action == 5 and d.rule_fired == "threshold_done"


def test_judge_says_continue_never_done():
    p = np.array([0.1] * 5 + [0.5])
    acts, rules = decide_from_uniforms(p, JudgeOutput(0.9, 0.1), "eval", np.full(1000, 0.95),
                                       np.linspace(0, 0.999, 1000))
    assert not np.any(acts == 5)
    assert set(rules) == {RULES.index("judge_n_then_psub")}


def test_train_mode_samples_pcon_and_rejects_judge():
    p = np.array([0, 0, 0, 0, 0, 1.0])
    d = decide_action(p, None, ControlMode.TRAIN, np.random.default_rng(0))
    assert d.action == 5 and d.rule_fired == "train_bypass"
    with pytest.raises(ContractError):
        decide_action(p, JudgeOutput(0.5, 0.5), ControlMode.TRAIN, np.random.default_rng(0))


def test_eval_without_judge_samples_pcon():
    d = decide_action(np.eye(6)[2], None, ControlMode.EVAL, np.random.default_rng(0))
    assert d.action == 2 and d.rule_fired == "no_judge_pcon"


def test_zero_probability_actions_never_sampled():
    p = np.array([0.5, 0.0, 0.5, 0.0, 0.0, 0.0])
    acts, _ = decide_from_uniforms(p, None, "eval", np.zeros(5), np.array([0.0, 0.3, 0.5, 0.9, 1.0 - 1e-16]))
    assert set(acts.tolist()) <= {0, 2}


@given(st.lists(st.floats(0.01, 1.0), min_size=6, max_size=6), st.floats(0.0, 1.0), st.integers(0, 2**32 - 1))
def test_decisions_deterministic_under_seed(w, p_d, seed):
    p = np.array(w) / np.sum(w)
    j = JudgeOutput(p_d, 1 - p_d)
    a = decide_action(p, j, "eval", np.random.default_rng(seed))
    b = decide_action(p, j, "eval", np.random.default_rng(seed))
    assert a == b
    assert (a.rule_fired == "threshold_done") == (p_d + p[5] >= 1.5)


def test_empirical_law_matches_mixture():
    rng = np.random.default_rng(3)
    n = 200_000
    for _ in range(5):
        p = rng.dirichlet(np.ones(6))
        p_d = rng.random()
        acts, _ = decide_from_uniforms(p, JudgeOutput(p_d, 1 - p_d), "eval", rng.random(n), rng.random(n))
        freq = np.bincount(acts, minlength=6) / n
        law = mixture_law(p, p_d)
        se = np.sqrt(law * (1 - law) / n)
        assert np.all(np.abs(freq - law) <= 4 * se + 1e-12)
