import math
import random

import numpy as np
import pytest

from tdexplore.scorer import (
    TEMPLATE_VERSION,
    ScorerParams,
    featurize,
    grad_log_prob,
    init_params,
    log_softmax,
    score,
    score_margin,
    state_features,
)
from tdexplore.transition import SHIFT, Action, System, apply, initial_state, legal_actions, run_actions
from tdexplore.treebank import Sentence

from helpers import words

LABELS = ("A", "B", "C")


def random_state(rng: random.Random, system: System, sentence: Sentence):
    state = initial_state(sentence, system)
    for _ in range(rng.randint(0, 3 * sentence.n)):
        acts = legal_actions(state)
        nxt = apply(state, rng.choice(acts))
        if nxt.finished:
            break
        state = nxt
    return state


def test_features_deterministic_and_empty_stack():
    s = words(3)
    state = initial_state(s, System(LABELS))
    feats = state_features(state, s)
    assert feats == state_features(initial_state(s, System(LABELS)), s)
    assert "s0=<empty>" in feats
    assert not any(f.startswith(("s0=", "s1=")) and not f.endswith("<empty>") for f in feats)
    assert featurize(state, s) == featurize(state, s)


def test_word_change_only_touches_word_features():
    system = System(LABELS)
    a, b = Sentence(("x", "y", "z")), Sentence(("x", "q", "z"))
    sa = run_actions(a, [Action.open("A"), SHIFT], system)
    sb = run_actions(b, [Action.open("A"), SHIFT], system)
    diff = set(state_features(sa, a)) ^ set(state_features(sb, b))
    assert diff
    assert all("y" in f or "q" in f for f in diff)


def test_zero_weights_uniform():
    params = init_params(LABELS, scale=0.0, n_bits=10)
    state = initial_state(words(2), params.system)
    dist = score(state, words(2), params)
    assert np.allclose(dist.probs, 1 / 3)


def test_single_action_log_prob_zero():
    params = init_params(LABELS, seed=1, n_bits=10)
    s = words(1)
    state = run_actions(s, [Action.open("A"), SHIFT], params.system)
    dist = score(state, s, params)
    assert len(dist.actions) == 1 and dist.log_probs[0] == 0.0
    assert score_margin(state, s, params, dist.actions[0], 5.0).log_probs[0] == 0.0
    assert grad_log_prob(state, s, params, dist.actions[0]) == {}


def test_softmax_examples():
    assert np.exp(log_softmax(np.array([2.0, 0.0]))) == pytest.approx([0.8808, 0.1192], abs=1e-4)
    # margin on the non-oracle action: [2, 0 + 1]
    assert np.exp(log_softmax(np.array([2.0, 1.0]))) == pytest.approx([0.7311, 0.2689], abs=1e-4)


def test_margin_on_uniform_pair():
    params = init_params(("X",), scale=0.0, n_bits=10)
    s = words(2)
    state = run_actions(s, [Action.open("X"), SHIFT], params.system)
    # legal: Shift, Open(X); Close of the root must wait for the buffer
    dist = score_margin(state, s, params, SHIFT, 1.0)
    assert dist.actions == (SHIFT, Action.open("X"))
    assert dist.probs[0] == pytest.approx(1 / (1 + math.e))


def test_normalization_and_margin_monotone():
    rng = random.Random(2)
    params = init_params(LABELS, seed=3, scale=1.0, n_bits=12)
    for _ in range(200):
        s = words(rng.randint(1, 5))
        state = random_state(rng, params.system, s)
        ml = score(state, s, params)
        assert ml.probs.sum() == pytest.approx(1.0, abs=1e-9)
        oracle = rng.choice(ml.actions)
        smm = score_margin(state, s, params, oracle)
        assert smm.probs.sum() == pytest.approx(1.0, abs=1e-9)
        if len(ml.actions) > 1:
            assert smm.log_prob(oracle) < ml.log_prob(oracle)
        else:
            assert smm.log_prob(oracle) == ml.log_prob(oracle)


def test_action_independent_direction_has_zero_gradient():
    # Every template is conjoined with the action, so an action-independent
    # feature is emulated by raising all weights at once: each action's score
    # moves by the same amount and log p is unchanged.
    rng = random.Random(1)
    for scale in (0.0, 1.0):
        params = init_params(LABELS, seed=2, scale=scale, n_bits=10)
        s = words(3)
        state = random_state(rng, params.system, s)
        for a in legal_actions(state):
            assert sum(grad_log_prob(state, s, params, a).values()) == pytest.approx(0.0, abs=1e-12)


def _fd_rel_error(state, sentence, params, action, oracle=None, h=1e-5):
    g = grad_log_prob(state, sentence, params, action, oracle)
    coords = sorted(g)
    fd = []
    for i in coords:
        old = params.weights[i]
        params.weights[i] = old + h
        up = (score_margin(state, sentence, params, oracle) if oracle else score(state, sentence, params)).log_prob(action)
        params.weights[i] = old - h
        dn = (score_margin(state, sentence, params, oracle) if oracle else score(state, sentence, params)).log_prob(action)
        params.weights[i] = old
        fd.append((up - dn) / (2 * h))
    a, b = np.array([g[i] for i in coords]), np.array(fd)
    return np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-300)


@pytest.mark.parametrize("margin", [False, True])
def test_gradient_matches_finite_differences(margin):
    rng = random.Random(4)
    params = init_params(LABELS, seed=5, scale=0.5, n_bits=12)
    checked = 0
    while checked < 40:
        s = words(rng.randint(1, 5))
        state = random_state(rng, params.system, s)
        acts = legal_actions(state)
        if len(acts) < 2:
            continue
        oracle = rng.choice(acts) if margin else None
        assert _fd_rel_error(state, s, params, rng.choice(acts), oracle) <= 1e-6
        checked += 1


def test_save_load_round_trip(tmp_path):
    params = init_params(LABELS, seed=9, n_bits=12, open_chain_cap=3)
    params.weights[::7] = 0.0
    path = tmp_path / "m.npz"
    params.save(path)
    back = ScorerParams.load(path)
    assert np.array_equal(back.weights, params.weights)
    assert back.labels == LABELS and back.open_chain_cap == 3
    assert back.template_version == TEMPLATE_VERSION


def test_load_rejects_other_templates(tmp_path):
    params = init_params(LABELS, n_bits=8)
    params.template_version = "td-v0"
    params.save(tmp_path / "old.npz")
    with pytest.raises(ValueError, match="td-v0"):
        ScorerParams.load(tmp_path / "old.npz")


def test_weights_must_be_power_of_two():
    with pytest.raises(ValueError):
        ScorerParams(np.zeros(10), LABELS)
