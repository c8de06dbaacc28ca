import numpy as np
import pytest

from tdexplore.decode import (
    build_candidate_set,
    decode_beam,
    decode_greedy,
    sample_tree,
    score_path,
    sentence_rng,
)
from tdexplore.scorer import init_params
from tdexplore.transition import Action, legal_actions
from tdexplore.treebank import Tree

from helpers import all_derivations, words

SMALL_CAPS = {"open_chain_cap": 1, "open_total_slope": 1, "open_total_offset": 1}


@pytest.fixture(scope="module")
def acceptance_model(acceptance_corpus):
    return init_params(("S", "X"), seed=3, scale=1.0, n_bits=14)


def test_forced_sample():
    params = init_params(("X",), scale=0.0, n_bits=8, open_chain_cap=1)
    for seed in range(5):
        cand = sample_tree(words(1), params, np.random.default_rng(seed))
        assert cand.tree == Tree("X", (0,))
        assert cand.log_prob == 0.0


def test_samples_are_legal_and_reproducible(acceptance_corpus, acceptance_model):
    for i, (sentence, _) in enumerate(acceptance_corpus[:50]):
        a = sample_tree(sentence, acceptance_model, sentence_rng(1, 2, i))
        b = sample_tree(sentence, acceptance_model, sentence_rng(1, 2, i))
        assert a.actions == b.actions and a.log_prob == b.log_prob
        for step in a.trace:
            assert step.actions == legal_actions(step.state)
        a.tree.check(sentence.n)
        assert a.log_prob == pytest.approx(score_path(sentence, acceptance_model, a.actions).log_prob)


def test_sampling_frequencies_match_path_probabilities():
    params = init_params(("A", "B"), seed=2, scale=1.0, n_bits=10, **SMALL_CAPS)
    sentence = words(2)
    derivs = all_derivations(sentence, params.system)
    assert len(derivs) <= 20
    probs = np.array([np.exp(score_path(sentence, params, d).log_prob) for d in derivs])
    assert probs.sum() == pytest.approx(1.0)
    index = {tuple(d): i for i, d in enumerate(derivs)}
    rng = np.random.default_rng(0)
    n = 100_000
    counts = np.zeros(len(derivs))
    for _ in range(n):
        counts[index[tuple(sample_tree(sentence, params, rng).actions)]] += 1
    sigma = np.sqrt(n * probs * (1 - probs))
    assert np.all(np.abs(counts - n * probs) <= 3 * sigma)


def test_candidate_set_layout(snv):
    sentence, gold = snv
    params = init_params(("S", "NP", "VP"), seed=0, n_bits=10)
    cset, std = build_candidate_set(sentence, gold, params, 2, np.random.default_rng(0))
    assert cset.k == 2
    assert [c.is_gold for c in cset.candidates] == [False, True]
    assert cset.candidates[-1].cost == -1.0
    assert cset.candidates[-1].tree == gold
    assert std.count == 2
    with pytest.raises(ValueError):
        build_candidate_set(sentence, gold, params, 1, np.random.default_rng(0))
    only, _ = build_candidate_set(sentence, gold, params, 1, np.random.default_rng(0), test_mode=True)
    assert [c.is_gold for c in only.candidates] == [True]


def test_candidate_sets_reproducible(acceptance_corpus, acceptance_model):
    def run():
        out = []
        for i, (sentence, gold) in enumerate(acceptance_corpus[:40]):
            cset, _ = build_candidate_set(sentence, gold, acceptance_model, 10, sentence_rng(7, 1, i))
            out.append(sorted(str(c.tree) for c in cset.candidates))
        return out

    assert run() == run()


def test_beam_one_is_greedy(acceptance_corpus, acceptance_model):
    for sentence, _ in acceptance_corpus[:100]:
        g = decode_greedy(sentence, acceptance_model)
        b = decode_beam(sentence, acceptance_model, 1)
        assert b.actions == g.actions
        assert b.log_prob == pytest.approx(g.log_prob)


def test_zero_weights_tie_break():
    params = init_params(("A", "B"), scale=0.0, n_bits=8)
    cand = decode_greedy(words(2), params)
    # Shift < Open(A) < Open(B) < Close: open A once, then shift everything
    assert cand.actions == [Action.open("A"), *[Action("shift")] * 2, Action("close")]
    assert decode_beam(words(2), params, 1).actions == cand.actions


def test_wide_beam_is_exact():
    for seed in range(5):
        params = init_params(("A", "B"), seed=seed, scale=1.0, n_bits=10, **SMALL_CAPS)
        for n in (1, 2, 3):
            sentence = words(n)
            derivs = all_derivations(sentence, params.system)
            scores = [score_path(sentence, params, d).log_prob for d in derivs]
            best = derivs[int(np.argmax(scores))]
            got = decode_beam(sentence, params, len(derivs))
            assert got.actions == best
            assert got.log_prob == pytest.approx(max(scores))


def test_beam_score_monotone_in_width(acceptance_corpus, acceptance_model):
    for sentence, _ in acceptance_corpus[:60]:
        scores = [decode_beam(sentence, acceptance_model, w).log_prob for w in (1, 2, 4, 8, 16)]
        assert all(b >= a - 1e-12 for a, b in zip(scores, scores[1:])), scores
        assert decode_greedy(sentence, acceptance_model).log_prob <= decode_beam(sentence, acceptance_model, 10).log_prob + 1e-12


def test_beam_width_validated():
    params = init_params(("A",), n_bits=8)
    with pytest.raises(ValueError):
        decode_beam(words(1), params, 0)
