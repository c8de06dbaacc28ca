import random

import pytest

from tdexplore.transition import (
    CLOSE,
    SHIFT,
    Action,
    System,
    TransitionError,
    actions_to_tree,
    apply,
    format_actions,
    illegal_reason,
    initial_state,
    legal_actions,
    parse_actions,
    run_actions,
    tree_to_actions,
)
from tdexplore.treebank import Tree, read_bracketed

from helpers import random_tree, words

S, NP, VP = (Action.open(x) for x in ("S", "NP", "VP"))


def test_initial_state(system):
    state = initial_state(words(3), system)
    assert (state.shifted, state.stack, state.finished) == (0, (), False)
    assert legal_actions(state) == (S, NP, VP)


def test_only_close_when_buffer_done(system):
    state = run_actions(words(2), [S, SHIFT, SHIFT], system)
    assert legal_actions(state) == (CLOSE,)


def test_close_excluded_right_after_open(system):
    state = run_actions(words(2), [S, SHIFT, NP], system)
    assert CLOSE not in legal_actions(state)
    assert "no word" in illegal_reason(state, CLOSE)


def test_root_close_waits_for_buffer(system):
    state = run_actions(words(2), [S, SHIFT], system)
    assert legal_actions(state) == (SHIFT, S, NP, VP)


def test_apply_open_and_close(system):
    state = apply(initial_state(words(3), system), S)
    assert [(c.label, c.start) for c in state.stack] == [("S", 0)]
    assert state.shifted == 0
    for a in (NP, SHIFT, SHIFT):
        state = apply(state, a)
    state = apply(state, CLOSE)
    assert state.produced == {("NP", 0, 2): 1}
    assert state.top.children == (Tree("NP", (0, 1)),)


def test_shift_at_end_raises(system):
    state = run_actions(words(1), [S, SHIFT], system)
    with pytest.raises(TransitionError, match="buffer"):
        apply(state, SHIFT)


def test_chain_cap():
    system = System(("X",), open_chain_cap=2)
    state = run_actions(words(2), [Action.open("X")] * 2, system)
    assert legal_actions(state) == (SHIFT,)
    with pytest.raises(TransitionError, match="consecutive Opens"):
        apply(state, Action.open("X"))


def test_total_cap():
    system = System(("X",), open_chain_cap=5, open_total_slope=0, open_total_offset=3)
    state = run_actions(words(3), [Action.open("X"), SHIFT, Action.open("X"), SHIFT, Action.open("X")], system)
    assert state.total_opens == 3
    assert Action.open("X") not in legal_actions(state)


def test_linearization(snv):
    sentence, tree = snv
    assert format_actions(tree_to_actions(tree)) == "NT(S) NT(NP) SHIFT SHIFT REDUCE NT(VP) SHIFT REDUCE REDUCE"
    assert actions_to_tree(sentence, tree_to_actions(tree)) == tree
    assert tree_to_actions(Tree("X", (0,))) == [Action.open("X"), SHIFT, CLOSE]


def test_truncated_sequence(snv):
    sentence, tree = snv
    with pytest.raises(TransitionError, match="unfinished"):
        actions_to_tree(sentence, tree_to_actions(tree)[:-1])


def test_action_text_round_trip():
    acts = [S, SHIFT, CLOSE, Action.open("-LRB-")]
    assert parse_actions(format_actions(acts)) == acts
    with pytest.raises(ValueError):
        parse_actions("NT(S) POP")


def test_round_trip_random():
    rng = random.Random(3)
    for _ in range(300):
        n = rng.randint(1, 7)
        tree = random_tree(rng, n, labels=("A", "B", "C"))
        acts = tree_to_actions(tree)
        assert len(acts) == n + 2 * tree.num_nodes()
        assert actions_to_tree(words(n), acts) == tree


def test_random_walks_terminate_and_keep_invariants():
    rng = random.Random(0)
    system = System(("A", "B"), open_chain_cap=3)
    for _ in range(300):
        n = rng.randint(1, 6)
        state = initial_state(n, system)
        steps = 0
        closed = []
        while not state.finished:
            legal = legal_actions(state)
            assert legal, state.summary()
            assert all(illegal_reason(state, a) is None for a in legal)
            starts = [c.start for c in state.stack]
            assert starts == sorted(starts)
            a = rng.choice(legal)
            if a == CLOSE:
                closed.append(state.top.start)
            state = apply(state, a)
            steps += 1
        assert steps <= system.max_steps(n)
        assert state.shifted == n and state.stack == ()
        state.root.check(n)
        assert all(s < e for _, s, e in state.produced)
        assert len(closed) == sum(state.produced.values())


def test_unary_duplicates_are_counted():
    [(sentence, tree)] = read_bracketed("(X (X (X a)))")
    state = run_actions(sentence, tree_to_actions(tree), System(("X",)))
    assert state.produced == {("X", 0, 1): 3}
    assert state.opened == {("X", 0): 3}


def test_legal_actions_needs_inventory():
    with pytest.raises(TransitionError):
        legal_actions(initial_state(2))
