"""Ancestral sampling, greedy and beam decoding, and candidate sets."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from tdexplore.evalf1 import RunningStandardizer, cost as tree_cost, standardize
from tdexplore.scorer import ScorerParams, _distribution
from tdexplore.transition import Action, ParserState, _apply_unchecked, initial_state, tree_to_actions
from tdexplore.treebank import Sentence, Tree


@dataclass(frozen=True)
class Step:
    """One scored decision: the state, its legal actions and their log probs."""

    state: ParserState
    actions: tuple
    ids: np.ndarray
    log_probs: np.ndarray
    chosen: int


@dataclass
class Candidate:
    tree: Tree
    actions: list
    log_prob: float
    is_gold: bool = False
    cost: float = math.nan
    standardized_cost: float = math.nan
    trace: list = field(default_factory=list, repr=False, compare=False)


@dataclass
class CandidateSet:
    sentence: Sentence
    gold: Tree
    candidates: list

    @property
    def k(self) -> int:
        return len(self.candidates)


def sentence_rng(seed: int, epoch: int, index: int) -> np.random.Generator:
    """Independent stream for one sentence in one epoch."""
    return np.random.default_rng([seed, epoch, index])


def _sample_index(log_probs: np.ndarray, rng: np.random.Generator) -> int:
    probs = np.exp(log_probs).tolist()
    u = rng.random() * sum(probs)
    acc = 0.0
    for i, p in enumerate(probs):
        acc += p
        if u < acc:
            return i
    return len(probs) - 1


def _finish(state: ParserState, trace: list) -> Candidate:
    return Candidate(
        tree=state.root,
        actions=[s.actions[s.chosen] for s in trace],
        log_prob=float(sum(s.log_probs[s.chosen] for s in trace)),
        trace=trace,
    )


def sample_tree(sentence: Sentence, params: ScorerParams, rng: np.random.Generator) -> Candidate:
    state = initial_state(sentence, params.system)
    trace = []
    while not state.finished:
        actions, ids, lp = _distribution(state, sentence, params)
        i = _sample_index(lp, rng)
        trace.append(Step(state, actions, ids, lp, i))
        state = _apply_unchecked(state, actions[i])
    return _finish(state, trace)


def score_path(sentence: Sentence, params: ScorerParams, actions) -> Candidate:
    """Replay a fixed action sequence, recording the model's decisions."""
    state = initial_state(sentence, params.system)
    trace = []
    for a in actions:
        legal, ids, lp = _distribution(state, sentence, params)
        if a not in legal:
            raise ValueError(f"{a} is not legal at {state.summary()}")
        i = legal.index(a)
        trace.append(Step(state, legal, ids, lp, i))
        state = _apply_unchecked(state, a)
    if not state.finished:
        raise ValueError("action sequence does not finish the derivation")
    return _finish(state, trace)


def build_candidate_set(
    sentence: Sentence,
    gold: Tree,
    params: ScorerParams,
    k: int,
    rng: np.random.Generator,
    standardizer: RunningStandardizer | None = None,
    *,
    include_gold: bool = True,
    standardize_costs: bool = True,
    test_mode: bool = False,
) -> tuple[CandidateSet, RunningStandardizer]:
    """Samples plus (by default) the gold tree, with raw and standardised costs.

    Samples come first and the gold tree last; costs are streamed through
    ``standardizer`` in that order and the updated standardizer is returned.
    ``test_mode`` permits ``k == 1``: the gold tree alone, or a single
    sample when ``include_gold`` is off.
    """
    if k < (1 if test_mode else 2):
        raise ValueError("a candidate set needs k >= 2")
    n_samples = k - 1 if include_gold else k
    cands = [sample_tree(sentence, params, rng) for _ in range(n_samples)]
    if include_gold:
        g = score_path(sentence, params, tree_to_actions(gold))
        g.is_gold = True
        cands.append(g)
    std = standardizer or RunningStandardizer()
    for c in cands:
        c.cost = tree_cost(c.tree, gold)
        if standardize_costs:
            c.standardized_cost, std = standardize(std, c.cost)
        else:
            c.standardized_cost = c.cost
    return CandidateSet(sentence, gold, cands), std


def decode_greedy(sentence: Sentence, params: ScorerParams) -> Candidate:
    """Argmax at each step; ties go to the earliest action (Shift, Opens, Close)."""
    state = initial_state(sentence, params.system)
    trace = []
    while not state.finished:
        actions, ids, lp = _distribution(state, sentence, params)
        i = int(np.argmax(lp))
        trace.append(Step(state, actions, ids, lp, i))
        state = _apply_unchecked(state, actions[i])
    return _finish(state, trace)


def decode_beam(sentence: Sentence, params: ScorerParams, width: int) -> Candidate:
    """Action-level beam search over cumulative log probability.

    A hypothesis that finishes leaves the beam and competes with the other
    finished ones on total log probability, without length normalisation.
    """
    if width < 1:
        raise ValueError("beam width must be >= 1")
    # (score, state, backpointer) with backpointer = (action, previous backpointer)
    beam = [(0.0, initial_state(sentence, params.system), None)]
    best = None
    while beam:
        if best is not None and best[0] >= beam[0][0]:
            break
        expansions = []
        for score, state, bp in beam:
            actions, _, lp = _distribution(state, sentence, params)
            expansions.extend((score + float(lp[i]), state, bp, a) for i, a in enumerate(actions))
        expansions.sort(key=lambda e: -e[0])
        beam = []
        for score, state, bp, a in expansions[:width]:
            nxt = _apply_unchecked(state, a)
            if nxt.finished:
                if best is None or score > best[0]:
                    best = (score, nxt, (a, bp))
            else:
                beam.append((score, nxt, (a, bp)))
    score, state, bp = best
    actions: list[Action] = []
    while bp is not None:
        actions.append(bp[0])
        bp = bp[1]
    actions.reverse()
    return Candidate(tree=state.root, actions=actions, log_prob=score)
