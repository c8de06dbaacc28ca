import random

from tdexplore.treebank import Sentence, Tree


def random_tree(rng: random.Random, n: int, labels=("A", "B"), max_depth=4, start=0, p_unary=0.2) -> Tree:
    """Random tree over words ``start .. start + n - 1``."""
    label = rng.choice(labels)
    if max_depth <= 1:
        return Tree(label, tuple(range(start, start + n)))
    if rng.random() < p_unary:
        return Tree(label, (random_tree(rng, n, labels, max_depth - 1, start, p_unary),))
    cuts = sorted(rng.sample(range(1, n), rng.randint(0, min(n - 1, 3)))) if n > 1 else []
    bounds = [0, *cuts, n]
    kids = []
    for lo, hi in zip(bounds, bounds[1:]):
        if hi - lo == 1 and rng.random() < 0.5:
            kids.append(start + lo)
        else:
            kids.append(random_tree(rng, hi - lo, labels, max_depth - 1, start + lo, p_unary))
    return Tree(label, tuple(kids))


def words(n: int) -> Sentence:
    return Sentence(tuple(f"w{i}" for i in range(n)))


def naive_matched(pred: Tree, gold: Tree, include_root: bool = True) -> tuple[int, int, int]:
    """Matched/predicted/gold counts by explicit list matching."""

    def triples(t):
        out = [(nd.label, nd.start, nd.end) for nd in t.nodes()]
        return out if include_root else out[1:]

    p, g = triples(pred), triples(gold)
    remaining = list(g)
    matched = 0
    for b in p:
        if b in remaining:
            remaining.remove(b)
            matched += 1
    return matched, len(p), len(g)


def all_derivations(sentence, system) -> list:
    """Every legal action sequence for ``sentence``, in canonical DFS order."""
    from tdexplore.transition import apply, initial_state, legal_actions

    out = []
    todo = [(initial_state(sentence, system), ())]
    while todo:
        state, acts = todo.pop()
        if state.finished:
            out.append(list(acts))
            continue
        for a in reversed(legal_actions(state)):
            todo.append((apply(state, a), acts + (a,)))
    return out


def exact_risk(sentence, gold, params, derivations=None):
    """``R = sum_y p(y) cost(y)`` and its gradient (dense), by enumeration."""
    import numpy as np

    from tdexplore.decode import score_path
    from tdexplore.evalf1 import cost
    from tdexplore.training import path_log_prob_grad

    derivations = derivations or all_derivations(sentence, params.system)
    risk = 0.0
    grad = np.zeros_like(params.weights)
    total = 0.0
    for acts in derivations:
        cand = score_path(sentence, params, acts)
        p = float(np.exp(cand.log_prob))
        total += p
        c = cost(cand.tree, gold)
        risk += p * c
        buf, _ = path_log_prob_grad(cand.trace)
        grad += p * c * buf.dense(len(grad))
    assert abs(total - 1.0) < 1e-9, total
    return risk, grad
