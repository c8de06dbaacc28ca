"""Dynamic oracle for the top-down transition system.

From any reachable state the oracle picks one action:

1. If the top open constituent has at least one word and closing it now
   would produce a gold constituent not yet produced, or no gold constituent
   with its label and start ends later than the current position, Close.
2. Otherwise Open the outermost gold constituent starting at the next
   unshifted word that has not been opened yet. Earlier opens of a
   ``(label, start)`` pair are credited to the outermost gold entries with
   that pair.
3. Otherwise Shift.

Once the buffer is empty Close is the only legal action and is returned
whether or not rule 1 fires. Before that, rule 1 never closes the bottom
constituent of the stack, since the remaining words could not be attached.
:func:`oracle_step` reports rule 1 when a Close produces a gold constituent
and rule 0 for a forced Close at the end of the buffer.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass

from tdexplore.transition import (
    CLOSE,
    SHIFT,
    Action,
    ParserState,
    TransitionError,
    _apply_unchecked,
    illegal_reason,
    legal_actions,
)
from tdexplore.treebank import Tree

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GoldIndex:
    """Gold constituents indexed for the oracle's membership tests.

    ``by_start[j]`` lists ``(label, start, end)`` triples (one entry per gold
    node, duplicates included) ordered outermost first: descending end, then
    gold pre-order.
    """

    tree: Tree
    by_start: dict
    all: Counter
    label_start: Counter
    max_end: dict

    def constituents_at(self, j: int) -> list:
        return self.by_start.get(j, [])


def build_gold_index(gold: Tree) -> GoldIndex:
    entries = [((nd.label, nd.start, nd.end), i) for i, nd in enumerate(gold.nodes())]
    by_start: dict = {}
    for triple, order in sorted(entries, key=lambda e: (e[0][1], -e[0][2], e[1])):
        by_start.setdefault(triple[1], []).append(triple)
    all_ = Counter(t for t, _ in entries)
    label_start = Counter((l, s) for (l, s, _), _ in entries)
    max_end: dict = {}
    for (l, s, e), _ in entries:
        max_end[l, s] = max(e, max_end.get((l, s), -1))
    return GoldIndex(gold, by_start, all_, label_start, max_end)


def oracle_step(state: ParserState, index: GoldIndex) -> tuple[Action, int]:
    """The oracle action together with the id (0-3) of the rule that chose it."""
    if state.finished:
        raise TransitionError("the oracle is undefined on a finished state")
    j = state.shifted
    top = state.top
    if top is not None and top.children:
        key = (top.label, top.start, j)
        if j == state.n:
            return CLOSE, 1 if index.all.get(key, 0) > state.produced.get(key, 0) else 0
        # The root may not close before the buffer is empty.
        if len(state.stack) > 1:
            if index.all.get(key, 0) > state.produced.get(key, 0):
                return CLOSE, 1
            if index.max_end.get((top.label, top.start), -1) <= j:
                return CLOSE, 1
    elif j == state.n:
        # Unreachable: a top constituent with no words implies an unshifted word.
        raise TransitionError(f"unreachable state {state.summary()}")
    credited: dict = {}
    for label, start, _ in index.constituents_at(j):
        key = (label, start)
        seen = credited.get(key, 0)
        credited[key] = seen + 1
        if seen >= state.opened.get(key, 0):
            action = Action.open(label)
            if illegal_reason(state, action) is None:
                return action, 2
            log.debug("capped oracle: %s illegal at %s", action, state.summary())
            break
    if top is None:
        raise TransitionError(f"no legal oracle action at {state.summary()}")
    return SHIFT, 3


def oracle_action(state: ParserState, index: GoldIndex) -> Action:
    return oracle_step(state, index)[0]


def oracle_completion(state: ParserState, index: GoldIndex) -> tuple[list[Action], Tree]:
    """Follow the oracle until the derivation finishes."""
    actions = []
    bound = state.system.max_steps(state.n)
    while not state.finished:
        if len(actions) > bound:
            raise TransitionError("oracle completion exceeded the step bound")
        a = oracle_action(state, index)
        if illegal_reason(state, a) is not None:
            raise TransitionError(f"oracle chose illegal {a} at {state.summary()}")
        state = _apply_unchecked(state, a)
        actions.append(a)
    return actions, state.root


def best_reachable_f1(state: ParserState, gold: Tree, lower: float = 0.0) -> float:
    """Highest labeled F1 (root included) of any completion of ``state``.

    Exhaustive depth-first search under the state's caps with exact
    prunings. A branch is cut when an admissible bound (every open
    constituent will be produced, each future match needs a gold constituent
    that is still reachable) cannot beat the incumbent, or when an earlier
    branch reached an equivalent state with at least as many matches, no
    more produced constituents and no more Opens spent. When no further match
    is possible the bound is attained exactly and the branch is settled
    without expanding it. ``lower`` seeds the incumbent.
    """
    gold_counts = Counter((nd.label, nd.start, nd.end) for nd in gold.nodes())
    gold_keys = sorted(gold_counts)
    g = sum(gold_counts.values())
    matched = sum(min(c, gold_counts.get(t, 0)) for t, c in state.produced.items())
    produced = sum(state.produced.values())
    seen: dict = {}
    best = lower

    def bound(s, m, p):
        """(upper bound on the final F1, upper bound on further matches)."""
        j = s.shifted
        ahead = 0
        slots: Counter = Counter()
        for t in gold_keys:
            rest = gold_counts[t] - s.produced.get(t, 0)
            if rest <= 0 or t[2] < j:
                continue
            slots[t[0], t[1]] += rest
            if t[1] >= j:
                ahead += rest
        # an open constituent can only match a gold one with its own (label, start),
        # and the root can only close at the end of the sentence
        stacked = Counter((c.label, c.start) for c in s.stack[1:])
        behind = sum(min(c, slots[k]) for k, c in stacked.items() if k[1] < j)
        at_j = sum(min(c, slots[k]) for k, c in stacked.items() if k[1] >= j)
        if s.stack:
            root = s.stack[0]
            hit = gold_counts.get((root.label, 0, s.n), 0) > s.produced.get((root.label, 0, s.n), 0)
            if j == 0:
                at_j += hit
            else:
                behind += hit
        future = min(g - m, behind + ahead)
        # every stack entry gets closed; matches beyond what the stack can supply need new Opens
        closes = len(s.stack) + max(0, future - behind - at_j)
        return 2.0 * (m + future) / (p + closes + g), future

    def dominated(s, m, p):
        j = s.shifted
        key = (
            tuple((c.label, c.start, bool(c.children)) for c in s.stack),
            j,
            tuple(min(s.produced.get(t, 0), gold_counts[t]) for t in gold_keys if t[2] >= j),
        )
        # fewer Opens so far leaves every continuation available
        prior = seen.setdefault(key, [])
        if any(m2 >= m and p2 <= p and c2 <= s.chain and o2 <= s.total_opens for m2, p2, c2, o2 in prior):
            return True
        prior.append((m, p, s.chain, s.total_opens))
        return False

    def search(s, m, p):
        nonlocal best
        if s.finished:
            best = max(best, 2.0 * m / (p + g))
            return
        value, future = bound(s, m, p)
        if value <= best:
            return
        if future == 0:
            # shifting the rest and closing everything attains the bound
            best = value
            return
        if dominated(s, m, p):
            return
        for a in legal_actions(s):
            if a.kind == "close":
                t = (s.top.label, s.top.start, s.shifted)
                hit = s.produced.get(t, 0) < gold_counts.get(t, 0)
                search(_apply_unchecked(s, a), m + hit, p + 1)
            else:
                search(_apply_unchecked(s, a), m, p)

    search(state, matched, produced)
    return best
