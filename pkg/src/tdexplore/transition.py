"""Top-down Open/Shift/Close transition system.

``Open(label)`` pushes a constituent starting at the next unshifted word,
``Shift`` attaches that word to the top constituent, and ``Close`` pops the
top constituent, ending its span after the last shifted word. Only the top
of the stack can be closed.

States are immutable values; :func:`apply` returns a new state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

from tdexplore.treebank import Sentence, Tree

OPEN, SHIFT_KIND, CLOSE_KIND = "open", "shift", "close"


class TransitionError(ValueError):
    """An illegal action, or an action sequence that does not finish."""


@dataclass(frozen=True, order=False)
class Action:
    kind: str
    label: str | None = None

    def __post_init__(self):
        if self.kind not in (OPEN, SHIFT_KIND, CLOSE_KIND):
            raise ValueError(f"unknown action kind {self.kind!r}")
        if (self.kind == OPEN) != (self.label is not None):
            raise ValueError("a label is required for Open and only for Open")

    @staticmethod
    def open(label: str) -> "Action":
        return Action(OPEN, label)

    @property
    def is_open(self) -> bool:
        return self.kind == OPEN

    def __str__(self):
        if self.kind == OPEN:
            return f"NT({self.label})"
        return "SHIFT" if self.kind == SHIFT_KIND else "REDUCE"

    __repr__ = __str__

    @staticmethod
    def parse(token: str) -> "Action":
        if token == "SHIFT":
            return SHIFT
        if token == "REDUCE":
            return CLOSE
        if token.startswith("NT(") and token.endswith(")") and len(token) > 4:
            return Action.open(token[3:-1])
        raise ValueError(f"cannot parse action {token!r}")


SHIFT = Action(SHIFT_KIND)
CLOSE = Action(CLOSE_KIND)


def format_actions(actions: Iterable[Action]) -> str:
    return " ".join(str(a) for a in actions)


def parse_actions(text: str) -> list[Action]:
    return [Action.parse(tok) for tok in text.split()]


@dataclass(frozen=True)
class System:
    """Label inventory and the caps that guarantee termination.

    ``labels=None`` accepts any Open label (used when replaying gold trees);
    :func:`legal_actions` then enumerates no Opens, so it needs an inventory.
    """

    labels: tuple[str, ...] | None = None
    open_chain_cap: int = 8
    open_total_slope: int = 4
    open_total_offset: int = 8

    def __post_init__(self):
        if self.labels is not None:
            object.__setattr__(self, "labels", tuple(self.labels))
        if self.open_chain_cap < 1:
            raise ValueError("open_chain_cap must be >= 1")
        object.__setattr__(self, "_open_actions", tuple(Action.open(l) for l in (self.labels or ())))

    def open_total_cap(self, n: int) -> int:
        return self.open_total_slope * n + self.open_total_offset

    def max_steps(self, n: int) -> int:
        """Upper bound on the length of any derivation for ``n`` words."""
        return n + 2 * self.open_total_cap(n)

    def action_order(self, action: Action) -> int:
        """Shift < Open(label) in inventory order < Close."""
        if action.kind == SHIFT_KIND:
            return 0
        if action.kind == CLOSE_KIND:
            return 1 + len(self.labels or ())
        return 1 + self.labels.index(action.label)


@dataclass(frozen=True)
class OpenConstituent:
    label: str
    start: int
    children: tuple = ()


@dataclass(frozen=True)
class ParserState:
    """Stack of open constituents plus buffer position and ledgers.

    ``produced`` counts ``(label, start, end)`` of closed constituents and
    ``opened`` counts ``(label, start)`` of every Open so far. Both are plain
    dicts that are never mutated after the state is built.
    """

    n: int
    system: System
    stack: tuple[OpenConstituent, ...] = ()
    shifted: int = 0
    produced: dict = field(default_factory=dict)
    opened: dict = field(default_factory=dict)
    chain: int = 0
    total_opens: int = 0
    last_action: Action | None = None
    root: Tree | None = None

    @property
    def finished(self) -> bool:
        return self.root is not None

    @property
    def top(self) -> OpenConstituent | None:
        return self.stack[-1] if self.stack else None

    def summary(self) -> str:
        stack = " ".join(f"{c.label}@{c.start}" for c in self.stack)
        return f"j={self.shifted}/{self.n} stack=[{stack}]"


def _n_of(sentence) -> int:
    if isinstance(sentence, int):
        return sentence
    return sentence.n if isinstance(sentence, Sentence) else len(sentence)


def initial_state(sentence: Sentence | int, system: System | None = None) -> ParserState:
    n = _n_of(sentence)
    if n < 1:
        raise TransitionError("sentence must have at least one word")
    return ParserState(n=n, system=system or System())


def _open_legal(state: ParserState) -> bool:
    sys = state.system
    return (
        state.shifted < state.n
        and state.chain < sys.open_chain_cap
        and state.total_opens < sys.open_total_cap(state.n)
    )


def _close_legal(state: ParserState) -> bool:
    top = state.top
    return top is not None and bool(top.children) and (len(state.stack) > 1 or state.shifted == state.n)


def legal_actions(state: ParserState) -> tuple[Action, ...]:
    """Legal actions in canonical order (Shift, Opens by label, Close)."""
    if state.finished:
        raise TransitionError("no actions are legal in a finished state")
    if state.system.labels is None:
        raise TransitionError("legal_actions needs a System with a label inventory")
    out = []
    if state.stack and state.shifted < state.n:
        out.append(SHIFT)
    if _open_legal(state):
        out.extend(state.system._open_actions)
    if _close_legal(state):
        out.append(CLOSE)
    return tuple(out)


def illegal_reason(state: ParserState, action: Action) -> str | None:
    """Why ``action`` is illegal in ``state``, or None if it is legal."""
    if state.finished:
        return "state is finished"
    if action.kind == SHIFT_KIND:
        if state.shifted >= state.n:
            return "Shift with an empty buffer"
        if not state.stack:
            return "Shift with an empty stack"
    elif action.kind == OPEN:
        labels = state.system.labels
        if labels is not None and action.label not in labels:
            return f"label {action.label!r} is not in the inventory"
        if state.shifted >= state.n:
            return "Open with an empty buffer"
        if state.chain >= state.system.open_chain_cap:
            return f"more than {state.system.open_chain_cap} consecutive Opens"
        if state.total_opens >= state.system.open_total_cap(state.n):
            return f"more than {state.system.open_total_cap(state.n)} Opens in total"
    else:
        if not state.stack:
            return "Close with an empty stack"
        if not state.stack[-1].children:
            return "Close of a constituent with no words"
        if len(state.stack) == 1 and state.shifted < state.n:
            return "Close of the root before the buffer is empty"
    return None


def apply(state: ParserState, action: Action) -> ParserState:
    reason = illegal_reason(state, action)
    if reason is not None:
        raise TransitionError(f"illegal {action} at {state.summary()}: {reason}")
    return _apply_unchecked(state, action)


def _apply_unchecked(state: ParserState, action: Action) -> ParserState:
    stack = state.stack
    if action.kind == SHIFT_KIND:
        top = stack[-1]
        top = OpenConstituent(top.label, top.start, top.children + (state.shifted,))
        return ParserState(
            state.n, state.system, stack[:-1] + (top,), state.shifted + 1,
            state.produced, state.opened, 0, state.total_opens, action,
        )
    if action.kind == OPEN:
        key = (action.label, state.shifted)
        opened = dict(state.opened)
        opened[key] = opened.get(key, 0) + 1
        return ParserState(
            state.n, state.system, stack + (OpenConstituent(action.label, state.shifted),),
            state.shifted, state.produced, opened, state.chain + 1, state.total_opens + 1, action,
        )
    top = stack[-1]
    node = Tree(top.label, top.children, top.start, state.shifted)
    key = (top.label, top.start, state.shifted)
    produced = dict(state.produced)
    produced[key] = produced.get(key, 0) + 1
    rest = stack[:-1]
    if rest:
        parent = rest[-1]
        rest = rest[:-1] + (OpenConstituent(parent.label, parent.start, parent.children + (node,)),)
        root = None
    else:
        root = node
    return ParserState(
        state.n, state.system, rest, state.shifted, produced, state.opened,
        0, state.total_opens, action, root,
    )


def tree_to_actions(tree: Tree) -> list[Action]:
    """Depth-first linearisation: Open on entry, Shift per word, Close on exit."""
    out: list[Action] = []

    def visit(node: Tree):
        out.append(Action.open(node.label))
        for c in node.children:
            if isinstance(c, Tree):
                visit(c)
            else:
                out.append(SHIFT)
        out.append(CLOSE)

    visit(tree)
    return out


def run_actions(sentence, actions: Sequence[Action], system: System | None = None) -> ParserState:
    state = initial_state(sentence, system)
    for i, a in enumerate(actions):
        if state.finished:
            raise TransitionError(f"action {i} ({a}) follows a finished derivation")
        state = apply(state, a)
    return state


def actions_to_tree(sentence, actions: Sequence[Action], system: System | None = None) -> Tree:
    state = run_actions(sentence, actions, system)
    if not state.finished:
        raise TransitionError(f"action sequence ends in an unfinished state ({state.summary()})")
    return state.root
