"""Sentences, constituency trees, bracketed I/O and synthetic corpora.

Trees are immutable. Leaves are plain ``int`` word indices; every internal
node carries its label and its half-open span ``(start, end)``.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterator, Union

import numpy as np

LRB, RRB = "-LRB-", "-RRB-"


class TreebankError(ValueError):
    """Malformed bracketed input or an invalid tree."""


class GrammarError(ValueError):
    """A synthetic grammar specification that cannot produce a corpus."""


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if not self.tokens:
            raise TreebankError("a sentence needs at least one token")
        for tok in self.tokens:
            if not tok or any(c.isspace() or c in "()" for c in tok):
                raise TreebankError(f"bad token {tok!r}")

    @property
    def n(self) -> int:
        return len(self.tokens)

    def __len__(self):
        return len(self.tokens)

    def __getitem__(self, i):
        return self.tokens[i]


Child = Union["Tree", int]


@dataclass(frozen=True)
class Tree:
    """Labeled constituent over the word span ``[start, end)``."""

    label: str
    children: tuple[Child, ...]
    start: int = field(default=-1)
    end: int = field(default=-1)

    def __post_init__(self):
        children = tuple(self.children)
        object.__setattr__(self, "children", children)
        if not children:
            raise TreebankError(f"empty constituent {self.label!r}")
        pos = _child_start(children[0])
        if self.start == -1:
            object.__setattr__(self, "start", pos)
        elif self.start != pos:
            raise TreebankError(f"{self.label}: span start {self.start} != first child start {pos}")
        for c in children:
            if _child_start(c) != pos:
                raise TreebankError(f"{self.label}: children do not tile the span at {pos}")
            pos = _child_end(c)
        if self.end == -1:
            object.__setattr__(self, "end", pos)
        elif self.end != pos:
            raise TreebankError(f"{self.label}: span end {self.end} != last child end {pos}")

    @property
    def span(self) -> tuple[int, int]:
        return (self.start, self.end)

    def nodes(self) -> Iterator["Tree"]:
        """Internal nodes in pre-order."""
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(c for c in reversed(node.children) if isinstance(c, Tree))

    def leaves(self) -> list[int]:
        out = []
        for node in self.nodes():
            out.extend(c for c in node.children if not isinstance(c, Tree))
        return sorted(out)

    def num_nodes(self) -> int:
        return sum(1 for _ in self.nodes())

    def check(self, n: int | None = None) -> "Tree":
        """Raise unless leaves are exactly 0..n-1 (n defaults to ``end``)."""
        n = self.end if n is None else n
        if self.start != 0 or self.end != n:
            raise TreebankError(f"tree spans {self.span}, expected (0, {n})")
        return self

    def __str__(self):
        return _to_string(self, None)


def _child_start(c: Child) -> int:
    return c.start if isinstance(c, Tree) else c


def _child_end(c: Child) -> int:
    return c.end if isinstance(c, Tree) else c + 1


def brackets(tree: Tree, include_root: bool = True) -> Counter:
    """Multiset of ``(label, start, end)`` triples, one per internal node."""
    out = Counter((node.label, node.start, node.end) for node in tree.nodes())
    if not include_root:
        root = (tree.label, tree.start, tree.end)
        out[root] -= 1
        if out[root] <= 0:
            del out[root]
    return out


# ---------------------------------------------------------------------------
# bracketed format


def _escape(tok: str) -> str:
    return tok.replace("(", LRB).replace(")", RRB)


def _to_string(tree: Tree, sentence: Sentence | None) -> str:
    parts = []
    for c in tree.children:
        if isinstance(c, Tree):
            parts.append(_to_string(c, sentence))
        else:
            parts.append(_escape(sentence[c]) if sentence is not None else str(c))
    return f"({tree.label} {' '.join(parts)})"


def write_bracketed(tree: Tree, sentence: Sentence) -> str:
    tree.check(sentence.n)
    return _to_string(tree, sentence)


def _tokenize(text: str):
    line, col = 1, 1
    i, size = 0, len(text)
    while i < size:
        ch = text[i]
        if ch == "\n":
            line, col = line + 1, 1
            i += 1
        elif ch.isspace():
            i += 1
            col += 1
        elif ch in "()":
            yield ch, line, col
            i += 1
            col += 1
        else:
            j = i
            while j < size and not text[j].isspace() and text[j] not in "()":
                j += 1
            yield text[i:j], line, col
            col += j - i
            i = j


def _parse_sexprs(text: str) -> list:
    """Nested lists ``[label, child, ...]`` with (line, col) of each open paren."""
    out = []
    stack: list = []
    for tok, line, col in _tokenize(text):
        if tok == "(":
            stack.append(([], line, col))
        elif tok == ")":
            if not stack:
                raise TreebankError(f"line {line}, column {col}: unmatched ')'")
            node, nline, ncol = stack.pop()
            if not node:
                raise TreebankError(f"line {nline}, column {ncol}: empty constituent")
            item = (node, nline, ncol)
            if stack:
                stack[-1][0].append(item)
            else:
                out.append(item)
        else:
            if not stack:
                raise TreebankError(f"line {line}, column {col}: token {tok!r} outside brackets")
            stack[-1][0].append(tok)
    if stack:
        _, line, col = stack[-1]
        raise TreebankError(f"line {line}, column {col}: unbalanced '(' (missing ')')")
    return out


def read_bracketed(text: str, strip_tags: bool = False) -> list[tuple[Sentence, Tree]]:
    """Parse every top-level bracketed tree in ``text``.

    With ``strip_tags`` a node whose only child is a word, e.g. ``(DT the)``,
    is treated as a POS preterminal and replaced by the word (the root is
    never stripped). A label-less outer wrapper ``( (S ...) )`` is removed.
    """
    result = []
    for item in _parse_sexprs(text):
        node, line, col = item
        if isinstance(node[0], tuple):
            if len(node) != 1:
                raise TreebankError(f"line {line}, column {col}: unlabeled node with several children")
            node, line, col = node[0]
        words: list[str] = []
        tree = _build(node, line, col, words, strip_tags, is_root=True)
        if not isinstance(tree, Tree):
            raise TreebankError(f"line {line}, column {col}: tree has no constituent")
        result.append((Sentence(tuple(words)), tree))
    return result


def _build(node, line, col, words, strip_tags, is_root=False):
    label = node[0]
    if isinstance(label, tuple):
        raise TreebankError(f"line {line}, column {col}: constituent without a label")
    rest = node[1:]
    if not rest:
        raise TreebankError(f"line {line}, column {col}: empty constituent {label!r}")
    if strip_tags and not is_root and len(rest) == 1 and isinstance(rest[0], str):
        words.append(rest[0])
        return len(words) - 1
    children = []
    for c in rest:
        if isinstance(c, str):
            words.append(c)
            children.append(len(words) - 1)
        else:
            sub, sline, scol = c
            children.append(_build(sub, sline, scol, words, strip_tags))
    return Tree(label, tuple(children))


def read_bracketed_file(path, strip_tags: bool = False) -> list[tuple[Sentence, Tree]]:
    with open(path, encoding="utf-8") as fh:
        return read_bracketed(fh.read(), strip_tags=strip_tags)


def write_bracketed_file(path, corpus) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sentence, tree in corpus:
            fh.write(write_bracketed(tree, sentence) + "\n")


# ---------------------------------------------------------------------------
# synthetic grammar


@dataclass(frozen=True)
class GrammarSpec:
    """Parameters of the top-down synthetic tree generator.

    ``arity_weights[i]`` is the relative weight of arity ``i + 1``; a node at
    the depth limit is flat (all children words) with arity at most
    ``max_arity``, so a sentence can hold at most ``max_arity ** max_depth``
    words. ``p_word`` is the chance that a one-word slot becomes a bare word
    rather than a constituent. The vocabulary is split into one block per
    label and the first word of each block marks that label: the first word
    of a constituent is its label's marker with probability
    ``p_label_word``, and other words come from the parent's block with the
    same probability (uniform over the vocabulary otherwise).
    ``label_concentration`` is the Dirichlet parameter of each label's
    child-label distribution; small values make the grammar more regular.
    """

    labels: tuple[str, ...] = ("S", "NP", "VP", "PP")
    vocab_size: int = 40
    min_length: int = 2
    max_length: int = 8
    max_depth: int = 4
    max_arity: int = 3
    arity_weights: tuple[float, ...] = (0.15, 0.5, 0.35)
    p_word: float = 0.6
    p_label_word: float = 0.9
    label_concentration: float = 0.3
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        w = tuple(float(x) for x in self.arity_weights)
        if not self.labels or len(set(self.labels)) != len(self.labels):
            raise GrammarError("labels must be non-empty and distinct")
        for lab in self.labels:
            if not lab or any(c.isspace() or c in "()" for c in lab):
                raise GrammarError(f"bad label {lab!r}")
        if self.vocab_size < 2 * len(self.labels):
            raise GrammarError("vocab_size must give every label at least two words")
        if self.label_concentration <= 0:
            raise GrammarError("label_concentration must be positive")
        if self.max_depth < 1 or self.max_arity < 1:
            raise GrammarError("vocab_size, max_depth and max_arity must be positive")
        if not 1 <= self.min_length <= self.max_length:
            raise GrammarError("need 1 <= min_length <= max_length")
        if len(w) != self.max_arity or any(x < 0 or not math.isfinite(x) for x in w) or sum(w) <= 0:
            raise GrammarError("arity_weights needs max_arity non-negative entries with positive sum")
        total = sum(w)
        object.__setattr__(self, "arity_weights", tuple(x / total for x in w))
        for p in (self.p_word, self.p_label_word):
            if not 0.0 <= p <= 1.0:
                raise GrammarError("probabilities must lie in [0, 1]")
        if self.min_length > self.capacity:
            raise GrammarError(
                f"min_length {self.min_length} exceeds the {self.capacity} words reachable "
                f"with max_depth={self.max_depth}, max_arity={self.max_arity}"
            )

    @property
    def capacity(self) -> int:
        return self.max_arity**self.max_depth

    _INT_KEYS = ("vocab_size", "min_length", "max_length", "max_depth", "max_arity", "seed")
    _FLOAT_KEYS = ("p_word", "p_label_word", "label_concentration")

    @classmethod
    def from_text(cls, text: str) -> "GrammarSpec":
        """Parse ``key = value`` lines; ``#`` starts a comment."""
        kw: dict = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise GrammarError(f"line {lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key == "labels":
                kw[key] = tuple(s.strip() for s in value.split(",") if s.strip())
            elif key == "arity_weights":
                kw[key] = tuple(float(s) for s in value.split(","))
            elif key in cls._INT_KEYS:
                kw[key] = int(value)
            elif key in cls._FLOAT_KEYS:
                kw[key] = float(value)
            else:
                raise GrammarError(f"line {lineno}: unknown key {key!r}")
        if "arity_weights" not in kw and "max_arity" in kw:
            kw["arity_weights"] = (1.0,) * kw["max_arity"]
        return cls(**kw)

    def to_text(self) -> str:
        return "\n".join(
            [
                f"labels = {','.join(self.labels)}",
                *(f"{k} = {getattr(self, k)}" for k in self._INT_KEYS),
                f"arity_weights = {','.join(repr(x) for x in self.arity_weights)}",
                *(f"{k} = {getattr(self, k)!r}" for k in self._FLOAT_KEYS),
            ]
        ) + "\n"


class _Generator:
    def __init__(self, spec: GrammarSpec):
        self.spec = spec
        self.rng = np.random.default_rng(spec.seed)
        n_lab = len(spec.labels)
        # Per-label child-label preferences and vocabulary blocks, fixed by the seed.
        self.child_label_p = self.rng.dirichlet(np.full(n_lab, spec.label_concentration), size=n_lab)
        self.blocks = np.array_split(np.arange(spec.vocab_size), n_lab)

    def word(self, label_idx: int, initial: bool) -> str:
        block = self.blocks[label_idx]
        if self.rng.random() < self.spec.p_label_word:
            w = block[0] if initial else block[1 + self.rng.integers(len(block) - 1)]
        else:
            w = self.rng.integers(self.spec.vocab_size)
        return f"w{int(w)}"

    def node(self, label_idx: int, length: int, depth: int, pos: int, words: list) -> Tree:
        spec = self.spec
        first = pos
        remaining = spec.max_depth - depth
        if remaining == 0:
            kids = []
            for _ in range(length):
                words.append(self.word(label_idx, pos == first))
                kids.append(pos)
                pos += 1
            return Tree(spec.labels[label_idx], tuple(kids))
        child_cap = spec.max_arity**remaining
        lo = max(1, -(-length // child_cap))
        hi = min(spec.max_arity, length)
        arities = np.arange(lo, hi + 1)
        weights = np.array([spec.arity_weights[a - 1] for a in arities])
        if weights.sum() <= 0:
            weights = np.ones_like(weights)
        arity = int(self.rng.choice(arities, p=weights / weights.sum()))
        parts = [1] * arity
        for _ in range(length - arity):
            open_slots = [i for i, p in enumerate(parts) if p < child_cap]
            parts[open_slots[self.rng.integers(len(open_slots))]] += 1
        kids = []
        for size in parts:
            if size == 1 and self.rng.random() < spec.p_word:
                words.append(self.word(label_idx, pos == first))
                kids.append(pos)
            else:
                child_label = int(self.rng.choice(len(spec.labels), p=self.child_label_p[label_idx]))
                kids.append(self.node(child_label, size, depth + 1, pos, words))
            pos += size
        return Tree(spec.labels[label_idx], tuple(kids))

    def sample(self) -> tuple[Sentence, Tree]:
        spec = self.spec
        hi = min(spec.max_length, spec.capacity)
        length = int(self.rng.integers(spec.min_length, hi + 1))
        words: list[str] = []
        tree = self.node(0, length, 1, 0, words)
        return Sentence(tuple(words)), tree


def generate_corpus(spec: GrammarSpec, count: int) -> list[tuple[Sentence, Tree]]:
    """Draw ``count`` trees; the output is a pure function of ``(spec, count)``.

    Roots always carry ``spec.labels[0]``.
    """
    if count < 1:
        raise GrammarError("count must be >= 1")
    gen = _Generator(spec)
    return [gen.sample() for _ in range(count)]


def bundled_grammar(name: str) -> GrammarSpec:
    """Load ``<name>.grammar`` shipped in ``tdexplore/data``."""
    from importlib.resources import files

    return GrammarSpec.from_text(files("tdexplore").joinpath("data", f"{name}.grammar").read_text("utf-8"))
