"""Labeled bracket F1, the negative-F1 cost, and running cost standardisation."""

from __future__ import annotations

import math
from dataclasses import dataclass

from tdexplore.treebank import Tree, brackets


@dataclass(frozen=True)
class F1Score:
    precision: float
    recall: float
    f1: float
    matched: int
    predicted: int
    gold: int

    @classmethod
    def from_counts(cls, matched: int, predicted: int, gold: int) -> "F1Score":
        p = matched / predicted if predicted else 0.0
        r = matched / gold if gold else 0.0
        # 2PR/(P+R) written on counts so that exact ratios stay exact
        f = 2 * matched / (predicted + gold) if matched else 0.0
        return cls(p, r, f, matched, predicted, gold)

    def __str__(self):
        return (f"P={100 * self.precision:.2f} R={100 * self.recall:.2f} F1={100 * self.f1:.2f} "
                f"(matched={self.matched} predicted={self.predicted} gold={self.gold})")


def _counts(pred: Tree, gold: Tree, include_root: bool) -> tuple[int, int, int]:
    if (pred.start, pred.end) != (gold.start, gold.end):
        raise ValueError(f"trees cover different spans: {pred.span} vs {gold.span}")
    bp = brackets(pred, include_root)
    bg = brackets(gold, include_root)
    matched = sum(min(c, bg[k]) for k, c in bp.items() if k in bg)
    return matched, sum(bp.values()), sum(bg.values())


def labeled_f1(pred: Tree, gold: Tree, include_root: bool = True) -> F1Score:
    """Sentence-level labeled F1; ``include_root=False`` is the evalb convention."""
    return F1Score.from_counts(*_counts(pred, gold, include_root))


def corpus_f1(pairs, include_root: bool = True) -> F1Score:
    """Micro-averaged F1 over ``(pred, gold)`` pairs."""
    m = p = g = 0
    for pred, gold in pairs:
        a, b, c = _counts(pred, gold, include_root)
        m, p, g = m + a, p + b, g + c
    if not (p or g):
        raise ValueError("corpus_f1 needs at least one pair")
    return F1Score.from_counts(m, p, g)


def cost(pred: Tree, gold: Tree, include_root: bool = True) -> float:
    return -labeled_f1(pred, gold, include_root).f1


@dataclass(frozen=True)
class RunningStandardizer:
    """Streaming mean and population variance (Welford)."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0
    epsilon: float = 1e-8

    @property
    def variance(self) -> float:
        return self.m2 / self.count if self.count else 0.0

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    def update(self, value: float) -> "RunningStandardizer":
        count = self.count + 1
        delta = value - self.mean
        mean = self.mean + delta / count
        m2 = self.m2 + delta * (value - mean)
        return RunningStandardizer(count, mean, m2, self.epsilon)

    def as_dict(self) -> dict:
        return {"count": self.count, "mean": self.mean, "std": self.std}


def standardize(std: RunningStandardizer, value: float) -> tuple[float, RunningStandardizer]:
    """Fold ``value`` into the statistics, then standardise it with them."""
    if not math.isfinite(value):
        raise ValueError(f"cannot standardise non-finite value {value!r}")
    std = std.update(value)
    if std.count < 2:
        return 0.0, std
    return (value - std.mean) / max(std.std, std.epsilon), std
