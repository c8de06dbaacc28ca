"""Five training procedures sharing one mini-batch loop.

``likelihood``          gold action sequences, maximum likelihood
``policy_gradient``     sampled candidates weighted by standardised cost
``likelihood_explore``  oracle actions at every state of every candidate
``smm``                 gold sequences under the margin-augmented softmax
``smm_explore``         oracle actions at candidate states, margin-augmented

The policy gradient estimate sums standardised-cost-weighted score
functions over the candidate set; the standardised weights are centred, so
the sum stays on the scale of a single likelihood term. The oracle losses
of the two exploration procedures are averaged over the candidate set
instead: their terms all push the same way, and a plain sum would scale the
step size with ``k``.

All procedures descend a loss with plain SGD and an inverse-time learning
rate ``lr / (1 + lr_decay * (epoch - 1))``. Gradients for a batch are
computed against the weights at the start of the batch and applied once.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from tdexplore.decode import build_candidate_set, decode_beam, decode_greedy, score_path, sentence_rng
from tdexplore.evalf1 import F1Score, RunningStandardizer, corpus_f1
from tdexplore.oracle import build_gold_index, oracle_action
from tdexplore.scorer import ScorerParams, grad_coefficients, init_params, log_softmax, margin_vector
from tdexplore.transition import tree_to_actions

log = logging.getLogger(__name__)

PROCEDURES = ("likelihood", "policy_gradient", "likelihood_explore", "smm", "smm_explore")
EXPLORATION = ("policy_gradient", "likelihood_explore", "smm_explore")


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    procedure: str = "likelihood"
    k: int = 10
    epochs: int = 10
    batch_size: int = 16
    lr: float = 0.2
    lr_decay: float = 0.1
    seed: int = 0
    eval_every: int = 1
    dev_beam: int = 1
    init_scale: float = 0.01
    n_bits: int = 22
    margin: float = 1.0
    standardize: bool = True
    include_gold: bool = True
    open_chain_cap: int = 8
    open_total_slope: int = 4
    open_total_offset: int = 8
    test_mode: bool = False

    def __post_init__(self):
        if self.procedure not in PROCEDURES:
            raise ConfigError(f"unknown procedure {self.procedure!r}; choose from {', '.join(PROCEDURES)}")
        min_k = 1 if self.test_mode else 2
        if self.procedure in EXPLORATION and self.k < min_k:
            raise ConfigError(f"{self.procedure} needs k >= 2")
        for name in ("epochs", "batch_size", "eval_every", "dev_beam", "n_bits"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.lr < 0 or self.lr_decay < 0 or self.init_scale < 0:
            raise ConfigError("lr, lr_decay and init_scale must be non-negative")

    @property
    def caps(self) -> dict:
        return {"open_chain_cap": self.open_chain_cap, "open_total_slope": self.open_total_slope,
                "open_total_offset": self.open_total_offset}

    def replace(self, **kw) -> "TrainConfig":
        return dataclasses.replace(self, **kw)


@dataclass
class TrainReport:
    procedure: str
    records: list = field(default_factory=list)
    best_epoch: int = 0
    best_dev_f1: float = float("nan")
    model_path: str | None = None

    def to_jsonl(self, timing: bool = False) -> str:
        lines = []
        for rec in self.records:
            rec = dict(rec)
            if not timing:
                rec.pop("wall_time", None)
            lines.append(json.dumps(rec, sort_keys=True))
        return "".join(line + "\n" for line in lines)


def label_inventory(corpus) -> tuple[str, ...]:
    """Labels in order of first appearance (pre-order over the corpus)."""
    seen: dict[str, None] = {}
    for _, tree in corpus:
        for node in tree.nodes():
            seen.setdefault(node.label, None)
    return tuple(seen)


def initial_params(labels, config: TrainConfig) -> ScorerParams:
    """Shared starting point: depends only on labels, seed, scale and caps."""
    return init_params(labels, seed=config.seed, scale=config.init_scale, n_bits=config.n_bits, **config.caps)


# ---------------------------------------------------------------------------
# gradients


class GradientBuffer:
    """Sparse accumulation of ``d loss / d w`` for one batch."""

    def __init__(self):
        self.ids: list[np.ndarray] = []
        self.vals: list[np.ndarray] = []

    def add(self, ids: np.ndarray, coef: np.ndarray, scale: float = 1.0):
        if scale == 0.0:
            return
        self.ids.append(ids.ravel())
        self.vals.append(np.repeat(coef * scale, ids.shape[1]))

    def extend(self, other: "GradientBuffer", scale: float = 1.0):
        self.ids.extend(other.ids)
        self.vals.extend(v * scale for v in other.vals)

    def collect(self) -> tuple[np.ndarray, np.ndarray]:
        if not self.ids:
            return np.zeros(0, dtype=np.int64), np.zeros(0)
        return np.concatenate(self.ids), np.concatenate(self.vals)

    def dense(self, size: int) -> np.ndarray:
        out = np.zeros(size)
        ids, vals = self.collect()
        np.add.at(out, ids, vals)
        return out


def path_log_prob_grad(trace, targets=None, margins=None) -> tuple[GradientBuffer, float]:
    """Gradient of ``sum_t log p(target_t | s_t)`` over a recorded trace.

    ``targets`` defaults to the actions taken. With ``margins`` (one margin
    vector per step, or None entries) each step uses the margin-augmented
    distribution. Returns the gradient buffer and the summed log probability.
    """
    buf = GradientBuffer()
    total = 0.0
    for t, step in enumerate(trace):
        target = step.chosen if targets is None else targets[t]
        lp = step.log_probs
        if margins is not None and margins[t] is not None:
            lp = log_softmax(lp + margins[t])
        total += float(lp[target])
        buf.add(step.ids, grad_coefficients(lp, target))
    return buf, total


def _oracle_targets(trace, index, oracle):
    targets = []
    for step in trace:
        a = oracle(step.state, index)
        targets.append(step.actions.index(a))
    return targets


def sentence_gradient(procedure, sentence, gold, params, config, rng, std, oracle=oracle_action):
    """Loss gradient for one sentence.

    Returns ``(buffer, loss, standardizer, candidate_set)``; the candidate
    set is None for the procedures without exploration.
    """
    margin = config.margin
    if procedure in ("likelihood", "smm"):
        path = score_path(sentence, params, tree_to_actions(gold))
        margins = None
        if procedure == "smm":
            margins = [margin_vector(s.actions, s.actions[s.chosen], margin) for s in path.trace]
        buf, lp = path_log_prob_grad(path.trace, margins=margins)
        out = GradientBuffer()
        out.extend(buf, -1.0)
        return out, -lp, std, None

    cset, std = build_candidate_set(
        sentence, gold, params, config.k, rng, std,
        include_gold=config.include_gold, standardize_costs=config.standardize,
        test_mode=config.test_mode,
    )
    out = GradientBuffer()
    if procedure == "policy_gradient":
        for c in cset.candidates:
            buf, _ = path_log_prob_grad(c.trace)
            out.extend(buf, c.standardized_cost)
        samples = [c.cost for c in cset.candidates if not c.is_gold]
        loss = float(np.mean(samples)) if samples else -1.0
        return out, loss, std, cset

    index = build_gold_index(gold)
    scale = 1.0 / cset.k
    loss = 0.0
    for c in cset.candidates:
        targets = _oracle_targets(c.trace, index, oracle)
        margins = None
        if procedure == "smm_explore":
            margins = [margin_vector(s.actions, s.actions[t], margin) for s, t in zip(c.trace, targets)]
        buf, lp = path_log_prob_grad(c.trace, targets, margins)
        out.extend(buf, -scale)
        loss -= lp * scale
    return out, loss, std, cset


# ---------------------------------------------------------------------------
# the loop


def evaluate_dev(params: ScorerParams, dev, config: TrainConfig | None = None) -> F1Score:
    width = config.dev_beam if config is not None else 1
    pairs = []
    for sentence, gold in dev:
        pred = decode_greedy(sentence, params) if width == 1 else decode_beam(sentence, params, width)
        pairs.append((pred.tree, gold))
    return corpus_f1(pairs)


def train(corpus, config: TrainConfig, dev=None, params: ScorerParams | None = None,
          oracle=oracle_action, observer=None) -> tuple[ScorerParams, TrainReport]:
    """Run ``config.procedure`` over ``corpus``.

    With ``dev`` the returned params are the best by dev F1 (epoch 0 is the
    initial model); otherwise the final params. ``observer(epoch, batch,
    sentence_index, candidate_set)`` is called for every explored sentence.
    """
    corpus = list(corpus)
    if not corpus:
        raise ConfigError("empty training corpus")
    if params is None:
        params = initial_params(label_inventory(corpus), config)
    else:
        params = params.copy()
    procedure = config.procedure
    report = TrainReport(procedure)
    std = RunningStandardizer()
    best = None

    def record(epoch, loss, cand_cost, started):
        nonlocal best
        rec = {"epoch": epoch, "procedure": procedure, "k": config.k, "train_loss": loss,
               "mean_candidate_cost": cand_cost, "standardizer": std.as_dict(),
               "wall_time": round(time.perf_counter() - started, 3)}
        if dev is not None and (epoch % config.eval_every == 0 or epoch == config.epochs):
            f1 = evaluate_dev(params, dev, config)
            rec["dev_f1"] = f1.f1
            if best is None or f1.f1 > best[1]:
                best = (epoch, f1.f1, params.weights.copy())
        report.records.append(rec)
        log.info("%s epoch %d: %s", procedure, epoch, {k: v for k, v in rec.items() if k != "standardizer"})

    record(0, None, None, time.perf_counter())
    for epoch in range(1, config.epochs + 1):
        started = time.perf_counter()
        lr = config.lr / (1.0 + config.lr_decay * (epoch - 1))
        order = np.random.default_rng([config.seed, epoch]).permutation(len(corpus))
        losses, cand_costs = [], []
        for b, lo in enumerate(range(0, len(order), config.batch_size)):
            batch = order[lo:lo + config.batch_size]
            grad = GradientBuffer()
            for idx in batch.tolist():
                sentence, gold = corpus[idx]
                rng = sentence_rng(config.seed, epoch, idx)
                buf, loss, std, cset = sentence_gradient(procedure, sentence, gold, params, config, rng, std, oracle)
                grad.extend(buf)
                losses.append(loss)
                if cset is not None:
                    cand_costs.extend(c.cost for c in cset.candidates)
                    if observer is not None:
                        observer(epoch, b, idx, cset)
            ids, vals = grad.collect()
            if lr and len(ids):
                np.add.at(params.weights, ids, vals * (-lr / len(batch)))
        record(epoch, float(np.mean(losses)), float(np.mean(cand_costs)) if cand_costs else None, started)

    if best is not None:
        report.best_epoch, report.best_dev_f1 = best[0], best[1]
        params = ScorerParams(best[2], params.labels, params.template_version, **config.caps)
    return params, report


def train_likelihood(corpus, config, **kw):
    return train(corpus, config.replace(procedure="likelihood"), **kw)


def train_policy_gradient(corpus, config, **kw):
    return train(corpus, config.replace(procedure="policy_gradient"), **kw)


def train_likelihood_explore(corpus, config, oracle=oracle_action, **kw):
    return train(corpus, config.replace(procedure="likelihood_explore"), oracle=oracle, **kw)


def train_smm(corpus, config, oracle=oracle_action, **kw):
    # On the gold path the oracle action is the gold action itself.
    return train(corpus, config.replace(procedure="smm"), oracle=oracle, **kw)


def train_smm_explore(corpus, config, oracle=oracle_action, **kw):
    return train(corpus, config.replace(procedure="smm_explore"), oracle=oracle, **kw)



# ---------------------------------------------------------------------------
# experiment matrix


@dataclass
class MatrixCell:
    procedure: str
    k: int
    report: TrainReport | None = None
    test_f1: float | None = None
    error: str | None = None


def epochs_to_threshold(report: TrainReport, threshold: float) -> int | None:
    """First epoch whose dev F1 reaches ``threshold``, or None."""
    for rec in report.records:
        if rec.get("dev_f1") is not None and rec["dev_f1"] >= threshold:
            return rec["epoch"]
    return None


def run_matrix(corpus, dev, test, config: TrainConfig, procedures=PROCEDURES, ks=(10,),
               on_cell=None) -> list[MatrixCell]:
    """Train every (procedure, k) cell from the same initial parameters.

    Procedures without exploration ignore ``k`` and run once. A failing
    cell is recorded with its error and the remaining cells still run.
    ``on_cell(cell)`` is called as soon as each cell finishes.
    """
    corpus = list(corpus)
    start = initial_params(label_inventory(corpus), config)
    cells = []
    for procedure in procedures:
        for k in (ks if procedure in EXPLORATION else ks[:1]):
            cell = MatrixCell(procedure, k)
            try:
                params, cell.report = train(corpus, config.replace(procedure=procedure, k=k), dev=dev, params=start)
                if test is not None:
                    cell.test_f1 = evaluate_dev(params, test, config).f1
            except Exception as exc:  # keep going; the caller reports the failure
                log.exception("cell %s k=%d failed", procedure, k)
                cell.error = f"{type(exc).__name__}: {exc}"
            cells.append(cell)
            if on_cell is not None:
                on_cell(cell)
    return cells
