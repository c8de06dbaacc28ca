"""Hashed-feature log-linear action model.

Every feature is a state feature string conjoined with the identity of the
candidate action, so ``z(a, s) = sum_f w[hash(f, a)]``. Hashing uses a
fixed 64-bit digest of the feature string combined multiplicatively with a
per-action salt, folded into ``2 ** n_bits`` buckets. Collisions are
accepted.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from tdexplore.transition import Action, ParserState, System, legal_actions
from tdexplore.treebank import Sentence

TEMPLATE_VERSION = "td-v1"
DEFAULT_BITS = 22
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)

_digests: dict[str, int] = {}


def _digest(s: str) -> int:
    v = _digests.get(s)
    if v is None:
        v = _digests[s] = int.from_bytes(hashlib.blake2b(s.encode(), digest_size=8).digest(), "little")
    return v


_salts: dict[tuple, np.ndarray] = {}


def _salt(actions: tuple) -> np.ndarray:
    v = _salts.get(actions)
    if v is None:
        v = _salts[actions] = np.array([_digest("action:" + str(a)) | 1 for a in actions], dtype=np.uint64)
    return v


def _bucket(n: int) -> str:
    return str(n) if n < 3 else "3+"


def state_features(state: ParserState, sentence: Sentence) -> list[str]:
    """Action-independent feature strings for ``state``."""
    words = sentence.tokens
    j, n = state.shifted, state.n
    b0 = words[j] if j < n else "</s>"
    b1 = words[j + 1] if j + 1 < n else "</s>"
    prev = words[j - 1] if j > 0 else "<s>"
    stack = state.stack
    last = str(state.last_action) if state.last_action is not None else "<none>"
    feats = ["bias", f"b0={b0}", f"b1={b1}", f"b0b1={b0}|{b1}", f"p1={prev}", f"p1b0={prev}|{b0}",
             f"rem={_bucket(n - j)}", f"depth={_bucket(len(stack))}", f"last={last}",
             f"last|b0={last}|{b0}", f"chain={state.chain}"]
    if not stack:
        feats.append("s0=<empty>")
        return feats
    s0 = stack[-1]
    nch = len(s0.children)
    last_child = s0.children[-1] if nch else None
    lc = "<none>" if last_child is None else ("w" if isinstance(last_child, int) else last_child.label)
    s0len = _bucket(j - s0.start)
    feats += [f"s0={s0.label}", f"s0|b0={s0.label}|{b0}", f"s0|b1={s0.label}|{b1}",
              f"s0|p1={s0.label}|{prev}", f"s0nch={_bucket(nch)}", f"s0len={s0len}",
              f"s0len|b0={s0len}|{b0}", f"s0lc={s0.label}|{lc}", f"s0at0={s0.start == 0}"]
    if len(stack) > 1:
        s1 = stack[-2]
        feats += [f"s1={s1.label}", f"s1s0={s1.label}|{s0.label}", f"s1len={_bucket(j - s1.start)}"]
        if len(stack) > 2:
            feats.append(f"s2={stack[-3].label}")
    else:
        feats.append("s1=<bottom>")
    return feats


_ids_cache: dict = {}
_IDS_CACHE_SIZE = 200_000


def feature_ids(state: ParserState, sentence: Sentence, actions, n_bits: int = DEFAULT_BITS) -> np.ndarray:
    """Bucket ids, shape ``(len(actions), n_state_features)``."""
    actions = tuple(actions)
    feats = tuple(state_features(state, sentence))
    key = (feats, actions, n_bits)
    ids = _ids_cache.get(key)
    if ids is None:
        fh = np.array([_digest(f) for f in feats], dtype=np.uint64)
        ids = (((fh[None, :] ^ _salt(actions)[:, None]) * _GOLDEN) >> np.uint64(64 - n_bits)).astype(np.int64)
        if len(_ids_cache) >= _IDS_CACHE_SIZE:
            _ids_cache.clear()
        _ids_cache[key] = ids
    return ids


def featurize(state: ParserState, sentence: Sentence, n_bits: int = DEFAULT_BITS) -> dict:
    """Map each legal action to its sparse feature vector ``{id: value}``."""
    actions = legal_actions(state)
    ids = feature_ids(state, sentence, actions, n_bits)
    return {a: _sparse(row, np.ones(len(row))) for a, row in zip(actions, ids)}


def _sparse(ids, values) -> dict:
    out: dict[int, float] = {}
    for i, v in zip(ids.tolist(), values.tolist()):
        out[i] = out.get(i, 0.0) + v
    return out


@dataclass
class ScorerParams:
    weights: np.ndarray
    labels: tuple[str, ...]
    template_version: str = TEMPLATE_VERSION
    open_chain_cap: int = 8
    open_total_slope: int = 4
    open_total_offset: int = 8
    system: System = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self.labels = tuple(self.labels)
        size = self.weights.shape[0]
        if self.weights.ndim != 1 or size & (size - 1):
            raise ValueError("weights must be a 1-d array with a power-of-two length")
        self.system = System(self.labels, self.open_chain_cap, self.open_total_slope, self.open_total_offset)

    @property
    def n_bits(self) -> int:
        return int(self.weights.shape[0]).bit_length() - 1

    def copy(self) -> "ScorerParams":
        return ScorerParams(self.weights.copy(), self.labels, self.template_version,
                            self.open_chain_cap, self.open_total_slope, self.open_total_offset)

    def save(self, path) -> None:
        nz = np.flatnonzero(self.weights)
        meta = {"template_version": self.template_version, "labels": list(self.labels),
                "n_bits": self.n_bits, "open_chain_cap": self.open_chain_cap,
                "open_total_slope": self.open_total_slope, "open_total_offset": self.open_total_offset}
        with open(path, "wb") as fh:
            np.savez_compressed(fh, meta=np.array(json.dumps(meta)), ids=nz, values=self.weights[nz])

    @classmethod
    def load(cls, path) -> "ScorerParams":
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["meta"]))
            if meta.get("template_version") != TEMPLATE_VERSION:
                raise ValueError(
                    f"model uses feature templates {meta.get('template_version')!r}, "
                    f"this build provides {TEMPLATE_VERSION!r}"
                )
            weights = np.zeros(1 << meta["n_bits"])
            weights[data["ids"]] = data["values"]
        return cls(weights, tuple(meta["labels"]), meta["template_version"], meta["open_chain_cap"],
                   meta["open_total_slope"], meta["open_total_offset"])


def init_params(labels, seed: int = 0, scale: float = 0.01, n_bits: int = DEFAULT_BITS, **caps) -> ScorerParams:
    """Gaussian initial weights; the same ``seed`` always gives the same params."""
    rng = np.random.default_rng(seed)
    if scale:
        weights = rng.normal(0.0, scale, size=1 << n_bits)
    else:
        weights = np.zeros(1 << n_bits)
    return ScorerParams(weights, tuple(labels), **caps)


@dataclass
class ActionDistribution:
    actions: tuple[Action, ...]
    log_probs: np.ndarray

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs)

    def log_prob(self, action: Action) -> float:
        return float(self.log_probs[self.actions.index(action)])


def log_softmax(z: np.ndarray) -> np.ndarray:
    # Action sets are tiny, so plain floats beat numpy's per-call overhead.
    zl = z.tolist()
    m = max(zl)
    return z - (m + math.log(sum(math.exp(v - m) for v in zl)))


def margin_vector(actions, oracle: Action, margin: float = 1.0) -> np.ndarray:
    """0 for the oracle action and ``margin`` for every other action."""
    if oracle not in actions:
        raise ValueError(f"oracle action {oracle} is not legal here")
    return np.array([0.0 if a == oracle else margin for a in actions])


def _distribution(state, sentence, params, oracle=None, margin=1.0):
    actions = legal_actions(state)
    ids = feature_ids(state, sentence, actions, params.n_bits)
    z = params.weights[ids].sum(axis=1)
    if oracle is not None:
        z = z + margin_vector(actions, oracle, margin)
    return actions, ids, log_softmax(z)


def score(state: ParserState, sentence: Sentence, params: ScorerParams) -> ActionDistribution:
    actions, _, lp = _distribution(state, sentence, params)
    return ActionDistribution(actions, lp)


def score_margin(state: ParserState, sentence: Sentence, params: ScorerParams, oracle_action: Action,
                 margin: float = 1.0) -> ActionDistribution:
    """Softmax after adding ``margin`` to every score except the oracle action's."""
    actions, _, lp = _distribution(state, sentence, params, oracle_action, margin)
    return ActionDistribution(actions, lp)


def grad_coefficients(log_probs: np.ndarray, target: int) -> np.ndarray:
    """Per-action weight of ``phi(a)`` in ``d log p(target) / d w``."""
    coef = -np.exp(log_probs)
    coef[target] += 1.0
    return coef


def grad_log_prob(state: ParserState, sentence: Sentence, params: ScorerParams, action: Action,
                  oracle_action: Action | None = None, margin: float = 1.0) -> dict:
    """Gradient of ``log p(action | state)`` w.r.t. the weights, as ``{id: value}``.

    With ``oracle_action`` the distribution is the margin-augmented one.
    """
    actions, ids, lp = _distribution(state, sentence, params, oracle_action, margin)
    if action not in actions:
        raise ValueError(f"{action} is not legal here")
    coef = grad_coefficients(lp, actions.index(action))
    grad = _sparse(ids.ravel(), np.repeat(coef, ids.shape[1]))
    return {k: v for k, v in grad.items() if v != 0.0}
