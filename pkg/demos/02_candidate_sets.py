"""Sample candidate trees from a model and look at their standardised costs.

These are the ingredients of the policy-gradient update: k - 1 samples plus
the gold tree, each weighted by its cost relative to a running mean.
"""

# %%
import numpy as np

from tdexplore.decode import build_candidate_set, decode_beam, decode_greedy, sentence_rng
from tdexplore.evalf1 import RunningStandardizer
from tdexplore.scorer import init_params, score
from tdexplore.transition import initial_state
from tdexplore.treebank import bundled_grammar, generate_corpus, write_bracketed

corpus = generate_corpus(bundled_grammar("experiment"), 5)
labels = ("S", "NP", "VP", "PP")
params = init_params(labels, seed=0, scale=0.5, n_bits=16)
sentence, gold = corpus[0]
print("gold:", write_bracketed(gold, sentence))

# %% the model's first decision: a softmax over every legal action
state = initial_state(sentence, params.system)
dist = score(state, sentence, params)
for a, lp in zip(dist.actions, dist.log_probs):
    print(f"  {str(a):8s} p={np.exp(lp):.3f}")

# %% greedy and beam decoding
for name, cand in (("greedy", decode_greedy(sentence, params)), ("beam 8", decode_beam(sentence, params, 8))):
    print(f"{name:7s} log p={cand.log_prob:7.3f}  {write_bracketed(cand.tree, sentence)}")

# %% a candidate set of k = 6: five samples, then the gold tree
std = RunningStandardizer()
cset, std = build_candidate_set(sentence, gold, params, 6, sentence_rng(0, 1, 0), std)
for c in cset.candidates:
    tag = "gold" if c.is_gold else "    "
    print(f"{tag} cost={c.cost:6.3f} z={c.standardized_cost:6.3f}  {write_bracketed(c.tree, sentence)}")

# The standardiser keeps running across sentences, so later z values are
# measured against everything seen so far.
for i, (s, g) in enumerate(corpus[1:], start=1):
    cset, std = build_candidate_set(s, g, params, 6, sentence_rng(0, 1, i), std)
print(f"after {std.count} costs: mean={std.mean:.3f} std={std.std:.3f}")
