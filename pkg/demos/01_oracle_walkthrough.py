"""Walk through the top-down transition system and its dynamic oracle.

Run with ``python demos/01_oracle_walkthrough.py``.
"""

# %%
from tdexplore.evalf1 import labeled_f1
from tdexplore.oracle import best_reachable_f1, build_gold_index, oracle_completion, oracle_step
from tdexplore.transition import System, apply, format_actions, initial_state, parse_actions, tree_to_actions
from tdexplore.treebank import read_bracketed, write_bracketed

[(sentence, gold)] = read_bracketed("(S (NP the cat) (VP sat (PP on (NP the mat))))")
print(write_bracketed(gold, sentence))

# %% the canonical derivation: Open before the first word of a span, Close after its last
actions = tree_to_actions(gold)
print(format_actions(actions))

# %% the oracle reproduces the derivation from the initial state
system = System(("S", "NP", "VP", "PP"))
index = build_gold_index(gold)
state = initial_state(sentence, system)
while not state.finished:
    action, rule = oracle_step(state, index)
    print(f"{state.summary():40s} {str(action):8s} rule={rule}")
    state = apply(state, action)

# %% now go wrong on purpose: open VP where NP belongs, then shift twice
state = initial_state(sentence, system)
for a in parse_actions("NT(S) NT(VP) SHIFT SHIFT"):
    state = apply(state, a)
print("after mistakes:", state.summary())

# The oracle still knows what to do next. It closes the bogus VP only if no
# gold VP starting at 0 can end later, and otherwise keeps collecting words.
rest, tree = oracle_completion(state, index)
print("oracle continues with:", format_actions(rest))
print("tree:", write_bracketed(tree, sentence))
print("F1 of the completion:", labeled_f1(tree, gold))

# %% how good is that? best_reachable_f1 searches all completions exactly
print("best F1 reachable from here: %.4f" % best_reachable_f1(state, gold))
