"""Train all five procedures on a small synthetic treebank and compare them.

A reduced version of ``tdexplore experiment-matrix``: 120 training trees,
4 epochs, k = 5. Takes a few seconds.
"""

# %%
from dataclasses import replace

from tdexplore.training import PROCEDURES, TrainConfig, run_matrix
from tdexplore.treebank import bundled_grammar, generate_corpus

trees = generate_corpus(replace(bundled_grammar("experiment"), seed=3), 180)
train, dev, test = trees[:120], trees[120:150], trees[150:]

config = TrainConfig(epochs=4, n_bits=18, seed=0)
cells = run_matrix(train, dev, test, config, procedures=PROCEDURES, ks=(5,),
                   on_cell=lambda c: print(f"finished {c.procedure}"))

# %% every procedure starts from the same weights, so epoch 0 agrees
for cell in cells:
    curve = " ".join(f"{r['dev_f1']:.3f}" for r in cell.report.records)
    print(f"{cell.procedure:20s} dev: {curve}   test: {cell.test_f1:.3f}")
