"""Top-down transition parsing with a dynamic oracle and exploration-based training.

The package is organised bottom-up:

* :mod:`tdexplore.treebank`   trees, sentences, bracketed I/O, synthetic corpora
* :mod:`tdexplore.transition` the Open/Shift/Close transition system
* :mod:`tdexplore.oracle`     dynamic oracle for that system
* :mod:`tdexplore.scorer`     hashed-feature log-linear action model
* :mod:`tdexplore.evalf1`     labeled bracket F1 and running cost standardisation
* :mod:`tdexplore.decode`     sampling, greedy and beam decoding, candidate sets
* :mod:`tdexplore.training`   the five training procedures
* :mod:`tdexplore.cli`        command line front end
"""

from tdexplore.treebank import (
    GrammarSpec,
    Sentence,
    Tree,
    TreebankError,
    brackets,
    generate_corpus,
    read_bracketed,
    write_bracketed,
)
from tdexplore.transition import (
    CLOSE,
    SHIFT,
    Action,
    ParserState,
    System,
    TransitionError,
    actions_to_tree,
    apply,
    initial_state,
    legal_actions,
    tree_to_actions,
)
from tdexplore.oracle import GoldIndex, build_gold_index, oracle_action, oracle_completion
from tdexplore.scorer import ScorerParams, featurize, grad_log_prob, init_params, score, score_margin
from tdexplore.evalf1 import F1Score, RunningStandardizer, corpus_f1, cost, labeled_f1, standardize
from tdexplore.decode import (
    Candidate,
    CandidateSet,
    build_candidate_set,
    decode_beam,
    decode_greedy,
    sample_tree,
)
from tdexplore.training import PROCEDURES, TrainConfig, TrainReport, evaluate_dev, train

__version__ = "0.1.0"
