"""Command line front end.

Every option can also come from an environment variable ``TDX_<OPTION>``
(upper case, dashes as underscores) or from a ``--config`` file of
``key = value`` lines. Precedence: flag, then environment, then config
file, then the built-in default.

Exit codes: 0 success, 1 runtime or I/O failure, 2 usage or configuration
error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from tdexplore.decode import decode_beam, decode_greedy, sample_tree
from tdexplore.evalf1 import corpus_f1, labeled_f1
from tdexplore.oracle import build_gold_index, oracle_step
from tdexplore.scorer import ScorerParams
from tdexplore.training import (
    EXPLORATION,
    PROCEDURES,
    ConfigError,
    TrainConfig,
    epochs_to_threshold,
    label_inventory,
    run_matrix,
    train,
)
from tdexplore.transition import (
    System,
    TransitionError,
    _apply_unchecked,
    illegal_reason,
    initial_state,
    parse_actions,
)
from tdexplore.treebank import (
    GrammarError,
    GrammarSpec,
    Sentence,
    TreebankError,
    bundled_grammar,
    generate_corpus,
    read_bracketed_file,
    write_bracketed,
    write_bracketed_file,
)

log = logging.getLogger("tdexplore")

ENV_PREFIX = "TDX_"


class UsageError(Exception):
    """Bad arguments or configuration (exit code 2)."""


@dataclass(frozen=True)
class Opt:
    name: str
    type: type = str
    default: object = None
    help: str = ""
    choices: tuple | None = None
    required: bool = False


def _bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in str(text).replace(",", " ").split())


def _names(text: str) -> tuple[str, ...]:
    return tuple(x for x in str(text).replace(",", " ").split())


_D = TrainConfig()

TRAIN_OPTS = [
    Opt("procedure", str, _D.procedure, "training procedure", PROCEDURES),
    Opt("k", int, _D.k, "candidates per sentence for the exploration procedures"),
    Opt("epochs", int, _D.epochs, "training epochs"),
    Opt("batch-size", int, _D.batch_size, "sentences per update"),
    Opt("lr", float, _D.lr, "initial learning rate"),
    Opt("lr-decay", float, _D.lr_decay, "inverse-time decay: lr / (1 + decay * (epoch - 1))"),
    Opt("seed", int, _D.seed, "seed for initialisation, shuffling and sampling"),
    Opt("margin", float, _D.margin, "softmax-margin cost for non-oracle actions"),
    Opt("dev-beam", int, _D.dev_beam, "beam width for dev evaluation (1 = greedy)"),
    Opt("n-bits", int, _D.n_bits, "log2 of the number of hashed weights"),
    Opt("init-scale", float, _D.init_scale, "std of the Gaussian initial weights"),
    Opt("standardize", _bool, _D.standardize, "standardise candidate costs"),
    Opt("include-gold", _bool, _D.include_gold, "add the gold tree to every candidate set"),
    Opt("open-chain-cap", int, _D.open_chain_cap, "max consecutive Opens"),
    Opt("open-total-slope", int, _D.open_total_slope, "total Open cap is slope * n + offset"),
    Opt("open-total-offset", int, _D.open_total_offset, "total Open cap is slope * n + offset"),
]

COMMANDS = {
    "train": [
        Opt("train", Path, None, "training trees (bracketed, one per line)", required=True),
        Opt("dev", Path, None, "dev trees for per-epoch evaluation and checkpointing"),
        Opt("report", Path, None, "JSON-lines report, one record per epoch"),
        Opt("model", Path, None, "where to save the trained model"),
        Opt("timing", _bool, False, "include wall-clock times in the report"),
        *TRAIN_OPTS,
    ],
    "parse": [
        Opt("model", Path, None, "trained model file", required=True),
        Opt("input", Path, None, "sentences, one per line (default stdin)"),
        Opt("output", Path, None, "bracketed trees (default stdout)"),
        Opt("mode", str, "greedy", "decoding mode", ("greedy", "beam", "sample")),
        Opt("beam-width", int, 10, "beam width for --mode beam"),
        Opt("seed", int, 0, "seed for --mode sample"),
    ],
    "evaluate": [
        Opt("pred", Path, None, "predicted trees", required=True),
        Opt("gold", Path, None, "gold trees", required=True),
        Opt("include-root", _bool, True, "count the root bracket"),
        Opt("per-sentence", Path, None, "write per-sentence scores as TSV"),
    ],
    "oracle-trace": [
        Opt("gold", Path, None, "gold trees", required=True),
        Opt("index", int, 0, "which tree of the file to trace"),
        Opt("prefix", str, "", "actions to apply first, e.g. 'NT(S) NT(VP)'"),
        Opt("labels", _names, None, "label inventory (default: labels of the gold file)"),
        Opt("open-chain-cap", int, _D.open_chain_cap, "max consecutive Opens"),
        Opt("open-total-slope", int, _D.open_total_slope, "total Open cap is slope * n + offset"),
        Opt("open-total-offset", int, _D.open_total_offset, "total Open cap is slope * n + offset"),
    ],
    "gen-corpus": [
        Opt("grammar", str, "experiment", "bundled grammar name or path to a grammar file"),
        Opt("count", int, 400, "number of trees"),
        Opt("seed", int, None, "override the grammar's seed"),
        Opt("output", Path, None, "output file, or directory when --split is given", required=True),
        Opt("split", _ints, None, "sizes of train,dev,test written to OUTPUT/{train,dev,test}.txt"),
    ],
    "experiment-matrix": [
        Opt("train", Path, None, "training trees", required=True),
        Opt("dev", Path, None, "dev trees", required=True),
        Opt("test", Path, None, "test trees"),
        Opt("out", Path, None, "output directory", required=True),
        Opt("procedures", _names, PROCEDURES, "comma-separated procedures"),
        Opt("ks", _ints, (10,), "comma-separated candidate counts"),
        Opt("threshold", float, None, "dev F1 for epochs-to-threshold (default 0.95 x best dev F1)"),
        *[o for o in TRAIN_OPTS if o.name not in ("procedure", "k")],
    ],
}

HELP = {
    "train": "train a parser with one of the five procedures",
    "parse": "parse raw sentences with a trained model",
    "evaluate": "labeled bracket precision, recall and F1",
    "oracle-trace": "show the dynamic oracle's choices, one line per step",
    "gen-corpus": "generate a synthetic treebank",
    "experiment-matrix": "train every procedure x k cell from one initialisation",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tdexplore", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, opts in COMMANDS.items():
        p = sub.add_parser(name, help=HELP[name], description=HELP[name])
        p.add_argument("--config", type=Path, help="key = value file; flags and environment win")
        for o in opts:
            flag = "--" + o.name
            default = "required" if o.required else o.default
            if isinstance(default, tuple):
                default = ",".join(map(str, default))
            help_ = f"{o.help} [{ENV_PREFIX}{_env_key(o.name)}; default: {default}]"
            # None means "not given" so that environment and config can fill in
            p.add_argument(flag, dest=_dest(o.name), type=_checked(o), default=None, help=help_)
    return parser


def _dest(name: str) -> str:
    return name.replace("-", "_")


def _env_key(name: str) -> str:
    return name.replace("-", "_").upper()


def _checked(o: Opt):
    def convert(text):
        try:
            value = o.type(text)
        except (TypeError, ValueError) as exc:
            raise argparse.ArgumentTypeError(f"invalid value for --{o.name}: {text!r} ({exc})")
        if o.choices is not None and value not in o.choices:
            raise argparse.ArgumentTypeError(f"--{o.name} must be one of {', '.join(o.choices)}, got {value!r}")
        return value

    convert.__name__ = o.type.__name__
    return convert


def read_config(path: Path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (x.strip() for x in line.split("=", 1))
            out[key.replace("_", "-")] = value
    return out


def resolve(command: str, args: argparse.Namespace, environ=None) -> dict:
    """Merge flags, environment, config file and defaults into one dict."""
    environ = os.environ if environ is None else environ
    opts = COMMANDS[command]
    known = {o.name for o in opts}
    config = read_config(args.config) if args.config else {}
    unknown = set(config) - known
    if unknown:
        raise UsageError(f"unknown key(s) in {args.config}: {', '.join(sorted(unknown))}")
    out = {}
    for o in opts:
        value = getattr(args, _dest(o.name))
        if value is None:
            for source, raw in ((f"${ENV_PREFIX}{_env_key(o.name)}", environ.get(ENV_PREFIX + _env_key(o.name))),
                                (f"{args.config}:{o.name}", config.get(o.name))):
                if raw is not None:
                    try:
                        value = _checked(o)(raw)
                    except argparse.ArgumentTypeError as exc:
                        raise UsageError(f"{source}: {exc}") from None
                    break
        if value is None:
            if o.required:
                raise UsageError(f"--{o.name} is required")
            value = o.default
        out[_dest(o.name)] = value
    return out


def _train_config(opts: dict, **override) -> TrainConfig:
    fields = {k: opts[k] for k in TrainConfig.__dataclass_fields__ if k in opts}
    fields.update(override)
    return TrainConfig(**fields)


def _load(path):
    corpus = read_bracketed_file(path)
    if not corpus:
        raise TreebankError(f"{path}: no trees")
    return corpus


# ---------------------------------------------------------------------------
# commands


def cmd_train(opts: dict) -> int:
    config = _train_config(opts)
    corpus = _load(opts["train"])
    dev = _load(opts["dev"]) if opts["dev"] else None
    params, report = train(corpus, config, dev=dev)
    if opts["model"]:
        params.save(opts["model"])
        report.model_path = str(opts["model"])
    if opts["report"]:
        Path(opts["report"]).write_text(report.to_jsonl(timing=opts["timing"]), encoding="utf-8")
    last = report.records[-1]
    msg = f"{config.procedure}: {config.epochs} epochs, final train loss {last['train_loss']:.4f}"
    if dev is not None:
        msg += f", best dev F1 {report.best_dev_f1:.4f} at epoch {report.best_epoch}"
    print(msg)
    return 0


def cmd_parse(opts: dict) -> int:
    params = ScorerParams.load(opts["model"])
    if opts["mode"] == "beam" and opts["beam_width"] < 1:
        raise UsageError("--beam-width must be >= 1")
    src = open(opts["input"], encoding="utf-8") if opts["input"] else sys.stdin
    dst = open(opts["output"], "w", encoding="utf-8") if opts["output"] else sys.stdout
    try:
        for i, line in enumerate(line for line in src if line.strip()):
            sentence = Sentence(tuple(line.split()))
            if opts["mode"] == "greedy":
                cand = decode_greedy(sentence, params)
            elif opts["mode"] == "beam":
                cand = decode_beam(sentence, params, opts["beam_width"])
            else:
                cand = sample_tree(sentence, params, np.random.default_rng([opts["seed"], i]))
            dst.write(write_bracketed(cand.tree, sentence) + "\n")
    finally:
        if src is not sys.stdin:
            src.close()
        if dst is not sys.stdout:
            dst.close()
    return 0


def cmd_evaluate(opts: dict) -> int:
    pred, gold = _load(opts["pred"]), _load(opts["gold"])
    if len(pred) != len(gold):
        raise TreebankError(f"{len(pred)} predicted trees but {len(gold)} gold trees")
    for i, ((ps, _), (gs, _)) in enumerate(zip(pred, gold)):
        if ps.tokens != gs.tokens:
            raise TreebankError(f"sentence {i + 1}: predicted and gold words differ")
    root = opts["include_root"]
    pairs = [(p, g) for (_, p), (_, g) in zip(pred, gold)]
    if opts["per_sentence"]:
        with open(opts["per_sentence"], "w", encoding="utf-8") as fh:
            fh.write("sentence\tmatched\tpredicted\tgold\tprecision\trecall\tf1\n")
            for i, (p, g) in enumerate(pairs, 1):
                f = labeled_f1(p, g, root)
                fh.write(f"{i}\t{f.matched}\t{f.predicted}\t{f.gold}\t{f.precision:.4f}\t{f.recall:.4f}\t{f.f1:.4f}\n")
    print(corpus_f1(pairs, root))
    return 0


def cmd_oracle_trace(opts: dict) -> int:
    corpus = _load(opts["gold"])
    if not 0 <= opts["index"] < len(corpus):
        raise UsageError(f"--index {opts['index']} out of range (file has {len(corpus)} trees)")
    sentence, gold = corpus[opts["index"]]
    labels = opts["labels"] or label_inventory(corpus)
    system = System(labels, opts["open_chain_cap"], opts["open_total_slope"], opts["open_total_offset"])
    try:
        prefix = parse_actions(opts["prefix"])
    except ValueError as exc:
        raise UsageError(f"--prefix: {exc}") from None
    state = initial_state(sentence, system)
    for a in prefix:
        reason = illegal_reason(state, a)
        if reason is not None:
            raise UsageError(f"--prefix: {a} is illegal at {state.summary()}: {reason}")
        state = _apply_unchecked(state, a)
    index = build_gold_index(gold)
    step = len(prefix)
    while not state.finished:
        action, rule = oracle_step(state, index)
        print(f"{step}\t{state.summary()}\t{action}\trule={rule}")
        state = _apply_unchecked(state, action)
        step += 1
    f = labeled_f1(state.root, gold)
    print(f"# {write_bracketed(state.root, sentence)}  F1={f.f1:.4f}", file=sys.stderr)
    return 0


def _grammar(name: str) -> GrammarSpec:
    path = Path(name)
    if path.suffix == ".grammar" or path.exists():
        return GrammarSpec.from_text(path.read_text(encoding="utf-8"))
    try:
        return bundled_grammar(name)
    except FileNotFoundError:
        raise UsageError(f"no bundled grammar or file named {name!r}") from None


def cmd_gen_corpus(opts: dict) -> int:
    spec = _grammar(opts["grammar"])
    if opts["seed"] is not None:
        spec = dataclasses.replace(spec, seed=opts["seed"])
    split = opts["split"]
    count = sum(split) if split else opts["count"]
    corpus = generate_corpus(spec, count)
    out = Path(opts["output"])
    if split:
        if len(split) != 3:
            raise UsageError("--split needs three sizes: train,dev,test")
        out.mkdir(parents=True, exist_ok=True)
        lo = 0
        for name, size in zip(("train", "dev", "test"), split):
            write_bracketed_file(out / f"{name}.txt", corpus[lo:lo + size])
            lo += size
    else:
        write_bracketed_file(out, corpus)
    print(f"wrote {count} trees to {out}")
    return 0


def cmd_experiment_matrix(opts: dict) -> int:
    unknown = set(opts["procedures"]) - set(PROCEDURES)
    if unknown:
        raise UsageError(f"unknown procedure(s): {', '.join(sorted(unknown))}")
    if any(k < 2 for k in opts["ks"]) and set(opts["procedures"]) & set(EXPLORATION):
        raise UsageError("every k must be >= 2")
    config = _train_config(opts, procedure=opts["procedures"][0], k=opts["ks"][0])
    corpus, dev = _load(opts["train"]), _load(opts["dev"])
    test = _load(opts["test"]) if opts["test"] else None
    out = Path(opts["out"])
    curves = out / "curves"
    curves.mkdir(parents=True, exist_ok=True)

    def save(cell):
        if cell.report is not None:
            (curves / f"{cell.procedure}_k{cell.k}.jsonl").write_text(cell.report.to_jsonl(), encoding="utf-8")
        status = "ok" if cell.error is None else f"failed: {cell.error}"
        print(f"{cell.procedure}\tk={cell.k}\t{status}", flush=True)

    cells = run_matrix(corpus, dev, test, config, opts["procedures"], opts["ks"], on_cell=save)
    done = [c for c in cells if c.report is not None]
    threshold = opts["threshold"]
    if threshold is None and done:
        threshold = 0.95 * max(c.report.best_dev_f1 for c in done)
    lines = ["procedure\tk\tbest_epoch\tdev_f1\ttest_f1\tepochs_to_threshold"]
    for c in cells:
        if c.report is None:
            lines.append(f"{c.procedure}\t{c.k}\t-\t-\t-\t-")
            continue
        to_thr = epochs_to_threshold(c.report, threshold)
        test_f1 = "-" if c.test_f1 is None else f"{c.test_f1:.4f}"
        lines.append(f"{c.procedure}\t{c.k}\t{c.report.best_epoch}\t{c.report.best_dev_f1:.4f}\t{test_f1}\t"
                     f"{'-' if to_thr is None else to_thr}")
    (out / "summary.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    rows = ["procedure\tk\tepoch\tdev_f1\ttrain_loss"]
    for c in done:
        for r in c.report.records:
            loss = "" if r["train_loss"] is None else f"{r['train_loss']:.6f}"
            rows.append(f"{c.procedure}\t{c.k}\t{r['epoch']}\t{r.get('dev_f1', float('nan')):.4f}\t{loss}")
    (out / "curves.tsv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    (out / "threshold.json").write_text(json.dumps({"dev_f1_threshold": threshold}) + "\n", encoding="utf-8")
    print("\n".join(lines))
    failed = [c for c in cells if c.error is not None]
    return 1 if failed else 0


HANDLERS = {
    "train": cmd_train,
    "parse": cmd_parse,
    "evaluate": cmd_evaluate,
    "oracle-trace": cmd_oracle_trace,
    "gen-corpus": cmd_gen_corpus,
    "experiment-matrix": cmd_experiment_matrix,
}


def main(argv=None, environ=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        opts = resolve(args.command, args, environ)
        return HANDLERS[args.command](opts)
    except (UsageError, ConfigError, GrammarError) as exc:
        print(f"tdexplore {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, TreebankError, TransitionError, ValueError) as exc:
        print(f"tdexplore {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
