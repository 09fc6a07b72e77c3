"""``occamnet`` command line: train, eval, sweep, visualize, gen-synthetic, grad-check, recipe."""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import RngStream
from .cells import GateParams, GatedLstmCell, LstmCell, LstmParams, StackedGatedLstm, run_sequence
from .data import (
    LabeledSequence,
    ParaphrasePair,
    Vocabulary,
    build_vocab,
    gen_needle_task,
    gen_single_fact_babi,
    needle_vocab,
    parse_babi,
    parse_labeled_sequences,
    parse_paraphrase_pairs,
    serialize_labeled_sequences,
    split_validation,
)
from .hierarchical import HgLstmConfig
from .models import (
    BabiModel,
    ClassifierConfig,
    LstmReader,
    ParaphraseConfig,
    ParaphraseModel,
    ReaderConfig,
    SequenceClassifier,
    gate_matrix,
)
from .objectives import BabiLossConfig, SparsityConfig
from .report import trace_from_facts, trace_from_gates, render_heatmap
from .training import MetricsWriter, TrainConfig, load_checkpoint, save_checkpoint, train_loop

log = logging.getLogger("occamnet")

TASKS = ("sentiment", "paraphrase", "babi", "needle")
REGIMEN_NAMES = {"flat": "flat", "linear": "linear", "quad": "quadratic", "quadratic": "quadratic"}

# per-task defaults for flags left unset: (embed_dim, hidden, gate)
TASK_DEFAULTS = {
    "sentiment": (100, 50, "linear"),
    "paraphrase": (100, 50, "linear"),
    "babi": (50, 20, "quad"),
    "needle": (16, 16, "linear"),
}

# flags that describe the data; stored in checkpoints so eval/visualize can rebuild it
DATA_KEYS = (
    "task",
    "train_file",
    "val_file",
    "test_file",
    "extra_pairs",
    "babi_file",
    "babi_test_file",
    "synthetic",
    "n_train",
    "n_val",
    "n_test",
    "seq_len",
    "vocab_size",
    "data_seed",
    "min_count",
)


class CliError(Exception):
    pass


# ---------------------------------------------------------------------------
# Data
# ---------------------------------------------------------------------------


@dataclass
class TaskData:
    train: list
    val: list
    test: list
    vocab: Vocabulary


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise CliError(f"cannot read {path}: {e.strerror or e}") from None


def _min_count(args) -> int:
    if args.min_count is not None:
        return args.min_count
    return 2 if args.task in ("sentiment", "paraphrase") else 1


def _encode_seq(vocab: Vocabulary, recs: list[LabeledSequence]) -> list[LabeledSequence]:
    return [LabeledSequence(vocab.encode(r.tokens), r.label) for r in recs]


def _encode_pairs(vocab: Vocabulary, recs: list[ParaphrasePair]) -> list[ParaphrasePair]:
    return [ParaphrasePair(vocab.encode(p.tokens_a), vocab.encode(p.tokens_b), p.target) for p in recs]


def load_task(args) -> TaskData:
    task = args.task
    if task == "needle":
        vocab = needle_vocab(args.vocab_size)
        s = args.data_seed * 3
        return TaskData(
            gen_needle_task(s, args.n_train, args.seq_len, args.vocab_size),
            gen_needle_task(s + 1, args.n_val, args.seq_len, args.vocab_size),
            gen_needle_task(s + 2, args.n_test, args.seq_len, args.vocab_size),
            vocab,
        )
    if task == "babi":
        if args.babi_file:
            raw = parse_babi(_read(args.babi_file))
        elif args.synthetic:
            raw = parse_babi(gen_single_fact_babi(args.data_seed, args.synthetic))
        else:
            raise CliError("--task babi needs --babi-file or --synthetic N")
        if args.babi_test_file:
            raw_test = parse_babi(_read(args.babi_test_file))
        elif args.synthetic and not args.babi_file:
            raw_test = parse_babi(gen_single_fact_babi(args.data_seed + 1, args.synthetic))
        else:
            raw_test = []
        if args.n_train is not None:
            raw = raw[: args.n_train]
        vocab = build_vocab([seq for s in raw for seq in (*s.facts, s.question, s.answer)], _min_count(args))
        train, val = split_validation([vocab.encode_story(s) for s in raw])
        return TaskData(train, val, [vocab.encode_story(s) for s in raw_test], vocab)
    if not args.train_file:
        raise CliError(f"--task {task} needs --train-file")
    if task == "sentiment":
        parse, encode = parse_labeled_sequences, _encode_seq
        tokens = lambda recs: [r.tokens for r in recs]  # noqa: E731
    else:
        parse, encode = parse_paraphrase_pairs, _encode_pairs
        tokens = lambda recs: [t for p in recs for t in (p.tokens_a, p.tokens_b)]  # noqa: E731
    train_raw = parse(_read(args.train_file))
    if task == "paraphrase":
        for path in args.extra_pairs or []:
            train_raw += parse_paraphrase_pairs(_read(path), fixed_target=1.0)
    vocab = build_vocab(tokens(train_raw), _min_count(args))
    train = encode(vocab, train_raw)
    if args.val_file:
        val = encode(vocab, parse(_read(args.val_file)))
    else:
        train, val = split_validation(train)
    test = encode(vocab, parse(_read(args.test_file))) if args.test_file else []
    return TaskData(train, val, test, vocab)


# ---------------------------------------------------------------------------
# Models and configs
# ---------------------------------------------------------------------------


def resolve(args) -> argparse.Namespace:
    """Fill task-dependent defaults in place and return ``args``."""
    embed, hidden, gate = TASK_DEFAULTS[args.task]
    args.embed_dim = args.embed_dim if args.embed_dim is not None else embed
    args.hidden = args.hidden if args.hidden is not None else hidden
    args.gate = args.gate or gate
    args.regimen = REGIMEN_NAMES[args.regimen]
    return args


def build_model(args, vocab_size: int):
    rng = RngStream(args.seed).spawn(0)
    if args.task in ("sentiment", "needle"):
        return SequenceClassifier(ClassifierConfig(vocab_size, args.embed_dim, args.hidden, args.gate), rng)
    if args.task == "paraphrase":
        return ParaphraseModel(ParaphraseConfig(vocab_size, args.embed_dim, args.hidden, args.gate, args.threshold), rng)
    loss = babi_loss(args)
    if args.model == "lstm-reader":
        return LstmReader(ReaderConfig(vocab_size, args.embed_dim, args.hidden, args.hidden), rng, loss, args.max_answer)
    cfg = HgLstmConfig(
        vocab_size,
        embed_dim=args.embed_dim,
        fact_hidden=args.fact_hidden,
        question_hidden=args.fact_hidden,
        hl_hidden=args.hidden,
        hl_layers=args.layers,
        dec_hidden=args.hidden,
        gate=args.gate,
    )
    return BabiModel(cfg, rng, loss, args.max_answer)


def babi_loss(args) -> BabiLossConfig:
    return BabiLossConfig(args.margin, args.mu_unsupporting, args.lambda_fact, args.lambda_word)


def train_config(args) -> TrainConfig:
    lam = args.lambda_max
    if lam is None:
        # on story QA the annealed weight is the word-gate penalty
        lam = args.lambda_word if args.task == "babi" else 0.0
    return TrainConfig(
        batch_size=args.batch_size,
        word_dropout=args.dropout if args.dropout is not None else (0.0 if args.task == "needle" else 0.3),
        hl_dropout=args.hl_dropout,
        sparsity=SparsityConfig(lam, args.t_max, args.regimen, args.warmup),
        babi=babi_loss(args) if args.task == "babi" else None,
        patience=args.patience,
        seed=args.seed,
        max_epochs=args.max_epochs,
    )


def data_config(args) -> dict:
    return {k: getattr(args, k, None) for k in DATA_KEYS}


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def run_training(args, checkpoint: str | None = None, metrics_out: str | None = None) -> dict:
    data = load_task(args)
    if not data.train or not data.val:
        raise CliError("training and validation splits must be nonempty")
    model = build_model(args, len(data.vocab))
    cfg = train_config(args)
    header = {
        "command": "train",
        "data": data_config(args),
        "model": model.kind,
        "model_config": model.config(),
        "train": cfg.to_dict(),
        "vocab_size": len(data.vocab),
    }
    writer = MetricsWriter(metrics_out, header)
    result = train_loop(model, data.train, data.val, cfg, on_epoch=writer)
    test = model.evaluate(data.test) if data.test else {}
    gates = [r["mean_gate"] for r in result.history if r.get("mean_gate") is not None]
    summary = {
        "best_epoch": result.best_epoch,
        "best_val_metric": result.best_metric,
        "epochs": len(result.history),
        "final_mean_gate": gates[-1] if gates else None,
        "stop_reason": result.stop_reason,
        "test": test,
    }
    writer.summary(summary)
    if checkpoint:
        meta = {
            "data": data_config(args),
            "train": cfg.to_dict(),
            "vocab": list(data.vocab.itos),
            "best_epoch": result.best_epoch,
            "best_val_metric": result.best_metric,
        }
        save_checkpoint(checkpoint, model, meta, result.best_params)
    return summary


def cmd_train(args) -> int:
    resolve(args)
    summary = run_training(args, args.checkpoint, args.metrics_out)
    print(json.dumps(summary, sort_keys=True))
    return 0


def _restore_data_args(args, header: dict) -> None:
    for k, v in header.get("data", {}).items():
        if getattr(args, k, None) is None:
            setattr(args, k, v)


def _checkpoint_and_data(args):
    try:
        model, header = load_checkpoint(args.checkpoint)
    except OSError as e:
        raise CliError(f"cannot read {args.checkpoint}: {e.strerror or e}") from None
    _restore_data_args(args, header)
    data = load_task(args)
    if list(data.vocab.itos) != header.get("vocab"):
        raise CliError("vocabulary built from the data does not match the checkpoint's vocabulary")
    return model, header, data


def _split(data: TaskData, name: str) -> list:
    items = {"train": data.train, "val": data.val, "test": data.test}[name]
    if not items:
        raise CliError(f"the {name} split is empty; pass a file for it")
    return items


def cmd_eval(args) -> int:
    model, _, data = _checkpoint_and_data(args)
    metrics = model.evaluate(_split(data, args.split))
    print(json.dumps({"split": args.split, **metrics}, sort_keys=True))
    return 0


def cmd_visualize(args) -> int:
    model, header, data = _checkpoint_and_data(args)
    items = _split(data, args.split)
    if not 0 <= args.example < len(items):
        raise CliError(f"--example {args.example} outside 0..{len(items) - 1}")
    ex = items[args.example]
    words = data.vocab.decode
    meta = {"task": args.task, "checkpoint": Path(args.checkpoint).name, "example": args.example, "split": args.split}
    if isinstance(model, BabiModel):
        word_gates, fact_gates = model.gates(ex)
        meta["question"] = " ".join(words(ex.question))
        meta["answer"] = " ".join(words(ex.answer))
        trace = trace_from_facts([words(f) for f in ex.facts], word_gates, fact_gates, meta)
    elif isinstance(model, SequenceClassifier):
        meta["label"] = ex.label
        trace = trace_from_gates(words(ex.tokens), model.gates([ex])[0], meta)
    elif isinstance(model, ParaphraseModel):
        _, _, (g1, m1), (g2, m2) = model.forward([ex])
        ga = gate_matrix(g1, [len(ex.tokens_a)])[0]
        gb = gate_matrix(g2, [len(ex.tokens_b)])[0]
        meta["target"] = ex.target
        # the two sentences as two fully opaque groups
        trace = trace_from_facts([words(ex.tokens_a), words(ex.tokens_b)], [ga, gb], [1.0, 1.0], meta)
    else:
        raise CliError(f"a {header['model']} model has no gates to visualize")
    text = render_heatmap(trace, args.format)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def _sweep_cell(args) -> dict:
    try:
        s = run_training(args)
        return {
            "best_val": f"{s['best_val_metric']:.6f}",
            "test_metric": f"{s['test']['metric']:.6f}" if s["test"] else "",
            "mean_gate": "" if s["final_mean_gate"] is None else f"{s['final_mean_gate']:.6f}",
            "status": "ok",
        }
    except Exception as e:  # a failed cell is reported, not fatal
        return {"best_val": "", "test_metric": "", "mean_gate": "", "status": f"error: {type(e).__name__}: {e}"}


def cmd_sweep(args) -> int:
    if not args.out:
        raise CliError("sweep needs --out for the results table")
    hiddens = args.hidden_grid or [args.hidden]
    lambdas = args.lambda_grid or [0.0, 1e-4, 1e-3, 1e-2]
    regimens = args.regimen_grid or [args.regimen]
    cells = []
    for h in hiddens:
        for lam in lambdas:
            for reg in regimens:
                cell = copy.copy(args)
                cell.hidden, cell.lambda_max, cell.regimen = h, lam, reg
                cells.append(resolve(cell))
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_cell, cells))
    else:
        results = [_sweep_cell(c) for c in cells]
    fields = ["hidden", "lambda_max", "regimen", "best_val", "test_metric", "mean_gate", "status"]
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(fields)
        for cell, res in zip(cells, results):
            w.writerow([cell.hidden, cell.lambda_max, cell.regimen] + [res[k] for k in fields[3:]])
    failed = sum(r["status"] != "ok" for r in results)
    print(f"{len(cells)} cells, {failed} failed -> {args.out}")
    return 0


def cmd_gen_synthetic(args) -> int:
    if args.kind == "needle":
        vocab = needle_vocab(args.vocab_size)
        recs = gen_needle_task(args.seed, args.n, args.seq_len, args.vocab_size)
        text = serialize_labeled_sequences([LabeledSequence(vocab.decode(r.tokens), r.label) for r in recs])
    else:
        text = gen_single_fact_babi(args.seed, args.n)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def _grad_check_problem(args):
    """Build ``(f, params)`` for a small random instance of the chosen model."""
    rng = RngStream(args.seed)
    steps, batch, H, D = args.steps, args.batch, args.hidden, args.input
    xs = [ad.constant(rng.uniform(-1, 1, (D, batch))) for _ in range(steps)]
    w = ad.constant(rng.uniform(-1, 1, (H, batch)))
    if args.model == "lstm":
        cell = LstmCell(LstmParams.init(D, H, rng))
    elif args.model == "gated-lstm":
        cell = GatedLstmCell(LstmParams.init(D, H, rng), GateParams.init(args.gate, D, H, rng))
    elif args.model == "stacked-gated-lstm":
        layers = [LstmParams.init(D, H, rng)] + [LstmParams.init(H, H, rng) for _ in range(args.layers - 1)]
        cell = StackedGatedLstm(layers, GateParams.init(args.gate, D, H, rng))
    else:
        return _hg_problem(args, rng)

    def f():
        state, gates = run_sequence(cell, xs)
        y = state[-1].y if isinstance(state, list) else state.y
        out = ad.sum_all(ad.hadamard(w, y))
        for g in gates:
            out = ad.add(out, ad.sum_all(g))
        return out

    return f, cell.named()


def _hg_problem(args, rng: RngStream):
    from .data import Story
    from .hierarchical import HgLstm, story_loss

    V = 8
    cfg = HgLstmConfig(V, args.input, args.hidden, args.hidden, args.hidden, args.layers, args.hidden, args.gate)
    net = HgLstm(cfg, rng)
    story = Story(facts=[[3, 4, 5], [6, 7]], question=[4, 6], answer=[5], supporting=[0])
    loss = BabiLossConfig(1.0, 0.5, 1.0, 0.1)
    return (lambda: story_loss(net, [story], loss)[0]), net.named()


def cmd_grad_check(args) -> int:
    f, params = _grad_check_problem(args)
    report = ad.grad_check(f, params, eps=args.eps, tol=args.tol)
    print(f"{args.model}: {report.summary()}")
    for name, idx, a, n, rel in report.failures[:10]:
        print(f"  {name}{list(idx)} analytic={a:.6e} numeric={n:.6e} rel={rel:.2e}")
    return 0 if report.passed else 1


def cmd_recipe(args) -> int:
    from . import recipes

    if args.name == "needle":
        recipe = recipes.NeedleRecipe(seeds=tuple(args.seeds or range(5)))
        out = recipes.needle_experiment(recipe)
        ok = out["accuracy_ok"] and out["distractors_ok"] and out["selective_ok"]
    else:
        recipe = recipes.BabiRecipe(
            seeds=tuple(args.seeds or range(3)),
            max_epochs=args.max_epochs or 200,
            babi_text=_read(args.babi_file) if args.babi_file else None,
            test_text=_read(args.babi_test_file) if args.babi_test_file else None,
        )
        out = recipes.babi_experiment(recipe)
        ok = out["reaches_90"] and out["beats_baseline"]
    text = json.dumps(out, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _nonneg_int(s: str) -> int:
    v = int(s)
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative integer, got {s}")
    return v


def _pos_int(s: str) -> int:
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {s}")
    return v


def _add_data_flags(p: argparse.ArgumentParser, required_task: bool) -> None:
    g = p.add_argument_group("data")
    g.add_argument("--task", choices=TASKS, required=required_task)
    g.add_argument("--train-file")
    g.add_argument("--val-file")
    g.add_argument("--test-file")
    g.add_argument("--extra-pairs", action="append", help="paraphrase pairs added with target 1.0")
    g.add_argument("--babi-file")
    g.add_argument("--babi-test-file")
    g.add_argument("--synthetic", type=_pos_int, help="generate N single-supporting-fact questions")
    g.add_argument("--n-train", type=_pos_int)
    g.add_argument("--n-val", type=_pos_int)
    g.add_argument("--n-test", type=_pos_int)
    g.add_argument("--seq-len", type=_pos_int)
    g.add_argument("--vocab-size", type=_pos_int)
    g.add_argument("--data-seed", type=_nonneg_int)
    g.add_argument("--min-count", type=_pos_int)


def _needle_data_defaults(args) -> None:
    defaults = {"n_train": 2000, "n_val": 500, "n_test": 500, "seq_len": 20, "vocab_size": 50, "data_seed": 0}
    for k, v in defaults.items():
        if getattr(args, k, None) is None:
            setattr(args, k, v)


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    _add_data_flags(p, required_task=True)
    g = p.add_argument_group("model")
    g.add_argument("--model", choices=("hg-lstm", "lstm-reader"), default="hg-lstm", help="story QA architecture")
    g.add_argument("--hidden", type=_pos_int)
    g.add_argument("--fact-hidden", type=_pos_int, default=30)
    g.add_argument("--layers", type=_pos_int, default=6)
    g.add_argument("--embed-dim", type=_pos_int)
    g.add_argument("--gate", choices=("linear", "quad"))
    g.add_argument("--max-answer", type=_pos_int, default=4)
    g.add_argument("--threshold", type=float, default=0.5, help="paraphrase decision threshold")
    g = p.add_argument_group("objective")
    g.add_argument("--lambda-max", type=float)
    g.add_argument("--regimen", choices=sorted(REGIMEN_NAMES), default="flat")
    g.add_argument("--t-max", type=_pos_int, default=1)
    g.add_argument("--warmup", type=_nonneg_int, default=0, help="epochs at zero penalty before the regimen starts")
    g.add_argument("--lambda-fact", type=float, default=0.0)
    g.add_argument("--lambda-word", type=float, default=0.0)
    g.add_argument("--mu-unsupporting", type=float, default=0.1)
    g.add_argument("--margin", type=float, default=1.0)
    g = p.add_argument_group("optimization")
    g.add_argument("--batch-size", type=_pos_int, default=50)
    g.add_argument("--dropout", type=float, help="word-level dropout (default 0.3; 0 on needle)")
    g.add_argument("--hl-dropout", type=float, default=0.5)
    g.add_argument("--seed", type=_nonneg_int, default=0)
    g.add_argument("--patience", type=_pos_int, default=5)
    g.add_argument("--max-epochs", type=_pos_int, default=30)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="occamnet", description="Sparsity-gated recurrent networks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one model")
    _add_train_flags(p)
    p.add_argument("--checkpoint", help="where to write the best parameters")
    p.add_argument("--metrics-out", help="JSONL metrics file")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="train over a grid of hidden size x lambda x regimen")
    _add_train_flags(p)
    p.add_argument("--hidden-grid", type=_pos_int, nargs="+")
    p.add_argument("--lambda-grid", type=float, nargs="+")
    p.add_argument("--regimen-grid", choices=sorted(REGIMEN_NAMES), nargs="+")
    p.add_argument("--jobs", type=_pos_int, default=1)
    p.add_argument("--out", help="TSV results table")
    p.set_defaults(func=cmd_sweep)

    for name, func, help_ in (
        ("eval", cmd_eval, "score a checkpoint"),
        ("visualize", cmd_visualize, "render the gate trace of one example"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--checkpoint", required=True)
        _add_data_flags(p, required_task=False)
        p.add_argument("--split", choices=("train", "val", "test"), default="test" if name == "eval" else "val")
        if name == "visualize":
            p.add_argument("--example", type=_nonneg_int, default=0)
            p.add_argument("--format", choices=("html", "ansi"), default="html")
            p.add_argument("--out")
        p.set_defaults(func=func)

    p = sub.add_parser("gen-synthetic", help="write a synthetic corpus")
    p.add_argument("--kind", choices=("needle", "babi"), required=True)
    p.add_argument("--n", type=_pos_int, default=1000, help="sequences (needle) or questions (babi)")
    p.add_argument("--seq-len", type=_pos_int, default=20)
    p.add_argument("--vocab-size", type=_pos_int, default=50)
    p.add_argument("--seed", type=_nonneg_int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("grad-check", help="finite-difference check of a model's gradients")
    p.add_argument("--model", choices=("lstm", "gated-lstm", "stacked-gated-lstm", "hg-lstm"), required=True)
    p.add_argument("--hidden", type=_pos_int, default=4)
    p.add_argument("--input", type=_pos_int, default=3)
    p.add_argument("--gate", choices=("linear", "quad"), default="quad")
    p.add_argument("--layers", type=_pos_int, default=2)
    p.add_argument("--steps", type=_pos_int, default=3)
    p.add_argument("--batch", type=_pos_int, default=2)
    p.add_argument("--seed", type=_nonneg_int, default=0)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("recipe", help="run a fixed comparison experiment")
    p.add_argument("name", choices=("needle", "babi"))
    p.add_argument("--seeds", type=_nonneg_int, nargs="+")
    p.add_argument("--max-epochs", type=_pos_int)
    p.add_argument("--babi-file")
    p.add_argument("--babi-test-file")
    p.add_argument("--out", help="also write the JSON result here")
    p.set_defaults(func=cmd_recipe)
    return parser


def _setup_logging() -> None:
    level = os.environ.get("OCCAMNET_LOG", "WARNING").upper()
    lvl = int(level) if level.isdigit() else logging.getLevelName(level)
    if not isinstance(lvl, int):
        lvl = logging.WARNING
    logging.basicConfig(level=lvl, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        if args.command in ("train", "sweep"):
            if args.data_seed is None:
                args.data_seed = 0
            if args.task == "needle":
                _needle_data_defaults(args)
        code = args.func(args)
    except (CliError, ValueError, OSError) as e:
        print(f"occamnet: error: {e}", file=sys.stderr)
        return 1
    return code


if __name__ == "__main__":
    sys.exit(main())
