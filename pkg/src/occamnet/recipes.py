"""Fixed experiment recipes behind the acceptance checks.

``needle_experiment`` compares an unpenalized and a penalized Gated LSTM on
the needle task; ``babi_experiment`` pits the HG-LSTM against a plain LSTM
reader on single-supporting-fact stories. Both return plain dicts so the
CLI can print them and the acceptance tests can assert on them.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .autodiff import RngStream
from .data import Story, build_vocab, gen_needle_task, gen_single_fact_babi, is_needle, parse_babi, split_validation
from .hierarchical import HgLstmConfig
from .models import BabiModel, ClassifierConfig, LstmReader, ReaderConfig, SequenceClassifier
from .objectives import BabiLossConfig, SparsityConfig
from .training import TrainConfig, train_loop

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class NeedleRecipe:
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    hidden: int = 16
    embed_dim: int = 16
    vocab_size: int = 50
    seq_len: int = 20
    n_train: int = 2000
    n_val: int = 500
    lambda_max: float = 1.0
    regimen: str = "linear"
    t_max: int = 5
    # the penalty stays off until the classifier has found the needle
    warmup: int = 5
    max_epochs: int = 14
    batch_size: int = 20
    patience: int = 5


def needle_gate_means(model: SequenceClassifier, examples) -> tuple[float, float]:
    """Mean gate over needle positions and over distractor positions."""
    needle, distract = [], []
    for ex, gates in zip(examples, model.gates(examples)):
        for tok, g in zip(ex.tokens, gates):
            (needle if is_needle(tok) else distract).append(g)
    return float(np.mean(needle)), float(np.mean(distract))


def needle_run(recipe: NeedleRecipe, seed: int, lambda_max: float) -> dict:
    train = gen_needle_task(2 * seed + 100, recipe.n_train, recipe.seq_len, recipe.vocab_size)
    val = gen_needle_task(2 * seed + 101, recipe.n_val, recipe.seq_len, recipe.vocab_size)
    model = SequenceClassifier(
        ClassifierConfig(recipe.vocab_size, recipe.embed_dim, recipe.hidden, "linear"), RngStream(seed).spawn(0)
    )
    cfg = TrainConfig(
        batch_size=recipe.batch_size,
        word_dropout=0.0,
        sparsity=SparsityConfig(lambda_max, recipe.t_max, recipe.regimen, recipe.warmup),
        patience=recipe.patience,
        seed=seed,
        max_epochs=recipe.max_epochs,
    )
    result = train_loop(model, train, val, cfg)
    needle, distract = needle_gate_means(model, val)
    return {
        "seed": seed,
        "lambda_max": lambda_max,
        "val_accuracy": model.evaluate(val)["accuracy"],
        "needle_gate": needle,
        "distractor_gate": distract,
        "best_epoch": result.best_epoch,
        "stop_reason": result.stop_reason,
    }


def needle_experiment(recipe: NeedleRecipe = NeedleRecipe()) -> dict:
    t0 = time.perf_counter()
    plain, penalized = [], []
    for seed in recipe.seeds:
        plain.append(needle_run(recipe, seed, 0.0))
        penalized.append(needle_run(recipe, seed, recipe.lambda_max))
        log.info("needle seed %d: %s | %s", seed, plain[-1], penalized[-1])
    need = len(recipe.seeds) - 1
    lower = sum(p["distractor_gate"] < q["distractor_gate"] for p, q in zip(penalized, plain))
    selective = sum(p["needle_gate"] > p["distractor_gate"] for p in penalized)
    return {
        "plain": plain,
        "penalized": penalized,
        "accuracy_ok": all(r["val_accuracy"] >= 0.95 for r in plain + penalized),
        "distractors_lower": lower,
        "needle_above_distractors": selective,
        "distractors_ok": lower >= need,
        "selective_ok": selective >= need,
        "seconds": time.perf_counter() - t0,
    }


@dataclass(frozen=True)
class BabiRecipe:
    seeds: tuple[int, ...] = (0, 1, 2)
    n_train: int = 1000
    n_test: int = 1000
    max_epochs: int = 200
    # the HG-LSTM sits on the answer prior for 50+ epochs before it finds
    # the supporting fact, so early stopping would cut it off
    patience: int = 200
    batch_size: int = 50
    lambda_fact: float = 1.0
    mu_unsupporting: float = 0.1
    # a six-layer HL stack with dropout never leaves the prior at this data size
    word_dropout: float = 0.0
    hl_dropout: float = 0.0
    hl_layers: int = 1
    data_seed: int = 1000
    babi_text: str | None = None  # train file contents; synthetic stories when absent
    test_text: str | None = None
    extra: dict = field(default_factory=dict)


def babi_data(recipe: BabiRecipe) -> tuple[list[Story], list[Story], list[Story], object]:
    train_text = recipe.babi_text or gen_single_fact_babi(recipe.data_seed, recipe.n_train)
    test_text = recipe.test_text or gen_single_fact_babi(recipe.data_seed + 1, recipe.n_test)
    raw_train = parse_babi(train_text)[: recipe.n_train]
    raw_test = parse_babi(test_text)
    vocab = build_vocab([seq for s in raw_train for seq in (*s.facts, s.question, s.answer)], min_count=1)
    train = [vocab.encode_story(s) for s in raw_train]
    test = [vocab.encode_story(s) for s in raw_test]
    tr, va = split_validation(train)
    return tr, va, test, vocab


def babi_run(recipe: BabiRecipe, kind: str, seed: int, data=None) -> dict:
    tr, va, test, vocab = data or babi_data(recipe)
    loss = BabiLossConfig(mu_unsupporting=recipe.mu_unsupporting, lambda_fact=recipe.lambda_fact)
    rng = RngStream(seed).spawn(0)
    if kind == "hg-lstm":
        model = BabiModel(HgLstmConfig(len(vocab), hl_layers=recipe.hl_layers), rng, loss)
    else:
        model = LstmReader(ReaderConfig(len(vocab)), rng, loss)
    cfg = TrainConfig(
        batch_size=recipe.batch_size,
        word_dropout=recipe.word_dropout,
        hl_dropout=recipe.hl_dropout,
        babi=loss,
        patience=recipe.patience,
        seed=seed,
        max_epochs=recipe.max_epochs,
    )
    result = train_loop(model, tr, va, cfg)
    return {
        "model": kind,
        "seed": seed,
        "val_accuracy": result.best_metric,
        "test_accuracy": model.evaluate(test)["accuracy"],
        "epochs": len(result.history),
        "stop_reason": result.stop_reason,
    }


def babi_experiment(recipe: BabiRecipe = BabiRecipe()) -> dict:
    t0 = time.perf_counter()
    data = babi_data(recipe)
    runs = []
    for kind in ("hg-lstm", "lstm-reader"):
        for seed in recipe.seeds:
            runs.append(babi_run(recipe, kind, seed, data))
            log.info("babi %s", runs[-1])
    best_hg = max(r["test_accuracy"] for r in runs if r["model"] == "hg-lstm")
    best_reader = max(r["test_accuracy"] for r in runs if r["model"] == "lstm-reader")
    return {
        "runs": runs,
        "best_hg_lstm": best_hg,
        "best_lstm_reader": best_reader,
        "reaches_90": best_hg >= 0.90,
        "beats_baseline": best_hg > best_reader,
        "seconds": time.perf_counter() - t0,
    }
