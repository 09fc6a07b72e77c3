"""Task models wrapping the recurrent cells with embeddings, heads and losses.

Each model exposes the same duck-typed surface used by the training loop:

* ``named()`` -> ordered ``{name: parameter}``
* ``batch_loss(batch, lam, word_dropout, hl_dropout)`` -> ``(loss_sum, parts, gate_stats)``
  where ``loss_sum`` is summed over the batch and ``gate_stats`` is
  ``(sum_of_gates, gate_count)`` over real (unpadded) positions
* ``evaluate(examples)`` -> metrics dict with a ``"metric"`` entry used for early stopping
* ``config()`` / ``from_config()`` for checkpoints
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import RngStream, Tensor
from .cells import Dropout, GatedLstmCell, GateParams, LstmCell, LstmParams, run_sequence
from .data import EOS_ID, NUM_CLASSES, LabeledSequence, ParaphrasePair, Story, pad_batch
from .hierarchical import HgLstm, HgLstmConfig, decode_batch, encode_batch, story_loss, teacher_forced_scores
from .objectives import BabiLossConfig, cosine, gate_sum, margin_prediction_loss, paraphrase_loss, sentiment_loss

EVAL_BATCH = 256


def _chunks(items: Sequence, size: int):
    for k in range(0, len(items), size):
        yield items[k : k + size]


def _masked_gate_stats(gates: Sequence[Tensor], masks: Sequence[np.ndarray]) -> tuple[float, float]:
    total = sum(float((g.value.reshape(-1) * m).sum()) for g, m in zip(gates, masks))
    count = float(sum(m.sum() for m in masks[: len(gates)]))
    return total, count


def gate_matrix(gates: Sequence[Tensor], lengths: Sequence[int]) -> list[list[float]]:
    """Per-example gate values, trimmed to each example's true length."""
    rows = np.vstack([g.value for g in gates]) if gates else np.zeros((0, len(lengths)))
    return [[float(v) for v in rows[: n, j]] for j, n in enumerate(lengths)]


def accuracy(predictions: Sequence, gold: Sequence) -> float:
    if len(predictions) != len(gold):
        raise ValueError("prediction and gold lengths differ")
    if not gold:
        return 0.0
    return sum(p == g for p, g in zip(predictions, gold)) / len(gold)


def binary_scores(predicted: Sequence[float], targets: Sequence[float], threshold: float = 0.5) -> dict[str, float]:
    """Accuracy and recall after thresholding predicted and true similarities."""
    pred = np.asarray(predicted) >= threshold
    gold = np.asarray(targets) >= threshold
    tp = int(np.sum(pred & gold))
    fn = int(np.sum(~pred & gold))
    acc = float(np.mean(pred == gold)) if gold.size else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return {"accuracy": acc, "recall": recall}


# ---------------------------------------------------------------------------
# Sentiment / needle classifier
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ClassifierConfig:
    vocab_size: int
    embed_dim: int = 100
    hidden: int = 50
    gate: str = "linear"
    num_classes: int = NUM_CLASSES


class SequenceClassifier:
    """Gated LSTM over word embeddings; the last hidden state feeds a softmax layer."""

    kind = "classifier"

    def __init__(self, cfg: ClassifierConfig, rng: RngStream):
        self.cfg = cfg
        eb = 1.0 / np.sqrt(cfg.embed_dim)
        self.embeddings = ad.parameter(rng.uniform(-eb, eb, (cfg.vocab_size, cfg.embed_dim)), name="embeddings")
        self.cell = GatedLstmCell(
            LstmParams.init(cfg.embed_dim, cfg.hidden, rng),
            GateParams.init(cfg.gate, cfg.embed_dim, cfg.hidden, rng),
        )
        hb = 1.0 / np.sqrt(cfg.hidden)
        self.out_W = ad.parameter(rng.uniform(-hb, hb, (cfg.num_classes, cfg.hidden)), name="out_W")
        self.out_b = ad.parameter(np.zeros((cfg.num_classes, 1)), name="out_b")

    def named(self) -> dict[str, Tensor]:
        return {"embeddings": self.embeddings, **self.cell.named("cell."), "out_W": self.out_W, "out_b": self.out_b}

    def config(self) -> dict:
        return asdict(self.cfg)

    @classmethod
    def from_config(cls, cfg: dict) -> "SequenceClassifier":
        return cls(ClassifierConfig(**cfg), RngStream(0))

    def forward(self, batch: Sequence[LabeledSequence], dropout: Dropout | None = None):
        ids, masks = pad_batch([ex.tokens for ex in batch])
        inputs = [ad.embed(self.embeddings, ids[t]) for t in range(ids.shape[0])]
        state, gates = run_sequence(self.cell, inputs, masks=masks, dropout=dropout)
        scores = ad.add_bias(ad.matmul(self.out_W, state.y), self.out_b)
        return scores, gates, masks

    def batch_loss(self, batch, lam: float, word_dropout: Dropout | None = None, hl_dropout: Dropout | None = None):
        scores, gates, masks = self.forward(batch, word_dropout)
        j = sentiment_loss(scores, [ex.label for ex in batch])
        penalty = ad.scale(gate_sum(gates, masks), lam)
        parts = {"j": j.item(), "penalty": penalty.item()}
        return ad.add(j, penalty), parts, _masked_gate_stats(gates, masks)

    def predict(self, batch: Sequence[LabeledSequence]) -> list[int]:
        preds = []
        for chunk in _chunks(batch, EVAL_BATCH):
            scores, _, _ = self.forward(chunk)
            preds.extend(int(c) for c in np.argmax(scores.value, axis=0))
        return preds

    def gates(self, batch: Sequence[LabeledSequence]) -> list[list[float]]:
        out = []
        for chunk in _chunks(batch, EVAL_BATCH):
            _, gates, _ = self.forward(chunk)
            out.extend(gate_matrix(gates, [len(ex.tokens) for ex in chunk]))
        return out

    def evaluate(self, examples: Sequence[LabeledSequence]) -> dict[str, float]:
        acc = accuracy(self.predict(examples), [ex.label for ex in examples])
        return {"metric": acc, "accuracy": acc}


# ---------------------------------------------------------------------------
# Paraphrase
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ParaphraseConfig:
    vocab_size: int
    embed_dim: int = 100
    hidden: int = 50
    gate: str = "linear"
    threshold: float = 0.5


class ParaphraseModel:
    """Two Gated LSTMs (one per sentence, shared embeddings) compared by cosine."""

    kind = "paraphrase"

    def __init__(self, cfg: ParaphraseConfig, rng: RngStream):
        self.cfg = cfg
        eb = 1.0 / np.sqrt(cfg.embed_dim)
        self.embeddings = ad.parameter(rng.uniform(-eb, eb, (cfg.vocab_size, cfg.embed_dim)), name="embeddings")
        self.cells = [
            GatedLstmCell(LstmParams.init(cfg.embed_dim, cfg.hidden, rng), GateParams.init(cfg.gate, cfg.embed_dim, cfg.hidden, rng))
            for _ in range(2)
        ]

    def named(self) -> dict[str, Tensor]:
        return {"embeddings": self.embeddings, **self.cells[0].named("left."), **self.cells[1].named("right.")}

    def config(self) -> dict:
        return asdict(self.cfg)

    @classmethod
    def from_config(cls, cfg: dict) -> "ParaphraseModel":
        return cls(ParaphraseConfig(**cfg), RngStream(0))

    def _encode(self, cell, seqs, dropout):
        ids, masks = pad_batch(seqs)
        inputs = [ad.embed(self.embeddings, ids[t]) for t in range(ids.shape[0])]
        state, gates = run_sequence(cell, inputs, masks=masks, dropout=dropout)
        return state.y, gates, masks

    def forward(self, batch: Sequence[ParaphrasePair], dropout: Dropout | None = None):
        h1, g1, m1 = self._encode(self.cells[0], [p.tokens_a for p in batch], dropout)
        h2, g2, m2 = self._encode(self.cells[1], [p.tokens_b for p in batch], dropout)
        return h1, h2, (g1, m1), (g2, m2)

    def batch_loss(self, batch, lam: float, word_dropout: Dropout | None = None, hl_dropout: Dropout | None = None):
        h1, h2, (g1, m1), (g2, m2) = self.forward(batch, word_dropout)
        targets = [p.target for p in batch]
        fit = paraphrase_loss(h1, h2, targets)
        penalty = ad.scale(ad.add(gate_sum(g1, m1), gate_sum(g2, m2)), lam)
        s1, c1 = _masked_gate_stats(g1, m1)
        s2, c2 = _masked_gate_stats(g2, m2)
        return ad.add(fit, penalty), {"j": fit.item(), "penalty": penalty.item()}, (s1 + s2, c1 + c2)

    def similarities(self, batch: Sequence[ParaphrasePair]) -> list[float]:
        out = []
        for chunk in _chunks(batch, EVAL_BATCH):
            h1, h2, _, _ = self.forward(chunk)
            out.extend(float(v) for v in cosine(h1, h2).value[0])
        return out

    def evaluate(self, examples: Sequence[ParaphrasePair]) -> dict[str, float]:
        scores = binary_scores(self.similarities(examples), [p.target for p in examples], self.cfg.threshold)
        return {"metric": scores["accuracy"], **scores}


# ---------------------------------------------------------------------------
# Story question answering
# ---------------------------------------------------------------------------


class BabiModel:
    """HG-LSTM trained with the margin, fact-selection and word-sparsity terms.

    The annealed penalty weight drives the word-gate term; the fact term uses
    the fixed ``lambda_fact``.
    """

    kind = "hg-lstm"

    def __init__(self, cfg: HgLstmConfig, rng: RngStream, loss: BabiLossConfig = BabiLossConfig(), max_answer: int = 4):
        self.net = HgLstm(cfg, rng)
        self.loss = loss
        self.max_answer = max_answer

    @property
    def cfg(self) -> HgLstmConfig:
        return self.net.cfg

    def named(self) -> dict[str, Tensor]:
        return self.net.named()

    def config(self) -> dict:
        return {"net": asdict(self.net.cfg), "loss": asdict(self.loss), "max_answer": self.max_answer}

    @classmethod
    def from_config(cls, cfg: dict) -> "BabiModel":
        return cls(HgLstmConfig(**cfg["net"]), RngStream(0), BabiLossConfig(**cfg["loss"]), cfg["max_answer"])

    def batch_loss(self, batch, lam: float, word_dropout: Dropout | None = None, hl_dropout: Dropout | None = None):
        total, parts, enc = story_loss(self.net, batch, self.loss, lam, word_dropout, hl_dropout)
        return total, parts, _masked_gate_stats(enc.word_gates, enc.word_masks)

    def predict(self, stories: Sequence[Story]) -> list[list[int]]:
        out = []
        for chunk in _chunks(stories, EVAL_BATCH):
            enc = encode_batch(self.net, chunk)
            out.extend(d.tokens for d in decode_batch(self.net, enc.hl_final, self.max_answer))
        return out

    def evaluate(self, stories: Sequence[Story]) -> dict[str, float]:
        acc = accuracy(self.predict(stories), [list(s.answer) for s in stories])
        return {"metric": acc, "accuracy": acc}

    def gates(self, story: Story) -> tuple[list[list[float]], list[float]]:
        enc = encode_batch(self.net, [story])
        words = gate_matrix(enc.word_gates, [len(f) for f in story.facts])
        facts = [g.item() for g in enc.fact_gates]
        return words, facts


@dataclass(frozen=True)
class ReaderConfig:
    vocab_size: int
    embed_dim: int = 50
    hidden: int = 20
    dec_hidden: int = 20


class LstmReader:
    """Baseline: one vanilla LSTM reads every fact word then the question, then decodes.

    Shares the decoder layout of :class:`HgLstm` so the same decoding and
    margin-loss code applies.
    """

    kind = "lstm-reader"

    def __init__(self, cfg: ReaderConfig, rng: RngStream, loss: BabiLossConfig = BabiLossConfig(), max_answer: int = 4):
        self.cfg = cfg
        self.loss = loss
        self.max_answer = max_answer
        eb = 1.0 / np.sqrt(cfg.embed_dim)
        self.embeddings = ad.parameter(rng.uniform(-eb, eb, (cfg.vocab_size, cfg.embed_dim)), name="embeddings")
        self.reader = LstmCell(LstmParams.init(cfg.embed_dim, cfg.hidden, rng))
        self.decoder = LstmCell(LstmParams.init(cfg.embed_dim, cfg.dec_hidden, rng))
        hb = 1.0 / np.sqrt(cfg.hidden)
        self.init_m = ad.parameter(rng.uniform(-hb, hb, (cfg.dec_hidden, cfg.hidden)), name="init_m")
        self.init_m_b = ad.parameter(np.zeros((cfg.dec_hidden, 1)), name="init_m_b")
        self.init_y = ad.parameter(rng.uniform(-hb, hb, (cfg.dec_hidden, cfg.hidden)), name="init_y")
        self.init_y_b = ad.parameter(np.zeros((cfg.dec_hidden, 1)), name="init_y_b")
        db = 1.0 / np.sqrt(cfg.dec_hidden)
        self.out_W = ad.parameter(rng.uniform(-db, db, (cfg.vocab_size, cfg.dec_hidden)), name="out_W")
        self.out_b = ad.parameter(np.zeros((cfg.vocab_size, 1)), name="out_b")

    def named(self) -> dict[str, Tensor]:
        return {
            "embeddings": self.embeddings,
            **self.reader.named("reader."),
            **self.decoder.named("decoder."),
            "decoder.init_m": self.init_m,
            "decoder.init_m_b": self.init_m_b,
            "decoder.init_y": self.init_y,
            "decoder.init_y_b": self.init_y_b,
            "decoder.out_W": self.out_W,
            "decoder.out_b": self.out_b,
        }

    def config(self) -> dict:
        return {"net": asdict(self.cfg), "loss": asdict(self.loss), "max_answer": self.max_answer}

    @classmethod
    def from_config(cls, cfg: dict) -> "LstmReader":
        return cls(ReaderConfig(**cfg["net"]), RngStream(0), BabiLossConfig(**cfg["loss"]), cfg["max_answer"])

    def encode(self, stories: Sequence[Story], dropout: Dropout | None = None) -> Tensor:
        seqs = [[t for f in s.facts for t in f] + list(s.question) for s in stories]
        ids, masks = pad_batch(seqs)
        inputs = [ad.embed(self.embeddings, ids[t]) for t in range(ids.shape[0])]
        state, _ = run_sequence(self.reader, inputs, masks=masks, dropout=dropout)
        return state.y

    def batch_loss(self, batch, lam: float, word_dropout: Dropout | None = None, hl_dropout: Dropout | None = None):
        final = self.encode(batch, word_dropout)
        targets = [list(s.answer) + [EOS_ID] for s in batch]
        loss = margin_prediction_loss(teacher_forced_scores(self, final, targets), targets, self.loss.margin)
        return loss, {"e_prediction": loss.item()}, (0.0, 0.0)

    def predict(self, stories: Sequence[Story]) -> list[list[int]]:
        out = []
        for chunk in _chunks(stories, EVAL_BATCH):
            out.extend(d.tokens for d in decode_batch(self, self.encode(chunk), self.max_answer))
        return out

    def evaluate(self, stories: Sequence[Story]) -> dict[str, float]:
        acc = accuracy(self.predict(stories), [list(s.answer) for s in stories])
        return {"metric": acc, "accuracy": acc}


MODEL_TYPES = {
    SequenceClassifier.kind: SequenceClassifier,
    ParaphraseModel.kind: ParaphraseModel,
    BabiModel.kind: BabiModel,
    LstmReader.kind: LstmReader,
}
