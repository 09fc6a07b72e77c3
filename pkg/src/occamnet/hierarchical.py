"""Hierarchical Gated LSTM for story question answering.

A word-gated Fact model encodes every fact; a Gated Stacked LSTM (the
High-Level model) reads, for each fact, the averaged question embedding
concatenated with the fact vector and gates the whole fact with one scalar.
Its final top-layer hidden state initialises an LSTM decoder that emits the
answer and terminates with ``<EOS>``.

All entry points work on minibatches of stories; the single-story functions
(:func:`encode_fact`, :func:`encode_story`, ...) are thin wrappers over a
batch of one.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import RngStream, Tensor
from .cells import (
    Dropout,
    GatedLstmCell,
    GateParams,
    LstmCell,
    LstmParams,
    LstmState,
    StackedGatedLstm,
    run_sequence,
)
from .data import EOS_ID, Story, pad_batch
from .objectives import (
    BabiLossConfig,
    combined_babi_loss,
    fact_selection_loss,
    margin_prediction_loss,
    word_sparsity_loss,
)


@dataclass(frozen=True)
class HgLstmConfig:
    vocab_size: int
    embed_dim: int = 50
    fact_hidden: int = 30
    question_hidden: int = 30
    hl_hidden: int = 20
    hl_layers: int = 6
    dec_hidden: int = 20
    gate: str = "quad"
    use_question_final: bool = False

    @property
    def hl_input(self) -> int:
        extra = self.question_hidden if self.use_question_final else 0
        return self.embed_dim + self.fact_hidden + extra


class HgLstm:
    """Parameters of the hierarchical model plus its named-parameter table."""

    def __init__(self, cfg: HgLstmConfig, rng: RngStream):
        self.cfg = cfg
        bound = 1.0 / np.sqrt(cfg.embed_dim)
        self.embeddings = ad.parameter(rng.uniform(-bound, bound, (cfg.vocab_size, cfg.embed_dim)), name="embeddings")
        self.fact_model = GatedLstmCell(
            LstmParams.init(cfg.embed_dim, cfg.fact_hidden, rng),
            GateParams.init(cfg.gate, cfg.embed_dim, cfg.fact_hidden, rng),
        )
        self.question_model = GatedLstmCell(
            LstmParams.init(cfg.embed_dim, cfg.question_hidden, rng),
            GateParams.init(cfg.gate, cfg.embed_dim, cfg.question_hidden, rng),
        )
        layers = [LstmParams.init(cfg.hl_input, cfg.hl_hidden, rng)]
        layers += [LstmParams.init(cfg.hl_hidden, cfg.hl_hidden, rng) for _ in range(cfg.hl_layers - 1)]
        self.hl_model = StackedGatedLstm(layers, GateParams.init(cfg.gate, cfg.hl_input, cfg.hl_hidden, rng))
        self.decoder = LstmCell(LstmParams.init(cfg.embed_dim, cfg.dec_hidden, rng))
        hb = 1.0 / np.sqrt(cfg.hl_hidden)
        self.init_m = ad.parameter(rng.uniform(-hb, hb, (cfg.dec_hidden, cfg.hl_hidden)), name="init_m")
        self.init_m_b = ad.parameter(np.zeros((cfg.dec_hidden, 1)), name="init_m_b")
        self.init_y = ad.parameter(rng.uniform(-hb, hb, (cfg.dec_hidden, cfg.hl_hidden)), name="init_y")
        self.init_y_b = ad.parameter(np.zeros((cfg.dec_hidden, 1)), name="init_y_b")
        db = 1.0 / np.sqrt(cfg.dec_hidden)
        self.out_W = ad.parameter(rng.uniform(-db, db, (cfg.vocab_size, cfg.dec_hidden)), name="out_W")
        self.out_b = ad.parameter(np.zeros((cfg.vocab_size, 1)), name="out_b")

    def named(self) -> dict[str, Tensor]:
        out = {"embeddings": self.embeddings}
        out.update(self.fact_model.named("fact."))
        out.update(self.question_model.named("question."))
        out.update(self.hl_model.named("hl."))
        out.update(self.decoder.named("decoder."))
        out.update(
            {
                "decoder.init_m": self.init_m,
                "decoder.init_m_b": self.init_m_b,
                "decoder.init_y": self.init_y,
                "decoder.init_y_b": self.init_y_b,
                "decoder.out_W": self.out_W,
                "decoder.out_b": self.out_b,
            }
        )
        return out

    def config_dict(self) -> dict:
        return asdict(self.cfg)


@dataclass
class StoryBatchEncoding:
    """Encodings of a minibatch of stories.

    ``word_gates[t]`` is a 1 x N row over all N facts in the batch (with
    ``word_masks[t]`` marking real tokens); ``fact_gates[t]`` is a 1 x B row
    over stories (``fact_masks[t]`` marks real facts).
    """

    fact_final: Tensor
    fact_owner: list[tuple[int, int]]
    word_gates: list[Tensor]
    word_masks: list[np.ndarray]
    fact_gates: list[Tensor]
    fact_masks: list[np.ndarray]
    q_final: Tensor | None
    q_avg: Tensor
    hl_final: Tensor


@dataclass
class StoryEncoding:
    """Single-story view: per-fact vectors and gate scalars (1 x 1 tensors)."""

    fact_vectors: list[Tensor]
    word_gates: list[list[Tensor]]
    fact_gates: list[Tensor]
    hl_final: Tensor

    def gate_values(self) -> tuple[list[list[float]], list[float]]:
        return [[g.item() for g in fact] for fact in self.word_gates], [g.item() for g in self.fact_gates]


def _check_ids(model: HgLstm, seqs: Sequence[Sequence[int]]) -> None:
    V = model.cfg.vocab_size
    for s in seqs:
        for t in s:
            if not 0 <= t < V:
                raise IndexError(f"token id {t} outside vocabulary of {V}; map unknown words to <UNK> first")


def encode_sequences(model: HgLstm, cell: GatedLstmCell, seqs: Sequence[Sequence[int]], dropout: Dropout | None = None):
    """Run a word-level Gated LSTM over right-padded token sequences.

    Returns ``(final_hidden h x N, gates, masks)``.
    """
    _check_ids(model, seqs)
    ids, masks = pad_batch(seqs)
    inputs = [ad.embed(model.embeddings, ids[t]) for t in range(ids.shape[0])]
    state, gates = run_sequence(cell, inputs, masks=masks, dropout=dropout)
    return state.y, gates, masks


def encode_fact(model: HgLstm, tokens: Sequence[int]) -> tuple[Tensor, list[Tensor]]:
    """Final Fact-model hidden state (h x 1) and the per-word gate scalars."""
    if len(tokens) == 0:
        raise ValueError("empty fact")
    y, gates, _ = encode_sequences(model, model.fact_model, [tokens])
    return y, gates


def question_average(model: HgLstm, seqs: Sequence[Sequence[int]]) -> Tensor:
    """Mean question-word embedding per column.

    Words are summed in sorted-id order so the mean is bit-for-bit invariant
    to word order.
    """
    _check_ids(model, seqs)
    ids, masks = pad_batch([sorted(s) for s in seqs])
    lengths = np.array([len(s) for s in seqs], dtype=np.float64)
    total = None
    for t in range(ids.shape[0]):
        e = ad.embed(model.embeddings, ids[t])
        if not np.all(masks[t]):
            e = ad.scale_cols(e, ad.constant(masks[t].reshape(1, -1)))
        total = e if total is None else ad.add(total, e)
    return ad.scale_cols(total, ad.constant((1.0 / lengths).reshape(1, -1)))


def encode_question(model: HgLstm, tokens: Sequence[int]) -> tuple[Tensor, Tensor]:
    """``(q_final, q_avg)`` for one question."""
    if len(tokens) == 0:
        raise ValueError("empty question")
    q_final, _, _ = encode_sequences(model, model.question_model, [tokens])
    return q_final, question_average(model, [tokens])


def encode_batch(
    model: HgLstm,
    stories: Sequence[Story],
    word_dropout: Dropout | None = None,
    hl_dropout: Dropout | None = None,
) -> StoryBatchEncoding:
    if not stories:
        raise ValueError("empty story batch")
    for k, s in enumerate(stories):
        if not s.facts:
            raise ValueError(f"story {k} has no facts")
        if not s.question:
            raise ValueError(f"story {k} has an empty question")
    owner = [(b, i) for b, s in enumerate(stories) for i in range(len(s.facts))]
    all_facts = [f for s in stories for f in s.facts]
    fact_final, word_gates, word_masks = encode_sequences(model, model.fact_model, all_facts, word_dropout)

    questions = [s.question for s in stories]
    q_avg = question_average(model, questions)
    q_final = None
    prefix = [q_avg]
    if model.cfg.use_question_final:
        q_final, _, _ = encode_sequences(model, model.question_model, questions, word_dropout)
        prefix.append(q_final)

    B = len(stories)
    counts = np.array([len(s.facts) for s in stories])
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    T = int(counts.max())
    inputs, fact_masks = [], []
    for t in range(T):
        live = counts > t
        cols = np.where(live, starts + np.minimum(t, counts - 1), starts)
        inputs.append(ad.concat_rows(prefix + [ad.take_cols(fact_final, cols)]))
        fact_masks.append(live.astype(np.float64))
    state, fact_gates = run_sequence(model.hl_model, inputs, masks=fact_masks, dropout=hl_dropout)
    return StoryBatchEncoding(
        fact_final=fact_final,
        fact_owner=owner,
        word_gates=word_gates,
        word_masks=word_masks,
        fact_gates=fact_gates,
        fact_masks=fact_masks,
        q_final=q_final,
        q_avg=q_avg,
        hl_final=state[-1].y,
    )


def encode_story(model: HgLstm, story: Story) -> StoryEncoding:
    enc = encode_batch(model, [story])
    word_gates = []
    for i, fact in enumerate(story.facts):
        word_gates.append([ad.take_cols(enc.word_gates[t], [i]) for t in range(len(fact))])
    return StoryEncoding(
        fact_vectors=[ad.take_cols(enc.fact_final, [i]) for i in range(len(story.facts))],
        word_gates=word_gates,
        fact_gates=list(enc.fact_gates),
        hl_final=enc.hl_final,
    )


def decoder_init(model: HgLstm, hl_final: Tensor) -> LstmState:
    m = ad.add_bias(ad.matmul(model.init_m, hl_final), model.init_m_b)
    y = ad.add_bias(ad.matmul(model.init_y, hl_final), model.init_y_b)
    return LstmState(m, y)


def _scores(model: HgLstm, y: Tensor) -> Tensor:
    return ad.add_bias(ad.matmul(model.out_W, y), model.out_b)


def teacher_forced_scores(model: HgLstm, hl_final: Tensor, targets: Sequence[Sequence[int]]) -> list[Tensor]:
    """Decoder score vectors when each step is fed the previous *target* token.

    The first step receives a zero input vector.
    """
    B = hl_final.cols
    steps = max(len(t) for t in targets)
    state = decoder_init(model, hl_final)
    x = ad.zeros(model.cfg.embed_dim, B)
    scores = []
    for pos in range(steps):
        state = model.decoder.step(x, state).state
        scores.append(_scores(model, state.y))
        if pos + 1 < steps:
            prev = [t[pos] if pos < len(t) else EOS_ID for t in targets]
            x = ad.embed(model.embeddings, prev)
    return scores


@dataclass
class Decoded:
    tokens: list[int]
    scores: list[Tensor]
    truncated: bool


def decode_batch(model: HgLstm, hl_final: Tensor, max_len: int) -> list[Decoded]:
    """Greedy decoding; ties go to the lowest token id. Stops at ``<EOS>`` or ``max_len``."""
    if max_len < 1:
        raise ValueError(f"max_len must be at least 1, got {max_len}")
    B = hl_final.cols
    state = decoder_init(model, hl_final)
    x = ad.zeros(model.cfg.embed_dim, B)
    tokens: list[list[int]] = [[] for _ in range(B)]
    scores: list[list[Tensor]] = [[] for _ in range(B)]
    done = np.zeros(B, dtype=bool)
    for _ in range(max_len):
        state = model.decoder.step(x, state).state
        s = _scores(model, state.y)
        choice = np.argmax(s.value, axis=0)
        for b in range(B):
            if done[b]:
                continue
            scores[b].append(ad.take_cols(s, [b]))
            if choice[b] == EOS_ID:
                done[b] = True
            else:
                tokens[b].append(int(choice[b]))
        if done.all():
            break
        x = ad.embed(model.embeddings, choice)
    return [Decoded(tokens[b], scores[b], not done[b]) for b in range(B)]


def decode_answer(model: HgLstm, hl_final: Tensor, max_len: int) -> Decoded:
    return decode_batch(model, hl_final, max_len)[0]


def story_loss(
    model: HgLstm,
    stories: Sequence[Story],
    cfg: BabiLossConfig,
    lambda_word: float | None = None,
    word_dropout: Dropout | None = None,
    hl_dropout: Dropout | None = None,
) -> tuple[Tensor, dict[str, float], StoryBatchEncoding]:
    """Combined loss summed over the batch, with its three components."""
    enc = encode_batch(model, stories, word_dropout, hl_dropout)
    targets = [list(s.answer) + [EOS_ID] for s in stories]
    scores = teacher_forced_scores(model, enc.hl_final, targets)
    e_pred = margin_prediction_loss(scores, targets, cfg.margin)
    e_fact = fact_selection_loss(enc.fact_gates, [s.supporting for s in stories], cfg.mu_unsupporting, enc.fact_masks)
    e_word = word_sparsity_loss(enc.word_gates, enc.word_masks)
    total = combined_babi_loss(e_pred, e_fact, e_word, cfg, lambda_word)
    parts = {"e_prediction": e_pred.item(), "e_fact": e_fact.item(), "e_word": e_word.item()}
    return total, parts, enc
