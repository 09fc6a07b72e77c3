"""Loss terms and the sparsity-penalty annealing schedules.

Losses accept batched tensors (one example per column) and return the
*sum* over the batch as a 1 x 1 tensor; callers divide by the batch size.
Gate arguments may be tensors or plain floats, so the functions double as
scalar calculators.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

FACT_GATE_EPS = 1e-7
REGIMENS = ("flat", "linear", "quadratic")


@dataclass(frozen=True)
class SparsityConfig:
    lambda_max: float = 0.0
    t_max: int = 1
    regimen: str = "flat"
    warmup: int = 0  # epochs held at zero before the regimen starts counting

    def __post_init__(self):
        if self.warmup < 0:
            raise ValueError(f"warmup must be nonnegative, got {self.warmup}")
        if self.lambda_max < 0:
            raise ValueError(f"lambda_max must be nonnegative, got {self.lambda_max}")
        if self.t_max < 1:
            raise ValueError(f"t_max must be at least 1, got {self.t_max}")
        if self.regimen not in REGIMENS:
            raise ValueError(f"unknown regimen {self.regimen!r}; expected one of {REGIMENS}")


@dataclass(frozen=True)
class BabiLossConfig:
    margin: float = 1.0
    mu_unsupporting: float = 0.1
    lambda_fact: float = 0.0
    lambda_word: float = 0.0

    def __post_init__(self):
        if not self.margin > 0:
            raise ValueError(f"margin must be positive, got {self.margin}")
        if self.mu_unsupporting < 0 or self.lambda_fact < 0 or self.lambda_word < 0:
            raise ValueError("loss weights must be nonnegative")


def lambda_at(cfg: SparsityConfig, epoch: int) -> float:
    """Penalty weight for ``epoch`` (0-based) under the configured regimen."""
    if epoch < 0:
        raise ValueError(f"epoch must be nonnegative, got {epoch}")
    if epoch < cfg.warmup:
        return 0.0
    epoch -= cfg.warmup
    if cfg.regimen == "flat":
        return cfg.lambda_max
    frac = epoch / cfg.t_max
    if cfg.regimen == "linear":
        return min(frac * cfg.lambda_max, cfg.lambda_max)
    return min(frac**2 * cfg.lambda_max, cfg.lambda_max)


def saturated(cfg: SparsityConfig, epoch: int) -> bool:
    """True once the schedule has reached ``lambda_max`` for good."""
    if cfg.lambda_max == 0:
        return True
    if epoch < cfg.warmup:
        return False
    return cfg.regimen == "flat" or epoch - cfg.warmup >= cfg.t_max


def _as_tensors(gates: Iterable) -> list[Tensor]:
    return [g if isinstance(g, Tensor) else ad.constant([[float(g)]]) for g in gates]


def _total(terms: list[Tensor]) -> Tensor:
    if not terms:
        return ad.constant([[0.0]])
    acc = ad.sum_all(terms[0])
    for t in terms[1:]:
        acc = ad.add(acc, ad.sum_all(t))
    return acc


def gate_sum(gates: Iterable, masks: Sequence[np.ndarray] | None = None) -> Tensor:
    """Sum of all gate activations, skipping padded positions when ``masks`` is given."""
    terms = _as_tensors(gates)
    if masks is not None:
        terms = [ad.hadamard(g, ad.constant(np.reshape(m, g.shape))) for g, m in zip(terms, masks)]
    return _total(terms)


def sparsity_penalty(gates: Iterable, lam: float, masks: Sequence[np.ndarray] | None = None) -> Tensor:
    """``lam * sum(gates)``: the L1 penalty on (nonnegative) gate activations."""
    return ad.scale(gate_sum(gates, masks), lam)


def word_sparsity_loss(word_gates: Iterable, masks: Sequence[np.ndarray] | None = None) -> Tensor:
    """Sum of every word gate across facts.

    Accepts either per-fact lists of scalars or a flat list of gate rows.
    """
    flat = []
    for item in word_gates:
        if isinstance(item, Tensor) or np.isscalar(item):
            flat.append(item)
        else:
            flat.extend(item)
    return gate_sum(flat, masks)


def sentiment_loss(scores: Tensor, labels: int | Sequence[int]) -> Tensor:
    """Cross-entropy of the softmax over class scores, i.e. KL(one-hot || softmax)."""
    labels = np.atleast_1d(np.asarray(labels, dtype=np.intp))
    if labels.shape != (scores.cols,):
        raise ValueError(f"{scores.cols} score columns but {labels.size} labels")
    if np.any(labels < 0) or np.any(labels >= scores.rows):
        raise ValueError(f"label outside 0..{scores.rows - 1}")
    return ad.scale(ad.sum_all(ad.pick(ad.log_softmax(scores), labels)), -1.0)


def cosine(h1: Tensor, h2: Tensor) -> Tensor:
    """Column-wise cosine similarity, 1 x B."""
    if h1.shape != h2.shape:
        raise ad.ShapeError(f"cosine: shapes {h1.shape} and {h2.shape} differ")
    n1 = np.sqrt((h1.value**2).sum(axis=0))
    n2 = np.sqrt((h2.value**2).sum(axis=0))
    if np.any(n1 == 0) or np.any(n2 == 0):
        raise FloatingPointError("cosine of a zero-norm hidden state is undefined")
    dot = ad.sum_rows(ad.hadamard(h1, h2))
    norms = ad.hadamard(ad.sqrt(ad.sum_rows(ad.square(h1))), ad.sqrt(ad.sum_rows(ad.square(h2))))
    return ad.hadamard(dot, ad.reciprocal(norms))


def paraphrase_loss(
    h1: Tensor,
    h2: Tensor,
    target,
    gates1: Iterable = (),
    gates2: Iterable = (),
    lam: float = 0.0,
    masks1: Sequence[np.ndarray] | None = None,
    masks2: Sequence[np.ndarray] | None = None,
) -> Tensor:
    """Squared gap between cosine(h1, h2) and the similarity target, plus the gate penalty."""
    cos = cosine(h1, h2)
    t = ad.constant(np.reshape(np.asarray(target, dtype=np.float64), (1, h1.cols)))
    fit = ad.sum_all(ad.square(ad.sub(cos, t)))
    if lam == 0.0:
        return fit
    penalty = ad.add(gate_sum(gates1, masks1), gate_sum(gates2, masks2))
    return ad.add(fit, ad.scale(penalty, lam))


def margin_prediction_loss(
    score_seq: Sequence[Tensor],
    targets,
    margin: float = 1.0,
) -> Tensor:
    """Hinge loss: every wrong token must trail the target's score by ``margin``.

    ``targets`` is a token list for a single example, or a list of token lists
    (one per column) for a batch; positions beyond an example's target length
    contribute nothing.
    """
    if len(score_seq) == 0:
        raise ValueError("no score vectors")
    batch = score_seq[0].cols
    vocab = score_seq[0].rows
    if batch == 1 and targets and not isinstance(targets[0], (list, tuple, np.ndarray)):
        targets = [targets]
    targets = [list(t) for t in targets]
    if len(targets) != batch:
        raise ValueError(f"{batch} score columns but {len(targets)} targets")
    longest = max(len(t) for t in targets)
    if longest > len(score_seq):
        raise ValueError(f"target of length {longest} exceeds {len(score_seq)} score positions")
    terms = []
    for pos in range(longest):
        ids = np.array([t[pos] if pos < len(t) else 0 for t in targets], dtype=np.intp)
        live = np.array([pos < len(t) for t in targets], dtype=np.float64)
        if np.any(ids < 0) or np.any(ids >= vocab):
            raise ValueError(f"target token outside vocabulary of {vocab}")
        s = score_seq[pos]
        s_true = ad.pick(s, ids)
        shifted = ad.broadcast_rows(ad.scale(s_true, -1.0), vocab)
        hinge = ad.relu(ad.add_bias(ad.add(s, shifted), ad.constant(np.full((vocab, 1), float(margin)))))
        keep = np.ones((vocab, batch)) * live
        keep[ids, np.arange(batch)] = 0.0
        terms.append(ad.hadamard(hinge, ad.constant(keep)))
    return _total(terms)


def fact_selection_loss(
    fact_gates: Sequence,
    supporting,
    mu: float = 0.1,
    masks: Sequence[np.ndarray] | None = None,
) -> Tensor:
    """Binary cross-entropy between fact gates and supporting-fact indicators.

    ``-[sum_{i in S} log g_i + mu * sum_{i not in S} log(1 - g_i)]`` with gates
    clamped to ``[eps, 1 - eps]``. For a batch, ``fact_gates[i]`` is a 1 x B row
    and ``supporting`` holds one index set per column.
    """
    gates = _as_tensors(fact_gates)
    if not gates:
        return ad.constant([[0.0]])
    batch = gates[0].cols
    if batch == 1 and not (len(supporting) and isinstance(next(iter(supporting)), (set, frozenset, list, tuple))):
        supporting = [supporting]
    supporting = [set(s) for s in supporting]
    n = len(gates)
    for s in supporting:
        if any(i < 0 or i >= n for i in s):
            raise ValueError(f"supporting index outside 0..{n - 1}")
    terms = []
    for i, g in enumerate(gates):
        target = np.array([[1.0 if i in s else 0.0 for s in supporting]])
        live = np.ones((1, batch)) if masks is None else np.reshape(masks[i], (1, batch)).astype(np.float64)
        gc = ad.clip(g, FACT_GATE_EPS, 1.0 - FACT_GATE_EPS)
        pos = ad.hadamard(ad.log(gc), ad.constant(target * live))
        neg = ad.hadamard(ad.log(ad.one_minus(gc)), ad.constant(mu * (1.0 - target) * live))
        terms.append(ad.add(pos, neg))
    return ad.scale(_total(terms), -1.0)


def combined_babi_loss(
    prediction: Tensor,
    fact: Tensor,
    word: Tensor,
    cfg: BabiLossConfig,
    lambda_word: float | None = None,
) -> Tensor:
    """``E_prediction + lambda_fact * E_fact + lambda_word * E_word``.

    ``lambda_word`` overrides ``cfg.lambda_word`` when an annealing schedule
    sets the word-penalty weight for the current epoch.
    """
    lw = cfg.lambda_word if lambda_word is None else lambda_word
    return ad.add(ad.add(prediction, ad.scale(fact, cfg.lambda_fact)), ad.scale(word, lw))
