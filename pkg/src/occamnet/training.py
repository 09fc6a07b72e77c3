"""AdaDelta, dropout, the epoch loop with annealed sparsity, checkpoints and metrics."""

from __future__ import annotations

import io
import json
import logging
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import RngStream, ShapeError, Tensor
from .models import MODEL_TYPES
from .objectives import BabiLossConfig, SparsityConfig, lambda_at, saturated

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"OCCAMNET"
CHECKPOINT_VERSION = 1


# ---------------------------------------------------------------------------
# Optimiser
# ---------------------------------------------------------------------------


@dataclass
class AdaDeltaState:
    """Running averages of squared gradients and squared updates per parameter."""

    sq_grad: dict[str, np.ndarray]
    sq_delta: dict[str, np.ndarray]
    rho: float = 0.95
    eps: float = 1e-6

    @classmethod
    def for_params(cls, params: Mapping[str, Tensor], rho: float = 0.95, eps: float = 1e-6) -> "AdaDeltaState":
        return cls(
            {k: np.zeros(p.shape) for k, p in params.items()},
            {k: np.zeros(p.shape) for k, p in params.items()},
            rho,
            eps,
        )


def adadelta_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, np.ndarray | None],
    state: AdaDeltaState,
    rho: float | None = None,
    eps: float | None = None,
) -> dict[str, np.ndarray]:
    """Update ``params`` in place; returns the applied deltas.

    Missing (``None``) gradients count as zero.
    """
    rho = state.rho if rho is None else rho
    eps = state.eps if eps is None else eps
    deltas = {}
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros(p.shape)
        if g.shape != p.shape or state.sq_grad[name].shape != p.shape:
            raise ShapeError(f"adadelta: gradient {g.shape} / accumulator shape mismatch for {name} {p.shape}")
        eg = state.sq_grad[name]
        eg *= rho
        eg += (1.0 - rho) * g * g
        ex = state.sq_delta[name]
        dx = -(np.sqrt(ex + eps) / np.sqrt(eg + eps)) * g
        ex *= rho
        ex += (1.0 - rho) * dx * dx
        p.value += dx
        deltas[name] = dx
    return deltas


def clip_global_norm(grads: dict[str, np.ndarray | None], max_norm: float) -> float:
    """Rescale gradients in place so their joint L2 norm is at most ``max_norm``; returns the original norm."""
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values() if g is not None))
    if max_norm > 0 and total > max_norm:
        factor = max_norm / total
        for g in grads.values():
            if g is not None:
                g *= factor
    return total


# ---------------------------------------------------------------------------
# Dropout
# ---------------------------------------------------------------------------


def apply_dropout(x: Tensor, p: float, rng: RngStream, mode: str = "train") -> Tensor:
    """Inverted dropout: zero entries with probability ``p`` and rescale survivors by ``1/(1-p)``."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if mode == "eval" or p == 0.0:
        return x
    if mode != "train":
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    keep = (rng.random(x.shape) >= p) / (1.0 - p)
    return ad.hadamard(x, ad.constant(keep))


def make_dropout(p: float, rng: RngStream, train: bool) -> Callable[[Tensor], Tensor] | None:
    if not train or p == 0.0:
        return None
    return lambda x: apply_dropout(x, p, rng, "train")


# ---------------------------------------------------------------------------
# Configuration and results
# ---------------------------------------------------------------------------


@dataclass
class TrainConfig:
    batch_size: int = 50
    word_dropout: float = 0.3
    hl_dropout: float = 0.5
    sparsity: SparsityConfig = field(default_factory=SparsityConfig)
    babi: BabiLossConfig | None = None
    patience: int = 5
    seed: int = 0
    max_epochs: int = 30
    rho: float = 0.95
    adadelta_eps: float = 1e-6
    clip_norm: float = 5.0

    def __post_init__(self):
        if self.patience < 1:
            raise ValueError(f"patience must be at least 1, got {self.patience}")
        for p in (self.word_dropout, self.hl_dropout):
            if not 0.0 <= p < 1.0:
                raise ValueError(f"dropout rates must be in [0, 1), got {p}")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d["sparsity"] = SparsityConfig(**d["sparsity"])
        if d.get("babi") is not None:
            d["babi"] = BabiLossConfig(**d["babi"])
        return cls(**d)


@dataclass
class TrainResult:
    best_params: dict[str, np.ndarray]
    best_metric: float
    best_epoch: int
    history: list[dict]
    stop_reason: str


class DivergenceError(RuntimeError):
    pass


def snapshot(params: Mapping[str, Tensor]) -> dict[str, np.ndarray]:
    return {k: p.value.copy() for k, p in params.items()}


def restore(params: Mapping[str, Tensor], values: Mapping[str, np.ndarray]) -> None:
    for k, p in params.items():
        p.value[...] = values[k]


def train_loop(
    model,
    train: Sequence,
    val: Sequence,
    cfg: TrainConfig,
    on_epoch: Callable[[dict], None] | None = None,
) -> TrainResult:
    """Minibatch AdaDelta training with annealed sparsity and early stopping.

    Each epoch sets the penalty weight from the schedule, shuffles with the
    seeded stream, averages gradients over each minibatch (summing examples
    in index order), clips, steps, then scores the validation split. The
    best-scoring parameters are retained and restored into ``model`` at the
    end. Only epochs at the full penalty weight compete for "best" and count
    toward patience, so selection never falls back to a less-penalized model
    (until then the latest parameters are kept). A non-finite loss aborts the
    run with the best finite parameters.
    """
    if not train or not val:
        raise ValueError("train and validation splits must be nonempty")
    params = model.named()
    opt = AdaDeltaState.for_params(params, cfg.rho, cfg.adadelta_eps)
    root = RngStream(cfg.seed)
    shuffle_rng = root.spawn(1)
    dropout_rng = root.spawn(2)
    word_dropout = make_dropout(cfg.word_dropout, dropout_rng, True)
    hl_dropout = make_dropout(cfg.hl_dropout, dropout_rng, True)

    best = snapshot(params)
    best_metric = -math.inf
    best_epoch = -1
    stale = 0
    ramping = False
    history: list[dict] = []
    reason = "max_epochs"
    for epoch in range(cfg.max_epochs):
        lam = lambda_at(cfg.sparsity, epoch)
        order = shuffle_rng.permutation(len(train))
        totals: dict[str, float] = {}
        gate_sum = gate_count = 0.0
        loss_sum = 0.0
        diverged = False
        for start in range(0, len(order), cfg.batch_size):
            batch = [train[int(i)] for i in order[start : start + cfg.batch_size]]
            for p in params.values():
                p.zero_grad()
            loss, parts, (gs, gc) = model.batch_loss(batch, lam, word_dropout, hl_dropout)
            loss = ad.scale(loss, 1.0 / len(batch))
            value = loss.item()
            if not math.isfinite(value):
                diverged = True
                break
            ad.backward(loss)
            grads = {k: p.grad for k, p in params.items()}
            clip_global_norm(grads, cfg.clip_norm)
            adadelta_step(params, grads, opt)
            loss_sum += value * len(batch)
            for k, v in parts.items():
                totals[k] = totals.get(k, 0.0) + v
            gate_sum += gs
            gate_count += gc
        if diverged:
            reason = "diverged"
            log.warning("non-finite loss at epoch %d; keeping best checkpoint from epoch %d", epoch, best_epoch)
            history.append({"epoch": epoch, "lambda": lam, "diverged": True})
            if on_epoch:
                on_epoch(history[-1])
            break
        metrics = model.evaluate(val)
        record = {
            "epoch": epoch,
            "lambda": lam,
            "train_loss": loss_sum / len(train),
            **{f"train_{k}": v / len(train) for k, v in sorted(totals.items())},
            "mean_gate": gate_sum / gate_count if gate_count else None,
            **{f"val_{k}": v for k, v in sorted(metrics.items()) if k != "metric"},
            "val_metric": metrics["metric"],
        }
        history.append(record)
        log.info("epoch %d lambda=%.4g loss=%.4f val=%.4f", epoch, lam, record["train_loss"], metrics["metric"])
        if on_epoch:
            on_epoch(record)
        if not saturated(cfg.sparsity, epoch):
            best, best_metric, best_epoch = snapshot(params), metrics["metric"], epoch
            ramping = True
            continue
        if ramping or metrics["metric"] > best_metric:
            ramping = False
            best_metric = metrics["metric"]
            best_epoch = epoch
            best = snapshot(params)
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                reason = "early_stopping"
                break
    restore(params, best)
    return TrainResult(best, best_metric, best_epoch, history, reason)


def evaluate(model, examples: Sequence, vocab=None, checkpoint_vocab=None) -> dict[str, float]:
    """Score ``model`` on ``examples``; refuses a checkpoint/data vocabulary mismatch."""
    if vocab is not None and checkpoint_vocab is not None and list(vocab.itos) != list(checkpoint_vocab.itos):
        raise ValueError("vocabulary of the data does not match the checkpoint's vocabulary")
    return model.evaluate(examples)


# ---------------------------------------------------------------------------
# Checkpoints and metrics files
# ---------------------------------------------------------------------------


def save_checkpoint(path: str | Path, model, header: dict, params: Mapping[str, np.ndarray] | None = None) -> None:
    """Write a versioned checkpoint.

    Layout: magic, u32 version, u32 header length, UTF-8 JSON header (model
    kind and config plus caller metadata), u32 tensor count, then per tensor:
    u16 name length, name, u32 rows, u32 cols, float64 little-endian data.
    """
    values = params if params is not None else snapshot(model.named())
    meta = {**header, "model": model.kind, "model_config": model.config()}
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<II", CHECKPOINT_VERSION, len(blob)))
    buf.write(blob)
    buf.write(struct.pack("<I", len(values)))
    for name, arr in values.items():
        raw = name.encode("utf-8")
        arr = np.asarray(arr, dtype="<f8")
        buf.write(struct.pack("<H", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<II", *arr.shape))
        buf.write(np.ascontiguousarray(arr).tobytes())
    Path(path).write_bytes(buf.getvalue())


def read_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if raw[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not an occamnet checkpoint")
    off = len(CHECKPOINT_MAGIC)
    version, hlen = struct.unpack_from("<II", raw, off)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    off += 8
    header = json.loads(raw[off : off + hlen].decode("utf-8"))
    off += hlen
    (count,) = struct.unpack_from("<I", raw, off)
    off += 4
    tensors = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", raw, off)
        off += 2
        name = raw[off : off + nlen].decode("utf-8")
        off += nlen
        rows, cols = struct.unpack_from("<II", raw, off)
        off += 8
        n = rows * cols * 8
        tensors[name] = np.frombuffer(raw[off : off + n], dtype="<f8").reshape(rows, cols).astype(np.float64)
        off += n
    if off != len(raw):
        raise ValueError(f"{path}: {len(raw) - off} trailing bytes")
    return header, tensors


def load_checkpoint(path: str | Path):
    """Rebuild the model stored at ``path``; returns ``(model, header)``."""
    header, tensors = read_checkpoint(path)
    cls = MODEL_TYPES[header["model"]]
    model = cls.from_config(header["model_config"])
    params = model.named()
    if set(params) != set(tensors):
        raise ValueError(f"{path}: parameter names do not match a {header['model']} model")
    for k, p in params.items():
        if p.shape != tensors[k].shape:
            raise ValueError(f"{path}: tensor {k} has shape {tensors[k].shape}, model expects {p.shape}")
        p.value[...] = tensors[k]
    return model, header


class MetricsWriter:
    """Line-delimited JSON: a header record with the resolved config, then one record per epoch."""

    def __init__(self, path: str | Path | None, header: dict):
        self.path = Path(path) if path else None
        self.lines = [json.dumps({"type": "header", **header}, sort_keys=True)]
        self._flush()

    def __call__(self, record: dict) -> None:
        self.lines.append(json.dumps({"type": "epoch", **record}, sort_keys=True))
        self._flush()

    def summary(self, record: dict) -> None:
        self.lines.append(json.dumps({"type": "summary", **record}, sort_keys=True))
        self._flush()

    def _flush(self) -> None:
        if self.path is not None:
            self.path.write_text("\n".join(self.lines) + "\n", encoding="utf-8")
