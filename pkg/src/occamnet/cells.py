"""Vanilla LSTM, the input-gated (Occam) LSTM and its stacked variant.

Shapes follow the batching convention of :mod:`occamnet.autodiff`: an input
at one timestep is ``d x B``, states are ``h x B`` and the Occam gate is a
``1 x B`` row holding one scalar per example.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import RngStream, ShapeError, Tensor

Dropout = Callable[[Tensor], Tensor]

GATE_NAMES = ("z", "i", "f", "o")


def _uniform(rng: RngStream, rows: int, cols: int, fan_in: int, name: str) -> Tensor:
    bound = 1.0 / math.sqrt(fan_in)
    return ad.parameter(rng.uniform(-bound, bound, (rows, cols)), name=name)


@dataclass
class LstmParams:
    """Weights of one LSTM layer; ``W[k]`` is h x d, ``R[k]`` h x h, ``b[k]`` h x 1."""

    W: dict[str, Tensor]
    R: dict[str, Tensor]
    b: dict[str, Tensor]

    @property
    def input_size(self) -> int:
        return self.W["z"].cols

    @property
    def hidden_size(self) -> int:
        return self.R["z"].rows

    @classmethod
    def init(cls, input_size: int, hidden_size: int, rng: RngStream, forget_bias: float = 1.0) -> "LstmParams":
        W = {k: _uniform(rng, hidden_size, input_size, input_size, f"W_{k}") for k in GATE_NAMES}
        R = {k: _uniform(rng, hidden_size, hidden_size, hidden_size, f"R_{k}") for k in GATE_NAMES}
        b = {k: ad.parameter(np.zeros((hidden_size, 1)), name=f"b_{k}") for k in GATE_NAMES}
        b["f"].value[:] = forget_bias
        return cls(W, R, b)

    @classmethod
    def zeros(cls, input_size: int, hidden_size: int) -> "LstmParams":
        W = {k: ad.parameter(np.zeros((hidden_size, input_size)), name=f"W_{k}") for k in GATE_NAMES}
        R = {k: ad.parameter(np.zeros((hidden_size, hidden_size)), name=f"R_{k}") for k in GATE_NAMES}
        b = {k: ad.parameter(np.zeros((hidden_size, 1)), name=f"b_{k}") for k in GATE_NAMES}
        return cls(W, R, b)

    def named(self, prefix: str = "") -> dict[str, Tensor]:
        out = {}
        for group, table in (("W", self.W), ("R", self.R), ("b", self.b)):
            for k in GATE_NAMES:
                out[f"{prefix}{group}_{k}"] = table[k]
        return out

    def validate(self) -> None:
        d, h = self.input_size, self.hidden_size
        for k in GATE_NAMES:
            if self.W[k].shape != (h, d) or self.R[k].shape != (h, h) or self.b[k].shape != (h, 1):
                raise ShapeError(f"inconsistent LSTM parameter shapes for gate {k!r}")


@dataclass
class GateParams:
    """Parameters of the scalar Occam gate.

    ``linear``: sigmoid(p.x + q.h + b); ``quad`` adds the bilinear term h^T W x.
    """

    kind: str
    p: Tensor
    q: Tensor
    b: Tensor
    W: Tensor | None = None

    def __post_init__(self):
        if self.kind not in ("linear", "quad"):
            raise ValueError(f"gate kind must be 'linear' or 'quad', got {self.kind!r}")
        if self.kind == "linear" and self.W is not None:
            raise ValueError("a linear gate carries no bilinear matrix")
        if self.kind == "quad" and self.W is None:
            raise ValueError("a quad gate needs its bilinear matrix")

    @property
    def input_size(self) -> int:
        return self.p.rows

    @property
    def cond_size(self) -> int:
        return self.q.rows

    @classmethod
    def init(cls, kind: str, input_size: int, cond_size: int, rng: RngStream, bias: float = 0.0) -> "GateParams":
        p = _uniform(rng, input_size, 1, input_size, "gate_p")
        q = _uniform(rng, cond_size, 1, cond_size, "gate_q")
        W = _uniform(rng, cond_size, input_size, input_size, "gate_W") if kind == "quad" else None
        return cls(kind, p, q, ad.parameter([[bias]], name="gate_b"), W)

    @classmethod
    def zeros(cls, kind: str, input_size: int, cond_size: int) -> "GateParams":
        W = ad.parameter(np.zeros((cond_size, input_size)), name="gate_W") if kind == "quad" else None
        return cls(
            kind,
            ad.parameter(np.zeros((input_size, 1)), name="gate_p"),
            ad.parameter(np.zeros((cond_size, 1)), name="gate_q"),
            ad.parameter([[0.0]], name="gate_b"),
            W,
        )

    def named(self, prefix: str = "") -> dict[str, Tensor]:
        out = {f"{prefix}gate_p": self.p, f"{prefix}gate_q": self.q, f"{prefix}gate_b": self.b}
        if self.W is not None:
            out[f"{prefix}gate_W"] = self.W
        return out


@dataclass
class LstmState:
    m: Tensor
    y: Tensor

    @classmethod
    def zeros(cls, hidden_size: int, batch: int = 1) -> "LstmState":
        return cls(ad.zeros(hidden_size, batch), ad.zeros(hidden_size, batch))


@dataclass
class StepOutput:
    """New state after one timestep plus the Occam gate row (``None`` for a vanilla cell)."""

    state: LstmState | list[LstmState]
    gate: Tensor | None = None


def _affine(W: Tensor, x: Tensor, R: Tensor, y: Tensor, b: Tensor) -> Tensor:
    return ad.add_bias(ad.add(ad.matmul(W, x), ad.matmul(R, y)), b)


def _check_step_shapes(params: LstmParams, x: Tensor, prev: LstmState) -> None:
    if x.rows != params.input_size:
        raise ShapeError(f"input has {x.rows} rows, cell expects {params.input_size}")
    h = params.hidden_size
    if prev.m.rows != h or prev.y.rows != h or prev.m.cols != x.cols or prev.y.cols != x.cols:
        raise ShapeError(
            f"state shapes {prev.m.rows}x{prev.m.cols}/{prev.y.rows}x{prev.y.cols} do not fit hidden {h}, batch {x.cols}"
        )


def lstm_step(params: LstmParams, x_t: Tensor, prev: LstmState, dropout: Dropout | None = None) -> StepOutput:
    """One vanilla LSTM step.

    ``dropout`` (if given) is applied to the input entering the W matrices
    only; the recurrent path through R is never dropped.
    """
    _check_step_shapes(params, x_t, prev)
    if dropout is not None:
        x_t = dropout(x_t)
    W, R, b = params.W, params.R, params.b
    z = ad.tanh(_affine(W["z"], x_t, R["z"], prev.y, b["z"]))
    i = ad.sigmoid(_affine(W["i"], x_t, R["i"], prev.y, b["i"]))
    f = ad.sigmoid(_affine(W["f"], x_t, R["f"], prev.y, b["f"]))
    o = ad.sigmoid(_affine(W["o"], x_t, R["o"], prev.y, b["o"]))
    m = ad.add(ad.hadamard(i, z), ad.hadamard(f, prev.m))
    # the hidden row squashes the memory state m, not a separate cell state
    y = ad.hadamard(o, ad.tanh(m))
    return StepOutput(LstmState(m, y))


def gate_activation(g: GateParams, x_t: Tensor, h: Tensor) -> Tensor:
    """Scalar gate per column of ``x_t``; returns a ``1 x B`` row in (0, 1)."""
    if x_t.rows != g.input_size or h.rows != g.cond_size:
        raise ShapeError(
            f"gate expects input {g.input_size} / conditioning {g.cond_size} rows, got {x_t.rows} / {h.rows}"
        )
    if x_t.cols != h.cols:
        raise ShapeError(f"gate input batch {x_t.cols} differs from conditioning batch {h.cols}")
    pre = ad.add(ad.matmul(ad.transpose(g.p), x_t), ad.matmul(ad.transpose(g.q), h))
    if g.kind == "quad":
        pre = ad.add(pre, ad.sum_rows(ad.hadamard(h, ad.matmul(g.W, x_t))))
    pre = ad.add_bias(pre, g.b)
    return ad.sigmoid(pre)


def gated_lstm_step(
    params: LstmParams, g: GateParams, x_t: Tensor, prev: LstmState, dropout: Dropout | None = None
) -> StepOutput:
    """LSTM step whose whole input is scaled by one gate scalar conditioned on ``prev.y``."""
    if dropout is not None:
        x_t = dropout(x_t)
    gate = gate_activation(g, x_t, prev.y)
    out = lstm_step(params, ad.scale_cols(x_t, gate), prev)
    out.gate = gate
    return out


def stacked_gated_step(
    layers: Sequence[LstmParams],
    g: GateParams,
    x_t: Tensor,
    prev: Sequence[LstmState],
    dropout: Dropout | None = None,
) -> StepOutput:
    """One timestep of a Gated Stacked LSTM.

    A single gate computed from ``x_t`` and the top layer's previous hidden
    state scales the bottom layer's input; each higher layer reads the
    hidden output of the layer below at the same timestep.
    """
    if not layers:
        raise ShapeError("stacked LSTM needs at least one layer")
    if len(prev) != len(layers):
        raise ShapeError(f"{len(layers)} layers but {len(prev)} previous states")
    for lower, upper in zip(layers, layers[1:]):
        if upper.input_size != lower.hidden_size:
            raise ShapeError(f"layer input width {upper.input_size} does not match hidden size {lower.hidden_size} below")
    if dropout is not None:
        x_t = dropout(x_t)
    gate = gate_activation(g, x_t, prev[-1].y)
    inp = ad.scale_cols(x_t, gate)
    states = []
    for k, (layer, state) in enumerate(zip(layers, prev)):
        if k > 0 and dropout is not None:
            inp = dropout(inp)
        new = lstm_step(layer, inp, state).state
        states.append(new)
        inp = new.y
    return StepOutput(states, gate)


class LstmCell:
    def __init__(self, params: LstmParams):
        self.params = params

    @property
    def hidden_size(self) -> int:
        return self.params.hidden_size

    def initial_state(self, batch: int = 1) -> LstmState:
        return LstmState.zeros(self.hidden_size, batch)

    def step(self, x_t: Tensor, prev: LstmState, dropout: Dropout | None = None) -> StepOutput:
        return lstm_step(self.params, x_t, prev, dropout)

    def named(self, prefix: str = "") -> dict[str, Tensor]:
        return self.params.named(prefix)


class GatedLstmCell(LstmCell):
    def __init__(self, params: LstmParams, gate: GateParams):
        super().__init__(params)
        self.gate = gate

    def step(self, x_t: Tensor, prev: LstmState, dropout: Dropout | None = None) -> StepOutput:
        return gated_lstm_step(self.params, self.gate, x_t, prev, dropout)

    def named(self, prefix: str = "") -> dict[str, Tensor]:
        return {**self.params.named(prefix), **self.gate.named(prefix)}


class StackedGatedLstm:
    def __init__(self, layers: Sequence[LstmParams], gate: GateParams):
        self.layers = list(layers)
        self.gate = gate

    @property
    def hidden_size(self) -> int:
        return self.layers[-1].hidden_size

    def initial_state(self, batch: int = 1) -> list[LstmState]:
        return [LstmState.zeros(layer.hidden_size, batch) for layer in self.layers]

    def step(self, x_t: Tensor, prev: list[LstmState], dropout: Dropout | None = None) -> StepOutput:
        return stacked_gated_step(self.layers, self.gate, x_t, prev, dropout)

    def named(self, prefix: str = "") -> dict[str, Tensor]:
        out = {}
        for k, layer in enumerate(self.layers):
            out.update(layer.named(f"{prefix}l{k}."))
        out.update(self.gate.named(prefix))
        return out


def top(state: LstmState | list[LstmState]) -> LstmState:
    return state[-1] if isinstance(state, list) else state


def _blend(new: Tensor, old: Tensor, keep: Tensor, drop: Tensor) -> Tensor:
    return ad.add(ad.scale_cols(new, keep), ad.scale_cols(old, drop))


def _masked(new, old, mask: Tensor, inv: Tensor):
    if isinstance(new, list):
        return [_masked(n, o, mask, inv) for n, o in zip(new, old)]
    return LstmState(_blend(new.m, old.m, mask, inv), _blend(new.y, old.y, mask, inv))


def run_sequence(
    cell,
    inputs: Sequence[Tensor],
    init=None,
    masks: Sequence[np.ndarray] | None = None,
    dropout: Dropout | None = None,
):
    """Fold ``cell.step`` over ``inputs`` starting from ``init`` (zeros by default).

    ``masks[t]`` is a 0/1 vector over the batch; where it is 0 the state is
    carried over unchanged, which lets right-padded sequences of different
    lengths share one batch. Returns ``(final_state, gates)`` where ``gates``
    holds the per-timestep gate rows (empty for a vanilla cell).
    """
    if len(inputs) == 0:
        raise ValueError("run_sequence: empty input sequence")
    state = init if init is not None else cell.initial_state(inputs[0].cols)
    gates: list[Tensor] = []
    for t, x_t in enumerate(inputs):
        out = cell.step(x_t, state, dropout)
        if masks is not None and not np.all(masks[t]):
            mask = np.asarray(masks[t], dtype=np.float64).reshape(1, -1)
            state = _masked(out.state, state, ad.constant(mask), ad.constant(1.0 - mask))
        else:
            state = out.state
        if out.gate is not None:
            gates.append(out.gate)
    return state, gates
