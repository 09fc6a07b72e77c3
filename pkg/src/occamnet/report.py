"""Gate-trace capture and heatmap rendering.

A trace pairs each input token with the gate value that admitted it. Word
gates become a yellow highlight whose alpha is the gate value itself; when
the trace is grouped into facts, each fact's text opacity is its fact gate.
Output is a pure function of the trace so rendered files can be diffed.
"""

from __future__ import annotations

import html
from dataclasses import dataclass, field
from typing import Sequence

ANSI_RAMP = (232, 235, 238, 241, 244, 247, 250, 253)  # xterm greys, dark to light


@dataclass(frozen=True)
class GateTrace:
    units: list[tuple[str, float]]
    groups: list[tuple[int, int]] | None = None  # [start, end) unit ranges, one per fact
    group_gates: list[float] | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        for tok, g in self.units:
            if not 0.0 <= g <= 1.0:
                raise ValueError(f"gate value for {tok!r} outside [0, 1]: {g}")
        if (self.groups is None) != (self.group_gates is None):
            raise ValueError("groups and group_gates must be given together")
        if self.groups is not None:
            if len(self.groups) != len(self.group_gates):
                raise ValueError(f"{len(self.groups)} groups but {len(self.group_gates)} fact gates")
            pos = 0
            for start, end in self.groups:
                if start != pos or end < start:
                    raise ValueError("groups must tile the units contiguously")
                pos = end
            if pos != len(self.units):
                raise ValueError("groups must cover every unit")
            for g in self.group_gates:
                if not 0.0 <= g <= 1.0:
                    raise ValueError(f"fact gate outside [0, 1]: {g}")


def trace_from_gates(tokens: Sequence[str], gates: Sequence[float], metadata: dict | None = None) -> GateTrace:
    if len(tokens) != len(gates):
        raise ValueError(f"{len(tokens)} tokens but {len(gates)} gates")
    return GateTrace([(t, _clamp(g)) for t, g in zip(tokens, gates)], metadata=dict(metadata or {}))


def trace_from_facts(
    facts: Sequence[Sequence[str]],
    word_gates: Sequence[Sequence[float]],
    fact_gates: Sequence[float],
    metadata: dict | None = None,
) -> GateTrace:
    units: list[tuple[str, float]] = []
    groups = []
    for words, gates in zip(facts, word_gates, strict=True):
        if len(words) != len(gates):
            raise ValueError("each fact needs one word gate per token")
        start = len(units)
        units.extend((w, _clamp(g)) for w, g in zip(words, gates))
        groups.append((start, len(units)))
    return GateTrace(units, groups, [_clamp(g) for g in fact_gates], dict(metadata or {}))


def _clamp(g: float) -> float:
    # gates come out of a sigmoid; guard against float dust only
    return min(max(float(g), 0.0), 1.0)


def _fmt(g: float) -> str:
    return f"{g:.4f}"


def highlight_alpha(gate: float) -> float:
    """Highlight alpha for a word gate (identity map, rounded for stable output)."""
    return round(_clamp(gate), 4)


def _span(tok: str, g: float) -> str:
    return (
        f'<span class="w" style="background-color:rgba(255,255,0,{highlight_alpha(g):.4f})" '
        f'title="{_fmt(g)}">{html.escape(tok)}</span>'
    )


def _render_html(trace: GateTrace) -> str:
    meta = "".join(
        f"<dt>{html.escape(str(k))}</dt><dd>{html.escape(str(v))}</dd>" for k, v in sorted(trace.metadata.items())
    )
    out = [
        "<!DOCTYPE html>",
        '<html><head><meta charset="utf-8"><title>gate trace</title></head>',
        '<body style="font-family:monospace;line-height:1.8">',
        f"<dl>{meta}</dl>" if meta else "",
    ]
    if trace.groups is None:
        out.append("<p>" + " ".join(_span(t, g) for t, g in trace.units) + "</p>")
    else:
        for (start, end), fg in zip(trace.groups, trace.group_gates):
            words = " ".join(_span(t, g) for t, g in trace.units[start:end])
            out.append(f'<p class="fact" style="opacity:{highlight_alpha(fg):.4f}" title="fact gate {_fmt(fg)}">{words}</p>')
    out.append("</body></html>")
    return "\n".join(line for line in out if line) + "\n"


def _ansi_step(g: float) -> int:
    return min(int(_clamp(g) * len(ANSI_RAMP)), len(ANSI_RAMP) - 1)


def _render_ansi(trace: GateTrace) -> str:
    def word(t: str, g: float) -> str:
        bg = ANSI_RAMP[_ansi_step(g)]
        fg = 16 if _ansi_step(g) >= 4 else 255
        return f"\x1b[48;5;{bg}m\x1b[38;5;{fg}m{t}\x1b[0m[{g:.2f}]"

    if trace.groups is None:
        return " ".join(word(t, g) for t, g in trace.units) + "\n"
    lines = []
    for (start, end), fg in zip(trace.groups, trace.group_gates):
        lines.append(f"({fg:.2f}) " + " ".join(word(t, g) for t, g in trace.units[start:end]))
    return "\n".join(lines) + "\n"


def render_heatmap(trace: GateTrace, format: str = "html") -> str:
    if format == "html":
        return _render_html(trace)
    if format == "ansi":
        return _render_ansi(trace)
    raise ValueError(f"unknown format {format!r}; expected 'html' or 'ansi'")
