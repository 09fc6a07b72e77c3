"""Corpus parsing, vocabularies and synthetic task generators."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .autodiff import RngStream

UNK, EOS, PAD = "<UNK>", "<EOS>", "<PAD>"
SPECIALS = (UNK, EOS, PAD)
UNK_ID, EOS_ID, PAD_ID = 0, 1, 2
NUM_CLASSES = 5

_TRAILING_PUNCT = re.compile(r"[.?!,;:]+$")


class ParseError(ValueError):
    """A malformed input line; the message carries its 1-based line number."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace and strip trailing punctuation from each token."""
    out = []
    for raw in text.lower().split():
        tok = _TRAILING_PUNCT.sub("", raw)
        if tok:
            out.append(tok)
    return out


class Vocabulary:
    """Token <-> id map with ``<UNK>``, ``<EOS>``, ``<PAD>`` fixed at ids 0, 1, 2."""

    def __init__(self, tokens: Sequence[str] = (), min_count: int = 1):
        self.min_count = min_count
        self.itos: list[str] = list(SPECIALS)
        for tok in tokens:
            if tok in SPECIALS:
                continue
            self.itos.append(tok)
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.itos == other.itos

    def id(self, token: str) -> int:
        return self.stoi.get(token, UNK_ID)

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.stoi.get(t, UNK_ID) for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.itos[i] for i in ids]

    def encode_story(self, story: "Story") -> "Story":
        return Story(
            facts=[self.encode(f) for f in story.facts],
            question=self.encode(story.question),
            answer=self.encode(story.answer),
            supporting=list(story.supporting),
        )


def build_vocab(corpora: Iterable[Iterable[str]], min_count: int = 2) -> Vocabulary:
    """Keep tokens seen at least ``min_count`` times, ordered by descending count then lexicographically."""
    if min_count < 1:
        raise ValueError(f"min_count must be at least 1, got {min_count}")
    counts: Counter[str] = Counter()
    for seq in corpora:
        counts.update(seq)
    kept = sorted((t for t, c in counts.items() if c >= min_count and t not in SPECIALS), key=lambda t: (-counts[t], t))
    return Vocabulary(kept, min_count=min_count)


# ---------------------------------------------------------------------------
# Records
# ---------------------------------------------------------------------------


@dataclass
class Story:
    """Facts, question, answer and supporting-fact indexes.

    Tokens are strings straight out of the parser and ids after
    :meth:`Vocabulary.encode_story`.
    """

    facts: list[list]
    question: list
    answer: list
    supporting: list[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.answer:
            raise ValueError("story answer must be nonempty")
        for i in self.supporting:
            if not 0 <= i < len(self.facts):
                raise ValueError(f"supporting index {i} outside {len(self.facts)} facts")


@dataclass
class LabeledSequence:
    tokens: list
    label: int

    def __post_init__(self):
        if not 0 <= self.label < NUM_CLASSES:
            raise ValueError(f"label {self.label} outside 0..{NUM_CLASSES - 1}")


@dataclass
class ParaphrasePair:
    tokens_a: list
    tokens_b: list
    target: float

    def __post_init__(self):
        if not 0.0 <= self.target <= 1.0:
            raise ValueError(f"paraphrase target {self.target} outside [0, 1]")


# ---------------------------------------------------------------------------
# bAbI
# ---------------------------------------------------------------------------


def parse_babi(text: str) -> list[Story]:
    """Parse the line-numbered bAbI layout into one :class:`Story` per question.

    Fact lines are ``"N sentence"``; question lines are
    ``"N question<TAB>answer<TAB>ids"``. Numbering restarts at 1 for each
    story block. Supporting line ids are remapped to indexes into the fact
    list (question lines do not occupy a fact index). Comma-separated answers
    become multi-token answers.
    """
    stories: list[Story] = []
    facts: list[list[str]] = []
    line_to_fact: dict[int, int] = {}
    question_lines: set[int] = set()
    prev_n = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            continue
        head, sep, rest = line.partition(" ")
        if not sep or not head.isdigit():
            raise ParseError(lineno, f"expected a leading line number, got {line[:40]!r}")
        n = int(head)
        if n <= prev_n or n == 1:
            if n != 1:
                raise ParseError(lineno, f"story must restart at line number 1, got {n}")
            facts, line_to_fact, question_lines = [], {}, set()
        prev_n = n
        if "\t" in rest:
            parts = rest.split("\t")
            if len(parts) < 2:
                raise ParseError(lineno, "question line needs an answer field")
            question = tokenize(parts[0])
            answer = [tok for piece in parts[1].split(",") for tok in tokenize(piece)]
            if not answer:
                raise ParseError(lineno, "empty answer")
            support_field = parts[2].split() if len(parts) > 2 else []
            supporting = []
            for sid in support_field:
                if not sid.isdigit():
                    raise ParseError(lineno, f"supporting id {sid!r} is not an integer")
                k = int(sid)
                if k in question_lines:
                    raise ParseError(lineno, f"supporting id {k} refers to a question line")
                if k not in line_to_fact:
                    raise ParseError(lineno, f"supporting id {k} does not refer to an earlier fact")
                supporting.append(line_to_fact[k])
            stories.append(Story([list(f) for f in facts], question, answer, supporting))
            question_lines.add(n)
        else:
            tokens = tokenize(rest)
            if not tokens:
                raise ParseError(lineno, "empty fact")
            line_to_fact[n] = len(facts)
            facts.append(tokens)
    return stories


def serialize_babi(stories: Sequence[Story]) -> str:
    """Write stories back out in bAbI layout.

    Consecutive records whose facts extend the previous record's facts are
    written as one block with several questions, matching how the parser
    emits them.
    """
    lines: list[str] = []
    block_facts: list[list[str]] | None = None
    fact_line: list[int] = []
    n = 0
    for story in stories:
        facts = [list(f) for f in story.facts]
        continuing = block_facts is not None and facts[: len(block_facts)] == block_facts
        if not continuing:
            block_facts, fact_line, n = [], [], 0
        for fact in facts[len(block_facts) :]:
            n += 1
            lines.append(f"{n} {' '.join(fact)}")
            fact_line.append(n)
            block_facts.append(fact)
        n += 1
        support = " ".join(str(fact_line[i]) for i in story.supporting)
        lines.append(f"{n} {' '.join(story.question)}\t{','.join(story.answer)}\t{support}")
    return "\n".join(lines) + ("\n" if lines else "")


# ---------------------------------------------------------------------------
# TSV corpora
# ---------------------------------------------------------------------------


def parse_labeled_sequences(text: str) -> list[LabeledSequence]:
    """``label<TAB>token token ...`` per line, label in 0..4."""
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        label_s, sep, body = line.partition("\t")
        if not sep:
            raise ParseError(lineno, "expected 'label<TAB>tokens'")
        try:
            label = int(label_s)
        except ValueError:
            raise ParseError(lineno, f"label {label_s!r} is not an integer") from None
        if not 0 <= label < NUM_CLASSES:
            raise ParseError(lineno, f"label {label} outside 0..{NUM_CLASSES - 1}")
        tokens = tokenize(body)
        if not tokens:
            raise ParseError(lineno, "empty token sequence")
        out.append(LabeledSequence(tokens, label))
    return out


def parse_paraphrase_pairs(text: str, fixed_target: float | None = None) -> list[ParaphrasePair]:
    """``score<TAB>sentence_a<TAB>sentence_b`` per line with score in [1, 5].

    Scores map linearly onto ``t = (score - 1) / 4``. ``fixed_target`` replaces
    every target (auxiliary corpora of known paraphrases use 1.0).
    """
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ParseError(lineno, "expected 'score<TAB>sentence_a<TAB>sentence_b'")
        try:
            score = float(parts[0])
        except ValueError:
            raise ParseError(lineno, f"score {parts[0]!r} is not a number") from None
        if not 1.0 <= score <= 5.0:
            raise ParseError(lineno, f"score {score} outside [1, 5]")
        a, b = tokenize(parts[1]), tokenize(parts[2])
        if not a or not b:
            raise ParseError(lineno, "empty sentence")
        target = (score - 1.0) / 4.0 if fixed_target is None else fixed_target
        out.append(ParaphrasePair(a, b, target))
    return out


def serialize_labeled_sequences(records: Sequence[LabeledSequence]) -> str:
    return "".join(f"{r.label}\t{' '.join(map(str, r.tokens))}\n" for r in records)


# ---------------------------------------------------------------------------
# Synthetic tasks
# ---------------------------------------------------------------------------


def needle_vocab(vocab_size: int, num_classes: int = NUM_CLASSES) -> Vocabulary:
    """Vocabulary for :func:`gen_needle_task`: ids 3..3+C-1 are needles, the rest distractors."""
    if vocab_size < len(SPECIALS) + num_classes + 1:
        raise ValueError(f"vocab_size {vocab_size} leaves no room for distractors")
    needles = [f"needle{c}" for c in range(num_classes)]
    distractors = [f"w{k}" for k in range(vocab_size - len(SPECIALS) - num_classes)]
    return Vocabulary(needles + distractors)


def gen_needle_task(
    seed: int,
    n_examples: int,
    seq_len: int,
    vocab_size: int,
    num_classes: int = NUM_CLASSES,
) -> list[LabeledSequence]:
    """Sequences of distractors holding exactly one class-bearing needle token.

    Token ids index :func:`needle_vocab`; needle ``c`` (id ``3 + c``) carries
    label ``c`` and sits at a uniformly random position.
    """
    if seq_len < 1:
        raise ValueError(f"seq_len must be at least 1, got {seq_len}")
    first_distractor = len(SPECIALS) + num_classes
    if vocab_size <= first_distractor:
        raise ValueError(f"vocab_size {vocab_size} leaves no room for distractors")
    rng = RngStream(seed)
    labels = rng.integers(0, num_classes, size=n_examples)
    positions = rng.integers(0, seq_len, size=n_examples)
    fill = rng.integers(first_distractor, vocab_size, size=(n_examples, seq_len))
    out = []
    for k in range(n_examples):
        tokens = [int(t) for t in fill[k]]
        tokens[int(positions[k])] = len(SPECIALS) + int(labels[k])
        out.append(LabeledSequence(tokens, int(labels[k])))
    return out


def is_needle(token_id: int, num_classes: int = NUM_CLASSES) -> bool:
    return len(SPECIALS) <= token_id < len(SPECIALS) + num_classes


_PEOPLE = ("mary", "john", "daniel", "sandra")
_PLACES = ("bathroom", "hallway", "kitchen", "office", "garden", "bedroom")
_MOVES = ("moved to the", "went to the", "went back to the", "journeyed to the", "travelled to the")


def gen_single_fact_babi(seed: int, n_questions: int, questions_per_story: int = 5) -> str:
    """Synthetic stories in the layout of bAbI task 1 ("single supporting fact").

    Each block alternates two movement facts and one ``Where is X?`` question
    about a person already mentioned; the answer is that person's latest
    location and the supporting line is the fact that put them there.
    """
    rng = RngStream(seed)
    lines: list[str] = []
    written = 0
    while written < n_questions:
        where: dict[str, tuple[str, int]] = {}
        n = 0
        for _ in range(questions_per_story):
            if written >= n_questions:
                break
            for _ in range(2):
                n += 1
                person = _PEOPLE[rng.integers(0, len(_PEOPLE))]
                place = _PLACES[rng.integers(0, len(_PLACES))]
                move = _MOVES[rng.integers(0, len(_MOVES))]
                name = person.capitalize()
                lines.append(f"{n} {name} {move} {place}.")
                where[person] = (place, n)
            n += 1
            known = sorted(where)
            person = known[rng.integers(0, len(known))]
            place, support = where[person]
            lines.append(f"{n} Where is {person.capitalize()}? \t{place}\t{support}")
            written += 1
    return "\n".join(lines) + "\n"


def split_validation(items: Sequence, fraction: float = 0.2) -> tuple[list, list]:
    """Hold out the trailing ``fraction`` of ``items`` for validation."""
    cut = len(items) - int(round(len(items) * fraction))
    return list(items[:cut]), list(items[cut:])


def pad_batch(seqs: Sequence[Sequence[int]], pad: int = PAD_ID) -> tuple[np.ndarray, list[np.ndarray]]:
    """Right-pad token id lists into a ``(T, B)`` array plus per-step 0/1 masks."""
    if not seqs or any(len(s) == 0 for s in seqs):
        raise ValueError("cannot pad an empty sequence")
    longest = max(len(s) for s in seqs)
    ids = np.full((longest, len(seqs)), pad, dtype=np.intp)
    lengths = np.array([len(s) for s in seqs])
    for j, s in enumerate(seqs):
        ids[: len(s), j] = s
    masks = [(lengths > t).astype(np.float64) for t in range(longest)]
    return ids, masks
