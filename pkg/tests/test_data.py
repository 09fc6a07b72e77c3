from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from occamnet.data import (
    EOS_ID,
    PAD_ID,
    UNK_ID,
    ParseError,
    Story,
    Vocabulary,
    build_vocab,
    gen_needle_task,
    gen_single_fact_babi,
    is_needle,
    needle_vocab,
    pad_batch,
    parse_babi,
    parse_labeled_sequences,
    parse_paraphrase_pairs,
    serialize_babi,
    serialize_labeled_sequences,
    split_validation,
    tokenize,
)

FIXTURES = Path(__file__).parent / "fixtures"

# the daniel/garden box, laid out as a bAbI block
BOXED = (
    "1 Daniel and Sandra journeyed to the office.\n"
    "2 Then they went to the garden.\n"
    "3 Sandra and John travelled to the kitchen.\n"
    "4 After that they moved to the hallway.\n"
    "5 Where is Daniel?\tgarden\t1 2\n"
)


# --- bAbI -----------------------------------------------------------------


def test_boxed_example_parses():
    [s] = parse_babi(BOXED)
    assert s.answer == ["garden"]
    assert s.question == ["where", "is", "daniel"]
    assert s.facts[0] == ["daniel", "and", "sandra", "journeyed", "to", "the", "office"]
    assert len(s.facts) == 4 and s.supporting == [0, 1]


def test_two_fact_block():
    [s] = parse_babi("1 Mary moved to the bathroom.\n2 John went to the hallway.\n3 Where is Mary? \tbathroom\t1\n")
    assert len(s.facts) == 2 and s.answer == ["bathroom"] and s.supporting == [0]


def test_two_questions_share_prefix_and_skip_question_lines():
    text = (
        "1 Mary moved to the bathroom.\n"
        "2 John went to the hallway.\n"
        "3 Where is Mary?\tbathroom\t1\n"
        "4 Daniel went back to the hallway.\n"
        "5 Sandra moved to the garden.\n"
        "6 Where is Daniel?\thallway\t4\n"
    )
    a, b = parse_babi(text)
    assert len(a.facts) == 2 and len(b.facts) == 4
    assert b.facts[:2] == a.facts
    # line 4 is the third fact once the question line is skipped
    assert b.supporting == [2]


def test_new_story_resets_facts():
    a, b = parse_babi(BOXED + "1 John went to the office.\n2 Where is John?\toffice\t1\n")
    assert len(b.facts) == 1 and b.answer == ["office"]


def test_multi_token_answer():
    [s] = parse_babi("1 Daniel picked up the apple.\n2 What is Daniel carrying?\tapple,football\t1\n")
    assert s.answer == ["apple", "football"]


@pytest.mark.parametrize(
    "text, line",
    [
        ("1 Mary moved.\nMary moved.\n", 2),
        ("1 Mary moved.\n2 Where is Mary?\tkitchen\t2\n", 2),
        ("1 Mary moved.\n2 Where?\tkitchen\t1\n3 Where?\tkitchen\t2\n", 3),
        ("1 Mary moved.\n2 Where?\tkitchen\tx\n", 2),
        ("1 a.\n2 b.\n\n4 c.\n3 d.\n", 5),
        ("1 a.\n2 Where?\t\t1\n", 2),
    ],
)
def test_parse_errors_carry_line_number(text, line):
    with pytest.raises(ParseError) as err:
        parse_babi(text)
    assert err.value.lineno == line
    assert f"line {line}" in str(err.value)


def test_fixture_round_trip():
    text = (FIXTURES / "babi_mixed.txt").read_text()
    stories = parse_babi(text)
    assert len(stories) == 50
    assert any(b.facts[: len(a.facts)] == a.facts and len(b.facts) > len(a.facts) for a, b in zip(stories, stories[1:]))
    again = parse_babi(serialize_babi(stories))
    assert again == stories
    assert serialize_babi(again) == serialize_babi(stories)


def test_story_invariants():
    with pytest.raises(ValueError):
        Story([["a"]], ["q"], [])
    with pytest.raises(ValueError):
        Story([["a"]], ["q"], ["x"], [1])


def test_synthetic_babi_is_consistent():
    stories = parse_babi(gen_single_fact_babi(3, 40))
    assert len(stories) == 40
    for s in stories:
        [k] = s.supporting
        person = s.question[-1]
        fact = s.facts[k]
        assert fact[0] == person and fact[-1] == s.answer[0]
        # nothing later in the story moves that person again
        assert all(f[0] != person for f in s.facts[k + 1 :])
    assert gen_single_fact_babi(3, 40) == gen_single_fact_babi(3, 40)


# --- vocabulary -----------------------------------------------------------


def test_vocab_min_count():
    v = build_vocab([["a", "a", "b"]], min_count=2)
    assert v.itos == ["<UNK>", "<EOS>", "<PAD>", "a"]
    assert v.encode(["a", "b"]) == [3, UNK_ID]
    assert build_vocab([["a", "a", "b"]], min_count=1).itos[3:] == ["a", "b"]


def test_vocab_order_and_determinism():
    corpus = [["z", "y", "x", "y"], ["x", "w", "z"]]
    v = build_vocab(corpus, min_count=1)
    assert v.itos[3:] == ["x", "y", "z", "w"]
    assert build_vocab(corpus, min_count=1) == v
    assert v.decode(v.encode(["w", "x"])) == ["w", "x"]
    with pytest.raises(ValueError):
        build_vocab(corpus, min_count=0)


def test_vocab_specials_fixed():
    v = Vocabulary(["<EOS>", "cat"])
    assert (v.id("<UNK>"), v.id("<EOS>"), v.id("<PAD>")) == (UNK_ID, EOS_ID, PAD_ID) == (0, 1, 2)
    assert v.id("cat") == 3 and v.id("dog") == UNK_ID
    with pytest.raises(ValueError):
        Vocabulary(["a", "a"])


def test_tokenize():
    assert tokenize("Where is Daniel?  It's HERE.") == ["where", "is", "daniel", "it's", "here"]
    assert tokenize(" ... ") == []


# --- TSV ------------------------------------------------------------------


@pytest.mark.parametrize("score, target", [("5", 1.0), ("1", 0.0), ("3", 0.5), ("4.2", 0.8)])
def test_paraphrase_rescale(score, target):
    [p] = parse_paraphrase_pairs(f"{score}\ta man runs\ta person runs\n")
    assert p.target == pytest.approx(target, abs=1e-15)
    assert p.tokens_a == ["a", "man", "runs"]


def test_paraphrase_fixed_target_and_errors():
    [p] = parse_paraphrase_pairs("2\ta\tb\n", fixed_target=1.0)
    assert p.target == 1.0
    for bad, line in [("0\ta\tb", 1), ("3\ta\tb\n6\ta\tb", 2), ("x\ta\tb", 1), ("3\ta", 1), ("3\t.\tb", 1)]:
        with pytest.raises(ParseError) as err:
            parse_paraphrase_pairs(bad)
        assert err.value.lineno == line


def test_labeled_sequences_and_errors():
    recs = parse_labeled_sequences("4\tA terrific film!\n\n0\tdull\n")
    assert [(r.label, r.tokens) for r in recs] == [(4, ["a", "terrific", "film"]), (0, ["dull"])]
    assert parse_labeled_sequences(serialize_labeled_sequences(recs)) == recs
    for bad in ("5\tfine", "x\tfine", "3 fine", "2\t!"):
        with pytest.raises(ParseError):
            parse_labeled_sequences(bad)


# --- needle task ----------------------------------------------------------


def test_needle_seq_len_one_is_the_needle():
    for ex in gen_needle_task(0, 50, 1, 20):
        assert ex.tokens == [3 + ex.label]


def test_needle_label_recoverable():
    v = needle_vocab(30)
    for ex in gen_needle_task(1, 300, 12, 30):
        needles = [t for t in ex.tokens if is_needle(t)]
        assert len(needles) == 1 and needles[0] - 3 == ex.label
        assert v.itos[needles[0]] == f"needle{ex.label}"
        assert all(0 <= t < 30 for t in ex.tokens)


def test_needle_position_uniform():
    seq_len = 20
    data = gen_needle_task(2, 10_000, seq_len, 50)
    pos = [next(i for i, t in enumerate(ex.tokens) if is_needle(t)) for ex in data]
    counts = np.bincount(pos, minlength=seq_len)
    assert chisquare(counts).pvalue > 0.01


def test_needle_errors_and_determinism():
    with pytest.raises(ValueError):
        gen_needle_task(0, 5, 0, 20)
    with pytest.raises(ValueError):
        gen_needle_task(0, 5, 3, 8)
    assert gen_needle_task(4, 20, 6, 20) == gen_needle_task(4, 20, 6, 20)


# --- batching helpers -----------------------------------------------------


def test_pad_batch():
    ids, masks = pad_batch([[5, 6, 7], [8]])
    assert ids.tolist() == [[5, 8], [6, PAD_ID], [7, PAD_ID]]
    assert [m.tolist() for m in masks] == [[1, 1], [1, 0], [1, 0]]
    with pytest.raises(ValueError):
        pad_batch([[1], []])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(), max_size=40), st.floats(0, 1))
def test_split_validation_partitions(items, frac):
    tr, va = split_validation(items, frac)
    assert tr + va == items
    assert len(va) == int(round(len(items) * frac))
