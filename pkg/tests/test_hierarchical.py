import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from occamnet import autodiff as ad
from occamnet import hierarchical as hg
from occamnet.autodiff import RngStream
from occamnet.data import EOS_ID, Story
from occamnet.hierarchical import HgLstm, HgLstmConfig
from occamnet.objectives import BabiLossConfig

V = 12


def small(seed=0, vocab=V, layers=2, **kw) -> HgLstm:
    cfg = HgLstmConfig(vocab, embed_dim=6, fact_hidden=5, question_hidden=4, hl_hidden=4, hl_layers=layers, dec_hidden=4, **kw)
    return HgLstm(cfg, RngStream(seed))


def story(facts, question=(3, 4), answer=(5,), supporting=(0,)):
    return Story([list(f) for f in facts], list(question), list(answer), list(supporting))


def close_gate(gate):
    gate.b.value[...] = -1000.0


# --- structure ------------------------------------------------------------


def test_config_hl_input_width():
    cfg = HgLstmConfig(20)
    assert cfg.hl_input == cfg.embed_dim + cfg.fact_hidden
    assert HgLstmConfig(20, use_question_final=True).hl_input == cfg.embed_dim + cfg.fact_hidden + cfg.question_hidden
    m = small()
    assert m.hl_model.gate.input_size == m.cfg.hl_input


@settings(max_examples=25, deadline=None)
@given(st.lists(st.lists(st.integers(3, V - 1), min_size=1, max_size=12), min_size=1, max_size=10))
def test_story_encoding_shapes(facts):
    enc = hg.encode_story(MODEL, story(facts))
    assert len(enc.fact_gates) == len(facts)
    assert [len(w) for w in enc.word_gates] == [len(f) for f in facts]
    assert all(v.shape == (MODEL.cfg.fact_hidden, 1) for v in enc.fact_vectors)
    assert enc.hl_final.shape == (MODEL.cfg.hl_hidden, 1)
    words, fact_gates = enc.gate_values()
    assert all(0 <= g <= 1 for g in fact_gates + [w for f in words for w in f])


MODEL = small(seed=11)


def test_single_fact_single_token():
    m = small()
    y, gates = hg.encode_fact(m, [7])
    assert y.shape == (5, 1) and len(gates) == 1
    assert len(hg.encode_story(m, story([[7]])).fact_gates) == 1


def test_batch_matches_single_stories():
    m = small(seed=3)
    stories = [story([[3, 4, 5], [6]]), story([[7, 8]], question=(9,)), story([[4], [5, 6, 7], [8, 9]])]
    enc = hg.encode_batch(m, stories)
    for b, s in enumerate(stories):
        one = hg.encode_story(m, s)
        assert np.allclose(enc.hl_final.value[:, [b]], one.hl_final.value, atol=1e-12)
        for t, g in enumerate(one.fact_gates):
            assert enc.fact_gates[t].value[0, b] == pytest.approx(g.item(), abs=1e-12)


def test_errors():
    m = small()
    with pytest.raises(IndexError):
        hg.encode_fact(m, [V])
    with pytest.raises(IndexError):
        hg.encode_story(m, story([[3]], question=(-1,)))
    with pytest.raises(ValueError):
        hg.encode_fact(m, [])
    with pytest.raises(ValueError):
        hg.encode_question(m, [])
    with pytest.raises(ValueError):
        hg.encode_batch(m, [Story([], [3], [4])])
    with pytest.raises(ValueError):
        hg.encode_batch(m, [])
    with pytest.raises(ValueError):
        hg.decode_answer(m, ad.zeros(4, 1), 0)


# --- question average -----------------------------------------------------


def test_question_average_single_and_repeated_word():
    m = small()
    row = m.embeddings.value[7]
    assert np.array_equal(hg.encode_question(m, [7])[1].value.ravel(), row)
    assert np.allclose(hg.question_average(m, [[7, 7]]).value.ravel(), row, atol=1e-15)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, V - 1), min_size=1, max_size=8), st.randoms(use_true_random=False))
def test_question_average_permutation_invariant(words, rnd):
    shuffled = list(words)
    rnd.shuffle(shuffled)
    a = hg.question_average(MODEL, [words]).value
    b = hg.question_average(MODEL, [shuffled]).value
    assert np.array_equal(a, b)
    assert np.allclose(a.ravel(), MODEL.embeddings.value[words].mean(axis=0), atol=1e-14)


# --- gate-closed invariance -----------------------------------------------


def test_closed_word_gates_hide_token_identity():
    m = small(seed=5)
    close_gate(m.fact_model.gate)
    a, _ = hg.encode_fact(m, [3, 4, 5])
    b, _ = hg.encode_fact(m, [9, 10, 11])
    assert np.array_equal(a.value, b.value)


def test_closed_fact_gates_hide_fact_content():
    m = small(seed=6)
    close_gate(m.hl_model.gate)
    a = hg.encode_story(m, story([[3, 4], [5]]))
    b = hg.encode_story(m, story([[9, 10], [11]]))
    assert np.array_equal(a.hl_final.value, b.hl_final.value)
    assert not np.array_equal(a.fact_vectors[0].value, b.fact_vectors[0].value)


def test_open_fact_gates_see_fact_content():
    m = small(seed=6)
    a = hg.encode_story(m, story([[3, 4], [5]]))
    b = hg.encode_story(m, story([[9, 10], [11]]))
    assert not np.allclose(a.hl_final.value, b.hl_final.value)


def test_fact_gate_conditions_on_question():
    m = small(seed=2)
    a = hg.encode_story(m, story([[3, 4]], question=(5,)))
    b = hg.encode_story(m, story([[3, 4]], question=(9,)))
    assert a.fact_gates[0].item() != b.fact_gates[0].item()


def test_determinism_bit_identical():
    s = story([[3, 4, 5], [6, 7], [8]])
    a = hg.encode_story(small(seed=9), s)
    b = hg.encode_story(small(seed=9), s)
    assert np.array_equal(a.hl_final.value, b.hl_final.value)
    assert a.gate_values() == b.gate_values()


# --- decoder --------------------------------------------------------------


def test_eos_bias_gives_empty_answer():
    m = small()
    m.out_W.value[...] = 0.0
    m.out_b.value[...] = 0.0
    m.out_b.value[EOS_ID] = 10.0
    out = hg.decode_answer(m, ad.constant(np.ones((4, 1))), 5)
    assert out.tokens == [] and len(out.scores) == 1 and not out.truncated


def test_ties_go_to_lowest_id_and_truncate():
    m = small()
    m.out_W.value[...] = 0.0
    m.out_b.value[...] = 0.0
    m.out_b.value[[4, 7]] = 3.0
    out = hg.decode_answer(m, ad.constant(np.ones((4, 1))), 3)
    assert out.tokens == [4, 4, 4] and out.truncated and len(out.scores) == 3


def test_teacher_forcing_diverges_after_mismatch():
    m = small(seed=4)
    h = ad.constant(RngStream(1).uniform(-1, 1, (4, 1)))
    free = hg.decode_answer(m, h, 2)
    first = int(np.argmax(free.scores[0].value))
    other = (first + 3) % V
    forced = hg.teacher_forced_scores(m, h, [[other, 5]])
    # step one sees the same zero input; step two sees a different token
    assert np.array_equal(forced[0].value, free.scores[0].value)
    agree = hg.teacher_forced_scores(m, h, [[first, 5]])
    assert np.array_equal(agree[1].value, free.scores[1].value)
    assert not np.allclose(forced[1].value, free.scores[1].value)


def test_batch_decoding_matches_single():
    m = small(seed=8)
    h = RngStream(2).uniform(-1, 1, (4, 3))
    batch = hg.decode_batch(m, ad.constant(h), 4)
    for b in range(3):
        one = hg.decode_answer(m, ad.constant(h[:, [b]]), 4)
        assert one.tokens == batch[b].tokens


# --- gradients ------------------------------------------------------------


def test_encode_fact_grad_check():
    m = small(seed=1)
    f = lambda: ad.sum_all(ad.square(hg.encode_fact(m, [3, 5, 3])[0]))  # noqa: E731
    assert ad.grad_check(f, [m.embeddings, *m.fact_model.params.named().values()], tol=1e-4).passed


def test_whole_model_grad_check():
    m = HgLstm(HgLstmConfig(8, embed_dim=4, fact_hidden=3, question_hidden=3, hl_hidden=3, hl_layers=2, dec_hidden=3), RngStream(7))
    s = Story([[3, 4, 5], [6, 7]], [3, 6], [7], [1])
    cfg = BabiLossConfig(margin=1.0, mu_unsupporting=0.5, lambda_fact=1.0, lambda_word=0.1)
    f = lambda: hg.story_loss(m, [s], cfg)[0]  # noqa: E731
    report = ad.grad_check(f, list(m.named().values()), tol=1e-4)
    assert report.passed, report.summary()


def test_story_loss_parts():
    m = small(seed=3)
    s = story([[3, 4], [5, 6, 7]], supporting=(1,))
    total, parts, _ = hg.story_loss(m, [s], BabiLossConfig(lambda_fact=0.5, lambda_word=0.2))
    want = parts["e_prediction"] + 0.5 * parts["e_fact"] + 0.2 * parts["e_word"]
    assert total.item() == pytest.approx(want, rel=1e-12)
    assert set(parts) == {"e_prediction", "e_fact", "e_word"}
