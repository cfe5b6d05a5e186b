import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bilingual_gan.synth import (
    CipherSpec,
    disjoint_split,
    make_corpus,
    parallelism_score,
    shuffled_baseline,
    swap_pairs,
    token_f1,
)


def test_swap_pairs():
    assert swap_pairs([1, 2, 3, 4, 5]) == [2, 1, 4, 3, 5]
    assert swap_pairs([]) == []
    assert swap_pairs([1]) == [1]


def test_corpus_is_seed_stable_and_oracle_consistent():
    spec = CipherSpec(50, seed=0)
    a = make_corpus(spec, 200, seed=4)
    assert a == make_corpus(spec, 200, seed=4)
    assert a != make_corpus(spec, 200, seed=5)
    for s, t in zip(*a):
        assert spec.oracle_translate(s) == t
        assert spec.min_len <= len(s) <= spec.max_len


def test_bijection():
    spec = CipherSpec(50, seed=1)
    m = spec.word_map()
    assert sorted(m) == spec.words0 and sorted(m.values()) == spec.words1


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 1000), st.integers(0, 1000))
def test_oracle_inverse_roundtrip(spec_seed, seed):
    spec = CipherSpec(30, seed=spec_seed)
    s = spec.sample_sentence(np.random.default_rng(seed))
    t = spec.oracle_translate(s)
    assert spec.oracle_inverse(t) == s
    assert spec.oracle_translate(spec.oracle_inverse(t)) == t


def test_length_range_restricts_templates():
    spec = CipherSpec(50, min_len=3, max_len=4, seed=0)
    l0, _ = make_corpus(spec, 300, seed=0)
    assert {len(s) for s in l0} <= {3, 4}
    with pytest.raises(ValueError):
        CipherSpec(50, min_len=30, max_len=40)


def test_disjoint_split_has_no_translations_across():
    spec = CipherSpec(50, seed=0)
    l0, l1 = make_corpus(spec, 400, seed=0)
    m0, m1 = disjoint_split(l0, l1)
    translated = {tuple(spec.oracle_translate(s)) for s in m0}
    assert not translated & {tuple(s) for s in m1}
    assert len(m0) == 200 and 0 < len(m1) <= 200


def test_token_f1_hand_values():
    assert token_f1(["a", "b"], ["a", "b"]) == 1.0
    assert token_f1(["a"], ["b"]) == 0.0
    # p = 1/2, r = 1/3
    assert token_f1(["a", "x"], ["a", "y", "z"]) == pytest.approx(2 * 0.5 * (1 / 3) / (0.5 + 1 / 3))
    assert token_f1([], []) == 1.0 and token_f1([], ["a"]) == 0.0


def test_parallelism_perfect_unrelated_and_shuffled():
    spec = CipherSpec(50, seed=0)
    l0, l1 = make_corpus(spec, 300, seed=0)
    pairs = list(zip(l0, l1))
    assert parallelism_score(pairs, spec) == 1.0
    unrelated = [(a, ["zz"] * len(b)) for a, b in pairs]
    assert parallelism_score(unrelated, spec) == 0.0
    base = shuffled_baseline(pairs, spec, seed=0)
    assert 0.0 < base < 0.5
    assert parallelism_score([], spec) == 0.0
