import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rewriter_evaluator.bleu import CORPUS, SENTENCE, BleuConfig, corpus_bleu, ngrams, sentence_bleu
from rewriter_evaluator.errors import ContractViolation

from bleu_oracle import oracle_corpus_bleu, oracle_sentence_bleu, random_pair

tokens = st.lists(st.sampled_from(["a", "b", "c", "d"]), max_size=10)


class TestAnalytic:
    def test_exact_match_is_one(self):
        s = "the cat sat on the mat".split()
        assert sentence_bleu(s, s).value == 1.0
        assert corpus_bleu([(s, s)]).value == 1.0

    def test_empty_candidate_is_zero(self):
        assert sentence_bleu([], ["a", "b"]).value == 0.0
        assert corpus_bleu([([], ["a", "b"])]).value == 0.0

    def test_empty_reference_rejected(self):
        with pytest.raises(ContractViolation):
            sentence_bleu(["a"], [])

    def test_empty_corpus_rejected(self):
        with pytest.raises(ContractViolation):
            corpus_bleu([])

    def test_brevity_penalty(self):
        ref = list("abcdefgh")
        s = sentence_bleu(list("abcd"), ref)
        assert s.brevity_penalty == pytest.approx(math.exp(1 - 8 / 4))

    def test_clipping(self):
        s = sentence_bleu(["a", "a", "a"], ["a", "b", "c"], BleuConfig(max_n=1))
        assert s.precisions[0] == pytest.approx(1 / 3)

    def test_hand_computed_smoothed_value(self):
        # unigram 3/4, bigram (1+1)/(3+1), trigram (0+1)/(2+1), 4-gram (0+1)/(1+1); no BP (4 > 3)
        s = sentence_bleu(["a", "b", "x", "c"], ["a", "b", "c"])
        expected = math.exp((math.log(3 / 4) + math.log(2 / 4) + math.log(1 / 3) + math.log(1 / 2)) / 4)
        assert s.value == pytest.approx(expected, abs=1e-15)

    def test_unsmoothed_corpus_zero_without_4gram(self):
        assert corpus_bleu([(["a", "b", "c"], ["a", "b", "c"])]).value == 0.0

    def test_ngrams(self):
        assert ngrams(["a", "b", "a", "b"], 2) == {("a", "b"): 2, ("b", "a"): 1}

    def test_case_insensitive_option(self):
        cfg = BleuConfig(case_sensitive=False)
        assert sentence_bleu(["A", "B"], ["a", "b"], cfg).value == 1.0


class TestOracleEquivalence:
    def test_sentence_level(self):
        rng = np.random.default_rng(0)
        for _ in range(300):
            cand, ref = random_pair(rng)
            assert abs(sentence_bleu(cand, ref).value - oracle_sentence_bleu(cand, ref)) <= 1e-12

    def test_corpus_level(self):
        rng = np.random.default_rng(1)
        for _ in range(30):
            pairs = [random_pair(rng) for _ in range(rng.integers(1, 20))]
            assert abs(corpus_bleu(pairs).value - oracle_corpus_bleu(pairs)) <= 1e-12


class TestProperties:
    @given(tokens, tokens.filter(bool))
    def test_range(self, cand, ref):
        for cfg in (SENTENCE, CORPUS):
            assert 0.0 <= sentence_bleu(cand, ref, cfg).value <= 1.0

    @given(tokens.filter(bool))
    def test_identity_sentence_level(self, ref):
        assert sentence_bleu(ref, ref).value == pytest.approx(1.0)

    @given(st.lists(st.tuples(tokens, tokens.filter(bool)), min_size=1, max_size=5))
    def test_corpus_is_order_invariant(self, pairs):
        assert corpus_bleu(pairs).value == pytest.approx(corpus_bleu(pairs[::-1]).value, abs=1e-15)
