from __future__ import annotations

import math
import random
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from agrisynth.metrics.lexical import (
    LengthMismatchError,
    EmptyInputError,
    MetricScore,
    bleu4,
    corpus_aggregate,
    meteor_lite,
    rouge2,
)
from agrisynth.metrics.porter import porter_stem
from agrisynth.metrics.tokens import tokenize
from oracles import brute_bleu4, brute_meteor, brute_mean_pct, brute_rouge2

VOCAB = [
    "rust", "leaf", "leaves", "spot", "spots", "on", "the", "wheat",
    "head", "blight", "mildew", "stem", "growing", "grows", "severe",
    "yellow", "lesions", "infected", "plant", "shows",
]


def seq(words):
    return tokenize(" ".join(words))


def random_tokens(rng, lo=1, hi=12):
    return [rng.choice(VOCAB) for _ in range(rng.randrange(lo, hi + 1))]


token_lists = st.lists(st.sampled_from(VOCAB), min_size=1, max_size=10)


class TestBleu4:
    def test_identity_single_pair(self):
        cand = seq(["yellow", "rust", "on", "wheat", "leaves"])
        assert bleu4([cand], [cand]).value == 1.0

    def test_zero_fourgram_overlap_is_zero(self):
        cand = seq(["rust", "rust", "rust", "rust", "rust"])
        ref = seq(["wheat", "rust", "wheat", "rust", "wheat"])
        score = bleu4([cand], [ref])
        assert score.value == 0.0
        assert score.components["p4"] == 0.0

    def test_length_mismatch_rejected(self):
        cand = seq(["a", "b"])
        with pytest.raises(LengthMismatchError):
            bleu4([cand], [cand, cand])

    def test_empty_corpus_rejected(self):
        with pytest.raises(LengthMismatchError):
            bleu4([], [])

    def test_brevity_penalty_applied_when_short(self):
        cand = seq(["yellow", "rust", "on", "wheat"])
        ref = seq(["yellow", "rust", "on", "wheat", "leaves", "today"])
        score = bleu4([cand], [ref])
        assert score.components["brevity_penalty"] == pytest.approx(math.exp(1 - 6 / 4))
        assert 0 < score.value < 1

    def test_corpus_pooling_differs_from_item_mean(self):
        # One perfect pair plus one disjoint pair: pooled counts keep the
        # corpus score nonzero only if every pooled p_n stays positive.
        good = seq(["rust", "spreads", "on", "wheat", "leaves"])
        bad_c = seq(["mildew", "mildew", "mildew", "mildew"])
        bad_r = seq(["stem", "stem", "stem", "stem"])
        pooled = bleu4([good, bad_c], [good, bad_r])
        assert pooled.value == pytest.approx(
            brute_bleu4(
                [list(good.tokens), list(bad_c.tokens)],
                [list(good.tokens), list(bad_r.tokens)],
            ),
            abs=1e-12,
        )

    def test_matches_brute_force_on_randomized_corpora(self):
        rng = random.Random(99)
        for _ in range(50):
            n_pairs = rng.randrange(1, 8)
            cands = [random_tokens(rng) for _ in range(n_pairs)]
            refs = [random_tokens(rng) for _ in range(n_pairs)]
            got = bleu4([seq(c) for c in cands], [seq(r) for r in refs]).value
            want = brute_bleu4(cands, refs)
            assert abs(got - want) <= 1e-9

    @given(st.lists(st.tuples(token_lists, token_lists), min_size=1, max_size=6))
    def test_value_bounded_and_permutation_stable(self, pairs):
        cands = [seq(c) for c, _ in pairs]
        refs = [seq(r) for _, r in pairs]
        score = bleu4(cands, refs)
        assert 0.0 <= score.value <= 1.0
        order = list(range(len(pairs)))
        random.Random(7).shuffle(order)
        shuffled = bleu4([cands[i] for i in order], [refs[i] for i in order])
        assert shuffled.value == score.value

    @given(token_lists.filter(lambda t: len(t) >= 4))
    def test_self_bleu_is_one(self, tokens):
        cand = seq(tokens)
        assert bleu4([cand], [cand]).value == 1.0


class TestRouge2:
    def test_identical_four_tokens(self):
        cand = seq(["red", "spots", "on", "leaves"])
        assert rouge2(cand, cand).value == 1.0

    def test_hand_enumerated_example(self):
        ref = seq(["red", "spots", "on", "leaves"])
        cand = seq(["spots", "on", "stems"])
        score = rouge2(cand, ref)
        assert score.components["overlap"] == 1
        assert score.components["precision"] == pytest.approx(1 / 2)
        assert score.components["recall"] == pytest.approx(1 / 3)
        assert score.value == pytest.approx(0.4)

    def test_single_token_candidate_is_zero(self):
        assert rouge2(seq(["rust"]), seq(["rust", "on", "wheat"])).value == 0.0

    def test_empty_reference_is_zero(self):
        assert rouge2(seq(["rust", "on"]), tokenize("")).value == 0.0

    def test_repeated_bigrams_clipped(self):
        cand = seq(["on", "on", "on", "on"])
        ref = seq(["on", "on"])
        score = rouge2(cand, ref)
        # candidate has (on,on) x3, reference has it once
        assert score.components["overlap"] == 1
        assert score.value == pytest.approx(brute_rouge2(list(cand.tokens), list(ref.tokens)))

    def test_matches_brute_force_on_randomized_pairs(self):
        rng = random.Random(4242)
        for _ in range(50):
            cand = random_tokens(rng)
            ref = random_tokens(rng)
            got = rouge2(seq(cand), seq(ref)).value
            assert abs(got - brute_rouge2(cand, ref)) <= 1e-9

    @given(token_lists, token_lists)
    def test_bounded(self, cand, ref):
        assert 0.0 <= rouge2(seq(cand), seq(ref)).value <= 1.0

    @given(token_lists.filter(lambda t: len(t) >= 2))
    def test_self_rouge_is_one(self, tokens):
        cand = seq(tokens)
        assert rouge2(cand, cand).value == 1.0


class TestMeteorLite:
    def test_zero_matches(self):
        score = meteor_lite(seq(["mildew"]), seq(["wheat"]))
        assert score.value == 0.0
        assert score.components["matches"] == 0

    def test_identical_five_tokens(self):
        cand = seq(["rust", "spreads", "across", "wheat", "leaves"])
        score = meteor_lite(cand, cand)
        assert score.components["fmean"] == 1.0
        assert score.components["chunks"] == 1
        assert score.components["penalty"] == pytest.approx(0.004)
        assert score.value == pytest.approx(0.996)

    def test_self_meteor_closed_form(self):
        for words in (["rust"], ["a", "b"], ["a", "b", "c", "d", "e", "f", "g"]):
            cand = seq(words)
            m = len(words)
            assert meteor_lite(cand, cand).value == pytest.approx(1 - 0.5 * (1 / m) ** 3)

    def test_stem_match_counts(self):
        score = meteor_lite(seq(["growing"]), seq(["grows"]))
        assert score.components["matches"] == 1
        assert score.value > 0

    def test_exact_pass_runs_before_stem_pass(self):
        # "growing" must pair with the literal "growing", leaving "grows"
        # for the stem stage; a single interleaved pass would misalign.
        cand = seq(["growing", "grows"])
        ref = seq(["grows", "growing"])
        score = meteor_lite(cand, ref)
        assert score.components["matches"] == 2
        assert score.components["chunks"] == 2

    def test_word_order_penalized(self):
        ref = seq(["yellow", "rust", "on", "wheat", "leaves"])
        reordered = seq(["leaves", "wheat", "on", "rust", "yellow"])
        straight = meteor_lite(ref, ref)
        shuffled = meteor_lite(reordered, ref)
        assert shuffled.components["matches"] == 5
        assert shuffled.value < straight.value

    def test_matches_brute_force_on_randomized_pairs(self):
        rng = random.Random(31337)
        for _ in range(50):
            cand = random_tokens(rng)
            ref = random_tokens(rng)
            got = meteor_lite(seq(cand), seq(ref)).value
            want = brute_meteor(cand, ref, porter_stem)
            assert abs(got - want) <= 1e-9

    @given(token_lists, token_lists)
    def test_bounded(self, cand, ref):
        value = meteor_lite(seq(cand), seq(ref)).value
        assert 0.0 <= value <= 1.0


class TestCorpusAggregate:
    def test_single_item(self):
        assert corpus_aggregate([MetricScore("bleu4", 0.4934)]) == {"bleu4": 49.34}

    def test_mean_of_zero_and_one(self):
        scores = [MetricScore("rouge2", 0.0), MetricScore("rouge2", 1.0)]
        assert corpus_aggregate(scores) == {"rouge2": 50.0}

    def test_half_even_rounding(self):
        # 0.123 + 0.124 -> mean 0.1235 -> 12.35; midpoint 12.345 rounds to even
        scores = [MetricScore("m", 0.12345)]
        assert corpus_aggregate(scores) == {"m": 12.34}
        assert corpus_aggregate([MetricScore("m", 0.12355)]) == {"m": 12.36}

    def test_groups_by_metric_name(self):
        scores = [
            MetricScore("bleu4", 0.5),
            MetricScore("rouge2", 0.25),
            MetricScore("bleu4", 1.0),
        ]
        assert corpus_aggregate(scores) == {"bleu4": 75.0, "rouge2": 25.0}

    def test_empty_rejected(self):
        with pytest.raises(EmptyInputError):
            corpus_aggregate([])

    def test_matches_exact_rational_oracle(self):
        rng = random.Random(2024)
        for _ in range(20):
            values = [round(rng.random(), 6) for _ in range(7)]
            got = corpus_aggregate([MetricScore("m", v) for v in values])["m"]
            assert Fraction(repr(got)) == brute_mean_pct(values)

    @given(st.lists(st.floats(min_value=0, max_value=1, allow_nan=False), min_size=1, max_size=9))
    def test_bounded_and_permutation_stable(self, values):
        scores = [MetricScore("m", v) for v in values]
        result = corpus_aggregate(scores)["m"]
        assert 0.0 <= result <= 100.0
        order = list(range(len(values)))
        random.Random(1).shuffle(order)
        assert corpus_aggregate([scores[i] for i in order])["m"] == result
