import math
import random

import pytest

from lenmt.evaluate import (
    COMPARISON_COLUMNS,
    EvalError,
    bleu_star,
    compare_runs,
    corpus_bleu,
    length_stats,
)


def oracle_bleu(hyps, refs):
    """Brute-force BLEU oracle: explicit O(n^2) substring match counting,
    no Counter machinery, per-sentence clipping by direct scanning."""
    matches = [0, 0, 0, 0]
    totals = [0, 0, 0, 0]
    c = r = 0
    for hyp_line, ref_line in zip(hyps, refs):
        hyp = hyp_line.split()
        ref = ref_line.split()
        c += len(hyp)
        r += len(ref)
        for n in (1, 2, 3, 4):
            hyp_grams = [tuple(hyp[i:i + n]) for i in range(len(hyp) - n + 1)]
            ref_grams = [tuple(ref[i:i + n]) for i in range(len(ref) - n + 1)]
            totals[n - 1] += len(hyp_grams)
            for gram in set(hyp_grams):
                hyp_count = sum(1 for g in hyp_grams if g == gram)
                ref_count = sum(1 for g in ref_grams if g == gram)
                matches[n - 1] += min(hyp_count, ref_count)
    precisions = [m / t if t else 0.0 for m, t in zip(matches, totals)]
    bp = 1.0 if c > r else (math.exp(1 - r / c) if c else 0.0)
    if any(p == 0 for p in precisions):
        return 0.0, bp, precisions
    geo = math.exp(sum(math.log(p) for p in precisions) / 4)
    return bp * geo * 100.0, bp, precisions


class TestCorpusBleu:
    def test_identity_is_100(self):
        report = corpus_bleu(["a b c d e"], ["a b c d e"])
        assert report.bleu == pytest.approx(100.0)
        assert report.brevity_penalty == 1.0
        assert report.bleu_star == pytest.approx(100.0)

    def test_longer_hypothesis_worked_example(self):
        # p = (4/5, 3/4, 2/3, 1/2), BP = 1 -> 100 * 0.2^(1/4)
        report = corpus_bleu(["a b c d e"], ["a b c d"])
        assert report.precisions == pytest.approx((4 / 5, 3 / 4, 2 / 3, 1 / 2))
        assert report.brevity_penalty == 1.0
        assert report.bleu == pytest.approx(66.87, abs=0.01)

    def test_shorter_hypothesis_brevity_penalty(self):
        # all precisions 1, BP = exp(-1/4)
        report = corpus_bleu(["a b c d"], ["a b c d e"])
        assert report.precisions == pytest.approx((1.0, 1.0, 1.0, 1.0))
        assert report.brevity_penalty == pytest.approx(math.exp(-0.25), abs=1e-9)
        assert report.bleu == pytest.approx(77.88, abs=0.01)
        assert report.bleu_star == pytest.approx(100.0, abs=1e-9)

    def test_zero_precision_zeroes_bleu_but_reports_precisions(self):
        report = corpus_bleu(["a b"], ["c d"])
        assert report.bleu == 0.0
        assert report.bleu_star == 0.0
        assert report.precisions[0] == 0.0

    def test_length_mismatch_rejected(self):
        with pytest.raises(EvalError):
            corpus_bleu(["a"], ["a", "b"])
        with pytest.raises(EvalError):
            corpus_bleu([], [])

    def test_matches_brute_force_on_random_corpora(self):
        rng = random.Random(99)
        vocab = [chr(ord("a") + i) for i in range(10)]
        for _ in range(200):
            n = rng.randint(1, 5)
            hyps, refs = [], []
            for _ in range(n):
                hyps.append(" ".join(rng.choice(vocab) for _ in range(rng.randint(1, 12))))
                refs.append(" ".join(rng.choice(vocab) for _ in range(rng.randint(1, 12))))
            report = corpus_bleu(hyps, refs)
            want_bleu, want_bp, want_p = oracle_bleu(hyps, refs)
            assert report.bleu == pytest.approx(want_bleu, abs=1e-9)
            assert report.brevity_penalty == pytest.approx(want_bp, abs=1e-12)
            assert report.precisions == pytest.approx(want_p, abs=1e-12)

    def test_shuffle_invariance(self):
        rng = random.Random(5)
        hyps = ["a b c", "d e", "f g h a", "b b b"]
        refs = ["a b d", "d e", "f h a", "b b"]
        base = corpus_bleu(hyps, refs)
        order = list(range(len(hyps)))
        rng.shuffle(order)
        shuffled = corpus_bleu([hyps[i] for i in order], [refs[i] for i in order])
        assert shuffled.bleu == pytest.approx(base.bleu, abs=1e-12)

    def test_bleu_star_never_below_bleu(self):
        rng = random.Random(17)
        vocab = ["x", "y", "z", "w"]
        for _ in range(50):
            hyps = [" ".join(rng.choice(vocab) for _ in range(rng.randint(1, 8)))]
            refs = [" ".join(rng.choice(vocab) for _ in range(rng.randint(1, 8)))]
            report = corpus_bleu(hyps, refs)
            assert report.bleu_star >= report.bleu - 1e-12
            if report.hyp_tokens >= report.ref_tokens:
                assert report.bleu_star == pytest.approx(report.bleu, abs=1e-12)

    def test_token_level_not_character_level(self):
        # identical token sequences with different character lengths
        a = corpus_bleu(["a b c d"], ["a b c d"])
        b = corpus_bleu(["aaa bbb ccc ddd"], ["aaa bbb ccc ddd"])
        assert a.bleu == b.bleu == pytest.approx(100.0)

    def test_short_sentences_lack_high_order_ngrams(self):
        # a 2-token corpus has no 3/4-grams: precision 0 zeroes BLEU
        report = corpus_bleu(["aa bb"], ["aa bb"])
        assert report.precisions[:2] == (1.0, 1.0)
        assert report.bleu == 0.0


class TestBleuStar:
    def test_equals_bleu_over_bp(self):
        report = corpus_bleu(["a b c d"], ["a b c d e"])
        assert bleu_star(report) == pytest.approx(report.bleu / report.brevity_penalty)

    def test_zero_bleu(self):
        report = corpus_bleu(["q"], ["z"])
        assert bleu_star(report) == 0.0


class TestLengthStats:
    def test_outputs_equal_sources(self):
        outs = ["abc de", "xyz"]
        stats = length_stats(outs, outs, ["zz zz", "yy"])
        assert stats.lr_src == pytest.approx(1.0)
        assert stats.lr_src_std == pytest.approx(0.0)

    def test_two_ratio_example(self):
        # ratios 0.9 and 1.1 -> mean 1.0, population std 0.1
        sources = ["a" * 10, "a" * 10]
        outputs = ["a" * 9, "a" * 11]
        stats = length_stats(outputs, sources, sources)
        assert stats.lr_src == pytest.approx(1.0)
        assert stats.lr_src_std == pytest.approx(0.1)

    def test_outputs_equal_references(self):
        refs = ["one two", "three"]
        stats = length_stats(refs, ["src a", "src b"], refs)
        assert stats.lr_ref == pytest.approx(1.0)

    def test_zero_length_excluded_and_counted(self):
        stats = length_stats(["abc", "def"], ["abc", ""], ["abc", "ref"])
        assert stats.n_sentences == 1
        assert stats.excluded == 1

    def test_character_level_not_token_level(self):
        # same tokens, different characters: ratios must differ
        a = length_stats(["aa bb"], ["aa bb"], ["aa bb"])
        b = length_stats(["aaaa bb"], ["aa bb"], ["aa bb"])
        assert a.lr_src == pytest.approx(1.0)
        assert b.lr_src == pytest.approx(7 / 5)

    def test_shuffle_invariance_of_means(self):
        outs = ["ab", "abcd", "a"]
        srcs = ["abc", "ab", "aa"]
        refs = ["ab", "abc", "aaa"]
        base = length_stats(outs, srcs, refs)
        perm = [2, 0, 1]
        shuf = length_stats([outs[i] for i in perm], [srcs[i] for i in perm],
                            [refs[i] for i in perm])
        assert shuf.lr_src == pytest.approx(base.lr_src)
        assert shuf.lr_ref == pytest.approx(base.lr_ref)
        assert shuf.lr_src_std == pytest.approx(base.lr_src_std)

    def test_alignment_required(self):
        with pytest.raises(EvalError):
            length_stats(["a"], ["a", "b"], ["a"])


class TestCompareRuns:
    def run(self, label):
        report = corpus_bleu(["a b c"], ["a b c"])
        stats = length_stats(["abc"], ["abc"], ["abc"])
        return (label, report, stats)

    def test_single_run_single_row(self):
        rows = compare_runs([self.run("baseline")])
        assert len(rows) == 1
        assert rows[0]["label"] == "baseline"

    def test_rows_preserve_order(self):
        rows = compare_runs([self.run("b"), self.run("a"), self.run("c")])
        assert [r["label"] for r in rows] == ["b", "a", "c"]

    def test_column_schema(self):
        rows = compare_runs([self.run("x")])
        assert tuple(rows[0].keys()) == COMPARISON_COLUMNS

    def test_empty_rejected(self):
        with pytest.raises(EvalError):
            compare_runs([])
