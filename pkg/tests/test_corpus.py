import numpy as np
import pytest

from lenmt.corpus import (
    Batch,
    CorpusError,
    EncodedPair,
    LengthClass,
    SentencePair,
    SynthSpec,
    Thresholds,
    bucket_stats,
    classify,
    generate_synthetic,
    inject_token,
    make_batches,
    make_pair,
    read_parallel,
    read_tsv,
    strip_length_token,
    suggest_thresholds,
    write_tsv,
)

PAD, BOS, EOS = 0, 1, 2


class TestClassify:
    def test_ratio_one_is_short(self):
        # short bucket upper boundary is inclusive: [0, 1]
        assert classify(1.0) is LengthClass.SHORT

    def test_ratio_at_t_max_is_normal(self):
        # normal bucket is (1, 1.2]
        assert classify(1.2) is LengthClass.NORMAL

    def test_just_above_t_max_is_long(self):
        assert classify(1.2000001) is LengthClass.LONG

    def test_partition(self):
        th = Thresholds()
        for ratio in np.linspace(0.01, 3.0, 211):
            assert classify(float(ratio), th) in LengthClass

    def test_nonpositive_rejected(self):
        with pytest.raises(CorpusError):
            classify(0.0)

    def test_threshold_validation(self):
        with pytest.raises(CorpusError):
            Thresholds(t_min=1.5, t_max=1.0)
        with pytest.raises(CorpusError):
            Thresholds(t_min=0.0, t_max=1.0)

    def test_token_forms(self):
        assert LengthClass.SHORT.token == "<short>"
        assert LengthClass.NORMAL.token == "<normal>"
        assert LengthClass.LONG.token == "<long>"


class TestInjectToken:
    def test_prepends_class_token(self):
        pair = make_pair("hello", "hell")
        assert pair.length_class is LengthClass.SHORT
        injected = inject_token(pair)
        assert injected.src == "<short> hello"
        assert injected.tgt == pair.tgt

    def test_long_token(self):
        pair = make_pair("a", "abcd")
        assert inject_token(pair).src == "<long> a"

    def test_src_chars_unchanged(self):
        pair = make_pair("hello", "hi")
        assert inject_token(pair).src_chars == pair.src_chars == 5

    def test_double_injection_rejected(self):
        pair = inject_token(make_pair("hello", "hi"))
        with pytest.raises(CorpusError, match="double injection"):
            inject_token(pair)

    def test_strip_round_trip(self):
        pair = inject_token(make_pair("hello there", "hi"))
        raw, cls = strip_length_token(pair.src)
        assert raw == "hello there"
        assert cls is LengthClass.SHORT


class TestMakePair:
    def test_fields_consistent(self):
        pair = make_pair("ab cd", "abc def g")
        assert pair.src_chars == 5
        assert pair.tgt_chars == 9
        assert pair.ratio == pytest.approx(9 / 5)
        assert pair.length_class is LengthClass.LONG

    def test_empty_source_rejected(self):
        with pytest.raises(CorpusError, match="empty source"):
            make_pair("   ", "x")

    def test_empty_target_is_short(self):
        assert make_pair("abc", "").length_class is LengthClass.SHORT


class TestBucketStats:
    def test_empty(self):
        counts = bucket_stats([])
        assert (counts.short, counts.normal, counts.long) == (0, 0, 0)

    def test_one_per_bucket(self):
        pairs = [
            make_pair("aaaaaaaaaa", "aaaaa"),        # ratio 0.5
            make_pair("aaaaaaaaaa", "aaaaaaaaaaa"),  # ratio 1.1
            make_pair("aaaaaaaaaa", "a" * 15),       # ratio 1.5
        ]
        counts = bucket_stats(pairs)
        assert (counts.short, counts.normal, counts.long) == (1, 1, 1)
        assert counts.total == 3

    def test_counts_sum_to_corpus_size(self):
        corpus = generate_synthetic(SynthSpec(n_pairs=1000, seed=7))
        assert bucket_stats(corpus).total == 1000

    def test_record_is_single_line_json(self):
        record = bucket_stats([]).as_record()
        assert "\n" not in record
        assert '"total": 0' in record


class TestGenerateSynthetic:
    def test_deterministic(self):
        spec = SynthSpec(n_pairs=200, seed=11)
        a = generate_synthetic(spec)
        b = generate_synthetic(spec)
        assert a == b

    def test_seed_changes_corpus(self):
        a = generate_synthetic(SynthSpec(n_pairs=50, seed=1))
        b = generate_synthetic(SynthSpec(n_pairs=50, seed=2))
        assert a != b

    def test_spans_all_classes(self):
        counts = bucket_stats(generate_synthetic(SynthSpec(n_pairs=600, seed=3)))
        assert counts.short > 0 and counts.normal > 0 and counts.long > 0

    def test_verbose_longer_than_terse(self):
        # All-terse vs all-verbose corpora force the ratio ordering.
        terse = generate_synthetic(
            SynthSpec(n_pairs=150, seed=5, style_mix=(1.0, 0.0, 0.0))
        )
        verbose = generate_synthetic(
            SynthSpec(n_pairs=150, seed=5, style_mix=(0.0, 0.0, 1.0))
        )
        assert np.mean([p.ratio for p in verbose]) > np.mean([p.ratio for p in terse])

    def test_all_terse_equal_lengths_all_short(self):
        # Short forms the same length as source forms: every ratio is
        # exactly 1, which lands in the short bucket (ratio <= 1).
        spec = SynthSpec(
            n_pairs=80, seed=9, src_len=(4, 4), short_len=(4, 4),
            long_len=(8, 8), style_mix=(1.0, 0.0, 0.0),
        )
        corpus = generate_synthetic(spec)
        assert all(p.ratio == pytest.approx(1.0) for p in corpus)
        assert all(p.length_class is LengthClass.SHORT for p in corpus)

    def test_same_source_multiple_target_lengths(self):
        corpus = generate_synthetic(SynthSpec(n_pairs=300, seed=13))
        lengths_by_src = {}
        for p in corpus:
            lengths_by_src.setdefault(p.src, set()).add(p.tgt_chars)
        assert any(len(v) > 1 for v in lengths_by_src.values())

    def test_infeasible_spec_rejected(self):
        with pytest.raises(CorpusError):
            SynthSpec(lexicon_size=0)
        with pytest.raises(CorpusError):
            SynthSpec(style_mix=(0.5, 0.5, 0.5))
        with pytest.raises(CorpusError):
            SynthSpec(short_len=(5, 6), long_len=(2, 5))


class TestSuggestThresholds:
    def test_tertiles(self):
        ratios = [0.5, 0.9, 1.0, 1.1, 1.2, 1.6]
        th = suggest_thresholds(ratios)
        assert 0 < th.t_min <= th.t_max

    def test_empty_rejected(self):
        with pytest.raises(CorpusError):
            suggest_thresholds([])


class TestCorpusFiles:
    def test_tsv_round_trip(self, tmp_path):
        corpus = generate_synthetic(SynthSpec(n_pairs=20, seed=4))
        path = tmp_path / "corpus.tsv"
        write_tsv(corpus, path)
        loaded, stripped = read_tsv(path)
        assert stripped == 0
        assert loaded == corpus

    def test_tsv_strips_injected_tokens(self, tmp_path):
        corpus = [inject_token(make_pair("hello", "hi"))]
        path = tmp_path / "corpus.tsv"
        write_tsv(corpus, path)
        loaded, stripped = read_tsv(path)
        assert stripped == 1
        assert loaded[0].src == "hello"
        assert loaded[0].src_chars == 5

    def test_parallel_files(self, tmp_path):
        (tmp_path / "a.src").write_text("hello\nbye bye\n")
        (tmp_path / "a.tgt").write_text("hi\nciao ciao ciao\n")
        pairs, stripped = read_parallel(tmp_path / "a.src", tmp_path / "a.tgt")
        assert stripped == 0
        assert [p.length_class for p in pairs] == [LengthClass.SHORT, LengthClass.LONG]

    def test_parallel_length_mismatch(self, tmp_path):
        (tmp_path / "a.src").write_text("one\ntwo\n")
        (tmp_path / "a.tgt").write_text("uno\n")
        with pytest.raises(CorpusError, match="mismatch"):
            read_parallel(tmp_path / "a.src", tmp_path / "a.tgt")

    def test_bad_tsv_columns(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("no tabs here\n")
        with pytest.raises(CorpusError, match="columns"):
            read_tsv(path)


def toy_encoded(index, n_src, n_tgt):
    return EncodedPair(
        index=index,
        src_ids=tuple(range(10, 10 + n_src)),
        tgt_ids=tuple(range(20, 20 + n_tgt)),
        tgt_char_lens=tuple([2] * n_tgt),
        tgt_total_chars=2 * n_tgt,
        src_chars=n_src * 3,
    )


class TestMakeBatches:
    def test_single_pair_huge_budget(self):
        batches = make_batches([toy_encoded(0, 3, 4)], 10000, PAD, BOS, EOS)
        assert len(batches) == 1
        assert batches[0].size == 1

    def test_budget_below_longest_pair(self):
        with pytest.raises(CorpusError, match="pair 0"):
            make_batches([toy_encoded(0, 5, 5)], 9, PAD, BOS, EOS)

    def test_partition_no_duplicates(self):
        rng = np.random.default_rng(2)
        encoded = [
            toy_encoded(i, int(rng.integers(1, 8)), int(rng.integers(1, 8)))
            for i in range(100)
        ]
        batches = make_batches(encoded, 40, PAD, BOS, EOS)
        seen = [i for b in batches for i in b.indices]
        assert sorted(seen) == list(range(100))
        assert len(seen) == len(set(seen))
        for b in batches:
            total = int(b.src_mask.sum()) + int(b.tgt_mask.sum()) - b.size
            assert total <= 40  # tgt_mask counts the extra EOS slot per pair

    def test_collate_shapes_and_cursor(self):
        pair = EncodedPair(
            index=0, src_ids=(5, 6), tgt_ids=(7, 8, 9),
            tgt_char_lens=(3, 2, 4), tgt_total_chars=9, src_chars=6,
        )
        batch = make_batches([pair], 100, PAD, BOS, EOS)[0]
        assert batch.tgt_in.tolist() == [[BOS, 7, 8, 9]]
        assert batch.tgt_out.tolist() == [[7, 8, 9, EOS]]
        # cursor: chars before the token predicted at each slot
        assert batch.cursor_pos.tolist() == [[0, 3, 5, 9]]
        assert batch.tgt_lens.tolist() == [9]
        assert batch.tgt_mask.all()


def test_sentence_pair_is_frozen():
    pair = make_pair("ab", "cd")
    with pytest.raises(AttributeError):
        pair.src = "changed"
