import json
import math

import numpy as np
import pytest

from causetag.corpus import (
    CorpusError,
    classify_explicitness,
    corpus_stats,
    default_lexicon,
    label_spans,
    load_lexicon,
    parse_corpus,
    serialize_corpus,
    split_train_test,
    subsample_by_marker,
)

from conftest import make_corpus, make_sentence, random_tree_sentence


def record(sent_id="a", tokens=("x", "y", "z"), labels=("C", "O", "E"),
           heads=(-1, 0, 1), rels=("root", "dep", "dep"), dataset="d"):
    return {
        "id": sent_id,
        "dataset": dataset,
        "tokens": list(tokens),
        "labels": list(labels),
        "heads": list(heads),
        "rels": list(rels),
    }


def to_bytes(*records):
    return ("\n".join(json.dumps(r) for r in records) + "\n").encode()


class TestParse:
    def test_minimal_record(self):
        corpus = parse_corpus(to_bytes(record()))
        assert len(corpus) == 1
        sent = corpus.sentences[0]
        assert sent.labels == ("C", "O", "E")
        assert [t.head for t in sent.tokens] == [-1, 0, 1]

    def test_label_length_mismatch_names_id(self):
        bad = record(sent_id="bad-len", labels=("C", "O"))
        with pytest.raises(CorpusError, match="bad-len"):
            parse_corpus(to_bytes(bad))

    def test_cycle_error(self):
        bad = record(sent_id="cyc", heads=(1, 2, 0), rels=("dep", "dep", "dep"))
        with pytest.raises(CorpusError, match="cycl"):
            parse_corpus(to_bytes(bad))

    def test_head_out_of_range(self):
        bad = record(heads=(-1, 0, 7))
        with pytest.raises(CorpusError, match="out of range"):
            parse_corpus(to_bytes(bad))

    def test_duplicate_id(self):
        with pytest.raises(CorpusError, match="duplicate"):
            parse_corpus(to_bytes(record(), record()))

    def test_malformed_json_reports_line(self):
        data = to_bytes(record()) + b"{oops\n"
        with pytest.raises(CorpusError, match="line 2"):
            parse_corpus(data)

    def test_unknown_label(self):
        bad = record(labels=("C", "O", "Q"))
        with pytest.raises(CorpusError, match="unknown label"):
            parse_corpus(to_bytes(bad))

    def test_two_roots(self):
        bad = record(heads=(-1, -1, 0))
        with pytest.raises(CorpusError, match="roots"):
            parse_corpus(to_bytes(bad))

    def test_round_trip(self, rng):
        sentences = [
            random_tree_sentence(rng, sent_id=f"r{i}") for i in range(25)
        ]
        sentences[3] = make_sentence(["a", "b"], ["O", "O"], sent_id="flagged",
                                     explicit=True)
        corpus = make_corpus(sentences, name="rand")
        assert parse_corpus(serialize_corpus(corpus)) == corpus


class TestSplit:
    def test_sizes_and_partition(self):
        corpus = make_corpus([make_sentence(["a"], ["O"], sent_id=f"s{i}")
                              for i in range(10)])
        train, test = split_train_test(corpus, 0.7, seed=42)
        assert (len(train), len(test)) == (7, 3)
        train_ids = {s.id for s in train}
        test_ids = {s.id for s in test}
        assert not train_ids & test_ids
        assert train_ids | test_ids == {s.id for s in corpus}

    def test_deterministic(self):
        corpus = make_corpus([make_sentence(["a"], ["O"], sent_id=f"s{i}")
                              for i in range(10)])
        first = split_train_test(corpus, 0.7, seed=5)
        second = split_train_test(corpus, 0.7, seed=5)
        assert first == second

    def test_causaltimebank_scale(self):
        # floor(0.7 * 298) = 208, checked by hand
        corpus = make_corpus([make_sentence(["a"], ["O"], sent_id=f"s{i}")
                              for i in range(298)])
        train, test = split_train_test(corpus, 0.7, seed=0)
        assert (len(train), len(test)) == (208, 90)

    def test_partition_property(self, rng):
        corpus = make_corpus([make_sentence(["a"], ["O"], sent_id=f"s{i}")
                              for i in range(17)])
        for fraction in (0.1, 0.3, 0.5, 0.7, 0.9):
            for seed in (0, 1, 99):
                train, test = split_train_test(corpus, fraction, seed)
                assert len(train) == math.floor(fraction * 17)
                ids = sorted(s.id for s in train) + sorted(s.id for s in test)
                assert sorted(ids) == sorted(s.id for s in corpus)

    def test_too_small(self):
        corpus = make_corpus([make_sentence(["a"], ["O"])])
        with pytest.raises(CorpusError):
            split_train_test(corpus, 0.7, seed=0)


INSOMNIA = ["Insomnia", "is", "often", "caused", "by", "fear", ",", "stress",
            ",", "and", "anxiety", "."]
CLOCK = ["The", "clock", "struck", "twelve", "with", "a", "loud", "chime",
         "that", "made", "me", "jump", "."]


class TestExplicitness:
    def test_marker_sentence_is_explicit(self):
        sent = make_sentence(INSOMNIA, ["O"] * len(INSOMNIA))
        assert classify_explicitness(sent, default_lexicon()) is True

    def test_markerless_sentence_is_implicit(self):
        sent = make_sentence(CLOCK, ["O"] * len(CLOCK))
        assert classify_explicitness(sent, default_lexicon()) is False

    def test_no_overlap_is_implicit(self):
        sent = make_sentence(["red", "green", "blue"], ["O", "O", "O"])
        assert classify_explicitness(sent, default_lexicon()) is False

    def test_case_invariance(self):
        lower = make_sentence(["smoking", "causes", "cancer"], ["C", "O", "E"])
        upper = make_sentence(["Smoking", "CAUSES", "Cancer"], ["C", "O", "E"])
        lex = default_lexicon()
        assert classify_explicitness(lower, lex) == classify_explicitness(upper, lex)

    def test_multiword_marker(self):
        sent = make_sentence(["wind", "leads", "to", "waves"], ["C", "O", "O", "E"])
        assert classify_explicitness(sent, default_lexicon()) is True

    def test_empty_lexicon(self):
        sent = make_sentence(["a"], ["O"])
        with pytest.raises(CorpusError, match="empty"):
            classify_explicitness(sent, ())

    def test_lexicon_parsing(self):
        lex = load_lexicon("# comment\nleads to\n\nCAUSE  # trailing\n")
        assert lex == (("leads", "to"), ("cause",))


class TestSubsample:
    def corpus(self):
        return make_corpus([
            make_sentence(["ice", "caused", "slips"], ["C", "O", "E"], sent_id="c1"),
            make_sentence(["rain", "caused", "floods"], ["C", "O", "E"], sent_id="c2"),
            make_sentence(["be", "kind"], ["O", "O"], sent_id="n1"),
            make_sentence(["stay", "calm"], ["O", "O"], sent_id="n2"),
        ])

    def test_sample_equals_qualifying_set(self):
        out = subsample_by_marker(self.corpus(), {"caused"}, set(), 2, seed=0)
        assert [s.id for s in out] == ["c1", "c2"]

    def test_cause_variant_rule_forbids_causes(self):
        corpus = make_corpus([
            make_sentence(["smoking", "causes", "cancer"], ["C", "O", "E"], sent_id="x1"),
            make_sentence(["heat", "leads", "to", "fires"], ["C", "O", "O", "E"], sent_id="x2"),
        ])
        out = subsample_by_marker(corpus, {"leads to"}, {"cause"}, 1, seed=0)
        assert [s.id for s in out] == ["x2"]

    def test_too_few_qualifiers_reports_count(self):
        with pytest.raises(CorpusError, match="2"):
            subsample_by_marker(self.corpus(), {"caused"}, set(), 3, seed=0)

    def test_output_subset_and_predicates(self, rng):
        corpus = self.corpus()
        out = subsample_by_marker(corpus, {"caused"}, {"leads to"}, 1, seed=3)
        assert len(out) == 1
        assert out.sentences[0] in corpus.sentences

    def test_overlapping_sets_rejected(self):
        with pytest.raises(CorpusError, match="overlap"):
            subsample_by_marker(self.corpus(), {"caused"}, {"caused"}, 1, seed=0)


class TestStats:
    def test_single_token_spans(self):
        corpus = make_corpus([
            make_sentence(["a", "caused", "b"], ["C", "O", "E"], sent_id=f"s{i}")
            for i in range(3)
        ])
        stats = corpus_stats(corpus, default_lexicon())
        assert stats.n_sentences == 3
        assert stats.mean_cause_len == 1.0
        assert stats.mean_effect_len == 1.0
        assert stats.pct_implicit == 0.0  # "caused" marker everywhere

    def test_mean_span_lengths(self):
        # C spans of lengths 1 and 3: mean (1 + 3) / 2 = 2.0 by hand
        corpus = make_corpus([
            make_sentence(["a", "b", "c"], ["C", "O", "O"], sent_id="s1"),
            make_sentence(["a", "b", "c", "d"], ["C", "C", "C", "O"], sent_id="s2"),
        ])
        stats = corpus_stats(corpus, default_lexicon())
        assert stats.mean_cause_len == 2.0
        assert stats.mean_effect_len == 0.0

    def test_all_o_sentences_allowed(self):
        corpus = make_corpus([
            make_sentence(["quiet", "day"], ["O", "O"], sent_id="s1"),
            make_sentence(["x", "y"], ["C", "E"], sent_id="s2"),
        ])
        stats = corpus_stats(corpus, default_lexicon())
        assert stats.mean_cause_len == 1.0

    def test_label_spans_helper(self):
        assert label_spans(("C", "C", "O", "E", "E", "E", "O", "C")) == [
            ("C", 0, 2), ("E", 3, 6), ("C", 7, 8),
        ]
        assert label_spans(("C", "E")) == [("C", 0, 1), ("E", 1, 2)]
        assert label_spans(("O", "O")) == []
