from __future__ import annotations

import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scigeo.topics import (
    PreprocessConfig,
    Topic,
    TopicAssignmentConfig,
    TopicModel,
    TopicModelError,
    TokenDocument,
    assign_topics,
    label_dl,
    load_topic_model,
    preprocess_corpus,
    stem_token,
    tokenize,
    topic_score,
)


def doc(tokens, paper_id="d1"):
    return TokenDocument(paper_id=paper_id, tokens=frozenset(tokens), token_count=len(tokens))


TOPIC = Topic(
    topic_id="t1",
    terms=(("neural_network", 0.5), ("deep_learning", 0.3), ("convolutional", 0.2)),
)


class TestPreprocess:
    def test_short_abstract_dropped(self):
        result = preprocess_corpus({"d1": "one two three four five"}, PreprocessConfig(rare_word_min_count=1))
        assert result.documents == []
        assert result.dropped[0].paper_id == "d1"

    def test_all_stop_words_dropped(self):
        text = "the and of to in is it for on with as by"
        result = preprocess_corpus({"d1": text}, PreprocessConfig(rare_word_min_count=1))
        assert result.documents == []
        assert result.dropped[0].token_count == 0

    def test_ngram_appended_when_frequent(self):
        text = " ".join(["neural network"] * 30)
        cfg = PreprocessConfig(min_tokens=1, rare_word_min_count=1, ngram_min_count=10, stemmer="identity")
        result = preprocess_corpus({"d1": text}, cfg)
        tokens = result.documents[0].tokens
        assert "neural_network" in tokens
        assert "neural" in tokens and "network" in tokens

    def test_rare_ngram_not_appended(self):
        cfg = PreprocessConfig(min_tokens=1, rare_word_min_count=1, ngram_min_count=10, stemmer="identity")
        corpus = {"d1": "alpha beta", "d2": " ".join(["gamma delta"] * 20)}
        result = preprocess_corpus(corpus, cfg)
        assert "alpha_beta" not in result.by_id()["d1"].tokens
        assert "gamma_delta" in result.by_id()["d2"].tokens

    def test_rare_word_floor(self):
        cfg = PreprocessConfig(min_tokens=1, rare_word_min_count=3, ngram_min_count=99, stemmer="identity")
        corpus = {
            "d1": "common common common rareword",
            "d2": "common somethingelse",
        }
        result = preprocess_corpus(corpus, cfg)
        by_id = result.by_id()
        assert "common" in by_id["d1"].tokens
        assert "rareword" not in by_id["d1"].tokens

    def test_punctuation_and_case(self):
        assert tokenize("Deep-Learning, NETWORKS!") == ["deep", "learning", "networks"]

    def test_deterministic(self):
        corpus = {f"d{i}": "alpha beta gamma delta " * 8 for i in range(5)}
        cfg = PreprocessConfig(min_tokens=1)
        a = preprocess_corpus(corpus, cfg)
        b = preprocess_corpus(corpus, cfg)
        assert [d.tokens for d in a.documents] == [d.tokens for d in b.documents]
        assert [d.token_count for d in a.documents] == [d.token_count for d in b.documents]

    def test_identity_stemmer_keeps_tokens(self):
        cfg = PreprocessConfig(min_tokens=1, rare_word_min_count=1, stemmer="identity")
        result = preprocess_corpus({"d1": "networks training"}, cfg)
        assert {"networks", "training"} <= result.documents[0].tokens

    def test_suffix_stemmer_applies(self):
        cfg = PreprocessConfig(min_tokens=1, rare_word_min_count=1, stemmer="suffix")
        result = preprocess_corpus({"d1": "networks training"}, cfg)
        assert {"network", "train"} <= result.documents[0].tokens


class TestStemmer:
    @pytest.mark.parametrize(
        "token,stem",
        [
            ("networks", "network"),
            ("training", "train"),
            ("optimization", "optim"),
            ("studies", "study"),
            ("loss", "loss"),
            ("cat", "cat"),
        ],
    )
    def test_examples(self, token, stem):
        assert stem_token(token) == stem

    @settings(max_examples=200, deadline=None)
    @given(st.text(alphabet="abcdefghij", min_size=1, max_size=12))
    def test_stem_never_longer(self, token):
        assert len(stem_token(token)) <= len(token)


class TestTopicScore:
    def test_saturation(self):
        d = doc(["neural_network", "deep_learning", "convolutional"])
        assert topic_score(d, TOPIC) == pytest.approx(1.0)

    def test_no_overlap(self):
        assert topic_score(doc(["graph"]), TOPIC) == 0.0

    def test_partial_overlap(self):
        assert topic_score(doc(["deep_learning", "graph"]), TOPIC) == pytest.approx(0.3)

    def test_additivity(self):
        base = doc(["deep_learning"])
        more = doc(["deep_learning", "unrelated"])
        assert topic_score(base, TOPIC) == topic_score(more, TOPIC)
        with_term = doc(["deep_learning", "convolutional"])
        assert topic_score(with_term, TOPIC) == pytest.approx(topic_score(base, TOPIC) + 0.2)


class TestAssignTopics:
    MODEL = TopicModel(topics=(TOPIC,))

    def test_assigned_at_half_gamma(self):
        cfg = TopicAssignmentConfig(gamma=0.5, dl_topic_ids=frozenset({"t1"}))
        got = assign_topics(doc(["deep_learning"]), self.MODEL, cfg)
        assert got == {"t1"}  # 0.3 >= 0.25

    def test_not_assigned_at_gamma_one(self):
        cfg = TopicAssignmentConfig(gamma=1.0, dl_topic_ids=frozenset({"t1"}))
        assert assign_topics(doc(["deep_learning"]), self.MODEL, cfg) == frozenset()

    def test_zero_overlap_guarded_at_gamma_zero(self):
        cfg = TopicAssignmentConfig(gamma=0.0, dl_topic_ids=frozenset({"t1"}))
        assert assign_topics(doc(["nothing"]), self.MODEL, cfg) == frozenset()

    def test_guard_disabled_assigns_at_gamma_zero(self):
        cfg = TopicAssignmentConfig(
            gamma=0.0, dl_topic_ids=frozenset({"t1"}), require_positive_score=False
        )
        assert assign_topics(doc(["nothing"]), self.MODEL, cfg) == {"t1"}

    @settings(max_examples=300, deadline=None)
    @given(
        tokens=st.sets(
            st.sampled_from(["neural_network", "deep_learning", "convolutional", "x", "y"])
        ),
        g1=st.floats(min_value=0, max_value=1.5),
        g2=st.floats(min_value=0, max_value=1.5),
    )
    def test_gamma_monotonicity(self, tokens, g1, g2):
        lo, hi = min(g1, g2), max(g1, g2)
        cfg_lo = TopicAssignmentConfig(gamma=lo, dl_topic_ids=frozenset({"t1"}))
        cfg_hi = TopicAssignmentConfig(gamma=hi, dl_topic_ids=frozenset({"t1"}))
        d = doc(tokens)
        assert assign_topics(d, self.MODEL, cfg_hi) <= assign_topics(d, self.MODEL, cfg_lo)


class TestLabelDl:
    TWO_TOPIC_MODEL = TopicModel(
        topics=(
            TOPIC,
            Topic(topic_id="t2", terms=(("embedding", 0.4), ("autoencoder", 0.1))),
        )
    )

    def test_every_doc_flagged(self):
        docs = [doc(["neural_network", "embedding"], paper_id=f"d{i}") for i in range(4)]
        cfg = TopicAssignmentConfig(gamma=0.5, dl_topic_ids=frozenset({"t1", "t2"}))
        flags, _, summary = label_dl(docs, self.TWO_TOPIC_MODEL, cfg)
        assert all(flags.values())
        assert summary.share == 1.0

    def test_empty_corpus_share_is_null(self):
        cfg = TopicAssignmentConfig(gamma=0.5, dl_topic_ids=frozenset({"t1"}))
        _, _, summary = label_dl([], self.TWO_TOPIC_MODEL, cfg)
        assert summary.share is None

    def test_engineered_count(self):
        hot = [doc(["neural_network"], paper_id=f"h{i}") for i in range(3)]
        cold = [doc(["other"], paper_id=f"c{i}") for i in range(7)]
        cfg = TopicAssignmentConfig(gamma=0.5, dl_topic_ids=frozenset({"t1"}))
        flags, _, summary = label_dl(hot + cold, self.TWO_TOPIC_MODEL, cfg)
        assert summary.flagged == 3
        assert summary.share == pytest.approx(0.3)

    def test_any_vs_all_rule(self):
        only_t1 = doc(["neural_network"])
        cfg_any = TopicAssignmentConfig(gamma=0.5, dl_topic_ids=frozenset({"t1", "t2"}), dl_rule="any")
        cfg_all = TopicAssignmentConfig(gamma=0.5, dl_topic_ids=frozenset({"t1", "t2"}), dl_rule="all")
        flags_any, _, _ = label_dl([only_t1], self.TWO_TOPIC_MODEL, cfg_any)
        flags_all, _, _ = label_dl([only_t1], self.TWO_TOPIC_MODEL, cfg_all)
        assert flags_any["d1"] is True
        assert flags_all["d1"] is False

    def test_unknown_marked_topic_rejected(self):
        cfg = TopicAssignmentConfig(gamma=0.5, dl_topic_ids=frozenset({"missing"}))
        with pytest.raises(TopicModelError):
            label_dl([], self.TWO_TOPIC_MODEL, cfg)


class TestTopicModelLoading:
    def test_load_sorts_terms(self, tmp_path):
        csv = "topic_id,word,weight\nt1,low,0.1\nt1,high,0.9\nt2,only,0.5\n"
        (tmp_path / "m.csv").write_text(csv)
        model = load_topic_model(tmp_path / "m.csv")
        assert model.topic("t1").terms == (("high", 0.9), ("low", 0.1))
        assert model.topic("t1").max_weight == 0.9
        assert model.topic_ids == ("t1", "t2")

    def test_non_positive_weight_rejected(self, tmp_path):
        (tmp_path / "m.csv").write_text("topic_id,word,weight\nt1,w,0.0\n")
        with pytest.raises(TopicModelError):
            load_topic_model(tmp_path / "m.csv")

    def test_missing_column_rejected(self, tmp_path):
        (tmp_path / "m.csv").write_text("topic,word\nx,y\n")
        with pytest.raises(TopicModelError):
            load_topic_model(tmp_path / "m.csv")

    def test_duplicate_word_rejected(self, tmp_path):
        (tmp_path / "m.csv").write_text("topic_id,word,weight\nt1,w,0.5\nt1,w,0.2\n")
        with pytest.raises(TopicModelError):
            load_topic_model(tmp_path / "m.csv")


def test_exhaustive_rule_check_small_vocabulary():
    """All subsets of a 6-word vocabulary against the literal rule."""
    vocab = ["a", "b", "c", "d", "e", "f"]
    weights = {"a": 0.6, "b": 0.5, "c": 0.4, "d": 0.3, "e": 0.2, "f": 0.1}
    topic = Topic(topic_id="t", terms=tuple(sorted(weights.items(), key=lambda kv: -kv[1])))
    model = TopicModel(topics=(topic,))
    t_max = 0.6
    for size in range(len(vocab) + 1):
        for subset in itertools.combinations(vocab, size):
            d = doc(subset)
            score = sum(weights[w] for w in subset)
            for gamma in (0.0, 0.25, 0.5, 0.75, 1.0):
                cfg = TopicAssignmentConfig(gamma=gamma, dl_topic_ids=frozenset({"t"}))
                expected = score > 0 and score >= gamma * t_max
                got = assign_topics(d, model, cfg)
                assert (got == {"t"}) == expected, (subset, gamma)
