"""Text analysis: segmentation, similarity, key phrases, highlight spans."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import keyphrase_reply, mock_backends
from goaltrack.analysis import (
    EmbeddingCache,
    HIGHLIGHT_EVAL_EXAMPLE,
    Sentence,
    evaluation_highlights,
    extract_keyphrases,
    keyphrase_highlights,
    similar_pair_highlights,
    similarity_matrix,
    split_sentences,
    top_similar_pairs,
    unique_sentence_highlights,
    unique_sentences,
)
from goaltrack.backends import ScriptedMockBackend
from goaltrack.errors import InsufficientSentences
from goaltrack.goals import Evaluation, EvaluationCategory, EvaluationExample

from similarity_oracle import (
    brute_matrix,
    brute_top_pairs,
    brute_unique,
    normalize,
    similarity_instances,
)


class TestSplitSentences:
    def test_basic_boundaries(self):
        sentences = split_sentences("m1", "Hello. World!")
        assert [s.text for s in sentences] == ["Hello.", "World!"]

    def test_abbreviation_suppresses_boundary(self):
        sentences = split_sentences("m1", "e.g. apples and pears")
        assert [s.text for s in sentences] == ["e.g. apples and pears"]

    def test_list_items_are_own_sentences(self):
        sentences = split_sentences("m1", "- tip one\n- tip two")
        assert [s.text for s in sentences] == ["- tip one", "- tip two"]

    def test_headings_stay_whole(self):
        sentences = split_sentences("m1", "## Packing. Tips\nBring a hat.")
        assert [s.text for s in sentences] == ["## Packing. Tips", "Bring a hat."]

    def test_ranges_reproduce_text(self):
        text = "First one.  Second one!\n\n- a list item\nAnd a question? Yes."
        for sentence in split_sentences("m1", text):
            assert text[sentence.start:sentence.end] == sentence.text

    def test_ranges_ascending_nonoverlapping(self):
        text = "A. B. C. D? E!"
        sentences = split_sentences("m1", text)
        for before, after in zip(sentences, sentences[1:]):
            assert before.end <= after.start

    def test_trailing_fragment_kept(self):
        sentences = split_sentences("m1", "Done. And more")
        assert [s.text for s in sentences] == ["Done.", "And more"]

    def test_empty_text(self):
        assert split_sentences("m1", "") == []

    @settings(max_examples=100, deadline=None)
    @given(st.text(max_size=300))
    def test_partition_property(self, text):
        sentences = split_sentences("m1", text)
        previous_end = 0
        for sentence in sentences:
            assert 0 <= sentence.start < sentence.end <= len(text)
            assert sentence.start >= previous_end
            assert text[sentence.start:sentence.end] == sentence.text
            # gaps between sentences are whitespace only
            previous_end = sentence.end
        covered = [False] * len(text)
        for sentence in sentences:
            for i in range(sentence.start, sentence.end):
                covered[i] = True
        for i, flag in enumerate(covered):
            if not flag and not text[i].isspace():
                # uncovered non-whitespace only allowed outside any sentence
                inside = any(s.start <= i < s.end for s in sentences)
                assert not inside


def _sentences(specs: list[tuple[str, str]]) -> list[Sentence]:
    return [
        Sentence(message_id=mid, index=i, start=0, end=len(text), text=text)
        for i, (mid, text) in enumerate(specs)
    ]


class TestSimilarityMatrix:
    def test_identical_sentences_are_fully_similar(self):
        sentences = _sentences([("a", "same text"), ("b", "same text")])
        backend = ScriptedMockBackend(embeddings={"same text": (1, 2, 3)})
        sim = similarity_matrix(sentences, backend)
        assert sim.matrix[0, 1] == pytest.approx(1.0, abs=1e-9)

    def test_orthogonal_vectors_score_zero(self):
        sentences = _sentences([("a", "x"), ("b", "y")])
        backend = ScriptedMockBackend(embeddings={"x": (1, 0), "y": (0, 1)})
        sim = similarity_matrix(sentences, backend)
        assert sim.matrix[0, 1] == pytest.approx(0.0, abs=1e-12)

    def test_matches_brute_force(self):
        vectors = {"s1": (1, 2, 2), "s2": (-2, 0, 1), "s3": (0.5, 0.5, 0), "s4": (3, -1, 2)}
        sentences = _sentences([("a", "s1"), ("a", "s2"), ("b", "s3"), ("b", "s4")])
        backend = ScriptedMockBackend(embeddings=vectors)
        sim = similarity_matrix(sentences, backend)
        expected = brute_matrix([normalize(vectors[s.text]) for s in sentences])
        assert np.allclose(sim.matrix, expected, atol=1e-9)

    def test_symmetry_and_unit_diagonal(self):
        vectors = {"s1": (0.1, -4, 2), "s2": (5, 5, 5), "s3": (-1, 0, 0.25)}
        sentences = _sentences([("a", "s1"), ("b", "s2"), ("c", "s3")])
        sim = similarity_matrix(sentences, ScriptedMockBackend(embeddings=vectors))
        assert np.allclose(sim.matrix, sim.matrix.T)
        assert np.allclose(np.diag(sim.matrix), 1.0, atol=1e-6)
        assert (sim.matrix >= -1).all() and (sim.matrix <= 1).all()

    def test_cache_prevents_repeat_calls(self):
        calls = []

        class Counting(ScriptedMockBackend):
            def embed(self, texts):
                calls.append(list(texts))
                return super().embed(texts)

        backend = Counting(embeddings={"x": (1, 0)})
        cache = EmbeddingCache()
        sentences = _sentences([("a", "x"), ("b", "x")])
        similarity_matrix(sentences, backend, cache)
        similarity_matrix(sentences, backend, cache)
        assert calls == [["x"]]


class TestTopSimilarPairs:
    def test_dominant_cross_message_pair(self):
        vectors = {"a1": (1, 0), "b1": (0.9, 0.43589), "a2": (0, 1)}
        sentences = _sentences([("a", "a1"), ("a", "a2"), ("b", "b1")])
        sim = similarity_matrix(sentences, ScriptedMockBackend(embeddings=vectors))
        pairs = top_similar_pairs(sim, k=1)
        assert (pairs[0].i, pairs[0].j) == (0, 2)

    def test_k_zero_returns_empty(self):
        sentences = _sentences([("a", "x"), ("b", "y")])
        sim = similarity_matrix(
            sentences, ScriptedMockBackend(embeddings={"x": (1, 0), "y": (0, 1)})
        )
        assert top_similar_pairs(sim, k=0) == []

    def test_single_message_has_no_pairs(self):
        sentences = _sentences([("a", "x"), ("a", "y")])
        sim = similarity_matrix(
            sentences, ScriptedMockBackend(embeddings={"x": (1, 0), "y": (0, 1)})
        )
        assert top_similar_pairs(sim, k=5) == []


class TestUniqueSentences:
    def test_orthogonal_outlier_is_most_unique(self):
        vectors = {"s1": (1, 0), "s2": (1, 0), "s3": (0, 1)}
        sentences = _sentences([("a", "s1"), ("a", "s2"), ("b", "s3")])
        sim = similarity_matrix(sentences, ScriptedMockBackend(embeddings=vectors))
        uniques = unique_sentences(sim, m=1)
        assert uniques[0][0] == 2
        assert uniques[0][1] == pytest.approx(0.0, abs=1e-12)

    def test_m_larger_than_count_returns_all(self):
        sentences = _sentences([("a", "x"), ("b", "y")])
        sim = similarity_matrix(
            sentences, ScriptedMockBackend(embeddings={"x": (1, 0), "y": (0, 1)})
        )
        assert len(unique_sentences(sim, m=10)) == 2

    def test_ties_resolved_by_sentence_order(self):
        vectors = {"s1": (1, 0), "s2": (1, 0), "s3": (1, 0)}
        sentences = _sentences([("a", "s1"), ("b", "s2"), ("c", "s3")])
        sim = similarity_matrix(sentences, ScriptedMockBackend(embeddings=vectors))
        uniques = unique_sentences(sim, m=2)
        assert [u[0] for u in uniques] == [0, 1]
        assert all(u[1] == pytest.approx(1.0, abs=1e-9) for u in uniques)

    def test_insufficient_sentences(self):
        sentences = _sentences([("a", "x")])
        sim = similarity_matrix(sentences, ScriptedMockBackend(embeddings={"x": (1, 0)}))
        with pytest.raises(InsufficientSentences):
            unique_sentences(sim, m=1)


def run_similarity_check(instance) -> None:
    vectors, message_ids, k, m = instance
    texts = [f"sentence {i}" for i in range(len(vectors))]
    table = dict(zip(texts, vectors))
    sentences = _sentences(list(zip(message_ids, texts)))
    sim = similarity_matrix(sentences, ScriptedMockBackend(embeddings=table))

    expected_matrix = brute_matrix([normalize(v) for v in vectors])
    assert np.allclose(sim.matrix, expected_matrix, atol=1e-9)

    pairs = top_similar_pairs(sim, k)
    expected_pairs = brute_top_pairs(message_ids, sim.matrix.tolist(), k)
    assert [(p.i, p.j) for p in pairs] == [(i, j) for i, j, _ in expected_pairs]
    for pair, (_, _, score) in zip(pairs, expected_pairs):
        assert pair.score == pytest.approx(score, abs=1e-9)

    uniques = unique_sentences(sim, m)
    expected_uniques = brute_unique(sim.matrix.tolist(), m)
    assert [u[0] for u in uniques] == [i for i, _ in expected_uniques]
    for (_, mean), (_, expected_mean) in zip(uniques, expected_uniques):
        assert mean == pytest.approx(expected_mean, abs=1e-9)


class TestSimilarityOracle:
    @settings(max_examples=150, deadline=None)
    @given(similarity_instances())
    def test_matches_brute_force(self, instance):
        run_similarity_check(instance)


class TestKeyphrases:
    def test_shared_across_messages(self):
        backends = mock_backends(
            {
                "keyphrases:ma": keyphrase_reply("packing list"),
                "keyphrases:mb": keyphrase_reply("packing list"),
            }
        )
        phrases = extract_keyphrases(
            [("ma", "Bring a packing list."), ("mb", "Check the packing list twice.")],
            backends.pipeline,
        )
        assert all(p.shared for p in phrases)

    def test_unique_to_one_message(self):
        backends = mock_backends(
            {
                "keyphrases:ma": keyphrase_reply("sunscreen"),
                "keyphrases:mb": keyphrase_reply("boarding pass"),
            }
        )
        phrases = extract_keyphrases(
            [("ma", "Pack sunscreen."), ("mb", "Print the boarding pass.")],
            backends.pipeline,
        )
        assert not any(p.shared for p in phrases)

    def test_ungrounded_phrase_flagged(self):
        backends = mock_backends({"keyphrases:ma": keyphrase_reply("not present")})
        phrases = extract_keyphrases([("ma", "Totally different.")], backends.pipeline)
        assert phrases[0].grounded is False

    def test_sharing_uses_normalized_equality(self):
        backends = mock_backends(
            {
                "keyphrases:ma": keyphrase_reply("Packing  List"),
                "keyphrases:mb": keyphrase_reply("packing list"),
            }
        )
        phrases = extract_keyphrases(
            [("ma", "the Packing  List."), ("mb", "a packing list.")],
            backends.pipeline,
        )
        assert all(p.shared for p in phrases)


class TestHighlightSpans:
    def test_eval_example_span_carries_category(self):
        evaluation = Evaluation(
            goal_id="g1",
            message_id="m2",
            category=EvaluationCategory.CONFIRM,
            explanation="ok",
            examples=[EvaluationExample("quoted bit", (10, 35), True)],
        )
        (span,) = evaluation_highlights([evaluation], "m2")
        assert (span.start, span.end) == (10, 35)
        assert span.kind == HIGHLIGHT_EVAL_EXAMPLE and span.category == "confirm"

    def test_ungrounded_example_yields_no_span(self):
        evaluation = Evaluation(
            goal_id="g1",
            message_id="m2",
            category=EvaluationCategory.IGNORE,
            explanation="none",
            examples=[EvaluationExample("made up", None, False)],
        )
        assert evaluation_highlights([evaluation], "m2") == []

    def test_two_evaluations_may_overlap(self):
        evaluations = [
            Evaluation("g1", "m2", EvaluationCategory.CONFIRM, "a",
                       [EvaluationExample("x", (0, 12), True)]),
            Evaluation("g2", "m2", EvaluationCategory.CONTRADICT, "b",
                       [EvaluationExample("y", (5, 20), True)]),
        ]
        spans = evaluation_highlights(evaluations, "m2")
        assert len(spans) == 2
        assert {s.category for s in spans} == {"confirm", "contradict"}

    def test_similar_pair_spans_share_pair_id(self):
        sentences = _sentences([("a", "x"), ("b", "y")])
        sim = similarity_matrix(
            sentences, ScriptedMockBackend(embeddings={"x": (1, 0), "y": (1, 0)})
        )
        pairs = top_similar_pairs(sim, k=1)
        spans = similar_pair_highlights(sim, pairs)
        assert len(spans) == 2 and spans[0].pair_id == spans[1].pair_id == 0

    def test_unique_sentence_spans(self):
        sentences = _sentences([("a", "x"), ("b", "y")])
        sim = similarity_matrix(
            sentences, ScriptedMockBackend(embeddings={"x": (1, 0), "y": (0, 1)})
        )
        spans = unique_sentence_highlights(sim, unique_sentences(sim, m=1))
        assert len(spans) == 1 and spans[0].kind == "unique_sentence"

    def test_keyphrase_spans_slice_to_phrase(self):
        backends = mock_backends({"keyphrases:ma": keyphrase_reply("packing list")})
        text = "Bring the packing list."
        phrases = extract_keyphrases([("ma", text)], backends.pipeline)
        (span,) = keyphrase_highlights(phrases)
        assert text[span.start:span.end] == "packing list"
