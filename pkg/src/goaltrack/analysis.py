"""Highlight computations over LLM responses.

Everything needed to light up the chat: evaluation-example spans,
key phrases shared or unique across responses, sentence segmentation,
pairwise embedding similarity, the most similar cross-message sentence
pairs, and the sentences least similar to everything else.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from threading import Lock
from typing import Any, Iterable, Mapping, Optional

import numpy as np

from .backends import Backend, complete_structured
from .errors import InsufficientSentences, MalformedOutput
from .goals import Evaluation
from .grounding import ground_span, normalize_text
from .pipeline import render_prompt

HIGHLIGHT_EVAL_EXAMPLE = "eval_example"
HIGHLIGHT_KEY_PHRASE = "key_phrase"
HIGHLIGHT_SIMILAR_PAIR = "similar_pair"
HIGHLIGHT_UNIQUE_SENTENCE = "unique_sentence"


@dataclass(frozen=True)
class Sentence:
    message_id: str
    index: int
    start: int
    end: int
    text: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "message_id": self.message_id,
            "index": self.index,
            "start": self.start,
            "end": self.end,
            "text": self.text,
        }


@dataclass
class SimilarityMatrix:
    sentences: list[Sentence]
    matrix: np.ndarray  # square, symmetric, unit diagonal

    def __len__(self) -> int:
        return len(self.sentences)


@dataclass
class SimilarPair:
    i: int
    j: int
    score: float


@dataclass
class KeyPhrase:
    message_id: str
    phrase: str
    grounded_span: Optional[tuple[int, int]]
    grounded: bool
    shared: bool

    def to_dict(self) -> dict[str, Any]:
        return {
            "message_id": self.message_id,
            "phrase": self.phrase,
            "grounded_span": list(self.grounded_span) if self.grounded_span else None,
            "grounded": self.grounded,
            "shared": self.shared,
        }


@dataclass
class HighlightSpan:
    """A char range in a message tagged with why it lights up."""

    message_id: str
    start: int
    end: int
    kind: str
    category: Optional[str] = None  # eval_example: confirm/contradict/ignore
    shared: Optional[bool] = None  # key_phrase
    pair_id: Optional[int] = None  # similar_pair

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "message_id": self.message_id,
            "start": self.start,
            "end": self.end,
            "kind": self.kind,
        }
        if self.category is not None:
            d["category"] = self.category
        if self.shared is not None:
            d["shared"] = self.shared
        if self.pair_id is not None:
            d["pair_id"] = self.pair_id
        return d


# --- sentence segmentation ------------------------------------------------

_TERMINATOR = re.compile(r"[.!?]+")
_LIST_MARKER = re.compile(r"^\s*(?:[-*+•‣◦]|\d{1,3}[.)])\s+")
_HEADING_MARKER = re.compile(r"^\s*#{1,6}\s")

# tokens whose trailing period never ends a sentence
ABBREVIATIONS = {
    "e.g.", "i.e.", "etc.", "vs.", "cf.", "al.", "ca.", "approx.",
    "dr.", "mr.", "mrs.", "ms.", "prof.", "sr.", "jr.", "st.", "no.", "fig.",
}


def _is_abbreviation(token: str) -> bool:
    token = token.lower()
    if token in ABBREVIATIONS:
        return True
    # single-letter initials like "J."
    return len(token) == 2 and token[0].isalpha() and token[1] == "."


def _trimmed_range(text: str, start: int, end: int) -> Optional[tuple[int, int]]:
    while start < end and text[start].isspace():
        start += 1
    while end > start and text[end - 1].isspace():
        end -= 1
    return (start, end) if start < end else None


def split_sentences(message_id: str, text: str) -> list[Sentence]:
    """Deterministic segmentation of a message into sentences.

    Boundaries sit at ``. ! ?`` runs followed by whitespace or end of
    line; a short abbreviation list suppresses false boundaries. Lines
    are segmented independently, and list items / headings stay whole.
    Ranges index the original text; slicing reproduces each sentence.
    """
    sentences: list[Sentence] = []

    def emit(start: int, end: int) -> None:
        rng = _trimmed_range(text, start, end)
        if rng is None:
            return
        sentences.append(
            Sentence(
                message_id=message_id,
                index=len(sentences),
                start=rng[0],
                end=rng[1],
                text=text[rng[0]:rng[1]],
            )
        )

    offset = 0
    for line in text.split("\n"):
        line_start, line_end = offset, offset + len(line)
        offset = line_end + 1
        if not line.strip():
            continue
        if _LIST_MARKER.match(line) or _HEADING_MARKER.match(line):
            emit(line_start, line_end)
            continue
        seg_start = line_start
        for match in _TERMINATOR.finditer(line):
            boundary = line_start + match.end()
            if boundary < line_end and not text[boundary].isspace():
                continue
            preceding = line[:match.end()]
            token = preceding.rsplit(None, 1)[-1] if preceding.split() else preceding
            if _is_abbreviation(token):
                continue
            emit(seg_start, boundary)
            seg_start = boundary
        emit(seg_start, line_end)
    return sentences


# --- embeddings and similarity ---------------------------------------------


class EmbeddingCache:
    """Cache keyed by exact sentence text to avoid repeat provider calls."""

    def __init__(self) -> None:
        self._vectors: dict[str, np.ndarray] = {}
        self._lock = Lock()

    def get_many(self, texts: list[str], backend: Backend) -> np.ndarray:
        with self._lock:
            missing = [t for t in dict.fromkeys(texts) if t not in self._vectors]
        if missing:
            fetched = backend.embed(missing)
            with self._lock:
                for text, vector in zip(missing, fetched):
                    self._vectors[text] = vector
        with self._lock:
            return np.stack([self._vectors[t] for t in texts])


def similarity_matrix(
    sentences: list[Sentence],
    backend: Backend,
    cache: EmbeddingCache | None = None,
) -> SimilarityMatrix:
    """Pairwise cosine similarity between sentences.

    Embeddings arrive unit-normalized from the backend, so the matrix
    is a plain dot-product Gram matrix, clipped to [-1, 1].
    """
    if not sentences:
        raise ValueError("need at least one sentence")
    if cache is None:
        cache = EmbeddingCache()
    vectors = cache.get_many([s.text for s in sentences], backend)
    matrix = np.clip(vectors @ vectors.T, -1.0, 1.0)
    return SimilarityMatrix(sentences=list(sentences), matrix=matrix)


def top_similar_pairs(sim: SimilarityMatrix, k: int) -> list[SimilarPair]:
    """Highest-similarity sentence pairs across different messages.

    Intra-message pairs are excluded: the individual goal view compares
    responses over time, and near-duplicates inside one response are
    noise there. Sorted by score descending, ties by (i, j) index.
    """
    if k <= 0:
        return []
    pairs: list[SimilarPair] = []
    n = len(sim.sentences)
    for i in range(n):
        for j in range(i + 1, n):
            if sim.sentences[i].message_id == sim.sentences[j].message_id:
                continue
            pairs.append(SimilarPair(i, j, float(sim.matrix[i, j])))
    pairs.sort(key=lambda p: (-p.score, p.i, p.j))
    return pairs[:k]


def unique_sentences(sim: SimilarityMatrix, m: int) -> list[tuple[int, float]]:
    """The m sentences with the lowest mean similarity to all others.

    The mean is global over every other sentence in the matrix,
    regardless of message. Ascending by mean, ties by sentence order.
    Returns (sentence index, mean) tuples.
    """
    n = len(sim.sentences)
    if n < 2:
        raise InsufficientSentences("need at least two sentences to rank uniqueness")
    # fsum: exact summation, so permuted rows tie exactly and the index
    # tie-break stays deterministic
    means = [
        math.fsum(sim.matrix[i, j] for j in range(n) if j != i) / (n - 1)
        for i in range(n)
    ]
    order = sorted(range(n), key=lambda i: (means[i], i))
    return [(i, means[i]) for i in order[:m]]


# --- key phrases -----------------------------------------------------------


def extract_keyphrases(
    responses: list[tuple[str, str]],
    backend: Backend,
    tags: Mapping[str, str] | None = None,
) -> list[KeyPhrase]:
    """Salient phrases per response, marked shared when two or more
    responses yield the same phrase under normalization.

    ``tags`` maps message id to the structured-call tag (defaults to
    ``keyphrases:<message id>``).
    """
    if not responses:
        raise ValueError("need at least one response")
    raw: list[tuple[str, str, str]] = []  # (message_id, phrase, normalized)
    for message_id, text in responses:
        tag = tags[message_id] if tags else f"keyphrases:{message_id}"
        prompt = render_prompt("keyphrases") + "\n\n" + text
        value = complete_structured(backend, prompt, tag=tag)
        if not isinstance(value, dict) or not isinstance(value.get("keyphrases"), list):
            raise MalformedOutput("keyphrase reply missing 'keyphrases' list", raw_text=repr(value))
        for phrase in value["keyphrases"]:
            phrase = str(phrase)
            if phrase.strip():
                raw.append((message_id, phrase, normalize_text(phrase)))

    seen_in: dict[str, set[str]] = {}
    for message_id, _, normalized in raw:
        seen_in.setdefault(normalized, set()).add(message_id)

    by_message = {mid: text for mid, text in responses}
    phrases: list[KeyPhrase] = []
    for message_id, phrase, normalized in raw:
        span = ground_span(by_message[message_id], phrase)
        phrases.append(
            KeyPhrase(
                message_id=message_id,
                phrase=phrase,
                grounded_span=span,
                grounded=span is not None,
                shared=len(seen_in[normalized]) >= 2,
            )
        )
    return phrases


# --- highlight span assembly ------------------------------------------------


def evaluation_highlights(evaluations: Iterable[Evaluation], message_id: str) -> list[HighlightSpan]:
    """One span per grounded example, colored by the evaluation category.

    Ungrounded examples yield no span: there is nothing to point at.
    """
    spans: list[HighlightSpan] = []
    for evaluation in evaluations:
        if evaluation.message_id != message_id:
            continue
        for example in evaluation.examples:
            if not example.grounded or example.grounded_span is None:
                continue
            spans.append(
                HighlightSpan(
                    message_id=message_id,
                    start=example.grounded_span[0],
                    end=example.grounded_span[1],
                    kind=HIGHLIGHT_EVAL_EXAMPLE,
                    category=evaluation.category.value,
                )
            )
    return spans


def keyphrase_highlights(phrases: Iterable[KeyPhrase]) -> list[HighlightSpan]:
    return [
        HighlightSpan(
            message_id=p.message_id,
            start=p.grounded_span[0],
            end=p.grounded_span[1],
            kind=HIGHLIGHT_KEY_PHRASE,
            shared=p.shared,
        )
        for p in phrases
        if p.grounded and p.grounded_span is not None
    ]


def similar_pair_highlights(sim: SimilarityMatrix, pairs: list[SimilarPair]) -> list[HighlightSpan]:
    spans: list[HighlightSpan] = []
    for pair_id, pair in enumerate(pairs):
        for idx in (pair.i, pair.j):
            s = sim.sentences[idx]
            spans.append(
                HighlightSpan(
                    message_id=s.message_id,
                    start=s.start,
                    end=s.end,
                    kind=HIGHLIGHT_SIMILAR_PAIR,
                    pair_id=pair_id,
                )
            )
    return spans


def unique_sentence_highlights(
    sim: SimilarityMatrix, uniques: list[tuple[int, float]]
) -> list[HighlightSpan]:
    spans: list[HighlightSpan] = []
    for idx, _ in uniques:
        s = sim.sentences[idx]
        spans.append(
            HighlightSpan(
                message_id=s.message_id,
                start=s.start,
                end=s.end,
                kind=HIGHLIGHT_UNIQUE_SENTENCE,
            )
        )
    return spans
