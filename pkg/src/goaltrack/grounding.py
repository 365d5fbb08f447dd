"""Locate LLM-extracted fragments inside their claimed source text.

LLMs are asked to quote clauses, examples, and phrases verbatim, but in
practice replies drift in case, whitespace, and surrounding punctuation.
Matching therefore happens on a normalized view of both strings: case
folded, whitespace runs collapsed to single spaces, and punctuation
stripped from the fragment's edges. Returned spans always index the
original, unnormalized source.
"""

from __future__ import annotations

import string
from typing import Optional

_EDGE_PUNCTUATION = set(string.punctuation) | set("“”‘’«»…–—¡¿")


def strip_edge_punctuation(fragment: str) -> str:
    """Drop leading/trailing punctuation and whitespace from a fragment."""
    start, end = 0, len(fragment)
    while start < end and (fragment[start] in _EDGE_PUNCTUATION or fragment[start].isspace()):
        start += 1
    while end > start and (fragment[end - 1] in _EDGE_PUNCTUATION or fragment[end - 1].isspace()):
        end -= 1
    return fragment[start:end]


def normalize_text(text: str) -> str:
    """Case-fold and collapse whitespace runs; strips the ends."""
    out: list[str] = []
    for ch in text:
        if ch.isspace():
            if out and out[-1] == " ":
                continue
            out.append(" ")
        else:
            out.extend(ch.casefold())
    return "".join(out).strip()


def normalize_fragment(fragment: str) -> str:
    """Normalization applied to fragments before matching: edge
    punctuation is ignored on top of the usual folding."""
    return normalize_text(strip_edge_punctuation(fragment))


def _normalized_with_map(source: str) -> tuple[str, list[int], list[int]]:
    """Normalized source plus per-character maps back to original offsets.

    ``starts[i]``/``ends[i]`` give the original half-open range that
    normalized character ``i`` was derived from; a collapsed whitespace
    run maps to the whole run.
    """
    chars: list[str] = []
    starts: list[int] = []
    ends: list[int] = []
    for i, ch in enumerate(source):
        if ch.isspace():
            if chars and chars[-1] == " ":
                ends[-1] = i + 1
                continue
            chars.append(" ")
            starts.append(i)
            ends.append(i + 1)
        else:
            for folded in ch.casefold():
                chars.append(folded)
                starts.append(i)
                ends.append(i + 1)
    return "".join(chars), starts, ends


def ground_span(source: str, fragment: str) -> Optional[tuple[int, int]]:
    """First original-text range whose slice matches ``fragment``.

    Match means equality under normalization (see module docstring).
    Returns ``None`` when the fragment does not occur; empty-after-
    normalization fragments never match.
    """
    target = normalize_fragment(fragment)
    if not target:
        return None
    normalized, starts, ends = _normalized_with_map(source)
    at = normalized.find(target)
    if at < 0:
        return None
    return starts[at], ends[at + len(target) - 1]
