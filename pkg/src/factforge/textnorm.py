"""Shared text normalization helpers.

One tokenizer is used everywhere a unigram view of text is needed
(overlap heuristics, ROUGE-1) so that thresholds mean the same thing
across modules.
"""

from __future__ import annotations

import re

_PUNCT = re.compile(r"[^\w\s]")


def normalize_ws(text: str) -> str:
    """Collapse whitespace runs to single spaces and strip the ends."""
    return " ".join(text.split())


def normalize_for_match(text: str) -> str:
    """Whitespace- and case-normalized form used for exact membership tests."""
    return normalize_ws(text).casefold()


def tokenize(text: str) -> list[str]:
    """Lowercase, strip punctuation, split on whitespace."""
    return _PUNCT.sub(" ", text.lower()).split()


def unigram_jaccard(a: str, b: str) -> float:
    """Jaccard similarity of the two texts' unigram sets.

    Both empty counts as identical (1.0).
    """
    sa, sb = set(tokenize(a)), set(tokenize(b))
    if not sa and not sb:
        return 1.0
    return len(sa & sb) / len(sa | sb)
