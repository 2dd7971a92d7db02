"""Raw page corpus handling: sentence segmentation, passage windowing, sampling.

Pages are split into sentences with a deterministic rule-based segmenter,
then grouped into fixed-size sliding windows of sentences. Each window is
one retrievable passage.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import DuplicatePageId, EmptyPageError
from .jsonlio import iter_jsonl, write_jsonl
from .textnorm import normalize_ws

log = logging.getLogger(__name__)

DEFAULT_WINDOW = 5
DEFAULT_STRIDE = 1

# Tokens that end with a terminator but do not end a sentence.
DEFAULT_ABBREVIATIONS = frozenset({
    "mr.", "mrs.", "ms.", "dr.", "prof.", "sr.", "jr.", "st.", "mt.",
    "vs.", "etc.", "e.g.", "i.e.", "cf.", "al.", "fig.", "no.", "vol.",
    "pp.", "ca.", "approx.", "dept.", "inc.", "ltd.", "co.", "corp.",
    "est.", "u.s.", "u.k.", "u.n.", "d.c.", "ph.d.",
})

_TERMINATORS = ".!?"
_CLOSERS = "\"')]}”’"
_OPENERS = "\"'([{“‘"


@dataclass(frozen=True)
class Page:
    """One source document."""

    page_id: str
    title: str
    text: str
    popularity_rank: int | None = None

    def __post_init__(self) -> None:
        if not self.page_id:
            raise ValueError("page_id must be non-empty")
        if not self.text.strip():
            raise ValueError(f"page {self.page_id!r} has empty text")


@dataclass(frozen=True)
class Passage:
    """A window of consecutive sentences from one page."""

    passage_id: str
    page_id: str
    start: int
    sentences: tuple[str, ...]

    @property
    def text(self) -> str:
        """Sentences joined with single spaces."""
        return " ".join(self.sentences)

    def to_row(self) -> dict:
        return {
            "passage_id": self.passage_id,
            "page_id": self.page_id,
            "start": self.start,
            "sentences": list(self.sentences),
        }

    @classmethod
    def from_row(cls, row: dict) -> "Passage":
        return cls(
            passage_id=row["passage_id"],
            page_id=row["page_id"],
            start=int(row["start"]),
            sentences=tuple(row["sentences"]),
        )


def passage_id_for(page_id: str, start: int) -> str:
    return f"{page_id}:{start}"


def split_sentences(
    text: str,
    abbreviations: frozenset[str] | set[str] = DEFAULT_ABBREVIATIONS,
) -> list[str]:
    """Segment text into sentences with a deterministic rule-based splitter.

    A sentence boundary is a run of terminators (``.!?``), possibly followed
    by closing quotes/brackets, followed by a space and then an uppercase
    letter, digit or opening quote. The word carrying the terminator must
    not be in the abbreviation guard list. Whitespace is normalized first;
    joining the output with single spaces reproduces the normalized input.
    """
    text = normalize_ws(text)
    if not text:
        return []
    sentences: list[str] = []
    start = 0
    i = 0
    n = len(text)
    while i < n:
        if text[i] in _TERMINATORS:
            j = i
            while j + 1 < n and text[j + 1] in _TERMINATORS + _CLOSERS:
                j += 1
            nxt = j + 1
            if nxt < n and text[nxt] == " " and nxt + 1 < n:
                first = text[nxt + 1]
                starts_fresh = first.isupper() or first.isdigit() or first in _OPENERS
                word = text[text.rfind(" ", 0, i) + 1 : i + 1]
                guarded = word.lstrip(_OPENERS).lower() in abbreviations
                if starts_fresh and not guarded:
                    sentences.append(text[start : j + 1])
                    start = nxt + 1
            i = j + 1
        else:
            i += 1
    if start < n:
        sentences.append(text[start:])
    return sentences


def window_passages(
    sentences: Sequence[str],
    window: int = DEFAULT_WINDOW,
    stride: int = DEFAULT_STRIDE,
    page_id: str = "",
) -> list[Passage]:
    """Group sentences into sliding windows of `window` sentences.

    Windows start at 0, stride, 2*stride, ... while start + window stays
    within the sentence list. A page shorter than one window yields a
    single passage holding every sentence.
    """
    if window < 1 or stride < 1:
        raise ValueError("window and stride must be >= 1")
    sentences = [s for s in sentences if s]
    if not sentences:
        return []
    n = len(sentences)
    if n < window:
        return [Passage(passage_id_for(page_id, 0), page_id, 0, tuple(sentences))]
    out = []
    for start in range(0, n - window + 1, stride):
        out.append(
            Passage(
                passage_id_for(page_id, start),
                page_id,
                start,
                tuple(sentences[start : start + window]),
            )
        )
    return out


def page_passages(
    page: Page,
    window: int = DEFAULT_WINDOW,
    stride: int = DEFAULT_STRIDE,
    abbreviations: frozenset[str] | set[str] = DEFAULT_ABBREVIATIONS,
) -> list[Passage]:
    """All passages of a page, in window order."""
    sentences = split_sentences(page.text, abbreviations)
    return window_passages(sentences, window, stride, page_id=page.page_id)


def sample_passage(
    page: Page,
    seed: int,
    window: int = DEFAULT_WINDOW,
    stride: int = DEFAULT_STRIDE,
) -> Passage:
    """Pick one window of the page uniformly at random, deterministically per seed."""
    candidates = page_passages(page, window, stride)
    if not candidates:
        raise EmptyPageError(f"page {page.page_id!r} yields no passages")
    rng = random.Random(f"{page.page_id}\x1f{seed}")
    return candidates[rng.randrange(len(candidates))]


# --- page and passage file I/O -------------------------------------------------


def _page_from_row(row: dict) -> Page:
    rank = row.get("popularity_rank")
    return Page(
        page_id=str(row["page_id"]),
        title=str(row.get("title", "")),
        text=str(row["text"]),
        popularity_rank=int(rank) if rank is not None else None,
    )


def read_pages(path: str | Path) -> list[Page]:
    """Load pages from a record file or a directory of single-record files.

    Records with empty text are skipped with a warning; duplicate page ids
    are an error.
    """
    import json

    path = Path(path)
    rows: list[dict] = []
    if path.is_dir():
        for child in sorted(path.iterdir()):
            if child.suffix == ".json":
                rows.append(json.loads(child.read_text(encoding="utf-8")))
            elif child.suffix in (".jsonl", ".ndjson"):
                rows.extend(iter_jsonl(child))
    else:
        rows.extend(iter_jsonl(path))

    pages: list[Page] = []
    seen: set[str] = set()
    for row in rows:
        if "schema" in row and "page_id" not in row:
            continue
        try:
            page = _page_from_row(row)
        except ValueError as exc:
            log.warning("skipping unusable page record: %s", exc)
            continue
        if page.page_id in seen:
            raise DuplicatePageId(f"duplicate page_id {page.page_id!r}")
        seen.add(page.page_id)
        pages.append(page)
    return pages


def write_passages(path: str | Path, passages: Iterable[Passage]) -> int:
    return write_jsonl(path, (p.to_row() for p in passages))


def read_passages(path: str | Path) -> list[Passage]:
    return [Passage.from_row(row) for row in iter_jsonl(path) if "passage_id" in row]
