"""Claim-level fact verification.

A text is verified by extracting its claims, retrieving evidence passages
for each claim, classifying each (passage, claim) pair with a three-way
NLI model, and aggregating: scanning passages in rank order, the first
entailment accepts the claim, the first contradiction rejects it, and a
claim with only neutral evidence is accepted. A text is factual exactly
when every claim is accepted.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Protocol, Sequence

from .errors import UnverifiableText

DEFAULT_TOP_K = 30


class NliLabel(enum.Enum):
    ENTAILMENT = "ENT"
    NEUTRAL = "NEUT"
    CONTRADICTION = "CONTR"


@dataclass(frozen=True)
class NliDistribution:
    """Probabilities over the three NLI labels. Must sum to 1 within 1e-6."""

    p_ent: float
    p_neut: float
    p_contr: float

    def __post_init__(self) -> None:
        for name, p in (("p_ent", self.p_ent), ("p_neut", self.p_neut), ("p_contr", self.p_contr)):
            if not math.isfinite(p) or not 0.0 <= p <= 1.0:
                raise ValueError(f"{name}={p!r} outside [0, 1]")
        total = self.p_ent + self.p_neut + self.p_contr
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"probabilities sum to {total!r}, not 1")

    @property
    def top_label(self) -> NliLabel:
        """Argmax label; exact ties resolve entailment, then contradiction, then neutral."""
        best_label, best_p = NliLabel.ENTAILMENT, self.p_ent
        if self.p_contr > best_p:
            best_label, best_p = NliLabel.CONTRADICTION, self.p_contr
        if self.p_neut > best_p:
            best_label = NliLabel.NEUTRAL
        return best_label


class NliBackend(Protocol):
    def classify(self, premise: str, hypothesis: str) -> NliDistribution: ...


class ClaimExtractorBackend(Protocol):
    def extract_claims(self, text: str) -> list[str]: ...


def classify(nli: NliBackend, premise: str, hypothesis: str) -> NliLabel:
    """Three-way classification of one premise/hypothesis pair."""
    if not premise.strip() or not hypothesis.strip():
        raise ValueError("premise and hypothesis must be non-empty")
    return nli.classify(premise, hypothesis).top_label


@dataclass(frozen=True)
class ClaimTrace:
    """How one claim was decided."""

    claim: str
    decision: bool
    deciding_passage_id: str | None
    rank_examined: int


@dataclass(frozen=True)
class Verdict:
    factual: bool
    claim_traces: tuple[ClaimTrace, ...]


def verify_claim(
    claim: str,
    ranked_passages: Sequence[tuple[str, float]] | Iterable[tuple[str, float]],
    nli: NliBackend,
    text_lookup: Callable[[str], str] | Mapping[str, str] | None = None,
) -> ClaimTrace:
    """Scan evidence passages in rank order and decide the claim.

    The first entailing passage accepts the claim and the first
    contradicting one rejects it; when every passage is neutral (or there
    is no evidence at all) the claim is accepted with no deciding passage.

    `ranked_passages` yields (passage_id, score) pairs best-first;
    `text_lookup` maps a passage id to the premise text (defaults to using
    the id itself, which suits mocks keyed on ids).
    """
    if text_lookup is None:
        resolve: Callable[[str], str] = lambda pid: pid
    elif callable(text_lookup):
        resolve = text_lookup
    else:
        resolve = text_lookup.__getitem__

    examined = 0
    for passage_id, _score in ranked_passages:
        examined += 1
        label = classify(nli, resolve(passage_id), claim)
        if label is NliLabel.ENTAILMENT:
            return ClaimTrace(claim, True, passage_id, examined)
        if label is NliLabel.CONTRADICTION:
            return ClaimTrace(claim, False, passage_id, examined)
    return ClaimTrace(claim, True, None, examined)


def verify_text(
    text: str,
    extractor: ClaimExtractorBackend,
    index,
    embedder,
    nli: NliBackend,
    k: int = DEFAULT_TOP_K,
) -> Verdict:
    """Full pipeline verdict for one text.

    Raises UnverifiableText when claim extraction yields nothing.
    """
    claims = extractor.extract_claims(text)
    if not claims:
        raise UnverifiableText("claim extraction produced zero claims")
    traces = []
    for claim in claims:
        vec = embedder.embed([claim])[0]
        ranked = index.top_k(vec, k)
        traces.append(verify_claim(claim, ranked.hits, nli, index.text_of))
    return Verdict(factual=all(t.decision for t in traces), claim_traces=tuple(traces))


# --- claim extractors -----------------------------------------------------------

CLAIM_EXTRACTION_INSTRUCTIONS = (
    "Step 1 - Claim extraction: From the input passage, extract a comprehensive "
    "set of claims. These claims must be atomic, i.e. semantically-coherent pieces "
    "of text that do not require further subdivision, and self-contained, i.e. not "
    "requiring additional context to be verified. Note that each claim must be "
    "short, using 15 words at most. Do not use \"...\" to truncate them. The "
    "ordering of the extracted claims must follow the logical flow expressed in "
    "the original text. Use a noun as the subject in the claim (avoid pronouns). "
    "All the claims that are featured in the input text must be reported in the list."
)

_EXTRACTION_OUTPUT_FORMAT = (
    "Output format: Return the output in a JSON with the following format: "
    "{ 'step_1': List[str]}. The output must be a valid JSON, thus try to avoid "
    "special characters like ' and \" inside the JSON values, unless you escape "
    "them with a \\. Please do not provide any preamble to your response, just "
    "give me the JSON."
)


def build_claim_extraction_prompt(text: str) -> str:
    return (
        f"Input: {text}\n\n"
        "Instructions: Execute the following step:\n\n"
        f"{CLAIM_EXTRACTION_INSTRUCTIONS}\n\n"
        f"{_EXTRACTION_OUTPUT_FORMAT}"
    )


class ChatClaimExtractor:
    """Extract claims by asking a chat backend with the claim-extraction step."""

    def __init__(self, chat_backend):
        self._chat = chat_backend

    def extract_claims(self, text: str) -> list[str]:
        from .synthgen import extract_first_object

        raw = self._chat.complete(
            [{"role": "user", "content": build_claim_extraction_prompt(text)}]
        )
        obj = extract_first_object(raw)
        claims = obj.get("step_1")
        if not isinstance(claims, list) or not all(isinstance(c, str) for c in claims):
            return []
        return [c for c in (c.strip() for c in claims) if c]


class ScriptedClaimExtractor:
    """Deterministic extractor backed by an explicit text-to-claims table."""

    def __init__(self, table: Mapping[str, Sequence[str]]):
        self._table = {k: list(v) for k, v in table.items()}

    def extract_claims(self, text: str) -> list[str]:
        return list(self._table.get(text, []))
