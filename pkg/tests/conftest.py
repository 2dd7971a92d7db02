"""Shared fixtures: the rainforest worked example, synthetic record sets,
and mock backend factories."""

from __future__ import annotations

import json
from pathlib import Path

import pytest
from hypothesis import settings

from factforge.backends import (
    BackendProfile,
    HashedBowEmbedder,
    RuleNliBackend,
    ScriptedChatBackend,
    chat_fingerprint,
)
from factforge.corpus import Page, Passage
from factforge.synthgen import (
    ResourceRecord,
    StepOutputs,
    build_unified_prompt,
    generate_record,
    validate_record,
)

settings.register_profile("suite", max_examples=100, deadline=None)
settings.load_profile("suite")

GOLDEN_DIR = Path(__file__).parent / "golden"


def golden(name: str) -> str:
    return (GOLDEN_DIR / name).read_text(encoding="utf-8").rstrip("\n")


# --- rainforest worked example ----------------------------------------------------

AMAZON_PASSAGE_TEXT = (
    "The Amazon Rainforest, also known as Amazonia, is a moist broadleaf forest "
    "in the Amazon biome that covers most of the Amazon basin of South America. "
    "This region includes territory belonging to nine nations, with Brazil "
    "containing 60% of the rainforest."
)

AMAZON_CLAIMS = (
    "The Amazon Rainforest is also known as Amazonia.",
    "It is a moist broadleaf forest in the Amazon biome.",
    "The Amazon Rainforest covers most of the Amazon basin of South America.",
    "The region includes territory belonging to nine nations.",
    "Brazil contains 60% of the rainforest.",
)

AMAZON_ORIGINAL = "Brazil contains 60% of the rainforest."
AMAZON_ALTERED = "The majority of the forest is contained within Peru."

AMAZON_FACTUAL = (
    "Amazonia, widely known as the Amazon Rainforest, is a damp broadleaf forest "
    "located within the Amazon biome, covering a significant portion of the Amazon "
    "basin in South America. This vast region spans across nine countries, with "
    "Brazil housing 60% of the rainforest."
)

AMAZON_UNFACTUAL = (
    "Amazonia, widely known as the Amazon Rainforest, is a damp broadleaf forest "
    "located within the Amazon biome, covering a significant portion of the Amazon "
    "basin in South America. This vast region spans across nine countries, and the "
    "majority of the forest is contained within Peru."
)


def amazon_passage() -> Passage:
    return Passage(
        passage_id="amazon:0",
        page_id="amazon",
        start=0,
        sentences=(
            "The Amazon Rainforest, also known as Amazonia, is a moist broadleaf "
            "forest in the Amazon biome that covers most of the Amazon basin of "
            "South America.",
            "This region includes territory belonging to nine nations, with Brazil "
            "containing 60% of the rainforest.",
        ),
    )


def amazon_step_json() -> str:
    return json.dumps({
        "step_1": list(AMAZON_CLAIMS),
        "step_2": [AMAZON_ALTERED, AMAZON_ORIGINAL],
        "step_3": AMAZON_FACTUAL,
        "step_4": AMAZON_UNFACTUAL,
    })


def mock_chat_profile(name: str = "chat-mock") -> BackendProfile:
    return BackendProfile(name=name, kind="chat", transport="mock")


def scripted_chat_for(passage: Passage, responses: list[str]) -> ScriptedChatBackend:
    """A scripted chat mock that answers the unified prompt for `passage`
    with `responses`, in order."""
    profile = mock_chat_profile()
    messages = [{"role": "user", "content": build_unified_prompt(passage)}]
    fp = chat_fingerprint(profile, messages)
    return ScriptedChatBackend(profile, [(fp, r) for r in responses])


@pytest.fixture
def amazon_record() -> ResourceRecord:
    passage = amazon_passage()
    chat = scripted_chat_for(passage, [amazon_step_json()])
    return generate_record(passage, chat, max_retries=0)


# --- synthetic end-to-end fixture ---------------------------------------------------

N_SYNTH = 20
CLAIMS_PER_RECORD = 3


def synth_passage(i: int) -> Passage:
    sentences = tuple(
        f"Entity{i} fact{i}x{j} detail{i}x{j} value{i}x{j}." for j in range(CLAIMS_PER_RECORD)
    )
    return Passage(
        passage_id=f"page{i}:0", page_id=f"page{i}", start=0, sentences=sentences
    )


def synth_record(i: int) -> ResourceRecord:
    """A fully synthetic record whose claims are literal sentences of its passage.

    The falsified claim replaces the marker token value{i}x0 with wrong{i}x0,
    so a rule NLI mock configured with those pairs sees a contradiction.
    """
    passage = synth_passage(i)
    claims = tuple(s for s in passage.sentences)
    original = claims[0]
    altered = original.replace(f"value{i}x0", f"wrong{i}x0")
    factual = " ".join(f"Entity{i} fact{i}x{j} value{i}x{j} restated." for j in range(CLAIMS_PER_RECORD))
    unfactual = factual.replace(f"value{i}x0", f"wrong{i}x0")
    outputs = StepOutputs(
        claims=claims,
        altered=altered,
        original=original,
        factual_text=factual,
        unfactual_text=unfactual,
    )
    report = validate_record(passage, outputs)
    assert not report.hard_failures
    return ResourceRecord(
        record_id=passage.passage_id,
        passage=passage,
        outputs=outputs,
        validation=report,
        retries=0,
    )


def synth_records(n: int = N_SYNTH) -> list[ResourceRecord]:
    return [synth_record(i) for i in range(n)]


def synth_contradiction_pairs(n: int = N_SYNTH) -> list[list[str]]:
    """Contradiction lexicon calibrated to the synthetic records."""
    return [[f"value{i}x0", f"wrong{i}x0"] for i in range(n)]


def synth_nli(n: int = N_SYNTH) -> RuleNliBackend:
    profile = BackendProfile(name="nli-mock", kind="nli", transport="mock")
    return RuleNliBackend(profile, synth_contradiction_pairs(n))


def synth_embedder(dimension: int = 256) -> HashedBowEmbedder:
    profile = BackendProfile(name="embed-mock", kind="embedding", transport="mock")
    return HashedBowEmbedder(profile, dimension=dimension)


def page_rows(n: int = 8, sentences_per_page: int = 7) -> list[dict]:
    """Raw page records whose sentences split cleanly with the default rules."""
    rows = []
    for i in range(n):
        text = " ".join(
            f"Topic{i} item{i}x{j} attribute{i}x{j} measure{i}x{j}."
            for j in range(sentences_per_page)
        )
        rows.append({"page_id": f"page{i}", "title": f"Topic {i}", "text": text})
    return rows
