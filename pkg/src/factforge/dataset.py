"""Training data and benchmark instances derived from synthesis records.

From one record with n claims:
  * retriever pairs: every claim, plus the falsified claim, each paired
    with the source passage, the factual paraphrase, and the unfactual
    twin, giving 3 * (n + 1) pairs;
  * NLI triplets: each claim entailed by the source passage and by the
    paraphrase; the falsified claim contradicted by both and entailed by
    the unfactual twin; the original claim contradicted by the unfactual
    twin; optionally one mined neutral passage per claim. That is 3n + 4
    triplets with neutrals, 2n + 4 without (ENT 2n+1, CONTR 3, NEUT n);
  * task instances: the end-to-end task labels whole texts (paraphrase
    true, twin false), the claim-verification task labels the original and
    falsified claims against the paraphrase as evidence.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Any, Iterable, Mapping, Sequence

from .corpus import Passage
from .errors import NoCandidatePassages, NotEnoughRecords
from .synthgen import ResourceRecord
from .verification import NliBackend, NliLabel

SPLIT_RATIO = 0.8

# Pairing kinds for retriever training pairs.
PAIR_CLAIM_SOURCE = "claim-source"
PAIR_CLAIM_FACTUAL = "claim-factual"
PAIR_CLAIM_UNFACTUAL = "claim-unfactual"
PAIR_FALSIFIED_SOURCE = "falsified-source"
PAIR_FALSIFIED_FACTUAL = "falsified-factual"
PAIR_FALSIFIED_UNFACTUAL = "falsified-unfactual"

ORIGIN_FACTUAL = "factual"
ORIGIN_UNFACTUAL = "unfactual"


@dataclass(frozen=True)
class RetrieverPair:
    claim: str
    passage_text: str
    record_id: str
    pairing_kind: str

    def to_row(self) -> dict[str, Any]:
        return {
            "claim": self.claim,
            "passage_text": self.passage_text,
            "record_id": self.record_id,
            "pairing_kind": self.pairing_kind,
        }


@dataclass(frozen=True)
class NliTriplet:
    premise: str
    hypothesis: str
    label: NliLabel

    def to_row(self) -> dict[str, Any]:
        return {
            "premise": self.premise,
            "hypothesis": self.hypothesis,
            "label": self.label.value,
        }


@dataclass(frozen=True)
class Task1Instance:
    """End-to-end factuality: is this whole text factual?"""

    text: str
    label: bool
    origin: str  # "factual" or "unfactual"
    record_id: str

    def to_row(self) -> dict[str, Any]:
        return {
            "text": self.text,
            "label": self.label,
            "origin": self.origin,
            "record_id": self.record_id,
        }

    @classmethod
    def from_row(cls, row: Mapping[str, Any]) -> "Task1Instance":
        return cls(row["text"], bool(row["label"]), row["origin"], row["record_id"])


@dataclass(frozen=True)
class Task2Instance:
    """Claim verification: is this claim true given the evidence text?"""

    claim: str
    evidence: str
    label: bool
    record_id: str

    def to_row(self) -> dict[str, Any]:
        return {
            "claim": self.claim,
            "evidence": self.evidence,
            "label": self.label,
            "record_id": self.record_id,
        }

    @classmethod
    def from_row(cls, row: Mapping[str, Any]) -> "Task2Instance":
        return cls(row["claim"], row["evidence"], bool(row["label"]), row["record_id"])


def _require_valid(record: ResourceRecord) -> None:
    if record.validation.hard_failures:
        raise ValueError(
            f"record {record.record_id!r} has hard validation failures: "
            f"{list(record.validation.hard_failures)}"
        )


def split_train_val(
    records: Sequence[ResourceRecord],
    ratio: float = SPLIT_RATIO,
    seed: int = 0,
) -> tuple[list[ResourceRecord], list[ResourceRecord]]:
    """Partition records (and therefore everything derived from them).

    The shuffle is keyed on record ids, so the partition does not depend
    on input order. Both sides are always non-empty.
    """
    if len(records) < 2:
        raise NotEnoughRecords("need at least 2 records to split")
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must be strictly between 0 and 1")
    ordered = sorted(records, key=lambda r: r.record_id)
    random.Random(seed).shuffle(ordered)
    n_train = min(max(int(len(ordered) * ratio), 1), len(ordered) - 1)
    return ordered[:n_train], ordered[n_train:]


def derive_retriever_pairs(record: ResourceRecord) -> list[RetrieverPair]:
    """3 * (n + 1) query/passage pairs for retriever training."""
    _require_valid(record)
    out = record.outputs
    source = record.passage.text
    targets = (
        (source, PAIR_CLAIM_SOURCE, PAIR_FALSIFIED_SOURCE),
        (out.factual_text, PAIR_CLAIM_FACTUAL, PAIR_FALSIFIED_FACTUAL),
        (out.unfactual_text, PAIR_CLAIM_UNFACTUAL, PAIR_FALSIFIED_UNFACTUAL),
    )
    pairs = []
    for claim in out.claims:
        for text, claim_kind, _ in targets:
            pairs.append(RetrieverPair(claim, text, record.record_id, claim_kind))
    for text, _, falsified_kind in targets:
        pairs.append(RetrieverPair(out.altered, text, record.record_id, falsified_kind))
    return pairs


def derive_nli_triplets(
    record: ResourceRecord,
    neutrals: Sequence[str] | None = None,
) -> list[NliTriplet]:
    """Premise/hypothesis/label triplets for NLI training.

    `neutrals`, when given, must hold one mined neutral passage text per
    claim (aligned by position).
    """
    _require_valid(record)
    out = record.outputs
    source = record.passage.text
    if neutrals is not None and len(neutrals) != len(out.claims):
        raise ValueError(
            f"expected {len(out.claims)} neutral passages, got {len(neutrals)}"
        )
    triplets = []
    for claim in out.claims:
        triplets.append(NliTriplet(source, claim, NliLabel.ENTAILMENT))
        triplets.append(NliTriplet(out.factual_text, claim, NliLabel.ENTAILMENT))
    triplets.append(NliTriplet(source, out.altered, NliLabel.CONTRADICTION))
    triplets.append(NliTriplet(out.factual_text, out.altered, NliLabel.CONTRADICTION))
    triplets.append(NliTriplet(out.unfactual_text, out.altered, NliLabel.ENTAILMENT))
    triplets.append(NliTriplet(out.unfactual_text, out.original, NliLabel.CONTRADICTION))
    if neutrals is not None:
        for claim, neutral_text in zip(out.claims, neutrals):
            triplets.append(NliTriplet(neutral_text, claim, NliLabel.NEUTRAL))
    return triplets


def mine_neutral_passage(
    claim: str,
    candidate_passages: Sequence[Passage],
    nli: NliBackend,
) -> Passage:
    """Pick the candidate the NLI model finds most neutral for the claim.

    Ties break toward the lexicographically smallest passage id. The
    caller chooses the candidate pool; passing the passage the claim came
    from would defeat the purpose.
    """
    if not candidate_passages:
        raise NoCandidatePassages("neutral mining needs at least one candidate")
    best: Passage | None = None
    best_score = -1.0
    for passage in candidate_passages:
        score = nli.classify(passage.text, claim).p_neut
        if score > best_score or (
            score == best_score and best is not None and passage.passage_id < best.passage_id
        ):
            best, best_score = passage, score
    assert best is not None
    return best


def build_task1(records: Iterable[ResourceRecord]) -> list[Task1Instance]:
    """One true and one false instance per valid record; invalid records
    contribute nothing, and the source passage text is never emitted."""
    instances = []
    for record in records:
        if record.validation.hard_failures:
            continue
        out = record.outputs
        instances.append(
            Task1Instance(out.factual_text, True, ORIGIN_FACTUAL, record.record_id)
        )
        instances.append(
            Task1Instance(out.unfactual_text, False, ORIGIN_UNFACTUAL, record.record_id)
        )
    return instances


def build_task2(records: Iterable[ResourceRecord]) -> list[Task2Instance]:
    """The original claim (true) and the falsified claim (false), each with
    the record's factual paraphrase as the evidence text."""
    instances = []
    for record in records:
        if record.validation.hard_failures:
            continue
        out = record.outputs
        instances.append(
            Task2Instance(out.original, out.factual_text, True, record.record_id)
        )
        instances.append(
            Task2Instance(out.altered, out.factual_text, False, record.record_id)
        )
    return instances
