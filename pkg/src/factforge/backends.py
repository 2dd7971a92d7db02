"""Model inference backends: chat completion, text embedding, and NLI scoring.

Every call is identified by a fingerprint (hash of the canonicalized
request), which keys scripted mock replay and is attached to backend
errors. HTTP transports speak the common chat-completions / embeddings
wire shapes and retry transient failures with exponential backoff.
Deterministic mocks make the whole pipeline runnable offline.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    AuthFailure,
    BackendError,
    BackendTimeout,
    InvalidDistribution,
    MalformedResponse,
    RateLimited,
    ScriptExhausted,
)
from .jsonlio import iter_jsonl
from .textnorm import normalize_ws, tokenize
from .verification import NliDistribution

log = logging.getLogger(__name__)

MAX_RETRIES = 3

KIND_CHAT = "chat"
KIND_EMBEDDING = "embedding"
KIND_NLI = "nli"


@dataclass(frozen=True)
class BackendProfile:
    """Connection and behavior settings for one backend.

    `auth_env` names an environment variable holding the API key; keys are
    never stored in config. Mock transports read their settings from
    `options`.
    """

    name: str
    kind: str
    transport: str = "http"  # "http" or "mock"
    endpoint: str = ""
    model: str = ""
    auth_env: str | None = None
    timeout: float = 30.0
    max_in_flight: int = 4
    temperature: float = 0.0
    retry_backoff: float = 0.5
    options: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in (KIND_CHAT, KIND_EMBEDDING, KIND_NLI):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.transport not in ("http", "mock"):
            raise ValueError(f"unknown transport {self.transport!r}")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")

    @classmethod
    def from_dict(cls, name: str, row: Mapping[str, Any]) -> "BackendProfile":
        known = {
            "kind", "transport", "endpoint", "model", "auth_env", "timeout",
            "max_in_flight", "temperature", "retry_backoff", "options",
        }
        unknown = set(row) - known
        if unknown:
            raise ValueError(f"profile {name!r} has unknown keys {sorted(unknown)}")
        return cls(name=name, **dict(row))


def load_profiles(path: str | Path) -> dict[str, BackendProfile]:
    """Read a JSON config file mapping profile names to profile settings."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    table = raw.get("profiles", raw) if isinstance(raw, dict) else None
    if not isinstance(table, dict):
        raise ValueError("config must be a JSON object with a 'profiles' table")
    return {name: BackendProfile.from_dict(name, row) for name, row in table.items()}


def request_fingerprint(payload: Mapping[str, Any]) -> str:
    """Stable 16-hex-digit hash of a canonicalized request payload."""
    canon = json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


def chat_fingerprint(profile: BackendProfile, messages: Sequence[Mapping[str, str]]) -> str:
    return request_fingerprint({
        "kind": KIND_CHAT,
        "model": profile.model,
        "temperature": profile.temperature,
        "messages": list(messages),
    })


def embedding_fingerprint(profile: BackendProfile, texts: Sequence[str]) -> str:
    return request_fingerprint({
        "kind": KIND_EMBEDDING,
        "model": profile.model,
        "texts": list(texts),
    })


def nli_fingerprint(profile: BackendProfile, premise: str, hypothesis: str) -> str:
    return request_fingerprint({
        "kind": KIND_NLI,
        "model": profile.model,
        "premise": premise,
        "hypothesis": hypothesis,
    })


class _Gated:
    """Shared concurrency gate: at most max_in_flight calls run at once."""

    def __init__(self, profile: BackendProfile):
        self.profile = profile
        self._gate = threading.BoundedSemaphore(profile.max_in_flight)

    @contextmanager
    def _slot(self):
        with self._gate:
            yield


# --- HTTP transport --------------------------------------------------------


class _HttpBase(_Gated):
    def _headers(self) -> dict[str, str]:
        import os

        headers = {"Content-Type": "application/json"}
        if self.profile.auth_env:
            key = os.environ.get(self.profile.auth_env)
            if not key:
                raise AuthFailure(
                    f"environment variable {self.profile.auth_env!r} is not set"
                )
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _post(self, path: str, payload: Mapping[str, Any], fingerprint: str) -> Any:
        """POST with up to MAX_RETRIES retries on transient failures."""
        import requests

        url = self.profile.endpoint.rstrip("/") + path
        headers = self._headers()
        last: BackendError | None = None
        for attempt in range(MAX_RETRIES + 1):
            if attempt:
                time.sleep(self.profile.retry_backoff * 2 ** (attempt - 1))
                log.warning(
                    "retrying %s (attempt %d/%d, fingerprint %s)",
                    url, attempt + 1, MAX_RETRIES + 1, fingerprint,
                )
            try:
                resp = requests.post(
                    url, json=payload, headers=headers, timeout=self.profile.timeout
                )
            except (requests.Timeout, requests.ConnectionError) as exc:
                last = BackendTimeout(f"{url}: {exc}", fingerprint)
                continue
            if resp.status_code in (401, 403):
                raise AuthFailure(f"{url}: HTTP {resp.status_code}", fingerprint)
            if resp.status_code == 429:
                last = RateLimited(f"{url}: HTTP 429", fingerprint)
                continue
            if resp.status_code >= 500:
                last = BackendTimeout(f"{url}: HTTP {resp.status_code}", fingerprint)
                continue
            if resp.status_code != 200:
                raise MalformedResponse(f"{url}: HTTP {resp.status_code}", fingerprint)
            try:
                return resp.json()
            except ValueError as exc:
                raise MalformedResponse(f"{url}: invalid JSON body: {exc}", fingerprint)
        assert last is not None
        raise last


class HttpChatBackend(_HttpBase):
    def complete(self, messages: Sequence[Mapping[str, str]]) -> str:
        fp = chat_fingerprint(self.profile, messages)
        payload = {
            "model": self.profile.model,
            "messages": list(messages),
            "temperature": self.profile.temperature,
        }
        with self._slot():
            body = self._post("/chat/completions", payload, fp)
        try:
            content = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise MalformedResponse("chat response missing choices[0].message.content", fp)
        if not isinstance(content, str):
            raise MalformedResponse("chat content is not a string", fp)
        return content


class HttpEmbeddingBackend(_HttpBase):
    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        fp = embedding_fingerprint(self.profile, texts)
        payload = {"model": self.profile.model, "input": list(texts)}
        with self._slot():
            body = self._post("/embeddings", payload, fp)
        try:
            rows = body["data"]
            rows = sorted(rows, key=lambda r: r.get("index", 0))
            vecs = [np.asarray(r["embedding"], dtype=np.float64) for r in rows]
        except (KeyError, TypeError, ValueError):
            raise MalformedResponse("embedding response missing data[].embedding", fp)
        if len(vecs) != len(texts):
            raise MalformedResponse(
                f"asked for {len(texts)} embeddings, got {len(vecs)}", fp
            )
        return vecs


class HttpNliBackend(_HttpBase):
    def classify(self, premise: str, hypothesis: str) -> NliDistribution:
        fp = nli_fingerprint(self.profile, premise, hypothesis)
        payload = {
            "model": self.profile.model,
            "premise": premise,
            "hypothesis": hypothesis,
        }
        with self._slot():
            body = self._post("/nli", payload, fp)
        try:
            dist = NliDistribution(
                p_ent=float(body["entailment"]),
                p_neut=float(body["neutral"]),
                p_contr=float(body["contradiction"]),
            )
        except (KeyError, TypeError) as exc:
            raise MalformedResponse(f"NLI response missing label fields: {exc}", fp)
        except ValueError as exc:
            raise InvalidDistribution(str(exc), fp)
        return dist


# --- mocks -------------------------------------------------------------------


class ScriptedChatBackend(_Gated):
    """Replays responses keyed by request fingerprint, in order, exhaustibly.

    The script is a list of (fingerprint, response) entries; entries that
    share a fingerprint are consumed first-to-last. Asking for a
    fingerprint with no remaining entry raises ScriptExhausted.
    """

    def __init__(self, profile: BackendProfile, entries: Iterable[tuple[str, str]]):
        super().__init__(profile)
        self._queues: dict[str, list[str]] = {}
        for fp, response in entries:
            self._queues.setdefault(fp, []).append(response)
        self._lock = threading.Lock()
        self.call_history: list[str] = []

    @classmethod
    def from_file(cls, profile: BackendProfile, path: str | Path) -> "ScriptedChatBackend":
        entries = [
            (row["fingerprint"], row["response"])
            for row in iter_jsonl(path)
            if "fingerprint" in row
        ]
        return cls(profile, entries)

    def complete(self, messages: Sequence[Mapping[str, str]]) -> str:
        fp = chat_fingerprint(self.profile, messages)
        with self._slot(), self._lock:
            self.call_history.append(fp)
            queue = self._queues.get(fp)
            if not queue:
                raise ScriptExhausted(f"no scripted response left for {fp}", fp)
            return queue.pop(0)


class SequenceChatBackend(_Gated):
    """Returns a fixed list of responses in call order, then raises."""

    def __init__(self, profile: BackendProfile, responses: Sequence[str]):
        super().__init__(profile)
        self._responses = list(responses)
        self._lock = threading.Lock()
        self.call_history: list[str] = []

    def complete(self, messages: Sequence[Mapping[str, str]]) -> str:
        fp = chat_fingerprint(self.profile, messages)
        with self._slot(), self._lock:
            self.call_history.append(fp)
            if not self._responses:
                raise ScriptExhausted("response sequence exhausted", fp)
            return self._responses.pop(0)


class VerdictRuleChatBackend(_Gated):
    """Answers "Not Factual" when any configured marker substring occurs in
    the last user message, else "Factual". Useful as a deterministic
    stand-in for an LLM judge."""

    def __init__(self, profile: BackendProfile, markers: Sequence[str]):
        super().__init__(profile)
        self._markers = [m.lower() for m in markers]

    def complete(self, messages: Sequence[Mapping[str, str]]) -> str:
        with self._slot():
            users = [m["content"] for m in messages if m.get("role") == "user"]
            haystack = users[-1].lower() if users else ""
            if any(marker in haystack for marker in self._markers):
                return "Not Factual"
            return "Factual"


class HashedBowEmbedder(_Gated):
    """Deterministic bag-of-words embedder.

    Each token is hashed (sha256) to a bucket and a sign; token counts
    accumulate and the vector is optionally L2-normalized. Identical texts
    always embed identically.
    """

    def __init__(self, profile: BackendProfile, dimension: int = 64, normalize: bool = True):
        super().__init__(profile)
        if dimension < 1:
            raise ValueError("dimension must be >= 1")
        self.dimension = dimension
        self.normalize = normalize

    def _embed_one(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dimension, dtype=np.float64)
        for token in tokenize(text):
            digest = hashlib.sha256(token.encode("utf-8")).digest()
            bucket = int.from_bytes(digest[:4], "big") % self.dimension
            sign = 1.0 if digest[4] & 1 else -1.0
            vec[bucket] += sign
        if self.normalize:
            norm = np.linalg.norm(vec)
            if norm > 0:
                vec /= norm
        return vec

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        with self._slot():
            return [self._embed_one(t) for t in texts]


class RuleNliBackend(_Gated):
    """Rule-based NLI scorer for offline runs.

    If the hypothesis occurs as a substring of the premise (both
    whitespace-normalized, case-insensitive), the pair is entailment-
    dominant. Otherwise, if a configured contradiction pair matches (one
    term in the premise, the other in the hypothesis, either direction),
    the pair is contradiction-dominant. Everything else is neutral.
    """

    ENT = NliDistribution(0.9, 0.05, 0.05)
    NEUT = NliDistribution(0.05, 0.9, 0.05)
    CONTR = NliDistribution(0.05, 0.05, 0.9)

    def __init__(self, profile: BackendProfile, contradictions: Iterable[Sequence[str]] = ()):
        super().__init__(profile)
        self._pairs = [(a.lower(), b.lower()) for a, b in contradictions]

    def classify(self, premise: str, hypothesis: str) -> NliDistribution:
        with self._slot():
            prem = normalize_ws(premise).lower()
            hyp = normalize_ws(hypothesis).lower()
            if hyp and hyp in prem:
                return self.ENT
            for a, b in self._pairs:
                if (a in prem and b in hyp) or (b in prem and a in hyp):
                    return self.CONTR
            return self.NEUT


# --- factory -----------------------------------------------------------------


def build_backend(profile: BackendProfile, base_dir: str | Path | None = None):
    """Construct the backend object a profile describes.

    `base_dir` anchors relative paths in mock options (e.g. script files).
    """
    if profile.transport == "http":
        if not profile.endpoint:
            raise ValueError(f"profile {profile.name!r} needs an endpoint")
        return {
            KIND_CHAT: HttpChatBackend,
            KIND_EMBEDDING: HttpEmbeddingBackend,
            KIND_NLI: HttpNliBackend,
        }[profile.kind](profile)

    opts = dict(profile.options)
    mock = opts.get("mock", "")
    if profile.kind == KIND_CHAT:
        if mock == "script":
            script = Path(opts["script"])
            if base_dir is not None and not script.is_absolute():
                script = Path(base_dir) / script
            return ScriptedChatBackend.from_file(profile, script)
        if mock == "sequence":
            return SequenceChatBackend(profile, opts.get("responses", []))
        if mock == "verdict_rule":
            return VerdictRuleChatBackend(profile, opts.get("markers", []))
        raise ValueError(f"profile {profile.name!r}: unknown chat mock {mock!r}")
    if profile.kind == KIND_EMBEDDING:
        if mock in ("", "hashed_bow"):
            return HashedBowEmbedder(
                profile,
                dimension=int(opts.get("dimension", 64)),
                normalize=bool(opts.get("normalize", True)),
            )
        raise ValueError(f"profile {profile.name!r}: unknown embedding mock {mock!r}")
    if mock in ("", "rules"):
        return RuleNliBackend(profile, opts.get("contradictions", []))
    raise ValueError(f"profile {profile.name!r}: unknown NLI mock {mock!r}")
