"""Pluggable classifiers over the retrieval pipeline.

Two kinds ship:

* ``knn_vote`` — deterministic reference classifier. The unsafe probability
  is the share of inverse-distance weight held by the unsafe references:
  ``sum(1/(d_u + eps)) / sum(1/(d + eps))``. It follows the library by
  construction: flipping every label maps a score s to 1 - s.
* ``external_endpoint`` — HTTP adapter for a real model. Request
  ``{"prompt": rendered}``, reply ``{"first_token": "safe"|"unsafe",
  "unsafe_probability": number}``; this is the seam where a fine-tuned LLM
  plugs in. A mock app implementing the contract ships for integration
  tests.
"""

import json
import threading
from dataclasses import dataclass, field, replace

from .embedding import embed, is_zero_vector
from .errors import ConfigurationError, InvalidQueryError, ProtocolError, UpstreamError
from .prompts import EnrichedPrompt, build_eval_prompt
from .store import LibrarySnapshot, RetrievalResult, SafetyLabel

DEFAULT_EPSILON = 1e-6
DEFAULT_THRESHOLD = 0.5


@dataclass(frozen=True)
class ClassifierSpec:
    classifier_id: str = "knn-vote"
    kind: str = "knn_vote"  # or "external_endpoint"
    epsilon: float = DEFAULT_EPSILON
    k_safe: int = 2
    k_unsafe: int = 2
    threshold: float = DEFAULT_THRESHOLD
    url: str | None = None
    timeout: float = 10.0
    max_in_flight: int = 8

    def __post_init__(self):
        if self.kind not in ("knn_vote", "external_endpoint"):
            raise ConfigurationError(f"unknown classifier kind {self.kind!r}")
        if self.kind == "external_endpoint" and not self.url:
            raise ConfigurationError("external_endpoint classifier needs a url")
        if self.epsilon <= 0:
            raise ConfigurationError("epsilon must be positive")

    def with_reference_counts(self, k_safe: int, k_unsafe: int) -> "ClassifierSpec":
        return replace(self, k_safe=k_safe, k_unsafe=k_unsafe)

    def to_json(self) -> dict:
        return {
            "classifier_id": self.classifier_id,
            "kind": self.kind,
            "epsilon": self.epsilon,
            "k_safe": self.k_safe,
            "k_unsafe": self.k_unsafe,
            "threshold": self.threshold,
            "url": self.url,
            "timeout": self.timeout,
        }


@dataclass(frozen=True)
class ClassificationOutput:
    label: SafetyLabel
    unsafe_probability: float
    citations: tuple[str, ...]  # retrieved entry ids that informed the score
    classifier_id: str
    library_version: int
    shortfall: bool = False  # fewer references than requested were available

    def to_json(self) -> dict:
        return {
            "label": self.label.value,
            "unsafe_probability": self.unsafe_probability,
            "citations": list(self.citations),
            "classifier_id": self.classifier_id,
            "library_version": self.library_version,
            "shortfall": self.shortfall,
        }


@dataclass(frozen=True)
class ClassifyDetail:
    output: ClassificationOutput
    safe_results: tuple[RetrievalResult, ...]
    unsafe_results: tuple[RetrievalResult, ...]
    enriched: EnrichedPrompt


def knn_vote_score(
    safe_results: list[RetrievalResult],
    unsafe_results: list[RetrievalResult],
    epsilon: float = DEFAULT_EPSILON,
) -> float:
    """Inverse-distance-weighted unsafe share; 0.5 when no references exist."""
    w_safe = sum(1.0 / (r.distance + epsilon) for r in safe_results)
    w_unsafe = sum(1.0 / (r.distance + epsilon) for r in unsafe_results)
    total = w_safe + w_unsafe
    if total == 0.0:
        return 0.5
    return w_unsafe / total


class ExternalEndpoint:
    """HTTP client for the external classifier contract.

    Enforces a per-request timeout and an in-flight request cap; otherwise
    stateless and safe to share between threads.
    """

    def __init__(self, spec: ClassifierSpec):
        self.spec = spec
        self._gate = threading.BoundedSemaphore(spec.max_in_flight)

    def classify(self, rendered_prompt: str) -> tuple[str, float]:
        import httpx

        with self._gate:
            try:
                reply = httpx.post(
                    self.spec.url,
                    json={"prompt": rendered_prompt},
                    timeout=self.spec.timeout,
                )
            except httpx.HTTPError as exc:
                raise UpstreamError(f"external classifier call failed: {exc}") from exc
        if reply.status_code != 200:
            raise UpstreamError(
                f"external classifier returned HTTP {reply.status_code}",
                payload=reply.text,
            )
        return parse_external_reply(reply.text)


def parse_external_reply(raw: str) -> tuple[str, float]:
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise UpstreamError(f"external reply is not JSON: {exc}", payload=raw) from exc
    token = obj.get("first_token")
    prob = obj.get("unsafe_probability")
    if token not in ("safe", "unsafe"):
        raise ProtocolError(f"reply first_token {token!r} is not 'safe' or 'unsafe'")
    if not isinstance(prob, (int, float)) or not 0.0 <= float(prob) <= 1.0:
        raise ProtocolError(f"reply unsafe_probability {prob!r} is not in [0, 1]")
    return token, float(prob)


def external_classify(rendered_prompt: str, spec: ClassifierSpec) -> tuple[str, float]:
    return ExternalEndpoint(spec).classify(rendered_prompt)


def classify_detailed(
    input_text: str,
    snapshot: LibrarySnapshot,
    spec: ClassifierSpec,
    endpoint: ExternalEndpoint | None = None,
) -> ClassifyDetail:
    """Full pipeline: embed, retrieve, build the enriched prompt, score."""
    if len(snapshot) == 0:
        raise InvalidQueryError("library snapshot is empty")
    query = embed(input_text, snapshot.manifest.embedder)
    if is_zero_vector(query):
        raise InvalidQueryError("input embeds to the zero vector; nothing to retrieve against")
    safe_results, unsafe_results = snapshot.retrieve(
        query, k_safe=spec.k_safe, k_unsafe=spec.k_unsafe
    )
    shortfall = len(safe_results) < spec.k_safe or len(unsafe_results) < spec.k_unsafe
    enriched = build_eval_prompt(input_text, safe_results, unsafe_results)

    if spec.kind == "knn_vote":
        score = knn_vote_score(safe_results, unsafe_results, epsilon=spec.epsilon)
    else:
        client = endpoint or ExternalEndpoint(spec)
        _, score = client.classify(enriched.rendered)

    label = SafetyLabel.UNSAFE if score >= spec.threshold else SafetyLabel.SAFE
    output = ClassificationOutput(
        label=label,
        unsafe_probability=score,
        citations=tuple(r.entry.id for r in safe_results + unsafe_results),
        classifier_id=spec.classifier_id,
        library_version=snapshot.version,
        shortfall=shortfall,
    )
    return ClassifyDetail(
        output=output,
        safe_results=tuple(safe_results),
        unsafe_results=tuple(unsafe_results),
        enriched=enriched,
    )


def classify(
    input_text: str,
    snapshot: LibrarySnapshot,
    spec: ClassifierSpec,
    endpoint: ExternalEndpoint | None = None,
) -> ClassificationOutput:
    return classify_detailed(input_text, snapshot, spec, endpoint=endpoint).output


def build_mock_classifier_app(score_fn=None):
    """FastAPI app implementing the external wire contract, for tests.

    The default scorer flags prompts whose INPUT block contains the token
    "forbidden"; pass ``score_fn(rendered_prompt) -> float`` to override.
    """
    from fastapi import FastAPI
    from pydantic import BaseModel

    class Request(BaseModel):
        prompt: str

    if score_fn is None:

        def score_fn(prompt: str) -> float:
            return 0.93 if "forbidden" in prompt else 0.07

    app = FastAPI(title="mock external classifier")

    @app.post("/classify")
    def classify_endpoint(req: Request):
        p = float(score_fn(req.prompt))
        return {"first_token": "unsafe" if p >= 0.5 else "safe", "unsafe_probability": p}

    return app
