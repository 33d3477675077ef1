"""HTTP service: classification plus live library curation with hot-swap.

Readers (``POST /classify``) always score against one immutable snapshot;
curation endpoints mutate staging and, with ``auto_publish`` (the default),
swap a fresh snapshot in immediately, so a mitigation is live by the time
the mutation call returns. Every mutation is appended to a write-ahead log
before the swap; a restarted service replays the log on top of the library
file to recover the last published state.

Errors use the JSON shape ``{"code": ..., "message": ..., "detail": ...}``.
Mutation endpoints require the static bearer token when one is configured;
classification stays open.
"""

import datetime as _dt
import json
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from fastapi import Depends, FastAPI, Header, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .classifier import ClassifierSpec, classify_detailed
from .embedding import EmbedderSpec, embed, is_zero_vector
from .errors import (
    DimensionMismatchError,
    DuplicateIdError,
    InvalidInputError,
    InvalidQueryError,
    ProtocolError,
    RagmodError,
    UnknownIdError,
    UpstreamError,
)
from .store import (
    LibraryEntry,
    LibraryManifest,
    LibraryStore,
    SafetyLabel,
    load as load_library,
    save as save_library,
)


@dataclass
class ServiceConfig:
    library_path: Path | None = None
    embedder: EmbedderSpec = field(default_factory=EmbedderSpec)
    classifier: ClassifierSpec = field(default_factory=ClassifierSpec)
    auto_publish: bool = True
    token: str | None = None
    host: str = "127.0.0.1"
    port: int = 8700

    @property
    def mutation_log_path(self) -> Path | None:
        if self.library_path is None:
            return None
        p = Path(self.library_path)
        return p.with_name(p.name + ".mutations")


class MutationLog:
    """Append-only JSONL write-ahead log of library mutations."""

    def __init__(self, path: Path | None):
        self.path = path
        self._lock = threading.Lock()
        self.records: list[dict] = []
        if path is not None and path.exists():
            with open(path, "r", encoding="utf-8") as fh:
                self.records = [json.loads(line) for line in fh if line.strip()]

    @property
    def last_seq(self) -> int:
        return self.records[-1]["seq"] if self.records else 0

    def append(self, kind: str, entry_ids: list[str], resulting_version: int | None,
               payload: dict | None = None) -> dict:
        with self._lock:
            record = {
                "seq": self.last_seq + 1,
                "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
                "kind": kind,
                "entry_ids": entry_ids,
                "resulting_version": resulting_version,
            }
            if payload:
                record["payload"] = payload
            if self.path is not None:
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record, ensure_ascii=False) + "\n")
                    fh.flush()
                    os.fsync(fh.fileno())
            self.records.append(record)
            return record

    def since(self, seq: int) -> list[dict]:
        return [r for r in self.records if r["seq"] > seq]


class ModerationService:
    """Service core: one writer over the store, lock-free snapshot readers."""

    def __init__(self, config: ServiceConfig, store: LibraryStore, log: MutationLog):
        self.config = config
        self.store = store
        self.log = log
        self._write_lock = threading.Lock()

    # -- read path ------------------------------------------------------

    def classify(self, prompt: str) -> dict:
        if not prompt or not prompt.strip():
            raise InvalidInputError("prompt must not be empty")
        snapshot = self.store.snapshot  # pin one version for the whole call
        detail = classify_detailed(prompt, snapshot, self.config.classifier)
        references = [
            {
                "id": r.entry.id,
                "prompt": r.entry.prompt,
                "label": r.entry.label.value,
                "explanation": r.entry.explanation,
                "distance": r.distance,
            }
            for r in detail.safe_results + detail.unsafe_results
        ]
        return {**detail.output.to_json(), "references": references}

    def stats(self) -> dict:
        snapshot = self.store.snapshot
        return {
            "version": snapshot.version,
            "safe_count": snapshot.safe_count,
            "unsafe_count": snapshot.unsafe_count,
            "embedder_id": snapshot.manifest.embedder.embedder_id,
        }

    def mutations_since(self, seq: int) -> list[dict]:
        return self.log.since(seq)

    # -- write path (serialized) ----------------------------------------

    def _publish_if_auto(self) -> int:
        if self.config.auto_publish:
            return self.store.publish().version
        return self.store.snapshot.version

    def add_entry(self, prompt: str, label: str, explanation: str = "") -> dict:
        if not prompt or not prompt.strip():
            raise InvalidInputError("prompt must not be empty")
        parsed_label = SafetyLabel.parse(label)
        with self._write_lock:
            vector = embed(prompt, self.store.manifest.embedder)
            if is_zero_vector(vector):
                raise InvalidInputError("prompt embeds to the zero vector and cannot be indexed")
            entry_id = self.store.next_id()
            next_version = (
                self.store.snapshot.version + 1 if self.config.auto_publish else None
            )
            self.log.append(
                "add",
                [entry_id],
                next_version,
                payload={"prompt": prompt, "label": parsed_label.value, "explanation": explanation},
            )
            self.store.add_entry(
                LibraryEntry(
                    id=entry_id,
                    prompt=prompt,
                    label=parsed_label,
                    explanation=explanation,
                    embedding=vector,
                    source="live",
                )
            )
            version = self._publish_if_auto()
        return {"id": entry_id, "library_version": version}

    def remove_entry(self, entry_id: str) -> dict:
        with self._write_lock:
            next_version = (
                self.store.snapshot.version + 1 if self.config.auto_publish else None
            )
            removed = self.store.remove_entry(entry_id)
            self.log.append("remove", [entry_id], next_version)
            version = self._publish_if_auto()
        return {"id": removed.id, "library_version": version}

    def flip_entry(self, entry_id: str) -> dict:
        with self._write_lock:
            next_version = (
                self.store.snapshot.version + 1 if self.config.auto_publish else None
            )
            self.store.flip_labels([entry_id])
            self.log.append("flip", [entry_id], next_version)
            version = self._publish_if_auto()
        return {"id": entry_id, "library_version": version}

    def flip_all(self, drop_explanations: bool = False) -> dict:
        with self._write_lock:
            next_version = (
                self.store.snapshot.version + 1 if self.config.auto_publish else None
            )
            count = self.store.flip_labels("all", drop_explanations=drop_explanations)
            self.log.append(
                "flip_all", [], next_version, payload={"drop_explanations": drop_explanations}
            )
            version = self._publish_if_auto()
        return {"flipped": count, "library_version": version}

    def publish(self) -> dict:
        with self._write_lock:
            snap = self.store.publish()
            self.log.append("publish", [], snap.version)
        return {"library_version": snap.version}

    def save(self) -> None:
        if self.config.library_path is not None:
            save_library(self.store.snapshot, self.config.library_path)


def load_or_init_store(config: ServiceConfig) -> tuple[LibraryStore, MutationLog]:
    """Open the library file (or start empty) and replay the mutation log."""
    if config.library_path is not None and Path(config.library_path).exists():
        snapshot = load_library(config.library_path)
        store = LibraryStore.from_snapshot(snapshot)
    else:
        store = LibraryStore(LibraryManifest(embedder=config.embedder))
    log = MutationLog(config.mutation_log_path)
    base_version = store.snapshot.version
    replayed = False
    for record in log.records:
        version = record.get("resulting_version")
        if version is not None and version <= base_version:
            continue  # already folded into the library file
        kind = record["kind"]
        payload = record.get("payload", {})
        if kind == "add":
            entry_id = record["entry_ids"][0]
            store.add_entry(
                LibraryEntry(
                    id=entry_id,
                    prompt=payload["prompt"],
                    label=SafetyLabel.parse(payload["label"]),
                    explanation=payload.get("explanation", ""),
                    embedding=embed(payload["prompt"], store.manifest.embedder),
                    source="live",
                )
            )
        elif kind == "remove":
            store.remove_entry(record["entry_ids"][0])
        elif kind == "flip":
            store.flip_labels(record["entry_ids"])
        elif kind == "flip_all":
            store.flip_labels("all", drop_explanations=payload.get("drop_explanations", False))
        if version is not None:
            while store.snapshot.version < version:
                store.publish()
            replayed = True
    if replayed:
        assert store.snapshot.version >= base_version
    return store, log


# --- HTTP layer --------------------------------------------------------------


class ApiError(RagmodError):
    def __init__(self, status: int, code: str, message: str, detail=None):
        super().__init__(message)
        self.status = status
        self.code = code
        self.detail = detail


_ERROR_MAP = [
    (UnknownIdError, 404, "unknown_id"),
    (DuplicateIdError, 409, "duplicate_id"),
    (UpstreamError, 502, "upstream_error"),
    (ProtocolError, 502, "upstream_protocol_error"),
    (DimensionMismatchError, 400, "dimension_mismatch"),
    (InvalidQueryError, 400, "invalid_query"),
    (InvalidInputError, 400, "invalid_input"),
]


def _to_api_error(exc: RagmodError) -> ApiError:
    for cls, status, code in _ERROR_MAP:
        if isinstance(exc, cls):
            detail = getattr(exc, "payload", None)
            return ApiError(status, code, str(exc), detail=detail)
    return ApiError(500, "internal_error", str(exc))


class ClassifyRequest(BaseModel):
    prompt: str


class AddEntryRequest(BaseModel):
    prompt: str
    label: str
    explanation: str = ""


class FlipAllRequest(BaseModel):
    drop_explanations: bool = False


def create_app(service: ModerationService) -> FastAPI:
    app = FastAPI(title="ragmod", version="0.1.0")
    app.state.service = service

    @app.exception_handler(RagmodError)
    async def ragmod_error_handler(request: Request, exc: RagmodError):
        api = exc if isinstance(exc, ApiError) else _to_api_error(exc)
        body = {"code": api.code, "message": str(api)}
        if api.detail is not None:
            body["detail"] = api.detail
        return JSONResponse(status_code=api.status, content=body)

    @app.exception_handler(RequestValidationError)
    async def validation_error_handler(request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=400,
            content={"code": "invalid_input", "message": "request body failed validation",
                     "detail": exc.errors()},
        )

    def require_token(authorization: Optional[str] = Header(default=None)):
        token = service.config.token
        if token is None:
            return
        if authorization != f"Bearer {token}":
            raise ApiError(401, "unauthorized", "mutation endpoints require a bearer token")

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "library_version": service.store.snapshot.version}

    @app.post("/classify")
    def classify_endpoint(req: ClassifyRequest):
        return service.classify(req.prompt)

    @app.get("/library/stats")
    def stats():
        return service.stats()

    @app.get("/library/mutations")
    def mutations(since: int = 0):
        return service.mutations_since(since)

    @app.post("/library/entries", dependencies=[Depends(require_token)], status_code=201)
    def add_entry(req: AddEntryRequest):
        return service.add_entry(req.prompt, req.label, req.explanation)

    @app.delete("/library/entries/{entry_id}", dependencies=[Depends(require_token)])
    def remove_entry(entry_id: str):
        return service.remove_entry(entry_id)

    @app.post("/library/entries/{entry_id}/flip", dependencies=[Depends(require_token)])
    def flip_entry(entry_id: str):
        return service.flip_entry(entry_id)

    @app.post("/library/flip_all", dependencies=[Depends(require_token)])
    def flip_all(req: FlipAllRequest):
        return service.flip_all(req.drop_explanations)

    @app.post("/library/publish", dependencies=[Depends(require_token)])
    def publish():
        return service.publish()

    return app


def build_service(config: ServiceConfig) -> tuple[ModerationService, FastAPI]:
    store, log = load_or_init_store(config)
    service = ModerationService(config, store, log)
    return service, create_app(service)
