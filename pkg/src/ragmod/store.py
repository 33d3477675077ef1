"""Dual safe/unsafe retrieval library: exact L2 search, immutable snapshots.

Readers always work against a published ``LibrarySnapshot`` (never against
staging state), so a classify call sees one consistent library version from
retrieval through citation. Publishing is a single reference swap; many
readers run concurrently with the one writer without locking.

Search is an exact flat scan over contiguous per-label float32 matrices.
Distances are computed in float64 and reported as true L2; result order is
ascending (distance, id). At the library sizes this system targets (around
ten thousand entries) the exact scan is both fast and its own best oracle.
"""

from __future__ import annotations

import enum
import json
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .embedding import EmbedderSpec, as_embedding, is_zero_vector, write_precomputed, load_precomputed
from .errors import (
    DimensionMismatchError,
    DuplicateIdError,
    FormatError,
    InvalidInputError,
    InvalidQueryError,
    UnknownIdError,
)

LIBRARY_FORMAT = "ragmod-library"
LIBRARY_FORMAT_VERSION = 1


class SafetyLabel(enum.Enum):
    SAFE = "safe"
    UNSAFE = "unsafe"

    def __str__(self) -> str:
        return self.value

    @property
    def flipped(self) -> "SafetyLabel":
        return SafetyLabel.UNSAFE if self is SafetyLabel.SAFE else SafetyLabel.SAFE

    @classmethod
    def parse(cls, value: str) -> "SafetyLabel":
        try:
            return cls(value.lower())
        except ValueError:
            raise InvalidInputError(f"label must be 'safe' or 'unsafe', got {value!r}") from None


@dataclass(eq=False)
class LibraryEntry:
    """One reference example: prompt, label, explanation, embedding."""

    id: str
    prompt: str
    label: SafetyLabel
    explanation: str
    embedding: np.ndarray
    source: str = "manual"
    concept: str | None = None

    def __post_init__(self):
        if not self.prompt:
            raise InvalidInputError(f"entry {self.id!r} has an empty prompt")
        self.embedding = as_embedding(self.embedding, self.embedding.shape[0])

    def __eq__(self, other) -> bool:
        if not isinstance(other, LibraryEntry):
            return NotImplemented
        return (
            self.id == other.id
            and self.prompt == other.prompt
            and self.label == other.label
            and self.explanation == other.explanation
            and self.source == other.source
            and self.concept == other.concept
            and self.embedding.tobytes() == other.embedding.tobytes()
        )

    def to_json(self, inline_embedding: bool = True) -> dict:
        obj = {
            "id": self.id,
            "prompt": self.prompt,
            "label": self.label.value,
            "explanation": self.explanation,
            "source": self.source,
            "concept": self.concept,
        }
        if inline_embedding:
            obj["embedding"] = [float(x) for x in self.embedding]
        return obj

    @classmethod
    def from_json(cls, obj: dict, dim: int, embedding=None) -> "LibraryEntry":
        values = obj.get("embedding") if embedding is None else embedding
        if values is None:
            raise FormatError(f"entry {obj.get('id')!r} is missing its embedding")
        return cls(
            id=obj["id"],
            prompt=obj["prompt"],
            label=SafetyLabel.parse(obj["label"]),
            explanation=obj.get("explanation") or "",
            embedding=as_embedding(values, dim),
            source=obj.get("source", "manual"),
            concept=obj.get("concept"),
        )


@dataclass(frozen=True)
class LibraryManifest:
    embedder: EmbedderSpec
    seed: int = 0
    created_at: str = ""

    def to_json(self) -> dict:
        return {"embedder": self.embedder.to_json(), "seed": self.seed, "created_at": self.created_at}

    @classmethod
    def from_json(cls, obj: dict) -> "LibraryManifest":
        return cls(
            embedder=EmbedderSpec.from_json(obj["embedder"]),
            seed=int(obj.get("seed", 0)),
            created_at=obj.get("created_at", ""),
        )


@dataclass(frozen=True)
class RetrievalResult:
    entry: LibraryEntry
    distance: float


class _LabelIndex:
    """Contiguous vectors for one label, rows sorted by entry id."""

    def __init__(self, entries: Sequence[LibraryEntry], dim: int):
        self.entries = sorted(entries, key=lambda e: e.id)
        if self.entries:
            self._mat = np.ascontiguousarray(
                np.stack([e.embedding for e in self.entries]).astype(np.float64)
            )
        else:
            self._mat = np.zeros((0, dim), dtype=np.float64)

    def __len__(self) -> int:
        return len(self.entries)

    def nearest(self, query64: np.ndarray, k: int) -> list[RetrievalResult]:
        if k <= 0 or not self.entries:
            return []
        dist_sq = np.sum((self._mat - query64) ** 2, axis=1)
        # rows are id-sorted, so a stable sort breaks distance ties by id
        order = np.argsort(dist_sq, kind="stable")[: min(k, len(self.entries))]
        return [
            RetrievalResult(entry=self.entries[i], distance=float(np.sqrt(dist_sq[i])))
            for i in order
        ]


class LibrarySnapshot:
    """Immutable, versioned view of the library plus its search index."""

    def __init__(self, version: int, manifest: LibraryManifest, entries: Iterable[LibraryEntry]):
        self.version = version
        self.manifest = manifest
        self.entries: tuple[LibraryEntry, ...] = tuple(sorted(entries, key=lambda e: e.id))
        seen: set[str] = set()
        for e in self.entries:
            if e.id in seen:
                raise DuplicateIdError(f"duplicate entry id {e.id!r} in snapshot")
            seen.add(e.id)
            if e.embedding.shape[0] != self.dim:
                raise DimensionMismatchError(
                    f"entry {e.id!r} has dim {e.embedding.shape[0]}, manifest says {self.dim}"
                )
        self.by_id = {e.id: e for e in self.entries}
        self._indexes = {
            label: _LabelIndex([e for e in self.entries if e.label is label], self.dim)
            for label in SafetyLabel
        }

    @property
    def dim(self) -> int:
        return self.manifest.embedder.dim

    @property
    def safe_count(self) -> int:
        return len(self._indexes[SafetyLabel.SAFE])

    @property
    def unsafe_count(self) -> int:
        return len(self._indexes[SafetyLabel.UNSAFE])

    def __len__(self) -> int:
        return len(self.entries)

    def __eq__(self, other) -> bool:
        if not isinstance(other, LibrarySnapshot):
            return NotImplemented
        return (
            self.version == other.version
            and self.manifest == other.manifest
            and self.entries == other.entries
        )

    def retrieve(
        self, query: np.ndarray, k_safe: int = 2, k_unsafe: int = 2
    ) -> tuple[list[RetrievalResult], list[RetrievalResult]]:
        """Exact nearest neighbours per sub-library, ascending (distance, id).

        Returns fewer than k results for a sub-library that holds fewer
        entries; callers detect the shortfall by comparing lengths.
        """
        if k_safe < 0 or k_unsafe < 0:
            raise InvalidInputError("k_safe and k_unsafe must be >= 0")
        query = np.asarray(query, dtype=np.float32)
        if query.ndim != 1 or query.shape[0] != self.dim:
            raise DimensionMismatchError(
                f"query has shape {query.shape}, library dim is {self.dim}"
            )
        if is_zero_vector(query):
            raise InvalidQueryError("query is the zero-flagged vector")
        q64 = query.astype(np.float64)
        return (
            self._indexes[SafetyLabel.SAFE].nearest(q64, k_safe),
            self._indexes[SafetyLabel.UNSAFE].nearest(q64, k_unsafe),
        )


def retrieve(query, snapshot: LibrarySnapshot, k_safe: int = 2, k_unsafe: int = 2):
    return snapshot.retrieve(query, k_safe=k_safe, k_unsafe=k_unsafe)


class LibraryStore:
    """Mutable staging area in front of immutable published snapshots.

    One writer at a time (guarded by a lock); any number of readers hold the
    current snapshot reference. ``publish`` swaps the reference atomically.
    """

    def __init__(self, manifest: LibraryManifest, entries: Iterable[LibraryEntry] = (), version: int = 0):
        self._manifest = manifest
        self._lock = threading.Lock()
        self._staging: dict[str, LibraryEntry] = {}
        self._auto_id = 0
        for e in entries:
            self._check_new(e)
            self._staging[e.id] = e
        self._snapshot = LibrarySnapshot(version, manifest, self._staging.values())

    @classmethod
    def from_snapshot(cls, snapshot: LibrarySnapshot) -> "LibraryStore":
        return cls(snapshot.manifest, snapshot.entries, version=snapshot.version)

    @property
    def manifest(self) -> LibraryManifest:
        return self._manifest

    @property
    def snapshot(self) -> LibrarySnapshot:
        """The most recently published snapshot."""
        return self._snapshot

    def _check_new(self, entry: LibraryEntry) -> None:
        if entry.id in self._staging:
            raise DuplicateIdError(f"entry id {entry.id!r} already present")
        if entry.embedding.shape[0] != self._manifest.embedder.dim:
            raise DimensionMismatchError(
                f"entry {entry.id!r} has dim {entry.embedding.shape[0]}, "
                f"library dim is {self._manifest.embedder.dim}"
            )

    def next_id(self) -> str:
        with self._lock:
            return self._next_id_locked()

    def _next_id_locked(self) -> str:
        while True:
            self._auto_id += 1
            candidate = f"entry-{self._auto_id:06d}"
            if candidate not in self._staging:
                return candidate

    def add_entry(self, entry: LibraryEntry) -> str:
        """Stage a new entry; it becomes visible to queries after publish."""
        with self._lock:
            self._check_new(entry)
            self._staging[entry.id] = entry
            return entry.id

    def remove_entry(self, entry_id: str) -> LibraryEntry:
        with self._lock:
            if entry_id not in self._staging:
                raise UnknownIdError(f"no entry with id {entry_id!r}")
            return self._staging.pop(entry_id)

    def flip_labels(self, ids: str | Iterable[str] = "all", drop_explanations: bool = False) -> int:
        """Toggle safe<->unsafe on the targeted entries; returns count flipped."""
        with self._lock:
            if isinstance(ids, str):
                if ids != "all":
                    raise InvalidInputError("ids must be 'all' or an iterable of entry ids")
                targets = list(self._staging)
            else:
                targets = list(ids)
                for entry_id in targets:
                    if entry_id not in self._staging:
                        raise UnknownIdError(f"no entry with id {entry_id!r}")
            for entry_id in targets:
                old = self._staging[entry_id]
                self._staging[entry_id] = LibraryEntry(
                    id=old.id,
                    prompt=old.prompt,
                    label=old.label.flipped,
                    explanation="" if drop_explanations else old.explanation,
                    embedding=old.embedding,
                    source=old.source,
                    concept=old.concept,
                )
            return len(targets)

    def publish(self) -> LibrarySnapshot:
        """Build a snapshot from staging and swap it in atomically."""
        with self._lock:
            snap = LibrarySnapshot(self._snapshot.version + 1, self._manifest, self._staging.values())
            self._snapshot = snap
            return snap


# --- persistence -----------------------------------------------------------


def save(snapshot: LibrarySnapshot, path: str | Path, external_embeddings: bool = False) -> None:
    """Write a snapshot: one-line JSON manifest header, one JSON entry per line.

    With ``external_embeddings`` the vectors go to a ``<path>.vec`` sidecar
    keyed by entry-id hash and the entry lines omit the inline float arrays.
    """
    path = Path(path)
    header = {
        "format": LIBRARY_FORMAT,
        "format_version": LIBRARY_FORMAT_VERSION,
        "version": snapshot.version,
        "manifest": snapshot.manifest.to_json(),
        "safe_count": snapshot.safe_count,
        "unsafe_count": snapshot.unsafe_count,
        "embeddings": "sidecar" if external_embeddings else "inline",
    }
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, ensure_ascii=False) + "\n")
        for e in snapshot.entries:
            fh.write(json.dumps(e.to_json(inline_embedding=not external_embeddings), ensure_ascii=False) + "\n")
    if external_embeddings and snapshot.entries:
        write_precomputed(path.with_name(path.name + ".vec"), {e.id: e.embedding for e in snapshot.entries})
    os.replace(tmp, path)


def load(path: str | Path) -> LibrarySnapshot:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"library header is not valid JSON: {exc}", offset=0) from exc
        if header.get("format") != LIBRARY_FORMAT:
            raise FormatError(f"not a {LIBRARY_FORMAT} file: format={header.get('format')!r}", offset=0)
        if header.get("format_version") != LIBRARY_FORMAT_VERSION:
            raise FormatError(f"unsupported library format version {header.get('format_version')!r}")
        manifest = LibraryManifest.from_json(header["manifest"])
        dim = manifest.embedder.dim
        sidecar = None
        if header.get("embeddings") == "sidecar":
            sidecar_path = path.with_name(path.name + ".vec")
            if sidecar_path.exists():
                sidecar = load_precomputed(sidecar_path)
        entries = []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            obj = json.loads(line)
            vec = None
            if sidecar is not None:
                from .embedding import entry_id_hash

                vec = sidecar.get(entry_id_hash(obj["id"]))
            entries.append(LibraryEntry.from_json(obj, dim, embedding=vec))
    snap = LibrarySnapshot(int(header["version"]), manifest, entries)
    if snap.safe_count != header["safe_count"] or snap.unsafe_count != header["unsafe_count"]:
        raise FormatError(
            f"header counts ({header['safe_count']}/{header['unsafe_count']}) do not match "
            f"entries ({snap.safe_count}/{snap.unsafe_count})"
        )
    return snap

