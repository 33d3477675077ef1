"""Deterministic prompt embeddings plus the binary vector sidecar format.

The built-in embedder is fully specified so that any two runs (or any
reimplementation) produce bit-identical vectors:

1. lowercase the input,
2. collapse every whitespace run to a single space and strip the ends,
3. if nothing alphanumeric survives, the result is the all-zeros vector
   (flagged so retrieval can refuse it),
4. pad with one leading and one trailing ``#`` sentinel,
5. slide a window of ``ngram`` characters (default 3),
6. hash each window with 64-bit FNV-1a (optionally seeded),
7. accumulate counts into ``hash mod dim`` buckets (default dim 256),
8. L2-normalize, stored as float32.

Real model vectors can replace the built-in embedder through the sidecar
file: header ``CRAG`` magic, version byte, u32 LE dim, u64 LE count, then
per record a u64 LE id hash followed by ``dim`` float32 LE values.
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import ConfigurationError, FormatError

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF

SIDECAR_MAGIC = b"CRAG"
SIDECAR_VERSION = 1

_WS_RUN = re.compile(r"\s+")


def fnv1a64(data: bytes, seed: int = 0) -> int:
    """64-bit FNV-1a. A nonzero seed is XORed into the offset basis."""
    h = FNV64_OFFSET ^ (seed & _MASK64)
    for byte in data:
        h ^= byte
        h = (h * FNV64_PRIME) & _MASK64
    return h


def entry_id_hash(entry_id: str) -> int:
    """Stable u64 hash used to key sidecar records."""
    return fnv1a64(entry_id.encode("utf-8"))


@dataclass(frozen=True)
class EmbedderSpec:
    """Identifies one embedding function; (id, dim, params) pin it exactly."""

    embedder_id: str = "trigram-fnv"
    dim: int = 256
    params: tuple[tuple[str, int], ...] = (("ngram", 3), ("hash_seed", 0))

    def __post_init__(self):
        if self.dim <= 0:
            raise ConfigurationError(f"embedding dim must be positive, got {self.dim}")
        # canonical key order so specs compare equal across (de)serialization
        object.__setattr__(self, "params", tuple(sorted(self.params)))

    def param(self, key: str, default: int = 0) -> int:
        for k, v in self.params:
            if k == key:
                return v
        return default

    def to_json(self) -> dict:
        return {
            "embedder_id": self.embedder_id,
            "dim": self.dim,
            "params": {k: v for k, v in self.params},
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "EmbedderSpec":
        params = tuple(sorted((str(k), int(v)) for k, v in obj.get("params", {}).items()))
        return cls(embedder_id=obj["embedder_id"], dim=int(obj["dim"]), params=params)


def default_spec(dim: int = 256) -> EmbedderSpec:
    return EmbedderSpec(dim=dim)


def canonicalize(text: str) -> str:
    return _WS_RUN.sub(" ", text.lower()).strip()


def _embed_trigram(text: str, spec: EmbedderSpec) -> np.ndarray:
    ngram = spec.param("ngram", 3)
    seed = spec.param("hash_seed", 0)
    canon = canonicalize(text)
    counts = np.zeros(spec.dim, dtype=np.float64)
    if any(ch.isalnum() for ch in canon):
        padded = "#" + canon + "#"
        for i in range(max(0, len(padded) - ngram + 1)):
            gram = padded[i : i + ngram]
            counts[fnv1a64(gram.encode("utf-8"), seed) % spec.dim] += 1.0
        counts /= np.sqrt(np.dot(counts, counts))
    return counts.astype(np.float32)


_REGISTRY = {"trigram-fnv": _embed_trigram}


def embed(text: str, spec: EmbedderSpec) -> np.ndarray:
    """Embed ``text`` under ``spec``. Pure and thread-safe."""
    fn = _REGISTRY.get(spec.embedder_id)
    if fn is None:
        raise ConfigurationError(
            f"unknown embedder_id {spec.embedder_id!r}; registered: {sorted(_REGISTRY)}"
        )
    return fn(text, spec)


def is_zero_vector(vec: np.ndarray) -> bool:
    return not vec.any()


def as_embedding(values, dim: int) -> np.ndarray:
    """Validate and coerce a float sequence into a float32 embedding."""
    vec = np.asarray(values, dtype=np.float32)
    if vec.ndim != 1 or vec.shape[0] != dim:
        raise FormatError(f"embedding has shape {vec.shape}, expected ({dim},)")
    if not np.all(np.isfinite(vec)):
        raise FormatError("embedding contains non-finite values")
    return vec


# --- sidecar I/O -----------------------------------------------------------

_HEADER = struct.Struct("<4sBIQ")  # magic, version, dim, count


def write_precomputed(path: str | Path, vectors: Mapping[str, np.ndarray]) -> None:
    """Write id->vector pairs to the binary sidecar, sorted by id."""
    items = sorted(vectors.items())
    if not items:
        raise FormatError("refusing to write an empty sidecar")
    dim = int(items[0][1].shape[0])
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(SIDECAR_MAGIC, SIDECAR_VERSION, dim, len(items)))
        for entry_id, vec in items:
            vec = as_embedding(vec, dim)
            fh.write(struct.pack("<Q", entry_id_hash(entry_id)))
            fh.write(vec.astype("<f4").tobytes())


def load_precomputed(
    path: str | Path, ids: Iterable[str] | None = None
) -> dict[str, np.ndarray] | dict[int, np.ndarray]:
    """Load a sidecar file.

    Returns a map keyed by u64 id hash, or by prompt id when ``ids`` supplies
    the candidate ids to resolve hashes against.
    """
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError("sidecar truncated before header end", offset=len(raw))
    magic, version, dim, count = _HEADER.unpack_from(raw, 0)
    if magic != SIDECAR_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {SIDECAR_MAGIC!r}", offset=0)
    if version != SIDECAR_VERSION:
        raise FormatError(f"unsupported sidecar version {version}", offset=4)
    if dim == 0:
        raise FormatError("sidecar header dim is zero", offset=5)
    record = 8 + 4 * dim
    expected = _HEADER.size + record * count
    if len(raw) != expected:
        raise FormatError(
            f"sidecar length {len(raw)} != header-implied {expected}",
            offset=min(len(raw), expected),
        )
    by_hash: dict[int, np.ndarray] = {}
    off = _HEADER.size
    for _ in range(count):
        (h,) = struct.unpack_from("<Q", raw, off)
        vec = np.frombuffer(raw, dtype="<f4", count=dim, offset=off + 8).copy()
        if not np.all(np.isfinite(vec)):
            raise FormatError("non-finite vector in sidecar", offset=off + 8)
        if h in by_hash:
            raise FormatError(f"duplicate id hash {h:#x}", offset=off)
        by_hash[h] = vec
        off += record
    if ids is None:
        return by_hash
    resolved: dict[str, np.ndarray] = {}
    for entry_id in ids:
        h = entry_id_hash(entry_id)
        if h in by_hash:
            resolved[entry_id] = by_hash[h]
    return resolved
