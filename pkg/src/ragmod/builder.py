"""Library construction: K-Means clustering and centroid-example selection.

Safe and unsafe pools are always clustered separately. Each cluster
contributes exactly one library entry: the real corpus member closest to the
cluster centroid (no synthetic centroid ever leaks into a library).

K-Means is Lloyd's algorithm with k-means++ initialization driven by the
SplitMix64 generator from :mod:`ragmod.rng`, so identical (vectors, config)
inputs give identical clusterings on every platform.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .corpus import CorpusExample
from .embedding import EmbedderSpec, fnv1a64
from .errors import InvalidInputError
from .rng import SplitMix64, mix
from .store import LibraryEntry, LibraryManifest, LibrarySnapshot, SafetyLabel


@dataclass(frozen=True)
class ClusteringConfig:
    k: int
    seed: int = 0
    max_iters: int = 100
    tol: float = 1e-6
    min_cluster_size: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise InvalidInputError(f"k must be >= 1, got {self.k}")
        if self.tol < 0:
            raise InvalidInputError(f"tol must be >= 0, got {self.tol}")


@dataclass
class ClusteringResult:
    labels: np.ndarray  # cluster index per input row
    centroids: np.ndarray  # (k, dim) float64
    inertia: float
    iterations_run: int
    inertia_history: list[float] = field(default_factory=list)
    ids: tuple[str, ...] | None = None

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def assignments(self) -> dict:
        keys = self.ids if self.ids is not None else range(len(self.labels))
        return {key: int(c) for key, c in zip(keys, self.labels)}

    def cluster_members(self, cluster: int) -> list[int]:
        return np.nonzero(self.labels == cluster)[0].tolist()


def _pairwise_sq(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    # expanded form keeps memory at (n, k); clamp tiny negatives from rounding
    d = (X * X).sum(axis=1)[:, None] - 2.0 * (X @ C.T) + (C * C).sum(axis=1)[None, :]
    return np.maximum(d, 0.0)


def _plusplus_init(X: np.ndarray, k: int, rng: SplitMix64) -> np.ndarray:
    n = X.shape[0]
    centroids = np.empty((k, X.shape[1]), dtype=np.float64)
    centroids[0] = X[rng.below(n)]
    d2 = np.sum((X - centroids[0]) ** 2, axis=1)
    for j in range(1, k):
        total = float(d2.sum())
        if total <= 0.0:
            idx = rng.below(n)
        else:
            r = rng.next_float() * total
            idx = int(np.searchsorted(np.cumsum(d2), r, side="right"))
            idx = min(idx, n - 1)
        centroids[j] = X[idx]
        np.minimum(d2, np.sum((X - centroids[j]) ** 2, axis=1), out=d2)
    return centroids


def kmeans(vectors: Sequence[np.ndarray] | np.ndarray, cfg: ClusteringConfig,
           ids: Sequence[str] | None = None) -> ClusteringResult:
    """Cluster vectors into ``cfg.k`` groups (clamped to the distinct count).

    Fully deterministic under ``cfg.seed``. Inertia (sum of squared
    distances to the assigned centroid) is checked to be non-increasing
    across Lloyd iterations.
    """
    X = np.asarray(vectors, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise InvalidInputError("kmeans needs a nonempty list of equal-length vectors")
    n = X.shape[0]
    n_distinct = np.unique(X, axis=0).shape[0]
    k = min(cfg.k, n_distinct)  # dedup guard: never ask for more clusters than distinct points

    rng = SplitMix64(cfg.seed)
    centroids = _plusplus_init(X, k, rng)

    labels = np.zeros(n, dtype=np.int64)
    history: list[float] = []
    iterations = 0
    for iterations in range(1, cfg.max_iters + 1):
        labels = np.argmin(_pairwise_sq(X, centroids), axis=1)
        new_centroids = centroids.copy()
        for j in range(k):
            members = labels == j
            if members.any():
                new_centroids[j] = X[members].mean(axis=0)
        # repair empty clusters with the point farthest from its centroid
        for j in range(k):
            if not (labels == j).any():
                residual = np.sum((X - new_centroids[labels]) ** 2, axis=1)
                far = int(np.argmax(residual))
                new_centroids[j] = X[far]
                labels[far] = j

        inertia = float(np.sum((X - new_centroids[labels]) ** 2))
        if history and inertia > history[-1] * (1 + 1e-9) + 1e-12:
            raise AssertionError(
                f"Lloyd inertia increased: {history[-1]} -> {inertia} at iteration {iterations}"
            )
        history.append(inertia)
        displacement = float(np.sqrt(np.max(np.sum((new_centroids - centroids) ** 2, axis=1))))
        centroids = new_centroids
        if displacement < cfg.tol:
            break

    return ClusteringResult(
        labels=labels,
        centroids=centroids,
        inertia=history[-1],
        iterations_run=iterations,
        inertia_history=history,
        ids=tuple(ids) if ids is not None else None,
    )


def select_centroid_example(members: Sequence[CorpusExample | LibraryEntry],
                            vectors: Sequence[np.ndarray],
                            centroid: np.ndarray):
    """The member nearest the centroid under L2; ties broken by ascending id."""
    if not members:
        raise InvalidInputError("cannot select a centroid example from an empty cluster")
    best = None
    for member, vec in zip(members, vectors):
        d = float(np.sum((np.asarray(vec, dtype=np.float64) - centroid) ** 2))
        key = (d, member.id)
        if best is None or key < best[0]:
            best = (key, member)
    return best[1]


def _cluster_pool(
    examples: Sequence[CorpusExample],
    spec: EmbedderSpec,
    k: int,
    seed: int,
    min_cluster_size: int,
    source: str,
    concept: str | None,
) -> list[LibraryEntry]:
    """Cluster one (label, pool) and return its centroid-example entries."""
    vectors = [ex.vector(spec) for ex in examples]
    cfg = ClusteringConfig(k=max(1, k), seed=seed)
    result = kmeans(vectors, cfg, ids=[ex.id for ex in examples])
    entries: list[LibraryEntry] = []
    for j in range(result.k):
        member_idx = result.cluster_members(j)
        if len(member_idx) < min_cluster_size:
            continue
        members = [examples[i] for i in member_idx]
        chosen = select_centroid_example(
            members, [vectors[i] for i in member_idx], result.centroids[j]
        )
        entries.append(
            LibraryEntry(
                id=chosen.id,
                prompt=chosen.prompt,
                label=chosen.label,
                explanation=chosen.explanation,
                embedding=chosen.vector(spec),
                source=source,
                concept=concept if concept is not None else chosen.concept,
            )
        )
    return entries


def _group_seed(seed: int, *names: str) -> int:
    return mix(seed, *(fnv1a64(n.encode("utf-8")) for n in names))


def build_id_library(
    corpus: Sequence[CorpusExample],
    spec: EmbedderSpec,
    clusters_per_concept: int = 7,
    seed: int = 0,
) -> LibrarySnapshot:
    """In-distribution library: per concept and per label, cluster the
    members into ``clusters_per_concept`` groups and keep one centroid
    example per cluster (k clamps down when a group is smaller)."""
    if not corpus:
        raise InvalidInputError("corpus is empty")
    concepts = sorted({ex.concept or "" for ex in corpus})
    entries: list[LibraryEntry] = []
    for concept in concepts:
        for label in (SafetyLabel.SAFE, SafetyLabel.UNSAFE):
            pool = [ex for ex in corpus if (ex.concept or "") == concept and ex.label is label]
            if not pool:
                continue
            entries.extend(
                _cluster_pool(
                    pool,
                    spec,
                    k=min(clusters_per_concept, len(pool)),
                    seed=_group_seed(seed, concept, label.value),
                    min_cluster_size=0,
                    source="id",
                    concept=concept or None,
                )
            )
    manifest = LibraryManifest(embedder=spec, seed=seed)
    return LibrarySnapshot(1, manifest, entries)


def build_external_library(
    corpus: Sequence[CorpusExample],
    spec: EmbedderSpec,
    k: int = 1000,
    min_cluster_size: int = 2,
    seed: int = 0,
) -> LibrarySnapshot:
    """External library: cluster the safe and unsafe pools independently with
    ``k`` clusters each, discard clusters smaller than ``min_cluster_size``,
    and keep one centroid example per surviving cluster."""
    if not corpus:
        raise InvalidInputError("corpus is empty")
    entries: list[LibraryEntry] = []
    for label in (SafetyLabel.SAFE, SafetyLabel.UNSAFE):
        pool = [ex for ex in corpus if ex.label is label]
        if not pool:
            continue
        entries.extend(
            _cluster_pool(
                pool,
                spec,
                k=min(k, len(pool)),
                seed=_group_seed(seed, "external", label.value),
                min_cluster_size=min_cluster_size,
                source="external",
                concept=None,
            )
        )
    manifest = LibraryManifest(embedder=spec, seed=seed)
    return LibrarySnapshot(1, manifest, entries)


def downsample_targets(safe_count: int, unsafe_count: int, fraction: Fraction) -> tuple[int, int]:
    """Cluster budgets for a downsampled library.

    The pool size is rounded up to the next multiple of ten before scaling,
    and the scaled budget is floored. On a 991/700 library this yields
    (500, 350), (250, 175) and (125, 87) for 1/2, 1/4 and 1/8.
    """
    if not (0 < fraction < 1):
        raise InvalidInputError(f"fraction must be in (0, 1), got {fraction}")

    def one(count: int) -> int:
        budget = -(-count // 10) * 10
        target = int(budget * fraction.numerator // fraction.denominator)
        return max(1, min(target, count))

    return one(safe_count), one(unsafe_count)


def parse_fraction(text: str) -> Fraction:
    frac = Fraction(text)
    if frac not in (Fraction(1, 8), Fraction(1, 4), Fraction(1, 2)):
        raise InvalidInputError(f"fraction must be one of 1/8, 1/4, 1/2; got {text}")
    return frac


def downsample_library(
    full: LibrarySnapshot,
    fraction: Fraction | None = None,
    targets: tuple[int, int] | None = None,
    seed: int = 0,
) -> LibrarySnapshot:
    """Shrink a library by re-clustering each pool to a reduced cluster count
    and keeping the centroid examples. ``targets`` overrides the fraction
    mapping with explicit (k_safe, k_unsafe)."""
    if targets is None:
        if fraction is None:
            raise InvalidInputError("either fraction or explicit targets required")
        targets = downsample_targets(full.safe_count, full.unsafe_count, fraction)
    k_safe, k_unsafe = targets
    spec = full.manifest.embedder
    entries: list[LibraryEntry] = []
    for label, k in ((SafetyLabel.SAFE, k_safe), (SafetyLabel.UNSAFE, k_unsafe)):
        pool = [e for e in full.entries if e.label is label]
        if not pool or k <= 0:
            continue
        vectors = [e.embedding for e in pool]
        cfg = ClusteringConfig(k=min(k, len(pool)), seed=_group_seed(seed, "downsample", label.value))
        result = kmeans(vectors, cfg, ids=[e.id for e in pool])
        for j in range(result.k):
            member_idx = result.cluster_members(j)
            if not member_idx:
                continue
            chosen = select_centroid_example(
                [pool[i] for i in member_idx],
                [vectors[i] for i in member_idx],
                result.centroids[j],
            )
            entries.append(chosen)
    manifest = LibraryManifest(embedder=spec, seed=seed)
    return LibrarySnapshot(1, manifest, entries)


def merge_libraries(base: LibrarySnapshot, *others: LibrarySnapshot) -> LibrarySnapshot:
    """Union of libraries (e.g. ID + EX). Later duplicates of an id lose."""
    combined: dict[str, LibraryEntry] = {e.id: e for e in base.entries}
    for other in others:
        if other.manifest.embedder != base.manifest.embedder:
            raise InvalidInputError("cannot merge libraries with different embedder specs")
        for e in other.entries:
            combined.setdefault(e.id, e)
    return LibrarySnapshot(1, base.manifest, combined.values())
