import numpy as np
import pytest

from ragmod.embedding import EmbedderSpec
from ragmod.store import LibraryEntry, LibraryManifest, LibraryStore, SafetyLabel


def make_entry(entry_id, label, vec, prompt=None, explanation="", concept=None, source="test"):
    return LibraryEntry(
        id=entry_id,
        prompt=prompt or f"prompt for {entry_id}",
        label=label if isinstance(label, SafetyLabel) else SafetyLabel.parse(label),
        explanation=explanation,
        embedding=np.asarray(vec, dtype=np.float32),
        source=source,
        concept=concept,
    )


def random_entries(n, dim, seed, safe_fraction=0.5):
    rng = np.random.default_rng(seed)
    entries = []
    n_safe = int(round(n * safe_fraction))
    for i in range(n):
        label = SafetyLabel.SAFE if i < n_safe else SafetyLabel.UNSAFE
        vec = rng.standard_normal(dim).astype(np.float32)
        entries.append(make_entry(f"e{i:05d}", label, vec))
    return entries


def build_store(entries, dim, seed=0):
    manifest = LibraryManifest(embedder=EmbedderSpec(dim=dim), seed=seed)
    store = LibraryStore(manifest)
    for e in entries:
        store.add_entry(e)
    store.publish()
    return store


@pytest.fixture
def small_snapshot():
    entries = random_entries(40, 8, seed=7)
    return build_store(entries, dim=8).snapshot
