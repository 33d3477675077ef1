"""Acceptance suite: one test per release criterion, at its stated tolerance.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one PASS line per
criterion. The trend criteria run on the bundled synthetic distribution-
shift benchmark (deterministic, seed 0).
"""

import random
import time
from fractions import Fraction

import numpy as np
import pytest
from fastapi.testclient import TestClient

from conftest import build_store, make_entry, random_entries
from test_augment import plausible_single_typo, reconstruct_replacement, strip_spaces
from test_evaluation import oracle_average_precision

from ragmod.augment import ALL_KINDS, PUNCTUATION_SET, ObfuscationKind, obfuscate
from ragmod.builder import ClusteringConfig, build_id_library, downsample_targets, kmeans
from ragmod.classifier import ClassifierSpec, classify, classify_detailed
from ragmod.embedding import EmbedderSpec, embed
from ragmod.evaluation import (
    ScoredExample,
    auprc,
    run_library_sweep,
    run_refcount_sweep,
)
from ragmod.service import ServiceConfig, build_service
from ragmod.store import (
    LibraryManifest,
    LibraryStore,
    SafetyLabel,
    load,
    save,
)
from ragmod.synthetic import benchmark_data, benchmark_snapshots


def _pass(line: str) -> None:
    print(f"PASS: {line}")


# --- retrieval ---------------------------------------------------------------


def test_a01_knn_exactness_500_trials():
    """retrieve == brute-force scan on 500 random instances, < 60 s."""
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    agree = 0
    trials = 500
    for trial in range(trials):
        n = int(rng.integers(1, 2001))
        dim = int(rng.choice([8, 64, 256]))
        entries = random_entries(n, dim, seed=trial, safe_fraction=float(rng.uniform(0.2, 0.8)))
        snap = build_store(entries, dim=dim).snapshot
        q = rng.standard_normal(dim).astype(np.float32)
        k_safe = int(rng.integers(0, 6))
        k_unsafe = int(rng.integers(0, 6))
        got_safe, got_unsafe = snap.retrieve(q, k_safe, k_unsafe)

        # independent oracle: all-pairs float64 scan, sort by (d^2, id)
        q64 = q.astype(np.float64)
        expected = {}
        for label in (SafetyLabel.SAFE, SafetyLabel.UNSAFE):
            pool = [e for e in entries if e.label is label]
            d2 = [float(np.sum((e.embedding.astype(np.float64) - q64) ** 2)) for e in pool]
            order = sorted(zip(d2, (e.id for e in pool)))
            k = k_safe if label is SafetyLabel.SAFE else k_unsafe
            expected[label] = [eid for _, eid in order[:k]]
        ok = [r.entry.id for r in got_safe] == expected[SafetyLabel.SAFE] and [
            r.entry.id for r in got_unsafe
        ] == expected[SafetyLabel.UNSAFE]
        agree += ok
    elapsed = time.perf_counter() - t0
    assert agree == trials, f"only {agree}/{trials} trials agreed with brute force"
    assert elapsed < 60.0, f"exactness suite took {elapsed:.1f}s (budget 60s)"
    _pass(f"kNN exactness: {trials}/{trials} brute-force agreement in {elapsed:.1f}s")


def test_a02_retrieval_arity_two_plus_two():
    """classify supplies 2 safe + 2 unsafe when available, else flags shortfall."""
    spec = EmbedderSpec(dim=64)
    store = LibraryStore(LibraryManifest(embedder=spec))
    for i in range(6):
        label = SafetyLabel.SAFE if i % 2 == 0 else SafetyLabel.UNSAFE
        prompt = f"arity probe text {i}"
        store.add_entry(make_entry(f"a{i}", label, embed(prompt, spec), prompt=prompt))
    snap = store.publish()
    detail = classify_detailed("arity probe text", snap, ClassifierSpec())
    assert len(detail.safe_results) == 2 and len(detail.unsafe_results) == 2
    assert not detail.output.shortfall

    small = LibraryStore(LibraryManifest(embedder=spec))
    small.add_entry(make_entry("s", SafetyLabel.SAFE, embed("one safe", spec), prompt="one safe"))
    small.add_entry(make_entry("u", SafetyLabel.UNSAFE, embed("one unsafe", spec), prompt="one unsafe"))
    detail = classify_detailed("anything else", small.publish(), ClassifierSpec())
    assert len(detail.safe_results) == 1 and len(detail.unsafe_results) == 1
    assert detail.output.shortfall
    _pass("retrieval arity: 2+2 by default, shortfall flagged when under-supplied")


# --- clustering ---------------------------------------------------------------


def test_a03_kmeans_monotone_deterministic_blobs():
    """inertia non-increasing on 100 instances; rerun-identical; blobs recovered."""
    rng = np.random.default_rng(7)
    for trial in range(100):
        n = int(rng.integers(4, 80))
        d = int(rng.integers(2, 12))
        k = int(rng.integers(1, 7))
        X = rng.standard_normal((n, d)) * float(rng.uniform(0.5, 4.0))
        cfg = ClusteringConfig(k=k, seed=trial)
        r1 = kmeans(X, cfg)
        hist = r1.inertia_history
        assert all(b <= a * (1 + 1e-9) + 1e-12 for a, b in zip(hist, hist[1:])), (
            f"inertia increased on trial {trial}"
        )
        r2 = kmeans(X, cfg)
        assert np.array_equal(r1.labels, r2.labels)
        assert r1.centroids.tobytes() == r2.centroids.tobytes()

    blob_rng = np.random.default_rng(123)
    a = blob_rng.standard_normal((20, 8))
    b = blob_rng.standard_normal((20, 8)) + 30.0
    X = np.vstack([a, b])
    result = kmeans(X, ClusteringConfig(k=2, seed=11))
    membership = np.array([0] * 20 + [1] * 20)
    assert np.all(result.labels == membership) or np.all(result.labels == 1 - membership)
    _pass("K-Means: monotone inertia x100, seed-deterministic, blob partition recovered")


def test_a04_library_arithmetic():
    """downsample fraction mapping yields the expected K pairs; ID builder emits 7."""
    assert downsample_targets(991, 700, Fraction(1, 2)) == (500, 350)
    assert downsample_targets(991, 700, Fraction(1, 4)) == (250, 175)
    assert downsample_targets(991, 700, Fraction(1, 8)) == (125, 87)

    data = benchmark_data(seed=0)
    id_lib = build_id_library(data.home, EmbedderSpec(dim=64), clusters_per_concept=7, seed=0)
    concepts = {e.concept for e in id_lib.entries}
    assert len(concepts) == 12
    for concept in concepts:
        for label in SafetyLabel:
            count = sum(1 for e in id_lib.entries if e.concept == concept and e.label is label)
            assert count == 7, f"{concept}/{label.value} produced {count} entries"
    _pass("library arithmetic: (500,350)/(250,175)/(125,87) and 7 per concept per label")


# --- obfuscation ---------------------------------------------------------------


def _random_corpus_1000():
    rng = random.Random(99)
    words = ["mountain", "River", "castle", "signal", "Yellow", "harvest", "pilot",
             "stone", "Window", "garden", "basket", "copper", "lantern", "meadow"]
    return [
        " ".join(rng.choice(words) for _ in range(rng.randint(1, 9))) for _ in range(1000)
    ]


def test_a05_obfuscation_bit_exact_and_invariants():
    """canonical examples byte-exact; all structural invariants on 1,000 strings."""
    assert obfuscate("Hello world", ObfuscationKind.CHANGE_CASE, 0) == "HELLO WORLD"
    assert obfuscate("Hello world", ObfuscationKind.MERGE_WORDS, 0) == "Helloworld"

    corpus = _random_corpus_1000()
    seed = 4242
    for text in corpus:
        for kind in ALL_KINDS:
            out = obfuscate(text, kind, seed)
            assert out == obfuscate(text, kind, seed), "determinism violated"
            assert out, "nonempty input became empty"
            if kind is ObfuscationKind.CHANGE_CASE:
                assert out == text.upper()
            elif kind is ObfuscationKind.MERGE_WORDS:
                assert out == strip_spaces(text)
            elif kind is ObfuscationKind.INSERT_PUNCTUATION_CHARS:
                assert "".join(c for c in out if c not in PUNCTUATION_SET) == text
                inserted = sum(1 for c in out if c in PUNCTUATION_SET)
                assert inserted == len(strip_spaces(text)) // 2
            elif kind is ObfuscationKind.INSERT_WHITESPACE_CHARS:
                assert strip_spaces(out) == strip_spaces(text)
            elif kind is ObfuscationKind.INSERT_TEXT:
                token, _, rest = out.partition(" ")
                assert rest == text and 2 <= len(token) <= 3 and token.isupper()
            elif kind is ObfuscationKind.SPLIT_WORDS:
                assert out.count(" ") == text.count(" ") + 1
                assert strip_spaces(out) == strip_spaces(text)
                assert "  " not in out and not out.startswith(" ") and not out.endswith(" ")
            elif kind is ObfuscationKind.REPLACE_SIMILAR_CHARS:
                assert reconstruct_replacement(text, out)
            elif kind is ObfuscationKind.SIMULATE_TYPOS:
                in_words, out_words = text.split(" "), out.split(" ")
                assert len(in_words) == len(out_words)
                assert all(plausible_single_typo(a, b) for a, b in zip(in_words, out_words))
    _pass("obfuscation: byte-exact canonical examples, 8 invariants x 1,000 strings")


# --- metric ---------------------------------------------------------------


def test_a06_auprc_oracle_1000_instances():
    """auprc == threshold-enumeration oracle within 1e-12 on 1,000 instances."""
    rng = random.Random(404)
    for _ in range(1000):
        n = rng.randint(1, 12)
        pairs = []
        while not any(pos for pos, _ in pairs):
            pairs = [
                (rng.random() < 0.45,
                 rng.choice([0.0, 0.125, 0.25, 0.5, 0.5, 0.875, 1.0, rng.random()]))
                for _ in range(n)
            ]
        scored = [
            ScoredExample(id=str(i), true_label=SafetyLabel.UNSAFE if pos else SafetyLabel.SAFE,
                          score=s)
            for i, (pos, s) in enumerate(pairs)
        ]
        expected = oracle_average_precision(pairs)
        assert abs(auprc(scored) - expected) < 1e-12

    perfect = [ScoredExample(id=f"u{i}", true_label=SafetyLabel.UNSAFE, score=0.8 + i / 100)
               for i in range(4)]
    perfect += [ScoredExample(id=f"s{i}", true_label=SafetyLabel.SAFE, score=0.1 + i / 100)
                for i in range(5)]
    assert auprc(perfect) == 1.0

    tied = [ScoredExample(id=f"x{i}", true_label=SafetyLabel.UNSAFE if i < 3 else SafetyLabel.SAFE,
                          score=0.5) for i in range(10)]
    assert auprc(tied) == 3 / 10
    _pass("AUPRC: 1,000-instance oracle agreement @1e-12, perfect=1.000, ties=p/n")


# --- flipped library ---------------------------------------------------------


def test_a07_flip_all_maps_scores_to_complement():
    """flip_all sends every knn_vote score s to 1-s (|dev| < 1e-9, 500 prompts)."""
    spec = EmbedderSpec(dim=128)
    store = LibraryStore(LibraryManifest(embedder=spec))
    word_rng = random.Random(8)
    pool = ["ember", "quarry", "violet", "sonar", "drift", "cobalt", "raven", "tundra"]
    for i in range(300):
        label = SafetyLabel.SAFE if i % 2 == 0 else SafetyLabel.UNSAFE
        prompt = f"{word_rng.choice(pool)} {word_rng.choice(pool)} entry {i}"
        store.add_entry(make_entry(f"f{i:03d}", label, embed(prompt, spec), prompt=prompt))
    store.publish()

    prompts = [
        f"{word_rng.choice(pool)} {word_rng.choice(pool)} probe {i}" for i in range(500)
    ]
    cls = ClassifierSpec()
    before = [classify(p, store.snapshot, cls) for p in prompts]
    store.flip_labels("all", drop_explanations=True)
    store.publish()
    after = [classify(p, store.snapshot, cls) for p in prompts]

    max_dev = max(
        abs(b.unsafe_probability + a.unsafe_probability - 1.0) for b, a in zip(before, after)
    )
    assert max_dev < 1e-9, f"max |s + s' - 1| = {max_dev}"
    decisive = [(b, a) for b, a in zip(before, after) if b.unsafe_probability != 0.5]
    assert decisive, "need decisive predictions to check flipping"
    assert all(b.label is not a.label for b, a in decisive)
    _pass(f"flipped library: max |s + s' - 1| = {max_dev:.2e} over 500 prompts, 100% flipped")


# --- benchmark trends ---------------------------------------------------------


@pytest.fixture(scope="module")
def benchmark():
    data = benchmark_data(seed=0)
    ladder = benchmark_snapshots(data, dim=256, seed=0)
    return data, ladder


def test_a08_library_size_trend(benchmark):
    """mean AUPRC non-decreasing along the ladder; ID+EX >= ID + 0.05; < 5 min."""
    data, ladder = benchmark
    t0 = time.perf_counter()
    reports = run_library_sweep(data.shift_test, ClassifierSpec(), ladder, seed=0)
    elapsed = time.perf_counter() - t0
    averages = [r.average for r in reports]
    labels = [label for label, _ in ladder]
    for (la, a), (lb, b) in zip(zip(labels, averages), zip(labels[1:], averages[1:])):
        assert b >= a, f"AUPRC decreased {la}={a:.4f} -> {lb}={b:.4f}"
    assert averages[-1] - averages[0] >= 0.05
    assert elapsed < 300.0, f"sweep took {elapsed:.0f}s (budget 300s)"
    trail = " -> ".join(f"{v:.3f}" for v in averages)
    _pass(f"library-size trend: {trail} (gain {averages[-1] - averages[0]:+.3f}) in {elapsed:.0f}s")


def test_a09_reference_count_trend(benchmark):
    """mean AUPRC non-decreasing over 0,2,4,6,8 refs; gain(6->8) <= gain(0->2)."""
    data, ladder = benchmark
    full = ladder[-1][1]
    reports = run_refcount_sweep(data.shift_test, ClassifierSpec(), full,
                                 counts=(0, 2, 4, 6, 8), seed=0)
    averages = [r.average for r in reports]
    for a, b in zip(averages, averages[1:]):
        assert b >= a, f"AUPRC decreased along refcounts: {averages}"
    gain_02 = averages[1] - averages[0]
    gain_68 = averages[4] - averages[3]
    assert gain_68 <= gain_02
    trail = " -> ".join(f"{v:.3f}" for v in averages)
    _pass(f"refcount trend: {trail} (gain 0->2 {gain_02:+.3f}, 6->8 {gain_68:+.3f})")


# --- service + persistence ----------------------------------------------------


def _big_text_store(n=10_000, dim=256):
    spec = EmbedderSpec(dim=dim)
    store = LibraryStore(LibraryManifest(embedder=spec))
    for i in range(n):
        if i % 2 == 0:
            label, stem = SafetyLabel.SAFE, "quiet harbor painting"
        else:
            label, stem = SafetyLabel.UNSAFE, "violent street ambush"
        prompt = f"{stem} number {i}"
        store.add_entry(make_entry(f"big-{i:05d}", label, embed(prompt, spec), prompt=prompt))
    store.publish()
    return store


def test_a10_hot_fix_end_to_end_latency():
    """add unsafe near-duplicate via the API; verdict flips in < 1 s at 10k/256."""
    store = _big_text_store()
    config = ServiceConfig(embedder=EmbedderSpec(dim=256), classifier=ClassifierSpec())
    service, app = build_service(config)
    service.store = store  # preload the 10k-entry library
    app.state.service = service

    probe = "quiet harbor painting with a twist"
    with TestClient(app) as client:
        before = client.post("/classify", json={"prompt": probe}).json()
        assert before["label"] == "safe"

        t_ack = None
        r = client.post(
            "/library/entries",
            json={"prompt": probe, "label": "unsafe", "explanation": "new abuse pattern"},
        )
        assert r.status_code == 201
        t_ack = time.perf_counter()
        after = client.post("/classify", json={"prompt": probe}).json()
        t_flip = time.perf_counter()
        assert after["label"] == "unsafe"
        assert after["library_version"] > before["library_version"]
        latency = t_flip - t_ack
        assert latency < 1.0, f"mutation-to-verdict latency {latency:.3f}s"
    _pass(f"hot-fix: safe->unsafe via API at 10k entries, visible in {latency * 1000:.0f} ms")


def test_a11_persistence_round_trip_10k(tmp_path):
    """save/load round-trips a 10,000-entry dim-256 library bitwise."""
    entries = random_entries(10_000, 256, seed=5)
    snap = build_store(entries, dim=256, seed=77).snapshot
    path = tmp_path / "big_library.jsonl"
    save(snap, path)
    loaded = load(path)
    assert loaded.version == snap.version
    assert loaded.manifest == snap.manifest
    assert len(loaded) == 10_000
    assert loaded == snap  # entry equality includes bitwise embedding compare
    for a, b in zip(loaded.entries[:100], snap.entries[:100]):
        assert a.embedding.tobytes() == b.embedding.tobytes()
    _pass("persistence: 10k-entry library round-trips bitwise (manifest, entries, embeddings)")
