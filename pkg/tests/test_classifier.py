import threading
import time

import numpy as np
import pytest

from conftest import build_store, make_entry, random_entries

from ragmod.classifier import (
    ClassifierSpec,
    ExternalEndpoint,
    build_mock_classifier_app,
    classify,
    classify_detailed,
    external_classify,
    knn_vote_score,
    parse_external_reply,
)
from ragmod.embedding import EmbedderSpec, embed
from ragmod.errors import ConfigurationError, InvalidQueryError, ProtocolError, UpstreamError
from ragmod.store import LibraryManifest, LibraryStore, RetrievalResult, SafetyLabel


def _result(entry_id, label, distance):
    entry = make_entry(entry_id, label, [1.0, 0.0])
    return RetrievalResult(entry, distance)


def test_equal_distances_score_half():
    safe = [_result("s1", "safe", 0.7), _result("s2", "safe", 0.7)]
    unsafe = [_result("u1", "unsafe", 0.7), _result("u2", "unsafe", 0.7)]
    assert knn_vote_score(safe, unsafe) == 0.5


def test_no_references_score_half():
    assert knn_vote_score([], []) == 0.5


def test_hand_placed_fixture_matches_manual_weight_sum():
    # 6 entries on a plane, query at (2, 0). True L2 distances by hand:
    #   s1 (5,4)  -> 5    s2 (2,2) -> 2    s3 (8,8)   -> 10
    #   u1 (3,0)  -> 1    u2 (2,4) -> 4    u3 (11,12) -> 15
    # k=2 retrieves s2,s1 and u1,u2. With eps = 1e-6:
    #   wu = 1/1.000001 + 1/4.000001 = 1.2499989375010157
    #   ws = 1/2.000001 + 1/5.000001 = 0.6999997100001330
    #   p  = wu / (ws + wu)          = 0.6410255407627299
    entries = [
        make_entry("s1", "safe", [5.0, 4.0]),
        make_entry("s2", "safe", [2.0, 2.0]),
        make_entry("s3", "safe", [8.0, 8.0]),
        make_entry("u1", "unsafe", [3.0, 0.0]),
        make_entry("u2", "unsafe", [2.0, 4.0]),
        make_entry("u3", "unsafe", [11.0, 12.0]),
    ]
    snap = build_store(entries, dim=2).snapshot
    safe_r, unsafe_r = snap.retrieve(np.array([2.0, 0.0], dtype=np.float32), 2, 2)
    assert [r.entry.id for r in safe_r] == ["s2", "s1"]
    assert [r.entry.id for r in unsafe_r] == ["u1", "u2"]
    score = knn_vote_score(safe_r, unsafe_r)
    assert score == pytest.approx(0.6410255407627299, abs=1e-12)


def test_monotone_in_unsafe_distance():
    safe = [_result("s1", "safe", 1.0), _result("s2", "safe", 2.0)]
    base = knn_vote_score(safe, [_result("u1", "unsafe", 1.5)])
    closer = knn_vote_score(safe, [_result("u1", "unsafe", 1.2)])
    assert closer > base


def _text_library(n=20, dim=64):
    spec = EmbedderSpec(dim=dim)
    manifest = LibraryManifest(embedder=spec)
    store = LibraryStore(manifest)
    for i in range(n):
        label = SafetyLabel.SAFE if i % 2 == 0 else SafetyLabel.UNSAFE
        prompt = f"{'gentle meadow story' if label is SafetyLabel.SAFE else 'dangerous weapon recipe'} variant {i}"
        store.add_entry(
            make_entry(f"t{i:03d}", label, embed(prompt, spec), prompt=prompt)
        )
    store.publish()
    return store


def test_zero_distance_unsafe_dominates():
    store = _text_library()
    snap = store.snapshot
    target = snap.by_id["t001"]
    assert target.label is SafetyLabel.UNSAFE
    out = classify(target.prompt, snap, ClassifierSpec())
    assert out.unsafe_probability >= 0.99
    assert out.label is SafetyLabel.UNSAFE


def test_classify_is_deterministic_and_cites_retrieved():
    store = _text_library()
    snap = store.snapshot
    spec = ClassifierSpec()
    d1 = classify_detailed("a walk in the meadow", snap, spec)
    d2 = classify_detailed("a walk in the meadow", snap, spec)
    assert d1.output == d2.output
    retrieved = {r.entry.id for r in d1.safe_results + d1.unsafe_results}
    assert set(d1.output.citations) == retrieved
    assert len(d1.safe_results) == 2 and len(d1.unsafe_results) == 2
    assert not d1.output.shortfall
    assert d1.output.library_version == snap.version


def test_shortfall_flag_set_when_library_small():
    entries = [make_entry("s1", "safe", [1.0, 0.0]), make_entry("u1", "unsafe", [0.0, 1.0])]
    snap = build_store(entries, dim=2).snapshot
    spec = ClassifierSpec()
    detail = classify_detailed("p", snap, spec)
    # dim-2 trigram embedding of "p" is nonzero, retrieval works, 1+1 refs
    assert detail.output.shortfall
    assert len(detail.safe_results) == 1


def test_flip_all_maps_score_to_one_minus_s():
    entries = random_entries(60, 16, seed=21)
    store = build_store(entries, dim=16)
    spec = ClassifierSpec()
    prompts = [f"probe text number {i} with words" for i in range(40)]
    original = [classify(p, store.snapshot, spec) for p in prompts]
    store.flip_labels("all", drop_explanations=True)
    store.publish()
    flipped = [classify(p, store.snapshot, spec) for p in prompts]
    for before, after in zip(original, flipped):
        assert abs(before.unsafe_probability + after.unsafe_probability - 1.0) < 1e-9
        if before.unsafe_probability != 0.5:
            assert after.label is not before.label


def test_empty_snapshot_rejected():
    manifest = LibraryManifest(embedder=EmbedderSpec(dim=8))
    snap = LibraryStore(manifest).snapshot
    with pytest.raises(InvalidQueryError):
        classify("anything", snap, ClassifierSpec())


def test_zero_embedding_input_rejected():
    store = _text_library()
    with pytest.raises(InvalidQueryError):
        classify("!!!", store.snapshot, ClassifierSpec())


def test_spec_validation():
    with pytest.raises(ConfigurationError):
        ClassifierSpec(kind="mystery")
    with pytest.raises(ConfigurationError):
        ClassifierSpec(kind="external_endpoint")  # url required
    with pytest.raises(ConfigurationError):
        ClassifierSpec(epsilon=0.0)


def test_parse_external_reply_contract():
    assert parse_external_reply('{"first_token": "unsafe", "unsafe_probability": 0.8}') == ("unsafe", 0.8)
    with pytest.raises(ProtocolError):
        parse_external_reply('{"first_token": "meh", "unsafe_probability": 0.8}')
    with pytest.raises(ProtocolError):
        parse_external_reply('{"first_token": "safe", "unsafe_probability": 7}')
    with pytest.raises(UpstreamError):
        parse_external_reply("not json at all")


# --- live mock endpoint ------------------------------------------------------


@pytest.fixture(scope="module")
def mock_endpoint_url():
    import uvicorn

    app = build_mock_classifier_app()
    config = uvicorn.Config(app, host="127.0.0.1", port=0, log_level="error")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.time() + 10
    while not server.started:
        if time.time() > deadline:
            raise RuntimeError("mock server failed to start")
        time.sleep(0.02)
    host, port = server.servers[0].sockets[0].getsockname()[:2]
    yield f"http://{host}:{port}/classify"
    server.should_exit = True
    thread.join(timeout=5)


def test_external_classify_against_mock(mock_endpoint_url):
    spec = ClassifierSpec(
        classifier_id="ext", kind="external_endpoint", url=mock_endpoint_url
    )
    token, prob = external_classify("this mentions forbidden things", spec)
    assert token == "unsafe" and prob == pytest.approx(0.93)
    token, prob = external_classify("mild text", spec)
    assert token == "safe" and prob == pytest.approx(0.07)


def test_classify_via_external_endpoint(mock_endpoint_url):
    store = _text_library()
    spec = ClassifierSpec(
        classifier_id="ext", kind="external_endpoint", url=mock_endpoint_url
    )
    out = classify("a forbidden weapon recipe", store.snapshot, spec)
    assert out.label is SafetyLabel.UNSAFE
    assert out.unsafe_probability == pytest.approx(0.93)
    assert out.classifier_id == "ext"


def test_external_endpoint_down_raises_upstream():
    spec = ClassifierSpec(
        classifier_id="ext", kind="external_endpoint",
        url="http://127.0.0.1:1/classify", timeout=0.5,
    )
    with pytest.raises(UpstreamError):
        external_classify("x", spec)
