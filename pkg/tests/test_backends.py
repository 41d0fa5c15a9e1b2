from __future__ import annotations

import json
import logging
import math
import threading

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import FIXTURES
from oracles import unigram_logprob
from stub_server import StubCompletions
from gptscore.backends import (
    BackendConfig,
    BackendError,
    BoundaryError,
    CachedBackend,
    FixtureBackend,
    HttpBackend,
    NoLogprobsError,
    NonFiniteLogprobError,
    RawLogprobs,
    TransportError,
    UnigramBackend,
    cache_clear,
    cache_summary,
    cached,
    make_backend,
    slice_target,
    token_logprobs,
)
from gptscore.prompt import RenderedPrompt

WIRE = json.loads((FIXTURES / "wire" / "completion.json").read_text(encoding="utf-8"))
PROMPT = RenderedPrompt(WIRE["prefix"], WIRE["target"])


def _canned_target(payload):
    lp = payload["choices"][0]["logprobs"]
    boundary = len(WIRE["prefix"].encode("utf-8"))
    return [(t, l) for t, l, o in zip(lp["tokens"], lp["token_logprobs"], lp["text_offset"]) if o >= boundary]


def http_cfg(url, **kw):
    return BackendConfig(kind="http", model_id="stub-model", endpoint_url=url, base_backoff=0.0, **kw)


# --------------------------------------------------------------------------- slicing


def test_slice_by_offsets():
    raw = RawLogprobs(("ab", "cdef", "gh", "i"), (None, -1.0, -2.0, -3.0), (0, 4, 10, 13))
    got = slice_target(raw, "x" * 10)
    assert [t.offset for t in got] == [10, 13]
    assert [t.logprob for t in got] == [-2.0, -3.0]


def test_slice_straddle_is_error():
    raw = RawLogprobs(("abc", "def"), (None, -1.0), (0, 3))
    with pytest.raises(BoundaryError):
        slice_target(raw, "ab")


def test_slice_zero_tokens_is_error():
    raw = RawLogprobs(("abc",), (None,), (0,))
    with pytest.raises(BoundaryError):
        slice_target(raw, "abc")


def test_slice_null_in_target_is_error():
    raw = RawLogprobs(("a", "b"), (None, None), (0, 1))
    with pytest.raises(NonFiniteLogprobError):
        slice_target(raw, "a")
    raw = RawLogprobs(("a", "b"), (None, math.inf), (0, 1))
    with pytest.raises(NonFiniteLogprobError):
        slice_target(raw, "a")


def test_slice_offsets_must_increase():
    raw = RawLogprobs(("a", "b"), (-1.0, -1.0), (0, 0))
    with pytest.raises(BackendError):
        slice_target(raw, "")


def test_byte_versus_char_offsets():
    text = "é b"
    byte_raw = RawLogprobs(("é", " ", "b"), (None, -1.0, -2.0), (0, 2, 3))
    char_raw = RawLogprobs(("é", " ", "b"), (None, -1.0, -2.0), (0, 1, 2))
    assert [t.token for t in slice_target(byte_raw, "é ", "byte")] == ["b"]
    assert [t.token for t in slice_target(char_raw, "é ", "char")] == ["b"]
    assert text.encode()  # keeps the literal obviously non-ASCII


def test_whitespace_boundary_mode():
    glued = HttpBackend.parse(WIRE["glued_response"])
    with pytest.raises(BoundaryError):
        slice_target(glued, WIRE["prefix"])
    got = slice_target(glued, WIRE["prefix"], boundary_mode="whitespace")
    assert [t.token for t in got] == [" A", " cat", " sat", "."]
    raw = RawLogprobs(("ab", "cd"), (None, -1.0), (0, 2))
    with pytest.raises(BoundaryError):  # non-space straddle is still an error
        slice_target(raw, "abc", boundary_mode="whitespace")


@given(st.lists(st.text(alphabet="ab é\n", min_size=1, max_size=4), min_size=2, max_size=10), st.data())
def test_slicing_reproduces_target(pieces, data):
    cut = data.draw(st.integers(1, len(pieces) - 1))
    prefix, target = "".join(pieces[:cut]), "".join(pieces[cut:])
    offsets, pos = [], 0
    for p in pieces:
        offsets.append(pos)
        pos += len(p.encode("utf-8"))
    raw = RawLogprobs(tuple(pieces), (None,) + (-0.5,) * (len(pieces) - 1), tuple(offsets))
    got = slice_target(raw, prefix)
    assert "".join(t.token for t in got) == target


# --------------------------------------------------------------------------- http


def test_http_wire_protocol(monkeypatch):
    monkeypatch.setenv("GPTSCORE_API_KEY", "sk-test")
    with StubCompletions({WIRE["prompt"]: WIRE["response"]}) as stub:
        got = HttpBackend(http_cfg(stub.url)).token_logprobs(PROMPT)
    body = stub.requests[0]
    assert stub.paths == ["/v1/completions"]
    assert body == {
        "model": "stub-model",
        "prompt": WIRE["prompt"],
        "max_tokens": 0,
        "echo": True,
        "logprobs": 1,
        "temperature": 0,
    }
    assert stub.headers[0]["Authorization"] == "Bearer sk-test"
    assert [(t.token, t.logprob) for t in got] == _canned_target(WIRE["response"])
    assert "".join(t.token for t in got) == WIRE["target"]


def test_http_endpoint_with_v1_suffix():
    backend = HttpBackend(http_cfg("http://host:1/v1/"))
    assert backend.url == "http://host:1/v1/completions"


def test_leading_null_excluded():
    raw = HttpBackend.parse(WIRE["response"])
    assert raw.token_logprobs[0] is None
    got = slice_target(raw, WIRE["prefix"])
    assert all(math.isfinite(t.logprob) for t in got)


def test_missing_logprobs():
    with pytest.raises(NoLogprobsError):
        HttpBackend.parse({"choices": [{"text": "x"}]})
    with pytest.raises(NoLogprobsError):
        HttpBackend.parse({"choices": [{"logprobs": None}]})
    with pytest.raises(NoLogprobsError):
        HttpBackend.parse({})


def test_retry_then_success():
    sleeps = []
    with StubCompletions({WIRE["prompt"]: WIRE["response"]}, fail_first=2) as stub:
        backend = HttpBackend(http_cfg(stub.url, max_attempts=3), sleep=sleeps.append)
        got = backend.token_logprobs(PROMPT)
    assert len(stub.requests) == 3
    assert [(t.token, t.logprob) for t in got] == _canned_target(WIRE["response"])
    assert sleeps == [0.0, 0.0]


def test_retry_backoff_schedule():
    sleeps = []
    with StubCompletions({WIRE["prompt"]: WIRE["response"]}, fail_first=3, fail_status=429) as stub:
        cfg = BackendConfig(kind="http", model_id="m", endpoint_url=stub.url, base_backoff=0.5, max_attempts=4)
        HttpBackend(cfg, sleep=sleeps.append).token_logprobs(PROMPT)
    assert sleeps == [0.5, 1.0, 2.0]


def test_retry_exhausted():
    with StubCompletions({WIRE["prompt"]: WIRE["response"]}, fail_first=3) as stub:
        backend = HttpBackend(http_cfg(stub.url, max_attempts=3), sleep=lambda s: None)
        with pytest.raises(TransportError):
            backend.token_logprobs(PROMPT)
    assert len(stub.requests) == 3


def test_non_retryable_status():
    with StubCompletions({}) as stub:
        backend = HttpBackend(http_cfg(stub.url, max_attempts=5), sleep=lambda s: None)
        with pytest.raises(BackendError) as err:
            backend.token_logprobs(PROMPT)
    assert not isinstance(err.value, TransportError)
    assert len(stub.requests) == 1


def test_connection_refused_is_transport_error():
    with StubCompletions({}) as stub:
        url = stub.url
    backend = HttpBackend(http_cfg(url, max_attempts=2), sleep=lambda s: None)
    with pytest.raises(TransportError):
        backend.token_logprobs(PROMPT)


def test_max_parallel_bounds_in_flight_requests():
    class Counting:
        def __init__(self):
            self.active = 0
            self.peak = 0
            self.lock = threading.Lock()

        def post(self, url, json, headers):
            import time

            import httpx

            with self.lock:
                self.active += 1
                self.peak = max(self.peak, self.active)
            time.sleep(0.01)
            with self.lock:
                self.active -= 1
            return httpx.Response(200, json=WIRE["response"])

    client = Counting()
    backend = HttpBackend(http_cfg("http://unused", max_parallel=2), client=client)
    threads = [threading.Thread(target=backend.token_logprobs, args=(PROMPT,)) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert client.peak <= 2
    assert backend.request_count == 8


# --------------------------------------------------------------------------- fixture / unigram


def test_fixture_backend_file(tmp_path):
    path = tmp_path / "fx.json"
    lp = WIRE["response"]["choices"][0]["logprobs"]
    path.write_text(json.dumps({"responses": [{"prompt": WIRE["prompt"], **lp}]}))
    backend = FixtureBackend(BackendConfig(kind="fixture", model_id="f", fixture_path=str(path)))
    assert [(t.token, t.logprob) for t in backend.token_logprobs(PROMPT)] == _canned_target(WIRE["response"])
    with pytest.raises(BackendError):
        backend.token_logprobs(RenderedPrompt("other ", "prompt"))


def test_fixture_synthetic_is_deterministic():
    cfg = BackendConfig(kind="fixture", model_id="f")
    a = FixtureBackend(cfg, fallback="synthetic").token_logprobs(PROMPT)
    b = FixtureBackend(cfg, fallback="synthetic").token_logprobs(PROMPT)
    assert a == b
    assert "".join(t.token for t in a) == WIRE["target"]
    assert all(t.logprob < 0 for t in a)


def test_unigram_hand_example():
    backend = UnigramBackend(BackendConfig(kind="unigram", model_id="u"), corpus="a a b")
    got = backend.token_logprobs(RenderedPrompt("x ", "a b"))
    assert [t.logprob for t in got] == [math.log(3 / 5), math.log(2 / 5)]
    assert got[0].logprob == pytest.approx(-0.5108, abs=1e-4)
    assert got[1].logprob == pytest.approx(-0.9163, abs=1e-4)


CORPUS = "the cat sat on the mat while the dog slept near the warm fire"


@given(st.lists(st.sampled_from(CORPUS.split() + ["zebra"]), min_size=1, max_size=8), st.text(alphabet="ab \n", max_size=12))
def test_unigram_position_independent(words, prefix_noise):
    backend = UnigramBackend(BackendConfig(kind="unigram", model_id="u"), corpus=CORPUS)
    target = " ".join(words)
    for prefix in ("", "x ", prefix_noise + " "):
        if not prefix:
            continue
        got = backend.token_logprobs(RenderedPrompt(prefix, target))
        assert [t.token for t in got] == target.split()
        assert [t.logprob for t in got] == pytest.approx([unigram_logprob(CORPUS, w) for w in words], abs=1e-15)


def test_unigram_normalised_over_vocabulary():
    backend = UnigramBackend(BackendConfig(kind="unigram", model_id="u"), corpus=CORPUS)
    total = math.fsum(math.exp(backend.logprob(w)) for w in backend.vocabulary)
    assert total == pytest.approx(1.0, abs=1e-12)
    # unseen words get the add-one floor, outside the normalised vocabulary
    assert backend.logprob("zebra") == unigram_logprob(CORPUS, "zebra")


def test_unigram_corpus_file(tmp_path):
    (tmp_path / "c.txt").write_text("a a b")
    backend = make_backend(BackendConfig(kind="unigram", model_id="u", corpus=str(tmp_path / "c.txt")))
    assert backend.logprob("a") == math.log(3 / 5)


def test_config_validation():
    with pytest.raises(ValueError):
        BackendConfig(kind="http", model_id="m")
    with pytest.raises(ValueError):
        BackendConfig(kind="fixture", max_parallel=0)
    with pytest.raises(ValueError):
        BackendConfig(kind="fixture", max_attempts=0)
    with pytest.raises(ValueError):
        BackendConfig(kind="fixture", offset_unit="word")


# --------------------------------------------------------------------------- cache


def test_cache_second_call_makes_no_request(tmp_path):
    with StubCompletions({WIRE["prompt"]: WIRE["response"]}) as stub:
        backend = cached(http_cfg(stub.url, cache_dir=str(tmp_path)))
        first = backend.token_logprobs(PROMPT)
        second = backend.token_logprobs(PROMPT)
    assert len(stub.requests) == 1
    assert first == second
    assert backend.stats.hits == 1 and backend.stats.misses == 1
    entry = json.loads(next(tmp_path.glob("*.json")).read_text())
    assert set(entry) >= {"key", "model_id", "prompt_sha256", "tokens", "token_logprobs", "text_offset", "created_at"}


def test_cache_survives_new_backend(tmp_path):
    cfg = BackendConfig(kind="fixture", model_id="f", cache_dir=str(tmp_path))
    inner = FixtureBackend(cfg, fallback="synthetic")
    CachedBackend(inner, tmp_path).token_logprobs(PROMPT)
    again_inner = FixtureBackend(cfg, fallback="synthetic")
    CachedBackend(again_inner, tmp_path).token_logprobs(PROMPT)
    assert again_inner.request_count == 0


def test_cache_distinguishes_models(tmp_path):
    for model in ("m1", "m2"):
        cfg = BackendConfig(kind="fixture", model_id=model, cache_dir=str(tmp_path))
        CachedBackend(FixtureBackend(cfg, fallback="synthetic"), tmp_path).token_logprobs(PROMPT)
    assert cache_summary(tmp_path)["entries"] == 2


def test_corrupted_entry_refetched(tmp_path, caplog):
    cfg = BackendConfig(kind="fixture", model_id="f", cache_dir=str(tmp_path))
    first = CachedBackend(FixtureBackend(cfg, fallback="synthetic"), tmp_path)
    want = first.token_logprobs(PROMPT)
    path = next(tmp_path.glob("*.json"))
    path.write_text(path.read_text()[:40])  # truncate
    inner = FixtureBackend(cfg, fallback="synthetic")
    backend = CachedBackend(inner, tmp_path)
    with caplog.at_level(logging.WARNING, logger="gptscore"):
        assert backend.token_logprobs(PROMPT) == want
    assert inner.request_count == 1
    assert backend.stats.corrupted == 1
    assert any("corrupted" in r.message for r in caplog.records)
    # the rewritten entry is valid again
    third = FixtureBackend(cfg, fallback="synthetic")
    CachedBackend(third, tmp_path).token_logprobs(PROMPT)
    assert third.request_count == 0


def test_tampered_entry_fails_checksum(tmp_path):
    cfg = BackendConfig(kind="fixture", model_id="f", cache_dir=str(tmp_path))
    CachedBackend(FixtureBackend(cfg, fallback="synthetic"), tmp_path).token_logprobs(PROMPT)
    path = next(tmp_path.glob("*.json"))
    entry = json.loads(path.read_text())
    entry["token_logprobs"][-1] = -99.0
    path.write_text(json.dumps(entry))
    backend = CachedBackend(FixtureBackend(cfg, fallback="synthetic"), tmp_path)
    got = backend.token_logprobs(PROMPT)
    assert got[-1].logprob != -99.0
    assert backend.stats.corrupted == 1


def test_concurrent_writers_single_entry(tmp_path):
    cfg = BackendConfig(kind="fixture", model_id="f", cache_dir=str(tmp_path))
    results = []
    barrier = threading.Barrier(8)

    def worker():
        backend = CachedBackend(FixtureBackend(cfg, fallback="synthetic"), tmp_path)
        barrier.wait()
        results.append(backend.token_logprobs(PROMPT))

    threads = [threading.Thread(target=worker) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(list(tmp_path.glob("*.json"))) == 1
    assert not list(tmp_path.glob(".tmp-*"))
    assert all(r == results[0] for r in results)


def test_cache_clear(tmp_path):
    cfg = BackendConfig(kind="fixture", model_id="f", cache_dir=str(tmp_path))
    token_logprobs(CachedBackend(FixtureBackend(cfg, fallback="synthetic"), tmp_path), PROMPT)
    assert cache_clear(tmp_path) == 1
    assert cache_summary(tmp_path) == {"entries": 0, "bytes": 0}
