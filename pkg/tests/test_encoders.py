import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest

from kghop.encoders import (CachingEncoder, EncoderSpec, HashFeatureEncoder,
                            RemoteEncoder, make_encoder)
from kghop.errors import ConfigError, EncoderError


class _StubHandler(BaseHTTPRequestHandler):
    """Deterministic stand-in for the embedding sidecar wire contract."""

    dim = 8
    fail_next = {"count": 0}
    mode = "ok"

    def do_POST(self):
        if self.path != "/embed":
            self.send_error(404)
            return
        if self.fail_next["count"] > 0:
            self.fail_next["count"] -= 1
            self.send_error(503)
            return
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        texts = body["texts"]
        if self.mode == "bad_dim":
            payload = {"dim": self.dim + 1, "embeddings": [[0.0] * (self.dim + 1) for _ in texts]}
        elif self.mode == "non_finite":
            payload = {"dim": self.dim, "embeddings": [[float("nan")] * self.dim for _ in texts]}
        else:
            embeddings = []
            for text in texts:
                rng = np.random.default_rng(abs(hash(text)) % (2 ** 32))
                embeddings.append(rng.normal(size=self.dim).tolist())
            payload = {"dim": self.dim, "embeddings": embeddings}
        blob = json.dumps(payload).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(blob)))
        self.end_headers()
        self.wfile.write(blob)

    def log_message(self, *args):
        pass


@pytest.fixture(scope="module")
def stub_endpoint():
    server = HTTPServer(("127.0.0.1", 0), _StubHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}"
    server.shutdown()


@pytest.fixture(autouse=True)
def reset_stub():
    _StubHandler.mode = "ok"
    _StubHandler.fail_next["count"] = 0


class TestHashEncoder:
    def test_empty_string_is_zero_vector(self):
        enc = HashFeatureEncoder(dim=32)
        vec = enc.encode("")
        assert vec.shape == (32,)
        assert not vec.any()

    def test_norm_is_zero_or_one(self):
        enc = HashFeatureEncoder(dim=64)
        for text in ("", "a", "Current Entity: X", "one two three four five"):
            norm = float(np.linalg.norm(enc.encode(text)))
            assert norm == pytest.approx(0.0) or norm == pytest.approx(1.0, abs=1e-6)

    def test_identical_texts_identical_embeddings(self):
        enc = HashFeatureEncoder(dim=128)
        a, b = enc.encode("same text"), enc.encode("same text")
        assert np.array_equal(a, b)

    def test_current_entity_changes_vector(self):
        # two observation blocks differing only in the final line
        enc = HashFeatureEncoder(dim=512)
        base = "### Environment:\nDialog History: []\nUtterance: hi\nPath History: []\n"
        a = enc.encode(base + "Current Entity: ent001")
        b = enc.encode(base + "Current Entity: ent002")
        assert not np.array_equal(a, b)

    def test_batch_equals_singles(self):
        enc = HashFeatureEncoder(dim=64)
        texts = ["a", "b c", "", "d e f"]
        batch = enc.encode_batch(texts)
        for text, vec in zip(texts, batch):
            assert np.array_equal(vec, enc.encode(text))


class TestRemoteEncoder:
    def test_round_trip_and_dim(self, stub_endpoint):
        enc = RemoteEncoder(stub_endpoint, dim=8)
        vec = enc.encode("hello")
        assert vec.shape == (8,)
        assert np.isfinite(vec).all()

    def test_batch_order_preserved(self, stub_endpoint):
        enc = RemoteEncoder(stub_endpoint, dim=8)
        texts = [f"text {i}" for i in range(6)]
        batch = enc.encode_batch(texts)
        shuffled = enc.encode_batch(texts[::-1])
        for a, b in zip(batch, shuffled[::-1]):
            assert np.array_equal(a, b)

    def test_empty_batch(self, stub_endpoint):
        assert RemoteEncoder(stub_endpoint, dim=8).encode_batch([]) == []

    def test_retries_transient_failure(self, stub_endpoint):
        _StubHandler.fail_next["count"] = 2
        enc = RemoteEncoder(stub_endpoint, dim=8, retries=3, backoff=0.01)
        assert enc.encode("flaky").shape == (8,)

    def test_exhausted_retries_raise(self, stub_endpoint):
        _StubHandler.fail_next["count"] = 10
        enc = RemoteEncoder(stub_endpoint, dim=8, retries=1, backoff=0.01)
        with pytest.raises(EncoderError):
            enc.encode("down")

    def test_dimension_mismatch_rejected(self, stub_endpoint):
        _StubHandler.mode = "bad_dim"
        enc = RemoteEncoder(stub_endpoint, dim=8, retries=0)
        with pytest.raises(EncoderError, match="dimension"):
            enc.encode("x")

    def test_non_finite_rejected(self, stub_endpoint):
        _StubHandler.mode = "non_finite"
        enc = RemoteEncoder(stub_endpoint, dim=8, retries=0)
        with pytest.raises(EncoderError, match="finite"):
            enc.encode("x")

    def test_requires_endpoint(self):
        with pytest.raises(ConfigError):
            RemoteEncoder("")


class TestCache:
    def test_results_unchanged_and_hits_counted(self):
        inner = HashFeatureEncoder(dim=32)
        cached = CachingEncoder(inner, capacity=4)
        a1 = cached.encode("alpha")
        a2 = cached.encode("alpha")
        assert np.array_equal(a1, a2)
        assert np.array_equal(a1, inner.encode("alpha"))
        assert cached.hits == 1 and cached.misses == 1
        assert cached.hit_ratio() == pytest.approx(0.5)

    def test_capacity_bound(self):
        cached = CachingEncoder(HashFeatureEncoder(dim=8), capacity=2)
        for text in ("a", "b", "c", "d"):
            cached.encode(text)
        assert len(cached._cache) == 2

    def test_spec_factory(self):
        enc = make_encoder(EncoderSpec(kind="hash", dim=16))
        assert enc.dim == 16
        with pytest.raises(ConfigError):
            make_encoder(EncoderSpec(kind="remote", dim=16, endpoint=None))
