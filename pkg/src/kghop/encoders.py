"""State encoders: observation text -> fixed-dimension embedding.

Two kinds behind one interface: a deterministic token-n-gram feature hasher
for desk-scale work, and an HTTP client for a sidecar that serves real
language-model embeddings. Both are pure functions of the text; a bounded
LRU cache can wrap either (states repeat heavily across update epochs and
the encoder is frozen, so caching never changes results).
"""

import threading
import time
from collections import OrderedDict
from dataclasses import dataclass
from typing import Optional

import numpy as np
import requests

from . import kernels
from .errors import ConfigError, EncoderError

ENCODER_HASH = "hash"
ENCODER_REMOTE = "remote"
EMBED_MODE = "last_token"


@dataclass
class EncoderSpec:
    kind: str = ENCODER_HASH
    dim: int = 512
    endpoint: Optional[str] = None
    normalize: bool = True
    cache_size: int = 65536

    def validate(self):
        if self.dim <= 0:
            raise ConfigError("encoder dim must be positive")
        if self.kind == ENCODER_REMOTE and not self.endpoint:
            raise ConfigError("remote encoder requires an endpoint URL")
        if self.kind not in (ENCODER_HASH, ENCODER_REMOTE):
            raise ConfigError(f"unknown encoder kind {self.kind!r}")


class HashFeatureEncoder:
    """Signed token-n-gram hashing into `dim` buckets, then L2 normalization.

    The empty text maps to the zero vector (normalization skipped).
    """

    def __init__(self, dim=512, normalize=True, ngram_min=1, ngram_max=2):
        if dim <= 0:
            raise ConfigError("encoder dim must be positive")
        self.dim = dim
        self.normalize = normalize
        self.ngram_min = ngram_min
        self.ngram_max = ngram_max

    def encode(self, text):
        vec = kernels.hash_ngram_features(text.encode("utf-8"), self.dim,
                                          self.ngram_min, self.ngram_max)
        if self.normalize:
            norm = float(np.linalg.norm(vec))
            if norm > 0:
                vec = vec / np.float32(norm)
        return vec

    def encode_batch(self, texts):
        return [self.encode(t) for t in texts]


class RemoteEncoder:
    """Client for the embedding sidecar's POST /embed wire contract.

    Failures are retried with backoff, then surfaced as EncoderError; the
    caller never receives silently substituted vectors.
    """

    def __init__(self, endpoint, dim=None, retries=3, backoff=0.5, timeout=60.0,
                 session=None):
        if not endpoint:
            raise ConfigError("remote encoder requires an endpoint URL")
        self.endpoint = endpoint.rstrip("/")
        self.dim = dim
        self.retries = retries
        self.backoff = backoff
        self.timeout = timeout
        self._session = session or requests.Session()

    def _post(self, texts):
        last_error = None
        for attempt in range(self.retries + 1):
            try:
                resp = self._session.post(
                    f"{self.endpoint}/embed",
                    json={"texts": list(texts), "mode": EMBED_MODE},
                    timeout=self.timeout,
                )
                if resp.status_code != 200:
                    raise EncoderError(f"embed endpoint returned {resp.status_code}: {resp.text[:200]}")
                return resp.json()
            except (requests.RequestException, ValueError, EncoderError) as exc:
                last_error = exc
                if attempt < self.retries:
                    time.sleep(self.backoff * (2 ** attempt))
        raise EncoderError(f"embed request failed after {self.retries + 1} attempts: {last_error}")

    def _validate(self, payload, n_texts):
        dim = payload.get("dim")
        embeddings = payload.get("embeddings")
        if not isinstance(dim, int) or not isinstance(embeddings, list):
            raise EncoderError("malformed embed response")
        if self.dim is not None and dim != self.dim:
            raise EncoderError(f"embed dimension mismatch: expected {self.dim}, got {dim}")
        if len(embeddings) != n_texts:
            raise EncoderError(f"embed count mismatch: sent {n_texts}, got {len(embeddings)}")
        out = []
        for row in embeddings:
            vec = np.asarray(row, dtype=np.float32)
            if vec.shape != (dim,):
                raise EncoderError(f"embed row has length {vec.shape}, expected {dim}")
            if not np.isfinite(vec).all():
                raise EncoderError("embed response contains non-finite values")
            out.append(vec)
        return out

    def encode(self, text):
        return self.encode_batch([text])[0]

    def encode_batch(self, texts):
        texts = list(texts)
        if not texts:
            return []
        payload = self._post(texts)
        return self._validate(payload, len(texts))


class CachingEncoder:
    """Bounded LRU around any encoder; thread-safe; results identical."""

    def __init__(self, inner, capacity=65536):
        self.inner = inner
        self.capacity = capacity
        self._cache = OrderedDict()
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    @property
    def dim(self):
        return self.inner.dim

    def encode(self, text):
        with self._lock:
            vec = self._cache.get(text)
            if vec is not None:
                self._cache.move_to_end(text)
                self.hits += 1
                return vec
            self.misses += 1
        vec = self.inner.encode(text)
        with self._lock:
            self._cache[text] = vec
            if len(self._cache) > self.capacity:
                self._cache.popitem(last=False)
        return vec

    def encode_batch(self, texts):
        return [self.encode(t) for t in texts]

    def hit_ratio(self):
        total = self.hits + self.misses
        return self.hits / total if total else 0.0


def make_encoder(spec, cached=True):
    spec.validate()
    if spec.kind == ENCODER_HASH:
        enc = HashFeatureEncoder(dim=spec.dim, normalize=spec.normalize)
    else:
        enc = RemoteEncoder(spec.endpoint, dim=spec.dim)
    return CachingEncoder(enc, spec.cache_size) if cached else enc
