"""Node feature providers: local TF-IDF, embedding files, remote services.

EMB1 file format (bit-exact container for embedding matrices): magic bytes
``EMB1``, little-endian u64 row count n, u64 column count d, then n*d
little-endian IEEE-754 float32 values, row-major.

Remote protocol: ``POST <endpoint>/embed`` with JSON body
``{"model": str, "texts": [str]}``; a 200 response carries
``{"embeddings": [[float]]}`` with one vector per input text, in order.
Any non-200 status or transport error counts as a failure; failed batches
are retried with exponential backoff (3 attempts total). Every fetched
vector is cached as ``<cache_dir>/<sha256 hex>.emb`` (EMB1, n=1), keyed by
(model id, text), and warm-cache calls issue no requests at all. Returned
rows are always read back from the cache, so repeat calls are bit-identical.
"""

import hashlib
import json
import os
import re
import struct
import tempfile
import time
import urllib.error
import urllib.request
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

ENCODER_KINDS = ("tfidf", "file", "remote")
CACHE_ENV_VAR = "TAGFORGE_CACHE"

_EMB1_MAGIC = b"EMB1"
_TOKEN_RE = re.compile(r"[a-z0-9]+")


class EmbeddingFormatError(ValueError):
    """An EMB1 file is malformed."""


class RemoteEmbeddingError(RuntimeError):
    """The remote embedding service failed or returned malformed data."""


@dataclass(frozen=True)
class EncoderSpec:
    """One feature source. Exactly the fields for its kind are required:

    * tfidf: ``vocab_size``
    * file: ``path`` to an EMB1 file
    * remote: ``endpoint``, ``model``; ``cache_dir`` defaults to
      $TAGFORGE_CACHE; ``batch_size``, ``max_in_flight`` and
      ``retry_base_delay`` tune the client.
    """

    name: str
    kind: str
    vocab_size: int | None = None
    path: str | None = None
    endpoint: str | None = None
    model: str | None = None
    batch_size: int = 16
    cache_dir: str | None = None
    max_in_flight: int = 1
    retry_base_delay: float = 0.5

    def __post_init__(self):
        if self.kind not in ENCODER_KINDS:
            raise ValueError(f"encoder kind must be one of {ENCODER_KINDS}, got {self.kind!r}")
        if not self.name:
            raise ValueError("encoder needs a name")
        if self.kind == "tfidf" and (self.vocab_size is None or self.vocab_size < 1):
            raise ValueError(f"tfidf encoder {self.name!r} requires a positive vocab_size")
        if self.kind == "file" and not self.path:
            raise ValueError(f"file encoder {self.name!r} requires a path")
        if self.kind == "remote":
            if not self.endpoint or not self.model:
                raise ValueError(f"remote encoder {self.name!r} requires endpoint and model")
            if self.resolved_cache_dir() is None:
                raise ValueError(
                    f"remote encoder {self.name!r} requires cache_dir or ${CACHE_ENV_VAR}"
                )
            if self.batch_size < 1 or self.max_in_flight < 1:
                raise ValueError("batch_size and max_in_flight must be >= 1")

    def resolved_cache_dir(self) -> str | None:
        return self.cache_dir or os.environ.get(CACHE_ENV_VAR)


def tokenize(text: str) -> list[str]:
    """Lowercase alphanumeric runs."""
    return _TOKEN_RE.findall(text.lower())


def build_vocab(corpus: list[str], vocab_size: int) -> list[str]:
    """Top terms by document frequency; ties break lexicographically."""
    if not corpus:
        raise ValueError("empty corpus")
    df = Counter()
    for doc in corpus:
        df.update(set(tokenize(doc)))
    ordered = sorted(df.items(), key=lambda item: (-item[1], item[0]))
    return [term for term, _ in ordered[:vocab_size]]


def _term_count_matrix(corpus: list[str], vocab: list[str]) -> np.ndarray:
    index = {term: j for j, term in enumerate(vocab)}
    counts = np.zeros((len(corpus), len(vocab)), dtype=np.float64)
    for i, doc in enumerate(corpus):
        for token in tokenize(doc):
            j = index.get(token)
            if j is not None:
                counts[i, j] += 1.0
    return counts


def tfidf(corpus: list[str], vocab_size: int) -> tuple[np.ndarray, list[str]]:
    """TF-IDF features: tf = raw count, idf = ln((1+N)/(1+df)) + 1, rows
    L2-normalized (all-zero rows stay zero). Returns (matrix, vocab).
    """
    vocab = build_vocab(corpus, vocab_size)
    counts = _term_count_matrix(corpus, vocab)
    n_docs = len(corpus)
    df = (counts > 0).sum(axis=0)
    idf = np.log((1.0 + n_docs) / (1.0 + df)) + 1.0
    weighted = counts * idf
    norms = np.linalg.norm(weighted, axis=1, keepdims=True)
    return weighted / np.where(norms == 0.0, 1.0, norms), vocab


def word_binary(corpus: list[str], vocab_size: int) -> np.ndarray:
    """Binary keyword-presence matrix over the TF-IDF vocabulary."""
    vocab = build_vocab(corpus, vocab_size)
    return (_term_count_matrix(corpus, vocab) > 0).astype(np.float64)


def save_embedding_file(path: str, matrix: np.ndarray) -> None:
    """Write an EMB1 file (float32). The write is atomic."""
    m = np.ascontiguousarray(matrix, dtype="<f4")
    if m.ndim != 2:
        raise ValueError(f"embedding matrix must be 2-D, got shape {m.shape}")
    if not np.isfinite(m).all():
        raise ValueError("embedding matrix has non-finite values")
    payload = _EMB1_MAGIC + struct.pack("<QQ", *m.shape) + m.tobytes()
    _atomic_write(path, payload)


def load_embedding_file(path: str) -> np.ndarray:
    """Read an EMB1 file back as float32, bit-exact."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 20 or blob[:4] != _EMB1_MAGIC:
        raise EmbeddingFormatError(f"{path}: not an EMB1 file (bad magic)")
    n, d = struct.unpack("<QQ", blob[4:20])
    expected = 20 + n * d * 4
    if len(blob) != expected:
        raise EmbeddingFormatError(
            f"{path}: payload is {len(blob)} bytes, expected {expected} for {n}x{d}"
        )
    matrix = np.frombuffer(blob[20:], dtype="<f4").reshape(n, d)
    if not np.isfinite(matrix).all():
        raise EmbeddingFormatError(f"{path}: non-finite values")
    return matrix.copy()


def _atomic_write(path: str, payload: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _cache_key(model: str, text: str) -> str:
    digest = hashlib.sha256()
    digest.update(model.encode())
    digest.update(b"\x00")
    digest.update(text.encode())
    return digest.hexdigest()


def _post_embed(endpoint: str, model: str, texts: list[str], timeout: float = 30.0):
    url = endpoint.rstrip("/") + "/embed"
    body = json.dumps({"model": model, "texts": texts}).encode()
    request = urllib.request.Request(
        url, data=body, headers={"Content-Type": "application/json"}, method="POST"
    )
    try:
        with urllib.request.urlopen(request, timeout=timeout) as response:
            if response.status != 200:
                raise RemoteEmbeddingError(f"{url}: HTTP {response.status}")
            payload = json.loads(response.read())
    except (urllib.error.URLError, OSError, json.JSONDecodeError, ValueError) as exc:
        raise RemoteEmbeddingError(f"{url}: {exc}") from exc
    if not isinstance(payload, dict) or "embeddings" not in payload:
        raise RemoteEmbeddingError(f"{url}: response missing 'embeddings'")
    return payload["embeddings"]


def _fetch_batch(spec: EncoderSpec, texts: list[str]) -> list[np.ndarray]:
    last_error: Exception | None = None
    for attempt in range(3):
        try:
            vectors = _post_embed(spec.endpoint, spec.model, texts)
            break
        except RemoteEmbeddingError as exc:
            last_error = exc
            if attempt < 2:
                time.sleep(spec.retry_base_delay * 2**attempt)
    else:
        raise RemoteEmbeddingError(
            f"embedding endpoint {spec.endpoint} failed after 3 attempts: {last_error}"
        )
    if not isinstance(vectors, list) or len(vectors) != len(texts):
        raise RemoteEmbeddingError(
            f"endpoint {spec.endpoint} returned {len(vectors) if isinstance(vectors, list) else '?'}"
            f" vectors for {len(texts)} texts"
        )
    rows = []
    dim = None
    for vec in vectors:
        row = np.asarray(vec, dtype=np.float32).reshape(1, -1)
        if not np.isfinite(row).all():
            raise RemoteEmbeddingError(f"endpoint {spec.endpoint} returned non-finite values")
        if dim is None:
            dim = row.shape[1]
        elif row.shape[1] != dim:
            raise RemoteEmbeddingError(
                f"endpoint {spec.endpoint} returned mixed dimensions {dim} and {row.shape[1]}"
            )
        rows.append(row)
    return rows


def remote_embed(spec: EncoderSpec, texts: list[str]) -> np.ndarray:
    """Embed ``texts`` via the remote service, going through the cache.

    Only cache misses generate requests; batches may run concurrently up to
    ``max_in_flight``, and the output rows follow the input order.
    """
    if spec.kind != "remote":
        raise ValueError(f"remote_embed needs a remote encoder, got kind {spec.kind!r}")
    cache_dir = spec.resolved_cache_dir()
    os.makedirs(cache_dir, exist_ok=True)
    paths = [os.path.join(cache_dir, _cache_key(spec.model, t) + ".emb") for t in texts]

    missing: list[int] = []
    seen: set[str] = set()
    for i, path in enumerate(paths):
        if not os.path.exists(path) and path not in seen:
            missing.append(i)
            seen.add(path)

    batches = [missing[j : j + spec.batch_size] for j in range(0, len(missing), spec.batch_size)]

    def fetch_and_store(batch: list[int]) -> None:
        rows = _fetch_batch(spec, [texts[i] for i in batch])
        for i, row in zip(batch, rows):
            save_embedding_file(paths[i], row)

    if batches:
        if spec.max_in_flight == 1:
            for batch in batches:
                fetch_and_store(batch)
        else:
            with ThreadPoolExecutor(max_workers=spec.max_in_flight) as pool:
                for future in [pool.submit(fetch_and_store, b) for b in batches]:
                    future.result()

    rows = []
    dim = None
    for path, text in zip(paths, texts):
        row = load_embedding_file(path)
        if row.shape[0] != 1:
            raise EmbeddingFormatError(f"cache entry {path} is not a single row")
        if dim is None:
            dim = row.shape[1]
        elif row.shape[1] != dim:
            raise RemoteEmbeddingError(
                f"cache entries disagree on dimension: {dim} vs {row.shape[1]}"
            )
        rows.append(row)
    if not rows:
        return np.zeros((0, 0), dtype=np.float32)
    return np.concatenate(rows, axis=0)
