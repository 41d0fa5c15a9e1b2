"""Per-token log-probabilities of a target span given a prefix.

Every backend returns a raw echo response for the full prompt (tokens,
logprobs, start offsets); :func:`slice_target` keeps the tokens that start at
or after the prefix boundary. Log-probabilities are natural logs.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import re
import tempfile
import threading
import time
from collections import Counter
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Callable

import httpx

from .prompt import RenderedPrompt

log = logging.getLogger(__name__)

API_KEY_ENV = "GPTSCORE_API_KEY"
ECHO_PARAMS = {"max_tokens": 0, "echo": True, "logprobs": 1, "temperature": 0}


class BackendError(RuntimeError):
    pass


class TransportError(BackendError):
    pass


class NoLogprobsError(BackendError):
    pass


class BoundaryError(BackendError):
    """Target span could not be isolated (no tokens, or a token straddles the boundary)."""


class NonFiniteLogprobError(BackendError):
    pass


class BackendKind(str, Enum):
    HTTP = "http"
    FIXTURE = "fixture"
    UNIGRAM = "unigram"

    @classmethod
    def parse(cls, value: str | BackendKind) -> BackendKind:
        if isinstance(value, BackendKind):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown backend kind {value!r}") from None


@dataclass(frozen=True)
class TokenScore:
    token: str
    logprob: float
    offset: int


@dataclass(frozen=True)
class RawLogprobs:
    tokens: tuple[str, ...]
    token_logprobs: tuple[float | None, ...]
    text_offset: tuple[int, ...]

    def __post_init__(self) -> None:
        if not (len(self.tokens) == len(self.token_logprobs) == len(self.text_offset)):
            raise BackendError("tokens, token_logprobs and text_offset differ in length")

    def to_json(self) -> dict:
        return {
            "tokens": list(self.tokens),
            "token_logprobs": list(self.token_logprobs),
            "text_offset": list(self.text_offset),
        }

    @classmethod
    def from_json(cls, obj: dict) -> RawLogprobs:
        lps = []
        for v in obj["token_logprobs"]:
            lps.append(None if v is None else float(v))
        return cls(tuple(obj["tokens"]), tuple(lps), tuple(int(o) for o in obj["text_offset"]))


@dataclass(frozen=True)
class BackendConfig:
    kind: BackendKind = BackendKind.HTTP
    model_id: str = "unknown"
    endpoint_url: str | None = None
    max_parallel: int = 4
    max_attempts: int = 5
    base_backoff: float = 1.0
    cache_dir: str | None = None
    fixture_path: str | None = None
    corpus: str | None = None  # unigram corpus file
    offset_unit: str = "byte"
    boundary: str = "strict"  # or "whitespace": see slice_target
    timeout: float = 60.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", BackendKind.parse(self.kind))
        if self.max_parallel < 1:
            raise ValueError("max_parallel must be >= 1")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        if self.offset_unit not in ("byte", "char"):
            raise ValueError("offset_unit must be 'byte' or 'char'")
        if self.boundary not in ("strict", "whitespace"):
            raise ValueError("boundary must be 'strict' or 'whitespace'")
        if self.kind is BackendKind.HTTP and not self.endpoint_url:
            raise ValueError("http backend needs endpoint_url")


def _length(text: str, unit: str) -> int:
    return len(text.encode("utf-8")) if unit == "byte" else len(text)


def _head(tok: str, n: int, unit: str) -> str:
    return tok.encode("utf-8")[:n].decode("utf-8", "replace") if unit == "byte" else tok[:n]


def slice_target(raw: RawLogprobs, prefix: str, unit: str = "byte", boundary_mode: str = "strict") -> list[TokenScore]:
    """Keep the tokens whose start offset is at or past the end of ``prefix``.

    A token that crosses the boundary is an error. With ``boundary_mode="whitespace"``
    a crossing token whose prefix-side part is only whitespace (BPE vocabularies
    glue the space to the next word) is counted as the first target token.
    """
    boundary = _length(prefix, unit)
    out: list[TokenScore] = []
    last = -1
    for tok, lp, off in zip(raw.tokens, raw.token_logprobs, raw.text_offset):
        if off <= last:
            raise BackendError(f"token offsets not strictly increasing at offset {off}")
        last = off
        if off < boundary:
            if off + _length(tok, unit) > boundary:
                if boundary_mode == "whitespace" and _head(tok, boundary - off, unit).isspace():
                    if lp is None or not math.isfinite(lp):
                        raise NonFiniteLogprobError(f"token {tok!r} at offset {off} has logprob {lp!r}")
                    out.append(TokenScore(tok, float(lp), off))
                    continue
                raise BoundaryError(f"token {tok!r} at offset {off} straddles the prefix boundary {boundary}")
            continue
        if lp is None or not math.isfinite(lp):
            raise NonFiniteLogprobError(f"token {tok!r} at offset {off} has logprob {lp!r}")
        out.append(TokenScore(tok, float(lp), off))
    if not out:
        raise BoundaryError(f"target span resolved to zero tokens (boundary {boundary})")
    return out


_RUN_RE = re.compile(r"\s+|\S+")
_WORD_RE = re.compile(r"\S+")


def _spans(pattern: re.Pattern, text: str, unit: str) -> list[tuple[str, int]]:
    spans = []
    for m in pattern.finditer(text):
        start = m.start() if unit == "char" else len(text[: m.start()].encode("utf-8"))
        spans.append((m.group(), start))
    return spans


class Backend:
    """Base class: subclasses implement :meth:`fetch`."""

    def __init__(self, cfg: BackendConfig):
        self.cfg = cfg
        self._lock = threading.Lock()
        self._requests = 0

    @property
    def request_count(self) -> int:
        """Number of underlying fetches (network calls for the HTTP kind)."""
        return self._requests

    @property
    def max_parallel(self) -> int:
        return self.cfg.max_parallel

    def request_params(self) -> dict:
        return {"kind": self.cfg.kind.value, **ECHO_PARAMS}

    def fetch(self, prompt: str) -> RawLogprobs:
        raise NotImplementedError

    def _count(self) -> None:
        with self._lock:
            self._requests += 1

    def token_logprobs(self, prompt: RenderedPrompt) -> list[TokenScore]:
        if not prompt.target:
            raise BoundaryError("empty target")
        return slice_target(self.fetch(prompt.full), prompt.prefix, self.cfg.offset_unit, self.cfg.boundary)


class HttpBackend(Backend):
    """OpenAI-compatible ``/v1/completions`` client using echo + logprobs."""

    RETRY_STATUS = {408, 409, 425, 429, 500, 502, 503, 504}

    def __init__(
        self,
        cfg: BackendConfig,
        client: httpx.Client | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        super().__init__(cfg)
        self._client = client or httpx.Client(timeout=cfg.timeout)
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(cfg.max_parallel)

    @property
    def url(self) -> str:
        base = (self.cfg.endpoint_url or "").rstrip("/")
        if base.endswith("/v1"):
            base = base[: -len("/v1")]
        return base + "/v1/completions"

    def request_body(self, prompt: str) -> dict:
        return {"model": self.cfg.model_id, "prompt": prompt, **ECHO_PARAMS}

    def _headers(self) -> dict:
        key = os.environ.get(API_KEY_ENV)
        return {"Authorization": f"Bearer {key}"} if key else {}

    def _post_once(self, body: dict) -> httpx.Response:
        with self._slots:
            self._count()
            return self._client.post(self.url, json=body, headers=self._headers())

    def fetch(self, prompt: str) -> RawLogprobs:
        body = self.request_body(prompt)
        last_error = "no attempt made"
        for attempt in range(1, self.cfg.max_attempts + 1):
            try:
                resp = self._post_once(body)
            except httpx.TransportError as exc:
                last_error = f"{type(exc).__name__}: {exc}"
            else:
                if resp.status_code == 200:
                    return self.parse(resp.json())
                if resp.status_code not in self.RETRY_STATUS:
                    raise BackendError(f"endpoint returned HTTP {resp.status_code}: {resp.text[:200]}")
                last_error = f"HTTP {resp.status_code}"
            if attempt < self.cfg.max_attempts:
                delay = self.cfg.base_backoff * 2 ** (attempt - 1)
                log.warning("request failed (%s); retry %d/%d in %.2fs", last_error, attempt, self.cfg.max_attempts - 1, delay)
                self._sleep(delay)
        raise TransportError(f"giving up after {self.cfg.max_attempts} attempts: {last_error}")

    @staticmethod
    def parse(payload: dict) -> RawLogprobs:
        try:
            lp = payload["choices"][0]["logprobs"]
        except (KeyError, IndexError, TypeError):
            raise NoLogprobsError("response has no choices[0].logprobs") from None
        if not lp or not lp.get("tokens") or lp.get("token_logprobs") is None or lp.get("text_offset") is None:
            raise NoLogprobsError("endpoint returned no logprobs")
        return RawLogprobs.from_json(lp)


class FixtureBackend(Backend):
    """Canned echo responses from a JSON file.

    File layout: ``{"fallback": "error" | "synthetic", "responses": [{"prompt": str,
    "tokens": [...], "token_logprobs": [...], "text_offset": [...]}]}``. Entries may
    give ``prompt_sha256`` instead of ``prompt``. With ``"synthetic"``, prompts
    that have no entry get a deterministic response whose logprobs hash the
    model id and the whole text up to each token.
    """

    def __init__(self, cfg: BackendConfig, responses: dict[str, RawLogprobs] | None = None, fallback: str = "error"):
        super().__init__(cfg)
        self._responses: dict[str, RawLogprobs] = dict(responses or {})
        self.fallback = fallback
        if cfg.fixture_path:
            data = json.loads(Path(cfg.fixture_path).read_text(encoding="utf-8"))
            self.fallback = data.get("fallback", fallback)
            for entry in data.get("responses", []):
                key = entry.get("prompt_sha256") or _sha256(entry["prompt"])
                self._responses[key] = RawLogprobs.from_json(entry)
        if self.fallback not in ("error", "synthetic"):
            raise ValueError(f"unknown fixture fallback {self.fallback!r}")

    def add(self, prompt: str, raw: RawLogprobs) -> None:
        self._responses[_sha256(prompt)] = raw

    def request_params(self) -> dict:
        return {**super().request_params(), "fallback": self.fallback}

    def fetch(self, prompt: str) -> RawLogprobs:
        self._count()
        hit = self._responses.get(_sha256(prompt))
        if hit is not None:
            return hit
        if self.fallback == "synthetic":
            return self._synthetic(prompt)
        raise BackendError("fixture backend has no response for this prompt")

    def _synthetic(self, prompt: str) -> RawLogprobs:
        tokens, offsets, lps = [], [], []
        state = hashlib.sha256(self.cfg.model_id.encode("utf-8")).digest()
        for tok, off in _spans(_RUN_RE, prompt, self.cfg.offset_unit):
            # chained so each logprob depends on everything before it, like a real LM
            state = hashlib.sha256(state + tok.encode("utf-8")).digest()
            tokens.append(tok)
            offsets.append(off)
            lps.append(-(0.05 + int.from_bytes(state[:4], "big") % 10000 / 1000.0))
        if lps:
            lps[0] = None
        return RawLogprobs(tuple(tokens), tuple(lps), tuple(offsets))


class UnigramBackend(Backend):
    """Context-free add-one unigram model over a whitespace-tokenised corpus.

    p(w) = (count(w) + 1) / (N + V) where N is the corpus length and V the
    vocabulary size; words outside the vocabulary get 1 / (N + V).
    """

    def __init__(self, cfg: BackendConfig, corpus: str | None = None):
        super().__init__(cfg)
        if corpus is None:
            if not cfg.corpus:
                raise ValueError("unigram backend needs a corpus file (BackendConfig.corpus)")
            corpus = Path(cfg.corpus).read_text(encoding="utf-8")
        text = corpus
        words = text.split()
        if not words:
            raise ValueError("unigram corpus is empty")
        self.counts = Counter(words)
        self.total = len(words)
        self._denom = self.total + len(self.counts)
        self._corpus_sha = _sha256(" ".join(words))

    @property
    def vocabulary(self) -> list[str]:
        return sorted(self.counts)

    def logprob(self, word: str) -> float:
        return math.log((self.counts.get(word, 0) + 1) / self._denom)

    def request_params(self) -> dict:
        return {**super().request_params(), "corpus_sha256": self._corpus_sha}

    def fetch(self, prompt: str) -> RawLogprobs:
        self._count()
        spans = _spans(_WORD_RE, prompt, self.cfg.offset_unit)
        return RawLogprobs(
            tuple(t for t, _ in spans),
            tuple(self.logprob(t) for t, _ in spans),
            tuple(o for _, o in spans),
        )


def _sha256(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _canonical(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":")).encode("utf-8")


@dataclass
class CacheStats:
    hits: int = 0
    misses: int = 0
    corrupted: int = 0

    @property
    def hit_rate(self) -> float:
        total = self.hits + self.misses
        return self.hits / total if total else 0.0


class CachedBackend(Backend):
    """Disk cache in front of another backend; one JSON file per request key."""

    def __init__(self, inner: Backend, cache_dir: str | Path):
        super().__init__(inner.cfg)
        self.inner = inner
        self.cache_dir = Path(cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.stats = CacheStats()
        self._stats_lock = threading.Lock()

    @property
    def max_parallel(self) -> int:
        return self.inner.max_parallel

    def key(self, prompt: str) -> str:
        ident = {"model_id": self.cfg.model_id, "prompt": prompt, "params": self.inner.request_params()}
        return hashlib.sha256(_canonical(ident)).hexdigest()

    def path_for(self, key: str) -> Path:
        return self.cache_dir / f"{key}.json"

    @staticmethod
    def _checksum(entry: dict) -> str:
        body = {k: entry[k] for k in ("key", "model_id", "prompt_sha256", "tokens", "token_logprobs", "text_offset")}
        return hashlib.sha256(_canonical(body)).hexdigest()

    def _read(self, key: str) -> RawLogprobs | None:
        path = self.path_for(key)
        if not path.exists():
            return None
        try:
            entry = json.loads(path.read_text(encoding="utf-8"))
            if entry.get("key") != key or entry.get("checksum") != self._checksum(entry):
                raise ValueError("checksum mismatch")
            return RawLogprobs.from_json(entry)
        except (ValueError, KeyError, TypeError, BackendError) as exc:
            log.warning("ignoring corrupted cache entry %s (%s)", path.name, exc)
            with self._stats_lock:
                self.stats.corrupted += 1
            return None

    def _write(self, key: str, prompt: str, raw: RawLogprobs, replace_existing: bool) -> None:
        entry = {
            "key": key,
            "model_id": self.cfg.model_id,
            "prompt_sha256": _sha256(prompt),
            **raw.to_json(),
        }
        entry["checksum"] = self._checksum(entry)
        entry["created_at"] = datetime.now(timezone.utc).isoformat()
        fd, tmp = tempfile.mkstemp(dir=self.cache_dir, prefix=".tmp-", suffix=".json")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(entry, fh, ensure_ascii=False)
            if replace_existing:
                os.replace(tmp, self.path_for(key))
                tmp = None
            else:
                try:
                    os.link(tmp, self.path_for(key))
                except FileExistsError:
                    pass  # another writer won; entries for a key are interchangeable
        finally:
            if tmp is not None and os.path.exists(tmp):
                os.unlink(tmp)

    def fetch(self, prompt: str) -> RawLogprobs:
        key = self.key(prompt)
        existed = self.path_for(key).exists()
        hit = self._read(key)
        if hit is not None:
            with self._stats_lock:
                self.stats.hits += 1
            return hit
        raw = self.inner.fetch(prompt)
        with self._stats_lock:
            self.stats.misses += 1
        self._write(key, prompt, raw, replace_existing=existed)
        return raw

    @property
    def request_count(self) -> int:
        return self.inner.request_count


def make_backend(cfg: BackendConfig, *, use_cache: bool = True) -> Backend:
    if cfg.kind is BackendKind.HTTP:
        backend: Backend = HttpBackend(cfg)
    elif cfg.kind is BackendKind.FIXTURE:
        backend = FixtureBackend(cfg)
    else:
        backend = UnigramBackend(cfg)
    if use_cache and cfg.cache_dir:
        backend = CachedBackend(backend, cfg.cache_dir)
    return backend


def cached(cfg: BackendConfig) -> CachedBackend:
    if not cfg.cache_dir:
        raise ValueError("cached backend needs cache_dir")
    backend = make_backend(cfg, use_cache=False)
    return CachedBackend(backend, cfg.cache_dir)


def token_logprobs(cfg: BackendConfig | Backend, prompt: RenderedPrompt) -> list[TokenScore]:
    backend = cfg if isinstance(cfg, Backend) else make_backend(cfg)
    return backend.token_logprobs(prompt)


def cache_summary(cache_dir: str | Path) -> dict:
    files = list(Path(cache_dir).glob("*.json")) if Path(cache_dir).exists() else []
    return {"entries": len(files), "bytes": sum(f.stat().st_size for f in files)}


def cache_clear(cache_dir: str | Path) -> int:
    removed = 0
    for f in Path(cache_dir).glob("*.json") if Path(cache_dir).exists() else []:
        f.unlink()
        removed += 1
    return removed
