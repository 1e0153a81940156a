"""Model-backend adapters.

Two client contracts cover every stage of the pipeline:

* completion clients take a UTF-8 prompt and return a UTF-8 completion
  (used for triple extraction and for answer generation);
* embedding clients take text and return a fixed-length vector of finite
  reals.

Each contract has an HTTP adapter, an offline deterministic stand-in, and a
replay adapter that serves previously recorded responses from a fixture
directory. A fixture file holds one request/response pair: the first line is
``# request-sha256: <hex>`` and everything after the first newline is the
response, verbatim.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Protocol, Sequence, TypeVar

import httpx

from .errors import ClientFailure, CorruptFile, IoFailure

FIXTURE_PREFIX = "# request-sha256: "

T = TypeVar("T")
R = TypeVar("R")


def request_hash(text: str) -> str:
    """Content hash used to key caches and fixture files."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class CompletionClient(Protocol):
    name: str

    def complete(self, prompt: str) -> str: ...


class EmbeddingClient(Protocol):
    name: str

    def embed(self, text: str) -> list[float]: ...


def run_parallel(fn: Callable[[T], R], items: Sequence[T], parallel: int) -> list[R]:
    """Apply fn to every item, preserving input order in the result.

    parallel <= 1 runs inline; anything larger uses a bounded thread pool.
    The first raised exception propagates.
    """
    if parallel <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=parallel) as pool:
        return list(pool.map(fn, items))


class EchoClient:
    """Completion stand-in that returns the prompt unchanged."""

    name = "echo"

    def complete(self, prompt: str) -> str:
        return prompt


def write_fixture(
    directory: str | Path,
    request_text: str,
    response: str,
    params: dict | None = None,
) -> Path:
    """Record one request/response pair into a fixture directory.

    When params are given (model name, decoding settings) they are written to
    a .meta.json sidecar next to the fixture so recorded runs stay auditable;
    replay ignores sidecars.
    """
    digest = request_hash(request_text)
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / f"{digest}.txt"
        path.write_text(f"{FIXTURE_PREFIX}{digest}\n{response}", encoding="utf-8")
        if params is not None:
            meta = directory / f"{digest}.meta.json"
            meta.write_text(
                json.dumps(params, sort_keys=True) + "\n", encoding="utf-8"
            )
    except OSError as e:
        raise IoFailure(f"cannot write fixture in {directory}: {e}") from e
    return path


def _load_fixture_dir(directory: str | Path) -> dict[str, str]:
    """Map request hash -> verbatim response for every fixture in a directory."""
    directory = Path(directory)
    if not directory.is_dir():
        raise IoFailure(f"fixture directory {directory} does not exist")
    responses: dict[str, str] = {}
    for path in sorted(directory.iterdir()):
        if not path.is_file():
            continue
        try:
            raw = path.read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError):
            continue
        if not raw.startswith(FIXTURE_PREFIX):
            continue
        newline = raw.find("\n")
        if newline < 0:
            raise CorruptFile(f"fixture {path} has no response after its header")
        digest = raw[len(FIXTURE_PREFIX):newline].strip()
        responses[digest] = raw[newline + 1:]
    return responses


class FixtureCompletionClient:
    """Serves recorded completions; unknown requests fail with their hash."""

    def __init__(self, directory: str | Path):
        self._dir = Path(directory)
        self._responses = _load_fixture_dir(directory)
        self.name = f"fixture:{directory}"

    def complete(self, prompt: str) -> str:
        digest = request_hash(prompt)
        if digest not in self._responses:
            raise ClientFailure(
                f"no recorded response for request sha256 {digest} in {self._dir}",
                request_hash=digest,
                prompt=prompt,
            )
        return self._responses[digest]


class CachingClient:
    """Write-through disk cache around a completion client.

    Responses are stored in fixture format keyed by the request hash, so an
    interrupted run resumes without repeating calls and the cache directory
    doubles as a replay fixture.
    """

    def __init__(self, inner: CompletionClient, cache_dir: str | Path):
        self._inner = inner
        self._dir = Path(cache_dir)
        self._cache = _load_fixture_dir(cache_dir) if self._dir.is_dir() else {}
        self._lock = threading.Lock()
        self.name = inner.name

    def complete(self, prompt: str) -> str:
        digest = request_hash(prompt)
        with self._lock:
            if digest in self._cache:
                return self._cache[digest]
        response = self._inner.complete(prompt)
        with self._lock:
            self._cache[digest] = response
            write_fixture(self._dir, prompt, response)
        return response


class _RateLimiter:
    """Spaces calls at least 1/rps seconds apart. No-op when rps is None."""

    def __init__(self, rps: float | None):
        self._interval = 1.0 / rps if rps else 0.0
        self._last = 0.0
        self._lock = threading.Lock()

    def wait(self) -> None:
        if not self._interval:
            return
        with self._lock:
            now = time.monotonic()
            delay = self._last + self._interval - now
            if delay > 0:
                time.sleep(delay)
                now = time.monotonic()
            self._last = now


def _auth_headers(auth_env: str | None) -> dict[str, str]:
    # Secrets come only from the environment, never from config values.
    if not auth_env:
        return {}
    token = os.environ.get(auth_env)
    if not token:
        raise ClientFailure(f"environment variable {auth_env} is not set")
    return {"Authorization": f"Bearer {token}"}


class HttpCompletionClient:
    """Chat-completion adapter over an OpenAI-style HTTP endpoint.

    The compiled prompt is sent as a single message whose role is
    configurable ("user" by default, "system" as the alternative); the chosen
    mode is part of the client name so run metadata records it.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        *,
        role: str = "user",
        temperature: float | None = None,
        max_tokens: int | None = None,
        auth_env: str | None = None,
        rps: float | None = None,
        timeout: float = 120.0,
        transport: httpx.BaseTransport | None = None,
    ):
        if role not in ("user", "system"):
            raise ValueError(f"role must be user or system, got {role!r}")
        self._endpoint = endpoint
        self._model = model
        self._role = role
        self._temperature = temperature
        self._max_tokens = max_tokens
        self._headers = _auth_headers(auth_env)
        self._limiter = _RateLimiter(rps)
        self._http = httpx.Client(timeout=timeout, transport=transport)
        self.name = f"http:{model}:{role}"

    def params(self) -> dict:
        out: dict = {"model": self._model, "role": self._role}
        if self._temperature is not None:
            out["temperature"] = self._temperature
        if self._max_tokens is not None:
            out["max_tokens"] = self._max_tokens
        return out

    def complete(self, prompt: str) -> str:
        payload: dict = {
            "model": self._model,
            "messages": [{"role": self._role, "content": prompt}],
        }
        if self._temperature is not None:
            payload["temperature"] = self._temperature
        if self._max_tokens is not None:
            payload["max_tokens"] = self._max_tokens
        self._limiter.wait()
        try:
            resp = self._http.post(self._endpoint, json=payload, headers=self._headers)
            resp.raise_for_status()
            return resp.json()["choices"][0]["message"]["content"]
        except (httpx.HTTPError, KeyError, IndexError, ValueError) as e:
            raise ClientFailure(
                f"completion request failed: {e}",
                request_hash=request_hash(prompt),
                prompt=prompt,
            ) from e


class HashEmbedder:
    """Deterministic offline embedder.

    Maps text to a vector in [-1, 1]^dim derived from a seeded content hash,
    so identical text always embeds identically and no network is involved.
    Empty (or whitespace-only) text maps to the zero vector.
    """

    def __init__(self, dim: int = 8, seed: int = 0):
        if dim < 1:
            raise ValueError("dim must be positive")
        self.dim = dim
        self.seed = seed
        self.name = f"hash(d={dim},seed={seed})"

    def embed(self, text: str) -> list[float]:
        if not text.strip():
            return [0.0] * self.dim
        out: list[float] = []
        block = 0
        while len(out) < self.dim:
            digest = hashlib.sha256(
                f"{self.seed}|{block}|{text}".encode("utf-8")
            ).digest()
            for i in range(0, len(digest), 4):
                if len(out) == self.dim:
                    break
                word = int.from_bytes(digest[i : i + 4], "big")
                out.append(word / 4294967295.0 * 2.0 - 1.0)
            block += 1
        return out


class FixtureEmbeddingClient:
    """Serves recorded embeddings (fixture response: one real per line)."""

    def __init__(self, directory: str | Path):
        self._dir = Path(directory)
        self._responses = _load_fixture_dir(directory)
        self.name = f"fixture:{directory}"

    def embed(self, text: str) -> list[float]:
        digest = request_hash(text)
        if digest not in self._responses:
            raise ClientFailure(
                f"no recorded embedding for request sha256 {digest} in {self._dir}",
                request_hash=digest,
            )
        try:
            return [float(line) for line in self._responses[digest].split()]
        except ValueError as e:
            raise CorruptFile(f"non-numeric embedding fixture for {digest}") from e


class RecordingEmbedder:
    """Write-through fixture recorder around an embedding client."""

    def __init__(self, inner: EmbeddingClient, directory: str | Path):
        self._inner = inner
        self._dir = Path(directory)
        self._cache = _load_fixture_dir(directory) if self._dir.is_dir() else {}
        self._lock = threading.Lock()
        self.name = inner.name

    def embed(self, text: str) -> list[float]:
        digest = request_hash(text)
        with self._lock:
            if digest in self._cache:
                return [float(line) for line in self._cache[digest].split()]
        vector = self._inner.embed(text)
        response = "\n".join(f"{x:.17g}" for x in vector)
        with self._lock:
            self._cache[digest] = response
            write_fixture(self._dir, text, response)
        # Serve the recorded form so replay and record runs agree bit-for-bit.
        return [float(line) for line in response.split()]


class HttpEmbeddingClient:
    """Embedding adapter over an OpenAI-style /embeddings endpoint."""

    def __init__(
        self,
        endpoint: str,
        model: str,
        *,
        auth_env: str | None = None,
        rps: float | None = None,
        timeout: float = 60.0,
        transport: httpx.BaseTransport | None = None,
    ):
        self._endpoint = endpoint
        self._model = model
        self._headers = _auth_headers(auth_env)
        self._limiter = _RateLimiter(rps)
        self._http = httpx.Client(timeout=timeout, transport=transport)
        self.name = f"http-embed:{model}"

    def embed(self, text: str) -> list[float]:
        self._limiter.wait()
        try:
            resp = self._http.post(
                self._endpoint,
                json={"model": self._model, "input": text},
                headers=self._headers,
            )
            resp.raise_for_status()
            vector = resp.json()["data"][0]["embedding"]
            return [float(x) for x in vector]
        except (httpx.HTTPError, KeyError, IndexError, ValueError, TypeError) as e:
            raise ClientFailure(
                f"embedding request failed: {e}",
                request_hash=request_hash(text),
            ) from e


def load_client_config(path: str | Path) -> dict[str, str]:
    """Read a key=value config file. '#' starts a comment; blanks ignored."""
    try:
        raw = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise IoFailure(f"cannot read config file {path}: {e}") from e
    config: dict[str, str] = {}
    for line_no, line in enumerate(raw.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise CorruptFile(f"config line {line_no} is not key=value: {line!r}")
        key, _, value = stripped.partition("=")
        config[key.strip()] = value.strip()
    return config


def _optional_float(config: dict[str, str], key: str) -> float | None:
    return float(config[key]) if key in config else None


def make_completion_client(
    spec: str,
    config: dict[str, str] | None = None,
    *,
    purpose: str = "generation",
) -> CompletionClient:
    """Build a completion client from a CLI spec string.

    spec is "http", "echo", or "fixture:DIR". The http form reads its
    endpoint/model/decoding settings from the config mapping; extraction and
    generation can point at different backends via key prefixes
    ("extract_endpoint" overrides "endpoint" when purpose is "extraction").
    """
    if spec == "echo":
        return EchoClient()
    if spec.startswith("fixture:"):
        return FixtureCompletionClient(spec[len("fixture:"):])
    if spec == "http":
        config = config or {}
        prefix = "extract_" if purpose == "extraction" else ""

        def get(key: str, default: str | None = None) -> str | None:
            return config.get(prefix + key, config.get(key, default))

        endpoint = get("endpoint")
        model = get("model")
        if not endpoint or not model:
            raise ClientFailure(
                "http client needs endpoint= and model= in the config file"
            )
        max_tokens = get("max_tokens")
        temperature = get("temperature")
        rps = get("rps")
        return HttpCompletionClient(
            endpoint,
            model,
            role=get("role", "user") or "user",
            temperature=float(temperature) if temperature else None,
            max_tokens=int(max_tokens) if max_tokens else None,
            auth_env=get("auth_env"),
            rps=float(rps) if rps else None,
        )
    raise ValueError(f"unknown client spec {spec!r}")


def make_embedding_client(
    spec: str, config: dict[str, str] | None = None
) -> EmbeddingClient:
    """Build an embedding client from "http", "hash", or "fixture:DIR"."""
    if spec == "hash":
        return HashEmbedder()
    if spec.startswith("hash:"):
        # hash:dim[:seed] for non-default shapes
        parts = spec.split(":")[1:]
        dim = int(parts[0])
        seed = int(parts[1]) if len(parts) > 1 else 0
        return HashEmbedder(dim=dim, seed=seed)
    if spec.startswith("fixture:"):
        return FixtureEmbeddingClient(spec[len("fixture:"):])
    if spec == "http":
        config = config or {}
        endpoint = config.get("embed_endpoint")
        model = config.get("embed_model")
        if not endpoint or not model:
            raise ClientFailure(
                "http embedder needs embed_endpoint= and embed_model= in the config"
            )
        return HttpEmbeddingClient(
            endpoint,
            model,
            auth_env=config.get("embed_auth_env"),
            rps=_optional_float(config, "embed_rps"),
        )
    raise ValueError(f"unknown embedder spec {spec!r}")
