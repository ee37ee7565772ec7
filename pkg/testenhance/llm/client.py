"""Completion backends: live HTTP, cassette replay/record and scripted."""

import logging
import threading
from dataclasses import dataclass

import httpx
from cryptography.hazmat.primitives import hashes
from tenacity import Retrying, retry_if_exception_type, stop_after_attempt

logger = logging.getLogger(__name__)

DEFAULT_ENDPOINT = "http://localhost:11434"
DEFAULT_MODEL = "codellama:7b-instruct"
DEFAULT_TEMPERATURE = 0.2
DEFAULT_MAX_TOKENS = 1024

GENERATE_PATH = "/api/generate"


class LlmClientError(Exception):
    """Base exception for completion backends."""
    pass


class TransportError(LlmClientError):
    """The endpoint could not be reached or answered with an error."""
    pass


class EmptyResponse(LlmClientError):
    """The backend answered with empty text."""
    pass


class CacheMiss(LlmClientError):
    """A replayed request has no cassette entry."""

    def __init__(self, digest: str):
        super().__init__(f"no cassette entry for request {digest}")
        self.digest = digest


class ScriptExhausted(LlmClientError):
    """A scripted backend ran out of responses."""
    pass


@dataclass(frozen=True)
class LlmRequest:
    """One completion request."""
    prompt: str
    model: str = DEFAULT_MODEL
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS
    stage_tag: str = ""

    def __post_init__(self):
        if not self.prompt:
            raise ValueError("prompt must not be empty")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be > 0")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


def normalize_newlines(text: str) -> str:
    return text.replace("\r\n", "\n").replace("\r", "\n")


def sha256_hex(data: str) -> str:
    """Hex SHA-256 of UTF-8 text."""
    hasher = hashes.Hash(hashes.SHA256())
    hasher.update(data.encode("utf-8"))
    return hasher.finalize().hex()


def digest(request: LlmRequest) -> str:
    """Stable request key: SHA-256 over model, newline, and the LF-normalized prompt."""
    return sha256_hex(request.model + "\n" + normalize_newlines(request.prompt))


class Backend:
    """
    Base class for completion backends.

    Subclasses implement _complete; complete() guarantees a non-empty
    answer or raises.
    """

    name = "backend"

    def complete(self, request: LlmRequest) -> str:
        """
        Complete a request.

        Raises:
            EmptyResponse: If the backend answered with blank text.
            LlmClientError: Backend specific failures.
        """
        text = self._complete(request)
        if not text or not text.strip():
            raise EmptyResponse(f"{self.name} returned an empty response ({request.stage_tag})")
        return text

    def _complete(self, request: LlmRequest) -> str:
        raise NotImplementedError

    def close(self) -> None:
        pass


class HttpBackend(Backend):
    """
    Ollama-compatible generate endpoint.

    Transport failures are retried once before surfacing as TransportError.
    """

    name = "http"
    REQUEST_TIMEOUT_SECONDS = 120
    TRANSPORT_ATTEMPTS = 2

    def __init__(self, endpoint: str = DEFAULT_ENDPOINT, timeout: float | None = None,
                 client: httpx.Client | None = None):
        self._url = endpoint.rstrip("/") + GENERATE_PATH
        self._client = client or httpx.Client(timeout=timeout or self.REQUEST_TIMEOUT_SECONDS)

    @property
    def url(self) -> str:
        return self._url

    def _complete(self, request: LlmRequest) -> str:
        payload = {
            "model": request.model,
            "prompt": request.prompt,
            "stream": False,
            "options": {
                "temperature": request.temperature,
                "num_predict": request.max_tokens,
            },
        }
        try:
            for attempt in Retrying(
                stop=stop_after_attempt(self.TRANSPORT_ATTEMPTS),
                retry=retry_if_exception_type(httpx.TransportError),
                reraise=True,
            ):
                with attempt:
                    response = self._client.post(self._url, json=payload)
        except httpx.TransportError as e:
            raise TransportError(f"{self._url}: {e}") from e

        try:
            response.raise_for_status()
            data = response.json()
        except httpx.HTTPStatusError as e:
            raise TransportError(f"{self._url} answered {response.status_code}") from e
        except ValueError as e:
            raise TransportError(f"Invalid JSON response: {e}") from e

        text = data.get("response", "") if isinstance(data, dict) else ""
        logger.debug("HTTP completion (%s): %d chars", request.stage_tag, len(text))
        return text

    def close(self) -> None:
        self._client.close()


class ReplayBackend(Backend):
    """
    Answers from a cassette only.

    Without a fallback the backend is strict and a miss raises CacheMiss;
    with one, misses are delegated to it.
    """

    name = "replay"

    def __init__(self, cassette, fallback: Backend | None = None):
        self._cassette = cassette
        self._fallback = fallback

    def _complete(self, request: LlmRequest) -> str:
        key = digest(request)
        text = self._cassette.lookup(key)
        if text is not None:
            return text
        if self._fallback is None:
            raise CacheMiss(key)
        logger.warning("Cassette miss for %s (%s), using %s", key[:12], request.stage_tag,
                       self._fallback.name)
        return self._fallback.complete(request)


class RecordingBackend(Backend):
    """Cassette first; otherwise a live call whose answer is appended to the cassette."""

    name = "record"

    def __init__(self, live: Backend, cassette):
        self._live = live
        self._cassette = cassette

    def _complete(self, request: LlmRequest) -> str:
        text = self._cassette.lookup(digest(request))
        if text is not None:
            return text
        text = self._live.complete(request)
        self._cassette.record(request, text)
        return text

    def close(self) -> None:
        self._live.close()


class ScriptedBackend(Backend):
    """Returns a fixed sequence of responses, one per call."""

    name = "scripted"

    def __init__(self, responses):
        self._responses = list(responses)
        self._lock = threading.Lock()
        self._served: list[LlmRequest] = []

    @property
    def served(self) -> list[LlmRequest]:
        """Requests answered so far, in call order."""
        with self._lock:
            return list(self._served)

    def count(self, stage_tag: str | None = None) -> int:
        """Number of requests served, optionally for one stage tag."""
        return sum(1 for r in self.served if stage_tag is None or r.stage_tag == stage_tag)

    def _complete(self, request: LlmRequest) -> str:
        with self._lock:
            index = len(self._served)
            if index >= len(self._responses):
                raise ScriptExhausted(f"script has {len(self._responses)} responses, call {index + 1}")
            self._served.append(request)
            return self._responses[index]
