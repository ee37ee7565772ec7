"""Append-only JSONL cassette of prompt digests and responses."""

import json
import logging
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from testenhance.llm.client import LlmRequest, digest, normalize_newlines, sha256_hex

logger = logging.getLogger(__name__)

CASSETTE_SUFFIX = ".cassette.jsonl"


class CassetteError(Exception):
    """Exception for cassette related errors."""
    pass


@dataclass(frozen=True)
class CassetteEntry:
    """One recorded exchange."""
    digest: str
    response: str
    request_summary: dict = field(default_factory=dict)
    recorded_at: str = ""

    @classmethod
    def from_request(cls, request: LlmRequest, response: str,
                     now: datetime | None = None) -> "CassetteEntry":
        moment = now or datetime.now(timezone.utc)
        return cls(
            digest=digest(request),
            response=response,
            request_summary={
                "model": request.model,
                "stage_tag": request.stage_tag,
                "prompt_hash": sha256_hex(normalize_newlines(request.prompt)),
            },
            recorded_at=moment.isoformat(timespec="seconds"),
        )

    @classmethod
    def from_dict(cls, data: dict) -> "CassetteEntry":
        try:
            return cls(
                digest=str(data["digest"]),
                response=str(data["response"]),
                request_summary=dict(data.get("request_summary") or {}),
                recorded_at=str(data.get("recorded_at", "")),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise CassetteError(f"Invalid cassette entry: {e}") from e

    def to_json(self) -> str:
        return json.dumps({
            "digest": self.digest,
            "request_summary": self.request_summary,
            "response": self.response,
            "recorded_at": self.recorded_at,
        }, ensure_ascii=False)


class Cassette:
    """
    Digest to response index backed by a JSONL file.

    Appends go through a single lock; lookups read the in-memory index.
    """

    def __init__(self, path: Path | None = None, entries=()):
        self._path = Path(path) if path else None
        self._index: dict[str, CassetteEntry] = {}
        self._lock = threading.Lock()
        for entry in entries:
            self._add(entry)

    @classmethod
    def load(cls, path: Path, must_exist: bool = False) -> "Cassette":
        """
        Load a cassette file; malformed lines are skipped with a warning.

        Raises:
            CassetteError: If must_exist and the file is missing or unreadable.
        """
        path = Path(path)
        cassette = cls(path)
        if not path.exists():
            if must_exist:
                raise CassetteError(f"Cassette not found: {path}")
            return cassette
        try:
            lines = path.read_text(encoding="utf-8").splitlines()
        except OSError as e:
            raise CassetteError(f"Cannot read cassette {path}: {e}") from e

        for number, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                cassette._add(CassetteEntry.from_dict(json.loads(line)))
            except (json.JSONDecodeError, CassetteError) as e:
                logger.warning("Skipping malformed cassette line %d in %s: %s", number, path, e)
        logger.info("Loaded %d cassette entries from %s", len(cassette), path)
        return cassette

    @property
    def path(self) -> Path | None:
        return self._path

    def _add(self, entry: CassetteEntry) -> bool:
        if entry.digest in self._index:
            logger.warning("Duplicate cassette digest %s ignored", entry.digest[:12])
            return False
        self._index[entry.digest] = entry
        return True

    def lookup(self, key: str) -> str | None:
        entry = self._index.get(key)
        return entry.response if entry else None

    def append(self, entry: CassetteEntry) -> None:
        """Add an entry and append it to the backing file."""
        with self._lock:
            if not self._add(entry):
                return
            if self._path is None:
                return
            try:
                self._path.parent.mkdir(parents=True, exist_ok=True)
                with open(self._path, "a", encoding="utf-8") as f:
                    f.write(entry.to_json() + "\n")
            except OSError as e:
                raise CassetteError(f"Cannot append to cassette {self._path}: {e}") from e

    def record(self, request: LlmRequest, response: str) -> None:
        self.append(CassetteEntry.from_request(request, response))

    def entries(self) -> list[CassetteEntry]:
        return list(self._index.values())

    def __contains__(self, key: str) -> bool:
        return key in self._index

    def __len__(self) -> int:
        return len(self._index)
