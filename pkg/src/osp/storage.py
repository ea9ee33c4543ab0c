"""Built-in storage backend: one key-value engine behind store-kind tags.

The recommendation heuristic advises which kind of store fits a data
profile; all kinds map onto the same in-memory engine here, keyed by
opaque storage keys.
"""

from __future__ import annotations

from threading import Lock

from .errors import UnknownIdentifier

STORE_KINDS = ("wide_column", "document", "graph", "tabular", "blob")


class BlobStore:
    def __init__(self):
        self._lock = Lock()
        self._blobs: dict[str, bytes] = {}
        self._kinds: dict[str, str] = {}

    def put(self, key: str, data: bytes, kind: str = "blob"):
        if kind not in STORE_KINDS:
            raise ValueError(f"unknown store kind {kind!r}")
        with self._lock:
            self._blobs[key] = bytes(data)
            self._kinds[key] = kind

    def get(self, key: str) -> bytes:
        try:
            return self._blobs[key]
        except KeyError:
            raise UnknownIdentifier(f"no stored content under {key!r}") from None

    def kind(self, key: str) -> str:
        return self._kinds[key]

    def __contains__(self, key: str) -> bool:
        return key in self._blobs
