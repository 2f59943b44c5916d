"""Append-only JSON-lines store of calibration records.

Each line is ``{"key", "version", "payload", "envelope"}``. ``payload`` is
deterministic for a given config and seed; wall-clock data lives in
``envelope``. Each append rewrites the file through a temp file and rename,
so a reader never sees half a record from this process; lines that fail to parse
(e.g. a truncated tail from a crash elsewhere) are skipped with a warning.
"""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass
from pathlib import Path

from .artifacts import atomic_write, dumps

log = logging.getLogger(__name__)

STORE_ENV = "AUTOCAL_STORE"


@dataclass(frozen=True)
class CalibrationRecord:
    key: str  # "q0", "q1" or "q0-q1"
    version: int
    payload: dict
    envelope: dict

    def to_line(self) -> str:
        return dumps({"key": self.key, "version": self.version, "payload": self.payload, "envelope": self.envelope})

    def payload_bytes(self) -> bytes:
        return dumps(self.payload).encode()


def resolve_store_path(default: str | Path) -> Path:
    return Path(os.environ.get(STORE_ENV) or default)


class RecordStore:
    def __init__(self, path: str | Path):
        self.path = Path(path)

    def _lines(self) -> list[str]:
        if not self.path.exists():
            return []
        return self.path.read_text().splitlines()

    def records(self) -> list[CalibrationRecord]:
        out = []
        for n, line in enumerate(self._lines(), 1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                out.append(CalibrationRecord(str(d["key"]), int(d["version"]), dict(d["payload"]), dict(d.get("envelope", {}))))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                log.warning("skipping corrupt record at %s:%d (%s)", self.path, n, exc)
        return out

    def latest(self, key: str) -> CalibrationRecord | None:
        found = [r for r in self.records() if r.key == key]
        return max(found, key=lambda r: r.version) if found else None

    def write(self, key: str, payload: dict, envelope: dict | None = None) -> CalibrationRecord:
        prev = self.latest(key)
        rec = CalibrationRecord(
            key, (prev.version + 1) if prev else 1, json.loads(dumps(payload)),
            {"written_at": time.time(), **(envelope or {})},
        )
        old = self.path.read_text() if self.path.exists() else ""
        if old and not old.endswith("\n"):
            old += "\n"  # keep a truncated tail on its own (skipped) line
        atomic_write(self.path, old + rec.to_line() + "\n")
        return rec
