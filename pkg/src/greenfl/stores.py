"""Append-only JSON-lines stores.

Records are single lines written in one call after full serialization, so
a crash mid-write can at worst truncate the final line; readers skip any
trailing partial line rather than failing the whole store.
"""

from __future__ import annotations

import json
import os
import threading
from pathlib import Path
from typing import Iterable, Iterator

_WRITE_LOCK = threading.Lock()


class JsonlStore:
    """One JSON object per line, append-only."""

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)

    def append(self, record: dict) -> None:
        line = json.dumps(record, sort_keys=True)
        with _WRITE_LOCK:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")
                fh.flush()
                os.fsync(fh.fileno())

    def append_many(self, records: Iterable[dict]) -> None:
        for r in records:
            self.append(r)

    def __iter__(self) -> Iterator[dict]:
        if not self.path.exists():
            return
        with self.path.open(encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                try:
                    yield json.loads(line)
                except json.JSONDecodeError:
                    continue  # torn tail line from an interrupted append

    def read_all(self) -> list[dict]:
        return list(self)

    def __len__(self) -> int:
        return sum(1 for _ in self)
