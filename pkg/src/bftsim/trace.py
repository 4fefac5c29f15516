"""Append-only event log of a run, serialized as JSON lines.

See ``docs/trace-schema.md`` for the event catalogue.  Events are plain dicts
whose first key is ``"ev"``; the in-memory list and the JSON-lines file carry
exactly the same content, so checkers run on either.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Iterable, Iterator, Optional

SCHEMA_VERSION = 1


class Trace:
    def __init__(self, events: Optional[list] = None):
        self.events: list[dict] = events if events is not None else []
        self.append = self.events.append

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[dict]:
        return iter(self.events)

    def of(self, *kinds: str) -> Iterator[dict]:
        return (e for e in self.events if e["ev"] in kinds)

    @property
    def header(self) -> dict:
        if not self.events or self.events[0]["ev"] != "run-start":
            raise ValueError("trace has no run-start header")
        return self.events[0]

    @property
    def footer(self) -> Optional[dict]:
        if self.events and self.events[-1]["ev"] == "run-end":
            return self.events[-1]
        return None

    @property
    def quiescent(self) -> bool:
        end = self.footer
        return bool(end and end.get("quiescent"))

    def byzantine(self) -> frozenset:
        return frozenset(self.header["byzantine"])

    def correct(self) -> list[int]:
        byz = self.byzantine()
        return [p for p in range(1, self.header["n"] + 1) if p not in byz]

    def lines(self) -> Iterator[str]:
        for e in self.events:
            yield json.dumps(e, separators=(",", ":"))

    def dumps(self) -> str:
        return "".join(line + "\n" for line in self.lines())

    def digest(self) -> str:
        h = hashlib.sha256()
        for line in self.lines():
            h.update(line.encode())
            h.update(b"\n")
        return h.hexdigest()

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for line in self.lines():
                fh.write(line)
                fh.write("\n")

    @classmethod
    def loads(cls, text: str) -> "Trace":
        return cls([json.loads(line) for line in text.splitlines() if line.strip()])

    @classmethod
    def load(cls, path) -> "Trace":
        return cls.loads(Path(path).read_text(encoding="utf-8"))

    @classmethod
    def from_lines(cls, lines: Iterable[str]) -> "Trace":
        return cls([json.loads(line) for line in lines if line.strip()])

    def copy(self) -> "Trace":
        return Trace.loads(self.dumps())
