"""Cycle-stamped event log shared by every simulated component."""

from __future__ import annotations

import difflib
import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

KINDS = (
    "reset", "fetch", "retire", "switch", "mem_rd", "mem_wr", "flag_set",
    "ignored_write", "pkt_send", "pkt_grant", "pkt_recv", "fault", "halt",
)


@dataclass(frozen=True, slots=True)
class TraceEvent:
    cycle: int
    source: str
    kind: str
    detail: str = ""

    def line(self) -> str:
        text = f"{self.cycle} {self.source} {self.kind}"
        return f"{text} {self.detail}" if self.detail else text

    @classmethod
    def parse(cls, line: str) -> "TraceEvent":
        parts = line.split(" ", 3)
        if len(parts) < 3:
            raise ValueError(f"malformed trace line {line!r}")
        return cls(int(parts[0]), parts[1], parts[2], parts[3] if len(parts) > 3 else "")

    def field(self, key: str) -> str | None:
        for token in self.detail.split():
            name, sep, value = token.partition("=")
            if sep and name == key:
                return value
        return None


class Trace:
    """Ordered list of :class:`TraceEvent` with optional kind filtering.

    ``kinds=None`` records everything. Filtering is only a recording
    choice; components behave identically whatever is recorded.
    """

    def __init__(self, kinds: Iterable[str] | None = None):
        self.events: list[TraceEvent] = []
        self.kinds = None if kinds is None else frozenset(kinds)
        if self.kinds is not None and not self.kinds <= set(KINDS):
            raise ValueError(f"unknown trace kinds {sorted(self.kinds - set(KINDS))}")

    def wants(self, kind: str) -> bool:
        return self.kinds is None or kind in self.kinds

    def emit(self, cycle: int, source: str, kind: str, detail: str = "") -> None:
        if self.kinds is None or kind in self.kinds:
            self.events.append(TraceEvent(cycle, source, kind, detail))

    def extend(self, events: Iterable[TraceEvent]) -> None:
        for ev in events:
            if self.kinds is None or ev.kind in self.kinds:
                self.events.append(ev)

    def __iter__(self) -> Iterator[TraceEvent]:
        return iter(self.events)

    def __len__(self) -> int:
        return len(self.events)

    def of_kind(self, *kinds: str) -> list[TraceEvent]:
        return [ev for ev in self.events if ev.kind in kinds]

    def lines(self) -> list[str]:
        return [ev.line() for ev in self.events]

    def text(self) -> str:
        return "".join(line + "\n" for line in self.lines())

    def digest(self) -> str:
        h = hashlib.sha256()
        for line in self.lines():
            h.update(line.encode())
            h.update(b"\n")
        return h.hexdigest()

    def save(self, path) -> None:
        Path(path).write_text(self.text())

    @classmethod
    def load(cls, path) -> "Trace":
        trace = cls()
        for line in Path(path).read_text().splitlines():
            if line.strip():
                trace.events.append(TraceEvent.parse(line))
        return trace


def diff(a: Trace, b: Trace, context: int = 2) -> list[str]:
    """Unified diff of two traces; empty when they are identical."""
    return list(difflib.unified_diff(a.lines(), b.lines(), "a", "b", n=context, lineterm=""))


def first_divergence(a: Trace, b: Trace) -> int | None:
    """Index of the first differing event, ``None`` if identical."""
    for i, (x, y) in enumerate(zip(a.events, b.events)):
        if x != y:
            return i
    if len(a) != len(b):
        return min(len(a), len(b))
    return None
