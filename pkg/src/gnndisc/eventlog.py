"""Event logs as multisets of activity sequences.

Every trace is stored with the artificial START (``>``) and END (``|``)
activities injected at its boundaries. Logs are immutable and keep their
variants in a canonical order (descending count, then lexicographic trace)
so that equality and iteration are deterministic.
"""
from __future__ import annotations

import json
from collections import Counter
from pathlib import Path
from typing import Iterable, Sequence

START = ">"
END = "|"
RESERVED = (START, END)

Trace = tuple[str, ...]


class LogParseError(ValueError):
    """Raised for a malformed record in a log file."""


class EmptyLogError(ValueError):
    """Raised when a log without any trace is loaded or sampled."""


def _canonical(variants: Iterable[tuple[Trace, int]]) -> tuple[tuple[Trace, int], ...]:
    return tuple(sorted(variants, key=lambda v: (-v[1], v[0])))


class EventLog:
    """A finite multiset of traces over an activity alphabet.

    ``alphabet`` is a tuple whose positions are the activity indices: START
    is always at 0, END at 1, the remaining labels follow in sorted order.
    """

    __slots__ = ("alphabet", "variants", "_index")

    def __init__(self, variants: Iterable[tuple[Trace, int]], extra_activities: Iterable[str] = ()):
        merged: Counter[Trace] = Counter()
        for trace, count in variants:
            trace = tuple(trace)
            if count < 1:
                raise ValueError(f"variant count must be positive, got {count}")
            if len(trace) < 2 or trace[0] != START or trace[-1] != END:
                raise ValueError(f"trace must start with {START!r} and end with {END!r}: {trace}")
            if START in trace[1:] or END in trace[:-1]:
                raise ValueError(f"START/END must occur exactly once: {trace}")
            merged[trace] += count
        labels = {a for trace in merged for a in trace[1:-1]} | set(extra_activities)
        labels -= set(RESERVED)
        self.alphabet: tuple[str, ...] = RESERVED + tuple(sorted(labels))
        self.variants: tuple[tuple[Trace, int], ...] = _canonical(merged.items())
        self._index = {a: i for i, a in enumerate(self.alphabet)}

    @classmethod
    def from_sequences(cls, sequences: Iterable[Sequence[str]]) -> "EventLog":
        """Build a log from raw activity sequences (without START/END)."""
        counts = Counter((START, *seq, END) for seq in sequences)
        return cls(counts.items())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EventLog):
            return NotImplemented
        return self.alphabet == other.alphabet and self.variants == other.variants

    def __hash__(self) -> int:
        return hash((self.alphabet, self.variants))

    def __repr__(self) -> str:
        return f"EventLog({len(self.variants)} variants, {self.n_traces} traces, |A|={len(self.alphabet)})"

    def __len__(self) -> int:
        return len(self.variants)

    def index(self, label: str) -> int:
        return self._index[label]

    @property
    def activities(self) -> tuple[str, ...]:
        """Non-reserved activity labels."""
        return self.alphabet[2:]

    @property
    def n_traces(self) -> int:
        return sum(c for _, c in self.variants)

    @property
    def total_events(self) -> int:
        return sum(len(t) * c for t, c in self.variants)

    def traces(self) -> Iterable[Trace]:
        """Expand the multiset, yielding every trace ``count`` times."""
        for trace, count in self.variants:
            for _ in range(count):
                yield trace

    def activity_counts(self) -> dict[str, int]:
        counts = dict.fromkeys(self.alphabet, 0)
        for trace, c in self.variants:
            for a in trace:
                counts[a] += c
        return counts

    def frequencies(self) -> dict[str, float]:
        """Occurrence count of every activity divided by the total event count."""
        total = self.total_events
        if total == 0:
            return dict.fromkeys(self.alphabet, 0.0)
        return {a: c / total for a, c in self.activity_counts().items()}

    def sub_log(self, n_variants: int) -> "EventLog":
        """The ``n_variants`` most frequent variants (alphabet shrinks to what occurs)."""
        return EventLog(self.variants[:n_variants])


def _parse_line(line: str, lineno: int, fmt: str) -> list[str]:
    if fmt == "jsonl":
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise LogParseError(f"line {lineno}: invalid JSON ({exc.msg})") from None
        if not isinstance(record, list) or not all(isinstance(x, str) for x in record):
            raise LogParseError(f"line {lineno}: expected a JSON array of strings")
        labels = record
    else:
        labels = [x.strip() for x in line.split(",")]
    if any(not x for x in labels):
        raise LogParseError(f"line {lineno}: empty activity label")
    for x in labels:
        if x in RESERVED:
            raise LogParseError(f"line {lineno}: reserved label {x!r} in source file")
    return labels


def _infer_format(path: Path) -> str:
    return "jsonl" if path.suffix in (".jsonl", ".json") else "csv"


def load_log(path: str | Path, format: str | None = None) -> EventLog:
    """Read a log with one trace per line.

    ``format`` is ``"csv"`` (comma-separated labels) or ``"jsonl"`` (one JSON
    array of strings per line); it is inferred from the suffix when omitted.
    Empty lines are malformed records.
    """
    path = Path(path)
    fmt = format or _infer_format(path)
    if fmt not in ("csv", "jsonl"):
        raise ValueError(f"unknown log format {fmt!r}")
    text = path.read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise EmptyLogError(f"{path}: log contains no traces")
    sequences = [_parse_line(line.rstrip("\r"), n, fmt) for n, line in enumerate(lines, 1)]
    return EventLog.from_sequences(sequences)


def write_log(log: EventLog, path: str | Path, format: str | None = None) -> None:
    path = Path(path)
    fmt = format or _infer_format(path)
    out = []
    for trace in log.traces():
        body = list(trace[1:-1])
        if fmt == "csv" and not body:
            raise ValueError("the csv format cannot hold an empty trace; use jsonl")
        out.append(json.dumps(body) if fmt == "jsonl" else ",".join(body))
    path.write_text("".join(line + "\n" for line in out), encoding="utf-8")


def truncate_alphabet(log: EventLog, max_activities: int) -> EventLog:
    """Keep only the ``max_activities`` most frequent non-reserved activities.

    Ties in frequency keep the lexicographically smaller label. Events of the
    dropped activities are deleted from every trace.
    """
    if max_activities < 1:
        raise ValueError("max_activities must be >= 1")
    counts = log.activity_counts()
    ranked = sorted(log.activities, key=lambda a: (-counts[a], a))
    if len(ranked) <= max_activities:
        return log
    keep = set(ranked[:max_activities]) | set(RESERVED)
    return EventLog(((tuple(a for a in t if a in keep), c) for t, c in log.variants))


def sample_variants(log: EventLog, min_n: int = 8, max_n: int = 50, budget: int = 2000,
                    K: int = 2, max_in: int = 4, max_out: int = 4) -> EventLog:
    """Most frequent variants whose candidate-place count stays within ``budget``.

    Starts from the top ``min_n`` variants and adds the next most frequent one
    while the result has at most ``budget`` candidate places and at most
    ``max_n`` variants.
    """
    from .behavior import count_log_candidates

    if not 1 <= min_n <= max_n:
        raise ValueError("need 1 <= min_n <= max_n")
    total = len(log.variants)
    if total == 0:
        raise EmptyLogError("cannot sample from an empty log")
    n = min(min_n, total)
    while n < min(max_n, total):
        if count_log_candidates(log.sub_log(n + 1), K, max_in, max_out, limit=budget) > budget:
            break
        n += 1
    if n == total:
        return log
    return log.sub_log(n)
