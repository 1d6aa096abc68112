"""Footprint relations of a log and the candidate places they justify."""
from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import islice
from typing import Iterator, Sequence

import numpy as np

from .eventlog import EventLog
from .petrinet import Place

CLASSES = ("1-1", "1-n", "n-1", "n-n")
DEFAULT_K = 2
DEFAULT_CAP = 4


@dataclass(frozen=True)
class AlphaRelations:
    alphabet: tuple[str, ...]
    directly_follows: np.ndarray       # (n, n) bool
    eventually_follows: np.ndarray     # (n, n, K) bool; [..., k-1] is distance k

    @property
    def K(self) -> int:
        return self.eventually_follows.shape[2]

    @property
    def causal(self) -> np.ndarray:
        df = self.directly_follows
        return df & ~df.T

    @property
    def parallel(self) -> np.ndarray:
        df = self.directly_follows
        return df & df.T

    @property
    def conflict(self) -> np.ndarray:
        df = self.directly_follows
        return ~df & ~df.T

    @property
    def follows_within_k(self) -> np.ndarray:
        return self.eventually_follows.any(axis=2)


def compute_relations(log: EventLog, K: int = DEFAULT_K) -> AlphaRelations:
    if K < 1:
        raise ValueError("K must be >= 1")
    n = len(log.alphabet)
    ef = np.zeros((n, n, K), dtype=bool)
    for trace, _ in log.variants:
        idx = [log.index(a) for a in trace]
        for k in range(1, K + 1):
            for i in range(len(idx) - k):
                ef[idx[i], idx[i + k], k - 1] = True
    return AlphaRelations(log.alphabet, ef[:, :, 0].copy(), ef)


@dataclass(frozen=True)
class CandidateSet:
    """Candidate places in canonical order with their class labels."""

    places: tuple[Place, ...]
    classes: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.places)

    def __iter__(self):
        return iter(self.places)

    def __contains__(self, place: object) -> bool:
        return place in self._lookup

    @property
    def _lookup(self) -> frozenset[Place]:
        cached = self.__dict__.get("_set")
        if cached is None:
            cached = frozenset(self.places)
            object.__setattr__(self, "_set", cached)
        return cached

    def by_class(self, cls: str) -> list[Place]:
        return [p for p, c in zip(self.places, self.classes) if c == cls]

    def with_injected(self, extra: Sequence[Place]) -> "CandidateSet":
        new = [p for p in dict.fromkeys(extra) if p not in self]
        return CandidateSet(self.places + tuple(new), self.classes + ("injected",) * len(new))

    def to_json(self) -> str:
        rows = [{"class": c, "in": sorted(p.inputs), "out": sorted(p.outputs)}
                for p, c in zip(self.places, self.classes)]
        return json.dumps(rows, ensure_ascii=False)


def _cliques(items: Sequence[int], compatible: np.ndarray, lo: int, hi: int) -> Iterator[tuple[int, ...]]:
    """Subsets of ``items`` with size in [lo, hi] whose members are pairwise compatible."""
    def grow(chosen: list[int], start: int):
        if len(chosen) >= lo:
            yield tuple(chosen)
        if len(chosen) == hi:
            return
        for k in range(start, len(items)):
            x = items[k]
            if all(compatible[x, y] for y in chosen):
                chosen.append(x)
                yield from grow(chosen, k + 1)
                chosen.pop()

    if hi >= lo:
        yield from grow([], 0)


def _iter_candidates(rel: AlphaRelations, max_in: int, max_out: int) -> Iterator[tuple[str, tuple, tuple]]:
    """Yield ``(class, X indices, Y indices)`` in canonical order."""
    if max_in < 1 or max_out < 1:
        raise ValueError("arity caps must be >= 1")
    n = len(rel.alphabet)
    fk = rel.follows_within_k
    compatible = ~rel.parallel
    for a in range(n):
        for b in range(n):
            if fk[a, b]:
                yield "1-1", (a,), (b,)
    one_many: dict[tuple[int, ...], list[int]] = {}
    for a in range(n):
        succ = [b for b in range(n) if fk[a, b]]
        for ys in _cliques(succ, compatible, 2, max_out):
            one_many.setdefault(ys, []).append(a)
            yield "1-n", (a,), ys
    many_one: dict[tuple[int, ...], list[int]] = {}
    for b in range(n):
        pred = [a for a in range(n) if fk[a, b]]
        for xs in _cliques(pred, compatible, 2, max_in):
            many_one.setdefault(xs, []).append(b)
            yield "n-1", xs, (b,)
    nn = set()
    for ys, sources in one_many.items():
        for xs in _cliques(sources, compatible, 2, max_in):
            nn.add((xs, ys))
    for xs, targets in many_one.items():
        for ys in _cliques(targets, compatible, 2, max_out):
            nn.add((xs, ys))
    for xs, ys in sorted(nn):
        yield "n-n", xs, ys


def enumerate_candidates(rel: AlphaRelations, max_in: int = DEFAULT_CAP, max_out: int = DEFAULT_CAP) -> CandidateSet:
    """Candidate places justified by the footprint relations.

    One-to-one places connect activities within K eventually-follows steps;
    one-to-many and many-to-one places merge one-to-one places sharing an
    endpoint whose other endpoints are pairwise non-parallel; many-to-many
    places combine those in the same way. Order: by class, then by the
    activity indices of the input and output sets.
    """
    alpha = rel.alphabet
    places, classes = [], []
    for cls, xs, ys in _iter_candidates(rel, max_in, max_out):
        places.append(Place.of((alpha[i] for i in xs), (alpha[j] for j in ys)))
        classes.append(cls)
    return CandidateSet(tuple(places), tuple(classes))


def count_candidates(rel: AlphaRelations, max_in: int = DEFAULT_CAP, max_out: int = DEFAULT_CAP,
                     limit: int | None = None) -> int:
    """Number of candidates; stops counting at ``limit + 1`` when a limit is given."""
    it = _iter_candidates(rel, max_in, max_out)
    if limit is not None:
        it = islice(it, limit + 1)
    return sum(1 for _ in it)


def count_log_candidates(log: EventLog, K: int = DEFAULT_K, max_in: int = DEFAULT_CAP,
                         max_out: int = DEFAULT_CAP, limit: int | None = None) -> int:
    return count_candidates(compute_relations(log, K), max_in, max_out, limit)


def log_candidates(log: EventLog, K: int = DEFAULT_K, max_in: int = DEFAULT_CAP,
                   max_out: int = DEFAULT_CAP) -> CandidateSet:
    return enumerate_candidates(compute_relations(log, K), max_in, max_out)
