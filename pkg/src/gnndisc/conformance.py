"""Alignment-based fitness, escaping-edges precision, F-score and simplicity."""
from __future__ import annotations

import csv
import heapq
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .eventlog import EventLog
from .petrinet import PetriNet

SYNC, MODEL, LOG = "sync", "model", "log"
DEFAULT_STATE_CAP = 500_000


class AlignmentError(RuntimeError):
    """The final marking cannot be reached (or the search exceeded its state cap)."""


@dataclass(frozen=True)
class Move:
    kind: str               # sync | model | log
    label: str              # activity for sync/log moves, transition id for model moves

    def __str__(self) -> str:
        return f"{self.kind}({self.label})"


@dataclass(frozen=True)
class Alignment:
    moves: tuple[Move, ...]
    cost: float

    def log_projection(self) -> tuple[str, ...]:
        return tuple(m.label for m in self.moves if m.kind in (SYNC, LOG))

    def model_projection(self) -> tuple[str, ...]:
        return tuple(m.label for m in self.moves if m.kind in (SYNC, MODEL))


def _move_cost(net: PetriNet, t: str) -> int:
    return 0 if net.is_silent(t) else 1


def align(net: PetriNet, trace: Sequence[str], state_cap: int = DEFAULT_STATE_CAP) -> Alignment:
    """Optimal alignment of ``trace`` (with START/END) by Dijkstra on the synchronous product.

    Costs: synchronous 0, silent model move 0, visible model move 1, log
    move 1. Among equally cheap paths, moves are preferred in the order
    synchronous, model, log and then by label.
    """
    trace = tuple(trace)
    n = len(trace)
    m0, final = net.initial_marking(), net.final_marking()
    trans = sorted(net.transitions)
    start = (m0, 0)
    dist = {start: 0}
    parent: dict = {start: None}
    heap = [(0, 0, start)]
    counter = 1
    done = set()
    while heap:
        cost, _, state = heapq.heappop(heap)
        if state in done:
            continue
        done.add(state)
        m, i = state
        if m == final and i == n:
            return Alignment(_backtrack(parent, state), float(cost))
        if len(done) > state_cap:
            raise AlignmentError(f"alignment search exceeded {state_cap} states")
        succ = []
        enabled = [t for t in trans if net.enabled_vec(m, t)]
        if i < n:
            for t in enabled:
                if t == trace[i]:
                    succ.append((0, Move(SYNC, t), (net.fire_vec(m, t), i + 1)))
        for t in enabled:
            succ.append((_move_cost(net, t), Move(MODEL, t), (net.fire_vec(m, t), i)))
        if i < n:
            succ.append((1, Move(LOG, trace[i]), (m, i + 1)))
        for c, move, nxt in succ:
            nc = cost + c
            if nxt not in done and nc < dist.get(nxt, float("inf")):
                dist[nxt] = nc
                parent[nxt] = (state, move)
                heapq.heappush(heap, (nc, counter, nxt))
                counter += 1
    raise AlignmentError("final marking not reachable")


def _backtrack(parent: dict, state) -> tuple[Move, ...]:
    moves = []
    while parent[state] is not None:
        state, move = parent[state]
        moves.append(move)
    return tuple(reversed(moves))


def cheapest_model_path(net: PetriNet, state_cap: int = DEFAULT_STATE_CAP) -> float:
    """Least number of visible transitions on a firing sequence from the initial to the final marking."""
    m0, final = net.initial_marking(), net.final_marking()
    dist = {m0: 0}
    heap = [(0, 0, m0)]
    counter = 1
    done = set()
    while heap:
        cost, _, m = heapq.heappop(heap)
        if m in done:
            continue
        done.add(m)
        if m == final:
            return float(cost)
        if len(done) > state_cap:
            raise AlignmentError("model path search exceeded its state cap")
        for t in net.transitions:
            if net.enabled_vec(m, t):
                nm = net.fire_vec(m, t)
                nc = cost + _move_cost(net, t)
                if nc < dist.get(nm, float("inf")):
                    dist[nm] = nc
                    heapq.heappush(heap, (nc, counter, nm))
                    counter += 1
    raise AlignmentError("final marking not reachable")


def fitness(net: PetriNet, log: EventLog, alignments: dict | None = None) -> float:
    """1 - total alignment cost / total worst-case cost (traces weighted by count)."""
    alignments = alignments if alignments is not None else align_log(net, log)
    model_cost = cheapest_model_path(net)
    num = den = 0.0
    for trace, count in log.variants:
        num += count * alignments[trace].cost
        den += count * (len(trace) + model_cost)
    return 1.0 - num / den if den else 1.0


def align_log(net: PetriNet, log: EventLog) -> dict[tuple[str, ...], Alignment]:
    return {trace: align(net, trace) for trace, _ in log.variants}


def _tau_closure(net: PetriNet, m: tuple, cap: int = 10_000) -> set:
    seen = {m}
    stack = [m]
    while stack:
        cur = stack.pop()
        for t in net.silent:
            if net.enabled_vec(cur, t):
                nm = net.fire_vec(cur, t)
                if nm not in seen:
                    seen.add(nm)
                    if len(seen) > cap:
                        return seen
                    stack.append(nm)
    return seen


def _allowed(net: PetriNet, m: tuple) -> set[str]:
    out = set()
    for mm in _tau_closure(net, m):
        out.update(t for t in net.visible if net.enabled_vec(mm, t))
    return out


def precision_etc(net: PetriNet, log: EventLog, alignments: dict | None = None) -> float:
    """Escaping-edges precision over the alignment-repaired prefixes of the log.

    For every prefix of visible activities (model projection of the optimal
    alignment) the enabled visible activities, after silent moves, are
    compared to the activities that continue the prefix somewhere in the log.
    Prefixes are weighted by the number of traces sharing them.
    """
    alignments = alignments if alignments is not None else align_log(net, log)
    weight: dict[tuple, int] = {}
    reflected: dict[tuple, set] = {}
    marking: dict[tuple, tuple] = {}
    for trace, count in log.variants:
        m = net.initial_marking()
        prefix: tuple = ()
        visits = [(prefix, m)]
        for t in alignments[trace].model_projection():
            m = net.fire_vec(m, t)
            if t in net.visible:
                reflected.setdefault(prefix, set()).add(t)
                prefix = prefix + (t,)
                visits.append((prefix, m))
        for p, mk in visits:
            weight[p] = weight.get(p, 0) + count
            marking.setdefault(p, mk)
    num = den = 0
    for p, w in weight.items():
        allowed = _allowed(net, marking[p])
        num += w * len(reflected.get(p, set()) & allowed)
        den += w * len(allowed)
    if den == 0:
        raise AlignmentError("no replayable prefix with enabled activities")
    return num / den


def simplicity(net: PetriNet) -> float:
    """1 / (1 + max(0, mean node degree - 2)); a pure chain scores 1."""
    nodes = len(net.places) + len(net.transitions)
    if nodes == 0:
        raise ValueError("empty net")
    mean_degree = 2.0 * len(net.arcs) / nodes
    return 1.0 / (1.0 + max(0.0, mean_degree - 2.0))


def f_score(fit: float, prec: float) -> float:
    if fit <= 0 or prec <= 0:
        return 0.0
    return 2.0 * fit * prec / (fit + prec)


@dataclass
class ConformanceReport:
    fitness: float | None
    precision: float | None
    f_score: float | None
    simplicity: float
    error: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate(net: PetriNet, log: EventLog) -> ConformanceReport:
    """All metrics; fitness and precision are ``None`` when no alignment exists."""
    simp = simplicity(net)
    try:
        alignments = align_log(net, log)
        fit = fitness(net, log, alignments)
        prec = precision_etc(net, log, alignments)
    except (AlignmentError, ValueError) as exc:
        return ConformanceReport(None, None, None, simp, str(exc))
    return ConformanceReport(fit, prec, f_score(fit, prec), simp)


def report_json(report: ConformanceReport, **extra) -> str:
    return json.dumps({**extra, **report.to_dict()}, ensure_ascii=False)


CSV_FIELDS = ("id", "fitness", "precision", "f_score", "simplicity", "error")


def write_csv(rows: Iterable[dict], path: str | Path, fields: Sequence[str] = CSV_FIELDS) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(fields), extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: ("" if row.get(k) is None else row.get(k)) for k in fields})


def summarize(rows: Sequence[dict], keys: Sequence[str] = ("fitness", "precision", "f_score", "simplicity")) -> dict:
    """Mean and median of each metric over the rows where it is defined."""
    import statistics

    out = {}
    for k in keys:
        vals = [r[k] for r in rows if r.get(k) is not None]
        out[k] = {"mean": statistics.fmean(vals) if vals else None,
                  "median": statistics.median(vals) if vals else None,
                  "n": len(vals)}
    return out
