"""The heterogeneous discovery graph joining a log to its candidate net.

Node kinds: ``event`` (a shared START and END node plus one chain of event
nodes per trace variant), ``transition`` (one per activity), ``place`` (one
per candidate place) and ``tau`` (silent-transition candidates, added while
places are selected). Trace edges and net arcs are mirrored with a reverse
tag; link edges (event to transition) are not. Every node has a self-loop.
"""
from __future__ import annotations

import json
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

from .behavior import CandidateSet
from .eventlog import END, START, EventLog
from .neural.model import EdgeIndex
from .petrinet import Place, TauTransition

MAX_ALPHABET = 20

EVENT, TRANSITION, PLACE, TAU = "event", "transition", "place", "tau"


class GraphError(ValueError):
    pass


class DiscoveryGraph:
    def __init__(self, max_alphabet: int = MAX_ALPHABET):
        self.max_alphabet = max_alphabet
        self.width = max_alphabet + 2
        self.kinds: list[str] = []
        self.labels: list = []
        self.positions: list[tuple[int, int] | None] = []
        # original arcs; ``mirrored`` arcs get a reverse route as well
        self.arc_src: list[int] = []
        self.arc_dst: list[int] = []
        self.arc_kind: list[str] = []
        self.features = np.zeros((0, self.width))
        self.selected = np.zeros(0, dtype=bool)
        self.transition_node: dict[str, int] = {}
        self.place_node: dict[Place, int] = {}
        self.tau_node: dict[TauTransition, int] = {}
        self._edges: EdgeIndex | None = None

    def __len__(self) -> int:
        return len(self.kinds)

    def __repr__(self) -> str:
        counts = {k: self.kinds.count(k) for k in (EVENT, TRANSITION, PLACE, TAU)}
        return f"DiscoveryGraph({counts}, arcs={len(self.arc_src)})"

    def _add_node(self, kind: str, label, position=None) -> int:
        self.kinds.append(kind)
        self.labels.append(label)
        self.positions.append(position)
        self._edges = None
        return len(self.kinds) - 1

    def _add_arc(self, u: int, v: int, kind: str) -> None:
        self.arc_src.append(u)
        self.arc_dst.append(v)
        self.arc_kind.append(kind)
        self._edges = None

    def _grow_arrays(self) -> None:
        extra = len(self.kinds) - len(self.selected)
        if extra:
            self.features = np.vstack([self.features, np.zeros((extra, self.width))])
            self.selected = np.concatenate([self.selected, np.zeros(extra, dtype=bool)])

    def nodes_of(self, *kinds: str) -> np.ndarray:
        return np.array([i for i, k in enumerate(self.kinds) if k in kinds], dtype=np.int64)

    def edge_index(self) -> EdgeIndex:
        """Message routes for the attention layers (cached until the graph changes)."""
        if self._edges is None:
            n = len(self.kinds)
            src = np.array(self.arc_src, dtype=np.int64)
            dst = np.array(self.arc_dst, dtype=np.int64)
            mirrored = np.array([k != "link" for k in self.arc_kind], dtype=bool)
            loops = np.arange(n, dtype=np.int64)
            self._edges = EdgeIndex(
                n=n,
                fwd_src=np.concatenate([src, loops]),
                fwd_dst=np.concatenate([dst, loops]),
                rev_src=dst[mirrored].copy(),
                rev_dst=src[mirrored].copy(),
            )
        return self._edges

    def candidate_nodes(self) -> np.ndarray:
        """Unselected place and tau nodes, in node order."""
        return np.array([i for i, k in enumerate(self.kinds)
                         if (k == PLACE or k == TAU) and not self.selected[i]], dtype=np.int64)

    def selected_places(self) -> list[Place]:
        return [self.labels[i] for i, k in enumerate(self.kinds) if k == PLACE and self.selected[i]]

    def node_of(self, item) -> int:
        if isinstance(item, Place):
            return self.place_node[item]
        if isinstance(item, TauTransition):
            return self.tau_node[item]
        raise KeyError(item)

    def copy(self) -> "DiscoveryGraph":
        g = DiscoveryGraph.__new__(DiscoveryGraph)
        g.max_alphabet, g.width = self.max_alphabet, self.width
        g.kinds, g.labels, g.positions = list(self.kinds), list(self.labels), list(self.positions)
        g.arc_src, g.arc_dst, g.arc_kind = list(self.arc_src), list(self.arc_dst), list(self.arc_kind)
        g.features, g.selected = self.features.copy(), self.selected.copy()
        g.transition_node = dict(self.transition_node)
        g.place_node = dict(self.place_node)
        g.tau_node = dict(self.tau_node)
        g._edges = self._edges
        return g

    def to_dot(self) -> str:
        colors = {EVENT: "lightblue", TRANSITION: "white", PLACE: "lightyellow", TAU: "gray"}
        shapes = {EVENT: "ellipse", TRANSITION: "box", PLACE: "circle", TAU: "box"}
        lines = ["digraph G {"]
        for i, (k, lab) in enumerate(zip(self.kinds, self.labels)):
            text = lab if isinstance(lab, str) else getattr(lab, "name", str(lab))
            if self.selected[i]:
                text += " *"
            lines.append(f"  n{i} [label={json.dumps(text, ensure_ascii=False)}, shape={shapes[k]}, "
                         f"style=filled, fillcolor={colors[k]}];")
        for u, v, kind in zip(self.arc_src, self.arc_dst, self.arc_kind):
            style = {"trace": "solid", "link": "dashed", "net": "bold"}[kind]
            lines.append(f"  n{u} -> n{v} [style={style}];")
        lines.append("}")
        return "\n".join(lines) + "\n"


def build_graph(log: EventLog, candidates: CandidateSet | Iterable[Place],
                max_alphabet: int = MAX_ALPHABET) -> DiscoveryGraph:
    """Encode ``log`` and its candidate places as one graph with initial features."""
    if len(log.alphabet) > max_alphabet:
        raise GraphError(f"alphabet of size {len(log.alphabet)} exceeds {max_alphabet}")
    g = DiscoveryGraph(max_alphabet)
    v_start = g._add_node(EVENT, START, (-1, 0))
    v_end = g._add_node(EVENT, END, (-1, -1))
    events = [v_start, v_end]
    for k, (trace, _) in enumerate(log.variants):
        prev = v_start
        for pos, a in enumerate(trace[1:-1], start=1):
            v = g._add_node(EVENT, a, (k, pos))
            events.append(v)
            g._add_arc(prev, v, "trace")
            prev = v
        g._add_arc(prev, v_end, "trace")
    for a in log.alphabet:
        g.transition_node[a] = g._add_node(TRANSITION, a)
    for v in events:
        g._add_arc(v, g.transition_node[g.labels[v]], "link")
    for p in candidates:
        if p in g.place_node:
            continue
        missing = (p.inputs | p.outputs) - set(g.transition_node)
        if missing:
            raise GraphError(f"candidate {p} refers to unknown activities {sorted(missing)}")
        node = g._add_node(PLACE, p)
        g.place_node[p] = node
        for t in sorted(p.inputs):
            g._add_arc(g.transition_node[t], node, "net")
        for t in sorted(p.outputs):
            g._add_arc(node, g.transition_node[t], "net")
    g._grow_arrays()
    return init_features(g, log.frequencies())


def init_features(g: DiscoveryGraph, freqs: dict[str, float], max_alphabet: int | None = None) -> DiscoveryGraph:
    """One-hot activity ⊕ normalised frequency ⊕ selection flag; zero for places and taus."""
    width = g.max_alphabet if max_alphabet is None else max_alphabet
    if width != g.max_alphabet:
        raise GraphError("feature width must match the graph's alphabet bound")
    order = {a: i for i, a in enumerate(sorted(freqs, key=_alphabet_key))}
    g.features[:] = 0.0
    for i, (kind, lab) in enumerate(zip(g.kinds, g.labels)):
        if kind in (EVENT, TRANSITION):
            g.features[i, order[lab]] = 1.0
            g.features[i, width] = freqs[lab]
        g.features[i, width + 1] = 1.0 if g.selected[i] else 0.0
    return g


def _alphabet_key(label: str) -> tuple:
    return (label != START, label != END, label)


def mark_selected(g: DiscoveryGraph, node: int) -> DiscoveryGraph:
    if g.kinds[node] not in (PLACE, TAU):
        raise GraphError(f"node {node} is a {g.kinds[node]} node, not a place or tau candidate")
    if g.selected[node]:
        raise GraphError(f"node {node} is already selected")
    g.selected[node] = True
    g.features[node, g.max_alphabet + 1] = 1.0
    return g


def tau_candidates_for(selected: Sequence[Place], anchor: Place, arity_cap: int) -> list[TauTransition]:
    """Silent transitions ``(X, Y)`` over selected places that involve ``anchor``."""
    pool = sorted(set(selected), key=Place.sort_key)
    out = []
    subsets = [frozenset(c) for r in range(1, arity_cap + 1) for c in combinations(pool, r)]
    for xs in subsets:
        for ys in subsets:
            if xs & ys or (anchor not in xs and anchor not in ys):
                continue
            out.append(TauTransition(xs, ys))
    return sorted(out, key=TauTransition.sort_key)


def add_tau_candidates(g: DiscoveryGraph, anchor: Place, arity_cap: int = 1,
                       extra: Iterable[TauTransition] = ()) -> list[int]:
    """Add tau candidates between selected places that involve the latest selection.

    ``extra`` are silent transitions to add regardless of the arity cap (their
    places must be selected). Returns the new node ids; their initial
    embedding is the sum of their neighbours' embeddings and is computed by
    the caller.
    """
    selected = g.selected_places()
    if not selected:
        raise GraphError("no selected place to connect")
    taus = tau_candidates_for(selected, anchor, arity_cap) if anchor in selected else []
    chosen = set(selected)
    for tau in extra:
        if not (tau.inputs | tau.outputs) <= chosen:
            raise GraphError(f"{tau} refers to unselected places")
        taus.append(tau)
    new = []
    for tau in taus:
        if tau in g.tau_node:
            continue
        node = g._add_node(TAU, tau)
        g.tau_node[tau] = node
        for p in sorted(tau.inputs, key=Place.sort_key):
            g._add_arc(g.place_node[p], node, "net")
        for p in sorted(tau.outputs, key=Place.sort_key):
            g._add_arc(node, g.place_node[p], "net")
        new.append(node)
    g._grow_arrays()
    return new


def tau_neighbors(g: DiscoveryGraph, node: int) -> list[int]:
    tau = g.labels[node]
    return [g.place_node[p] for p in sorted(tau.inputs | tau.outputs, key=Place.sort_key)]
