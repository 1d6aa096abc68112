"""Petri nets with visible and silent transitions.

A net is stored as named places, visible transitions (whose id is their
activity label), silent transitions (ids ``τ0``, ``τ1``, ...) and a set of
arcs. Nets assembled from candidate places use the canonical name of each
:class:`Place`, so a place's identity there is exactly its ``(inputs,
outputs)`` pair of visible transition labels.
"""
from __future__ import annotations

import json
import xml.etree.ElementTree as ET
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .eventlog import END, START

Marking = dict[str, int]

TOKEN_BOUND = 8
DEFAULT_STATE_CAP = 200_000
PARTIAL_DFS_BUDGET = 2_000


def _fmt(labels: Iterable[str]) -> str:
    return "{" + ",".join(sorted(labels)) + "}"


@dataclass(frozen=True)
class Place:
    """Candidate place characterised by input and output transition labels."""

    inputs: frozenset[str]
    outputs: frozenset[str]

    @classmethod
    def of(cls, inputs: Iterable[str], outputs: Iterable[str]) -> "Place":
        return cls(frozenset(inputs), frozenset(outputs))

    @cached_property
    def name(self) -> str:
        return f"({_fmt(self.inputs)},{_fmt(self.outputs)})"

    @cached_property
    def _key(self) -> tuple:
        return (tuple(sorted(self.inputs)), tuple(sorted(self.outputs)))

    def sort_key(self) -> tuple:
        return self._key

    def __repr__(self) -> str:
        return f"Place{self.name}"


@dataclass(frozen=True)
class TauTransition:
    """Silent transition between candidate places."""

    inputs: frozenset[Place]
    outputs: frozenset[Place]

    def __post_init__(self):
        if not self.inputs or not self.outputs:
            raise ValueError("silent transition needs input and output places")

    @cached_property
    def _key(self) -> tuple:
        return (tuple(sorted(p.sort_key() for p in self.inputs)),
                tuple(sorted(p.sort_key() for p in self.outputs)))

    def sort_key(self) -> tuple:
        return self._key

    @cached_property
    def name(self) -> str:
        ins = ",".join(p.name for p in sorted(self.inputs, key=Place.sort_key))
        outs = ",".join(p.name for p in sorted(self.outputs, key=Place.sort_key))
        return f"τ[{ins}->{outs}]"

    def __repr__(self) -> str:
        return self.name


SOURCE = Place.of((), (START,))
SINK = Place.of((END,), ())


class PetriNetError(ValueError):
    pass


class NotRepresentable(PetriNetError):
    """The net has places that are not distinguishable by their visible transitions."""


class PetriNet:
    """Immutable place/transition net.

    ``arcs`` are ``(source, target)`` pairs of node ids and must connect a
    place with a transition.
    """

    def __init__(self, places: Iterable[str], visible: Iterable[str],
                 silent: Iterable[str] = (), arcs: Iterable[tuple[str, str]] = ()):
        self.places: tuple[str, ...] = tuple(dict.fromkeys(places))
        self.visible: tuple[str, ...] = tuple(dict.fromkeys(visible))
        self.silent: tuple[str, ...] = tuple(dict.fromkeys(silent))
        self.transitions: tuple[str, ...] = self.visible + self.silent
        pset, tset = set(self.places), set(self.transitions)
        if pset & tset:
            raise PetriNetError(f"node ids shared by places and transitions: {sorted(pset & tset)}")
        self.arcs: frozenset[tuple[str, str]] = frozenset(arcs)
        self.preset: dict[str, list[str]] = {n: [] for n in self.places + self.transitions}
        self.postset: dict[str, list[str]] = {n: [] for n in self.places + self.transitions}
        for src, dst in sorted(self.arcs):
            if not ((src in pset and dst in tset) or (src in tset and dst in pset)):
                raise PetriNetError(f"arc ({src!r}, {dst!r}) must connect a place and a transition")
            self.postset[src].append(dst)
            self.preset[dst].append(src)
        self.place_index = {p: i for i, p in enumerate(self.places)}
        self._pre_idx = {t: tuple(self.place_index[p] for p in self.preset[t]) for t in self.transitions}
        self._post_idx = {t: tuple(self.place_index[p] for p in self.postset[t]) for t in self.transitions}

    def __repr__(self) -> str:
        return (f"PetriNet(|P|={len(self.places)}, |T_A|={len(self.visible)}, "
                f"|T_τ|={len(self.silent)}, |F|={len(self.arcs)})")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PetriNet):
            return NotImplemented
        return (set(self.places) == set(other.places) and set(self.visible) == set(other.visible)
                and set(self.silent) == set(other.silent) and self.arcs == other.arcs)

    def __hash__(self) -> int:
        return hash((frozenset(self.places), frozenset(self.transitions), self.arcs))

    def is_silent(self, t: str) -> bool:
        return t in self._post_idx and t not in self.visible

    @property
    def source_places(self) -> list[str]:
        return [p for p in self.places if not self.preset[p]]

    @property
    def sink_places(self) -> list[str]:
        return [p for p in self.places if not self.postset[p]]

    # markings are tuples indexed like ``places`` inside the hot loops
    def marking_vector(self, m: Mapping[str, int]) -> tuple[int, ...]:
        vec = [0] * len(self.places)
        for p, c in m.items():
            if c < 0:
                raise PetriNetError(f"negative token count on {p!r}")
            if c:
                vec[self.place_index[p]] = c
        return tuple(vec)

    def marking_dict(self, vec: tuple[int, ...]) -> Marking:
        return {p: c for p, c in zip(self.places, vec) if c}

    def initial_marking(self) -> tuple[int, ...]:
        if len(self.source_places) != 1:
            raise PetriNetError(f"need exactly one source place, found {list(self.source_places)}")
        return self.marking_vector({self.source_places[0]: 1})

    def final_marking(self) -> tuple[int, ...]:
        if len(self.sink_places) != 1:
            raise PetriNetError(f"need exactly one sink place, found {list(self.sink_places)}")
        return self.marking_vector({self.sink_places[0]: 1})

    def enabled_vec(self, m: tuple[int, ...], t: str) -> bool:
        return all(m[i] > 0 for i in self._pre_idx[t])

    def fire_vec(self, m: tuple[int, ...], t: str) -> tuple[int, ...]:
        out = list(m)
        for i in self._pre_idx[t]:
            out[i] -= 1
        for i in self._post_idx[t]:
            out[i] += 1
        return tuple(out)

    def enabled_transitions(self, m: tuple[int, ...]) -> list[str]:
        return [t for t in self.transitions if all(m[i] > 0 for i in self._pre_idx[t])]

    def with_arcs(self, places=(), visible=(), silent=(), arcs=()) -> "PetriNet":
        """Copy of the net extended by the given nodes and arcs."""
        return PetriNet(self.places + tuple(places), self.visible + tuple(visible),
                        self.silent + tuple(silent), self.arcs | set(arcs))


# --- candidate form ---------------------------------------------------------

def from_candidates(places: Iterable[Place], taus: Iterable[TauTransition] = (),
                    transitions: Iterable[str] = ()) -> PetriNet:
    """Assemble a net from candidate places and silent transitions.

    Visible transitions are the given labels plus every label mentioned by a
    place. Duplicate places collapse, so adding an existing ``(X, Y)`` pair is
    a no-op.
    """
    places = sorted(set(places), key=Place.sort_key)
    taus = sorted(set(taus), key=TauTransition.sort_key)
    labels = set(transitions)
    for p in places:
        labels |= p.inputs | p.outputs
    placeset = set(places)
    arcs = set()
    for p in places:
        arcs.update((t, p.name) for t in p.inputs)
        arcs.update((p.name, t) for t in p.outputs)
    silent = []
    for k, tau in enumerate(taus):
        tid = f"τ{k}"
        silent.append(tid)
        for p in tau.inputs | tau.outputs:
            if p not in placeset:
                raise PetriNetError(f"silent transition refers to unknown place {p}")
        arcs.update((p.name, tid) for p in tau.inputs)
        arcs.update((tid, p.name) for p in tau.outputs)
    visible = sorted(labels, key=_label_key)
    return PetriNet([p.name for p in places], visible, silent, arcs)


def _label_key(label: str) -> tuple:
    return (label != START, label != END, label)


def to_candidates(net: PetriNet) -> tuple[dict[str, Place], dict[str, TauTransition]]:
    """Project every place onto its visible neighbours.

    Raises :class:`NotRepresentable` when two places share the same
    projection.
    """
    places: dict[str, Place] = {}
    seen: dict[Place, str] = {}
    for p in net.places:
        cand = Place.of((t for t in net.preset[p] if t in net.visible),
                        (t for t in net.postset[p] if t in net.visible))
        if cand in seen:
            raise NotRepresentable(f"places {seen[cand]!r} and {p!r} both project to {cand.name}")
        seen[cand] = p
        places[p] = cand
    taus = {t: TauTransition(frozenset(places[p] for p in net.preset[t]),
                             frozenset(places[p] for p in net.postset[t]))
            for t in net.silent}
    return places, taus


def canonical(net: PetriNet) -> PetriNet:
    """Rename nodes to their candidate-form names (requires representability)."""
    places, taus = to_candidates(net)
    return from_candidates(places.values(), taus.values(), net.visible)


def candidate_signature(net: PetriNet) -> tuple[frozenset[Place], frozenset[TauTransition]]:
    places, taus = to_candidates(net)
    return frozenset(places.values()), frozenset(taus.values())


# --- semantics ---------------------------------------------------------------

def _check_transition(net: PetriNet, t: str) -> None:
    if t not in net._pre_idx:
        raise PetriNetError(f"unknown transition {t!r}")


def enabled(net: PetriNet, m: Mapping[str, int], t: str) -> bool:
    """True iff every input place of ``t`` holds at least one token."""
    _check_transition(net, t)
    return all(m.get(p, 0) >= 1 for p in net.preset[t])


def fire(net: PetriNet, m: Mapping[str, int], t: str) -> Marking:
    if not enabled(net, m, t):
        raise PetriNetError(f"transition {t!r} is not enabled")
    out = dict(m)
    for p in net.preset[t]:
        out[p] -= 1
    for p in net.postset[t]:
        out[p] = out.get(p, 0) + 1
    return {p: c for p, c in out.items() if c}


# --- structure ---------------------------------------------------------------

@dataclass
class WorkflowDiagnostics:
    ok: bool
    sources: list[str] = field(default_factory=list)
    sinks: list[str] = field(default_factory=list)
    unreachable: list[str] = field(default_factory=list)
    not_reaching_sink: list[str] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.ok


def _reach(start: str, succ: Mapping[str, list[str]]) -> set[str]:
    seen = {start}
    todo = [start]
    while todo:
        n = todo.pop()
        for m in succ[n]:
            if m not in seen:
                seen.add(m)
                todo.append(m)
    return seen


def is_workflow_net(net: PetriNet) -> WorkflowDiagnostics:
    """Unique source and sink place, every node on a source-to-sink path."""
    diag = WorkflowDiagnostics(False, net.source_places, net.sink_places)
    if len(diag.sources) != 1 or len(diag.sinks) != 1:
        return diag
    nodes = net.places + net.transitions
    forward = _reach(diag.sources[0], net.postset)
    backward = _reach(diag.sinks[0], net.preset)
    diag.unreachable = [n for n in nodes if n not in forward]
    diag.not_reaching_sink = [n for n in nodes if n not in backward]
    diag.ok = not diag.unreachable and not diag.not_reaching_sink
    return diag


def is_connected(net: PetriNet) -> bool:
    """Every transition has at least one input and one output place."""
    return all(net.preset[t] and net.postset[t] for t in net.transitions)


def _strongly_connected(nodes: set[str], edges: list[tuple[str, str]]) -> bool:
    if not nodes:
        return False
    succ: dict[str, list[str]] = {n: [] for n in nodes}
    pred: dict[str, list[str]] = {n: [] for n in nodes}
    for a, b in edges:
        succ[a].append(b)
        pred[b].append(a)
    start = next(iter(nodes))
    return _reach(start, succ) == nodes and _reach(start, pred) == nodes


class _SComponentSearch:
    """Backtracking search for state-machine components containing a place.

    A candidate set S of places must give every transition touching S exactly
    one input and exactly one output place inside S. In ``partial`` mode a
    transition without any input (output) place has that side left open, and
    the connectivity requirement is dropped; this is used on nets still under
    construction.
    """

    def __init__(self, net: PetriNet, partial: bool, budget: int = 200_000):
        self.net = net
        self.partial = partial
        self.pre = {t: frozenset(net.preset[t]) for t in net.transitions}
        self.post = {t: frozenset(net.postset[t]) for t in net.transitions}
        self.touching = {p: sorted(set(net.preset[p]) | set(net.postset[p])) for p in net.places}
        # transition sides each place sits on
        self.sides = {p: [self.pre[t] for t in net.postset[p]] + [self.post[t] for t in net.preset[p]]
                      for p in net.places}
        self.failed: set[frozenset[str]] = set()
        self.budget = budget

    def _compatible(self, q: str, S: frozenset[str]) -> bool:
        return not any(side & S for side in self.sides[q])

    def _violation(self, S: frozenset[str]):
        """Most constrained unmet constraint as its choices, None if closed, False if infeasible.

        Choices that would put two places of S on one side of a transition
        are dropped up front.
        """
        ts = sorted({t for p in S for t in self.touching[p]})
        best = None
        for t in ts:
            for side in (self.pre[t], self.post[t]):
                inside = side & S
                if len(inside) > 1:
                    return False
                if inside:
                    continue
                if not side:
                    if self.partial:
                        continue
                    return False
                opts = [q for q in sorted(side) if self._compatible(q, S)]
                if not opts:
                    return False
                if best is None or len(opts) < len(best):
                    best = opts
        return best

    def _valid(self, S: frozenset[str]) -> bool:
        if self.partial:
            return True
        ts = {t for p in S for t in self.touching[p]}
        edges = [(p, t) for t in ts for p in self.pre[t] & S] + [(t, p) for t in ts for p in self.post[t] & S]
        srcs = [p for p in S if not self.net.preset[p]]
        sinks = [p for p in S if not self.net.postset[p]]
        if len(srcs) != 1 or len(sinks) != 1:
            return False
        edges.append((sinks[0], srcs[0]))
        return _strongly_connected(set(S) | ts, edges)

    def find(self, S: frozenset[str]) -> frozenset[str] | None:
        if S in self.failed:
            return None
        self.budget -= 1
        if self.budget < 0:
            raise RuntimeError("S-component search budget exhausted")
        v = self._violation(S)
        if v is False:
            self.failed.add(S)
            return None
        if v is None:
            if self._valid(S):
                return S
            self.failed.add(S)
            return None
        for q in v:
            found = self.find(S | {q})
            if found is not None:
                return found
        self.failed.add(S)
        return None


def s_components(net: PetriNet, partial: bool = False,
                 budget: int = 200_000) -> dict[str, frozenset[str] | None]:
    """A covering component (or ``None``) for every place.

    Raises RuntimeError once the search has visited ``budget`` place sets.
    """
    search = _SComponentSearch(net, partial, budget)
    out: dict[str, frozenset[str] | None] = {}
    base: frozenset[str] = frozenset()
    if not partial:
        base = frozenset(net.source_places + net.sink_places)
    for p in net.places:
        if p in out:
            continue
        comp = search.find(base | {p})
        if comp is None:
            out[p] = None
        else:
            for q in comp:
                out.setdefault(q, comp)
    return out


def partially_covered(net: PetriNet) -> set[str]:
    """Places lying in some relaxed S-component, found with a 0/1 program.

    A relaxed component is a 0/1 vector x over places with, for every
    transition, x(preset) = x(postset) <= 1 when both sides are non-empty
    and x(side) <= 1 otherwise. Each round maximises the number of still
    uncovered places in one component; a round adding nothing proves the rest
    uncoverable. Agrees with ``s_components(net, partial=True)``.
    """
    from scipy.optimize import Bounds, LinearConstraint, milp

    places = list(net.places)
    if not places:
        return set()
    col = {p: k for k, p in enumerate(places)}
    rows, lo, hi = [], [], []
    for t in net.transitions:
        pre = np.zeros(len(places))
        post = np.zeros(len(places))
        for p in net.preset[t]:
            pre[col[p]] = 1.0
        for p in net.postset[t]:
            post[col[p]] = 1.0
        for side in (pre, post):
            if side.any():
                rows.append(side)
                lo.append(0.0)
                hi.append(1.0)
        if pre.any() and post.any():
            rows.append(pre - post)
            lo.append(0.0)
            hi.append(0.0)
    A = np.array(rows) if rows else np.zeros((0, len(places)))
    lo, hi = np.array(lo), np.array(hi)
    cons = [LinearConstraint(A, lo, hi)] if rows else []
    covered: set[str] = set()
    while len(covered) < len(places):
        c = np.array([0.0 if p in covered else -1.0 for p in places])
        # HiGHS presolve can return infeasible points on these programs
        res = milp(c, constraints=cons, integrality=np.ones(len(places)), bounds=Bounds(0, 1),
                   options={"presolve": False})
        if res.x is None:
            raise RuntimeError(f"relaxed S-component program failed: {res.message}")
        x = np.round(res.x)
        if rows and not (np.all(A @ x >= lo - 1e-9) and np.all(A @ x <= hi + 1e-9)):
            raise RuntimeError("relaxed S-component program returned an infeasible point")
        new = {p for p, v in zip(places, x) if v > 0.5 and p not in covered}
        if not new:
            break
        covered |= new
    return covered


def is_s_coverable(net: PetriNet, partial: bool = False) -> bool:
    """Every place lies in some S-component.

    The exact check requires a unique source and sink inside each component
    and strong connectivity once the sink is linked back to the source.
    ``partial=True`` applies the relaxed variant for nets under construction.
    """
    if partial:
        # the depth-first search is fastest on small nets; hard instances go to the 0/1 program
        try:
            return all(c is not None for c in s_components(net, True, PARTIAL_DFS_BUDGET).values())
        except RuntimeError:
            return len(partially_covered(net)) == len(net.places)
    if len(net.source_places) != 1 or len(net.sink_places) != 1:
        return False
    return all(c is not None for c in s_components(net, partial).values())


# --- soundness ---------------------------------------------------------------

@dataclass
class SoundnessVerdict:
    classification: str  # sound | easy_sound | unsound | indeterminate
    reason: str = ""
    witness: Marking | None = None
    dead_transitions: list[str] = field(default_factory=list)
    n_states: int = 0

    @property
    def is_sound(self) -> bool:
        return self.classification == "sound"

    @property
    def is_easy_sound(self) -> bool:
        return self.classification in ("sound", "easy_sound")

    def to_dict(self) -> dict:
        return {"classification": self.classification, "reason": self.reason,
                "witness": self.witness, "dead_transitions": self.dead_transitions,
                "n_states": self.n_states}


def reachability_graph(net: PetriNet, state_cap: int = DEFAULT_STATE_CAP, token_bound: int = TOKEN_BOUND):
    """Breadth-first reachability from the initial marking.

    Returns ``(states, edges, status)`` where ``states`` lists marking vectors
    in discovery order, ``edges`` holds ``(src_idx, transition, dst_idx)``, and
    ``status`` is ``"ok"``, ``"unbounded"`` (with the offending marking last in
    ``states``) or ``"cap"``.
    """
    m0 = net.initial_marking()
    index = {m0: 0}
    states = [m0]
    edges = []
    queue = deque([0])
    pre, post = net._pre_idx, net._post_idx
    trans = net.transitions
    while queue:
        si = queue.popleft()
        m = states[si]
        for t in trans:
            if all(m[i] > 0 for i in pre[t]):
                nm = list(m)
                for i in pre[t]:
                    nm[i] -= 1
                for i in post[t]:
                    nm[i] += 1
                nm = tuple(nm)
                j = index.get(nm)
                if j is None:
                    j = len(states)
                    index[nm] = j
                    states.append(nm)
                    if max(nm) > token_bound:
                        edges.append((si, t, j))
                        return states, edges, "unbounded"
                    if len(states) > state_cap:
                        return states, edges, "cap"
                    queue.append(j)
                edges.append((si, t, j))
    return states, edges, "ok"


def check_soundness(net: PetriNet, state_cap: int = DEFAULT_STATE_CAP,
                    token_bound: int = TOKEN_BOUND, silent_can_be_dead: bool = True) -> SoundnessVerdict:
    """Classify a workflow net by exploring its reachability graph.

    ``sound``: the final marking is reachable from every reachable marking, no
    reachable marking strictly covers it, and no transition is dead.
    ``easy_sound``: the first two hold but some transitions are dead.
    ``indeterminate``: more than ``state_cap`` markings were reached.
    """
    if not is_workflow_net(net):
        return SoundnessVerdict("unsound", "not a workflow net")
    states, edges, status = reachability_graph(net, state_cap, token_bound)
    if status == "cap":
        return SoundnessVerdict("indeterminate", f"more than {state_cap} reachable markings",
                                n_states=len(states))
    if status == "unbounded":
        return SoundnessVerdict("unsound", f"a place exceeds {token_bound} tokens",
                                net.marking_dict(states[-1]), n_states=len(states))
    final = net.final_marking()
    (o,) = net.sink_places
    oi = net.place_index[o]
    for m in states:
        if m[oi] >= 1 and m != final:
            return SoundnessVerdict("unsound", "improper completion", net.marking_dict(m),
                                    n_states=len(states))
    preds: dict[int, list[int]] = {}
    for s, _, d in edges:
        preds.setdefault(d, []).append(s)
    fi = next((k for k, m in enumerate(states) if m == final), None)
    if fi is None:
        return SoundnessVerdict("unsound", "final marking unreachable", n_states=len(states))
    can_finish = {fi}
    todo = [fi]
    while todo:
        for s in preds.get(todo.pop(), ()):
            if s not in can_finish:
                can_finish.add(s)
                todo.append(s)
    stuck = next((k for k in range(len(states)) if k not in can_finish), None)
    if stuck is not None:
        return SoundnessVerdict("unsound", "no option to complete", net.marking_dict(states[stuck]),
                                n_states=len(states))
    fired = {t for _, t, _ in edges}
    dead = [t for t in net.transitions if t not in fired and (silent_can_be_dead or t in net.visible)]
    if dead:
        return SoundnessVerdict("easy_sound", "dead transitions", dead_transitions=dead,
                                n_states=len(states))
    return SoundnessVerdict("sound", n_states=len(states))


# --- serialization -----------------------------------------------------------

def to_json_dict(net: PetriNet) -> dict:
    """Places list their visible neighbours; silent transitions refer to place indices."""
    pidx = net.place_index
    return {
        "transitions": list(net.visible),
        "places": [{"in": sorted(t for t in net.preset[p] if t in net.visible),
                    "out": sorted(t for t in net.postset[p] if t in net.visible)} for p in net.places],
        "taus": [{"in": sorted(pidx[p] for p in net.preset[t]),
                  "out": sorted(pidx[p] for p in net.postset[t])} for t in net.silent],
    }


def from_json_dict(data: Mapping) -> PetriNet:
    visible = list(data.get("transitions", []))
    names = []
    counts: dict[str, int] = {}
    for rec in data["places"]:
        name = Place.of(rec["in"], rec["out"]).name
        k = counts.get(name, 0)
        counts[name] = k + 1
        names.append(name if k == 0 else f"{name}#{k}")
    arcs = set()
    for name, rec in zip(names, data["places"]):
        visible.extend(rec["in"])
        visible.extend(rec["out"])
        arcs.update((t, name) for t in rec["in"])
        arcs.update((name, t) for t in rec["out"])
    silent = []
    for k, rec in enumerate(data.get("taus", [])):
        tid = f"τ{k}"
        silent.append(tid)
        arcs.update((names[i], tid) for i in rec["in"])
        arcs.update((tid, names[i]) for i in rec["out"])
    return PetriNet(names, sorted(set(visible), key=_label_key), silent, arcs)


def save_json(net: PetriNet, path: str | Path) -> None:
    Path(path).write_text(json.dumps(to_json_dict(net), indent=1, ensure_ascii=False) + "\n", encoding="utf-8")


def load_json(path: str | Path) -> PetriNet:
    return from_json_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _dot_id(node: str) -> str:
    return json.dumps(node, ensure_ascii=False)


def to_dot(net: PetriNet, name: str = "net") -> str:
    lines = [f"digraph {json.dumps(name)} {{", "  rankdir=LR;"]
    for p in net.places:
        label = ""
        if not net.preset[p]:
            label = "i"
        elif not net.postset[p]:
            label = "o"
        lines.append(f"  {_dot_id(p)} [shape=circle, label={json.dumps(label)}];")
    for t in net.visible:
        lines.append(f"  {_dot_id(t)} [shape=box, label={json.dumps(t, ensure_ascii=False)}];")
    for t in net.silent:
        lines.append(f"  {_dot_id(t)} [shape=box, style=filled, fillcolor=black, label=\"\", width=0.15];")
    for a, b in sorted(net.arcs):
        lines.append(f"  {_dot_id(a)} -> {_dot_id(b)};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def to_pnml(net: PetriNet, name: str = "net") -> str:
    """Minimal PNML document (places, transitions with a silent flag, arcs)."""
    root = ET.Element("pnml")
    xnet = ET.SubElement(root, "net", id=name, type="http://www.pnml.org/version-2009/grammar/ptnet")
    page = ET.SubElement(xnet, "page", id="page0")
    ids = {}
    for k, p in enumerate(net.places):
        ids[p] = f"p{k}"
        el = ET.SubElement(page, "place", id=ids[p])
        ET.SubElement(ET.SubElement(el, "name"), "text").text = p
        if not net.preset[p]:
            ET.SubElement(ET.SubElement(el, "initialMarking"), "text").text = "1"
    for k, t in enumerate(net.transitions):
        ids[t] = f"t{k}"
        el = ET.SubElement(page, "transition", id=ids[t])
        ET.SubElement(ET.SubElement(el, "name"), "text").text = t
        if t in net.silent:
            ET.SubElement(el, "toolspecific", tool="gnndisc", version="1", activity="$invisible$")
    for k, (a, b) in enumerate(sorted(net.arcs)):
        ET.SubElement(page, "arc", id=f"a{k}", source=ids[a], target=ids[b])
    ET.indent(root)
    return ET.tostring(root, encoding="unicode") + "\n"


def from_pnml(text: str) -> PetriNet:
    root = ET.fromstring(text)
    page = root.find("net/page")
    names = {}
    places, visible, silent = [], [], []
    for el in page.findall("place"):
        names[el.get("id")] = el.findtext("name/text")
        places.append(names[el.get("id")])
    for el in page.findall("transition"):
        names[el.get("id")] = el.findtext("name/text")
        (silent if el.find("toolspecific") is not None else visible).append(names[el.get("id")])
    arcs = [(names[a.get("source")], names[a.get("target")]) for a in page.findall("arc")]
    return PetriNet(places, visible, silent, arcs)
