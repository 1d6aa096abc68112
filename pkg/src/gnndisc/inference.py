"""Net discovery for unseen logs by sequential place selection with beam search.

Each beam state holds a partially selected net, its discovery graph and
embeddings, and the joint log-probability of the decisions taken so far
(selections and "continue"/"stop" decisions of the stop network). A state
finishes when the stop network votes to stop and the net is complete: every
transition has an input and an output place and every place lies in an
S-component. Otherwise the stop vote is overridden. Candidates that would
make the partial net lose (relaxed) S-coverability are skipped.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from math import floor

import numpy as np

from . import discgraph as dg
from .behavior import CandidateSet, log_candidates
from .eventlog import EventLog, sample_variants, truncate_alphabet
from .neural import tensor as T
from .neural.model import Model
from .neural.tensor import Tensor
from .petrinet import (SINK, SOURCE, PetriNet, Place, SoundnessVerdict, TauTransition, check_soundness,
                       from_candidates, is_connected, is_s_coverable, to_json_dict)
from .training import append_tau_embeddings, stop_nodes


@dataclass(frozen=True)
class InferConfig:
    beam: int = 10
    decay: float = 0.9
    threshold: float = 0.5
    max_steps: int = 64
    tau_arity: int = 1
    min_variants: int = 8
    max_variants: int = 50
    budget: int = 2000
    K: int = 2
    max_in: int = 4
    max_out: int = 4
    max_alphabet: int = 20
    s_filter: bool = True
    state_cap: int = 200_000

    def __post_init__(self):
        if self.beam < 1:
            raise ValueError("beam width must be >= 1")
        if not 0.0 < self.decay <= 1.0:
            raise ValueError("decay must lie in (0, 1]")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie in (0, 1)")

    def width(self, step: int) -> int:
        return max(1, floor(self.beam * self.decay ** step + 1e-9))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "InferConfig":
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})


@dataclass
class BeamState:
    graph: dg.DiscoveryGraph
    h: np.ndarray
    logp: float = 0.0
    order: list = field(default_factory=list)
    step: int = 0
    finished: bool = False
    failed: bool = False

    @property
    def places(self) -> list[Place]:
        return [x for x in self.order if isinstance(x, Place)]

    @property
    def taus(self) -> list[TauTransition]:
        return [x for x in self.order if isinstance(x, TauTransition)]

    @property
    def key(self) -> frozenset:
        return frozenset(self.order)

    def net(self) -> PetriNet:
        return build_net(self.graph, self.order)


def build_net(g: dg.DiscoveryGraph, items) -> PetriNet:
    labels = [lab for lab, k in zip(g.labels, g.kinds) if k == dg.TRANSITION]
    places = [SOURCE, SINK, *(x for x in items if isinstance(x, Place))]
    taus = [x for x in items if isinstance(x, TauTransition)]
    return from_candidates(places, taus, labels)


def net_is_complete(net: PetriNet) -> bool:
    return is_connected(net) and _s_ok(net, partial=False)


def _s_ok(net: PetriNet, partial: bool) -> bool:
    try:
        return is_s_coverable(net, partial=partial)
    except RuntimeError:  # search budget exhausted: treat as not coverable
        return False


def _serial(net: PetriNet) -> str:
    import json
    return json.dumps(to_json_dict(net), sort_keys=True, ensure_ascii=False)


# --- single-state operations -------------------------------------------------

@dataclass
class _Scores:
    nodes: np.ndarray
    logp: np.ndarray
    log_add: float
    log_stop: float

    @property
    def p_add(self) -> float:
        return float(np.exp(self.log_add))


def score_state(state: BeamState, model: Model) -> _Scores:
    g = state.graph
    nodes = g.candidate_nodes()
    with T.no_grad():
        h = Tensor(state.h)
        x = float(model.stop_logit(h, stop_nodes(g)).data)
        logp = model.score_candidates(h, g.selected.astype(float), nodes).data if len(nodes) else np.zeros(0)
    return _Scores(nodes, logp, -float(np.logaddexp(0.0, -x)), -float(np.logaddexp(0.0, x)))


def wants_to_finish(state: BeamState, scores: _Scores, cfg: InferConfig) -> bool:
    return scores.p_add < cfg.threshold and net_is_complete(state.net())


def admissible(state: BeamState, node: int, cfg: InferConfig, memo: dict | None = None) -> bool:
    """Adding ``node`` keeps the partial net (relaxed) S-coverable.

    ``memo`` caches verdicts by selection set, shared between beam states.
    """
    if not cfg.s_filter:
        return True
    item = state.graph.labels[node]
    key = state.key | {item}
    if memo is not None and key in memo:
        return memo[key]
    ok = _s_ok(build_net(state.graph, [*state.order, item]), partial=True)
    if memo is not None:
        memo[key] = ok
    return ok


def ranked_candidates(scores: _Scores) -> list[tuple[float, int]]:
    return sorted(zip((-scores.logp).tolist(), scores.nodes.tolist()))


def accept_place(state: BeamState, node: int, model: Model, cfg: InferConfig, gain: float) -> BeamState:
    """Select ``node``, add its tau candidates, run PN2 and add ``gain`` to the log-probability."""
    g = state.graph.copy()
    if g.kinds[node] not in (dg.PLACE, dg.TAU) or g.selected[node]:
        raise ValueError(f"node {node} is not an unselected candidate")
    item = g.labels[node]
    dg.mark_selected(g, node)
    h = state.h
    if isinstance(item, Place):
        new = dg.add_tau_candidates(g, item, cfg.tau_arity)
        h = append_tau_embeddings(h, g, new)
    with T.no_grad():
        h = model.propagate_pn2(Tensor(h), g.selected.astype(float), g.edge_index()).data
    return BeamState(g, h, state.logp + gain, [*state.order, item], state.step + 1)


def initial_state(g: dg.DiscoveryGraph, model: Model) -> BeamState:
    with T.no_grad():
        h = model.propagate_pn1(g.features, g.edge_index()).data
    if not np.all(np.isfinite(h)):
        raise FloatingPointError("non-finite embeddings after PN1")
    return BeamState(g, h)


# --- search -------------------------------------------------------------------

def step_beam(states: list[BeamState], model: Model, cfg: InferConfig,
              finished_pool: list[BeamState] | None = None, memo: dict | None = None) -> list[BeamState]:
    """Expand every unfinished state once; returns finished, failed and surviving states.

    ``finished_pool`` (already finished states) is used to prune proposals
    that can no longer enter the top ``cfg.beam``.
    """
    pool = list(finished_pool or [])
    out: list[BeamState] = []
    proposals = []
    for si, s in enumerate(states):
        if s.finished or s.failed:
            out.append(s)
            continue
        sc = score_state(s, model)
        if wants_to_finish(s, sc, cfg):
            done = replace(s, logp=s.logp + sc.log_stop, finished=True)
            out.append(done)
            pool.append(done)
            continue
        fan_out = cfg.width(s.step)
        taken = 0
        for neg, node in ranked_candidates(sc):
            if taken == fan_out:
                break
            if admissible(s, node, cfg, memo):
                gain = sc.log_add - neg
                proposals.append((s.logp + gain, si, node, gain))
                taken += 1
        if taken == 0:
            out.append(replace(s, failed=True))
    bound = _prune_bound(pool, cfg.beam)
    proposals = [p for p in proposals if p[0] >= bound]
    proposals.sort(key=lambda p: (-p[0], p[1], p[2]))
    keep = cfg.width(min(s.step for s in states) + 1) if states else 1
    seen = set()
    for score, si, node, gain in proposals:
        if keep == 0:
            break
        s = states[si]
        key = s.key | {s.graph.labels[node]}
        if key in seen:
            continue
        seen.add(key)
        out.append(accept_place(s, node, model, cfg, gain))
        keep -= 1
    return out


def _prune_bound(pool: list[BeamState], b: int) -> float:
    if len(pool) < b:
        return -np.inf
    return sorted((s.logp for s in pool), reverse=True)[b - 1]


@dataclass
class DiscoveredNet:
    net: PetriNet
    logp: float
    verdict: SoundnessVerdict
    order: list

    def to_dict(self) -> dict:
        return {"logp": self.logp, "verdict": self.verdict.to_dict(), "net": to_json_dict(self.net),
                "order": [x.name for x in self.order]}


@dataclass
class DiscoveryResult:
    nets: list[DiscoveredNet]
    log: EventLog | None = None
    n_candidates: int = 0
    steps: int = 0
    best_partial: BeamState | None = None
    reason: str = ""

    @property
    def failed(self) -> bool:
        return not self.nets

    @property
    def best(self) -> DiscoveredNet | None:
        return self.nets[0] if self.nets else None


def prepare_graph(log: EventLog, cfg: InferConfig) -> tuple[EventLog, CandidateSet, dg.DiscoveryGraph]:
    truncated = truncate_alphabet(log, cfg.max_alphabet - 2)
    sampled = sample_variants(truncated, cfg.min_variants, cfg.max_variants, cfg.budget,
                              cfg.K, cfg.max_in, cfg.max_out)
    cands = log_candidates(sampled, cfg.K, cfg.max_in, cfg.max_out)
    return sampled, cands, dg.build_graph(sampled, cands, cfg.max_alphabet)


def beam_search(g: dg.DiscoveryGraph, model: Model, cfg: InferConfig,
                verify: bool = True) -> DiscoveryResult:
    if cfg.max_steps <= 0:
        return DiscoveryResult([], reason="max_steps is 0")
    states = [initial_state(g, model)]
    finished: list[BeamState] = []
    failed: list[BeamState] = []
    memo: dict = {}
    steps = 0
    while states and steps < cfg.max_steps:
        nxt = step_beam(states, model, cfg, finished, memo)
        steps += 1
        states = []
        for s in nxt:
            if s.finished:
                finished.append(s)
            elif s.failed:
                failed.append(s)
            else:
                states.append(s)
        bound = _prune_bound(finished, cfg.beam)
        states = [s for s in states if s.logp >= bound]
    # a state still open after max_steps counts as failed
    failed.extend(states)
    ranked = _rank(finished, cfg.beam)
    nets = []
    for s, net in ranked:
        verdict = check_soundness(net, cfg.state_cap) if verify else SoundnessVerdict("unchecked")
        nets.append(DiscoveredNet(net, s.logp, verdict, s.order))
    partial = max(failed, key=lambda s: (s.step, s.logp), default=None)
    reason = "" if nets else ("no finished net within max_steps" if states else "candidate pool exhausted")
    return DiscoveryResult(nets, None, len(g.place_node), steps, partial, reason)


def _rank(finished: list[BeamState], b: int) -> list[tuple[BeamState, PetriNet]]:
    best: dict[frozenset, BeamState] = {}
    for s in finished:
        k = frozenset(s.order)
        if k not in best or s.logp > best[k].logp:
            best[k] = s
    rows = []
    for s in best.values():
        net = s.net()
        rows.append(((-s.logp, len(s.places), _serial(net)), s, net))
    rows.sort(key=lambda r: r[0])
    return [(s, net) for _, s, net in rows[:b]]


def discover(log: EventLog, model: Model, cfg: InferConfig = InferConfig(), verify: bool = True) -> DiscoveryResult:
    """Ranked nets (best first) for ``log``; an empty ``nets`` list signals failure."""
    if log.n_traces == 0:
        raise ValueError("empty log")
    sampled, cands, g = prepare_graph(log, cfg)
    result = beam_search(g, model, cfg, verify)
    result.log = sampled
    result.n_candidates = len(cands)
    return result


def greedy_from_graph(g: dg.DiscoveryGraph, model: Model, cfg: InferConfig) -> BeamState:
    """Plain greedy decoding (always the most probable admissible candidate)."""
    state = initial_state(g, model)
    for _ in range(cfg.max_steps):
        sc = score_state(state, model)
        if wants_to_finish(state, sc, cfg):
            return replace(state, logp=state.logp + sc.log_stop, finished=True)
        for neg, node in ranked_candidates(sc):
            if admissible(state, node, cfg):
                state = accept_place(state, node, model, cfg, sc.log_add - neg)
                break
        else:
            return replace(state, failed=True)
    return replace(state, failed=True)


def greedy(log: EventLog, model: Model, cfg: InferConfig = InferConfig()) -> BeamState:
    _, _, g = prepare_graph(log, cfg)
    return greedy_from_graph(g, model, cfg)
