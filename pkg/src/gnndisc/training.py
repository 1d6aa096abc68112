"""Teacher-forced training of the selection networks on ⟨log, net⟩ pairs.

For every instance the target places and silent transitions are put in a
breadth-first order. The loss of one instance is the negative
log-likelihood of choosing each target in that order plus binary
cross-entropy terms for the stop network ("continue" before every
selection, "stop" after the last one).
"""
from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import discgraph as dg
from .behavior import CandidateSet, log_candidates
from .eventlog import EventLog, sample_variants, truncate_alphabet
from .neural import tensor as T
from .neural.model import Adam, Model, ModelConfig
from .neural.tensor import Tensor
from .petrinet import PetriNet, Place, TauTransition, _label_key, to_candidates

Target = Place | TauTransition


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    lr: float = 2e-3
    split: float = 0.75
    seed: int = 0
    K: int = 2
    max_in: int = 4
    max_out: int = 4
    max_alphabet: int = 20
    lambda_stop: float = 1.0
    tau_arity: int = 1
    inject: bool = True
    min_variants: int = 8
    max_variants: int = 50
    budget: int = 2000
    replay_every: int = 0      # greedy replay of the training set every n epochs (0: never)
    schedule: str = "cosine"   # constant | cosine (decays to lr_floor * lr at the last epoch)
    lr_floor: float = 0.05

    def __post_init__(self):
        if not 0.0 < self.split < 1.0:
            raise ValueError("split must lie in (0, 1)")
        if self.lr < 0 or self.epochs < 0:
            raise ValueError("epochs and learning rate must be non-negative")
        if self.schedule not in ("constant", "cosine"):
            raise ValueError(f"unknown schedule {self.schedule!r}")

    def lr_at(self, epoch: int) -> float:
        """Learning rate of the 0-based ``epoch``."""
        if self.schedule == "constant" or self.epochs <= 1:
            return self.lr
        frac = min(epoch, self.epochs - 1) / (self.epochs - 1)
        return self.lr * (self.lr_floor + (1.0 - self.lr_floor) * 0.5 * (1.0 + math.cos(math.pi * frac)))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})


@dataclass
class TrainingInstance:
    log: EventLog
    target_net: PetriNet
    candidates: CandidateSet
    order: list[Target]
    injected: int
    graph: dg.DiscoveryGraph
    name: str = ""

    @property
    def target_places(self) -> list[Place]:
        return [t for t in self.order if isinstance(t, Place)]


@dataclass
class LossReport:
    epoch: int
    loss: float
    selection_loss: float
    stop_loss: float
    target_prob: float          # mean per-step probability of the teacher-forced target
    held_out_loss: float | None = None
    tp_rate: float | None = None
    fp_count: int | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    def line(self, epochs: int) -> str:
        parts = [f"epoch {self.epoch}/{epochs}", f"loss {self.loss:.4f}",
                 f"sel {self.selection_loss:.4f}", f"stop {self.stop_loss:.4f}",
                 f"p_target {self.target_prob:.4f}"]
        if self.held_out_loss is not None:
            parts.append(f"held_out {self.held_out_loss:.4f}")
        if self.tp_rate is not None:
            parts.append(f"tp_rate {self.tp_rate:.4f} fp {self.fp_count}")
        return "  ".join(parts)


class TargetNotSelectable(RuntimeError):
    pass


# --- target order -------------------------------------------------------------

def bfs_order(net: PetriNet) -> list[Target]:
    """Places and silent transitions of ``net`` in breadth-first order from the source.

    Source and sink are excluded. Successors are visited in the order of
    their (sorted input labels, sorted output labels). A silent transition
    is emitted as soon as all its adjacent places have been emitted.
    """
    places, taus = to_candidates(net)
    (src,) = net.source_places
    snk = set(net.sink_places)

    def key(node: str):
        if node in places:
            return (0, places[node].sort_key())
        if node in taus:
            return (2, taus[node].sort_key())
        return (1, _label_key(node))

    seen = {src}
    queue = deque([src])
    visited_places = []
    while queue:
        n = queue.popleft()
        if n in places and n != src and n not in snk:
            visited_places.append(n)
        for m in sorted(net.postset[n], key=key):
            if m not in seen:
                seen.add(m)
                queue.append(m)
    missing = [p for p in net.places if p not in seen]
    if missing:
        raise ValueError(f"places not reachable from the source: {missing}")
    order: list[Target] = []
    pending = sorted(taus.values(), key=TauTransition.sort_key)
    emitted: set[Place] = set()
    for name in visited_places:
        order.append(places[name])
        emitted.add(places[name])
        ready = [t for t in pending if (t.inputs | t.outputs) <= emitted]
        order.extend(ready)
        pending = [t for t in pending if t not in ready]
    if pending:
        raise ValueError(f"silent transitions touch the source or sink: {pending}")
    return order


# --- instances ------------------------------------------------------------------

def training_log(log: EventLog, cfg: TrainConfig) -> EventLog:
    """The sampled log the networks see, keeping every activity of ``log``."""
    truncated = truncate_alphabet(log, cfg.max_alphabet - 2)
    sampled = sample_variants(truncated, cfg.min_variants, cfg.max_variants, cfg.budget,
                              cfg.K, cfg.max_in, cfg.max_out)
    if sampled.alphabet != truncated.alphabet:
        sampled = EventLog(sampled.variants, extra_activities=truncated.activities)
    return sampled


def prepare_instance(log: EventLog, net: PetriNet, cfg: TrainConfig = TrainConfig(),
                     name: str = "") -> TrainingInstance | None:
    """Build the graph and target order; ``None`` if a target is missing and injection is off."""
    sampled = training_log(log, cfg)
    order = bfs_order(net)
    cands = log_candidates(sampled, cfg.K, cfg.max_in, cfg.max_out)
    missing = [p for p in order if isinstance(p, Place) and p not in cands]
    if missing and not cfg.inject:
        return None
    unknown = {a for p in missing for a in p.inputs | p.outputs} - set(sampled.alphabet)
    if unknown:
        raise TargetNotSelectable(f"{name}: activities {sorted(unknown)} missing from the log")
    cands = cands.with_injected(missing)
    graph = dg.build_graph(sampled, cands, cfg.max_alphabet)
    return TrainingInstance(sampled, net, cands, order, len(missing), graph, name)


def prepare_dataset(pairs: Sequence[tuple[str, EventLog, PetriNet]], cfg: TrainConfig):
    """Instances of a dataset plus the number skipped and injected."""
    out, skipped, injected = [], 0, 0
    for name, log, net in pairs:
        inst = prepare_instance(log, net, cfg, name)
        if inst is None:
            skipped += 1
            continue
        injected += inst.injected
        out.append(inst)
    return out, skipped, injected


def split_dataset(items: Sequence, split: float, seed: int) -> tuple[list, list]:
    """Seeded shuffle, then the first ``split`` share for training."""
    idx = np.random.default_rng(seed).permutation(len(items))
    n_train = int(round(split * len(items)))
    if len(items) > 1:
        n_train = min(max(n_train, 1), len(items) - 1)
    return [items[i] for i in idx[:n_train]], [items[i] for i in idx[n_train:]]


# --- the unrolled sequence -------------------------------------------------------

def append_tau_embeddings(h, g: dg.DiscoveryGraph, new_nodes: Sequence[int]):
    """Extend ``h`` (Tensor or array) by rows for new tau nodes: sums of neighbouring places."""
    if not new_nodes:
        return h
    if isinstance(h, Tensor):
        rows = [T.reshape(T.sum_(T.take_rows(h, dg.tau_neighbors(g, v)), axis=0), (1, -1)) for v in new_nodes]
        return T.concat([h, *rows], axis=0)
    rows = [h[dg.tau_neighbors(g, v)].sum(axis=0, keepdims=True) for v in new_nodes]
    return np.vstack([h, *rows])


def stop_nodes(g: dg.DiscoveryGraph) -> np.ndarray:
    return np.array([i for i, k in enumerate(g.kinds) if k != dg.EVENT], dtype=np.int64)


@dataclass
class SequenceResult:
    loss: Tensor
    selection_loss: float
    stop_loss: float
    target_probs: list[float] = field(default_factory=list)


def sequence_loss(model: Model, inst: TrainingInstance, cfg: TrainConfig) -> SequenceResult:
    """Unroll the teacher-forced selection sequence and return the total loss."""
    g = inst.graph.copy()
    h = model.propagate_pn1(g.features, g.edge_index())
    sel_terms, stop_terms, probs = [], [], []
    pending_taus = [t for t in inst.order if isinstance(t, TauTransition)]
    for target in inst.order:
        nodes = stop_nodes(g)
        stop_terms.append(T.softplus(-model.stop_logit(h, nodes)))
        if isinstance(target, TauTransition) and target not in g.tau_node:
            raise TargetNotSelectable(f"{inst.name}: {target} is not a candidate")
        if isinstance(target, Place) and target not in g.place_node:
            raise TargetNotSelectable(f"{inst.name}: {target} is not a candidate")
        node = g.node_of(target)
        cands = g.candidate_nodes()
        logp = model.score_candidates(h, g.selected.astype(float), cands)
        k = int(np.searchsorted(cands, node))
        if k >= len(cands) or cands[k] != node:
            raise TargetNotSelectable(f"{inst.name}: {target} already selected")
        term = T.pick(logp, k)
        sel_terms.append(-term)
        probs.append(float(np.exp(term.data)))
        dg.mark_selected(g, node)
        if isinstance(target, Place):
            chosen = set(g.selected_places())
            extra = [t for t in pending_taus if target in (t.inputs | t.outputs)
                     and (t.inputs | t.outputs) <= chosen]
            new = dg.add_tau_candidates(g, target, cfg.tau_arity, extra)
            h = append_tau_embeddings(h, g, new)
        h = model.propagate_pn2(h, g.selected.astype(float), g.edge_index())
    stop_terms.append(T.softplus(model.stop_logit(h, stop_nodes(g))))
    sel = _total(sel_terms)
    stop = _total(stop_terms)
    loss = sel + stop * cfg.lambda_stop
    return SequenceResult(loss, float(sel.data), float(stop.data), probs)


def _total(terms: list[Tensor]) -> Tensor:
    if not terms:
        return Tensor(0.0)
    out = terms[0]
    for t in terms[1:]:
        out = out + t
    return out


def train_step(inst: TrainingInstance, model: Model, cfg: TrainConfig = TrainConfig()):
    """Loss of one instance and the gradients of all parameters."""
    model.zero_grad()
    res = sequence_loss(model, inst, cfg)
    res.loss.backward()
    grads = {k: (t.grad if t.grad is not None else np.zeros_like(t.data)) for k, t in model.params.items()}
    return res, grads


def evaluate_loss(model: Model, instances: Sequence[TrainingInstance], cfg: TrainConfig) -> float:
    if not instances:
        return float("nan")
    with T.no_grad():
        return float(np.mean([sequence_loss(model, inst, cfg).loss.data for inst in instances]))


# --- the training loop -----------------------------------------------------------

def epoch_order(n: int, seed: int, epoch: int) -> np.ndarray:
    return np.random.default_rng([seed, epoch]).permutation(n)


def fit(train: Sequence[TrainingInstance], cfg: TrainConfig = TrainConfig(),
        held_out: Sequence[TrainingInstance] = (), model: Model | None = None,
        out_dir: str | Path | None = None, log: Callable[[str], None] | None = print,
        start_epoch: int = 0, optimizer_state: dict | None = None,
        history: list[LossReport] | None = None):
    """Train for ``cfg.epochs`` epochs; returns ``(model, history)``.

    With ``out_dir`` the best checkpoint by held-out loss (training loss when
    nothing is held out) goes to ``best.json``, the latest model and
    optimizer state to ``last.json`` and the history to ``history.json``.
    """
    if not train:
        raise ValueError("empty training set")
    model = model or Model(ModelConfig(feature_width=cfg.max_alphabet + 2), seed=cfg.seed)
    opt = Adam(model.params, lr=cfg.lr)
    if optimizer_state:
        opt.load_state(optimizer_state)
    history = list(history or [])
    best = min((r.held_out_loss if r.held_out_loss is not None else r.loss for r in history),
               default=float("inf"))
    out = Path(out_dir) if out_dir else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    for epoch in range(start_epoch, cfg.epochs):
        losses, sels, stops, probs = [], [], [], []
        opt.lr = cfg.lr_at(epoch)
        for i in epoch_order(len(train), cfg.seed, epoch):
            res, _ = train_step(train[i], model, cfg)
            if cfg.lr > 0:
                opt.step()
            losses.append(float(res.loss.data))
            sels.append(res.selection_loss)
            stops.append(res.stop_loss)
            probs.extend(res.target_probs)
        report = LossReport(epoch + 1, float(np.mean(losses)), float(np.mean(sels)),
                            float(np.mean(stops)), float(np.mean(probs)) if probs else 1.0)
        if held_out:
            report.held_out_loss = evaluate_loss(model, held_out, cfg)
        if cfg.replay_every and (epoch + 1) % cfg.replay_every == 0:
            sel = evaluate_selection(train, model)
            report.tp_rate, report.fp_count = sel["recall"], sel["false_positives"]
        history.append(report)
        if log:
            log(report.line(cfg.epochs))
        score = report.held_out_loss if report.held_out_loss is not None else report.loss
        if out:
            if score < best:
                model.save(out / "best.json", {"epoch": epoch + 1, "score": score})
            model.save(out / "last.json", {"epoch": epoch + 1, "optimizer": opt.state(),
                                           "train_config": cfg.to_dict()})
            write_history(history, out / "history.json")
        best = min(best, score)
    return model, history


def write_history(history: Sequence[LossReport], path: str | Path) -> None:
    Path(path).write_text(json.dumps([r.to_dict() for r in history], indent=1) + "\n", encoding="utf-8")


def read_history(path: str | Path) -> list[LossReport]:
    return [LossReport(**r) for r in json.loads(Path(path).read_text(encoding="utf-8"))]


def evaluate_selection(instances: Sequence[TrainingInstance], model: Model, infer_cfg=None) -> dict:
    """Greedy rediscovery on each instance's graph; micro-averaged place precision and recall."""
    from .inference import InferConfig, greedy_from_graph

    infer_cfg = infer_cfg or InferConfig(beam=1)
    tp = fp = n_target = n_selected = 0
    for inst in instances:
        state = greedy_from_graph(inst.graph, model, infer_cfg)
        chosen = {p for p in state.places}
        targets = set(inst.target_places)
        tp += len(chosen & targets)
        fp += len(chosen - targets)
        n_target += len(targets)
        n_selected += len(chosen)
    return {"precision": tp / n_selected if n_selected else 0.0,
            "recall": tp / n_target if n_target else 1.0,
            "true_positives": tp, "false_positives": fp,
            "targets": n_target, "selected": n_selected}

