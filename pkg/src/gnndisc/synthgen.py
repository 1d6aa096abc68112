"""Random block-structured process models and their simulated logs.

A process tree is translated compositionally into a workflow net whose
AND and LOOP blocks use silent split/join and enter/exit transitions.
:func:`reduce_silent` then fuses silent transitions away wherever this
preserves the language, which is the form used as a training target.
Logs are simulated on the unreduced net, so that choices between a loop's
redo part and its exit are made with equal probability.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .eventlog import END, START, EventLog, load_log, write_log
from .petrinet import NotRepresentable, PetriNet, canonical, check_soundness, load_json, save_json, to_candidates

SEQ, XOR, AND, LOOP = "seq", "xor", "and", "loop"
ACT, TAU = "act", "tau"
OPERATORS = (SEQ, XOR, AND, LOOP)
_SYMBOL = {SEQ: "->", XOR: "X", AND: "+", LOOP: "*"}


@dataclass(frozen=True)
class ProcessTree:
    op: str
    label: str | None = None
    children: tuple["ProcessTree", ...] = ()

    def __post_init__(self):
        if self.op in (ACT, TAU):
            if self.children:
                raise ValueError("leaves have no children")
        elif self.op == LOOP:
            if len(self.children) != 2:
                raise ValueError("a loop has exactly a body and a redo child")
        elif self.op in OPERATORS:
            if len(self.children) < 2:
                raise ValueError(f"{self.op} needs at least two children")
        else:
            raise ValueError(f"unknown node type {self.op!r}")

    def __str__(self) -> str:
        if self.op == ACT:
            return self.label
        if self.op == TAU:
            return "tau"
        return f"{_SYMBOL[self.op]}({', '.join(map(str, self.children))})"

    def walk(self) -> Iterator["ProcessTree"]:
        yield self
        for c in self.children:
            yield from c.walk()

    def activities(self) -> list[str]:
        return [n.label for n in self.walk() if n.op == ACT]

    def operators(self) -> list[str]:
        return [n.op for n in self.walk() if n.op in OPERATORS]

    def n_silent(self) -> int:
        """Silent transitions of the unreduced translation."""
        return sum(2 if n.op in (AND, LOOP) else 1 if n.op == TAU else 0 for n in self.walk())


def act(label: str) -> ProcessTree:
    return ProcessTree(ACT, label)


def tau() -> ProcessTree:
    return ProcessTree(TAU)


def node(op: str, *children: ProcessTree) -> ProcessTree:
    return ProcessTree(op, None, tuple(children))


@dataclass(frozen=True)
class GenConfig:
    min_leaves: int = 4
    mode_leaves: int = 8
    max_leaves: int = 15
    p_seq: float = 0.4
    p_xor: float = 0.32
    p_and: float = 0.2
    p_loop: float = 0.08
    p_skip: float = 0.15       # an XOR block gets an extra silent branch
    p_tau_redo: float = 0.25   # a loop repeats its body without a redo activity
    silent_target: int = 4
    silent_tolerance: int = 2
    silent_filter: bool = True
    require_representable: bool = True
    n_traces: int = 1000
    max_trace_len: int = 64
    max_attempts: int = 1000

    def __post_init__(self):
        total = self.p_seq + self.p_xor + self.p_and + self.p_loop
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"operator probabilities sum to {total}, not 1")
        if not 1 <= self.min_leaves <= self.mode_leaves <= self.max_leaves:
            raise ValueError("need 1 <= min_leaves <= mode_leaves <= max_leaves")

    @property
    def probabilities(self) -> dict[str, float]:
        return {SEQ: self.p_seq, XOR: self.p_xor, AND: self.p_and, LOOP: self.p_loop}

    def to_dict(self) -> dict:
        return asdict(self)


def _sample_leaf_count(cfg: GenConfig, rng: np.random.Generator) -> int:
    if cfg.min_leaves == cfg.max_leaves:
        return cfg.min_leaves
    n = int(round(rng.triangular(cfg.min_leaves, cfg.mode_leaves, cfg.max_leaves)))
    return min(max(n, cfg.min_leaves), cfg.max_leaves)


def _split(n: int, parts: int, rng: np.random.Generator) -> list[int]:
    cuts = np.sort(rng.choice(np.arange(1, n), size=parts - 1, replace=False))
    bounds = [0, *cuts.tolist(), n]
    return [b - a for a, b in zip(bounds, bounds[1:])]


def gen_tree(cfg: GenConfig, rng: np.random.Generator) -> ProcessTree:
    """Random tree with a triangular number of activity leaves labelled a0, a1, ..."""
    n = _sample_leaf_count(cfg, rng)
    ops = list(OPERATORS)
    probs = np.array([cfg.probabilities[o] for o in ops])
    counter = iter(range(n))

    def grow(k: int) -> ProcessTree:
        if k == 1:
            return act(f"a{next(counter)}")
        op = ops[rng.choice(len(ops), p=probs)]
        if op == LOOP:
            if rng.random() < cfg.p_tau_redo:
                return node(LOOP, grow(k), tau())
            body, redo = _split(k, 2, rng)
            return node(LOOP, grow(body), grow(redo))
        width = int(rng.integers(2, min(k, 3) + 1))
        children = [grow(s) for s in _split(k, width, rng)]
        if op == XOR and rng.random() < cfg.p_skip:
            children.append(tau())
        return node(op, *children)

    return grow(n)


# --- translation -------------------------------------------------------------

class _NetBuilder:
    def __init__(self):
        self.places: list[str] = []
        self.visible: list[str] = []
        self.silent: list[str] = []
        self.arcs: set[tuple[str, str]] = set()

    def place(self) -> str:
        p = f"p{len(self.places)}"
        self.places.append(p)
        return p

    def transition(self, label: str | None, ins: list[str], outs: list[str]) -> str:
        if label is None:
            label = f"τ{len(self.silent)}"
            self.silent.append(label)
        else:
            if label in self.visible:
                raise ValueError(f"duplicate activity label {label!r}")
            self.visible.append(label)
        self.arcs.update((p, label) for p in ins)
        self.arcs.update((label, p) for p in outs)
        return label

    def block(self, tree: ProcessTree, entry: str, exit_: str) -> None:
        if tree.op == ACT:
            self.transition(tree.label, [entry], [exit_])
        elif tree.op == TAU:
            self.transition(None, [entry], [exit_])
        elif tree.op == SEQ:
            cur = entry
            for k, child in enumerate(tree.children):
                nxt = exit_ if k == len(tree.children) - 1 else self.place()
                self.block(child, cur, nxt)
                cur = nxt
        elif tree.op == XOR:
            for child in tree.children:
                self.block(child, entry, exit_)
        elif tree.op == AND:
            starts = [self.place() for _ in tree.children]
            ends = [self.place() for _ in tree.children]
            self.transition(None, [entry], starts)
            for child, s, e in zip(tree.children, starts, ends):
                self.block(child, s, e)
            self.transition(None, ends, [exit_])
        elif tree.op == LOOP:
            s, e = self.place(), self.place()
            self.transition(None, [entry], [s])
            body, redo = tree.children
            self.block(body, s, e)
            self.block(redo, e, s)
            self.transition(None, [e], [exit_])


def tree_to_net(tree: ProcessTree) -> PetriNet:
    """Compositional workflow net of ``tree``, framed by the START and END transitions."""
    b = _NetBuilder()
    i = b.place()
    o = b.place()
    first, last = b.place(), b.place()
    b.transition(START, [i], [first])
    b.block(tree, first, last)
    b.transition(END, [last], [o])
    return PetriNet(b.places, b.visible, b.silent, b.arcs)


def reduce_silent(net: PetriNet) -> PetriNet:
    """Fuse silent transitions away where this keeps the language unchanged.

    Three rules are applied until none fits:

    * a silent transition whose only input place ``p`` feeds nothing else and
      is not the source: producers of ``p`` produce into its outputs directly;
    * a silent transition whose only output place ``q`` has no other producer
      and is not the sink, and whose input places feed only it: consumers of
      ``q`` consume from its input places directly;
    * a silent transition from ``p`` to ``q`` where ``q`` has no other
      producer: ``q`` is merged into ``p``.

    A rule is skipped if it would create an arc that already exists.
    """
    pre = {n: set(net.preset[n]) for n in net.places + net.transitions}
    post = {n: set(net.postset[n]) for n in net.places + net.transitions}
    places = list(net.places)
    silent = list(net.silent)
    source, sink = set(net.source_places), set(net.sink_places)

    def drop(nodes):
        for n in nodes:
            for m in pre.pop(n):
                post[m].discard(n)
            for m in post.pop(n):
                pre[m].discard(n)
            if n in places:
                places.remove(n)
            else:
                silent.remove(n)

    def link(a, b):
        post[a].add(b)
        pre[b].add(a)

    changed = True
    while changed:
        changed = False
        for t in list(silent):
            ins, outs = pre[t], post[t]
            if len(ins) == 1:
                (p,) = ins
                if p not in source and post[p] == {t} and pre[p] and p not in outs:
                    new = [(u, q) for u in pre[p] for q in outs]
                    if not any(q in post[u] for u, q in new):
                        drop([t, p])
                        for u, q in new:
                            link(u, q)
                        changed = True
                        break
            if len(outs) == 1:
                (q,) = outs
                if (q not in sink and pre[q] == {t} and q not in ins
                        and all(post[p] == {t} for p in ins)):
                    new = [(p, v) for p in ins for v in post[q]]
                    if not any(v in post[p] for p, v in new):
                        drop([t, q])
                        for p, v in new:
                            link(p, v)
                        changed = True
                        break
            if len(ins) == 1 and len(outs) == 1:
                (p,), (q,) = ins, outs
                if p != q and pre[q] == {t} and q not in sink and p not in sink:
                    moved = post[q] - {t}
                    if not (moved & post[p]):
                        drop([t, q])
                        for v in moved:
                            link(p, v)
                        changed = True
                        break
    arcs = {(a, b) for a in post for b in post[a]}
    return PetriNet(places, net.visible, silent, arcs)


def is_representable(net: PetriNet) -> bool:
    """Every place is identified by nonempty visible input and output sets (boundary places aside)."""
    try:
        places, _ = to_candidates(net)
    except NotRepresentable:
        return False
    source, sink = set(net.source_places), set(net.sink_places)
    for name, cand in places.items():
        if name in source or name in sink:
            continue
        if not cand.inputs or not cand.outputs:
            return False
    return True


def target_net(tree: ProcessTree) -> PetriNet:
    """Reduced, canonically named net of ``tree`` (raises NotRepresentable)."""
    net = reduce_silent(tree_to_net(tree))
    if not is_representable(net):
        raise NotRepresentable(f"reduced net of {tree} has unidentifiable places")
    return canonical(net)


# --- simulation --------------------------------------------------------------

class SimulationError(RuntimeError):
    pass


def simulate(net: PetriNet, n_traces: int, rng: np.random.Generator, max_len: int = 64,
             max_rerolls: int = 10_000) -> EventLog:
    """Random play-outs choosing uniformly among enabled transitions.

    Silent firings are not recorded. Traces longer than ``max_len`` events
    (START and END included) are discarded and drawn again.
    """
    m0, final = net.initial_marking(), net.final_marking()
    traces = []
    rerolls = 0
    fire_cap = 4 * max_len + 4 * len(net.transitions) + 16
    while len(traces) < n_traces:
        m = m0
        trace = []
        fired = 0
        while m != final and len(trace) <= max_len and fired < fire_cap:
            options = net.enabled_transitions(m)
            if not options:
                raise SimulationError(f"deadlock at {net.marking_dict(m)}")
            t = options[int(rng.integers(len(options)))]
            m = net.fire_vec(m, t)
            fired += 1
            if t in net.visible:
                trace.append(t)
        if m == final and len(trace) <= max_len:
            traces.append(tuple(trace))
            continue
        rerolls += 1
        if rerolls > max_rerolls:
            raise SimulationError("too many over-long play-outs")
    return EventLog((t, 1) for t in traces)


# --- datasets ----------------------------------------------------------------

@dataclass
class Instance:
    tree: ProcessTree
    net: PetriNet
    log: EventLog
    attempts: int = 1
    info: dict = field(default_factory=dict)


def generate_instance(cfg: GenConfig, rng: np.random.Generator) -> Instance:
    """Draw trees until one passes the configured filters, then simulate its log."""
    for attempt in range(1, cfg.max_attempts + 1):
        tree = gen_tree(cfg, rng)
        n_silent = tree.n_silent()
        if cfg.silent_filter and abs(n_silent - cfg.silent_target) > cfg.silent_tolerance:
            continue
        raw = tree_to_net(tree)
        reduced = reduce_silent(raw)
        if not is_representable(reduced):
            if cfg.require_representable:
                continue
            net = reduced
        else:
            net = canonical(reduced)
        log = simulate(raw, cfg.n_traces, rng, cfg.max_trace_len)
        info = {"tree": str(tree), "leaves": len(tree.activities()), "silent_raw": n_silent,
                "silent": len(net.silent), "places": len(net.places), "variants": len(log.variants)}
        return Instance(tree, net, log, attempt, info)
    raise RuntimeError(f"no tree passed the filters in {cfg.max_attempts} attempts")


def instance_seeds(seed: int, n: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(n)


def write_dataset(out_dir: str | Path, n: int, cfg: GenConfig = GenConfig(), seed: int = 0,
                  extra_manifest: dict | None = None) -> list[Instance]:
    """Write ``NNNN.log.jsonl`` / ``NNNN.net.json`` pairs and ``manifest.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    instances = []
    records = []
    for k, ss in enumerate(instance_seeds(seed, n)):
        inst = generate_instance(cfg, np.random.default_rng(ss))
        stem = f"{k:04d}"
        write_log(inst.log, out / f"{stem}.log.jsonl", "jsonl")
        save_json(inst.net, out / f"{stem}.net.json")
        records.append({"id": stem, "attempts": inst.attempts, **inst.info})
        instances.append(inst)
    manifest = {"format": "gnndisc-dataset", "version": 1, "seed": seed, "n": n,
                "config": cfg.to_dict(), "instances": records}
    if extra_manifest:
        manifest.update(extra_manifest)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, ensure_ascii=False) + "\n",
                                       encoding="utf-8")
    return instances


def read_dataset(path: str | Path) -> list[tuple[str, EventLog, PetriNet]]:
    """Pairs ``(id, log, net)`` of a dataset directory in id order."""
    path = Path(path)
    if not path.is_dir():
        raise FileNotFoundError(f"{path} is not a dataset directory")
    out = []
    for log_file in sorted(path.glob("*.log.jsonl")):
        stem = log_file.name[: -len(".log.jsonl")]
        net_file = path / f"{stem}.net.json"
        if not net_file.exists():
            raise FileNotFoundError(f"{net_file} missing for {log_file.name}")
        out.append((stem, load_log(log_file, "jsonl"), load_json(net_file)))
    return out


def operator_frequencies(trees) -> dict[str, float]:
    counts = {o: 0 for o in OPERATORS}
    for t in trees:
        for o in t.operators():
            counts[o] += 1
    total = sum(counts.values()) or 1
    return {o: c / total for o, c in counts.items()}


def verify_sound(net: PetriNet) -> bool:
    return check_soundness(net).is_sound
