"""Independent reference implementations used to check the package.

They are written directly from the definitions, without sharing code with
the implementations under test (only the data types are shared).
"""
from __future__ import annotations

import itertools
from collections import deque

import networkx as nx
import numpy as np


# --- footprint relations and candidate places ----------------------------------

def relations(traces, K):
    """Directly-follows pairs and k-step eventually-follows pairs as sets of labels."""
    df = set()
    ef = {k: set() for k in range(1, K + 1)}
    for t in traces:
        for i in range(len(t)):
            for k in range(1, K + 1):
                if i + k < len(t):
                    ef[k].add((t[i], t[i + k]))
        df.update(zip(t, t[1:]))
    return df, ef


def brute_force_candidates(traces, alphabet, K, max_in, max_out):
    """All (X, Y) pairs tested one by one against the candidate-place definitions."""
    df, ef = relations(traces, K)

    def par(a, b):
        return (a, b) in df and (b, a) in df

    def no_parallel(s):
        return not any(par(a, b) for a, b in itertools.combinations(s, 2))

    def one_one(a, b):
        return any((a, b) in ef[k] for k in ef)

    def one_n(a, ys):
        return len(ys) > 1 and all(one_one(a, b) for b in ys) and no_parallel(ys)

    def n_one(xs, b):
        return len(xs) > 1 and all(one_one(a, b) for a in xs) and no_parallel(xs)

    def subsets(cap):
        for r in range(1, cap + 1):
            yield from (frozenset(c) for c in itertools.combinations(sorted(alphabet), r))

    out = {}
    for xs in subsets(max_in):
        for ys in subsets(max_out):
            if len(xs) == 1 and len(ys) == 1:
                ok, cls = one_one(next(iter(xs)), next(iter(ys))), "1-1"
            elif len(xs) == 1:
                ok, cls = one_n(next(iter(xs)), ys), "1-n"
            elif len(ys) == 1:
                ok, cls = n_one(xs, next(iter(ys))), "n-1"
            else:
                cls = "n-n"
                ok = (all(one_n(a, ys) for a in xs) and no_parallel(xs)) or \
                     (all(n_one(xs, b) for b in ys) and no_parallel(ys))
                ok = ok and len(ys) <= max_out and len(xs) <= max_in
            if ok:
                out[(xs, ys)] = cls
    return out


# --- reachability and soundness ----------------------------------------------------

UNBOUNDED = "unbounded"


def _strictly_covers(big, small):
    b, s = dict(big), dict(small)
    return b != s and all(b.get(p, 0) >= c for p, c in s.items())


def marking_graph(places, transitions, pre, post, m0, cap=50_000, bound=8):
    """networkx DiGraph of reachable markings (frozen dict items).

    Returns UNBOUNDED as soon as a marking strictly covers one of its
    ancestors on the search tree (the Karp-Miller witness of unboundedness),
    and None if the graph grows beyond ``cap`` markings or a place beyond
    ``bound`` tokens without such a witness.
    """
    g = nx.DiGraph()
    start = tuple(sorted(m0.items()))
    g.add_node(start)
    parent = {start: None}
    queue = deque([start])
    while queue:
        cur = queue.popleft()
        m = dict(cur)
        for t in transitions:
            if all(m.get(p, 0) >= 1 for p in pre[t]):
                nm = dict(m)
                for p in pre[t]:
                    nm[p] -= 1
                for p in post[t]:
                    nm[p] = nm.get(p, 0) + 1
                key = tuple(sorted((p, c) for p, c in nm.items() if c))
                if key not in g:
                    anc = cur
                    while anc is not None:
                        if _strictly_covers(key, anc):
                            return UNBOUNDED
                        anc = parent[anc]
                    if max((c for _, c in key), default=0) > bound:
                        return None
                    g.add_node(key)
                    parent[key] = cur
                    queue.append(key)
                    if g.number_of_nodes() > cap:
                        return None
                g.add_edge(cur, key)
                g.edges[cur, key].setdefault("labels", set()).add(t)
    return g


def soundness_oracle(net):
    """Classify with networkx: 'sound', 'easy_sound', 'unsound' or None (too large)."""
    pre = {t: list(net.preset[t]) for t in net.transitions}
    post = {t: list(net.postset[t]) for t in net.transitions}
    sources = [p for p in net.places if not net.preset[p]]
    sinks = [p for p in net.places if not net.postset[p]]
    if len(sources) != 1 or len(sinks) != 1:
        return "unsound"
    g = marking_graph(net.places, net.transitions, pre, post, {sources[0]: 1})
    if g is None:
        return None
    if g is UNBOUNDED:
        return "unsound"
    final = ((sinks[0], 1),)
    if final not in g:
        return "unsound"
    for m in g.nodes:
        if dict(m).get(sinks[0], 0) >= 1 and m != final:
            return "unsound"
    can_finish = nx.ancestors(g, final) | {final}
    if set(g.nodes) - can_finish:
        return "unsound"
    fired = set()
    for _, _, d in g.edges(data=True):
        fired |= d["labels"]
    return "sound" if fired == set(net.transitions) else "easy_sound"


def s_coverable_oracle(net):
    """Exhaustive search over place subsets containing source and sink."""
    places = list(net.places)
    src = [p for p in places if not net.preset[p]]
    snk = [p for p in places if not net.postset[p]]
    if len(src) != 1 or len(snk) != 1:
        return False
    rest = [p for p in places if p not in (src[0], snk[0])]
    covered = set()
    for r in range(len(rest) + 1):
        for extra in itertools.combinations(rest, r):
            S = {src[0], snk[0], *extra}
            if _is_s_component(net, S):
                covered |= S
    return covered == set(places)


def _is_s_component(net, S):
    touching = {t for p in S for t in list(net.preset[p]) + list(net.postset[p])}
    for t in touching:
        if len(set(net.preset[t]) & S) != 1 or len(set(net.postset[t]) & S) != 1:
            return False
    g = nx.DiGraph()
    g.add_nodes_from(S | touching)
    for t in touching:
        for p in set(net.preset[t]) & S:
            g.add_edge(p, t)
        for p in set(net.postset[t]) & S:
            g.add_edge(t, p)
    src = next(p for p in S if not net.preset[p])
    snk = next(p for p in S if not net.postset[p])
    g.add_edge(snk, src)
    return nx.is_strongly_connected(g)


# --- alignments ----------------------------------------------------------------------

def alignment_cost_oracle(net, trace, max_cost=None):
    """Optimal alignment cost by exhaustive breadth-first search with increasing cost bound.

    The product state space is explored level by level on cost: zero-cost
    moves (synchronous and silent) are closed first, then one more unit of cost
    is allowed.
    """
    trace = tuple(trace)
    pre = {t: list(net.preset[t]) for t in net.transitions}
    post = {t: list(net.postset[t]) for t in net.transitions}
    src = next(p for p in net.places if not net.preset[p])
    snk = next(p for p in net.places if not net.postset[p])
    final = ((snk, 1),)

    def fire(m, t):
        d = dict(m)
        for p in pre[t]:
            d[p] -= 1
        for p in post[t]:
            d[p] = d.get(p, 0) + 1
        return tuple(sorted((p, c) for p, c in d.items() if c))

    def enabled(m):
        d = dict(m)
        return [t for t in net.transitions if all(d.get(p, 0) >= 1 for p in pre[t])]

    max_cost = max_cost if max_cost is not None else len(trace) + 4 * len(net.transitions) + 4
    frontier = {(((src, 1),), 0)}
    seen = set()
    for cost in range(max_cost + 1):
        # close under zero-cost moves
        stack = list(frontier)
        level = set(frontier)
        while stack:
            m, i = stack.pop()
            for t in enabled(m):
                nxt = None
                if t in net.silent:
                    nxt = (fire(m, t), i)
                elif i < len(trace) and trace[i] == t:
                    nxt = (fire(m, t), i + 1)
                if nxt is not None and nxt not in level and nxt not in seen:
                    if max((c for _, c in nxt[0]), default=0) > 6:
                        continue
                    level.add(nxt)
                    stack.append(nxt)
        if (final, len(trace)) in level:
            return cost
        seen |= level
        frontier = set()
        for m, i in level:
            for t in enabled(m):
                if t in net.visible:
                    nxt = (fire(m, t), i)
                    if nxt not in seen and max((c for _, c in nxt[0]), default=0) <= 6:
                        frontier.add(nxt)
            if i < len(trace) and (m, i + 1) not in seen:
                frontier.add((m, i + 1))
    return None


# --- attention --------------------------------------------------------------------------

def dense_attention(h, W, a_src, a_dst, adj, slope=0.2):
    """Attention coefficients with an explicit (n, n) adjacency: adj[i, j] = j sends to i.

    Returns a dense (n, n, heads) array of coefficients.
    """
    n = h.shape[0]
    heads, f = a_src.shape
    z = (h @ W).reshape(n, heads, f)
    out = np.zeros((n, n, heads))
    for k in range(heads):
        s_src = z[:, k, :] @ a_src[k]
        s_dst = z[:, k, :] @ a_dst[k]
        for i in range(n):
            nbrs = [j for j in range(n) if adj[i, j]]
            e = np.array([s_dst[i] + s_src[j] for j in nbrs])
            e = np.where(e > 0, e, slope * e)
            w = np.exp(e - e.max())
            w /= w.sum()
            for j, v in zip(nbrs, w):
                out[i, j, k] = v
    return out


# --- net corpus -------------------------------------------------------------------------

def mutate(net, rng, n_mutations=1):
    """Random structural variants of ``net`` (arc removal/addition, extra places)."""
    from gnndisc.petrinet import PetriNet

    places = list(net.places)
    arcs = set(net.arcs)
    trans = list(net.transitions)
    for _ in range(n_mutations):
        kind = rng.integers(4)
        if kind == 0 and arcs:
            arc = sorted(arcs)[rng.integers(len(arcs))]
            arcs.discard(arc)
        elif kind == 1:
            p = places[rng.integers(len(places))]
            t = trans[rng.integers(len(trans))]
            arcs.add((p, t) if rng.random() < 0.5 else (t, p))
        else:
            p = f"q{len(places)}"
            places.append(p)
            t1, t2 = trans[rng.integers(len(trans))], trans[rng.integers(len(trans))]
            arcs.add((t1, p))
            arcs.add((p, t2))
    return PetriNet(places, net.visible, net.silent, arcs)


def net_corpus(n, seed=0, max_transitions=12):
    """Workflow nets from random trees, half of them randomly mutated."""
    from gnndisc.petrinet import is_workflow_net
    from gnndisc.synthgen import GenConfig, gen_tree, reduce_silent, tree_to_net

    rng = np.random.default_rng(seed)
    cfg = GenConfig(min_leaves=2, mode_leaves=4, max_leaves=7, p_skip=0.2)
    out = []
    while len(out) < n:
        tree = gen_tree(cfg, rng)
        net = tree_to_net(tree)
        if rng.random() < 0.5:
            net = reduce_silent(net)
        if len(out) % 2:
            net = mutate(net, rng, int(rng.integers(1, 3)))
        if len(net.transitions) <= max_transitions and is_workflow_net(net):
            out.append(net)
    return out


def alignment_corpus(n, seed=0, max_transitions=8, max_events=8):
    """(net, trace) pairs: bounded nets whose final marking is reachable, traces
    drawn from the net's own runs, random edits of them, or random words."""
    from gnndisc.petrinet import check_soundness

    rng = np.random.default_rng(seed)
    cases = []
    pool = [net for net in net_corpus(4 * n, seed, max_transitions)
            if check_soundness(net).classification in ("sound", "easy_sound")]
    k = 0
    while len(cases) < n:
        net = pool[k % len(pool)]
        k += 1
        labels = sorted(set(net.visible) - {">", "|"}) or ["x"]
        kind = len(cases) % 3
        body = list(_random_run(net, rng))
        if kind == 1 and body:
            for _ in range(int(rng.integers(1, 3))):
                op = rng.integers(3)
                pos = int(rng.integers(len(body) + 1))
                if op == 0 and body:
                    del body[min(pos, len(body) - 1)]
                elif op == 1:
                    body.insert(pos, labels[rng.integers(len(labels))])
                elif body:
                    i, j = rng.integers(len(body), size=2)
                    body[i], body[j] = body[j], body[i]
        elif kind == 2:
            body = [labels[rng.integers(len(labels))] for _ in range(rng.integers(0, 6))]
        trace = (">", *body, "|")
        if len(trace) <= max_events:
            cases.append((net, trace))
    return cases


def _random_run(net, rng, cap=40):
    m = net.initial_marking()
    out = []
    for _ in range(cap):
        options = net.enabled_transitions(m)
        if not options:
            break
        t = options[rng.integers(len(options))]
        m = net.fire_vec(m, t)
        if t in net.visible and t not in (">", "|"):
            out.append(t)
        if m == net.final_marking():
            break
    return out


def partial_covered_oracle(net):
    """Places in some relaxed component, by enumerating every place subset.

    A transition with an empty side leaves that side open; otherwise each
    touched transition needs exactly one place of the subset on each side.
    """
    places = list(net.places)
    covered = set()
    for r in range(1, len(places) + 1):
        for S in itertools.combinations(places, r):
            S = set(S)
            if S <= covered:
                continue
            ok = True
            for t in net.transitions:
                pre, post = set(net.preset[t]), set(net.postset[t])
                if not (pre | post) & S:
                    continue
                for side in (pre, post):
                    if side and len(side & S) != 1:
                        ok = False
            if ok:
                covered |= S
    return covered
