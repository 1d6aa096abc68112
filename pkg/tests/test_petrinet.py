import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gnndisc.petrinet import (SINK, SOURCE, PetriNet, PetriNetError, Place, TauTransition, canonical,
                              check_soundness, enabled, fire, from_candidates, from_json_dict, from_pnml,
                              is_connected, is_s_coverable, is_workflow_net, load_json, partially_covered,
                              s_components,
                              save_json, to_candidates, to_dot, to_json_dict, to_pnml)

from .oracles import net_corpus, partial_covered_oracle, s_coverable_oracle, soundness_oracle


def chain(*labels):
    """i -> > -> p1 -> l1 -> ... -> | -> o with places named by index."""
    seq = [">", *labels, "|"]
    places = [f"p{k}" for k in range(len(seq) + 1)]
    arcs = set()
    for k, t in enumerate(seq):
        arcs.add((places[k], t))
        arcs.add((t, places[k + 1]))
    return PetriNet(places, seq, (), arcs)


def simple(arcs, places=None, visible=None, silent=()):
    nodes = {a for arc in arcs for a in arc}
    places = places or sorted(n for n in nodes if n.startswith(("i", "o", "p", "q")))
    visible = visible or sorted(nodes - set(places) - set(silent))
    return PetriNet(places, visible, silent, arcs)


def test_enabled_and_fire():
    net = simple({("i", "t"), ("t", "o")})
    assert enabled(net, {"i": 1}, "t")
    assert not enabled(net, {"i": 0}, "t")
    assert fire(net, {"i": 1}, "t") == {"o": 1}
    two = simple({("p1", "t"), ("p2", "t"), ("t", "o")})
    assert not enabled(two, {"p1": 1}, "t")


def test_fire_self_loop_and_split():
    loop = simple({("p", "t"), ("t", "p")})
    assert fire(loop, {"p": 1}, "t") == {"p": 1}
    split = simple({("p", "t"), ("t", "q"), ("t", "r")}, places=["p", "q", "r"])
    assert fire(split, {"p": 2}, "t") == {"p": 1, "q": 1, "r": 1}


def test_fire_errors():
    net = simple({("i", "t"), ("t", "o")})
    with pytest.raises(PetriNetError):
        fire(net, {"i": 0}, "t")
    with pytest.raises(PetriNetError):
        enabled(net, {"i": 1}, "nope")


def test_bipartite():
    with pytest.raises(PetriNetError):
        PetriNet(["p", "q"], ["t"], (), {("p", "q")})


def test_workflow_net_checks():
    assert is_workflow_net(chain("a"))
    isolated = PetriNet(chain("a").places, chain("a").visible + ("x",), (), chain("a").arcs)
    diag = is_workflow_net(isolated)
    assert not diag and "x" in diag.unreachable
    two_sources = simple({("i", "t"), ("q", "t"), ("t", "o")})
    diag = is_workflow_net(two_sources)
    assert not diag and sorted(diag.sources) == ["i", "q"]


def and_net(join="and"):
    arcs = {("i", "t1"), ("t1", "p1"), ("t1", "p2")}
    if join == "and":
        arcs |= {("p1", "t2"), ("p2", "t2"), ("t2", "o")}
    else:
        arcs |= {("p1", "b"), ("b", "o"), ("p2", "c"), ("c", "o")}
    return simple(arcs)


def test_s_coverability_examples():
    assert is_s_coverable(chain("a", "b", "c"))
    assert is_s_coverable(and_net())
    comps = s_components(and_net())
    assert comps["p1"] == frozenset({"i", "p1", "o"})
    leftover = simple({("i", "a"), ("a", "p1"), ("a", "p2"), ("p1", "b"), ("b", "o")})
    assert not is_s_coverable(leftover)
    assert s_coverable_oracle(leftover) is False


def test_soundness_examples():
    assert check_soundness(chain("a")).classification == "sound"
    base = chain("a")
    # x needs the tokens of p1 and p2 at once, which never happens
    dead = PetriNet(base.places, base.visible + ("x",), (), base.arcs | {("p1", "x"), ("p2", "x"), ("x", "p2")})
    v = check_soundness(dead)
    assert v.classification == "easy_sound" and v.dead_transitions == ["x"]
    v = check_soundness(and_net("xor"))
    assert v.classification == "unsound" and v.witness
    assert check_soundness(and_net()).is_sound


def test_soundness_cap_is_indeterminate():
    v = check_soundness(and_net(), state_cap=1)
    assert v.classification == "indeterminate" and not v.is_easy_sound


def test_unbounded_is_unsound():
    net = simple({("i", "a"), ("a", "p"), ("p", "b"), ("b", "p"), ("b", "q"), ("p", "c"), ("c", "o")})
    assert check_soundness(net).classification == "unsound"


def test_silent_transitions_count_for_deadness():
    base = chain("a")
    net = PetriNet(base.places, base.visible, ("τ0",), base.arcs | {("p1", "τ0"), ("p2", "τ0"), ("τ0", "p2")})
    assert check_soundness(net).classification == "easy_sound"
    assert check_soundness(net, silent_can_be_dead=False).classification == "sound"


def test_candidate_form_and_place_identity():
    p = Place.of([">"], ["a"])
    q = Place.of(["a"], ["|"])
    net = from_candidates([SOURCE, SINK, p, q, p])
    assert len(net.places) == 4
    assert net == from_candidates([SOURCE, SINK, p, q])
    assert check_soundness(net).is_sound
    places, taus = to_candidates(net)
    assert set(places.values()) == {SOURCE, SINK, p, q}
    assert canonical(net) == net


def test_tau_requires_both_sides():
    with pytest.raises(ValueError):
        TauTransition(frozenset(), frozenset({SOURCE}))


def test_serialization_round_trips(tmp_path):
    p1, p2 = Place.of([">"], ["a"]), Place.of(["a"], ["|"])
    skip = TauTransition(frozenset({p1}), frozenset({p2}))
    net = from_candidates([SOURCE, SINK, p1, p2], [skip])
    save_json(net, tmp_path / "n.json")
    assert load_json(tmp_path / "n.json") == net
    assert from_json_dict(to_json_dict(net)) == net
    assert from_pnml(to_pnml(net)) == net
    dot = to_dot(net)
    assert dot.startswith("digraph") and '"a"' in dot
    assert to_json_dict(net)["taus"] == [{"in": [net.place_index[p1.name]], "out": [net.place_index[p2.name]]}]


def test_json_duplicate_projection():
    doc = {"transitions": [">", "a", "|"],
           "places": [{"in": [], "out": [">"]}, {"in": [">"], "out": ["a"]}, {"in": [">"], "out": ["a"]},
                      {"in": ["a"], "out": ["|"]}, {"in": ["|"], "out": []}],
           "taus": []}
    net = from_json_dict(doc)
    assert len(net.places) == 5


def test_connectedness():
    assert is_connected(chain("a"))
    net = from_candidates([SOURCE, SINK, Place.of([">"], ["a"])], transitions=["a"])
    assert not is_connected(net)


# --- random nets against the independent oracles -----------------------------------

@pytest.fixture(scope="module")
def corpus():
    return net_corpus(80, seed=3)


def test_soundness_matches_reachability_oracle(corpus):
    checked = 0
    for net in corpus:
        expected = soundness_oracle(net)
        if expected is None:
            continue
        assert check_soundness(net).classification == expected
        checked += 1
    assert checked >= 60


def test_s_coverability_matches_subset_oracle(corpus):
    for net in corpus:
        if len(net.places) <= 12:
            assert is_s_coverable(net) == s_coverable_oracle(net)


def test_not_s_coverable_implies_not_sound(corpus):
    for net in corpus:
        if not is_s_coverable(net):
            assert not check_soundness(net).is_sound


def test_verdict_is_deterministic(corpus):
    for net in corpus[:20]:
        a, b = check_soundness(net), check_soundness(net)
        assert a.to_dict() == b.to_dict()


@given(st.integers(0, 2**32 - 1))
def test_fire_token_shift(seed):
    rng = np.random.default_rng(seed)
    net = net_corpus(1, seed=seed % 1000)[0]
    m = net.initial_marking()
    for _ in range(20):
        options = net.enabled_transitions(m)
        if not options:
            break
        t = options[rng.integers(len(options))]
        nm = net.fire_vec(m, t)
        assert sum(nm) - sum(m) == len(net.postset[t]) - len(net.preset[t])
        m = nm


@st.composite
def partial_nets(draw):
    labels = ["a", "b", "c", "d"]
    sub = st.sets(st.sampled_from(labels + [">"]), min_size=1, max_size=2)
    sub_out = st.sets(st.sampled_from(labels + ["|"]), min_size=1, max_size=2)
    places = draw(st.lists(st.builds(Place.of, sub, sub_out), min_size=1, max_size=7))
    return from_candidates([SOURCE, SINK, *places])


@given(partial_nets())
def test_partial_coverage_matches_subset_oracle(net):
    expected = partial_covered_oracle(net)
    dfs = {p for p, c in s_components(net, partial=True).items() if c is not None}
    assert dfs == expected
    assert partially_covered(net) == expected
    assert is_s_coverable(net, partial=True) == (expected == set(net.places))


def test_partial_check_falls_back_to_program(monkeypatch, corpus):
    import gnndisc.petrinet as pn

    verdicts = [is_s_coverable(net, partial=True) for net in corpus[:30]]
    monkeypatch.setattr(pn, "PARTIAL_DFS_BUDGET", 0)
    assert [is_s_coverable(net, partial=True) for net in corpus[:30]] == verdicts
