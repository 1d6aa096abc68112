from dataclasses import replace
from functools import lru_cache

import pytest

from gnndisc.eventlog import EventLog
from gnndisc.inference import (InferConfig, beam_search, build_net, discover, greedy, greedy_from_graph,
                               initial_state, net_is_complete, prepare_graph, step_beam)
from gnndisc.neural.model import Model
from gnndisc.petrinet import is_connected, is_s_coverable
from gnndisc.training import TrainConfig, fit

from .corpus import smoke_instances, smoke_training


@lru_cache(maxsize=None)
def trained_model():
    model, _ = fit(list(smoke_training()[:12]), TrainConfig(epochs=8), log=None, model=Model(seed=0))
    return model


def logs(n=6):
    return [inst.log for inst in smoke_instances()[:n]]


def test_config_validation():
    for bad in ({"beam": 0}, {"decay": 0.0}, {"decay": 1.5}, {"threshold": 1.0}):
        with pytest.raises(ValueError):
            InferConfig(**bad)


def test_width_decays_to_one():
    cfg = InferConfig(beam=10, decay=0.9)
    widths = [cfg.width(s) for s in range(40)]
    assert widths[0] == 10 and widths[1] == 9 and widths[-1] == 1
    assert all(b <= a for a, b in zip(widths, widths[1:]))
    assert InferConfig(beam=1).width(0) == 1


def test_zero_steps_fails_immediately():
    _, _, g = prepare_graph(logs(1)[0], InferConfig())
    res = beam_search(g, Model(seed=0), InferConfig(max_steps=0))
    assert res.failed and res.best is None and res.reason


def test_empty_log_rejected():
    with pytest.raises(ValueError):
        discover(EventLog.from_sequences([]), Model(seed=0))


def test_beam_one_equals_greedy():
    model = trained_model()
    cfg = InferConfig(beam=1)
    for log in logs():
        _, _, g = prepare_graph(log, cfg)
        res = beam_search(g, model, cfg, verify=False)
        state = greedy_from_graph(g, model, cfg)
        if state.finished:
            assert res.best is not None
            assert res.best.order == state.order
            assert res.best.logp == pytest.approx(state.logp, abs=1e-12)
        else:
            assert res.failed


def test_partial_nets_stay_s_coverable():
    model = trained_model()
    cfg = InferConfig(beam=3, max_steps=12)
    _, _, g = prepare_graph(logs(1)[0], cfg)
    states = [initial_state(g, model)]
    seen = 0
    for _ in range(cfg.max_steps):
        states = step_beam(states, model, cfg)
        live = [s for s in states if not s.failed]
        for s in live:
            assert is_s_coverable(s.net(), partial=True)
            seen += 1
        states = [s for s in live if not s.finished]
        if not states:
            break
    assert seen > 0


def test_finished_nets_are_complete():
    model = trained_model()
    for log in logs(4):
        res = discover(log, model, InferConfig(beam=3))
        for d in res.nets:
            assert is_connected(d.net) and net_is_complete(d.net)
            assert d.verdict.classification in ("sound", "easy_sound", "unsound", "indeterminate")
        logps = [d.logp for d in res.nets]
        assert logps == sorted(logps, reverse=True)


def test_beam_results_are_deterministic():
    model = trained_model()
    log = logs(1)[0]
    a = discover(log, model, InferConfig(beam=4))
    b = discover(log, model, InferConfig(beam=4))
    assert [d.to_dict() for d in a.nets] == [d.to_dict() for d in b.nets]


def test_wider_beam_never_worse():
    model = trained_model()
    for log in logs(4):
        best = []
        for b in (1, 2, 5):
            res = discover(log, model, InferConfig(beam=b), verify=False)
            best.append(res.best.logp if res.best else float("-inf"))
        assert best == sorted(best), best


def test_greedy_wrapper_matches_graph_version():
    model = trained_model()
    log = logs(1)[0]
    cfg = InferConfig()
    _, _, g = prepare_graph(log, cfg)
    assert greedy(log, model, cfg).order == greedy_from_graph(g, model, cfg).order


def test_build_net_from_selection():
    log = logs(1)[0]
    _, cands, g = prepare_graph(log, InferConfig())
    first = cands.places[0]
    net = build_net(g, [first])
    assert first.name in net.places and ">" in net.transitions and "|" in net.transitions


def test_max_steps_cap_marks_failure():
    res = discover(logs(1)[0], trained_model(), InferConfig(beam=2, max_steps=1))
    assert res.failed and res.best_partial is not None and res.best_partial.step <= 1


def test_config_round_trip():
    cfg = replace(InferConfig(), beam=3, threshold=0.4)
    assert InferConfig.from_dict({**cfg.to_dict(), "bogus": 1}) == cfg
