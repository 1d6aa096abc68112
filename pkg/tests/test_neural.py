import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gnndisc.neural import _kernels_py, kernels
from gnndisc.neural import tensor as T
from gnndisc.neural.model import Adam, AttentionLayer, EdgeIndex, Model, ModelConfig
from gnndisc.neural.tensor import Tensor

from .gradcheck import TOL, check_model, composite_loss, small_graph
from .oracles import dense_attention

try:
    from gnndisc.neural import _kernels as compiled
except ImportError:  # pragma: no cover - extension not built
    compiled = None


def random_edges(rng, n, m):
    src = rng.integers(0, n, m)
    dst = rng.integers(0, n, m)
    loops = np.arange(n)
    return EdgeIndex(n, np.concatenate([src, loops]), np.concatenate([dst, loops]), dst.copy(), src.copy())


# --- kernels ---------------------------------------------------------------------

@pytest.mark.skipif(compiled is None, reason="compiled kernels not built")
@pytest.mark.parametrize("seed", range(5))
def test_backend_parity(seed):
    rng = np.random.default_rng(seed)
    n, E, K, F = 7, 20, 2, 3
    src = rng.integers(0, n, E).astype(np.int64)
    dst = np.concatenate([np.arange(n), rng.integers(0, n, E - n)]).astype(np.int64)
    scores = rng.normal(size=(E, K))
    z = rng.normal(size=(n, K * F))
    g = rng.normal(size=(n, K * F))
    vals = rng.normal(size=(E, 4))
    for mod in (_kernels_py, compiled):
        assert mod.scatter_add_rows(vals, src, n).shape == (n, 4)
    np.testing.assert_allclose(compiled.scatter_add_rows(vals, src, n), _kernels_py.scatter_add_rows(vals, src, n), atol=1e-12)
    a_py = _kernels_py.segment_softmax(scores, dst, n)
    np.testing.assert_allclose(compiled.segment_softmax(scores, dst, n), a_py, atol=1e-12)
    ga = rng.normal(size=(E, K))
    np.testing.assert_allclose(compiled.segment_softmax_backward(a_py, ga, dst, n),
                               _kernels_py.segment_softmax_backward(a_py, ga, dst, n), atol=1e-12)
    np.testing.assert_allclose(compiled.attend(a_py, z, src, dst, n), _kernels_py.attend(a_py, z, src, dst, n), atol=1e-12)
    for x, y in zip(compiled.attend_backward(g, a_py, z, src, dst), _kernels_py.attend_backward(g, a_py, z, src, dst)):
        np.testing.assert_allclose(x, y, atol=1e-12)


def test_segment_softmax_sums_to_one():
    rng = np.random.default_rng(0)
    idx = np.array([0, 0, 1, 2, 2, 2], dtype=np.int64)
    a = kernels.segment_softmax(rng.normal(size=(6, 2)), idx, 3)
    sums = np.zeros((3, 2))
    np.add.at(sums, idx, a)
    np.testing.assert_allclose(sums, 1.0, atol=1e-12)
    assert (a > 0).all() and (a[idx != 1] < 1).all() and (a[idx == 1] == 1).all()


def test_pure_python_switch():
    code = "from gnndisc.neural import kernels; print(kernels.BACKEND)"
    env = dict(os.environ, GNNDISC_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


# --- attention ------------------------------------------------------------------

@pytest.mark.parametrize("reverse", [False, True])
@pytest.mark.parametrize("seed", range(3))
def test_attention_matches_dense_oracle(seed, reverse):
    rng = np.random.default_rng(seed)
    n = 4
    layer = AttentionLayer("t", 5, 6, 2, False, rng)
    h = rng.normal(size=(n, 5))
    adj = rng.random((n, n)) < 0.5
    np.fill_diagonal(adj, True)
    dst, src = np.nonzero(adj)
    edges = EdgeIndex(n, src, dst, src, dst) if not reverse else EdgeIndex(n, src, dst, src, dst)
    alpha = layer.attention(Tensor(h), edges, reverse)
    suffix = "_r" if reverse else ""
    p = {k: v.data for k, v in layer.params.items()}
    dense = dense_attention(h, p["W" + suffix], p["a_src" + suffix], p["a_dst" + suffix], adj)
    np.testing.assert_allclose(alpha, dense[dst, src], atol=1e-12)


def test_single_neighbor_attention_is_one():
    rng = np.random.default_rng(0)
    layer = AttentionLayer("t", 3, 3, 1, True, rng)
    layer.params["W"].data = np.eye(3)
    edges = EdgeIndex(1, np.array([0]), np.array([0]), np.zeros(0, np.int64), np.zeros(0, np.int64))
    h = np.array([[0.5, 2.0, 1.0]])
    assert layer.attention(Tensor(h), edges)[0, 0] == 1.0
    np.testing.assert_allclose(layer(Tensor(h), edges).data, h)


def test_identical_neighbors_uniform():
    rng = np.random.default_rng(1)
    layer = AttentionLayer("t", 2, 4, 2, False, rng)
    h = np.array([[1.0, 2.0], [3.0, -1.0], [3.0, -1.0]])
    edges = EdgeIndex(3, np.array([1, 2]), np.array([0, 0]), np.zeros(0, np.int64), np.zeros(0, np.int64))
    np.testing.assert_allclose(layer.attention(Tensor(h), edges), 0.5)


def test_zero_weights_give_zero_embeddings():
    model = Model(seed=0)
    for t in model.params.values():
        t.data = np.zeros_like(t.data)
    g = small_graph(0)
    h = model.propagate_pn1(g.features, g.edge_index())
    assert not h.data.any()
    h2 = model.propagate_pn2(h, np.ones(len(g)), g.edge_index())
    assert not h2.data.any()
    # p_add = sigmoid(0)
    assert model.stop_logit(h2, np.arange(len(g))).item() == 0.0


def test_width_mismatch():
    model = Model(seed=0)
    edges = random_edges(np.random.default_rng(0), 3, 2)
    with pytest.raises(ValueError):
        model.propagate_pn1(np.zeros((3, 5)), edges)
    with pytest.raises(ValueError):
        AttentionLayer("bad", 3, 5, 2, False, np.random.default_rng(0))


def test_layer_shapes():
    model = Model()
    assert [layer.d_out for layer in model.pn1] == [32, 64, 32, 16]
    assert model.pn1[0].d_in == 22
    assert [layer.d_out for layer in model.pn2] == [32, 16] and model.pn2[0].d_in == 17
    assert model.scn_W.shape == (17, 1) and model.sn_Wd.shape == (16, 1)


# --- selection and stop networks -----------------------------------------------------

def scn_with_logits(logits):
    """A model whose selection scores equal ``logits`` on nodes whose embedding is e_0 * logit."""
    model = Model(seed=0)
    model.scn_W.data = np.zeros((17, 1))
    model.scn_W.data[0, 0] = 1.0
    h = np.zeros((len(logits), 16))
    h[:, 0] = logits
    return model, Tensor(h)


@pytest.mark.parametrize("logits,expected", [
    ([1.7], [1.0]),
    ([0.3, 0.3], [0.5, 0.5]),
    ([0.0, np.log(3.0)], [0.25, 0.75]),
])
def test_softmax_examples(logits, expected):
    model, h = scn_with_logits(logits)
    nodes = np.arange(len(logits))
    p = np.exp(model.score_candidates(h, np.zeros(len(logits)), nodes).data)
    np.testing.assert_allclose(p, expected, atol=1e-12)
    assert abs(p.sum() - 1) <= 1e-9


def test_no_candidates_error():
    model, h = scn_with_logits([1.0])
    with pytest.raises(ValueError):
        model.score_candidates(h, np.zeros(1), np.zeros(0, dtype=np.int64))


def test_stop_network_is_continuous():
    model = Model(seed=2)
    h = np.random.default_rng(0).normal(size=(5, 16))
    nodes = np.arange(5)
    base = model.stop_logit(Tensor(h), nodes).item()
    h2 = h.copy()
    h2[0] *= 1.0 + 1e-7
    assert abs(model.stop_logit(Tensor(h2), nodes).item() - base) < 1e-5


# --- gradients -----------------------------------------------------------------------

@pytest.mark.parametrize("seed", range(3))
def test_gradients_sampled_entries(seed):
    worst = check_model(Model(seed=seed), small_graph(seed), np.random.default_rng(seed), per_tensor=6)
    assert max(worst.values()) <= TOL, worst


def test_gradients_every_entry_small_model():
    cfg = ModelConfig(embed=4, pn1_hidden=(4,), pn2_hidden=(2,))
    worst = check_model(Model(cfg, seed=5), small_graph(5), np.random.default_rng(5), per_tensor=None)
    assert len(worst) == 28
    assert max(worst.values()) <= TOL, worst


@pytest.mark.parametrize("backend", ["python", "compiled"])
def test_gradients_both_backends(backend, monkeypatch):
    if backend == "compiled" and compiled is None:
        pytest.skip("compiled kernels not built")
    mod = kernels.backend_module(backend)
    for name in ("scatter_add_rows", "segment_softmax", "segment_softmax_backward", "attend", "attend_backward"):
        monkeypatch.setattr(kernels, name, getattr(mod, name))
    cfg = ModelConfig(embed=4, pn1_hidden=(4,), pn2_hidden=(2,))
    worst = check_model(Model(cfg, seed=7), small_graph(7), np.random.default_rng(7), per_tensor=10)
    assert max(worst.values()) <= TOL


def test_backward_accumulates_over_reused_nodes():
    x = Tensor(np.array([2.0, -1.0]), True)
    y = T.sum_(x * x + x)
    y.backward()
    np.testing.assert_allclose(x.grad, 2 * x.data + 1)


def test_no_grad_records_nothing():
    x = Tensor(np.ones(2), True)
    with T.no_grad():
        y = x * 2.0
    assert not y.requires_grad


# --- invariances -----------------------------------------------------------------------

@given(st.integers(0, 10_000))
@settings(max_examples=15)
def test_equivariance(seed):
    rng = np.random.default_rng(seed)
    model = Model(seed=seed % 7)
    n = 6
    edges = random_edges(rng, n, 8)
    x = rng.random((n, 22))
    perm = rng.permutation(n)
    inv = np.argsort(perm)
    # node perm[i] of the permuted graph is node i of the original
    pe = EdgeIndex(n, perm[edges.fwd_src], perm[edges.fwd_dst], perm[edges.rev_src], perm[edges.rev_dst])
    px = x[inv]
    h = model.propagate_pn1(x, edges).data
    ph = model.propagate_pn1(px, pe).data
    np.testing.assert_allclose(ph[perm], h, atol=1e-10)


def test_embeddings_stay_finite():
    model = Model(seed=3)
    g = small_graph(3)
    h = model.propagate_pn1(g.features, g.edge_index())
    flags = np.zeros(len(g))
    for _ in range(30):
        h = model.propagate_pn2(h, flags, g.edge_index())
        assert np.all(np.isfinite(h.data))


# --- checkpoints -------------------------------------------------------------------------

def test_checkpoint_bit_exact(tmp_path):
    model = Model(seed=11)
    model.save(tmp_path / "m.json", extra={"epoch": 3})
    back = Model.load(tmp_path / "m.json")
    for k, v in model.state_dict().items():
        assert v.tobytes() == back.state_dict()[k].tobytes()
    g = small_graph(1)
    assert composite_loss(model, g).item() == composite_loss(back, g).item()


def test_checkpoint_errors(tmp_path):
    (tmp_path / "x.json").write_text('{"format": "other"}')
    with pytest.raises(ValueError):
        Model.load(tmp_path / "x.json")
    model = Model(seed=0)
    state = model.state_dict()
    state.pop("scn.W")
    with pytest.raises(ValueError):
        model.load_state_dict(state)


def test_adam_state_round_trip():
    model = Model(seed=0)
    g = small_graph(0)
    opt = Adam(model.params, 1e-3)
    composite_loss(model, g).backward()
    opt.step()
    clone = Model(seed=0)
    clone.load_state_dict(model.state_dict())
    opt2 = Adam(clone.params, 1e-3)
    opt2.load_state(opt.state())
    for m, o in ((model, opt), (clone, opt2)):
        m.zero_grad()
        composite_loss(m, g).backward()
        o.step()
    for k, v in model.state_dict().items():
        assert v.tobytes() == clone.state_dict()[k].tobytes()


def test_lr_zero_leaves_parameters():
    model = Model(seed=0)
    before = model.state_dict()
    composite_loss(model, small_graph(0)).backward()
    Adam(model.params, 0.0).step()
    for k, v in model.state_dict().items():
        np.testing.assert_array_equal(v, before[k])
