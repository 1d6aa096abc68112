"""Propagation, candidate-selection and stop networks.

Node embeddings are updated by direction-aware multi-head graph attention:
each node aggregates its forward neighbours (including itself) through the
weights ``W`` and its reverse neighbours through ``W_r``, with a separate
attention softmax per direction. Hidden layers concatenate heads without a
further activation; the last layer of each propagation network has a single
head followed by ReLU.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .tensor import Tensor

CHECKPOINT_FORMAT = "gnndisc-params"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class EdgeIndex:
    """Message routes: ``dst`` aggregates from ``src``; forward routes include self-loops."""

    n: int
    fwd_src: np.ndarray
    fwd_dst: np.ndarray
    rev_src: np.ndarray
    rev_dst: np.ndarray

    def __post_init__(self):
        for name in ("fwd_src", "fwd_dst", "rev_src", "rev_dst"):
            object.__setattr__(self, name, np.ascontiguousarray(getattr(self, name), dtype=np.int64))


@dataclass(frozen=True)
class ModelConfig:
    feature_width: int = 22
    embed: int = 16
    pn1_hidden: tuple[int, ...] = (32, 64, 32)
    pn2_hidden: tuple[int, ...] = (32,)
    heads: int = 2
    slope: float = 0.2

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["pn1_hidden"] = tuple(d["pn1_hidden"])
        d["pn2_hidden"] = tuple(d["pn2_hidden"])
        return cls(**d)


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))


class AttentionLayer:
    def __init__(self, name: str, d_in: int, d_out: int, heads: int, final: bool,
                 rng: np.random.Generator, slope: float = 0.2):
        if d_out % heads:
            raise ValueError(f"{name}: output width {d_out} not divisible by {heads} heads")
        self.name = name
        self.d_in, self.d_out, self.heads, self.final, self.slope = d_in, d_out, heads, final, slope
        f = d_out // heads
        self.params: dict[str, Tensor] = {}
        for suffix in ("", "_r"):
            self.params["W" + suffix] = Tensor(glorot(rng, d_in, d_out), True, f"{name}.W{suffix}")
            for side in ("src", "dst"):
                key = f"a_{side}{suffix}"
                self.params[key] = Tensor(glorot(rng, 2 * f, 1, (heads, f)), True, f"{name}.{key}")

    def _direction(self, h: Tensor, suffix: str, src: np.ndarray, dst: np.ndarray, n: int) -> Tensor:
        p = self.params
        z = h @ p["W" + suffix]
        z3 = T.reshape(z, (n, self.heads, self.d_out // self.heads))
        s_src = T.sum_(z3 * p["a_src" + suffix], axis=2)
        s_dst = T.sum_(z3 * p["a_dst" + suffix], axis=2)
        e = T.leaky_relu(T.take_rows(s_dst, dst) + T.take_rows(s_src, src), self.slope)
        alpha = T.segment_softmax(e, dst, n)
        return T.attend(alpha, z, src, dst, n)

    def attention(self, h: Tensor, edges: EdgeIndex, reverse: bool = False) -> np.ndarray:
        """Attention coefficients (E, heads) of one direction, for inspection."""
        p = self.params
        suffix = "_r" if reverse else ""
        src, dst = (edges.rev_src, edges.rev_dst) if reverse else (edges.fwd_src, edges.fwd_dst)
        with T.no_grad():
            z = h @ p["W" + suffix]
            z3 = T.reshape(z, (edges.n, self.heads, self.d_out // self.heads))
            s_src = T.sum_(z3 * p["a_src" + suffix], axis=2)
            s_dst = T.sum_(z3 * p["a_dst" + suffix], axis=2)
            e = T.leaky_relu(T.take_rows(s_dst, dst) + T.take_rows(s_src, src), self.slope)
            return T.segment_softmax(e, dst, edges.n).data

    def __call__(self, h: Tensor, edges: EdgeIndex) -> Tensor:
        if h.shape[1] != self.d_in:
            raise ValueError(f"{self.name}: expected width {self.d_in}, got {h.shape[1]}")
        out = self._direction(h, "", edges.fwd_src, edges.fwd_dst, edges.n)
        if len(edges.rev_src):
            out = out + self._direction(h, "_r", edges.rev_src, edges.rev_dst, edges.n)
        if self.final:
            out = T.relu(out)
        return out


def _stack(name: str, d_in: int, hidden: tuple[int, ...], d_out: int, heads: int,
           rng: np.random.Generator, slope: float) -> list[AttentionLayer]:
    layers = []
    width = d_in
    for k, w in enumerate(hidden):
        layers.append(AttentionLayer(f"{name}.{k}", width, w, heads, False, rng, slope))
        width = w
    layers.append(AttentionLayer(f"{name}.{len(hidden)}", width, d_out, 1, True, rng, slope))
    return layers


class Model:
    """All learnable weights: PN1, PN2, the selection network and the stop network."""

    def __init__(self, config: ModelConfig = ModelConfig(), seed: int = 0):
        self.config = config
        rng = np.random.default_rng(seed)
        E = config.embed
        self.pn1 = _stack("pn1", config.feature_width, config.pn1_hidden, E, config.heads, rng, config.slope)
        self.pn2 = _stack("pn2", E + 1, config.pn2_hidden, E, config.heads, rng, config.slope)
        self.scn_W = Tensor(glorot(rng, E + 1, 1), True, "scn.W")
        self.sn_Wa = Tensor(glorot(rng, E, E), True, "sn.W_a")
        self.sn_Wg = Tensor(glorot(rng, E, E), True, "sn.W_g")
        self.sn_Wd = Tensor(glorot(rng, E, 1), True, "sn.W_d")

    @property
    def params(self) -> dict[str, Tensor]:
        out = {}
        for layer in self.pn1 + self.pn2:
            for t in layer.params.values():
                out[t.name] = t
        for t in (self.scn_W, self.sn_Wa, self.sn_Wg, self.sn_Wd):
            out[t.name] = t
        return out

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None

    def propagate_pn1(self, features, edges: EdgeIndex) -> Tensor:
        h = features if isinstance(features, Tensor) else Tensor(features)
        for layer in self.pn1:
            h = layer(h, edges)
        return h

    def propagate_pn2(self, h: Tensor, flags: np.ndarray, edges: EdgeIndex) -> Tensor:
        h = T.concat([h, Tensor(flags.reshape(-1, 1))], axis=1)
        for layer in self.pn2:
            h = layer(h, edges)
        return h

    def candidate_logits(self, h: Tensor, flags: np.ndarray, nodes: np.ndarray) -> Tensor:
        """Scores ``(h_v ⊕ flag_v) W`` of the given candidate nodes, shape (m,)."""
        hv = T.take_rows(h, nodes)
        hv = T.concat([hv, Tensor(flags[nodes].reshape(-1, 1))], axis=1)
        return T.reshape(hv @ self.scn_W, (len(nodes),))

    def score_candidates(self, h: Tensor, flags: np.ndarray, nodes: np.ndarray) -> Tensor:
        """Log-probabilities of the candidates under a softmax over ``nodes``."""
        if len(nodes) == 0:
            raise ValueError("no candidate to score")
        return T.log_softmax(self.candidate_logits(h, flags, nodes))

    def stop_logit(self, h: Tensor, nodes: np.ndarray) -> Tensor:
        """Logit of ``p_add``: gated sum of node embeddings followed by ``W_d``."""
        hv = T.take_rows(h, nodes)
        graph = T.sum_(T.sigmoid(hv @ self.sn_Wa) * (hv @ self.sn_Wg), axis=0)
        return T.reshape(T.reshape(graph, (1, -1)) @ self.sn_Wd, ())

    # --- checkpoints ----------------------------------------------------

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = self.params
        if set(state) != set(params):
            raise ValueError(f"parameter mismatch: {sorted(set(state) ^ set(params))}")
        for k, t in params.items():
            arr = np.asarray(state[k], dtype=np.float64)
            if arr.shape != t.shape:
                raise ValueError(f"{k}: shape {arr.shape} != {t.shape}")
            t.data = arr.copy()

    def save(self, path: str | Path, extra: dict | None = None) -> None:
        doc = {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "config": self.config.to_dict(),
            "params": {k: {"shape": list(v.shape), "values": v.ravel().tolist()}
                       for k, v in sorted(self.state_dict().items())},
        }
        if extra:
            doc["extra"] = extra
        Path(path).write_text(json.dumps(doc) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Model":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        if doc.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"{path}: not a parameter checkpoint")
        if doc.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {doc.get('version')}")
        model = cls(ModelConfig.from_dict(doc["config"]))
        model.load_state_dict({k: np.array(v["values"], dtype=np.float64).reshape(v["shape"])
                               for k, v in doc["params"].items()})
        return model


@dataclass
class Adam:
    params: dict[str, Tensor]
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def step(self) -> None:
        self.step_count += 1
        b1t = 1.0 - self.beta1 ** self.step_count
        b2t = 1.0 - self.beta2 ** self.step_count
        for k, p in self.params.items():
            if p.grad is None:
                continue
            m = self.m.get(k)
            if m is None:
                m = self.m[k] = np.zeros_like(p.data)
                self.v[k] = np.zeros_like(p.data)
            v = self.v[k]
            m *= self.beta1
            m += (1 - self.beta1) * p.grad
            v *= self.beta2
            v += (1 - self.beta2) * p.grad * p.grad
            p.data = p.data - self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)

    def state(self) -> dict:
        return {"step": self.step_count,
                "m": {k: v.ravel().tolist() for k, v in sorted(self.m.items())},
                "v": {k: v.ravel().tolist() for k, v in sorted(self.v.items())}}

    def load_state(self, state: dict) -> None:
        self.step_count = state["step"]
        self.m = {k: np.array(v).reshape(self.params[k].shape) for k, v in state["m"].items()}
        self.v = {k: np.array(v).reshape(self.params[k].shape) for k, v in state["v"].items()}
