"""Temporal graph reconstructor.

Per-node GRU memory, attention over recent neighbours and an MLP decoder
that predicts the event type. Everything is plain numpy with hand-written
backward passes.

Node memories feed the embedding as ``gru(last_message, memory_before)``
recomputed with the current parameters, which lets the loss reach the GRU
weights through one step of truncated backpropagation.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .core import N_RELATIONS

GRU_PARAMS = ("W_z", "U_z", "b_z", "W_r", "U_r", "b_r", "W_h", "U_h", "b_h")
TIME_PARAMS = ("w_t", "b_t")
ATTN_PARAMS = ("W_q", "W_k", "W_v", "W_self", "b_emb")
DECODER_PARAMS = ("W_1", "b_1", "W_2", "b_2")
ALL_PARAMS = GRU_PARAMS + TIME_PARAMS + ATTN_PARAMS + DECODER_PARAMS


class TrainingDiverged(RuntimeError):
    """Raised when a gradient turns non-finite; parameters are left untouched."""


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax(x):
    e = np.exp(x - x.max())
    return e / e.sum()


@dataclass(frozen=True)
class MemoryRef:
    """Recipe for a node's current memory: ``gru(msg, prev)`` or just ``prev``."""

    prev: np.ndarray
    msg: Optional[np.ndarray] = None


@dataclass
class EventInput:
    """Everything needed to score one event, frozen at detection time."""

    subject: MemoryRef
    subject_tau: float
    neighbors: List[MemoryRef]
    edges: np.ndarray  # (n, D_enc)
    taus: np.ndarray  # (n,)
    flags: np.ndarray  # (n,) 1.0 for the event's own object
    label: int


def time_delta_feature(dt_ns: int) -> float:
    return math.log1p(max(dt_ns, 0) / 1e9)


class ReconstructorModel:
    def __init__(self, d_enc: int, d_mem: int = 32, d_emb: int = 32, d_time: int = 8,
                 d_hidden: int = 32, attention: str = "softmax", seed: int = 0):
        self.d_enc = d_enc
        self.d_mem = d_mem
        self.d_emb = d_emb
        self.d_time = d_time
        self.d_hidden = d_hidden
        self.attention = attention
        self.seed = seed
        self.params: Dict[str, np.ndarray] = self._init_params(np.random.default_rng(seed))

    @property
    def d_msg(self) -> int:
        return 2 * self.d_mem + self.d_time + self.d_enc

    @property
    def d_x(self) -> int:
        return self.d_mem + self.d_enc + self.d_time + 1

    def shapes(self) -> Dict[str, Tuple[int, ...]]:
        m, msg, e, t, h, x = self.d_mem, self.d_msg, self.d_emb, self.d_time, self.d_hidden, self.d_x
        u = m + t
        return {
            "W_z": (m, msg), "U_z": (m, m), "b_z": (m,),
            "W_r": (m, msg), "U_r": (m, m), "b_r": (m,),
            "W_h": (m, msg), "U_h": (m, m), "b_h": (m,),
            "w_t": (t,), "b_t": (t,),
            "W_q": (e, u), "W_k": (e, x), "W_v": (e, x), "W_self": (e, u), "b_emb": (e,),
            "W_1": (h, e), "b_1": (h,), "W_2": (N_RELATIONS, h), "b_2": (N_RELATIONS,),
        }

    def _init_params(self, rng: np.random.Generator) -> Dict[str, np.ndarray]:
        params = {}
        for name, shape in self.shapes().items():
            if len(shape) == 1:
                if name == "w_t":
                    params[name] = rng.normal(0.0, 1.0, shape)
                else:
                    params[name] = np.zeros(shape)
            else:
                limit = math.sqrt(6.0 / (shape[0] + shape[1]))
                params[name] = rng.uniform(-limit, limit, shape)
        return params

    def copy_params(self) -> Dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params.items()}

    def load_params(self, params: Dict[str, np.ndarray]) -> None:
        shapes = self.shapes()
        if set(params) != set(shapes):
            raise ValueError(f"parameter names differ: {sorted(set(params) ^ set(shapes))}")
        for name, arr in params.items():
            if tuple(arr.shape) != shapes[name]:
                raise ValueError(f"{name}: shape {arr.shape} != {shapes[name]}")
        self.params = {k: np.array(v, dtype=float) for k, v in params.items()}

    def hyper(self) -> dict:
        return {"d_enc": self.d_enc, "d_mem": self.d_mem, "d_emb": self.d_emb,
                "d_time": self.d_time, "d_hidden": self.d_hidden,
                "attention": self.attention, "seed": self.seed}

    # ---- building blocks -------------------------------------------------

    def time_encode(self, tau) -> np.ndarray:
        p = self.params
        return np.multiply.outer(np.asarray(tau, dtype=float), p["w_t"]) + p["b_t"]

    def message(self, own: np.ndarray, other: np.ndarray, tau: float, enc: np.ndarray) -> np.ndarray:
        """Message for one endpoint: own memory, partner memory, time code, edge."""
        return np.concatenate([own, other, self.time_encode(tau), enc])

    def memory_update(self, msg: np.ndarray, prev: np.ndarray) -> np.ndarray:
        """One GRU step: new memory from a message and the previous memory."""
        return self._gru(msg[None, :], prev[None, :])[0][0]

    def _gru(self, M: np.ndarray, S: np.ndarray):
        p = self.params
        z = sigmoid(M @ p["W_z"].T + S @ p["U_z"].T + p["b_z"])
        r = sigmoid(M @ p["W_r"].T + S @ p["U_r"].T + p["b_r"])
        rs = r * S
        h = np.tanh(M @ p["W_h"].T + rs @ p["U_h"].T + p["b_h"])
        out = (1.0 - z) * S + z * h
        return out, (M, S, z, r, rs, h)

    def _gru_backward(self, dout: np.ndarray, cache, grads: Dict[str, np.ndarray]) -> None:
        p = self.params
        M, S, z, r, rs, h = cache
        dz = dout * (h - S)
        dh = dout * z
        da_h = dh * (1.0 - h * h)
        grads["W_h"] += da_h.T @ M
        grads["U_h"] += da_h.T @ rs
        grads["b_h"] += da_h.sum(0)
        dr = (da_h @ p["U_h"]) * S
        da_r = dr * r * (1.0 - r)
        grads["W_r"] += da_r.T @ M
        grads["U_r"] += da_r.T @ S
        grads["b_r"] += da_r.sum(0)
        da_z = dz * z * (1.0 - z)
        grads["W_z"] += da_z.T @ M
        grads["U_z"] += da_z.T @ S
        grads["b_z"] += da_z.sum(0)

    def resolve_memories(self, refs: Sequence[MemoryRef]):
        """Current memories for ``refs`` plus what backward needs."""
        out = np.empty((len(refs), self.d_mem))
        live = [i for i, r in enumerate(refs) if r.msg is not None]
        for i, r in enumerate(refs):
            if r.msg is None:
                out[i] = r.prev
        cache = None
        if live:
            M = np.stack([refs[i].msg for i in live])
            S = np.stack([refs[i].prev for i in live])
            mem, cache = self._gru(M, S)
            out[live] = mem
        return out, live, cache

    # ---- forward / backward ---------------------------------------------

    def forward(self, inp: EventInput):
        p = self.params
        mems, live, gcache = self.resolve_memories([inp.subject] + list(inp.neighbors))
        s_i = mems[0]
        S_n = mems[1:]
        v_i = self.time_encode(inp.subject_tau)
        V_n = self.time_encode(inp.taus).reshape(len(inp.neighbors), self.d_time)
        u = np.concatenate([s_i, v_i])
        X = np.concatenate([S_n, inp.edges, V_n, inp.flags[:, None]], axis=1)
        q = p["W_q"] @ u
        K = X @ p["W_k"].T
        V = X @ p["W_v"].T
        scale = 1.0 / math.sqrt(self.d_emb)
        if self.attention == "softmax":
            alpha = softmax(K @ q * scale)
        else:
            alpha = np.ones(len(inp.neighbors))
        agg = alpha @ V
        z = np.tanh(p["W_self"] @ u + agg + p["b_emb"])
        h1 = np.tanh(p["W_1"] @ z + p["b_1"])
        logits = p["W_2"] @ h1 + p["b_2"]
        probs = softmax(logits)
        loss = -math.log(max(probs[inp.label], 1e-300))
        cache = (mems, live, gcache, u, X, q, K, V, alpha, scale, z, h1, probs)
        return probs, loss, cache

    def backward(self, inp: EventInput, cache) -> Dict[str, np.ndarray]:
        p = self.params
        mems, live, gcache, u, X, q, K, V, alpha, scale, z, h1, probs = cache
        g = {k: np.zeros_like(v) for k, v in p.items()}
        dlogits = probs.copy()
        dlogits[inp.label] -= 1.0
        g["W_2"] = np.outer(dlogits, h1)
        g["b_2"] = dlogits
        da1 = (p["W_2"].T @ dlogits) * (1.0 - h1 * h1)
        g["W_1"] = np.outer(da1, z)
        g["b_1"] = da1
        dpre = (p["W_1"].T @ da1) * (1.0 - z * z)
        g["W_self"] = np.outer(dpre, u)
        g["b_emb"] = dpre
        du = p["W_self"].T @ dpre
        dV = np.outer(alpha, dpre)
        if self.attention == "softmax":
            dalpha = V @ dpre
            da = alpha * (dalpha - alpha @ dalpha)
            dK = np.outer(da, q) * scale
            dq = (K.T @ da) * scale
            g["W_q"] = np.outer(dq, u)
            du = du + p["W_q"].T @ dq
            g["W_k"] = dK.T @ X
            dX = dK @ p["W_k"] + dV @ p["W_v"]
        else:
            dX = dV @ p["W_v"]
        g["W_v"] = dV.T @ X

        m, e, t = self.d_mem, self.d_enc, self.d_time
        dmem = np.empty_like(mems)
        dmem[0] = du[:m]
        dmem[1:] = dX[:, :m]
        dv_i = du[m:]
        dV_n = dX[:, m + e:m + e + t]
        g["w_t"] = dv_i * inp.subject_tau + inp.taus @ dV_n
        g["b_t"] = dv_i + dV_n.sum(0)
        if live:
            self._gru_backward(dmem[live], gcache, g)
        return g

    def loss_and_grad(self, inp: EventInput):
        _, loss, cache = self.forward(inp)
        return loss, self.backward(inp, cache)

    def sgd_step(self, grads: Dict[str, np.ndarray], lr: float, clip: Optional[float]) -> None:
        norm = math.sqrt(sum(float(np.sum(v * v)) for v in grads.values()))
        if not math.isfinite(norm):
            raise TrainingDiverged("non-finite gradient norm")
        factor = lr
        if clip is not None and norm > clip:
            factor = lr * clip / norm
        if factor == 0.0:
            return
        for k, v in grads.items():
            self.params[k] -= factor * v


def train_on_inputs(model: ReconstructorModel, inputs: Iterable[EventInput], lr: float,
                    epochs: int = 1, clip: Optional[float] = 5.0) -> float:
    """Online gradient descent over ``inputs`` in order.

    Returns the mean pre-step loss of the last epoch. On a non-finite
    gradient the parameters are restored and :class:`TrainingDiverged` is
    raised.
    """
    inputs = list(inputs)
    backup = model.copy_params()
    mean = 0.0
    try:
        for _ in range(epochs):
            total = 0.0
            for inp in inputs:
                loss, grads = model.loss_and_grad(inp)
                total += loss
                model.sgd_step(grads, lr, clip)
            mean = total / max(len(inputs), 1)
        for v in model.params.values():
            if not np.all(np.isfinite(v)):
                raise TrainingDiverged("non-finite parameters after update")
    except TrainingDiverged:
        model.params = backup
        raise
    return mean


@dataclass
class TemporalState:
    """Per-node memory recipes and recent-neighbour history."""

    d_mem: int
    k_nb: int
    refs: Dict[str, MemoryRef] = field(default_factory=dict)
    # node -> OrderedDict(neighbour -> edge encoding); most recent last
    neighbors: Dict[str, "OrderedDict[str, np.ndarray]"] = field(default_factory=dict)

    def ref(self, node: str) -> MemoryRef:
        r = self.refs.get(node)
        if r is None:
            r = MemoryRef(np.zeros(self.d_mem))
            self.refs[node] = r
        return r

    def history(self, node: str, exclude: str) -> List[Tuple[str, np.ndarray]]:
        hist = self.neighbors.get(node)
        if not hist:
            return []
        items = [(n, e) for n, e in hist.items() if n != exclude]
        return items[-(self.k_nb - 1):] if self.k_nb > 1 else []

    def remember(self, node: str, other: str, edge: np.ndarray) -> None:
        hist = self.neighbors.setdefault(node, OrderedDict())
        hist.pop(other, None)
        hist[other] = edge
        while len(hist) > self.k_nb:
            hist.popitem(last=False)
