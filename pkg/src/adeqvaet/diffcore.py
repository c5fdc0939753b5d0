"""Minimal dense reverse-mode autodiff over 2-D float64 tensors.

A :class:`Graph` records primitives in construction order (inputs always
precede consumers, so the node list is already topological) and replays exact
analytic backward rules in reverse. Gradients accumulate additively at
fan-out. Everything is desk-scale: no GPU, no broadcasting beyond row-vector
bias addition, no higher-order derivatives.

Sequence models get one composite primitive, :meth:`Graph.attention`, which
runs scaled dot-product attention over fixed-length blocks of consecutive
rows. That keeps batched sequence math inside the 2-D tensor calculus
instead of forcing a 3-D tensor type.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import NonScalarLoss, ShapeMismatch

_EPS_LOG = 1e-12  # probability clamp inside binary cross-entropy


def _as_matrix(value) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D tensor, got shape {arr.shape}")
    return arr


class Node:
    """One recorded op: cached forward value plus a backward closure."""

    __slots__ = ("idx", "op", "inputs", "value", "grad", "param_name", "backward_fn", "extra")

    def __init__(self, idx, op, inputs, value, param_name=None, backward_fn=None, extra=None):
        self.idx = idx
        self.op = op
        self.inputs = inputs
        self.value = value
        self.grad = None
        self.param_name = param_name
        self.backward_fn = backward_fn
        self.extra = extra

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape


class Graph:
    """Append-only computation record; build forward, then call backward."""

    def __init__(self):
        self.nodes: list[Node] = []

    # --- leaves ----------------------------------------------------------

    def input(self, value) -> Node:
        return self._register("input", [], _as_matrix(value).copy())

    def param(self, name: str, value: np.ndarray) -> Node:
        node = self._register("param", [], _as_matrix(value))
        node.param_name = name
        return node

    # --- primitives -------------------------------------------------------

    def matmul(self, a: Node, b: Node) -> Node:
        if a.shape[1] != b.shape[0]:
            raise ShapeMismatch("matmul", (a.shape, b.shape), "inner dimensions equal")
        value = a.value @ b.value

        def backward(g):
            return [g @ b.value.T, a.value.T @ g]

        return self._register("matmul", [a, b], value, backward_fn=backward)

    def add(self, a: Node, b: Node) -> Node:
        """Elementwise add; b may be a 1-row bias broadcast over a's rows."""
        broadcast = b.shape == (1, a.shape[1]) and a.shape[0] != 1
        if not broadcast and a.shape != b.shape:
            raise ShapeMismatch("add", (a.shape, b.shape), "equal shapes or 1-row bias")
        value = a.value + b.value

        def backward(g):
            gb = g.sum(axis=0, keepdims=True) if broadcast else g
            return [g, gb]

        return self._register("add", [a, b], value, backward_fn=backward)

    def mul(self, a: Node, b: Node) -> Node:
        if a.shape != b.shape:
            raise ShapeMismatch("mul", (a.shape, b.shape), "equal shapes")
        value = a.value * b.value

        def backward(g):
            return [g * b.value, g * a.value]

        return self._register("mul", [a, b], value, backward_fn=backward)

    def relu(self, a: Node) -> Node:
        mask = a.value > 0
        return self._register("relu", [a], a.value * mask, backward_fn=lambda g: [g * mask])

    def sigmoid(self, a: Node) -> Node:
        s = 1.0 / (1.0 + np.exp(-a.value))
        return self._register("sigmoid", [a], s, backward_fn=lambda g: [g * s * (1.0 - s)])

    def tanh(self, a: Node) -> Node:
        t = np.tanh(a.value)
        return self._register("tanh", [a], t, backward_fn=lambda g: [g * (1.0 - t * t)])

    def softmax_rows(self, a: Node) -> Node:
        shifted = a.value - a.value.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        s = e / e.sum(axis=1, keepdims=True)

        def backward(g):
            return [s * (g - (g * s).sum(axis=1, keepdims=True))]

        return self._register("softmax_rows", [a], s, backward_fn=backward)

    def layer_norm_rows(self, a: Node, eps: float = 1e-5) -> Node:
        mean = a.value.mean(axis=1, keepdims=True)
        var = a.value.var(axis=1, keepdims=True)
        inv = 1.0 / np.sqrt(var + eps)
        y = (a.value - mean) * inv

        def backward(g):
            gm = g.mean(axis=1, keepdims=True)
            gy = (g * y).mean(axis=1, keepdims=True)
            return [inv * (g - gm - y * gy)]

        return self._register("layer_norm_rows", [a], y, backward_fn=backward)

    def mean_all(self, a: Node) -> Node:
        value = np.array([[a.value.mean()]])
        size = a.value.size

        def backward(g):
            return [np.full(a.shape, g[0, 0] / size)]

        return self._register("mean_all", [a], value, backward_fn=backward)

    def binary_cross_entropy(self, pred: Node, label: Node) -> Node:
        """Mean BCE over all entries; pred is clamped away from {0, 1}."""
        if pred.shape != label.shape:
            raise ShapeMismatch("binary_cross_entropy", (pred.shape, label.shape), "equal shapes")
        p = np.clip(pred.value, _EPS_LOG, 1.0 - _EPS_LOG)
        y = label.value
        value = np.array([[-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))]])
        size = p.size

        def backward(g):
            scale = g[0, 0] / size
            dp = scale * (p - y) / (p * (1.0 - p))
            dy = scale * (np.log(1.0 - p) - np.log(p))
            return [dp, dy]

        return self._register("binary_cross_entropy", [pred, label], value, backward_fn=backward)

    def mse(self, pred: Node, target: Node) -> Node:
        if pred.shape != target.shape:
            raise ShapeMismatch("mse", (pred.shape, target.shape), "equal shapes")
        diff = pred.value - target.value
        value = np.array([[np.mean(diff * diff)]])
        size = diff.size

        def backward(g):
            d = (2.0 * g[0, 0] / size) * diff
            return [d, -d]

        return self._register("mse", [pred, target], value, backward_fn=backward)

    def attention(self, q: Node, k: Node, v: Node, seq_len: int) -> Node:
        """Scaled dot-product attention over blocks of seq_len consecutive rows.

        Rows are grouped [0:T], [T:2T], ... into independent sequences, so a
        whole minibatch of sequences rides in one 2-D tensor. Softmaxed
        attention probabilities are cached on the node (extra["probs"],
        shape (blocks, T, T)) for inspection.
        """
        if q.shape != k.shape or q.shape != v.shape:
            raise ShapeMismatch("attention", (q.shape, k.shape, v.shape), "equal shapes")
        rows, d = q.shape
        if seq_len < 1 or rows % seq_len != 0:
            raise ShapeMismatch("attention", rows, f"row count divisible by seq_len={seq_len}")
        blocks = rows // seq_len
        scale = 1.0 / np.sqrt(d)
        q3 = q.value.reshape(blocks, seq_len, d)
        k3 = k.value.reshape(blocks, seq_len, d)
        v3 = v.value.reshape(blocks, seq_len, d)
        scores = np.einsum("btd,bud->btu", q3, k3) * scale
        scores -= scores.max(axis=2, keepdims=True)
        e = np.exp(scores)
        probs = e / e.sum(axis=2, keepdims=True)
        value = np.einsum("btu,bud->btd", probs, v3).reshape(rows, d)

        def backward(g):
            g3 = g.reshape(blocks, seq_len, d)
            dv = np.einsum("btu,btd->bud", probs, g3)
            da = np.einsum("btd,bud->btu", g3, v3)
            ds = probs * (da - (da * probs).sum(axis=2, keepdims=True))
            dq = np.einsum("btu,bud->btd", ds, k3) * scale
            dk = np.einsum("btu,btd->bud", ds, q3) * scale
            return [dq.reshape(rows, d), dk.reshape(rows, d), dv.reshape(rows, d)]

        return self._register("attention", [q, k, v], value, backward_fn=backward, extra={"probs": probs})

    # --- engine -----------------------------------------------------------

    def _register(self, op, inputs, value, param_name=None, backward_fn=None, extra=None) -> Node:
        if not np.isfinite(value).all():
            raise FloatingPointError(f"{op} produced a non-finite value")
        node = Node(len(self.nodes), op, inputs, value, param_name, backward_fn, extra)
        self.nodes.append(node)
        return node

    def reset(self):
        for node in self.nodes:
            node.grad = None

    def backward(self, loss: Node) -> dict[str, np.ndarray]:
        """Gradients of a scalar loss w.r.t. every parameter node, by name.

        Parameters the loss does not depend on get exact zero gradients;
        non-parameter leaves are skipped in the returned dict (their .grad
        attribute is still populated for callers that need it).
        """
        if loss.value.shape != (1, 1):
            raise NonScalarLoss(f"loss must be 1x1, got {loss.value.shape}")
        self.reset()
        loss.grad = np.ones((1, 1))
        for node in reversed(self.nodes[: loss.idx + 1]):
            if node.grad is None or node.backward_fn is None:
                continue
            for parent, g in zip(node.inputs, node.backward_fn(node.grad)):
                if parent.grad is None:
                    parent.grad = g.copy()
                else:
                    parent.grad += g
        grads: dict[str, np.ndarray] = {}
        for node in self.nodes:
            if node.param_name is None:
                continue
            g = np.zeros(node.shape) if node.grad is None else node.grad
            if node.param_name in grads:  # same tensor registered twice: accumulate
                grads[node.param_name] = grads[node.param_name] + g
            else:
                grads[node.param_name] = g
        return grads


class ParamStore:
    """Named parameter tensors plus per-parameter Adam state."""

    MAGIC = b"QVT1"

    def __init__(self):
        self.tensors: dict[str, np.ndarray] = {}
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self.step = 0

    def add(self, name: str, value) -> np.ndarray:
        if name in self.tensors:
            raise ValueError(f"parameter {name!r} already registered")
        arr = _as_matrix(value).copy()
        self.tensors[name] = arr
        self._m[name] = np.zeros_like(arr)
        self._v[name] = np.zeros_like(arr)
        return arr

    def get(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def names(self) -> list[str]:
        return list(self.tensors)

    def n_parameters(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def save(self, path: str):
        """Flat binary: magic, then (name_len, name, rows, cols, f64 data) per tensor."""
        with open(path, "wb") as fh:
            fh.write(self.MAGIC)
            for name, arr in self.tensors.items():
                encoded = name.encode("utf-8")
                fh.write(struct.pack("<I", len(encoded)))
                fh.write(encoded)
                fh.write(struct.pack("<II", arr.shape[0], arr.shape[1]))
                fh.write(arr.astype("<f8").tobytes())

    @classmethod
    def load(cls, path: str) -> "ParamStore":
        store = cls()
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != cls.MAGIC:
                raise ValueError(f"bad magic {magic!r} in {path}")
            while True:
                head = fh.read(4)
                if not head:
                    break
                (name_len,) = struct.unpack("<I", head)
                name = fh.read(name_len).decode("utf-8")
                rows, cols = struct.unpack("<II", fh.read(8))
                data = np.frombuffer(fh.read(rows * cols * 8), dtype="<f8")
                store.add(name, data.reshape(rows, cols))
        return store


def adam_step(
    store: ParamStore,
    grads: dict[str, np.ndarray],
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    weight_decay: float = 0.0,
):
    """Bias-corrected Adam with decoupled weight decay, updating in place.

    Decay multiplies each parameter by (1 - lr * weight_decay) before the
    moment update, so it acts even when the gradient is zero.
    """
    store.step += 1
    t = store.step
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name, grad in grads.items():
        p = store.tensors[name]
        g = np.asarray(grad, dtype=np.float64)
        if g.shape != p.shape:
            raise ShapeMismatch("adam_step", g.shape, p.shape)
        if weight_decay:
            p *= 1.0 - lr * weight_decay
        m = store._m[name]
        v = store._v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


def grad_check(build_loss, store: ParamStore, eps: float = 1e-5) -> float:
    """Max relative error of analytic vs central finite-difference gradients.

    build_loss(graph, store) must construct the loss from the store's
    current tensor values and return the scalar loss node.
    """

    def loss_value() -> float:
        return float(build_loss(Graph(), store).value[0, 0])

    graph = Graph()
    loss = build_loss(graph, store)
    analytic = graph.backward(loss)

    worst = 0.0
    for name, tensor in store.tensors.items():
        flat = tensor.reshape(-1)
        aflat = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = loss_value()
            flat[i] = orig - eps
            f_minus = loss_value()
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            rel = abs(aflat[i] - numeric) / max(1e-8, abs(aflat[i]), abs(numeric))
            worst = max(worst, rel)
    return worst
