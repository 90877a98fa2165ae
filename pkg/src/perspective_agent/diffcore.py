"""Dense-tensor reverse-mode differentiation with stop-gradient semantics.

A per-step dynamic tape over small numpy arrays: every operation returns a
``Node`` holding its value and a closure that scatters the output gradient
back to its parents. Graphs are built fresh each step and dropped after the
optimizer update, so memory stays bounded in fully online training.

Also provides the parameter container with Adam state, global-norm gradient
clipping, and a central-difference gradient checker.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ConfigError, NumericError

Array = np.ndarray


class Node:
    """One tape entry: a value, an optional gradient, and backward wiring.

    ``grad`` is allocated lazily during backward; leaf parameters keep a
    persistent gradient buffer managed by :class:`ParameterStore`.
    """

    __slots__ = ("value", "grad", "requires_grad", "parents", "backward_fn")

    def __init__(
        self,
        value: Array,
        parents: tuple["Node", ...] = (),
        backward_fn: Callable[["Node"], None] | None = None,
        requires_grad: bool = False,
    ):
        self.value = value
        self.grad: Array | None = None
        self.requires_grad = requires_grad
        self.parents = parents
        self.backward_fn = backward_fn

    def accumulate(self, delta: Array) -> None:
        if self.grad is None:
            self.grad = np.array(delta, dtype=self.value.dtype)
        else:
            self.grad += delta

    def __repr__(self) -> str:
        return f"Node(shape={self.value.shape}, requires_grad={self.requires_grad})"


def constant(value, dtype=np.float64) -> Node:
    """Wrap raw numbers as a leaf that never receives gradient."""
    return Node(np.asarray(value, dtype=dtype))


def _as_node(x, dtype=np.float64) -> Node:
    return x if isinstance(x, Node) else constant(x, dtype)


def _make(value: Array, parents: tuple[Node, ...], backward_fn) -> Node:
    if any(p.requires_grad for p in parents):
        return Node(value, parents, backward_fn, requires_grad=True)
    return Node(value)


class StopCache:
    """Replay buffer for stop-gradient boundaries.

    The gradient checker differences the loss as a function in which every
    detached value is held constant. Recording a forward pass captures each
    stopped value in call order; replaying substitutes the captured values
    regardless of the (perturbed) inputs, which is exactly the function the
    analytic gradient differentiates.
    """

    def __init__(self):
        self.values: list[Array] = []
        self.recording = True
        self._cursor = 0

    def rewind(self) -> None:
        self.recording = False
        self._cursor = 0

    def fetch_or_store(self, value: Array) -> Array:
        if self.recording:
            self.values.append(value.copy())
            return value
        out = self.values[self._cursor]
        self._cursor += 1
        return out


def stop_gradient(x: Node, cache: StopCache | None = None) -> Node:
    """Identity on values; blocks every backward path through this edge."""
    value = x.value
    if cache is not None:
        value = cache.fetch_or_store(value)
    return Node(value)


# ---------------------------------------------------------------------------
# primitive operations
# ---------------------------------------------------------------------------

def affine(x: Node, w: Node, b: Node) -> Node:
    """w @ x + b for a 1-D input, weight shaped [out, in], bias [out]."""
    if w.value.ndim != 2 or x.value.ndim != 1 or b.value.ndim != 1:
        raise ConfigError(
            f"affine expects weight [out,in], input [in], bias [out]; got "
            f"{w.value.shape}, {x.value.shape}, {b.value.shape}"
        )
    if w.value.shape[1] != x.value.shape[0] or w.value.shape[0] != b.value.shape[0]:
        raise ConfigError(
            f"affine shape mismatch: weight {w.value.shape}, input "
            f"{x.value.shape}, bias {b.value.shape}"
        )
    out_val = w.value @ x.value + b.value

    def backward_fn(out: Node) -> None:
        g = out.grad
        if x.requires_grad:
            x.accumulate(w.value.T @ g)
        if w.requires_grad:
            w.accumulate(np.outer(g, x.value))
        if b.requires_grad:
            b.accumulate(g)

    return _make(out_val, (x, w, b), backward_fn)


def add(a: Node, b: Node) -> Node:
    a, b = _as_node(a), _as_node(b)

    def backward_fn(out: Node) -> None:
        if a.requires_grad:
            a.accumulate(out.grad)
        if b.requires_grad:
            b.accumulate(out.grad)

    return _make(a.value + b.value, (a, b), backward_fn)


def sub(a: Node, b: Node) -> Node:
    a, b = _as_node(a), _as_node(b)

    def backward_fn(out: Node) -> None:
        if a.requires_grad:
            a.accumulate(out.grad)
        if b.requires_grad:
            b.accumulate(-out.grad)

    return _make(a.value - b.value, (a, b), backward_fn)


def mul(a: Node, b: Node) -> Node:
    """Elementwise product (same shape, or scalar broadcast)."""
    a, b = _as_node(a), _as_node(b)

    def backward_fn(out: Node) -> None:
        if a.requires_grad:
            a.accumulate(_unbroadcast(out.grad * b.value, a.value.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(out.grad * a.value, b.value.shape))

    return _make(a.value * b.value, (a, b), backward_fn)


def _unbroadcast(grad: Array, shape: tuple) -> Array:
    if grad.shape == shape:
        return grad
    return np.sum(grad).reshape(shape) if shape == () else np.sum(grad, axis=0)


def scale(x: Node, k: float) -> Node:
    """Multiply by a python constant."""
    kf = float(k)

    def backward_fn(out: Node) -> None:
        if x.requires_grad:
            x.accumulate(out.grad * kf)

    return _make(x.value * kf, (x,), backward_fn)


def neg(x: Node) -> Node:
    return scale(x, -1.0)


def concat(parts: Sequence[Node]) -> Node:
    parts = [_as_node(p) for p in parts]
    sizes = [p.value.shape[0] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward_fn(out: Node) -> None:
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                p.accumulate(out.grad[lo:hi])

    return _make(np.concatenate([p.value for p in parts]), tuple(parts), backward_fn)


def tanh(x: Node) -> Node:
    y = np.tanh(x.value)

    def backward_fn(out: Node) -> None:
        if x.requires_grad:
            x.accumulate(out.grad * (1.0 - y * y))

    return _make(y, (x,), backward_fn)


def sigmoid(x: Node) -> Node:
    y = 1.0 / (1.0 + np.exp(-x.value))

    def backward_fn(out: Node) -> None:
        if x.requires_grad:
            x.accumulate(out.grad * y * (1.0 - y))

    return _make(y, (x,), backward_fn)


def exp(x: Node) -> Node:
    y = np.exp(x.value)

    def backward_fn(out: Node) -> None:
        if x.requires_grad:
            x.accumulate(out.grad * y)

    return _make(y, (x,), backward_fn)


def softmax(logits: Node) -> Node:
    """Stable softmax over a 1-D logit vector."""
    z = logits.value
    if not np.all(np.isfinite(z)):
        raise NumericError(f"non-finite logits in softmax: {z}")
    shifted = z - np.max(z)
    e = np.exp(shifted)
    p = e / np.sum(e)

    def backward_fn(out: Node) -> None:
        if logits.requires_grad:
            g = out.grad
            logits.accumulate(p * (g - np.dot(g, p)))

    return _make(p, (logits,), backward_fn)


def log_softmax(logits: Node) -> Node:
    """Stable log-probabilities; Jacobian row i is e_i - softmax."""
    z = logits.value
    if not np.all(np.isfinite(z)):
        raise NumericError(f"non-finite logits in log_softmax: {z}")
    shifted = z - np.max(z)
    lse = math.log(np.sum(np.exp(shifted)))
    y = shifted - lse
    p = np.exp(y)

    def backward_fn(out: Node) -> None:
        if logits.requires_grad:
            g = out.grad
            logits.accumulate(g - p * np.sum(g))

    return _make(y, (logits,), backward_fn)


def pick(x: Node, index: int) -> Node:
    """Select one component of a vector as a scalar node."""
    i = int(index)

    def backward_fn(out: Node) -> None:
        if x.requires_grad:
            g = np.zeros_like(x.value)
            g[i] = out.grad
            x.accumulate(g)

    return _make(np.asarray(x.value[i]), (x,), backward_fn)


def vsum(x: Node) -> Node:
    def backward_fn(out: Node) -> None:
        if x.requires_grad:
            x.accumulate(np.full_like(x.value, float(out.grad)))

    return _make(np.asarray(np.sum(x.value)), (x,), backward_fn)


def weighted_sum(parts: Sequence[Node], weights: Array) -> Node:
    """Fixed-weight combination sum_i w_i * parts_i; weights carry no gradient."""
    w = np.asarray(weights, dtype=float)
    if len(parts) != w.shape[0]:
        raise ConfigError(f"weighted_sum got {len(parts)} parts, {w.shape[0]} weights")
    value = sum(wi * p.value for wi, p in zip(w, parts))

    def backward_fn(out: Node) -> None:
        for wi, p in zip(w, parts):
            if p.requires_grad:
                p.accumulate(out.grad * wi)

    return _make(np.asarray(value), tuple(parts), backward_fn)


def mse(prediction: Node, target) -> Node:
    """Mean of squared componentwise differences, as a scalar node."""
    prediction = _as_node(prediction)
    target = _as_node(target)
    if prediction.value.shape != target.value.shape:
        raise ConfigError(
            f"mse shape mismatch: {prediction.value.shape} vs {target.value.shape}"
        )
    diff = prediction.value - target.value
    n = diff.size
    value = np.asarray(np.mean(diff * diff))

    def backward_fn(out: Node) -> None:
        g = out.grad * 2.0 / n
        if prediction.requires_grad:
            prediction.accumulate(g * diff)
        if target.requires_grad:
            target.accumulate(-g * diff)

    return _make(value, (prediction, target), backward_fn)


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------

def backward(loss: Node) -> None:
    """Set every reachable node's grad to d(loss)/d(node).

    The loss must be scalar. Gradients of all reachable nodes (parameters
    included) are reset before accumulation, so two calls on the same graph
    produce bit-identical results; traversal is the deterministic post-order
    of the construction DAG.
    """
    if loss.value.size != 1:
        raise ConfigError(f"backward requires a scalar loss, got shape {loss.value.shape}")
    if not loss.requires_grad:
        return

    topo: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    for node in topo:
        if node.grad is None:
            continue
        if node.backward_fn is None and node.parents == ():
            node.grad.fill(0.0)  # leaf with a persistent buffer
        else:
            node.grad = None
    loss.grad = np.ones_like(loss.value)
    for node in reversed(topo):
        if node.backward_fn is not None and node.grad is not None:
            node.backward_fn(node)


# ---------------------------------------------------------------------------
# parameters and optimizer
# ---------------------------------------------------------------------------

class ParameterStore:
    """Named trainable tensors plus Adam moment accumulators.

    Parameters keep persistent gradient buffers; `step` counts optimizer
    updates and drives bias correction.
    """

    def __init__(self, dtype=np.float64):
        self.dtype = dtype
        self.params: dict[str, Node] = {}
        self.moment1: dict[str, Array] = {}
        self.moment2: dict[str, Array] = {}
        self.step = 0

    def add(self, name: str, value: Array) -> Node:
        if name in self.params:
            raise ConfigError(f"duplicate parameter name {name!r}")
        arr = np.array(value, dtype=self.dtype)
        node = Node(arr, requires_grad=True)
        node.grad = np.zeros_like(arr)
        self.params[name] = node
        self.moment1[name] = np.zeros_like(arr)
        self.moment2[name] = np.zeros_like(arr)
        return node

    def __getitem__(self, name: str) -> Node:
        return self.params[name]

    def names(self) -> list[str]:
        return list(self.params)

    def zero_grads(self) -> None:
        for node in self.params.values():
            node.grad.fill(0.0)

    def grad_global_norm(self) -> float:
        total = 0.0
        for node in self.params.values():
            g = node.grad
            total += float(np.dot(g.ravel(), g.ravel()))
        return math.sqrt(total)

    def state_dict(self) -> dict:
        return {
            "step": self.step,
            "params": {k: v.value.tolist() for k, v in self.params.items()},
            "shapes": {k: list(v.value.shape) for k, v in self.params.items()},
            "moment1": {k: v.tolist() for k, v in self.moment1.items()},
            "moment2": {k: v.tolist() for k, v in self.moment2.items()},
        }

    def load_state_dict(self, state: dict) -> None:
        for name, node in self.params.items():
            shape = tuple(state["shapes"][name])
            node.value[...] = np.array(state["params"][name], dtype=self.dtype).reshape(shape)
            self.moment1[name][...] = np.array(state["moment1"][name], dtype=self.dtype).reshape(shape)
            self.moment2[name][...] = np.array(state["moment2"][name], dtype=self.dtype).reshape(shape)
        self.step = int(state["step"])


def clip_gradients(store: ParameterStore, clip_norm: float) -> float:
    """Scale all gradients jointly so the global norm is at most clip_norm.

    Returns the pre-clip global norm.
    """
    norm = store.grad_global_norm()
    if clip_norm is not None and math.isfinite(clip_norm) and norm > clip_norm:
        factor = clip_norm / norm
        for node in store.params.values():
            node.grad *= factor
    return norm


def adam_step(
    store: ParameterStore,
    lr: float,
    clip_norm: float | None = 1.0,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One clipped, bias-corrected adaptive-moment update; zeroes grads after."""
    for name, node in store.params.items():
        if not np.all(np.isfinite(node.grad)):
            raise NumericError(f"non-finite gradient in parameter {name!r}")
    clip_gradients(store, clip_norm)
    store.step += 1
    t = store.step
    correction1 = 1.0 - beta1 ** t
    correction2 = 1.0 - beta2 ** t
    for name, node in store.params.items():
        g = node.grad
        m = store.moment1[name]
        v = store.moment2[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        m_hat = m / correction1
        v_hat = v / correction2
        node.value -= lr * m_hat / (np.sqrt(v_hat) + eps)
    store.zero_grads()


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

def finite_diff_check(
    f: Callable[[ParameterStore], Node],
    store: ParameterStore,
    h: float = 1e-5,
    param_names: Iterable[str] | None = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f`` must rebuild its graph on every call and be deterministic given the
    store contents (freeze any stop-gradient boundaries via StopCache before
    calling). Error per component is |analytic - cd| / max(|analytic|, |cd|, 1e-8).
    """
    names = list(param_names) if param_names is not None else store.names()

    store.zero_grads()
    loss = f(store)
    backward(loss)
    analytic = {name: store[name].grad.copy() for name in names}
    store.zero_grads()

    worst = 0.0
    for name in names:
        value = store[name].value
        flat = value.ravel()
        ana = analytic[name].ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = float(f(store).value)
            flat[i] = orig - h
            f_minus = float(f(store).value)
            flat[i] = orig
            cd = (f_plus - f_minus) / (2.0 * h)
            denom = max(abs(ana[i]), abs(cd), 1e-8)
            worst = max(worst, abs(ana[i] - cd) / denom)
    return worst
