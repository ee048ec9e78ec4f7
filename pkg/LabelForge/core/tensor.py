# Copyright (C) 2023 Rémy Cases
# See LICENSE file for extended copyright information.
# This file is part of LabelForge project.

# Reverse-mode automatic differentiation over numpy arrays.
# Every operation returns a new Tensor holding a closure that pushes the
# output gradient back into its parents.

import threading
from dataclasses import dataclass
from typing import Callable, Iterable
import numpy as np
from ..errors import UsageError, ConfigurationError

DEFAULT_DTYPE = np.float32

_state = threading.local()

def is_grad_enabled() -> bool:
    return getattr(_state, "enabled", True)

class no_grad:
    def __enter__(self):
        self._previous = is_grad_enabled()
        _state.enabled = False

    def __exit__(self, *args):
        _state.enabled = self._previous

def _as_array(data, dtype=None) -> np.ndarray:
    if isinstance(data, np.ndarray) and dtype is None and np.issubdtype(data.dtype, np.floating):
        return data
    return np.asarray(data, dtype=dtype or DEFAULT_DTYPE)

def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad

class Tensor:
    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str = ""):
        self.data = _as_array(data, dtype)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name
        self.op = "leaf"
        self._parents: tuple["Tensor", ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        # switching pattern of piecewise-linear ops (relu mask, pooling argmax)
        self._pattern: np.ndarray | None = None

    @classmethod
    def _make(cls, data: np.ndarray, parents: tuple["Tensor", ...], op: str,
              backward: Callable[[np.ndarray], None]) -> "Tensor":
        out = cls(data)
        out.op = op
        if is_grad_enabled() and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward
        return out

    def _accumulate(self, grad: np.ndarray):
        if not self.requires_grad:
            return
        grad = np.asarray(grad, dtype=self.data.dtype).reshape(self.data.shape)
        if self.grad is None:
            self.grad = grad.copy()
        else:
            self.grad = self.grad + grad

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    def __add__(self, other) -> "Tensor":
        other = other if isinstance(other, Tensor) else Tensor(np.asarray(other, dtype=self.dtype))

        def backward(g):
            self._accumulate(_unbroadcast(g, self.shape))
            other._accumulate(_unbroadcast(g, other.shape))

        return Tensor._make(self.data + other.data, (self, other), "add", backward)

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        return Tensor._make(-self.data, (self,), "neg", lambda g: self._accumulate(-g))

    def __sub__(self, other) -> "Tensor":
        other = other if isinstance(other, Tensor) else Tensor(np.asarray(other, dtype=self.dtype))
        return self + (-other)

    def __rsub__(self, other) -> "Tensor":
        return (-self) + other

    def __mul__(self, other) -> "Tensor":
        other = other if isinstance(other, Tensor) else Tensor(np.asarray(other, dtype=self.dtype))

        def backward(g):
            self._accumulate(_unbroadcast(g * other.data, self.shape))
            other._accumulate(_unbroadcast(g * self.data, other.shape))

        return Tensor._make(self.data * other.data, (self, other), "mul", backward)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            def backward(g):
                self._accumulate(_unbroadcast(g / other.data, self.shape))
                other._accumulate(_unbroadcast(-g * self.data / other.data**2, other.shape))
            return Tensor._make(self.data / other.data, (self, other), "div", backward)
        return self * (1.0 / other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        def backward(g):
            self._accumulate(g @ other.data.swapaxes(-1, -2))
            other._accumulate(self.data.swapaxes(-1, -2) @ g)

        return Tensor._make(self.data @ other.data, (self, other), "matmul", backward)

    @property
    def T(self) -> "Tensor":
        return Tensor._make(self.data.T, (self,), "transpose", lambda g: self._accumulate(g.T))

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return Tensor._make(self.data.reshape(shape), (self,), "reshape",
                            lambda g: self._accumulate(g.reshape(self.shape)))

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        value = np.sum(self.data, axis=axis, keepdims=keepdims, dtype=np.float64).astype(self.dtype)

        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self._accumulate(np.broadcast_to(g, self.shape))

        return Tensor._make(np.asarray(value), (self,), "sum", backward)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        count = self.data.size if axis is None else np.prod([self.shape[a] for a in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def exp(self) -> "Tensor":
        value = np.exp(self.data)
        return Tensor._make(value, (self,), "exp", lambda g: self._accumulate(g * value))

    def log(self) -> "Tensor":
        return Tensor._make(np.log(self.data), (self,), "log", lambda g: self._accumulate(g / self.data))

    def relu(self) -> "Tensor":
        mask = self.data > 0
        out = Tensor._make(np.where(mask, self.data, 0).astype(self.dtype), (self,), "relu",
                           lambda g: self._accumulate(g * mask))
        out._pattern = mask
        return out

    def select(self, indices) -> "Tensor":
        """Row-wise pick: out[i] = self[i, indices[i]] for a 2-d tensor."""
        indices = np.asarray(indices, dtype=np.int64)
        rows = np.arange(self.shape[0])

        def backward(g):
            grad = np.zeros_like(self.data)
            grad[rows, indices] = g
            self._accumulate(grad)

        return Tensor._make(self.data[rows, indices], (self,), "select", backward)

    def masked_fill(self, mask: np.ndarray, value: float) -> "Tensor":
        mask = np.asarray(mask, dtype=bool)
        return Tensor._make(np.where(mask, np.asarray(value, dtype=self.dtype), self.data), (self,),
                            "masked_fill", lambda g: self._accumulate(np.where(mask, 0, g)))

    def backward(self, params: Iterable["Tensor"] | None = None):
        backward(self, params)

def concatenate(tensors: list[Tensor], axis: int = 0) -> Tensor:
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        for t, part in zip(tensors, np.split(g, sizes, axis=axis)):
            t._accumulate(part)

    return Tensor._make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), "concat", backward)

@dataclass(frozen=True)
class GraphNode:
    op: str
    inputs: tuple[int, ...]
    output: Tensor

class ComputationGraph:
    """Nodes reachable from a root, in topological order (inputs first)."""

    def __init__(self, nodes: list[GraphNode]):
        self.nodes = nodes

    def __len__(self):
        return len(self.nodes)

    @classmethod
    def from_root(cls, root: Tensor) -> "ComputationGraph":
        order: list[Tensor] = []
        index: dict[int, int] = {}
        visited: set[int] = set()
        stack = [(root, False)]
        while stack:
            tensor, expanded = stack.pop()
            key = id(tensor)
            if expanded:
                index[key] = len(order)
                order.append(tensor)
                continue
            if key in visited:
                continue
            visited.add(key)
            stack.append((tensor, True))
            for parent in reversed(tensor._parents):
                if id(parent) not in visited:
                    stack.append((parent, False))
        nodes = [GraphNode(op=t.op, inputs=tuple(index[id(p)] for p in t._parents), output=t) for t in order]
        return cls(nodes)

    def patterns(self) -> list[np.ndarray]:
        return [node.output._pattern for node in self.nodes if node.output._pattern is not None]

def backward(loss: Tensor, params: Iterable[Tensor] | None = None):
    if loss.data.size != 1:
        raise UsageError(f"backward needs a scalar loss, got shape {loss.shape}.")
    graph = ComputationGraph.from_root(loss)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(graph.nodes):
        tensor = node.output
        if tensor._backward is not None and tensor.grad is not None:
            tensor._backward(tensor.grad)
    # interior buffers are not needed once the gradient reached the leaves
    for node in graph.nodes:
        if node.output._parents:
            node.output.grad = None
    if params is not None:
        for p in params:
            if p.requires_grad and p.grad is None:
                p.grad = np.zeros_like(p.data)

def parameter(data, name: str = "") -> Tensor:
    data = _as_array(data)
    if data.size == 0:
        raise ConfigurationError(f"Parameter {name!r} has an empty shape {data.shape}.")
    return Tensor(data, requires_grad=True, name=name)
