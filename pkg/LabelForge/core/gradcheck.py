# Copyright (C) 2023 Rémy Cases
# See LICENSE file for extended copyright information.
# This file is part of LabelForge project.

# Central finite-difference oracle for the autodiff engine. Coordinates whose
# perturbation flips a relu mask or a pooling argmax are skipped since the
# function is not differentiable inside that interval.

from typing import Callable, Iterable, NamedTuple
import numpy as np
from .tensor import Tensor, ComputationGraph, backward

DEFAULT_STEP = 1e-3

class GradCheck(NamedTuple):
    max_relative_error: float
    checked: int
    skipped: int

def _signature(loss: Tensor) -> list[bytes]:
    return [np.ascontiguousarray(p).tobytes() for p in ComputationGraph.from_root(loss).patterns()]

def analytic_gradients(fn: Callable[[], Tensor], tensors: list[Tensor]) -> list[np.ndarray]:
    for t in tensors:
        t.grad = None
    backward(fn(), tensors)
    return [t.grad.astype(np.float64) for t in tensors]

def numerical_gradient(fn: Callable[[], Tensor], tensor: Tensor, h: float = DEFAULT_STEP,
                       indices: Iterable[tuple] | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Central differences at `indices` (every coordinate by default); the mask marks the smooth ones."""
    reference = _signature(fn())
    grad = np.zeros(tensor.shape, dtype=np.float64)
    smooth = np.zeros(tensor.shape, dtype=bool)
    for idx in (np.ndindex(*tensor.shape) if indices is None else indices):
        original = tensor.data[idx]
        tensor.data[idx] = original + h
        plus = fn()
        tensor.data[idx] = original - h
        minus = fn()
        tensor.data[idx] = original
        if _signature(plus) != reference or _signature(minus) != reference:
            continue
        grad[idx] = (float(plus.item()) - float(minus.item())) / (2 * h)
        smooth[idx] = True
    return grad, smooth

def sample_coordinates(shape: tuple, count: int, rng: np.random.Generator) -> list[tuple]:
    size = int(np.prod(shape))
    picked = np.sort(rng.choice(size, size=min(count, size), replace=False))
    return [tuple(int(i) for i in np.unravel_index(flat, shape)) for flat in picked]

def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.max(np.abs(analytic), initial=0.0), np.max(np.abs(numeric), initial=0.0), 1e-12)
    return float(np.max(np.abs(analytic - numeric), initial=0.0) / scale)

def check_gradients(fn: Callable[[], Tensor], tensors: list[Tensor], h: float = DEFAULT_STEP,
                    per_tensor: int | None = None, rng: np.random.Generator | None = None) -> GradCheck:
    '''
    Compare backward() against central differences.

    per_tensor limits the check to that many random coordinates of every
    tensor, drawn from rng; by default every coordinate is perturbed.
    '''
    analytic = analytic_gradients(fn, tensors)
    rng = rng if rng is not None else np.random.default_rng(0)
    worst, checked, skipped = 0.0, 0, 0
    for tensor, grad in zip(tensors, analytic):
        indices = None if per_tensor is None else sample_coordinates(tensor.shape, per_tensor, rng)
        numeric, smooth = numerical_gradient(fn, tensor, h, indices)
        tried = tensor.data.size if indices is None else len(indices)
        checked += int(smooth.sum())
        skipped += tried - int(smooth.sum())
        if smooth.any():
            worst = max(worst, relative_error(grad[smooth], numeric[smooth]))
    return GradCheck(max_relative_error=worst, checked=checked, skipped=skipped)
