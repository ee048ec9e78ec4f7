# Copyright (C) 2023 Rémy Cases
# See LICENSE file for extended copyright information.
# This file is part of LabelForge project.

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from .tensor import Tensor
from .classutils import LayerKind
from ..errors import ConfigurationError, InputError

BATCHNORM_MOMENTUM = 0.9
BATCHNORM_EPS = 1e-5

def conv2d(x: Tensor, kernel: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    if x.ndim != 4 or kernel.ndim != 4:
        raise ConfigurationError(f"conv2d expects 4-d input and kernel, got {x.shape} and {kernel.shape}.")
    n, c, h, w = x.shape
    f, kc, kh, kw = kernel.shape
    if kc != c:
        raise ConfigurationError(f"Kernel has {kc} input channels but input has {c}.")
    if stride < 1 or padding < 0:
        raise ConfigurationError(f"Invalid stride {stride} or padding {padding}.")
    if kh > h + 2 * padding or kw > w + 2 * padding:
        raise ConfigurationError(f"Kernel {kh}x{kw} larger than padded input {h + 2 * padding}x{w + 2 * padding}.")

    h_out = (h + 2 * padding - kh) // stride + 1
    w_out = (w + 2 * padding - kw) // stride + 1
    padded = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    windows = sliding_window_view(padded, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    out = np.tensordot(windows, kernel.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.data.reshape(1, f, 1, 1)
    out = np.ascontiguousarray(out, dtype=x.dtype)

    def backward(g):
        kernel._accumulate(np.tensordot(g, windows, axes=([0, 2, 3], [0, 2, 3])))
        if bias is not None:
            bias._accumulate(np.sum(g, axis=(0, 2, 3), dtype=np.float64))
        if x.requires_grad:
            cols = np.tensordot(g, kernel.data, axes=([1], [0]))  # n, h_out, w_out, c, kh, kw
            grad = np.zeros_like(padded)
            for i in range(kh):
                for j in range(kw):
                    grad[:, :, i:i + stride * h_out:stride, j:j + stride * w_out:stride] += \
                        cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            x._accumulate(grad[:, :, padding:padding + h, padding:padding + w])

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    return Tensor._make(out, parents, "conv2d", backward)

def dense(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise ConfigurationError(f"dense cannot map input {x.shape} with weight {weight.shape}.")
    out = x @ weight
    return out if bias is None else out + bias

def relu(x: Tensor) -> Tensor:
    return x.relu()

def maxpool2(x: Tensor) -> Tensor:
    if x.ndim != 4 or x.shape[2] < 2 or x.shape[3] < 2:
        raise ConfigurationError(f"maxpool2 expects a 4-d input with spatial size >= 2, got {x.shape}.")
    n, c, h, w = x.shape
    h2, w2 = h // 2, w // 2
    cropped = x.data[:, :, :2 * h2, :2 * w2]
    blocks = cropped.reshape(n, c, h2, 2, w2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2, w2, 4)
    argmax = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, argmax[..., None], axis=-1)[..., 0]

    def backward(g):
        grad_blocks = np.zeros_like(blocks)
        np.put_along_axis(grad_blocks, argmax[..., None], g[..., None], axis=-1)
        grad = np.zeros_like(x.data)
        grad[:, :, :2 * h2, :2 * w2] = grad_blocks.reshape(n, c, h2, w2, 2, 2) \
            .transpose(0, 1, 2, 4, 3, 5).reshape(n, c, 2 * h2, 2 * w2)
        x._accumulate(grad)

    result = Tensor._make(out, (x,), "maxpool2", backward)
    result._pattern = argmax
    return result

def avgpool_global(x: Tensor) -> Tensor:
    if x.ndim != 4:
        raise ConfigurationError(f"avgpool_global expects a 4-d input, got {x.shape}.")
    return x.mean(axis=(2, 3))

def flatten(x: Tensor) -> Tensor:
    if x.ndim < 2:
        raise ConfigurationError(f"flatten expects a batched input, got {x.shape}.")
    return x.reshape(x.shape[0], -1)

def batchnorm(x: Tensor, gamma: Tensor, beta: Tensor,
              running_mean: np.ndarray | None = None, running_var: np.ndarray | None = None,
              training: bool = True, momentum: float = BATCHNORM_MOMENTUM, eps: float = BATCHNORM_EPS) -> Tensor:
    if x.ndim not in (2, 4) or x.shape[1] != gamma.shape[0]:
        raise ConfigurationError(f"batchnorm over {gamma.shape[0]} features cannot take input {x.shape}.")
    axes = (0,) if x.ndim == 2 else (0, 2, 3)
    shape = (1, -1) if x.ndim == 2 else (1, -1, 1, 1)
    if not training:
        if running_mean is None or running_var is None:
            raise ConfigurationError("batchnorm in evaluation mode needs running statistics.")
        scale = (1.0 / np.sqrt(running_var.astype(np.float64) + eps)).astype(x.dtype).reshape(shape)
        centered = x - Tensor(running_mean.reshape(shape).astype(x.dtype))
        return centered * Tensor(scale) * gamma.reshape(shape) + beta.reshape(shape)

    count = x.data.size // x.shape[1]
    mean = np.mean(x.data, axis=axes, keepdims=True, dtype=np.float64)
    var = np.mean((x.data - mean) ** 2, axis=axes, keepdims=True, dtype=np.float64)
    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = ((x.data - mean) * inv_std).astype(x.dtype)
    out = x_hat * gamma.data.reshape(shape) + beta.data.reshape(shape)

    if running_mean is not None and running_var is not None:
        unbiased = var * count / max(count - 1, 1)
        running_mean[...] = momentum * running_mean + (1 - momentum) * mean.reshape(-1)
        running_var[...] = momentum * running_var + (1 - momentum) * unbiased.reshape(-1)

    def backward(g):
        gamma._accumulate(np.sum(g * x_hat, axis=axes, dtype=np.float64))
        beta._accumulate(np.sum(g, axis=axes, dtype=np.float64))
        if x.requires_grad:
            dy = g * gamma.data.reshape(shape)
            sum_dy = np.sum(dy, axis=axes, keepdims=True, dtype=np.float64)
            sum_dy_xhat = np.sum(dy * x_hat, axis=axes, keepdims=True, dtype=np.float64)
            x._accumulate(inv_std / count * (count * dy - sum_dy - x_hat * sum_dy_xhat))

    return Tensor._make(out.astype(x.dtype), (x, gamma, beta), "batchnorm", backward)

def _log_softmax_values(values: np.ndarray) -> np.ndarray:
    shifted = values.astype(np.float64) - np.max(values, axis=-1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))

def softmax(x: Tensor) -> Tensor:
    probs = np.exp(_log_softmax_values(x.data))
    probs = probs / np.sum(probs, axis=-1, keepdims=True)
    out = probs.astype(x.dtype)

    def backward(g):
        x._accumulate(out * (g - np.sum(g * out, axis=-1, keepdims=True, dtype=np.float64)))

    return Tensor._make(out, (x,), "softmax", backward)

def log_softmax(x: Tensor) -> Tensor:
    values = _log_softmax_values(x.data)
    probs = np.exp(values)

    def backward(g):
        x._accumulate(g - probs * np.sum(g, axis=-1, keepdims=True, dtype=np.float64))

    return Tensor._make(values.astype(x.dtype), (x,), "log_softmax", backward)

def softmax_cross_entropy(logits: Tensor, targets) -> Tensor:
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    if logits.ndim != 2 or logits.shape[0] != targets.shape[0]:
        raise InputError(f"Logits {logits.shape} do not match {targets.shape[0]} targets.")
    n, c = logits.shape
    if n == 0:
        raise InputError("Cross-entropy over an empty batch.")
    if np.any(targets < 0) or np.any(targets >= c):
        raise InputError(f"Targets must lie in [0, {c}), got {np.unique(targets).tolist()}.")
    log_probs = _log_softmax_values(logits.data)
    rows = np.arange(n)
    loss = -np.mean(log_probs[rows, targets])

    def backward(g):
        grad = np.exp(log_probs)
        grad[rows, targets] -= 1.0
        logits._accumulate(grad * (float(g) / n))

    return Tensor._make(np.asarray(loss, dtype=logits.dtype), (logits,), "cross_entropy", backward)

def l2_normalize(x: Tensor, eps: float = 1e-12) -> Tensor:
    norms = np.sqrt(np.sum(x.data.astype(np.float64) ** 2, axis=-1, keepdims=True))
    norms = np.maximum(norms, eps)
    out = (x.data / norms).astype(x.dtype)

    def backward(g):
        x._accumulate((g - out * np.sum(g * out, axis=-1, keepdims=True, dtype=np.float64)) / norms)

    return Tensor._make(out, (x,), "l2_normalize", backward)

def _check_params(kind: LayerKind, params, count: int):
    if params is None or len(params) < count:
        raise ConfigurationError(f"{kind.name} needs {count} parameter tensors.")

def layer_forward(kind: LayerKind | str, x: Tensor, params: list[Tensor] | None = None) -> Tensor:
    '''
    Forward one layer of the given kind.

    Parameters
    ----------
    kind : LayerKind or str
        One of dense, relu, maxpool2, avgpool_global, batchnorm, flatten, softmax.
    x : Tensor
        Layer input.
    params : list of Tensor, optional
        [weight, bias] for dense, [gamma, beta] for batchnorm (batch statistics).

    Raises
    ------
    ConfigurationError
        If the kind is unknown or the input shape does not fit the layer.
    '''
    if isinstance(kind, str):
        try:
            kind = LayerKind[kind]
        except KeyError:
            raise ConfigurationError(f"Wrong layer kind {kind!r}, possible kinds are "
                                     f"{', '.join(k.name for k in LayerKind)}.") from None

    if kind == LayerKind.dense:
        _check_params(kind, params, 1)
        return dense(x, params[0], params[1] if len(params) > 1 else None)
    elif kind == LayerKind.relu:
        return relu(x)
    elif kind == LayerKind.maxpool2:
        return maxpool2(x)
    elif kind == LayerKind.avgpool_global:
        return avgpool_global(x)
    elif kind == LayerKind.batchnorm:
        _check_params(kind, params, 2)
        return batchnorm(x, params[0], params[1])
    elif kind == LayerKind.flatten:
        return flatten(x)
    elif kind == LayerKind.softmax:
        return softmax(x)
