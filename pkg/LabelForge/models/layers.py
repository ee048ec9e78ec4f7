# Copyright (C) 2023 Rémy Cases
# See LICENSE file for extended copyright information.
# This file is part of LabelForge project.

import numpy as np
from ..core.tensor import Tensor, parameter
from ..core import functional as F

def kaiming_uniform(shape: tuple, fan_in: int, rng: np.random.Generator) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)

class Module:
    training = True

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._buffers: dict[str, np.ndarray] = {}
        self._children: dict[str, "Module"] = {}

    def add_parameter(self, name: str, data: np.ndarray) -> Tensor:
        self._params[name] = parameter(data, name=name)
        return self._params[name]

    def add_child(self, name: str, module: "Module") -> "Module":
        self._children[name] = module
        return module

    def named_parameters(self, prefix: str = "") -> dict[str, Tensor]:
        named = {f"{prefix}{k}": v for k, v in self._params.items()}
        for name, child in self._children.items():
            named.update(child.named_parameters(f"{prefix}{name}."))
        return named

    def named_buffers(self, prefix: str = "") -> dict[str, np.ndarray]:
        named = {f"{prefix}{k}": v for k, v in self._buffers.items()}
        for name, child in self._children.items():
            named.update(child.named_buffers(f"{prefix}{name}."))
        return named

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())

    def parameter_count(self) -> int:
        return int(sum(p.data.size for p in self.parameters()))

    def train(self, mode: bool = True) -> "Module":
        self.training = mode
        for child in self._children.values():
            child.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def forward(self, x: Tensor) -> Tensor:
        raise NotImplementedError

    def __call__(self, x: Tensor) -> Tensor:
        return self.forward(x)

class Conv2d(Module):
    def __init__(self, in_channels: int, out_channels: int, kernel_size: int, rng: np.random.Generator,
                 stride: int = 1, padding: int = 0, bias: bool = True):
        super().__init__()
        self.stride = stride
        self.padding = padding
        fan_in = in_channels * kernel_size * kernel_size
        self.weight = self.add_parameter(
            "weight", kaiming_uniform((out_channels, in_channels, kernel_size, kernel_size), fan_in, rng))
        self.bias = self.add_parameter("bias", np.zeros(out_channels, dtype=np.float32)) if bias else None

    def forward(self, x):
        return F.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)

class Dense(Module):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, bias: bool = True):
        super().__init__()
        self.weight = self.add_parameter("weight", kaiming_uniform((in_features, out_features), in_features, rng))
        self.bias = self.add_parameter("bias", np.zeros(out_features, dtype=np.float32)) if bias else None

    def forward(self, x):
        return F.dense(x, self.weight, self.bias)

class BatchNorm(Module):
    def __init__(self, num_features: int):
        super().__init__()
        self.gamma = self.add_parameter("gamma", np.ones(num_features, dtype=np.float32))
        self.beta = self.add_parameter("beta", np.zeros(num_features, dtype=np.float32))
        self._buffers["running_mean"] = np.zeros(num_features, dtype=np.float32)
        self._buffers["running_var"] = np.ones(num_features, dtype=np.float32)

    def forward(self, x):
        return F.batchnorm(x, self.gamma, self.beta, self._buffers["running_mean"],
                           self._buffers["running_var"], training=self.training)

class ReLU(Module):
    def forward(self, x):
        return F.relu(x)

class MaxPool2(Module):
    def forward(self, x):
        return F.maxpool2(x)

class GlobalAvgPool(Module):
    def forward(self, x):
        return F.avgpool_global(x)

class Flatten(Module):
    def forward(self, x):
        return F.flatten(x)

class Sequential(Module):
    def __init__(self, *modules: Module):
        super().__init__()
        for i, module in enumerate(modules):
            self.add_child(str(i), module)

    def __len__(self):
        return len(self._children)

    def __iter__(self):
        return iter(self._children.values())

    def __getitem__(self, index: int) -> Module:
        return list(self._children.values())[index]

    def forward(self, x):
        for module in self._children.values():
            x = module(x)
        return x

class ResidualBlock(Module):
    """Pre-activation block, out = x + conv(relu(bn(conv(relu(bn(x)))))) with an identity shortcut."""

    def __init__(self, channels: int, rng: np.random.Generator):
        super().__init__()
        self.body = self.add_child("body", Sequential(
            BatchNorm(channels), ReLU(), Conv2d(channels, channels, 3, rng, padding=1, bias=False),
            BatchNorm(channels), ReLU(), Conv2d(channels, channels, 3, rng, padding=1, bias=False),
        ))

    def convolutions(self) -> list[Conv2d]:
        return [m for m in self.body if isinstance(m, Conv2d)]

    def forward(self, x):
        return x + self.body(x)
