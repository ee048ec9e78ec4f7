# Copyright (C) 2023 Rémy Cases
# See LICENSE file for extended copyright information.
# This file is part of LabelForge project.

from .tensor import Tensor, ComputationGraph, backward, no_grad, parameter, concatenate
from .functional import (conv2d, dense, relu, maxpool2, avgpool_global, batchnorm, flatten,
                         softmax, log_softmax, softmax_cross_entropy, l2_normalize, layer_forward)
from .optim import SgdConfig, Sgd, sgd_step
