"""frametag: desk-scale multi-label sequence tagging toolkit.

A numpy-only library of mixture-of-experts classifiers, recurrent
sequence encoders, attention/VLAD aggregation, a 1D residual network,
ranking metrics, and per-class ensemble fusion, plus synthetic data to
train and verify everything on.
"""

from .tensor import Tensor, as_tensor, no_grad, stop_gradient
from .functional import (
    sigmoid,
    softmax,
    sigmoid_cross_entropy,
    smoothed_softmax_loss,
    binary_cross_entropy,
)
from .optim import AdamState, adam_step, zero_grads
from .gradcheck import grad_check

__version__ = "0.1.0"

__all__ = [
    "Tensor",
    "as_tensor",
    "no_grad",
    "stop_gradient",
    "sigmoid",
    "softmax",
    "sigmoid_cross_entropy",
    "smoothed_softmax_loss",
    "binary_cross_entropy",
    "AdamState",
    "adam_step",
    "zero_grads",
    "grad_check",
    "__version__",
]
