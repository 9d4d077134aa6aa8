"""Central finite-difference checking for analytic gradients.

Any differentiable operation in the package is tested by comparing the
tape's backward pass against central differences at double precision.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, no_grad


def grad_check(fn, inputs: dict[str, np.ndarray], eps_scale: float = 1e-5,
               projection_seed: int = 0) -> float:
    """Max relative error between analytic and numeric gradients.

    ``fn`` maps a dict of Tensors to an output Tensor. Non-scalar outputs
    are contracted with a fixed random projection so the full Jacobian
    action is exercised. The step per parameter entry is
    ``eps_scale * max(1, |theta|)``.
    """
    tensors = {k: Tensor(np.asarray(v, dtype=np.float64), requires_grad=True)
               for k, v in inputs.items()}
    out = fn(tensors)
    if out.size == 1:
        proj = None
        scalar = out if out.ndim == 0 else out.reshape(())
    else:
        rng = np.random.default_rng(projection_seed)
        proj = rng.standard_normal(out.shape)
        scalar = (out * Tensor(proj)).sum()
    scalar.backward()
    analytic = {k: t.grad_array() for k, t in tensors.items()}

    def evaluate(values: dict[str, np.ndarray]) -> float:
        with no_grad():
            res = fn({k: Tensor(v) for k, v in values.items()})
        if proj is None:
            return float(res.data)
        return float((res.data * proj).sum())

    values = {k: np.asarray(v, dtype=np.float64).copy() for k, v in inputs.items()}
    worst = 0.0
    for name, base in values.items():
        flat = base.reshape(-1)
        a_flat = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            eps = eps_scale * max(1.0, abs(orig))
            flat[i] = orig + eps
            hi = evaluate(values)
            flat[i] = orig - eps
            lo = evaluate(values)
            flat[i] = orig
            numeric = (hi - lo) / (2.0 * eps)
            denom = max(1.0, abs(a_flat[i]), abs(numeric))
            worst = max(worst, abs(a_flat[i] - numeric) / denom)
    return worst
