"""Dense ELU networks with hand-written backward passes."""
from __future__ import annotations

from typing import Sequence

import numpy as np


def elu(x):
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0)))


def elu_grad(x):
    return np.where(x > 0, 1.0, np.exp(np.minimum(x, 0))).astype(x.dtype, copy=False)


def init_mlp(sizes: Sequence[int], rng: np.random.Generator, dtype=np.float32, final_scale: float = 0.01):
    """He-style init; the last layer is scaled by ``final_scale`` (0 gives exact zeros)."""
    params = []
    for k, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        last = k == len(sizes) - 2
        std = np.sqrt(2.0 / fan_in) * (final_scale if last else 1.0)
        w = (rng.standard_normal((fan_in, fan_out)) * std).astype(dtype)
        params += [w, np.zeros(fan_out, dtype=dtype)]
    return params


def mlp_forward(params, x):
    """Returns the output and the pre-activations needed by ``mlp_backward``."""
    cache = [x]
    h = x
    n = len(params) // 2
    for k in range(n):
        z = h @ params[2 * k] + params[2 * k + 1]
        if k < n - 1:
            cache.append(z)
            h = elu(z)
        else:
            h = z
    return h, cache


def mlp_backward(params, cache, grad_out):
    """Gradients of sum(grad_out * output) w.r.t. every parameter, in ``params`` order."""
    n = len(params) // 2
    grads = [None] * len(params)
    g = grad_out
    for k in range(n - 1, -1, -1):
        h_in = cache[0] if k == 0 else elu(cache[k])
        grads[2 * k] = h_in.T @ g
        grads[2 * k + 1] = g.sum(axis=0)
        if k > 0:
            g = (g @ params[2 * k].T) * elu_grad(cache[k])
    return grads


def layer_shapes(params):
    return [tuple(p.shape) for p in params]
