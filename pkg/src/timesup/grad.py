"""Parameters, the layer forward/backward contract, Adam, and a gradient checker.

There is no autograd tape: every layer ships a hand-derived backward pass,
and `finite_diff_check` validates it against central differences on a random
linear functional of the layer output.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rng import Rng


@dataclass
class Param:
    name: str
    value: np.ndarray
    grad: np.ndarray = field(default=None)  # type: ignore[assignment]
    trainable: bool = True

    def __post_init__(self):
        self.value = np.asarray(self.value, dtype=np.float64)
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        else:
            self.grad = np.asarray(self.grad, dtype=np.float64)
        if self.grad.shape != self.value.shape:
            raise ValueError(
                f"param {self.name}: grad shape {self.grad.shape} != value shape {self.value.shape}"
            )


class AdamState:
    """Per-parameter first/second moments plus a shared step counter."""

    def __init__(self, params: dict[str, Param], beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(p.value) for name, p in params.items()}
        self.v = {name: np.zeros_like(p.value) for name, p in params.items()}


def adam_step(params: dict[str, Param], state: AdamState, lr: float) -> None:
    """One bias-corrected Adam update on trainable params; grads are zeroed after."""
    if lr < 0:
        raise ValueError(f"learning rate must be nonnegative, got {lr}")
    for name, p in params.items():
        if not np.isfinite(p.grad).all():
            raise RuntimeError(f"non-finite gradient in param {name!r}; aborting step")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for name, p in params.items():
        if p.trainable:
            g = p.grad
            m = state.m[name]
            v = state.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.value -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        p.grad[...] = 0.0


class Layer:
    """Forward/backward contract shared by every differentiable layer.

    forward(inputs, params) -> (output, cache); backward(upstream, cache) ->
    (input grads, param grads), where backward consumes exactly the cache of
    the immediately preceding forward.  Both dicts are keyed by tensor name.
    """

    input_names: tuple[str, ...] = ()
    param_names: tuple[str, ...] = ()

    def forward(self, inputs: dict[str, np.ndarray],
                params: dict[str, np.ndarray]) -> tuple[np.ndarray, tuple]:
        raise NotImplementedError

    def backward(self, upstream: np.ndarray,
                 cache: tuple) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray]]:
        raise NotImplementedError


def finite_diff_check(layer: Layer, inputs: dict[str, np.ndarray],
                      params: dict[str, np.ndarray], eps: float = 1e-5,
                      rng: Rng | None = None) -> float:
    """Max relative error between analytic and central-difference gradients.

    Probes a random linear functional r . output instead of the full Jacobian,
    so cost is O(#coordinates) forwards.
    """
    if rng is None:
        rng = Rng(0)
    inputs = {k: np.asarray(v, dtype=np.float64).copy() for k, v in inputs.items()}
    params = {k: np.asarray(v, dtype=np.float64).copy() for k, v in params.items()}
    out, cache = layer.forward(inputs, params)
    z = rng.normal_matrix(out.shape)
    # keep the projected functional ~3e-3 so float64 round-off in the central
    # difference sits below the 1e-8 relative-error floor even for
    # structurally-zero gradient coordinates (e.g. attention key bias)
    r = z * (3e-3 / (np.linalg.norm(z) * max(1.0, np.linalg.norm(out))))
    d_inputs, d_params = layer.backward(r, cache)

    def project(tensors):
        o, _ = layer.forward(inputs, params)
        return float(np.sum(r * o))

    worst = 0.0
    for pool, grads in ((inputs, d_inputs), (params, d_params)):
        for name, tensor in pool.items():
            analytic = grads[name]
            flat = tensor.ravel()
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                f_plus = project(pool)
                flat[i] = orig - eps
                f_minus = project(pool)
                flat[i] = orig
                numeric = (f_plus - f_minus) / (2.0 * eps)
                a = analytic.ravel()[i]
                rel = abs(a - numeric) / max(1e-8, abs(a), abs(numeric))
                worst = max(worst, rel)
    return worst
