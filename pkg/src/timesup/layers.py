"""Differentiable layers with hand-derived backward passes.

All layers accept arrays with arbitrary leading batch dimensions; the
documented shapes refer to the trailing axes.  Parameter gradients are summed
over every leading dimension.
"""

from __future__ import annotations

import numpy as np

from .grad import Layer
from .linalg import gelu_deriv, gelu_parts, gelu_value, softmax_rows


def _flat2(x: np.ndarray) -> np.ndarray:
    """Collapse all but the last axis."""
    return x.reshape(-1, x.shape[-1])


def _softmax_backward(upstream: np.ndarray, probs: np.ndarray) -> np.ndarray:
    return probs * (upstream - np.sum(upstream * probs, axis=-1, keepdims=True))


class Linear(Layer):
    """y = x @ w + b with x (..., a), w (a, b)."""

    input_names = ("x",)
    param_names = ("w", "b")

    def forward(self, inputs, params):
        x = inputs["x"]
        y = x @ params["w"] + params["b"]
        return y, (x, params["w"])

    def backward(self, upstream, cache):
        x, w = cache
        g2 = _flat2(upstream)
        dw = _flat2(x).T @ g2
        db = g2.sum(axis=0)
        dx = upstream @ w.T
        return {"x": dx}, {"w": dw, "b": db}


class PrototypeCombine(Layer):
    """Prototype bank: rows are linear combinations of the vocabulary table."""

    input_names = ()
    param_names = ("w_c", "e")

    def forward(self, inputs, params):
        w_c, e = params["w_c"], params["e"]
        return w_c @ e, (w_c, e)

    def backward(self, upstream, cache):
        w_c, e = cache
        return {}, {"w_c": upstream @ e.T, "e": w_c.T @ upstream}


class SoftmaxRows(Layer):
    input_names = ("x",)
    param_names = ()

    def forward(self, inputs, params):
        y = softmax_rows(inputs["x"])
        return y, (y,)

    def backward(self, upstream, cache):
        (y,) = cache
        return {"x": _softmax_backward(upstream, y)}, {}


class SelectionAttention(Layer):
    """Asymmetric cross-attention scores between tokens and prototype keys.

    Produces the full softmax weight matrix (..., N, P); the hard top-K pick
    that consumes it is not differentiable, so this is the surrogate the
    gradient checker exercises.
    """

    input_names = ("tokens", "prototypes")
    param_names = ("w_q", "w_k")

    def forward(self, inputs, params):
        tokens, protos = inputs["tokens"], inputs["prototypes"]
        w_q, w_k = params["w_q"], params["w_k"]
        d = tokens.shape[-1]
        scale = 1.0 / np.sqrt(d)
        q = tokens @ w_q
        k = protos @ w_k
        weights = softmax_rows((q @ k.T) * scale)
        return weights, (tokens, protos, w_q, w_k, q, k, weights, scale)

    def backward(self, upstream, cache):
        tokens, protos, w_q, w_k, q, k, weights, scale = cache
        dz = _softmax_backward(upstream, weights) * scale
        dq = dz @ k
        # dz (..., N, P): dk[p] = sum over batch/tokens of dz[..., n, p] * q[..., n, :]
        dk = _flat2(dz).T @ _flat2(q)
        dw_q = _flat2(tokens).T @ _flat2(dq)
        dtokens = dq @ w_q.T
        dw_k = protos.T @ dk
        dprotos = dk @ w_k.T
        return ({"tokens": dtokens, "prototypes": dprotos},
                {"w_q": dw_q, "w_k": dw_k})


class TokenMixer(Layer):
    """Compress the token axis: (..., M, d) -> (..., n, d), GELU on the way out."""

    input_names = ("stack",)
    param_names = ("m_c",)

    def __init__(self, activation: bool = True):
        self.activation = activation

    def forward(self, inputs, params):
        stack = inputs["stack"]
        m_c = params["m_c"]
        u = np.einsum("mn,...md->...nd", m_c, stack)
        if self.activation:
            t, x2 = gelu_parts(u)
            y = gelu_value(u, t)
        else:
            t = x2 = None
            y = u
        return y, (stack, m_c, u, t, x2)

    def backward(self, upstream, cache):
        stack, m_c, u, t, x2 = cache
        du = upstream * gelu_deriv(u, t, x2) if self.activation else upstream
        stack3 = stack.reshape(-1, *stack.shape[-2:])
        du3 = du.reshape(-1, *du.shape[-2:])
        dm_c = np.einsum("bmd,bnd->mn", stack3, du3)
        dstack = np.einsum("mn,...nd->...md", m_c, du)
        return {"stack": dstack}, {"m_c": dm_c}


class FeatureMixer(Layer):
    """Mix the feature axis: y = x @ m_f^T with m_f (d, d)."""

    input_names = ("x",)
    param_names = ("m_f",)

    def forward(self, inputs, params):
        x = inputs["x"]
        m_f = params["m_f"]
        return x @ m_f.T, (x, m_f)

    def backward(self, upstream, cache):
        x, m_f = cache
        dm_f = _flat2(upstream).T @ _flat2(x)
        dx = upstream @ m_f
        return {"x": dx}, {"m_f": dm_f}


class LayerNorm(Layer):
    """Row-wise layer norm over the last axis, biased variance."""

    input_names = ("x",)
    param_names = ("g", "b")

    def __init__(self, eps: float = 1e-5):
        self.eps = eps

    def forward(self, inputs, params):
        x = inputs["x"]
        mean = x.mean(axis=-1, keepdims=True)
        centered = x - mean
        var = np.mean(centered**2, axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = centered * inv
        y = params["g"] * xhat + params["b"]
        return y, (xhat, inv, params["g"])

    def backward(self, upstream, cache):
        xhat, inv, g = cache
        up2 = _flat2(upstream)
        db = up2.sum(axis=0)
        dg = (up2 * _flat2(xhat)).sum(axis=0)
        dxhat = upstream * g
        dx = inv * (dxhat
                    - dxhat.mean(axis=-1, keepdims=True)
                    - xhat * np.mean(dxhat * xhat, axis=-1, keepdims=True))
        return {"x": dx}, {"g": dg, "b": db}


class MultiHeadAttention(Layer):
    """Fused-QKV bidirectional attention block (no causal mask)."""

    input_names = ("x",)
    param_names = ("w_qkv", "b_qkv", "w_o", "b_o")

    def __init__(self, heads: int):
        self.heads = heads

    def _split(self, t: np.ndarray) -> np.ndarray:
        h = self.heads
        hd = t.shape[-1] // h
        t = t.reshape(*t.shape[:-1], h, hd)
        return np.moveaxis(t, -2, -3)  # (..., h, N, hd)

    def _merge(self, t: np.ndarray) -> np.ndarray:
        t = np.moveaxis(t, -3, -2)
        return t.reshape(*t.shape[:-2], -1)

    def forward(self, inputs, params):
        x = inputs["x"]
        d = x.shape[-1]
        if d % self.heads != 0:
            raise ValueError(f"width {d} not divisible by heads {self.heads}")
        qkv = x @ params["w_qkv"] + params["b_qkv"]
        q, k, v = (self._split(t) for t in np.split(qkv, 3, axis=-1))
        scale = 1.0 / np.sqrt(d // self.heads)
        scores = (q @ np.swapaxes(k, -1, -2)) * scale
        attn = softmax_rows(scores)
        ctx = self._merge(attn @ v)
        y = ctx @ params["w_o"] + params["b_o"]
        cache = (x, q, k, v, attn, ctx, params["w_qkv"], params["w_o"], scale)
        return y, cache

    def backward(self, upstream, cache):
        x, q, k, v, attn, ctx, w_qkv, w_o, scale = cache
        up2 = _flat2(upstream)
        dw_o = _flat2(ctx).T @ up2
        db_o = up2.sum(axis=0)
        dctx = self._split(upstream @ w_o.T)
        dattn = dctx @ np.swapaxes(v, -1, -2)
        dv = np.swapaxes(attn, -1, -2) @ dctx
        dscores = _softmax_backward(dattn, attn) * scale
        dq = dscores @ k
        dk = np.swapaxes(dscores, -1, -2) @ q
        dqkv = np.concatenate([self._merge(t) for t in (dq, dk, dv)], axis=-1)
        dqkv2 = _flat2(dqkv)
        dw_qkv = _flat2(x).T @ dqkv2
        db_qkv = dqkv2.sum(axis=0)
        dx = dqkv @ w_qkv.T
        return ({"x": dx},
                {"w_qkv": dw_qkv, "b_qkv": db_qkv, "w_o": dw_o, "b_o": db_o})


class FeedForward(Layer):
    """Two-layer GELU MLP (d -> f -> d)."""

    input_names = ("x",)
    param_names = ("w_in", "b_in", "w_out", "b_out")

    def forward(self, inputs, params):
        x = inputs["x"]
        pre = x @ params["w_in"] + params["b_in"]
        t, x2 = gelu_parts(pre)
        act = gelu_value(pre, t)
        y = act @ params["w_out"] + params["b_out"]
        return y, (x, pre, t, x2, act, params["w_in"], params["w_out"])

    def backward(self, upstream, cache):
        x, pre, t, x2, act, w_in, w_out = cache
        up2 = _flat2(upstream)
        dw_out = _flat2(act).T @ up2
        db_out = up2.sum(axis=0)
        dact = upstream @ w_out.T
        dpre = dact * gelu_deriv(pre, t, x2)
        dpre2 = _flat2(dpre)
        dw_in = _flat2(x).T @ dpre2
        db_in = dpre2.sum(axis=0)
        dx = dpre @ w_in.T
        return {"x": dx}, {"w_in": dw_in, "b_in": db_in,
                           "w_out": dw_out, "b_out": db_out}


class FlattenLinear(Layer):
    """Flatten the trailing (n, d) token grid row-major, then affine-map to H."""

    input_names = ("x",)
    param_names = ("w", "b")

    def forward(self, inputs, params):
        x = inputs["x"]
        flat = x.reshape(*x.shape[:-2], x.shape[-2] * x.shape[-1])
        y = flat @ params["w"] + params["b"]
        return y, (x.shape, flat, params["w"])

    def backward(self, upstream, cache):
        x_shape, flat, w = cache
        g2 = _flat2(upstream)
        dw = _flat2(flat).T @ g2
        db = g2.sum(axis=0)
        dx = (upstream @ w.T).reshape(x_shape)
        return {"x": dx}, {"w": dw, "b": db}


def dropout_mask(rng, shape: tuple[int, ...], p: float) -> np.ndarray:
    """Inverted-dropout mask: zeros with probability p, survivors scaled by 1/(1-p)."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if p == 0.0:
        return np.ones(shape)
    size = int(np.prod(shape))
    keep = (rng.uniform(size).reshape(shape) >= p)
    return keep / (1.0 - p)
