"""Gradient checks for every shipped layer, plus layer-specific behavior."""

import numpy as np
import pytest

from timesup.grad import finite_diff_check
from timesup.layers import (FeatureMixer, FeedForward, FlattenLinear, LayerNorm,
                            Linear, MultiHeadAttention, PrototypeCombine,
                            SelectionAttention, SoftmaxRows, TokenMixer,
                            dropout_mask)
from timesup.rng import Rng

SEEDS = (0, 1, 2)


def _n(rng, *shape):
    return rng.normal(int(np.prod(shape))).reshape(shape)


def layer_cases(seed):
    """(layer, inputs, params) probes at small dims for the gradient suite."""
    rng = Rng(seed)
    d, heads, f = 8, 2, 16
    cases = [
        ("patch_embed", Linear(),
         {"x": _n(rng, 2, 3, 4)}, {"w": _n(rng, 4, d), "b": _n(rng, d)}),
        ("prototype_combine", PrototypeCombine(),
         {}, {"w_c": _n(rng, 5, 7), "e": _n(rng, 7, d)}),
        ("selection_softmax", SelectionAttention(),
         {"tokens": _n(rng, 2, 3, d), "prototypes": _n(rng, 5, d)},
         {"w_q": _n(rng, d, d), "w_k": _n(rng, d, d)}),
        ("token_mixer", TokenMixer(),
         {"stack": _n(rng, 2, 6, d)}, {"m_c": _n(rng, 6, 2)}),
        ("feature_mixer", FeatureMixer(),
         {"x": _n(rng, 2, 2, d)}, {"m_f": _n(rng, d, d)}),
        ("layer_norm", LayerNorm(),
         {"x": _n(rng, 2, 3, d)}, {"g": 1.0 + 0.1 * _n(rng, d), "b": 0.1 * _n(rng, d)}),
        ("mha", MultiHeadAttention(heads),
         {"x": _n(rng, 2, 3, d)},
         {"w_qkv": _n(rng, d, 3 * d), "b_qkv": _n(rng, 3 * d),
          "w_o": _n(rng, d, d), "b_o": _n(rng, d)}),
        ("ffn", FeedForward(),
         {"x": _n(rng, 2, 3, d)},
         {"w_in": _n(rng, d, f), "b_in": _n(rng, f),
          "w_out": _n(rng, f, d), "b_out": _n(rng, d)}),
        ("head", FlattenLinear(),
         {"x": _n(rng, 2, 3, d)}, {"w": _n(rng, 3 * d, 5), "b": _n(rng, 5)}),
        ("softmax_rows", SoftmaxRows(), {"x": _n(rng, 3, 6)}, {}),
    ]
    return cases


@pytest.mark.parametrize("seed", SEEDS)
def test_every_layer_passes_gradient_check(seed):
    for name, layer, inputs, params in layer_cases(seed):
        err = finite_diff_check(layer, inputs, params, rng=Rng(seed + 100))
        assert err < 1e-4, f"{name} gradient check failed: {err:.3e}"


def test_linear_is_affine():
    rng = Rng(7)
    layer = Linear()
    x = _n(rng, 4, 3)
    w, b = _n(rng, 3, 5), _n(rng, 5)
    y, _ = layer.forward({"x": x}, {"w": w, "b": b})
    assert np.allclose(y, x @ w + b)


def test_token_mixer_contracts_token_axis():
    rng = Rng(8)
    stack = _n(rng, 4, 10, 6)
    m_c = _n(rng, 10, 3)
    y, _ = TokenMixer(activation=False).forward({"stack": stack}, {"m_c": m_c})
    assert y.shape == (4, 3, 6)
    # row n of the output is sum_m m_c[m, n] * stack[m]
    manual = np.einsum("mn,bmd->bnd", m_c, stack)
    assert np.allclose(y, manual)


def test_mha_zero_output_projection_is_zero_map():
    rng = Rng(9)
    d = 8
    layer = MultiHeadAttention(2)
    params = {"w_qkv": _n(rng, d, 3 * d), "b_qkv": _n(rng, 3 * d),
              "w_o": np.zeros((d, d)), "b_o": np.zeros(d)}
    y, _ = layer.forward({"x": _n(rng, 2, 4, d)}, params)
    assert np.all(y == 0.0)


def test_mha_rejects_bad_head_count():
    layer = MultiHeadAttention(3)
    with pytest.raises(ValueError, match="divisible"):
        layer.forward({"x": np.zeros((1, 2, 8))},
                      {"w_qkv": np.zeros((8, 24)), "b_qkv": np.zeros(24),
                       "w_o": np.zeros((8, 8)), "b_o": np.zeros(8)})


def test_dropout_mask_statistics_and_determinism():
    mask1 = dropout_mask(Rng(10), (100, 100), 0.3)
    mask2 = dropout_mask(Rng(10), (100, 100), 0.3)
    assert np.array_equal(mask1, mask2)
    zero_rate = np.mean(mask1 == 0.0)
    assert abs(zero_rate - 0.3) < 0.02
    kept = mask1[mask1 != 0.0]
    assert np.allclose(kept, 1.0 / 0.7)


def test_dropout_zero_probability_is_identity():
    assert np.all(dropout_mask(None, (3, 3), 0.0) == 1.0)


def test_dropout_rejects_bad_probability():
    with pytest.raises(ValueError):
        dropout_mask(Rng(0), (2,), 1.0)
