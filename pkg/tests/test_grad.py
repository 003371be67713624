import numpy as np
import pytest

from timesup.grad import AdamState, Param, adam_step, finite_diff_check
from timesup.layers import LayerNorm, Linear, SoftmaxRows
from timesup.rng import Rng


def make_params(**arrays):
    return {name: Param(name=name, value=np.asarray(v, dtype=np.float64))
            for name, v in arrays.items()}


class TestAdam:
    def test_hand_first_step(self):
        params = make_params(w=[0.0])
        params["w"].grad[...] = 1.0
        adam_step(params, AdamState(params), lr=0.1)
        assert params["w"].value[0] == pytest.approx(-0.1, abs=1e-4)

    def test_frozen_param_bit_identical(self):
        params = make_params(w=[1.5, -2.0])
        params["w"].trainable = False
        before = params["w"].value.tobytes()
        params["w"].grad[...] = 3.0
        adam_step(params, AdamState(params), lr=0.5)
        assert params["w"].value.tobytes() == before
        assert np.all(params["w"].grad == 0.0)  # grads still zeroed

    def test_zero_grad_is_noop(self):
        params = make_params(w=[0.7, 0.3])
        state = AdamState(params)
        for _ in range(5):
            adam_step(params, state, lr=0.1)
        assert np.abs(params["w"].value - [0.7, 0.3]).max() < 1e-15

    def test_lr_zero_identity(self):
        rng = Rng(1)
        params = make_params(w=rng.normal(6).reshape(2, 3))
        before = params["w"].value.copy()
        state = AdamState(params)
        for _ in range(10):
            params["w"].grad[...] = rng.normal(6).reshape(2, 3)
            adam_step(params, state, lr=0.0)
        assert np.array_equal(params["w"].value, before)

    def test_nan_grad_aborts_naming_param(self):
        params = make_params(good=[1.0], bad=[2.0])
        params["bad"].grad[...] = np.nan
        with pytest.raises(RuntimeError, match="bad"):
            adam_step(params, AdamState(params), lr=0.1)

    def test_freeze_survives_100_steps(self):
        rng = Rng(2)
        params = make_params(frozen=rng.normal(8), live=rng.normal(8))
        params["frozen"].trainable = False
        frozen_bytes = params["frozen"].value.tobytes()
        state = AdamState(params)
        for _ in range(100):
            params["frozen"].grad[...] = rng.normal(8)
            params["live"].grad[...] = rng.normal(8)
            adam_step(params, state, lr=0.05)
        assert params["frozen"].value.tobytes() == frozen_bytes
        assert not np.array_equal(params["live"].value, make_params(live=[0.0])["live"].value)

    def test_step_counter_increments(self):
        params = make_params(w=[0.0])
        state = AdamState(params)
        adam_step(params, state, lr=0.1)
        adam_step(params, state, lr=0.1)
        assert state.t == 2


class TestFiniteDiffCheck:
    def test_linear_layer_tight(self):
        rng = Rng(3)
        inputs = {"x": rng.normal(12).reshape(3, 4)}
        params = {"w": rng.normal(20).reshape(4, 5), "b": rng.normal(5)}
        assert finite_diff_check(Linear(), inputs, params, rng=rng) < 1e-7

    def test_layer_norm(self):
        rng = Rng(4)
        inputs = {"x": rng.normal(10).reshape(2, 5)}
        params = {"g": 1.0 + 0.1 * rng.normal(5), "b": 0.1 * rng.normal(5)}
        assert finite_diff_check(LayerNorm(), inputs, params, rng=rng) < 1e-4

    def test_softmax_against_fixed_projection(self):
        rng = Rng(5)
        inputs = {"x": rng.normal(8).reshape(2, 4)}
        assert finite_diff_check(SoftmaxRows(), inputs, {}, rng=rng) < 1e-6
