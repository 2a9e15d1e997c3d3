"""Convolution, pooling, linear, and interpolation layers against brute-force oracles."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spikedec.errors import ConfigError, DimensionError
from spikedec.layers import (Conv1dParams, LinearParams, conv1d_backward,
                             conv1d_forward, conv1d_out_len, lerp_upsample,
                             lerp_upsample_backward, linear_backward,
                             linear_forward, maxpool1d, maxpool1d_backward)
from spikedec.numerics import Rng, grad_check

import helpers


def conv_oracle(kernel, bias, padding, x):
    """Direct sliding-window triple loop."""
    out_ch, in_ch, k = kernel.shape
    L = x.shape[1]
    xpad = np.zeros((in_ch, L + 2 * padding))
    xpad[:, padding:padding + L] = x
    Lp = L + 2 * padding - k + 1
    y = np.zeros((out_ch, Lp))
    for o in range(out_ch):
        for t in range(Lp):
            acc = bias[o]
            for c in range(in_ch):
                for kk in range(k):
                    acc += kernel[o, c, kk] * xpad[c, t + kk]
            y[o, t] = acc
    return y


class TestConv1d:
    def test_unit_kernel_identity(self):
        p = Conv1dParams(kernel=np.ones((1, 1, 1)), bias=np.zeros(1), padding=0)
        x = Rng(1).normal(size=(1, 10))
        y, _ = conv1d_forward(p, x)
        assert np.array_equal(y, x)

    def test_length_law_first_track2_block(self):
        assert conv1d_out_len(1024, 3, 3) == 1028

    def test_matches_triple_loop_oracle(self):
        rng = Rng(4)
        kernel = rng.normal(size=(3, 2, 4))
        bias = rng.normal(size=3)
        x = rng.normal(size=(2, 9))
        p = Conv1dParams(kernel=kernel, bias=bias, padding=2)
        y, _ = conv1d_forward(p, x)
        assert np.allclose(y, conv_oracle(kernel, bias, 2, x), atol=1e-12)

    def test_relu_activation(self):
        p = Conv1dParams(kernel=np.ones((1, 1, 1)), bias=np.zeros(1), padding=0)
        y, _ = conv1d_forward(p, np.array([[-1.0, 2.0]]), activation="relu")
        assert y.tolist() == [[0.0, 2.0]]

    def test_empty_output_rejected(self):
        p = Conv1dParams(kernel=np.zeros((1, 1, 5)), bias=np.zeros(1), padding=0)
        with pytest.raises(ConfigError):
            conv1d_forward(p, np.zeros((1, 3)))

    def test_channel_mismatch(self):
        p = Conv1dParams(kernel=np.zeros((1, 2, 3)), bias=np.zeros(1), padding=1)
        with pytest.raises(DimensionError):
            conv1d_forward(p, np.zeros((3, 8)))

    @pytest.mark.parametrize("activation", ["none", "relu"])
    def test_backward_matches_fd(self, activation):
        rng = Rng(7)
        kernel = rng.normal(size=(2, 3, 3))
        bias = rng.normal(size=2)
        x = rng.normal(size=(3, 7))
        w, loss = helpers.random_projection_loss(rng, (2, conv1d_out_len(7, 3, 1)))

        vec, shapes = helpers.pack([kernel, bias, x])

        def f(v):
            kk, bb, xx = helpers.unpack(v, shapes)
            p = Conv1dParams(kernel=kk, bias=bb, padding=1)
            y, cache = conv1d_forward(p, xx, activation=activation)
            gx, gk, gb = conv1d_backward(cache, w)
            gvec, _ = helpers.pack([gk, gb, gx])
            return loss(y), gvec

        assert grad_check(f, vec, eps=1e-6) < 1e-8


class TestMaxPool:
    def test_hand_case(self):
        y, _ = maxpool1d(np.array([[1.0, 3.0, 2.0, 2.0]]))
        assert y.tolist() == [[3.0, 2.0]]

    def test_odd_length_drops_trailing(self):
        y, _ = maxpool1d(np.zeros((4, 259)))
        assert y.shape == (4, 129)

    def test_matches_scalar_loop(self):
        rng = Rng(12)
        x = rng.normal(size=(3, 11))
        y, _ = maxpool1d(x)
        for c in range(3):
            for t in range(5):
                assert y[c, t] == max(x[c, 2 * t], x[c, 2 * t + 1])

    def test_short_input_rejected(self):
        with pytest.raises(ConfigError):
            maxpool1d(np.zeros((1, 1)))

    def test_gradient_routing_conserves_mass_and_ties_go_left(self):
        x = np.array([[2.0, 2.0, -1.0, 5.0, 0.0]])
        y, cache = maxpool1d(x)
        g = np.array([[1.0, 7.0]])
        gx = maxpool1d_backward(cache, g)
        assert gx.tolist() == [[1.0, 0.0, 0.0, 7.0, 0.0]]
        assert gx.sum() == g.sum()

    def test_backward_matches_fd(self):
        rng = Rng(3)
        x = rng.normal(size=(2, 8))
        w, loss = helpers.random_projection_loss(rng, (2, 4))
        vec, shapes = helpers.pack([x])

        def f(v):
            (xx,) = helpers.unpack(v, shapes)
            y, cache = maxpool1d(xx)
            gx = maxpool1d_backward(cache, w)
            gvec, _ = helpers.pack([gx])
            return loss(y), gvec

        assert grad_check(f, vec, eps=1e-7) < 1e-8


class TestLinear:
    def test_identity(self):
        p = LinearParams(W=np.eye(3), b=np.zeros(3))
        x = np.array([1.0, -2.0, 0.5])
        y, _ = linear_forward(p, x)
        assert np.array_equal(y, x)

    def test_parameter_count_20_to_2(self):
        p = LinearParams(W=np.zeros((20, 2)), b=np.zeros(2))
        assert p.W.size + p.b.size == 42

    def test_backward_matches_fd(self):
        rng = Rng(21)
        W = rng.normal(size=(4, 3))
        b = rng.normal(size=3)
        x = rng.normal(size=(2, 4))
        w, loss = helpers.random_projection_loss(rng, (2, 3))
        vec, shapes = helpers.pack([W, b, x])

        def f(v):
            WW, bb, xx = helpers.unpack(v, shapes)
            y, cache = linear_forward(LinearParams(W=WW, b=bb), xx)
            gx, gW, gb = linear_backward(cache, w)
            gvec, _ = helpers.pack([gW, gb, gx])
            return loss(y), gvec

        assert grad_check(f, vec, eps=1e-6) < 1e-9

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            linear_forward(LinearParams(W=np.zeros((3, 2)), b=np.zeros(2)), np.zeros(4))


class TestLerpUpsample:
    def test_stride_one_is_prefix_identity(self):
        kp = Rng(2).normal(size=(5, 2))
        out = lerp_upsample(kp, 1)
        assert out.shape == (4, 2)
        assert np.array_equal(out, kp[:4])

    def test_straight_line(self):
        out = lerp_upsample(np.array([[0.0], [8.0]]), 4)
        assert out[:, 0].tolist() == [0.0, 2.0, 4.0, 6.0]

    def test_keypoints_reproduced_exactly(self):
        kp = Rng(9).normal(size=(7, 3))
        for s in (1, 2, 5):
            out = lerp_upsample(kp, s)
            for j in range(6):
                assert np.array_equal(out[j * s], kp[j])

    def test_too_few_keypoints(self):
        with pytest.raises(ConfigError):
            lerp_upsample(np.zeros((1, 2)), 4)

    @settings(max_examples=25, deadline=None)
    @given(stride=st.integers(min_value=2, max_value=8),
           K=st.integers(min_value=2, max_value=6),
           seed=st.integers(min_value=0, max_value=2 ** 31))
    def test_piecewise_linear_second_difference(self, stride, K, seed):
        kp = Rng(seed).normal(size=(K, 2))
        out = lerp_upsample(kp, stride)
        seg = out.reshape(K - 1, stride, 2)
        if stride >= 3:
            second = np.diff(seg, n=2, axis=1)
            assert np.abs(second).max() < 1e-12

    def test_backward_matches_fd(self):
        rng = Rng(31)
        kp = rng.normal(size=(4, 2))
        w, loss = helpers.random_projection_loss(rng, (9, 2))
        vec, shapes = helpers.pack([kp])

        def f(v):
            (kk,) = helpers.unpack(v, shapes)
            y = lerp_upsample(kk, 3)
            gkp = lerp_upsample_backward(w, 4, 3)
            gvec, _ = helpers.pack([gkp])
            return loss(y), gvec

        # interpolation is linear in the keypoints: large eps, no truncation
        assert grad_check(f, vec, eps=1e-4) < 1e-10
