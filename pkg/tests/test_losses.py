"""Training-loss formulas, weights, and their exact constants."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from envmatte import (
    FlowField,
    LossWeights,
    attenuation_loss,
    coarse_total,
    flow_loss,
    mask_loss,
    multiscale_total,
    reconstruction_loss,
    refine_total,
)

RNG = np.random.default_rng(77)


class TestMaskLoss:
    def test_perfect_prediction(self):
        gt = (RNG.random((8, 8)) > 0.5).astype(float)
        assert mask_loss(gt, gt) <= 1e-11

    def test_maximal_entropy(self):
        gt = (RNG.random((8, 8)) > 0.5).astype(float)
        assert mask_loss(np.full((8, 8), 0.5), gt) == pytest.approx(math.log(2), abs=1e-12)

    def test_two_pixel_hand_value(self):
        gt = np.array([[1.0, 0.0]])
        pred = np.array([[0.9, 0.2]])
        # -(ln 0.9 + ln 0.8) / 2
        assert mask_loss(pred, gt) == pytest.approx(0.164252033486018, abs=1e-15)

    def test_extreme_probabilities_stay_finite(self):
        gt = np.array([[1.0, 0.0]])
        pred = np.array([[0.0, 1.0]])
        value = mask_loss(pred, gt)
        assert math.isfinite(value)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            mask_loss(np.zeros((2, 2)), np.zeros((3, 3)))


class TestAttenuationLoss:
    def test_identical(self):
        a = RNG.random((5, 5))
        assert attenuation_loss(a, a) == 0.0

    def test_unit_gap(self):
        assert attenuation_loss(np.zeros((4, 4)), np.ones((4, 4))) == 1.0

    def test_half_off_by_half(self):
        pred = np.array([[0.5, 0.5], [0.0, 0.0]])
        gt = np.zeros((2, 2))
        # (2 * 0.25) / 4
        assert attenuation_loss(pred, gt) == pytest.approx(0.125, abs=1e-15)


class TestFlowLoss:
    def test_identical(self):
        f = FlowField.from_vectors(RNG.uniform(-2, 2, (4, 4, 2)), np.ones((4, 4), bool))
        assert flow_loss(f, f) == 0.0

    def test_three_four_five(self):
        pred = np.zeros((6, 6, 2))
        pred[..., 0] = 3.0
        pred[..., 1] = 4.0
        assert flow_loss(pred, np.zeros((6, 6, 2))) == pytest.approx(5.0, abs=1e-12)

    def test_split_mean(self):
        pred = np.zeros((1, 2, 2))
        pred[0, 0] = (3.0, 4.0)
        # mean of 5 and 0
        assert flow_loss(pred, np.zeros((1, 2, 2))) == pytest.approx(2.5, abs=1e-13)

    def test_accepts_flow_fields_and_arrays(self):
        vec = RNG.uniform(-1, 1, (3, 3, 2))
        field = FlowField.from_vectors(vec, np.ones((3, 3), bool))
        assert flow_loss(field, vec) == 0.0

    @given(dx=st.floats(-8, 8), dy=st.floats(-8, 8))
    @settings(max_examples=50, deadline=None)
    def test_bounded_by_component_max(self, dx, dy):
        pred = np.zeros((2, 2, 2))
        pred[..., 0] = dx
        pred[..., 1] = dy
        value = flow_loss(pred, np.zeros((2, 2, 2)))
        assert value <= math.sqrt(2) * max(abs(dx), abs(dy)) + 1e-12


class TestReconstructionLoss:
    def test_identical(self):
        img = RNG.random((4, 4, 3))
        assert reconstruction_loss(img, img) == 0.0

    def test_single_channel_difference(self):
        a = np.zeros((1, 1, 3))
        b = np.zeros((1, 1, 3))
        b[0, 0, 0] = 0.1
        assert reconstruction_loss(a, b) == pytest.approx(0.01, abs=1e-15)

    def test_channels_summed_pixels_averaged(self):
        a = np.zeros((2, 1, 3))
        b = np.zeros((2, 1, 3))
        b[0, 0] = (0.1, 0.1, 0.1)
        # (0.03 + 0) / 2
        assert reconstruction_loss(a, b) == pytest.approx(0.015, abs=1e-15)

    def test_requires_three_channels(self):
        with pytest.raises(ValueError):
            reconstruction_loss(np.zeros((2, 2)), np.zeros((2, 2)))


class TestTotals:
    def test_default_weights(self):
        w = LossWeights()
        assert w.mask_weight == 0.1
        assert w.attenuation_weight == 1.0
        assert w.flow_weight == 0.01
        assert w.reconstruction_weight == 1.0
        assert w.scale_weights == (0.125, 0.25, 0.5, 1.0)
        assert w.refine_attenuation_weight == 1.0
        assert w.refine_flow_weight == 1.0

    def test_unit_components_exact(self):
        assert coarse_total(1.0, 1.0, 1.0, 1.0, LossWeights()) == 2.11

    def test_zero_components(self):
        assert coarse_total(0.0, 0.0, 0.0, 0.0, LossWeights()) == 0.0

    def test_single_term_scaling(self):
        assert coarse_total(2.0, 0.0, 0.0, 0.0, LossWeights()) == pytest.approx(0.2, abs=1e-16)

    def test_multiscale_unit(self):
        assert multiscale_total([1.0, 1.0, 1.0, 1.0], LossWeights()) == 1.875

    def test_multiscale_finest_weight_one(self):
        assert multiscale_total([0.0, 0.0, 0.0, 0.7], LossWeights()) == 0.7

    def test_multiscale_coarsest_weight_eighth(self):
        assert multiscale_total([8.0, 0.0, 0.0, 0.0], LossWeights()) == 1.0

    def test_multiscale_length_checked(self):
        with pytest.raises(ValueError):
            multiscale_total([1.0, 1.0], LossWeights())

    def test_refine_defaults(self):
        assert refine_total(1.0, 1.0, LossWeights()) == 2.0
        assert refine_total(0.0, 0.0, LossWeights()) == 0.0
        assert refine_total(0.3, 0.7, LossWeights()) == pytest.approx(1.0, abs=1e-16)

    @given(
        ms=st.floats(0, 4),
        ar=st.floats(0, 4),
        fr=st.floats(0, 4),
        ir=st.floats(0, 4),
        scale=st.floats(0.25, 4.0),
    )
    @settings(max_examples=60, deadline=None)
    def test_coarse_total_linear(self, ms, ar, fr, ir, scale):
        w = LossWeights()
        lhs = coarse_total(scale * ms, scale * ar, scale * fr, scale * ir, w)
        rhs = scale * coarse_total(ms, ar, fr, ir, w)
        assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


class TestFlipSymmetry:
    def test_all_losses_invariant_under_horizontal_flip(self):
        h, w = 6, 7
        gt_mask = (RNG.random((h, w)) > 0.5).astype(float)
        pred_mask = RNG.random((h, w))
        gt_rho = RNG.random((h, w))
        pred_rho = RNG.random((h, w))
        vec_gt = RNG.uniform(-3, 3, (h, w, 2))
        vec_pred = RNG.uniform(-3, 3, (h, w, 2))
        img_a = RNG.random((h, w, 3))
        img_b = RNG.random((h, w, 3))

        def flip(a):
            return a[:, ::-1].copy()

        def flip_flow(v):
            out = v[:, ::-1].copy()
            out[..., 0] = -out[..., 0]
            return out

        assert mask_loss(pred_mask, gt_mask) == pytest.approx(
            mask_loss(flip(pred_mask), flip(gt_mask)), rel=1e-13
        )
        assert attenuation_loss(pred_rho, gt_rho) == pytest.approx(
            attenuation_loss(flip(pred_rho), flip(gt_rho)), rel=1e-13
        )
        assert flow_loss(vec_pred, vec_gt) == pytest.approx(
            flow_loss(flip_flow(vec_pred), flip_flow(vec_gt)), rel=1e-13
        )
        assert reconstruction_loss(img_a, img_b) == pytest.approx(
            reconstruction_loss(flip(img_a), flip(img_b)), rel=1e-13
        )
