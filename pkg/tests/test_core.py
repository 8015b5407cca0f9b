"""Compositing model, bilinear sampling, and domain types."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from envmatte import (
    EnvironmentMatte,
    FlowField,
    as_image,
    bilinear_sample,
    compose,
    compose_colored,
    flow_to_color,
    resize_bilinear,
    resize_nearest,
    sample_map,
)

RNG = np.random.default_rng(1234)


def const_matte(h, w, mask=1.0, rho=1.0, flow=(0.0, 0.0)):
    vectors = np.zeros((h, w, 2))
    vectors[..., 0] = flow[0]
    vectors[..., 1] = flow[1]
    m = np.full((h, w), float(mask))
    return EnvironmentMatte(
        mask=m,
        attenuation=np.full((h, w), float(rho)),
        flow=FlowField.from_vectors(vectors, m > 0.5),
    )


class TestBilinearSample:
    IMG = np.array([[0.0, 1.0], [2.0, 3.0]])

    def test_integer_lattice(self):
        assert bilinear_sample(self.IMG, 0, 0) == 0.0
        assert bilinear_sample(self.IMG, 1, 0) == 1.0
        assert bilinear_sample(self.IMG, 0, 1) == 2.0
        assert bilinear_sample(self.IMG, 1, 1) == 3.0

    def test_midpoint(self):
        assert bilinear_sample(self.IMG, 0.5, 0) == 0.5

    def test_four_corner_weighted_sum(self):
        # 0.5*(0.75*0 + 0.25*1) + 0.5*(0.75*2 + 0.25*3) = 1.25
        assert bilinear_sample(self.IMG, 0.25, 0.5) == pytest.approx(1.25, abs=1e-15)

    def test_border_clamp(self):
        assert bilinear_sample(self.IMG, -5.0, 0.0) == 0.0
        assert bilinear_sample(self.IMG, 10.0, 10.0) == 3.0

    def test_non_finite_coordinates_rejected(self):
        with pytest.raises(ValueError):
            bilinear_sample(self.IMG, np.nan, 0.0)
        with pytest.raises(ValueError):
            sample_map(self.IMG, np.array([[np.inf]]), np.array([[0.0]]))

    def test_matches_lookup_on_every_integer_coordinate(self):
        img = RNG.random((7, 9))
        xs, ys = np.meshgrid(np.arange(9.0), np.arange(7.0))
        assert np.array_equal(sample_map(img, xs, ys), img)

    @given(
        ax=st.floats(-1.0, 9.0),
        ay=st.floats(-1.0, 7.0),
        a=st.floats(-2.0, 2.0),
        b=st.floats(-2.0, 2.0),
    )
    @settings(max_examples=60, deadline=None)
    def test_linear_in_the_image(self, ax, ay, a, b):
        i1 = RNG.random((6, 8))
        i2 = RNG.random((6, 8))
        lhs = bilinear_sample(a * i1 + b * i2, ax, ay)
        rhs = a * bilinear_sample(i1, ax, ay) + b * bilinear_sample(i2, ax, ay)
        assert lhs == pytest.approx(rhs, abs=1e-12)


class TestCompose:
    def test_zero_mask_is_identity(self):
        bg = RNG.random((5, 6, 3))
        out = compose(const_matte(5, 6, mask=0.0), bg)
        assert np.array_equal(out, bg)

    def test_unit_mask_unit_rho_zero_flow_is_identity(self):
        bg = RNG.random((5, 6, 3))
        out = compose(const_matte(5, 6, mask=1.0, rho=1.0), bg)
        assert np.array_equal(out, bg)

    def test_direct_attenuation(self):
        bg = np.full((4, 4, 3), 0.8)
        out = compose(const_matte(4, 4, rho=0.5), bg)
        assert np.allclose(out, 0.4, atol=1e-15)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            compose(const_matte(4, 4), np.zeros((5, 5, 3)))

    def test_output_clamped(self):
        out = compose(const_matte(3, 3, rho=1.0), np.full((3, 3, 3), 1.0))
        assert out.max() <= 1.0 and out.min() >= 0.0

    def test_monotone_in_rho_inside_mask(self):
        bg = RNG.random((6, 6, 3)) * 0.9
        lo = const_matte(6, 6, rho=0.3)
        hi = const_matte(6, 6, rho=0.7)
        assert (compose(hi, bg) >= compose(lo, bg) - 1e-15).all()

    def test_grayscale_background(self):
        bg = RNG.random((5, 5))
        out = compose(const_matte(5, 5, rho=0.5), bg)
        assert out.shape == (5, 5)
        assert np.allclose(out, 0.5 * bg, atol=1e-15)

    def test_soft_mask_blend(self):
        bg = np.full((2, 2, 3), 0.6)
        out = compose(const_matte(2, 2, mask=0.25, rho=0.0), bg)
        # (1 - 0.25) * 0.6 + 0.25 * 0 = 0.45
        assert np.allclose(out, 0.45, atol=1e-15)


class TestComposeColored:
    def make(self, h, w, r, s):
        matte = const_matte(h, w)
        rr = np.empty((h, w, 3))
        rr[:] = np.asarray(r, dtype=float)
        return EnvironmentMatte(
            mask=matte.mask,
            attenuation=matte.attenuation,
            flow=matte.flow,
            color_attenuation=rr,
            specular=np.full((h, w), float(s)),
        )

    def test_reduces_to_scalar_compose(self):
        bg = RNG.random((4, 5, 3))
        colored = self.make(4, 5, (1, 1, 1), 0.0)
        assert np.allclose(compose_colored(colored, bg), compose(const_matte(4, 5), bg), atol=1e-16)

    def test_channel_attenuation(self):
        bg = np.ones((3, 3, 3))
        out = compose_colored(self.make(3, 3, (1, 0, 0), 0.0), bg)
        assert np.allclose(out, [1.0, 0.0, 0.0], atol=1e-15)

    def test_specular_clamps(self):
        bg = np.full((3, 3, 3), 0.9)
        out = compose_colored(self.make(3, 3, (1, 1, 1), 0.2), bg)
        assert np.allclose(out, 1.0, atol=1e-15)

    def test_missing_extension_rejected(self):
        with pytest.raises(ValueError):
            compose_colored(const_matte(3, 3), np.zeros((3, 3, 3)))

    def test_matches_scalar_rho_within_ulp(self):
        bg = RNG.random((6, 6, 3))
        rho = RNG.random((6, 6))
        scalar = const_matte(6, 6)
        scalar = EnvironmentMatte(mask=scalar.mask, attenuation=rho, flow=scalar.flow)
        colored = EnvironmentMatte(
            mask=scalar.mask,
            attenuation=scalar.attenuation,
            flow=scalar.flow,
            color_attenuation=np.repeat(rho[..., None], 3, axis=2),
            specular=np.zeros((6, 6)),
        )
        a = compose(scalar, bg)
        b = compose_colored(colored, bg)
        assert np.max(np.abs(a - b)) <= np.finfo(np.float64).eps


class TestFlowToColor:
    def test_zero_flow_is_white(self):
        flow = FlowField.zeros(4, 4)
        img = flow_to_color(flow, max_magnitude=1.0)
        assert np.allclose(img, 1.0, atol=1e-15)

    def test_full_magnitude_is_saturated(self):
        vec = np.zeros((2, 2, 2))
        vec[..., 0] = 2.0
        img = flow_to_color(FlowField.from_vectors(vec, np.ones((2, 2), bool)), max_magnitude=2.0)
        # hue 0 at full saturation is pure red
        assert np.allclose(img, [1.0, 0.0, 0.0], atol=1e-12)

    def test_half_magnitude_halves_saturation(self):
        vec = np.zeros((2, 2, 2))
        vec[..., 0] = 1.0
        img = flow_to_color(FlowField.from_vectors(vec, np.ones((2, 2), bool)), max_magnitude=2.0)
        assert np.allclose(img, [1.0, 0.5, 0.5], atol=1e-12)

    def test_negated_flow_flips_hue(self):
        vec = RNG.uniform(-1, 1, (5, 5, 2))
        valid = np.ones((5, 5), bool)
        a = flow_to_color(FlowField.from_vectors(vec, valid), max_magnitude=2.0)
        b = flow_to_color(FlowField.from_vectors(-vec, valid), max_magnitude=2.0)
        # the value (max) channel and the saturation are preserved under negation
        assert np.allclose(a.max(axis=2), b.max(axis=2), atol=1e-12)
        sat_a = 1.0 - a.min(axis=2) / a.max(axis=2)
        sat_b = 1.0 - b.min(axis=2) / b.max(axis=2)
        assert np.allclose(sat_a, sat_b, atol=1e-12)

    def test_invalid_pixels_neutral(self):
        vec = np.ones((3, 3, 2))
        valid = np.zeros((3, 3), bool)
        valid[1, 1] = True
        img = flow_to_color(FlowField.from_vectors(vec, valid), max_magnitude=2.0)
        assert np.allclose(img[0, 0], 1.0, atol=1e-15)

    def test_bad_magnitude_rejected(self):
        with pytest.raises(ValueError):
            flow_to_color(FlowField.zeros(2, 2), max_magnitude=0.0)


class TestDomainTypes:
    def test_as_image_validates(self):
        with pytest.raises(ValueError):
            as_image(np.zeros((3, 3, 2)))
        with pytest.raises(ValueError):
            as_image(np.array([[np.nan]]))
        img = as_image([[0.5]])
        assert img.dtype == np.float64

    def test_flow_bounds_enforced(self):
        vec = np.zeros((4, 4, 2))
        vec[0, 0, 0] = 100.0
        flow = FlowField(vec, np.ones((4, 4), bool))
        with pytest.raises(ValueError):
            flow.validate()

    def test_invalid_pixels_carry_zero(self):
        vec = np.ones((3, 3, 2))
        flow = FlowField.from_vectors(vec, np.zeros((3, 3), bool))
        assert np.array_equal(flow.vectors, np.zeros((3, 3, 2)))
        flow.validate()

    def test_matte_plane_shapes_checked(self):
        with pytest.raises(ValueError):
            EnvironmentMatte(
                mask=np.zeros((3, 3)),
                attenuation=np.zeros((4, 4)),
                flow=FlowField.zeros(3, 3),
            ).validate()

    def test_matte_copy_is_deep(self):
        matte = const_matte(3, 3)
        dup = matte.copy()
        dup.mask[0, 0] = 0.0
        assert matte.mask[0, 0] == 1.0


class TestResize:
    def test_identity_shapes(self):
        img = RNG.random((5, 7))
        assert np.array_equal(resize_bilinear(img, (5, 7)), img)
        assert np.array_equal(resize_nearest(img, (5, 7)), img)

    def test_corners_align(self):
        img = RNG.random((4, 4))
        out = resize_bilinear(img, (9, 9))
        assert out[0, 0] == img[0, 0]
        assert out[-1, -1] == img[-1, -1]

    def test_linear_ramp_preserved(self):
        xs = np.linspace(0.0, 1.0, 8)
        img = np.tile(xs, (8, 1))
        out = resize_bilinear(img, (8, 15))
        assert np.allclose(out, np.tile(np.linspace(0, 1, 15), (8, 1)), atol=1e-12)

    def test_nearest_keeps_values(self):
        img = (RNG.random((6, 6)) > 0.5).astype(float)
        out = resize_nearest(img, (13, 13))
        assert set(np.unique(out)) <= {0.0, 1.0}
