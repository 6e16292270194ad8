import numpy as np
import pytest
from hypothesis import given, strategies as st

from kinvec.grid import (
    AxisSpec,
    DistributionField,
    PhaseGrid,
    SpatialField,
    SpatialGrid,
    cubic_stencil,
    diff4,
    integrate_x,
    integrate_xv,
    interpolate,
    interpolate_points,
    interpolate_spatial,
    lp_norm_xv,
    partial,
    velocity_average,
    velocity_weight,
)

coef = st.floats(-3, 3, allow_nan=False)


class TestAxis:
    def test_spacing_and_nodes(self):
        a = AxisSpec(-1.0, 1.0, 5)
        assert a.h == 0.5
        np.testing.assert_allclose(a.nodes, [-1, -0.5, 0, 0.5, 1])

    def test_weights_integrate_length(self):
        a = AxisSpec(-2.0, 3.0, 11)
        assert np.isclose(a.weights().sum(), 5.0)

    def test_refined_halves_spacing(self):
        a = AxisSpec(0.0, 1.0, 9)
        assert np.isclose(a.refined().h, a.h / 2)
        assert a.refined(3).points == 25

    @pytest.mark.parametrize("lo, hi, n", [(0, 0, 5), (1, 0, 5), (0, 1, 3), (0, np.inf, 5)])
    def test_rejects_bad_axes(self, lo, hi, n):
        with pytest.raises(ValueError):
            AxisSpec(lo, hi, n)


class TestGrids:
    def test_phase_layout(self):
        g = PhaseGrid.uniform(2, (-1, 1), (-2, 2), 9, 7)
        assert g.shape == (9, 9, 7, 7)
        assert g.x_shape == (9, 9) and g.v_shape == (7, 7)
        assert g.spatial.shape == (9, 9)
        assert g.axis_index("v2") == 3 and g.axis_index("x1") == 0

    def test_rejects_dimension_four(self):
        with pytest.raises(ValueError):
            PhaseGrid.uniform(4, (-1, 1), (-1, 1), 5, 5)

    def test_cube(self):
        s = SpatialGrid.cube(3, 2.0, 9)
        assert s.dim == 3 and s.spacing == (0.5, 0.5, 0.5)

    def test_sample_is_immutable(self, grid1):
        f = grid1.sample(lambda xs, vs: np.exp(-xs[0] ** 2 - vs[0] ** 2))
        with pytest.raises(ValueError):
            f.values[0, 0] = 1.0

    def test_rejects_nonfinite(self, grid1):
        vals = np.zeros(grid1.shape)
        vals[3, 3] = np.nan
        with pytest.raises(ValueError):
            DistributionField(grid1, 0.0, vals)

    def test_support_check(self, grid1):
        f = DistributionField(grid1, 0.0, np.ones(grid1.shape))
        with pytest.raises(ValueError, match="boundary"):
            f.check_support()

    def test_spatial_component_count(self):
        s = SpatialGrid.cube(2, 1.0, 5)
        with pytest.raises(ValueError):
            SpatialField(s, 0.0, (np.zeros((5, 5)),) * 3)
        v = SpatialField(s, 0.0, (np.zeros((5, 5)), np.ones((5, 5))))
        with pytest.raises(ValueError):
            v.values


class TestQuadrature:
    @given(c=st.floats(-1, 1), w=st.floats(0.5, 1.5))
    def test_gaussian_integral(self, c, w):
        s = SpatialGrid.cube(1, 10.0, 401)
        (x,) = s.coordinates()
        assert np.isclose(integrate_x(np.exp(-((x - c) / w) ** 2), s), w * np.sqrt(np.pi), rtol=1e-10)

    def test_velocity_average_of_gaussian(self, grid1):
        f = grid1.sample(lambda xs, vs: np.exp(-xs[0] ** 2 - vs[0] ** 2))
        rho = velocity_average(f)
        (x,) = grid1.spatial.coordinates()
        np.testing.assert_allclose(rho.values, np.sqrt(np.pi) * np.exp(-x**2), atol=1e-12)

    def test_phase_integral(self, grid2):
        f = grid2.sample(lambda xs, vs: np.exp(-sum(x * x for x in xs) - sum(v * v for v in vs)))
        assert np.isclose(integrate_xv(f.values, grid2), np.pi**2, rtol=1e-8)

    def test_lp_norm_reduces_to_l1(self, gauss1):
        assert np.isclose(lp_norm_xv(gauss1, 1.0, 0.0), integrate_xv(np.abs(gauss1.values), gauss1.grid))

    def test_lp_weight(self, grid1):
        f = DistributionField(grid1, 0.0, np.zeros(grid1.shape))
        assert lp_norm_xv(f, 2.0, 1.0) == 0.0
        with pytest.raises(ValueError):
            lp_norm_xv(f, 0.5)
        w = velocity_weight(grid1, 1.0)
        _, (v,) = grid1.coordinates()
        np.testing.assert_allclose(w, 1 + v**2)


class TestStencils:
    @given(a=coef, b=coef, c=coef, d=coef, e=coef)
    def test_quartic_exact(self, a, b, c, d, e):
        x = np.linspace(-1, 2, 13)
        p = a + b * x + c * x**2 + d * x**3 + e * x**4
        dp = b + 2 * c * x + 3 * d * x**2 + 4 * e * x**3
        np.testing.assert_allclose(diff4(p, x[1] - x[0], 0), dp, atol=1e-9 * (1 + np.abs(dp).max()))

    def test_fourth_order(self):
        errs = []
        for n in (41, 81, 161):
            x = np.linspace(0, 2 * np.pi, n)
            errs.append(np.max(np.abs(diff4(np.sin(x), x[1] - x[0], 0) - np.cos(x))))
        orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert np.all(orders > 3.7)

    def test_too_short(self):
        with pytest.raises(ValueError):
            diff4(np.zeros(4), 1.0, 0)

    def test_partial_labels(self, grid1):
        f = grid1.sample(lambda xs, vs: xs[0] ** 2 * vs[0])
        xs, vs = grid1.coordinates()
        np.testing.assert_allclose(partial(f, "x1").values, np.broadcast_to(2 * xs[0] * vs[0], grid1.shape), atol=1e-9)
        np.testing.assert_allclose(partial(f, "v1").values, np.broadcast_to(xs[0] ** 2, grid1.shape), atol=1e-9)


class TestInterpolation:
    @given(
        pts=st.lists(st.tuples(st.floats(-6, 6), st.floats(-6, 6)), min_size=1, max_size=20),
        a=coef,
        b=coef,
        c=coef,
    )
    def test_cubic_exact(self, pts, a, b, c):
        g = PhaseGrid.uniform(1, (-6, 6), (-6, 6), 13, 13)
        f = g.sample(lambda xs, vs: a * xs[0] ** 3 + b * xs[0] * vs[0] ** 2 + c * vs[0])
        p = np.array(pts)
        want = a * p[:, 0] ** 3 + b * p[:, 0] * p[:, 1] ** 2 + c * p[:, 1]
        np.testing.assert_allclose(interpolate_points(f, p), want, atol=1e-9 * (1 + np.abs(want).max()))

    def test_outside_is_zero(self, gauss1):
        assert interpolate(gauss1, [7.0, 0.0]) == 0.0
        assert interpolate(gauss1, [0.0, 0.0]) > 0.0

    def test_stencil_weights_sum_to_one(self):
        a = AxisSpec(0.0, 1.0, 11)
        _, w, inside = cubic_stencil(a, np.linspace(-0.1, 1.1, 37))
        np.testing.assert_allclose(w.sum(axis=-1), 1.0)
        assert not inside[0] and not inside[-1]

    def test_spatial(self):
        s = SpatialGrid.cube(2, 1.0, 9)
        x, y = s.coordinates()
        vals = np.broadcast_to(x**2 * y, s.shape)
        p = np.array([[0.3, -0.2], [0.91, 0.5]])
        np.testing.assert_allclose(interpolate_spatial(vals, s, p), p[:, 0] ** 2 * p[:, 1], atol=1e-12)

    def test_wrong_point_width(self, gauss1):
        with pytest.raises(ValueError):
            interpolate_points(gauss1, np.zeros((2, 3)))
