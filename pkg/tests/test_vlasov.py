import numpy as np
import pytest
from hypothesis import given, strategies as st

from kinvec.data import BoxData, GaussianData, ZeroData
from kinvec.fields import parse_word
from kinvec.free import FreeSolution
from kinvec.grid import PhaseGrid, integrate_xv, lp_norm_xv
from kinvec.vlasov import (
    SolverAbort,
    VPState,
    all_words,
    bootstrap_monitor,
    conservation_monitor,
    evolve,
    free_stream,
    kick,
    mass_drift,
    norm_E,
    norm_weight_exponent,
    shift_axis,
    step,
    total_energy,
    weighted_conservation_monitor,
)


@pytest.fixture(scope="module")
def small_runs():
    """Force-free and self-consistent small-amplitude runs to t = 5."""
    d = GaussianData(1, width_x=2.0, width_v=0.5, amplitude=1e-3)
    g = PhaseGrid.uniform(1, (-24, 24), (-3, 3), 384, 128)
    f0 = d.sample(g, check_support=False)
    return {
        force: evolve(VPState.initial(f0, force=force), 5.0, 0.1, every=10) for force in (False, True)
    }


class TestShift:
    @given(disp=st.floats(-3.0, 3.0), c=st.lists(st.floats(-2, 2), min_size=4, max_size=4))
    def test_cubics_exact_in_interior(self, disp, c):
        h = 0.1
        z = np.arange(101) * h
        poly = lambda s: c[0] + c[1] * s + c[2] * s**2 + c[3] * s**3
        out = shift_axis(poly(z), 0, h, disp, fill="edge")
        inner = slice(40, 61)
        np.testing.assert_allclose(out[inner], poly(z[inner] - disp), atol=1e-9)

    @pytest.mark.parametrize("k", [-3, 0, 2])
    def test_whole_cells_shift_exactly(self, k, rng):
        vals = rng.normal(size=50)
        out = shift_axis(vals, 0, 0.5, 0.5 * k)
        want = np.zeros(50)
        if k >= 0:
            want[k:] = vals[: 50 - k]
        else:
            want[:k] = vals[-k:]
        np.testing.assert_allclose(out, want, atol=1e-14)

    def test_varying_displacement(self, rng):
        vals = rng.normal(size=(40, 12))
        disp = np.linspace(-1, 1, 12)[None, :]
        out = shift_axis(vals, 0, 0.25, disp)
        for j in (0, 5, 11):
            np.testing.assert_allclose(out[:, j], shift_axis(vals[:, j], 0, 0.25, disp[0, j]), atol=1e-14)

    def test_bad_arguments(self):
        vals = np.zeros((8, 8))
        with pytest.raises(ValueError):
            shift_axis(vals, 0, 0.1, 0.3, fill="wrap")
        with pytest.raises(ValueError):
            shift_axis(vals, 0, 0.1, np.ones((8, 1)))


class TestSplitting:
    @pytest.mark.parametrize("points", [97, 193])
    def test_force_free_matches_exact_transport(self, points):
        d = GaussianData(1, width_x=1.5, width_v=1.0, velocity_center=0.3)
        g = PhaseGrid.uniform(1, (-12, 12), (-6, 6), points, points)
        run = evolve(VPState.initial(d.sample(g, check_support=False), force=False), 2.0, 0.25)
        exact = FreeSolution.from_data(d, g, check=False)
        xs, vs = g.coordinates()
        ref = d([xs[0] - 2.0 * vs[0]], [vs[0]])
        err = np.max(np.abs(run.final.f.values - ref))
        assert err < (1e-3 if points == 97 else 1e-4)
        assert run.final.f.values.sum() == pytest.approx(exact.sample(2.0).values.sum(), rel=1e-3)

    def test_second_order_in_time(self):
        d = GaussianData(1, width_x=1.0, width_v=1.0, amplitude=0.5)
        g = PhaseGrid.uniform(1, (-10, 10), (-6, 6), 193, 193)
        s0 = VPState.initial(d.sample(g, check_support=False))
        ref = evolve(s0, 2.0, 0.0125).final.f.values
        errs = [np.max(np.abs(evolve(s0, 2.0, dt).final.f.values - ref)) for dt in (0.2, 0.1, 0.05)]
        orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert np.all(np.abs(orders - 2.0) < 0.2)

    def test_zero_step_is_identity(self, gauss1):
        s = VPState.initial(gauss1)
        assert step(s, 0.0) is s

    @pytest.mark.parametrize("mu", [1, -1])
    def test_mass_and_energy(self, mu):
        d = GaussianData(1, width_x=1.0, width_v=1.0, amplitude=0.5)
        g = PhaseGrid.uniform(1, (-10, 10), (-6, 6), 193, 193)
        run = evolve(VPState.initial(d.sample(g, check_support=False), mu=mu), 1.5, 0.05, monitors={"E": total_energy})
        energy = np.array([r["E"] for r in run.records])
        assert mass_drift(run) < 1e-10
        assert np.max(np.abs(energy - energy[0])) < 1e-4 * abs(energy[0])

    def test_attraction_sign(self):
        # mu = 1 pulls the mass together, so the spatial spread shrinks relative to mu = -1
        d = GaussianData(1, width_x=1.0, width_v=0.6, amplitude=1.0)
        g = PhaseGrid.uniform(1, (-8, 8), (-4, 4), 193, 193)
        f0 = d.sample(g, check_support=False)
        x2 = []
        for mu in (1, -1):
            f = evolve(VPState.initial(f0, mu=mu), 1.0, 0.05).final.f
            x2.append(integrate_xv(g.coordinates()[0][0] ** 2 * f.values, g))
        assert x2[0] < x2[1]

    def test_kick_without_field_is_identity(self, gauss1):
        zero = [np.zeros(gauss1.grid.x_shape)]
        np.testing.assert_array_equal(kick(gauss1.values, gauss1.grid, zero, 0.3, 1), gauss1.values)

    def test_free_stream_zero_tau(self, gauss1):
        np.testing.assert_allclose(free_stream(gauss1.values, gauss1.grid, 0.0), gauss1.values)


class TestAbort:
    def test_negativity(self):
        g = PhaseGrid.uniform(1, (-6, 6), (-6, 6), 97, 97)
        with pytest.raises(SolverAbort, match="negativity"):
            evolve(VPState.initial(BoxData(1).sample(g, check_support=False)), 1.0, 0.1)

    def test_boundary(self):
        d = GaussianData(1, width_x=0.5, width_v=0.5, velocity_center=2.0)
        g = PhaseGrid.uniform(1, (-4, 4), (-4, 4), 97, 97)
        with pytest.raises(SolverAbort, match="boundary"):
            evolve(VPState.initial(d.sample(g, check_support=False), force=False), 3.0, 0.1)

    def test_unchecked_step_does_not_abort(self):
        g = PhaseGrid.uniform(1, (-6, 6), (-6, 6), 97, 97)
        s = VPState.initial(BoxData(1).sample(g, check_support=False))
        assert step(s, 0.1, check=False).time == pytest.approx(0.1)

    def test_t_end_must_be_multiple(self, gauss1):
        with pytest.raises(ValueError):
            evolve(VPState.initial(gauss1), 1.0, 0.3)

    def test_zero_data_runs(self, grid1):
        run = evolve(VPState.initial(ZeroData(1).sample(grid1)), 0.5, 0.1)
        assert not run.final.f.values.any()
        assert mass_drift(run) == 0.0


class TestConservation:
    @pytest.mark.parametrize("word", ["", "dx1", "u1", "s", "u1 dx1"])
    def test_force_free_drift(self, small_runs, word):
        rows = conservation_monitor(small_runs[False].states, parse_word(word, 1))
        assert np.max(np.abs(rows[:, 1] - rows[0, 1])) < 1e-3 * rows[0, 1]
        np.testing.assert_array_equal(rows[:, 2], rows[0, 1])

    @pytest.mark.parametrize("word", ["", "dx1", "u1", "s", "u1 dx1"])
    def test_inequality_with_force(self, small_runs, word):
        rows = conservation_monitor(small_runs[True].states, parse_word(word, 1))
        assert np.all(rows[:, 1] <= rows[:, 2] * (1 + 1e-3))
        assert np.all(np.diff(rows[:, 2]) >= 0)

    @pytest.mark.parametrize("word", ["", "u1", "s"])
    def test_weighted_inequality(self, small_runs, word):
        rep = weighted_conservation_monitor(small_runs[True].states, parse_word(word, 1), 1.5, 2.0)
        assert rep.holds()
        assert np.isfinite(rep.constant) and rep.constant <= 1.0

    @pytest.mark.parametrize("word", ["", "u1", "s"])
    def test_weighted_force_free_is_conserved(self, small_runs, word):
        # both integrals vanish; only interpolation diffusion moves the left side
        rep = weighted_conservation_monitor(small_runs[False].states, parse_word(word, 1), 1.5, 2.0)
        rows = rep.rows
        assert not rows[:, 3:].any()
        assert rep.holds()
        assert np.max(np.abs(rows[:, 1] - rows[:, 2])) < 1e-3 * rows[0, 2]

    def test_rejects_time_derivative_and_long_words(self, small_runs):
        with pytest.raises(ValueError):
            conservation_monitor(small_runs[True].states, parse_word("dt", 1))
        with pytest.raises(ValueError):
            conservation_monitor(small_runs[True].states, parse_word("u1 u1 u1", 1))
        with pytest.raises(ValueError):
            weighted_conservation_monitor(small_runs[True].states, parse_word("u1", 1), 0.5, 1.0)

    def test_empty_series(self):
        assert conservation_monitor([]).shape == (0, 3)


class TestNorm:
    def test_order_zero_is_l1_plus_weighted(self, gauss1):
        rep = norm_E(gauss1, 0, 0.1)
        assert rep.l1_part == pytest.approx(integrate_xv(np.abs(gauss1.values), gauss1.grid))
        assert rep.weighted_lp_part == pytest.approx(lp_norm_xv(gauss1, 1.1, norm_weight_exponent(1, 0.1)))
        assert rep.total == rep.l1_part + rep.weighted_lp_part
        assert not rep.within_hypothesis

    def test_word_count(self, gauss1):
        # the default family visits every word of length <= N once
        calls = []

        def apply(z, values):
            calls.append(z)
            return values

        norm_E(gauss1, 2, 0.1, letters=["a", "b", "c"], apply=apply)
        assert len(calls) == 3 + 9
        assert len(all_words(1, 2)) == 13

    def test_monotone_in_order(self, gauss1):
        vals = [norm_E(gauss1, N, 0.1).total for N in range(3)]
        assert vals[0] < vals[1] < vals[2]

    def test_bootstrap_on_small_run(self, small_runs):
        series = [norm_E(s.f, 2, 0.1) for s in small_runs[True].states]
        rep = bootstrap_monitor(series, note="1D probe")
        assert rep.held and 1.0 <= rep.ratio < 2.0 and rep.note == "1D probe"

    def test_bootstrap_flags_growth(self):
        assert not bootstrap_monitor([1.0, 1.5, 2.5]).held
        assert bootstrap_monitor([]).held

    @pytest.mark.parametrize("N, delta", [(5, 0.1), (1, 0.0), (1, 1.0)])
    def test_argument_checks(self, gauss1, N, delta):
        with pytest.raises(ValueError):
            norm_E(gauss1, N, delta)
