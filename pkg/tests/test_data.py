import numpy as np
import pytest
from hypothesis import given, strategies as st

from kinvec.data import BoxData, GaussianData, ZeroData, load_table, write_table
from kinvec.grid import PhaseGrid, integrate_xv, velocity_average


@pytest.mark.parametrize("dim", [1, 2])
def test_default_gaussian_has_unit_mass(dim):
    g = PhaseGrid.uniform(dim, (-6, 6), (-6, 6), 49, 49)
    f = GaussianData(dim).sample(g)
    assert integrate_xv(f.values, g) == pytest.approx(1.0, rel=1e-8)
    assert GaussianData(dim).mass == pytest.approx(1.0)


def test_unit_gaussian_formula():
    d = GaussianData(1)
    assert d([0.3], [-0.4]) == pytest.approx(np.exp(-0.25) / np.pi)


@given(
    width_x=st.floats(0.3, 2.0),
    width_v=st.floats(0.3, 2.0),
    amp=st.floats(0.0, 5.0),
    x=st.floats(-3, 3),
)
def test_gaussian_sup_v_is_attained_at_velocity_center(width_x, width_v, amp, x):
    d = GaussianData(1, width_x=width_x, width_v=width_v, amplitude=amp, velocity_center=0.5)
    vs = np.linspace(-4, 4, 801)
    assert np.max(d([x], [vs])) <= d.sup_v([x]) * (1 + 1e-12)
    assert d([x], [0.5]) == pytest.approx(d.sup_v([x]))


@pytest.mark.parametrize("t", [0.0, 0.5, 3.0])
def test_gaussian_density_matches_quadrature(t):
    d = GaussianData(1, center=0.2, width_x=0.7, width_v=0.9, velocity_center=0.3)
    vs = np.linspace(-8, 8, 4001)
    x = 0.9
    numeric = np.trapezoid(d([x - vs * t], [vs]), vs)
    assert d.density(t, [x]) == pytest.approx(numeric, rel=1e-10)


@pytest.mark.parametrize("make", [lambda: GaussianData(2, width_x=0.8), lambda: BoxData(2, 0.7, 0.4, 2.0)])
def test_factors_multiply_to_datum(make, rng):
    d = make()
    xs = [rng.uniform(-1, 1, 50) for _ in range(2)]
    vs = [rng.uniform(-1, 1, 50) for _ in range(2)]
    prod = np.ones(50)
    for i, part in enumerate(d.factors()):
        prod = prod * part([xs[i]], [vs[i]])
    np.testing.assert_allclose(prod, d(xs, vs), rtol=1e-14)


def test_box_indicator_and_sup():
    d = BoxData(1, half_width_x=0.5, half_width_v=1.0, amplitude=3.0)
    assert d([0.4], [0.9]) == 3.0
    assert d([0.6], [0.0]) == 0.0
    assert d.sup_v([0.2]) == 3.0


def test_scaled_is_linear():
    d = GaussianData(1, width_x=0.5)
    assert d.scaled(2.0)([0.1], [0.2]) == pytest.approx(2 * d([0.1], [0.2]))
    assert BoxData(1).scaled(0.0)([0.0], [0.0]) == 0.0


def test_zero_data_samples_to_zero(grid1):
    f = ZeroData(1).sample(grid1)
    assert not f.values.any()
    assert ZeroData(1).scaled(5.0) == ZeroData(1)


@pytest.mark.parametrize(
    "kwargs",
    [dict(dim=4), dict(dim=1, width_x=0.0), dict(dim=1, width_v=-1.0), dict(dim=1, amplitude=-1.0)],
)
def test_gaussian_rejects_bad_parameters(kwargs):
    with pytest.raises(ValueError):
        GaussianData(**kwargs)


def test_sample_checks_dimension_and_support(grid1):
    with pytest.raises(ValueError):
        GaussianData(2).sample(grid1)
    narrow = PhaseGrid.uniform(1, (-1, 1), (-1, 1), 21, 21)
    with pytest.raises(ValueError):
        GaussianData(1).sample(narrow)


def test_table_round_trip(tmp_path):
    g = PhaseGrid.uniform(1, (-4, 4), (-4, 4), 17, 13)
    f = GaussianData(1).sample(g, check_support=False)
    path = tmp_path / "f0.csv"
    write_table(path, f)
    back = load_table(path, g)
    np.testing.assert_array_equal(back.values, f.values)
    np.testing.assert_allclose(velocity_average(back).values, velocity_average(f).values)


def test_table_errors(tmp_path):
    g = PhaseGrid.uniform(1, (-4, 4), (-4, 4), 17, 13)
    with pytest.raises(FileNotFoundError):
        load_table(tmp_path / "missing.csv", g)
    bad = tmp_path / "bad.csv"
    bad.write_text("value\n1.0\n2.0\n")
    with pytest.raises(ValueError, match="rows"):
        load_table(bad, g)
    other = PhaseGrid.uniform(1, (-3, 3), (-4, 4), 17, 13)
    write_table(bad, GaussianData(1).sample(other, check_support=False))
    with pytest.raises(ValueError, match="x1"):
        load_table(bad, g)
