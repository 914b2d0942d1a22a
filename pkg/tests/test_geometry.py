import numpy as np
import pytest

from magweyl import geometry as g
from magweyl.errors import DomainError, InputError
from magweyl.symbols import GridSymbol, coordinate_symbol, gaussian_symbol

FIELDS = [
    ("zero", []),
    ("constant", [1.3]),
    ("linear", [0.7, 0.4]),
    ("bounded", [1.1]),
]


def _pairs():
    for family, params in FIELDS:
        B = g.magnetic_field(family, 2, params)
        for gauge in g.POTENTIAL_GAUGES[family]:
            yield B, g.vector_potential(B, gauge)


def _cycle(A, a, b, c, order=16):
    return (g.circulation_segment(A, a, b, order) + g.circulation_segment(A, b, c, order)
            + g.circulation_segment(A, c, a, order))


@pytest.mark.parametrize("family,params", FIELDS)
def test_field_antisymmetric(family, params):
    B = g.magnetic_field(family, 2, params)
    x = np.random.default_rng(0).uniform(-2, 2, size=(20, 2))
    M = B.matrix(x)
    assert np.array_equal(M, -np.swapaxes(M, -1, -2))


@pytest.mark.parametrize("B,A", list(_pairs()), ids=lambda o: getattr(o, "gauge", getattr(o, "family", "")))
def test_potential_curl_matches_field(B, A):
    x = np.random.default_rng(1).uniform(-2, 2, size=(30, 2))
    assert np.allclose(A.curl(x), B.matrix(x), atol=1e-10)


def test_degenerate_triangle_has_no_flux():
    B = g.magnetic_field("bounded", 2, [1.0])
    assert g.flux_triangle(B, [0, 0], [0, 0], [0, 0]) == 0.0


def test_constant_flux_is_signed_area():
    b0 = 1.7
    B = g.magnetic_field("constant", 2, [b0])
    assert g.flux_triangle(B, [0, 0], [1, 0], [0, 1]) == pytest.approx(0.5 * b0, abs=1e-15)
    # Monte Carlo surface integral over the unit square
    pts = np.random.default_rng(2).uniform(size=(10**6, 2))
    mc = b0 * np.mean(pts.sum(axis=1) <= 1)
    assert abs(mc - 0.5 * b0) < 5e-3


@pytest.mark.parametrize("order", [4, 8, 16, 32])
def test_linear_flux_exact_at_low_order(order):
    # integral of x_1 over the unit simplex is 1/6
    B = g.magnetic_field("linear", 2, [0.0, 1.0])
    ref = g.flux_triangle(B, [0, 0], [1, 0], [0, 1], order=32)
    assert ref == pytest.approx(1 / 6, abs=1e-14)
    assert abs(g.flux_triangle(B, [0, 0], [1, 0], [0, 1], order=order) - ref) < 1e-12


def test_flux_vanishes_in_one_dimension():
    B = g.magnetic_field("zero", 1)
    assert g.flux_triangle(B, [0.0], [1.0], [2.0]) == 0.0


def test_flux_dimension_mismatch():
    B = g.magnetic_field("constant", 2, [1.0])
    with pytest.raises(InputError):
        g.flux_triangle(B, [0, 0], [1, 0, 0], [0, 1])


def test_quadrature_order_checked():
    B = g.magnetic_field("bounded", 2, [1.0])
    with pytest.raises(InputError):
        g.flux_triangle(B, [0, 0], [1, 0], [0, 1], order=1)


@pytest.mark.parametrize("B,A", list(_pairs()), ids=lambda o: getattr(o, "gauge", getattr(o, "family", "")))
def test_zero_length_segment(B, A):
    assert g.circulation_segment(A, [0.3, -0.2], [0.3, -0.2]) == 0.0


def test_symmetric_gauge_orthogonal_to_rays():
    B = g.magnetic_field("constant", 2, [2.0])
    A = g.vector_potential(B, "symmetric")
    assert abs(g.circulation_segment(A, [0, 0], [1, 1])) < 1e-15


def test_circulation_dimension_mismatch():
    A = g.vector_potential(g.magnetic_field("constant", 2, [1.0]))
    with pytest.raises(InputError):
        g.circulation_segment(A, [0, 0], [1.0])


@pytest.mark.parametrize("B,A", list(_pairs()), ids=lambda o: getattr(o, "gauge", getattr(o, "family", "")))
def test_stokes_on_random_triangles(B, A):
    a, b, c = np.random.default_rng(3).uniform(-1, 1, size=(3, 100, 2))
    assert np.max(np.abs(_cycle(A, a, b, c) - g.flux_triangle(B, a, b, c))) < 1e-8


@pytest.mark.parametrize("family,params", FIELDS)
def test_vertex_swap_flips_flux(family, params):
    B = g.magnetic_field(family, 2, params)
    a, b, c = np.random.default_rng(4).uniform(-1, 1, size=(3, 50, 2))
    assert np.allclose(g.flux_triangle(B, a, c, b), -g.flux_triangle(B, a, b, c), rtol=0, atol=1e-14)


@pytest.mark.parametrize("family,params", [("linear", [0.3]), ("quadratic", [1.0, 0.2, -0.4, 0.5]),
                                           ("cubic", [0.3]), ("oscillatory", [0.8, 1.1, -0.7])])
def test_gauge_gradient_matches_finite_differences(family, params):
    rho = g.gauge_function(family, 2, params if family != "linear" else [0.3, -0.6])
    x = np.random.default_rng(5).uniform(-2, 2, size=(10, 2))
    h = 1e-5
    fd = np.stack([(rho(x + h * e) - rho(x - h * e)) / (2 * h) for e in np.eye(2)], axis=-1)
    assert np.allclose(rho.gradient(x), fd, atol=1e-6)


def test_constant_gauge_leaves_potential():
    A = g.vector_potential(g.magnetic_field("linear", 2, [0.5, 0.2]))
    A2 = g.gauge_transform(A, g.gauge_function("linear", 2, [0.0, 0.0]))
    x = np.random.default_rng(6).uniform(-2, 2, size=(10, 2))
    assert np.array_equal(A2(x), A(x))
    assert A2.field is A.field


def test_pure_gauge_from_zero_potential():
    A = g.vector_potential(g.magnetic_field("zero", 2))
    A2 = g.gauge_transform(A, g.gauge_function("linear", 2, [0.4, -1.2]))
    x = np.random.default_rng(7).uniform(-2, 2, size=(10, 2))
    assert np.allclose(A2(x), [0.4, -1.2])
    assert np.allclose(A2.curl(x), 0.0)


def test_landau_to_symmetric_gauge():
    b0 = 1.4
    B = g.magnetic_field("constant", 2, [b0])
    landau = g.vector_potential(B, "landau")
    sym = g.vector_potential(B, "symmetric")
    x = np.random.default_rng(8).uniform(-2, 2, size=(10, 2))
    # rho = b0 x_1 x_2 / 2
    rho = g.gauge_function("quadratic", 2, [0.0, 0.5 * b0, 0.5 * b0, 0.0])
    moved = g.gauge_transform(landau, rho)
    assert np.allclose(moved(x), sym(x), atol=1e-12)
    a, b, c = np.random.default_rng(9).uniform(-1, 1, size=(3, 10, 2))
    assert np.allclose(_cycle(moved, a, b, c), _cycle(landau, a, b, c), atol=1e-10)


@pytest.mark.parametrize("rho", [("quadratic", [0.3, 0.1, -0.2, 0.6]), ("cubic", [0.25]),
                                 ("oscillatory", [0.5, 0.9, 1.3])])
def test_flux_gauge_invariant(rho):
    B = g.magnetic_field("linear", 2, [0.8, 0.3])
    A = g.vector_potential(B)
    A2 = g.gauge_transform(A, g.gauge_function(rho[0], 2, rho[1]))
    a, b, c = np.random.default_rng(10).uniform(-1, 1, size=(3, 20, 2))
    assert np.allclose(_cycle(A2, a, b, c), _cycle(A, a, b, c), atol=1e-10)


def test_gauge_transform_dimension_mismatch():
    A = g.vector_potential(g.magnetic_field("constant", 2, [1.0]))
    with pytest.raises(InputError):
        g.gauge_transform(A, g.gauge_function("linear", 1, [1.0]))


def test_free_symplectic_form_value():
    B = g.magnetic_field("zero", 2)
    Y = g.PhaseSpacePoint([1, 0], [0, 0])
    Z = g.PhaseSpacePoint([0, 0], [1, 0])
    assert g.sigma_B(B, [0.4, 0.1], Y, Z) == -1.0


@pytest.mark.parametrize("family,params", FIELDS)
def test_symplectic_form_alternating(family, params):
    B = g.magnetic_field(family, 2, params)
    Y = g.PhaseSpacePoint([0.3, -1.0], [0.5, 2.0])
    assert g.sigma_B(B, [0.2, 0.7], Y, Y) == 0.0


def test_symplectic_form_field_term():
    b0 = 0.9
    B = g.magnetic_field("constant", 2, [b0])
    Y = g.PhaseSpacePoint([1, 0], [0, 0])
    Z = g.PhaseSpacePoint([0, 1], [0, 0])
    assert g.sigma_B(B, [0, 0], Y, Z) == pytest.approx(b0)


def _closed_form_symbols():
    f = gaussian_symbol(2, [0.2, -0.1, 0.3, 0.4], [[1.0, 0.2, 0.1, 0.0], [0.2, 1.5, 0.0, 0.3],
                                                   [0.1, 0.0, 0.8, 0.1], [0.0, 0.3, 0.1, 1.2]])
    g1 = gaussian_symbol(2, [-0.3, 0.2, 0.1, -0.5], [1.2, 0.7, 1.1, 0.9])
    h = gaussian_symbol(2, [0.1, 0.4, -0.2, 0.2], [0.9, 1.3, 0.6, 1.0])
    return f, g1, h


POINTS = [g.PhaseSpacePoint([0.1, -0.2], [0.3, 0.5]), g.PhaseSpacePoint([-0.4, 0.6], [0.0, -0.7])]


@pytest.mark.parametrize("X", POINTS)
@pytest.mark.parametrize("family,params", FIELDS)
def test_bracket_algebra(family, params, X):
    B = g.magnetic_field(family, 2, params)
    f, g1, h = _closed_form_symbols()
    assert abs(g.poisson_bracket(B, f, f, X)) < 1e-14
    assert abs(g.poisson_bracket(B, f, g1, X) + g.poisson_bracket(B, g1, f, X)) < 1e-12
    lin = g.poisson_bracket(B, f, 2.0 * g1 + h, X)
    assert abs(lin - 2 * g.poisson_bracket(B, f, g1, X) - g.poisson_bracket(B, f, h, X)) < 1e-8
    leib = g.poisson_bracket(B, f, g1 * h, X)
    expected = g.poisson_bracket(B, f, g1, X) * h(X.x, X.xi) + g1(X.x, X.xi) * g.poisson_bracket(B, f, h, X)
    assert abs(leib - expected) < 1e-8


@pytest.mark.parametrize("X", POINTS)
def test_bracket_analytic_matches_finite_differences(X):
    B = g.magnetic_field("bounded", 2, [1.2])
    f, g1, _ = _closed_form_symbols()
    assert abs(g.poisson_bracket(B, f, g1, X) - g.poisson_bracket(B, f, g1, X, step=1e-4)) < 1e-5


def test_coordinate_bracket():
    B = g.magnetic_field("constant", 2, [0.6])
    x1 = coordinate_symbol(2, 0, window=1e8)
    xi1 = coordinate_symbol(2, 2, window=1e8)
    for X in POINTS:
        assert g.poisson_bracket(B, x1, xi1, X) == pytest.approx(-1.0, abs=1e-5)


@pytest.mark.parametrize("X", POINTS)
def test_momentum_bracket_is_field(X):
    B = g.magnetic_field("bounded", 2, [1.5])
    xi1 = coordinate_symbol(2, 2, window=1e8)
    xi2 = coordinate_symbol(2, 3, window=1e8)
    assert g.poisson_bracket(B, xi1, xi2, X) == pytest.approx(B.component(0, 1, X.x), rel=1e-5)


def test_bracket_outside_grid_symbol():
    from magweyl.hilbert import PositionGrid

    grid = PositionGrid(1, 2.0, 16)
    f = GridSymbol.from_symbol(gaussian_symbol(1), grid, 1.0)
    B = g.magnetic_field("zero", 1)
    with pytest.raises(DomainError):
        g.poisson_bracket(B, f, f, g.PhaseSpacePoint([5.0], [0.0]))
