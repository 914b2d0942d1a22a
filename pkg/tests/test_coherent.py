import numpy as np
import pytest

from magweyl import coherent as co
from magweyl.errors import DomainError, InputError, UnsupportedFamilyError, WindowError
from magweyl.geometry import (
    PhaseSpacePoint,
    gauge_function,
    gauge_transform,
    magnetic_field,
    symplectic_form,
    vector_potential,
)
from magweyl.hilbert import PositionGrid, WaveFunction, inner_product
from magweyl.symbols import gaussian_symbol, harmonic_symbol, unit_symbol


def free(dim):
    B = magnetic_field("zero", dim)
    return B, vector_potential(B)


@pytest.mark.parametrize("kind", co.FIDUCIAL_KINDS)
@pytest.mark.parametrize("hbar", [1.0, 0.25, 1 / 16])
def test_fiducial_unit_norm(kind, hbar):
    v = co.FiducialVector(kind, 1)
    grid = PositionGrid(1, 8.0, 16384, cap=np.inf)
    vals = v.scaled(grid.points(), hbar)
    assert abs(np.sum(vals**2) * grid.cell_volume - 1) < 1e-8


def test_fiducial_rejects_unknown_kind():
    with pytest.raises(InputError):
        co.FiducialVector("square", 1)


def test_origin_vector_is_scaled_fiducial():
    v = co.FiducialVector("gaussian", 1)
    _, A = free(1)
    grid = PositionGrid(1, 6.0, 96)
    c = co.coherent_vector(v, A, 0.5, PhaseSpacePoint.zero(1), grid)
    assert np.allclose(c.values, v.scaled(grid.points(), 0.5), atol=1e-12)


@pytest.mark.parametrize("kind", ["gaussian", "hermite"])
def test_free_vector_modulus_is_translated_fiducial(kind):
    v = co.FiducialVector(kind, 2)
    _, A = free(2)
    Z = PhaseSpacePoint([0.4, -0.3], [1.2, 0.7])
    c = co.coherent_vector(v, A, 0.25, Z)
    assert c.wave.norm() == pytest.approx(1.0, abs=1e-10)
    expected = np.abs(v.scaled(c.grid.points() - Z.x, 0.25))
    assert np.allclose(np.abs(c.values), expected, atol=1e-8)


def test_center_near_boundary():
    v = co.FiducialVector("gaussian", 1)
    _, A = free(1)
    with pytest.raises(DomainError):
        co.coherent_vector(v, A, 1.0, PhaseSpacePoint([3.5], [0.0]), PositionGrid(1, 4.0, 64))


@pytest.mark.parametrize("family,params", [("constant", [1.0]), ("bounded", [1.0])])
def test_self_transition_is_one(family, params):
    A = vector_potential(magnetic_field(family, 2, params))
    v = co.FiducialVector("gaussian", 2)
    c = co.coherent_vector(v, A, 0.5, PhaseSpacePoint([0.2, 0.1], [0.3, -0.4]))
    assert co.transition_probability(c, c) == pytest.approx(1.0, abs=1e-10)


Z0 = PhaseSpacePoint([0.3, -0.2], [0.5, 0.1])
Y0 = PhaseSpacePoint([0.8, 0.1], [0.2, 0.6])


def coherent_pair(A, hbar, Z=Z0, Y=Y0):
    v = co.FiducialVector("gaussian", A.dim)
    grid = co.coherent_grid(v, hbar, [Z, Y], A)
    return co.coherent_vector(v, A, hbar, Z, grid), co.coherent_vector(v, A, hbar, Y, grid)


@pytest.mark.parametrize("hbar", [1.0, 0.5, 0.25])
def test_free_transition_probability(hbar):
    c1, c2 = coherent_pair(free(2)[1], hbar)
    p = co.transition_probability(c1, c2)
    assert abs(p - co.free_transition_probability(Z0, Y0, hbar)) < 1e-5
    assert p == co.transition_probability(c2, c1)


def test_transition_probability_decays_along_ladder():
    A = vector_potential(magnetic_field("constant", 2, [1.0]))
    Y = PhaseSpacePoint([1.3, 0.4], [-0.3, 0.9])
    probs = [co.transition_probability(*coherent_pair(A, h, Y=Y)) for h in [1.0, 0.5, 0.25, 0.125, 1 / 16]]
    assert np.all(np.diff(probs) < 0)
    assert probs[-1] < 1e-3


@pytest.mark.parametrize("hbar", [1.0, 0.25])
def test_transition_probability_gauge_independent(hbar):
    B = magnetic_field("constant", 2, [1.0])
    p_sym = co.transition_probability(*coherent_pair(vector_potential(B, "symmetric"), hbar))
    p_lan = co.transition_probability(*coherent_pair(vector_potential(B, "landau"), hbar))
    assert abs(p_sym - p_lan) < 1e-8


def test_overlap_modulus_gauge_covariant():
    B = magnetic_field("constant", 2, [1.0])
    v = co.FiducialVector("gaussian", 2)
    A = vector_potential(B, "symmetric")
    rho = gauge_function("oscillatory", 2, [0.4, 0.7, -0.3])
    moved = gauge_transform(A, rho)
    grid = co.coherent_grid(v, 0.5, [Z0], A)
    rng = np.random.default_rng(0)
    raw = rng.standard_normal(grid.size) + 1j * rng.standard_normal(grid.size)
    u = WaveFunction(grid, raw)
    u_moved = WaveFunction(grid, np.exp(1j * rho(grid.points()) / 0.5) * raw)
    before = abs(inner_product(u, co.coherent_vector(v, A, 0.5, Z0, grid).wave))
    after = abs(inner_product(u_moved, co.coherent_vector(v, moved, 0.5, Z0, grid).wave))
    assert abs(before - after) < 1e-8 * before


def test_transition_probability_rejects_mismatch():
    B = magnetic_field("constant", 2, [1.0])
    c1, _ = coherent_pair(vector_potential(B, "symmetric"), 0.5)
    c2, _ = coherent_pair(vector_potential(B, "landau"), 0.5)
    with pytest.raises(InputError):
        co.transition_probability(c1, c2)
    c3, _ = coherent_pair(vector_potential(B, "symmetric"), 0.25)
    with pytest.raises(InputError):
        co.transition_probability(c1, c3)


@pytest.mark.parametrize("hbar", [1.0, 0.5])
def test_resolution_of_identity_free(hbar):
    v = co.FiducialVector("gaussian", 1)
    _, A = free(1)
    c = co.coherent_vector(v, A, hbar, PhaseSpacePoint.zero(1), PositionGrid(1, 8.0, 128))
    assert abs(co.resolution_of_identity(c.wave, v, A, hbar) - 1) < 1e-3


def hermite_state(hbar):
    half = 7.0
    grid = PositionGrid(2, half, 2 * int(np.ceil(half / (0.25 * np.sqrt(hbar)))), cap=np.inf)
    return WaveFunction(grid, co.FiducialVector("hermite", 2)(grid.points())).normalized()


def test_resolution_of_identity_magnetic_hermite():
    A = vector_potential(magnetic_field("constant", 2, [1.0]))
    v = co.FiducialVector("gaussian", 2)
    assert abs(co.resolution_of_identity(hermite_state(0.5), v, A, 0.5) - 1) < 1e-3


def test_resolution_of_identity_tail_accounting():
    A = vector_potential(magnetic_field("constant", 2, [1.0]))
    v = co.FiducialVector("gaussian", 2)
    u = hermite_state(0.5)
    with pytest.raises(WindowError) as err:
        co.resolution_of_identity(u, v, A, 0.5, cells=co.PhaseCells(half_width=1.0))
    assert err.value.required_half_width > 1.0
    cells = co.PhaseCells(half_width=1.2, tail_budget=1.0)
    value, res = co.resolution_of_identity(u, v, A, 0.5, cells=cells, details=True)
    assert 0.05 < res.tail_mass < 0.9
    assert abs(value + res.tail_mass - 1) < 1e-3


def test_berezin_of_constant_matches_resolution():
    A = vector_potential(magnetic_field("constant", 2, [1.0]))
    v = co.FiducialVector("gaussian", 2)
    val = co.berezin_average(lambda Y: np.ones(Y.shape[:-1]), v, A, 0.5, Z0)
    c = co.coherent_vector(v, A, 0.5, Z0)
    cells = co.PhaseCells(center=Z0.as_array())
    assert val == pytest.approx(co.resolution_of_identity(c.wave, v, A, 0.5, cells=cells), abs=1e-12)
    assert abs(val - 1) < 1e-3


def test_berezin_of_odd_function_vanishes():
    v = co.FiducialVector("gaussian", 1)
    _, A = free(1)
    val = co.berezin_average(lambda Y: Y[..., 0], v, A, 0.5, PhaseSpacePoint.zero(1), bound=6.0)
    assert abs(val) < 1e-6


def test_pullback_vanishes_on_equal_tangents():
    v = co.FiducialVector("gaussian", 2)
    A = vector_potential(magnetic_field("constant", 2, [1.0]))
    T = PhaseSpacePoint([0.3, -0.1], [0.2, 0.5])
    assert abs(co.pullback_form(v, A, 0.5, Z0, T, T)) < 1e-8


@pytest.mark.parametrize("Y,Zt", [([1.0, 0.0], [0.0, 1.0]), ([0.3, -0.7], [0.5, 0.4])])
def test_free_pullback_is_symplectic_form(Y, Zt):
    v = co.FiducialVector("gaussian", 1)
    _, A = free(1)
    Y, Zt = PhaseSpacePoint.from_array(Y), PhaseSpacePoint.from_array(Zt)
    ref = symplectic_form(Y.as_array(), Zt.as_array())
    assert abs(co.pullback_form(v, A, 1.0, PhaseSpacePoint([0.3], [0.2]), Y, Zt) - ref) <= 0.02 * abs(ref)


def test_expectation_routes_agree_and_are_real():
    B, A = free(1)
    v = co.FiducialVector("gaussian", 1)
    f = gaussian_symbol(1, [0.1, 0.4], 1.0)
    value, first, second = co.coherent_expectation(f, v, A, B, 0.5, PhaseSpacePoint([0.3], [0.5]), routes=True)
    assert abs(first - second) < 1e-4
    assert abs(value.imag) < 1e-10


@pytest.mark.parametrize("kind", co.FIDUCIAL_KINDS)
def test_expectation_of_unit_symbol(kind):
    B, A = free(1)
    v = co.FiducialVector(kind, 1)
    val = co.coherent_expectation(unit_symbol(1), v, A, B, 0.5, PhaseSpacePoint([0.3], [0.5]))
    assert abs(val - 1) < 1e-5


def test_expectation_needs_transformable_symbol():
    B, A = free(1)
    with pytest.raises(UnsupportedFamilyError):
        co.coherent_expectation(harmonic_symbol(1), co.FiducialVector("gaussian", 1), A, B, 0.5, PhaseSpacePoint.zero(1))


def test_expectation_localizes_on_ladder():
    B, A = free(1)
    v = co.FiducialVector("gaussian", 1)
    Z = PhaseSpacePoint([0.3], [0.5])
    f = gaussian_symbol(1, [0.1, 0.4], [1.0, 0.8])
    target = f(Z.x, Z.xi).real
    errs = [abs(co.coherent_expectation(f, v, A, B, h, Z) - target) for h in [0.5, 0.25, 0.125, 1 / 16, 1 / 32]]
    assert np.all(np.array(errs[1:]) / np.array(errs[:-1]) <= 0.6)


@pytest.mark.parametrize("order", [1, 2])
def test_richardson_recovers_polynomial_limit(order):
    h = np.array([2.0**-k for k in range(6)])
    vals = 0.7 + 0.3 * h**order - 0.2 * h ** (order + 1)
    limit, detected, _ = co.richardson_limit(h, vals)
    assert detected == order
    assert abs(limit - 0.7) < 1e-10


def test_richardson_rejects_irregular_ladder():
    with pytest.raises(InputError):
        co.richardson_limit([1.0, 0.5, 0.3], [1.0, 2.0, 3.0])


def test_scaled_family_scan():
    B, A = free(1)
    v = co.FiducialVector("gaussian", 1)
    Z = PhaseSpacePoint([0.3], [0.5])
    f = gaussian_symbol(1, [0.1, 0.4], [1.0, 0.8])
    ladder = [2.0**-k for k in range(6)]
    base = co.state_continuity_scan(lambda h: f, v, A, B, Z, ladder=ladder)
    scaled = co.state_continuity_scan(lambda h: f * (1 + h), v, A, B, Z, ladder=ladder, reference=f(Z.x, Z.xi).real)
    assert np.allclose(scaled.values, np.array(base.values) * (1 + np.array(ladder)), rtol=1e-10)
    assert abs(scaled.limit - f(Z.x, Z.xi).real) < 1e-3
    assert scaled.continuous


def test_scan_csv(tmp_path):
    rows = [(1.0, 0.5, 0.25, 0.25), (0.0, 0.25, None, None)]
    text = co.scan_to_csv(rows, tmp_path / "s.csv")
    assert text == "hbar,value,reference,abs_error\n1.0,0.5,0.25,0.25\n0.0,0.25,,\n"
    assert (tmp_path / "s.csv").read_text() == text
