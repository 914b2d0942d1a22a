import numpy as np
import pytest

from magweyl import geometry as g
from magweyl import moyal as mo
from magweyl import quantize as q
from magweyl.errors import ConfigurationError, InputError, UnsupportedFamilyError
from magweyl.hilbert import PositionGrid

ZERO1 = g.magnetic_field("zero", 1)


def isotropic_moyal(a, b, hbar, X):
    """Closed-form product of ``exp(-a|X|^2)`` and ``exp(-b|X|^2)`` for N = 1."""
    d = 1 + a * b * hbar**2
    return np.exp(-(a + b) / d * np.sum(np.square(X), axis=-1)) / d


def lattice_values(f, sym):
    """Evaluate a closed-form symbol on the sampling lattice of a grid symbol."""
    n = sym.dim
    axes = [sym.midpoint_axis(j) for j in range(n)] + [sym.eta_axis(j) for j in range(n)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return f(np.stack(mesh[:n], -1), np.stack(mesh[n:], -1))


def rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


@pytest.mark.parametrize("hbar", [1.0, 0.5])
@pytest.mark.parametrize("X", [[0.0, 0.0], [0.5, -0.3], [-1.2, 0.8]])
def test_direct_product_of_gaussians(hbar, X):
    f = q.gaussian_symbol(1)
    val = mo.star_direct(f, f, ZERO1, hbar, g.PhaseSpacePoint.from_array(X))
    assert abs(val - isotropic_moyal(0.5, 0.5, hbar, np.array(X))) < 1e-4


def test_direct_product_conjugation():
    B = g.magnetic_field("constant", 2, [0.8])
    base = q.gaussian_symbol(2, [0.1, -0.2, 0.3, 0.0], [1.0, 0.8, 1.2, 0.9])
    f = base * q.mollified_character(g.PhaseSpacePoint([0.4, 0.1], [-0.3, 0.6]), 3.0)
    h = q.gaussian_symbol(2, [-0.2, 0.1, 0.0, 0.4], [0.9, 1.1, 0.7, 1.0]) * q.mollified_character(
        g.PhaseSpacePoint([-0.2, 0.5], [0.2, 0.1]), 3.0)
    pts = np.random.default_rng(0).uniform(-1, 1, size=(10, 4))
    for X in pts:
        X = g.PhaseSpacePoint.from_array(X)
        lhs = np.conj(mo.star_direct(f, h, B, 0.5, X))
        rhs = mo.star_direct(h.conj(), f.conj(), B, 0.5, X)
        assert abs(lhs - rhs) < 1e-6


ROUTE_SYMBOLS = (
    q.gaussian_symbol(2, [0.2, -0.1, 0.3, 0.1], [0.6, 0.7, 1.0, 0.9]),
    q.gaussian_symbol(2, [-0.1, 0.2, -0.2, 0.3], [0.7, 0.6, 0.9, 1.1]),
)


@pytest.mark.parametrize("family,params", [("constant", [1.0]), ("linear", [0.8, 0.3])])
@pytest.mark.parametrize("hbar", [1.0, 0.5])
def test_routes_agree(family, params, hbar):
    B = g.magnetic_field(family, 2, params)
    A = g.vector_potential(B)
    f, h = ROUTE_SYMBOLS
    grid = PositionGrid(2, 6.0, 32)
    prod = mo.star_operator(f, h, A, hbar, grid)
    # lattice midpoints near the origin, where the product is largest
    for s in [(31, 31), (29, 34), (34, 28)]:
        x = np.array([prod.midpoint_axis(0)[s[0]], prod.midpoint_axis(1)[s[1]]])
        X = g.PhaseSpacePoint(x, [0.2, -0.1])
        assert abs(prod(X.x, X.xi) - mo.star_direct(f, h, B, hbar, X)) < 1e-4


def test_direct_rejects_other_families():
    with pytest.raises(UnsupportedFamilyError):
        mo.star_direct(q.harmonic_symbol(1), q.gaussian_symbol(1), ZERO1, 1.0, g.PhaseSpacePoint.zero(1))


def test_direct_budget():
    cfg = mo.StarQuadratureConfig(nodes_per_axis=40, budget=1e6)
    B = g.magnetic_field("bounded", 2, [1.0])
    f = q.gaussian_symbol(2)
    with pytest.raises(ConfigurationError):
        mo.star_direct(f, f, B, 1.0, g.PhaseSpacePoint.zero(2), cfg)


def test_unit_is_neutral():
    grid = PositionGrid(1, 6.0, 48)
    A = g.vector_potential(ZERO1)
    f = q.gaussian_symbol(1, [0.2, 0.1], [0.4, 1.0])
    prod = mo.star_operator(f, q.unit_symbol(1), A, 1.0, grid)
    assert rel(prod.samples(), lattice_values(f, prod)) < 1e-5


def test_operator_route_matches_free_moyal():
    grid = PositionGrid(1, 6.0, 48)
    A = g.vector_potential(ZERO1)
    f = q.gaussian_symbol(1, None, [0.4, 0.4])
    prod = mo.star_operator(f, f, A, 1.0, grid)
    exact = lattice_values(lambda x, xi: isotropic_moyal(1.25, 1.25, 1.0, np.concatenate([x, xi], -1)), prod)
    assert rel(prod.samples(), exact) < 1e-6


def test_operator_route_associative():
    grid = PositionGrid(2, 5.0, 16)
    A = g.vector_potential(g.magnetic_field("constant", 2, [1.0]))
    f, h = ROUTE_SYMBOLS
    k = q.gaussian_symbol(2, None, [0.8, 0.8, 1.0, 1.0])
    F, H, K = (q.op_A(s, A, 0.5, grid) for s in (f, h, k))
    left = q.dequantize((F @ H) @ K, A, 0.5).samples()
    right = q.dequantize(F @ (H @ K), A, 0.5).samples()
    assert rel(left, right) < 1e-8


def test_operator_route_involution():
    grid = PositionGrid(2, 5.0, 16)
    A = g.vector_potential(g.magnetic_field("linear", 2, [0.7, 0.2]))
    f = ROUTE_SYMBOLS[0] * q.mollified_character(g.PhaseSpacePoint([0.3, 0.0], [0.1, -0.4]), 3.0)
    h = ROUTE_SYMBOLS[1]
    lhs = mo.star_operator(f, h, A, 0.5, grid).conj().samples()
    rhs = mo.star_operator(h.conj(), f.conj(), A, 0.5, grid).samples()
    assert rel(lhs, rhs) < 1e-8


def test_self_commutator_vanishes():
    grid = PositionGrid(2, 5.0, 16)
    A = g.vector_potential(g.magnetic_field("constant", 2, [1.0]))
    f = ROUTE_SYMBOLS[0]
    jordan, comm = mo.jordan_and_commutator(f, f, A, 0.5, grid)
    assert np.max(np.abs(comm.core)) < 1e-10 * np.max(np.abs(jordan.core))
    assert np.allclose(jordan.core, mo.star_operator(f, f, A, 0.5, grid).core, atol=1e-14)


def test_jordan_of_real_symbols_is_real():
    grid = PositionGrid(2, 5.0, 16)
    A = g.vector_potential(g.magnetic_field("constant", 2, [1.0]))
    jordan, _ = mo.jordan_and_commutator(*ROUTE_SYMBOLS, A, 0.5, grid)
    vals = jordan.samples()
    assert np.max(np.abs(vals.imag)) < 1e-8 * np.max(np.abs(vals))


def test_canonical_commutator_limit():
    grid = PositionGrid(1, 8.0, 256)
    A = g.vector_potential(ZERO1)
    x1 = q.coordinate_symbol(1, 0, window=1.0)
    xi1 = q.coordinate_symbol(1, 1, window=1.0)
    errs = []
    for hbar in [1.0, 0.5, 0.25]:
        _, comm = mo.jordan_and_commutator(x1, xi1, A, hbar, grid)
        errs.append(abs(comm([0.0], [0.0]) - 1.0))
    # corrections are second order in hbar
    assert errs[1] < 0.35 * errs[0] and errs[2] < 0.35 * errs[1]
    assert errs[2] < 0.05


def test_zero_symbol_has_zero_norm():
    grid = PositionGrid(2, 4.0, 16)
    A = g.vector_potential(g.magnetic_field("constant", 2, [1.0]))
    assert mo.magnetic_norm(q.gaussian_symbol(2, amplitude=0.0), A, 1.0, grid) == 0.0


def test_norm_same_in_both_gauges():
    grid = PositionGrid(2, 4.0, 16)
    B = g.magnetic_field("constant", 2, [1.0])
    f = ROUTE_SYMBOLS[0]
    sym = mo.magnetic_norm(f, g.vector_potential(B, "symmetric"), 0.5, grid, tol=1e-13)
    lan = mo.magnetic_norm(f, g.vector_potential(B, "landau"), 0.5, grid, tol=1e-13)
    assert abs(sym - lan) <= 1e-8 * sym


@pytest.mark.parametrize("variance", [12.0, 20.0])
def test_norm_continuous_in_hbar(variance):
    f = q.gaussian_symbol(1, None, [variance, variance])
    norms = np.array([mo.factorized_norm([f], h) for h in q.dyadic_ladder(7)])
    # Mehler: the Weyl quantization of exp(-(x^2 + xi^2) / (2v)) has norm 1 / (1 + hbar / (2v))
    mehler = np.array([1 / (1 + h / (2 * variance)) for h in q.dyadic_ladder(7)])
    assert np.allclose(norms, mehler, rtol=1e-8)
    assert np.max(np.abs(np.diff(norms)) / norms[1:]) < 0.05


def test_kinetic_symbol_quantizes_to_tensor_product():
    A = g.vector_potential(g.magnetic_field("constant", 2, [1.0]), "symmetric")
    f1 = q.gaussian_symbol(1, [0.2, 0.1], [0.8, 0.6])
    f2 = q.gaussian_symbol(1, [-0.1, 0.3], [0.7, 0.9])
    grid = PositionGrid(2, 4.0, 16)
    line = PositionGrid(1, 4.0, 16)
    zero = g.vector_potential(ZERO1)
    S = q.op_A(mo.kinetic_product_symbol([f1, f2], A), A, 0.5, grid).matrix
    T = np.kron(q.op_A(f1, zero, 0.5, line).matrix, q.op_A(f2, zero, 0.5, line).matrix)
    assert np.max(np.abs(S - T)) < 1e-12 * np.max(np.abs(T))


def test_kinetic_symbol_needs_linear_potential():
    A = g.vector_potential(g.magnetic_field("bounded", 2, [1.0]))
    with pytest.raises(UnsupportedFamilyError):
        mo.kinetic_product_symbol([q.gaussian_symbol(1), q.gaussian_symbol(1)], A)


def test_factorized_defects_match_dense():
    f = q.gaussian_symbol(1, [0.2, -0.1], [0.8, 0.6])
    h = q.gaussian_symbol(1, [-0.3, 0.2], [0.7, 0.9])
    grid = PositionGrid(1, 8.0, 128)
    A = g.vector_potential(ZERO1)
    dense = mo.semiclassical_defects(f, h, A, ZERO1, 0.5, grid, tol=1e-12)
    fact = mo.factorized_defects([f], [h], 0.5, tol=1e-12)
    assert fact.von_neumann_defect == pytest.approx(dense.von_neumann_defect, rel=1e-6)
    assert fact.dirac_defect == pytest.approx(dense.dirac_defect, rel=1e-6)
    assert fact.norm_value == pytest.approx(dense.norm_value, rel=1e-6)


def test_equal_symbols_have_no_dirac_defect():
    f = q.gaussian_symbol(2, [0.1, 0.2, -0.1, 0.0], [0.8, 0.9, 0.7, 1.0])
    grid = PositionGrid(2, 4.0, 16)
    B = g.magnetic_field("constant", 2, [1.0])
    rep = mo.semiclassical_defects(f, f, g.vector_potential(B), B, 0.5, grid)
    assert rep.dirac_defect < 1e-10


def _ladder_defects(f_factors, g_factors, rungs):
    reports = []
    for h in q.dyadic_ladder(rungs):
        grids = [mo.factor_grid([a, b, a * b], h, decay=14.0) for a, b in zip(f_factors, g_factors)]
        reports.append(mo.factorized_defects(f_factors, g_factors, h, grids=grids))
    return reports


def test_free_defects_decay():
    f = q.gaussian_symbol(1, [0.3, -0.2], [0.8, 0.6])
    h = q.gaussian_symbol(1, [-0.2, 0.4], [0.6, 0.9])
    reps = _ladder_defects([f], [h], 7)
    vn = np.array([r.von_neumann_defect for r in reps])
    di = np.array([r.dirac_defect for r in reps])
    assert np.all(vn[1:] / vn[:-1] <= 0.6)
    assert np.all(di[1:] / di[:-1] <= 0.6)
    # fg is recovered as hbar -> 0
    scale = mo.factorized_norm([f], 1 / 64) * mo.factorized_norm([h], 1 / 64)
    assert vn[-1] <= 0.05 * scale


def test_product_symbol_defects_shrink():
    f = [q.gaussian_symbol(1, None, [0.8, 0.6]), q.gaussian_symbol(1, None, [0.7, 0.9])]
    h = [q.gaussian_symbol(1, [0.2, 0.1], [0.6, 0.7]), q.gaussian_symbol(1, [-0.1, 0.2], [0.9, 0.5])]
    reps = _ladder_defects(f, h, 4)
    vn = np.array([r.von_neumann_defect for r in reps])
    di = np.array([r.dirac_defect for r in reps])
    assert vn[-1] < 0.25 * vn[0] and di[-1] < 0.25 * di[0]
    # nonincreasing after the first rung, with 5% slack
    assert np.all(vn[2:] <= 1.05 * vn[1:-1]) and np.all(di[2:] <= 1.05 * di[1:-1])


def test_defect_report_validation():
    with pytest.raises(InputError):
        mo.DefectReport(0.5, -1.0, 0.0, 1.0)
    with pytest.raises(InputError):
        mo.DefectReport(0.5, 0.1, np.nan, 1.0)


def test_defects_csv(tmp_path):
    reps = [mo.DefectReport(1.0, 0.25, 0.5, 1.0), mo.DefectReport(0.5, 0.125, 0.25, 1.0)]
    text = mo.defects_to_csv(reps, tmp_path / "d.csv")
    assert text.splitlines() == ["hbar,von_neumann_defect,dirac_defect,norm_value",
                                 "1.0,0.25,0.5,1.0", "0.5,0.125,0.25,1.0"]
    assert (tmp_path / "d.csv").read_text() == text
