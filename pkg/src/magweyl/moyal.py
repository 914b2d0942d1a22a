"""Magnetic Moyal product, its symmetrized parts and semiclassical defects.

Two routes compute ``f # g``:

* ``star_direct`` integrates the twisted composition integral over
  ``(Y, Z)`` at a single phase-space point with Gauss-Hermite rules.
* ``star_operator`` multiplies the quantized operators and dequantizes.
"""
import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator

from .errors import ConfigurationError, InputError, UnsupportedFamilyError
from .geometry import PhaseSpacePoint, flux_triangle, symplectic_form
from .hilbert import KernelOperator, operator_norm
from .quantize import PlanckParameter, dequantize, op_A
from .symbols import CallableSymbol, GaussianSymbol, poisson_symbol, tensor_symbol

__all__ = [
    "StarQuadratureConfig", "DefectReport", "star_phase", "star_direct", "star_operator",
    "jordan_and_commutator", "magnetic_norm", "commutator_limit_symbol", "semiclassical_defects", "kinetic_product_symbol",
    "KroneckerOperator", "factor_grid", "factorized_defects", "factorized_norm", "defects_to_csv",
]

_CHUNK = 1 << 20


@dataclass
class StarQuadratureConfig:
    """Gauss-Hermite settings for ``star_direct``.

    Parameters
    ----------
    nodes_per_axis : int, optional
        Defaults to 12 for ``N = 1`` and 8 for ``N = 2``.
    taper : float
        Scale applied to the symbols' covariances when placing nodes.
    points : list of PhaseSpacePoint
    budget : float
        Upper bound on tensor nodes per sample point.
    flux_order : int
        Gauss-Legendre order of the flux integrals.
    """

    nodes_per_axis: int = None
    taper: float = 1.0
    points: list = field(default_factory=list)
    budget: float = 1e8
    flux_order: int = 8

    def nodes(self, dim):
        n = self.nodes_per_axis or (12 if dim == 1 else 8)
        if n < 1:
            raise ConfigurationError("nodes_per_axis must be positive")
        return n

    def check_budget(self, dim, analytic_inner):
        n = self.nodes(dim)
        count = float(n) ** (2 * dim if analytic_inner else 4 * dim)
        if count > self.budget:
            raise ConfigurationError(f"{count:.3g} quadrature nodes exceed the budget {self.budget:.3g}")
        return count


@dataclass
class DefectReport:
    """Defect norms of the symmetrized product and scaled commutator at one ``hbar``."""

    hbar: float
    von_neumann_defect: float
    dirac_defect: float
    norm_value: float

    def __post_init__(self):
        vals = (self.hbar, self.von_neumann_defect, self.dirac_defect, self.norm_value)
        if not all(np.isfinite(v) and v >= 0 for v in vals):
            raise InputError(f"defect entries must be finite and nonnegative: {vals}")

    def row(self):
        return [self.hbar, self.von_neumann_defect, self.dirac_defect, self.norm_value]


def star_phase(X, Y, Z, B, hbar, order=8):
    """Total phase of the composition integrand, divided by ``i``.

    ``-(2/hbar) sigma(X - Y, X - Z) - Gamma^B<x-y+z, y-z+x, z-x+y> / hbar``
    for broadcastable arrays of phase-space points ``(..., 2N)``.
    """
    n = X.shape[-1] // 2
    x, y, z = X[..., :n], Y[..., :n], Z[..., :n]
    x, y, z = np.broadcast_arrays(x, y, z)
    flux = flux_triangle(B, x - y + z, y - z + x, z - x + y, order)
    return -(2.0 / hbar) * symplectic_form(X - Y, X - Z) - flux / hbar


def _hermite_nodes(mean, cov, n, taper):
    """Tensor Gauss-Hermite nodes and weights for ``int F(Y) dY`` around a Gaussian envelope."""
    d = len(mean)
    t, w = np.polynomial.hermite.hermgauss(n)
    L = np.linalg.cholesky(taper * cov)
    grids = np.meshgrid(*([t] * d), indexing="ij")
    T = np.stack([g.ravel() for g in grids], axis=-1)
    W = np.ones(len(T))
    for g in np.meshgrid(*([w] * d), indexing="ij"):
        W = W * g.ravel()
    W = W * np.exp(np.sum(T**2, axis=1)) * abs(np.linalg.det(L)) * 2.0 ** (d / 2)
    return mean + np.sqrt(2.0) * T @ L.T, W


def _z_expansion(X, Y, B, hbar, order, quadratic):
    """Taylor data of the phase in ``Z`` at fixed ``Y``: constant, gradient and Hessian.

    The phase is affine in ``Z`` for constant fields and quadratic for
    linear ones (the flux of a linear field is the centroid value times the
    area), so symmetric differences with unit steps are exact.
    """
    d = X.shape[-1]
    E = np.eye(d)
    phase = lambda Z: star_phase(X, Y, Z, B, hbar, order)
    base = phase(np.zeros(d))
    if not quadratic:
        return base, np.stack([phase(E[k]) - base for k in range(d)], axis=-1), None
    plus = [phase(E[k]) for k in range(d)]
    minus = [phase(-E[k]) for k in range(d)]
    w = np.stack([(p - m) / 2 for p, m in zip(plus, minus)], axis=-1)
    Q = np.zeros(base.shape + (d, d))
    for k in range(d):
        Q[..., k, k] = plus[k] + minus[k] - 2 * base
    for k in range(d):
        for l in range(k + 1, d):
            Q[..., k, l] = Q[..., l, k] = (
                phase(E[k] + E[l]) - base - w[..., k] - w[..., l] - 0.5 * (Q[..., k, k] + Q[..., l, l])
            )
    return base, w, Q


def _outer_envelope(f, g, freq, d):
    """Gaussian envelope of ``|f(Y) ghat(w(Y))|`` where ``w`` is affine in ``Y``.

    ``|ghat(w)|`` decays like ``exp(-(w + Im J)^T S (w + Im J) / 2)`` with ``S``
    the covariance of ``g``; the leading terms of both symbols set the envelope.
    """
    tf, tg = f.terms[0], g.terms[0]
    w0 = freq(np.zeros((1, d)))[1]
    wk = freq(np.eye(d))[1]
    w0 = w0[0]
    M = (wk - w0).T
    S = np.linalg.inv(tg.P)
    prec = tf.P.real + M.T @ S @ M
    lin = tf.J.real - M.T @ S @ (w0 + tg.J.imag)
    cov = np.linalg.inv(0.5 * (prec + prec.T))
    return cov @ lin, cov


def _envelope(f):
    if not isinstance(f, GaussianSymbol):
        raise UnsupportedFamilyError("star_direct needs Gaussian-family symbols")
    return f.envelope()


def star_direct(f, g, B, hbar, X, cfg=None):
    """Pointwise magnetic Moyal product by oscillatory quadrature.

    For constant and linear fields the phase is at most quadratic in ``Z``
    at fixed ``Y``, so the ``Z`` integral is a closed-form Gaussian integral
    and only ``Y`` is integrated numerically, on the Gauss-Hermite rule
    matched to the decay of the remaining integrand. Otherwise the full
    tensor rule over ``(Y, Z)`` is used.

    Parameters
    ----------
    f, g : GaussianSymbol
    B : MagneticField
    hbar : float
    X : PhaseSpacePoint
    cfg : StarQuadratureConfig, optional

    Returns
    -------
    complex
    """
    hbar = PlanckParameter(hbar)
    cfg = cfg or StarQuadratureConfig()
    n = f.dim
    if g.dim != n or B.dim != n or X.dim != n:
        raise InputError("star_direct dimensions differ")
    if n > 2:
        raise InputError("star_direct supports N <= 2")
    mean_f, cov_f = _envelope(f)
    mean_g, cov_g = _envelope(g)
    degree = B.degree
    analytic = degree is not None and degree <= 1
    cfg.check_budget(n, analytic)
    nodes = cfg.nodes(n)
    Xa = X.as_array()
    pref = (np.pi * hbar) ** (-2 * n)
    if analytic:
        freq = lambda Y: _z_expansion(Xa, Y, B, hbar, cfg.flux_order, degree == 1)
        mean, cov = _outer_envelope(f, g, freq, 2 * n)
        Ys, Wy = _hermite_nodes(mean, cov, nodes, cfg.taper)
        base, w, Q = freq(Ys)
        return complex(pref * np.sum(Wy * f.evaluate(Ys) * np.exp(1j * base) * g.characteristic(w, Q)))
    Ys, Wy = _hermite_nodes(mean_f, cov_f, nodes, cfg.taper)
    fy = f.evaluate(Ys)
    Zs, Wz = _hermite_nodes(mean_g, cov_g, nodes, cfg.taper)
    gz = Wz * g.evaluate(Zs)
    total = 0j
    rows = max(1, _CHUNK // len(Zs))
    for s in range(0, len(Ys), rows):
        ph = star_phase(Xa, Ys[s:s + rows, None, :], Zs[None], B, hbar, cfg.flux_order)
        total += np.sum((Wy[s:s + rows] * fy[s:s + rows])[:, None] * np.exp(1j * ph) * gz[None])
    return complex(pref * total)


def star_operator(f, g, A, hbar, grid, order=16):
    """``dequantize(op_A(f) op_A(g))`` as a grid symbol."""
    F = op_A(f, A, hbar, grid, order)
    G = op_A(g, A, hbar, grid, order)
    return dequantize(F @ G, A, hbar, order)


def jordan_and_commutator(f, g, A, hbar, grid, order=16):
    """Symmetrized product and scaled commutator ``(FG + GF)/2``, ``(FG - GF)/(i hbar)`` as symbols."""
    hbar = PlanckParameter(hbar)
    F = op_A(f, A, hbar, grid, order)
    G = op_A(g, A, hbar, grid, order)
    FG, GF = F @ G, G @ F
    jordan = dequantize((FG + GF) * 0.5, A, hbar, order)
    comm = dequantize((FG - GF) * (1.0 / (1j * hbar)), A, hbar, order)
    return jordan, comm


def magnetic_norm(f, A, hbar, grid, order=16, **norm_kw):
    """``operator_norm(op_A(f))``."""
    return operator_norm(op_A(f, A, hbar, grid, order), **norm_kw)


def commutator_limit_symbol(f, g, B):
    """The bracket approached by ``(F G - G F) / (i hbar)``.

    The field term matches ``{f, g}^B``; the field-free part enters with the
    opposite sign, since ``(1/(i hbar)) [x, -i hbar d] = 1`` while the
    bracket of ``x`` and ``xi`` is ``-1``.
    """
    if B.is_constant and isinstance(f, GaussianSymbol) and isinstance(g, GaussianSymbol):
        return poisson_symbol(f, g, B, canonical_sign=-1)
    from .geometry import poisson_bracket

    def fn(x, xi):
        X = np.concatenate(np.broadcast_arrays(x, xi), axis=-1)
        flat = X.reshape(-1, X.shape[-1])
        vals = [poisson_bracket(B, f, g, PhaseSpacePoint.from_array(p), canonical_sign=-1) for p in flat]
        return np.asarray(vals).reshape(X.shape[:-1])

    return CallableSymbol(f.dim, fn, label="bracket")


def semiclassical_defects(f, g, A, B, hbar, grid, product=None, bracket=None, order=16, **norm_kw):
    """Operator-norm defects of the symmetrized product and scaled commutator.

    Parameters
    ----------
    f, g : Symbol
        Real symbols.
    A, B : VectorPotential, MagneticField
    hbar : float
    grid : PositionGrid
    product, bracket : Symbol, optional
        Pointwise product and ``commutator_limit_symbol(f, g, B)``; computed
        when omitted.

    Returns
    -------
    DefectReport
    """
    hbar = PlanckParameter(hbar)
    product = product if product is not None else f * g
    bracket = bracket if bracket is not None else commutator_limit_symbol(f, g, B)
    F = op_A(f, A, hbar, grid, order)
    G = op_A(g, A, hbar, grid, order)
    H = op_A(product, A, hbar, grid, order)
    P = op_A(bracket, A, hbar, grid, order)
    FG, GF = F @ G, G @ F
    jordan = (FG + GF) * 0.5 - H
    dirac = (FG - GF) * (1.0 / (1j * hbar)) - P
    return DefectReport(
        float(hbar), operator_norm(jordan, **norm_kw), operator_norm(dirac, **norm_kw), operator_norm(F, **norm_kw)
    )


# ---------------------------------------------------------------------------
# Product symbols for constant fields


def kinetic_product_symbol(factors, A):
    """``prod_j f_j(x_j, xi_j + A_j(x))`` for one-dimensional Gaussian factors.

    For a linear potential (constant field) the magnetic quantization of
    this symbol is exactly the tensor product of the non-magnetic
    quantizations of the factors.
    """
    n = len(factors)
    if A.dim != n or any(fj.dim != 1 for fj in factors):
        raise InputError("need one one-dimensional factor per axis")
    if A.degree is None or A.degree > 1:
        raise UnsupportedFamilyError("kinetic product symbols need a linear potential")
    lin = A.jacobian(np.zeros(n))
    L = np.eye(2 * n)
    L[n:, :n] = lin
    return tensor_symbol(*factors).pullback(L)


class KroneckerOperator:
    """Sum of tensor products ``sum_t c_t (M_t1 x ... x M_tN)`` acting on ``M^N`` vectors.

    Factors may be dense arrays or scipy sparse matrices.
    """

    def __init__(self, terms, shape):
        self.terms = [(complex(c), list(mats)) for c, mats in terms]
        self.shape_axes = tuple(shape)
        size = int(np.prod(shape))
        self.shape = (size, size)

    def _apply(self, v, adjoint=False):
        v = np.asarray(v).reshape(self.shape_axes)
        out = np.zeros(self.shape_axes, dtype=complex)
        for c, mats in self.terms:
            w = v.astype(complex)
            for ax, m in enumerate(mats):
                m = m.conj().T if adjoint else m
                front = np.moveaxis(w, ax, 0)
                flat = m @ front.reshape(front.shape[0], -1)
                w = np.moveaxis(np.asarray(flat).reshape(front.shape), 0, ax)
            out += (np.conj(c) if adjoint else c) * w
        return out.ravel()

    def linear_operator(self):
        return LinearOperator(self.shape, matvec=self._apply, rmatvec=lambda v: self._apply(v, True), dtype=complex)

    def dense(self):
        out = 0
        for c, mats in self.terms:
            mats = [m.toarray() if hasattr(m, "toarray") else m for m in mats]
            k = mats[0]
            for m in mats[1:]:
                k = np.kron(k, m)
            out = out + c * k
        return out


def factor_grid(factors, hbar, decay=24.0, min_points=32):
    """One-dimensional grid resolving a family of one-dimensional Gaussian symbols.

    The window covers every factor out to ``exp(-decay)`` relative decay in
    position and the spacing resolves the same decay in momentum.
    """
    lo, hi, pmax = np.inf, -np.inf, 0.0
    for f in factors:
        for t in f.terms:
            cov = np.linalg.inv(t.P)
            mean = cov @ t.J.real
            reach = np.sqrt(2 * decay * np.diag(cov))
            lo, hi = min(lo, mean[0] - reach[0]), max(hi, mean[0] + reach[0])
            pmax = max(pmax, abs(mean[1]) + reach[1])
    half = max(abs(lo), abs(hi))
    h = np.pi * hbar / pmax
    m = max(min_points, 2 * int(np.ceil(half / h)))
    from .hilbert import PositionGrid

    return PositionGrid(1, half, m + (m % 2), cap=np.inf)


def factorized_defects(f_factors, g_factors, hbar, grids=None, **norm_kw):
    """Defects for product symbols ``prod_j f_j``, ``prod_j g_j`` under the Weyl calculus.

    Each operator is a Kronecker product of banded one-dimensional matrices,
    so the defects are evaluated matrix-free on large per-axis grids.
    Combined with ``kinetic_product_symbol`` this gives the constant-field
    defects of the corresponding magnetic symbols exactly.

    Parameters
    ----------
    f_factors, g_factors : list of GaussianSymbol
        One-dimensional factors, one per axis.
    hbar : float
    grids : list of PositionGrid, optional
        One-dimensional grid per axis; ``factor_grid`` by default.

    Returns
    -------
    DefectReport
    """
    from .geometry import magnetic_field
    from .quantize import banded_weyl_matrix

    hbar = PlanckParameter(hbar)
    n = len(f_factors)
    zero = magnetic_field("zero", 1)
    if grids is None:
        grids = [factor_grid([fj, gj, fj * gj], hbar) for fj, gj in zip(f_factors, g_factors)]
    if len(g_factors) != n or len(grids) != n:
        raise InputError("factor and grid counts differ")
    Fs, Gs, Hs, Ps = [], [], [], []
    for fj, gj, gr in zip(f_factors, g_factors, grids):
        Fs.append(banded_weyl_matrix(fj, hbar, gr))
        Gs.append(banded_weyl_matrix(gj, hbar, gr))
        Hs.append(banded_weyl_matrix(fj * gj, hbar, gr))
        Ps.append(banded_weyl_matrix(poisson_symbol(fj, gj, zero, canonical_sign=-1), hbar, gr))
    FG = [a @ b for a, b in zip(Fs, Gs)]
    GF = [b @ a for a, b in zip(Fs, Gs)]
    shape = [gr.size for gr in grids]
    jordan = KroneckerOperator([(0.5, FG), (0.5, GF), (-1.0, Hs)], shape)
    dirac_terms = [(1.0 / (1j * hbar), FG), (-1.0 / (1j * hbar), GF)]
    for j in range(n):
        dirac_terms.append((-1.0, [Ps[k] if k == j else Hs[k] for k in range(n)]))
    dirac = KroneckerOperator(dirac_terms, shape)
    # the norm of a tensor product is the product of the factor norms
    norm_f = float(np.prod([_kron_norm(KroneckerOperator([(1.0, [F])], [F.shape[0]]), **norm_kw) for F in Fs]))
    return DefectReport(float(hbar), _kron_norm(jordan, **norm_kw), _kron_norm(dirac, **norm_kw), norm_f)


def factorized_norm(factors, hbar, grids=None, **norm_kw):
    """Weyl operator norm of ``prod_j f_j`` as the product of banded one-dimensional norms."""
    from .quantize import banded_weyl_matrix

    hbar = PlanckParameter(hbar)
    grids = grids or [factor_grid([f], hbar) for f in factors]
    out = 1.0
    for f, gr in zip(factors, grids):
        F = banded_weyl_matrix(f, hbar, gr)
        out *= _kron_norm(KroneckerOperator([(1.0, [F])], [gr.size]), **norm_kw)
    return out


def _kron_norm(K, **norm_kw):
    if K.shape[0] <= 64:
        return float(np.linalg.norm(K.dense(), 2))
    return operator_norm(K, **norm_kw)


def defects_to_csv(reports, path=None):
    """CSV text with columns ``hbar, von_neumann_defect, dirac_defect, norm_value``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["hbar", "von_neumann_defect", "dirac_defect", "norm_value"])
    for r in reports:
        w.writerow([repr(float(v)) for v in r.row()])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text
