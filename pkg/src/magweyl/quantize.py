"""Magnetic Weyl quantization on a position grid.

``op_A`` builds the kernel

    K(x, y) = (2 pi hbar)^{-N} exp(-i Gamma^A[x, y] / hbar)
              int e^{i (x - y) . eta / hbar} f((x + y) / 2, eta) d eta,

split as an untwisted core (the ``eta`` integral, which depends only on
the symbol) times the circulation phase (which depends only on ``A``).
"""
import numpy as np

from .errors import ConfigurationError, InputError, UnsupportedFamilyError
from .geometry import circulation_segment
from .hilbert import KernelOperator, WaveFunction
from .symbols import (
    CallableSymbol,
    GaussianSymbol,
    GridSymbol,
    MomentumPolynomialSymbol,
    Symbol,
    coordinate_symbol,
    gaussian_symbol,
    harmonic_symbol,
    mollified_character,
    poisson_symbol,
    tensor_symbol,
    unit_symbol,
)

__all__ = [
    "PlanckParameter", "dyadic_ladder", "Symbol", "GaussianSymbol", "GridSymbol", "MomentumPolynomialSymbol",
    "CallableSymbol", "gaussian_symbol", "coordinate_symbol", "unit_symbol", "mollified_character",
    "harmonic_symbol", "tensor_symbol", "poisson_symbol", "weyl_core", "circulation_matrix",
    "banded_weyl_matrix", "spectral_plateaus", "op_A", "wrong_op", "dequantize", "weyl_system", "WeylOperator", "magnetic_momentum",
    "position_operator", "symplectic_fourier", "symbol_from_config",
]

_PAIR_CHUNK = 1 << 21
_CIRCULATION_CACHE = 3


class PlanckParameter(float):
    """Planck constant restricted to ``(0, 1]``."""

    def __new__(cls, hbar):
        hbar = float(hbar)
        if not 0 < hbar <= 1:
            raise InputError(f"hbar must lie in (0, 1], got {hbar}")
        return super().__new__(cls, hbar)

    @property
    def hbar(self):
        return float(self)


def dyadic_ladder(rungs=7):
    """``[1, 1/2, ..., 2^{-(rungs-1)}]``."""
    return [PlanckParameter(2.0**-k) for k in range(rungs)]


def _row_blocks(grid):
    rows = max(1, _PAIR_CHUNK // grid.size)
    for start in range(0, grid.size, rows):
        yield slice(start, min(start + rows, grid.size))


def weyl_core(f, hbar, grid):
    """Untwisted kernel ``(2 pi hbar)^{-N} int e^{i(x-y).eta/hbar} f(m, eta) d eta``."""
    hbar = PlanckParameter(hbar)
    if f.dim != grid.dim:
        raise InputError(f"symbol dimension {f.dim} differs from grid dimension {grid.dim}")
    if hasattr(f, "kernel_core"):
        return f.kernel_core(grid, hbar)
    if hasattr(f, "quadratic_kernel_core"):
        out = f.quadratic_kernel_core(grid, hbar)
        if out is not None:
            return out
    if not hasattr(f, "eta_transform"):
        raise UnsupportedFamilyError(f"{type(f).__name__} has no partial Fourier evaluator")
    pts = grid.points()
    out = np.empty((grid.size, grid.size), dtype=complex)
    scale = (2 * np.pi * hbar) ** (-grid.dim)
    for rows in _row_blocks(grid):
        x = pts[rows, None, :]
        out[rows] = scale * f.eta_transform(0.5 * (x + pts[None]), (x - pts[None]) / hbar)
    return out


def spectral_plateaus(evals, count, tol=2e-3, min_run=4):
    """Values of the first ``count`` clusters of nearly equal eigenvalues.

    A cluster is a run of at least ``min_run`` sorted eigenvalues within
    relative width ``tol``; its median is reported. Degenerate levels
    (such as Landau levels in a box) show up as clusters while edge states
    in between do not.
    """
    e = np.sort(np.asarray(evals, dtype=float))
    out = []
    i = 0
    while i < e.size and len(out) < count:
        j = i
        while j + 1 < e.size and e[j + 1] - e[i] <= tol * abs(e[i]):
            j += 1
        if j - i + 1 >= min_run:
            out.append(float(np.median(e[i : j + 1])))
            i = j + 1
        else:
            i += 1
    return out


def banded_weyl_matrix(f, hbar, grid, rtol=1e-16):
    """Sparse weighted Weyl matrix of a one-dimensional symbol.

    Diagonals ``y = x - t h`` are added until the kernel falls below
    ``rtol`` times its peak, so symbols concentrated in momentum give a
    narrow band and large grids stay cheap.

    Returns
    -------
    scipy.sparse.csr_matrix
    """
    from scipy import sparse

    hbar = PlanckParameter(hbar)
    if grid.dim != 1 or f.dim != 1:
        raise InputError("banded quantization is one-dimensional")
    x = grid.axis(0)
    m, h = grid.points_per_axis, grid.spacing
    scale = h / (2 * np.pi * hbar)
    diags, offsets, peak = [], [], 0.0
    for t in range(m):
        vals = []
        for sgn in ([0] if t == 0 else [t, -t]):
            xi = x[max(0, sgn):m + min(0, sgn)]
            yj = x[max(0, -sgn):m - max(0, sgn)]
            d = scale * f.eta_transform(0.5 * (xi + yj)[:, None], ((xi - yj) / hbar)[:, None])
            vals.append((sgn, d))
        top = max(np.abs(d).max() for _, d in vals)
        peak = max(peak, top)
        if t > 0 and top < rtol * peak:
            break
        for sgn, d in vals:
            diags.append(d)
            offsets.append(-sgn)
    return sparse.diags(diags, offsets, shape=(m, m), format="csr", dtype=complex)


def circulation_matrix(A, grid, order=16):
    """``Gamma^A[x_i, x_j]`` for all grid pairs, cached on the potential."""
    if A.dim != grid.dim:
        raise InputError("potential and grid dimensions differ")
    key = ("circulation", grid.key, order)
    if key not in A._cache:
        pts = grid.points()
        out = np.empty((grid.size, grid.size))
        for rows in _row_blocks(grid):
            out[rows] = circulation_segment(A, pts[rows, None, :], pts[None], order)
        stale = [k for k in A._cache if k[0] == "circulation"]
        for k in stale[: max(0, len(stale) - _CIRCULATION_CACHE + 1)]:
            del A._cache[k]
        A._cache[key] = out
    return A._cache[key]


def op_A(f, A, hbar, grid, order=16, core=None):
    """Magnetic Weyl quantization of ``f`` in the gauge ``A``.

    Parameters
    ----------
    f : Symbol
    A : VectorPotential
    hbar : float
    grid : PositionGrid
    order : int
        Gauss-Legendre order of the circulation integrals.
    core : ndarray, optional
        Precomputed ``weyl_core(f, hbar, grid)``.

    Returns
    -------
    KernelOperator
    """
    hbar = PlanckParameter(hbar)
    if core is None:
        core = weyl_core(f, hbar, grid)
    phase = np.exp(-1j * circulation_matrix(A, grid, order) / hbar)
    return KernelOperator(grid, core * phase)


def wrong_op(f, A, hbar, grid, core=None):
    """Quantization of ``f(m, eta - A(m))`` without circulation phase.

    Shifting the momentum argument multiplies the ``eta`` integral by
    ``exp(i (x - y) . A(m) / hbar)``.
    """
    hbar = PlanckParameter(hbar)
    if core is None:
        core = weyl_core(f, hbar, grid)
    pts = grid.points()
    out = np.empty_like(core)
    for rows in _row_blocks(grid):
        x = pts[rows, None, :]
        mid = 0.5 * (x + pts[None])
        out[rows] = core[rows] * np.exp(1j * np.sum((x - pts[None]) * A(mid), axis=-1) / hbar)
    return KernelOperator(grid, out)


def dequantize(S, A, hbar, order=16):
    """Grid symbol whose quantization in gauge ``A`` is exactly ``S``."""
    hbar = PlanckParameter(hbar)
    if S.grid.points_per_axis % 2:
        raise ConfigurationError("midpoint re-indexing needs an even number of points per axis")
    core = S.kernel * np.exp(1j * circulation_matrix(A, S.grid, order) / hbar)
    return GridSymbol(S.grid, hbar, core, "dequantized")


# ---------------------------------------------------------------------------
# Weyl system and basic observables


def _translate(values, grid, shift):
    """``u(x + shift)`` on the periodic grid via Fourier phases."""
    arr = values.reshape(grid.shape)
    spec = np.fft.fftn(arr)
    for ax in range(grid.dim):
        k = 2 * np.pi * np.fft.fftfreq(grid.points_per_axis, grid.spacing)
        shape = [1] * grid.dim
        shape[ax] = grid.points_per_axis
        spec = spec * np.exp(1j * k * shift[ax]).reshape(shape)
    return np.fft.ifftn(spec).ravel()


class WeylOperator:
    """Matrix-free magnetic Weyl operator ``W^A_hbar(Y)`` on a grid.

    ``[W u](x) = exp(-i (x + hbar y / 2) . eta) exp(-i Gamma^A[x, x + hbar y] / hbar) u(x + hbar y)``
    with the translation carried out exactly in Fourier space.
    """

    def __init__(self, A, hbar, Y, grid, order=16):
        if Y.dim != grid.dim or A.dim != grid.dim:
            raise InputError("Weyl system dimensions differ")
        self.A, self.hbar, self.Y, self.grid, self.order = A, PlanckParameter(hbar), Y, grid, order
        x = grid.points()
        shift = self.hbar * Y.x
        circ = circulation_segment(A, x, x + shift, order)
        self.phase = np.exp(-1j * (x + 0.5 * shift) @ Y.xi) * np.exp(-1j * circ / self.hbar)
        self.shift = shift

    def apply(self, u):
        self.grid.check_same(u.grid)
        return WaveFunction(self.grid, self.phase * _translate(u.values, self.grid, self.shift))

    def adjoint(self):
        return WeylOperator(self.A, self.hbar, -self.Y, self.grid, self.order)

    def dense(self):
        """Materialize as a KernelOperator (small grids only)."""
        eye = np.eye(self.grid.size, dtype=complex)
        cols = [self.apply(WaveFunction(self.grid, eye[:, j])).values for j in range(self.grid.size)]
        return KernelOperator.from_matrix(self.grid, np.stack(cols, axis=1))


def weyl_system(A, hbar, Y, grid, order=16):
    """The magnetic Weyl operator at phase-space point ``Y``."""
    return WeylOperator(A, hbar, Y, grid, order)


def _spectral_derivative(grid, axis):
    m = grid.points_per_axis
    k = 2 * np.pi * np.fft.fftfreq(m, grid.spacing)
    f = np.fft.fft(np.eye(m), axis=0)
    d1 = np.fft.ifft(k[:, None] * f, axis=0)
    mats = [np.eye(m)] * grid.dim
    mats[axis] = d1
    out = mats[0]
    for mat in mats[1:]:
        out = np.kron(out, mat)
    return out


def position_operator(j, grid):
    """Multiplication by ``x_j``."""
    return KernelOperator.multiplication(grid, grid.points()[:, j])


def magnetic_momentum(A, hbar, j, grid):
    """``-i hbar d_j - A_j`` with a Fourier-space derivative (axis ``j`` is 0-based)."""
    hbar = PlanckParameter(hbar)
    if not 0 <= j < grid.dim:
        raise InputError(f"axis {j} outside 0..{grid.dim - 1}")
    mat = hbar * _spectral_derivative(grid, j) - np.diag(A(grid.points())[:, j])
    return KernelOperator.from_matrix(grid, mat)


def symplectic_fourier(f):
    """Symplectic Fourier transform with ``f(Y) = (2pi)^{-N} int F f(X) e^{-i sigma(X,Y)} dX``."""
    if not isinstance(f, GaussianSymbol):
        raise UnsupportedFamilyError("symplectic Fourier transform is available for closed-form symbols")
    return f.symplectic_fourier()


def symbol_from_config(record):
    """Closed-form symbol from ``{"family": ..., "dim": N, ...}``.

    Families: ``gaussian`` (``center``, ``cov``, ``amplitude``),
    ``coordinate`` (``index``, ``window``), ``unit`` (``width``),
    ``character`` (``point``, ``width``), ``harmonic`` (``mass``).
    """
    from .geometry import PhaseSpacePoint

    fam = record.get("family")
    dim = int(record.get("dim", 1))
    if fam == "gaussian":
        return gaussian_symbol(dim, record.get("center"), record.get("cov", 1.0), record.get("amplitude", 1.0))
    if fam == "coordinate":
        return coordinate_symbol(dim, int(record["index"]), record.get("window", 25.0), record.get("center"))
    if fam == "unit":
        return unit_symbol(dim, record.get("width", 1e4))
    if fam == "character":
        return mollified_character(PhaseSpacePoint.from_array(record["point"]), record.get("width", 10.0))
    if fam == "harmonic":
        return harmonic_symbol(dim, record.get("mass", 1.0))
    raise InputError(f"unknown symbol family {fam!r}")
