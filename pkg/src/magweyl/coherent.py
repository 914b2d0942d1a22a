"""Magnetic coherent vectors and their semiclassical limits.

A coherent vector centred at ``Z = (z, zeta)`` is

    [v^A(Z)](x) = exp(i (x - z/2) . zeta / hbar) exp(i Gamma^A[z, x] / hbar) v_hbar(x - z),

with ``v_hbar(x) = hbar^{-N/4} v(x / sqrt(hbar))`` a scaled fiducial vector.
Everything is sampled on local grids centred at ``z`` whose Fourier
lattice is centred at the local carrier ``(zeta + A(z)) / hbar``, so the
grid size does not grow as ``hbar`` shrinks.
"""
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .errors import (
    ConsistencyError,
    DomainError,
    InputError,
    NumericalError,
    UnsupportedFamilyError,
    WindowError,
)
from .geometry import (
    PhaseSpacePoint,
    circulation_segment,
    flux_triangle,
    magnetic_field,
    vector_potential,
)
from .hilbert import PositionGrid, WaveFunction, inner_product
from .quantize import PlanckParameter, WeylOperator, op_A
from .symbols import GaussianSymbol, GridSymbol, MomentumPolynomialSymbol

__all__ = [
    "FiducialVector", "CoherentVector", "PhaseCells", "QuadratureResult", "ScanResult",
    "coherent_grid", "coherent_vector", "transition_probability", "free_transition_probability",
    "phase_space_quadrature", "resolution_of_identity", "berezin_average", "coherent_expectation",
    "pullback_form", "richardson_limit", "state_continuity_scan", "scan_to_csv", "scan_sidecar",
]

FIDUCIAL_KINDS = ("gaussian", "hermite", "bump")
_CHECK_POINTS = 16


def _as_point(Z, dim=None):
    if isinstance(Z, PhaseSpacePoint):
        P = Z
    else:
        P = PhaseSpacePoint.from_array(Z)
    if dim is not None and P.dim != dim:
        raise InputError(f"phase-space point of dimension {P.dim}, expected {dim}")
    return P


# ---------------------------------------------------------------------------
# fiducial vectors


class FiducialVector:
    """Closed-form unit vector generating a coherent family.

    Parameters
    ----------
    kind : {"gaussian", "hermite", "bump"}
        Standard Gaussian ``pi^{-N/4} exp(-|x|^2/2)``, its first excitation
        along ``axis``, or the compactly supported bump
        ``exp(-1 / (1 - |x|^2 / R^2))``.
    dim : int
    axis : int
        Excited axis of the Hermite fiducial.
    radius : float
        Support radius ``R`` of the bump.
    """

    def __init__(self, kind="gaussian", dim=1, axis=0, radius=3.0):
        if kind not in FIDUCIAL_KINDS:
            raise InputError(f"unknown fiducial {kind!r}; expected one of {FIDUCIAL_KINDS}")
        if dim not in (1, 2, 3):
            raise InputError(f"dimension must be 1, 2 or 3, got {dim}")
        if not 0 <= axis < dim:
            raise InputError(f"excited axis {axis} out of range")
        self.kind, self.dim, self.axis, self.radius = kind, dim, axis, float(radius)
        self._norm = self._bump_norm() if kind == "bump" else 1.0

    def __repr__(self):
        return f"FiducialVector({self.kind!r}, dim={self.dim})"

    @property
    def key(self):
        return (self.kind, self.dim, self.axis, self.radius)

    def _bump_norm(self):
        R, n = self.radius, self.dim
        radial, _ = integrate.quad(lambda r: np.exp(-2.0 / (1.0 - (r / R) ** 2)) * r ** (n - 1), 0, R, limit=200)
        sphere = 2 * np.pi ** (n / 2) / special.gamma(n / 2)
        return 1.0 / math.sqrt(sphere * radial)

    def __call__(self, x):
        """Values ``v(x)`` for positions ``x[..., N]``."""
        x = np.asarray(x, dtype=float)
        r2 = np.sum(x**2, axis=-1)
        if self.kind == "bump":
            inside = r2 < self.radius**2
            out = np.zeros(r2.shape)
            out[inside] = np.exp(-1.0 / (1.0 - r2[inside] / self.radius**2))
            return out * self._norm
        g = np.pi ** (-self.dim / 4) * np.exp(-0.5 * r2)
        if self.kind == "hermite":
            g = math.sqrt(2.0) * x[..., self.axis] * g
        return g

    def scaled(self, x, hbar):
        """``v_hbar(x) = hbar^{-N/4} v(x / sqrt(hbar))``."""
        s = math.sqrt(hbar)
        return hbar ** (-self.dim / 4) * self(np.asarray(x, dtype=float) / s)

    @property
    def reach(self):
        """Radius (unscaled) beyond which ``|v|`` is below about ``1e-8``."""
        return {"gaussian": 6.0, "hermite": 6.5, "bump": self.radius + 0.5}[self.kind]

    @property
    def spacing(self):
        """Grid spacing in units of ``sqrt(hbar)`` that resolves ``v_hbar``."""
        return {"gaussian": 0.25, "hermite": 0.25, "bump": 0.01 * self.radius}[self.kind]

    @property
    def bandwidth(self):
        """Wavenumber (unscaled) beyond which the spectrum of ``v`` is negligible."""
        return {"gaussian": 6.5, "hermite": 7.0, "bump": 320.0 / self.radius}[self.kind]


# ---------------------------------------------------------------------------
# grids and vectors


def coherent_grid(v, hbar, centers, A=None, spacing=None, margin=None, max_points=None):
    """Local grid able to hold coherent vectors centred at ``centers``.

    The box covers every centre plus ``margin`` (default the fiducial
    reach) in units of ``sqrt(hbar)``; the Fourier lattice is centred on
    the mean carrier ``(zeta + A(z)) / hbar``.
    """
    hbar = PlanckParameter(hbar)
    s = math.sqrt(hbar)
    pts = [_as_point(Z, v.dim) for Z in (centers if isinstance(centers, (list, tuple)) else [centers])]
    zs = np.array([P.x for P in pts])
    carriers = np.array([P.xi + (A(P.x) if A is not None else 0.0) for P in pts]) / hbar
    margin = (v.reach if margin is None else margin) * s
    lo, hi = zs.min(axis=0) - margin, zs.max(axis=0) + margin
    k0 = 0.5 * (carriers.min(axis=0) + carriers.max(axis=0))
    spread = np.max(np.abs(carriers - k0)) + v.bandwidth / s
    if A is not None:
        jac = np.max([np.linalg.norm(A.jacobian(P.x), 2) for P in pts])
        spread += jac * margin / hbar
    h = min((v.spacing if spacing is None else spacing) * s, np.pi / spread)
    half = 0.5 * float(np.max(hi - lo))
    m = 2 * math.ceil(half / h)
    if max_points is not None and m > max_points:
        raise DomainError(f"coherent grid needs {m} points per axis, above {max_points}")
    return PositionGrid(v.dim, half, m, origin=0.5 * (lo + hi), cap=np.inf, dual_origin=k0)


def _zero_potential(dim):
    return vector_potential(magnetic_field("zero", dim))


def _same_gauge(A1, A2):
    if A1 is A2:
        return True
    return A1.gauge == A2.gauge and repr(A1.field) == repr(A2.field)


def _mur(v, A, hbar, Z, x, order):
    """Unnormalized coherent vector at positions ``x``."""
    circ = circulation_segment(A, Z.x, x, order)
    phase = ((x - 0.5 * Z.x) @ Z.xi + circ) / hbar
    return np.exp(1j * phase) * v.scaled(x - Z.x, hbar)


def _periodized(v, hbar, grid):
    """``v_hbar`` wrapped onto the periodic box of ``grid``."""
    pts = grid.points()
    period = 2 * grid.half_width
    base = pts - period * np.round(pts / period)
    out = np.zeros(grid.size)
    for shift in np.ndindex(*(3,) * grid.dim):
        out = out + v.scaled(base + period * (np.array(shift) - 1), hbar)
    return out


@dataclass(frozen=True)
class CoherentVector:
    """A normalized magnetic coherent vector on a grid."""

    center: PhaseSpacePoint
    hbar: float
    A: object
    wave: WaveFunction
    fiducial: FiducialVector

    @property
    def grid(self):
        return self.wave.grid

    @property
    def values(self):
        return self.wave.values


def coherent_vector(v, A, hbar, Z, grid=None, order=16, verify=True, seed=0):
    """The coherent vector ``v^A_hbar(Z)`` sampled on ``grid``.

    Parameters
    ----------
    v : FiducialVector
    A : VectorPotential
    hbar : float
    Z : PhaseSpacePoint or array of length ``2N``
    grid : PositionGrid, optional
        Default :func:`coherent_grid` around ``Z``.
    order : int
        Gauss-Legendre order of the circulations.
    verify : bool
        Cross-check against the Weyl-system construction and against
        pointwise evaluation at random grid points.

    Returns
    -------
    CoherentVector

    Raises
    ------
    DomainError
        If ``z`` is closer than ``3 sqrt(hbar)`` to the grid boundary.
    ConsistencyError
        If the two constructions disagree beyond ``1e-8``.
    """
    hbar = PlanckParameter(hbar)
    Z = _as_point(Z, v.dim)
    if A.dim != v.dim:
        raise InputError("potential and fiducial dimensions differ")
    if grid is None:
        grid = coherent_grid(v, hbar, [Z], A)
    if not grid.contains(Z.x, margin=3 * math.sqrt(hbar)):
        raise DomainError(f"center {Z.x} lies within 3 sqrt(hbar) of the grid boundary")
    pts = grid.points()
    raw = _mur(v, A, hbar, Z, pts, order)
    norm = math.sqrt(np.sum(np.abs(raw) ** 2) * grid.cell_volume)
    if not np.isfinite(norm) or norm == 0:
        raise NumericalError("coherent vector vanishes on the grid")
    values = raw / norm
    if verify:
        rng = np.random.default_rng(seed)
        idx = rng.choice(grid.size, size=min(_CHECK_POINTS, grid.size), replace=False)
        direct = _mur(v, A, hbar, Z, pts[idx], order) / norm
        weyl = WeylOperator(_zero_potential(v.dim), hbar, PhaseSpacePoint(-Z.x / hbar, -Z.xi / hbar), grid)
        translated = weyl.apply(WaveFunction(grid, _periodized(v, hbar, grid))).values
        path = np.exp(1j * circulation_segment(A, Z.x, pts, order) / hbar) * translated / norm
        err = max(np.max(np.abs(direct - values[idx])), np.max(np.abs(path - values)) * grid.cell_volume**0.5)
        if err > 1e-8:
            raise ConsistencyError(f"coherent vector constructions disagree by {err:.3e}", {"error": err})
    return CoherentVector(Z, float(hbar), A, WaveFunction(grid, values), v)


def transition_probability(c1, c2):
    """``|<c1, c2>|^2`` for coherent vectors on a common grid."""
    if c1.hbar != c2.hbar:
        raise InputError(f"Planck parameters differ: {c1.hbar} vs {c2.hbar}")
    if not _same_gauge(c1.A, c2.A):
        raise InputError(f"gauges differ: {c1.A!r} vs {c2.A!r}")
    return float(abs(inner_product(c1.wave, c2.wave)) ** 2)


def free_transition_probability(Z, Y, hbar):
    """Transition probability of standard Gaussian coherent states without field."""
    d = _as_point(Z).as_array() - _as_point(Y).as_array()
    return float(np.exp(-np.sum(d**2) / (2 * hbar)))


# ---------------------------------------------------------------------------
# phase-space quadrature


@dataclass
class PhaseCells:
    """Midpoint rule on a phase-space box.

    Attributes
    ----------
    half_width : float, optional
        Window half-width per coordinate, default ``max(6 sqrt(hbar), 3)``.
    cells_per_width : float
        Cells per ``sqrt(hbar)`` along each position axis.
    tail_budget : float
        Largest tolerated integrand mass outside the window.
    margin : float
        Width of the shell beyond the window, in ``sqrt(hbar)``, whose
        mass estimates the tail.
    center : array_like, optional
        Window centre ``(y, eta)``; default the grid origins.
    """

    half_width: float | None = None
    cells_per_width: float = 1.5
    tail_budget: float = 1e-4
    margin: float = 4.0
    center: object = None

    def window(self, hbar):
        return max(6 * math.sqrt(hbar), 3.0) if self.half_width is None else float(self.half_width)


@dataclass
class QuadratureResult:
    value: float
    tail_mass: float
    half_width: float
    required_half_width: float
    cells: int
    skipped: int

    def sidecar(self):
        return {k: float(v) if isinstance(v, float) else v for k, v in self.__dict__.items()}


def _fft_size(n):
    return int(2 ** math.ceil(math.log2(max(n, 2))))


def _box_sums(mass, width):
    """Sums of ``mass`` over all boxes of ``width`` points per axis, keyed by lower corner."""
    c = mass
    for ax in range(mass.ndim):
        c = np.cumsum(c, axis=ax)
        c = np.concatenate([np.zeros_like(c.take([0], axis=ax)), c], axis=ax)
        hi = c.take(np.arange(width, c.shape[ax]), axis=ax)
        lo = c.take(np.arange(0, c.shape[ax] - width), axis=ax)
        c = hi - lo
    return c


def phase_space_quadrature(u, v, A, hbar, cells=None, weight=None, bound=1.0, order=16, skip=1e-15, chunk=16):
    """Midpoint quadrature of ``|<v^A(Y), u>|^2 g(Y) dY / (2 pi hbar)^N``.

    For each position cell ``y`` the grid function
    ``v_hbar(x - y) exp(-i Gamma^A[y, x] / hbar) u(x)`` on a patch around
    ``y`` is Fourier transformed, giving the overlaps at every momentum
    cell at once. Momentum cells outside the Fourier band of the grid of
    ``u`` carry no overlap. Position cells whose patch holds less than
    ``skip`` of the mass of ``u`` are dropped. Cells in a shell of width
    ``cells.margin`` beyond the window measure the tail mass.

    Returns
    -------
    QuadratureResult
    """
    hbar = PlanckParameter(hbar)
    cells = PhaseCells() if cells is None else cells
    grid = u.grid
    n, h, s = grid.dim, grid.spacing, math.sqrt(hbar)
    if v.dim != n or A.dim != n:
        raise InputError("state, fiducial and potential dimensions differ")
    if cells.center is None:
        center = np.concatenate([grid.origin, hbar * grid.dual_origin])
    else:
        center = _as_point(cells.center, n).as_array()
    W = cells.window(hbar)
    patch = 2 * math.ceil(v.reach * s / h) + 2
    P = _fft_size(max(patch, 2 * math.pi * s * cells.cells_per_width / h))
    steps = (s / cells.cells_per_width, 2 * math.pi * hbar / (P * h))
    k_in = [max(0, math.ceil(W / d - 0.5)) for d in steps]
    k_out = [k + math.ceil(cells.margin * s / d) for k, d in zip(k_in, steps)]
    half_eff = [(k + 0.5) * d for k, d in zip(k_in, steps)]
    jy = np.arange(-k_out[0], k_out[0] + 1)
    je = np.arange(-k_out[1], k_out[1] + 1)
    dy, deta = steps

    # momentum cells, their FFT bins and band membership
    eta_off = je * deta
    band = np.ones((je.size,) * n, bool)
    rad_e = np.zeros((je.size,) * n, int)
    for a in range(n):
        shape = [1] * n
        shape[a] = -1
        ok = np.abs(center[n + a] + eta_off - hbar * grid.dual_origin[a]) < math.pi * hbar / h
        band = band & ok.reshape(shape)
        rad_e = np.maximum(rad_e, np.abs(je).reshape(shape))
    in_eta = rad_e <= k_in[1]
    bins = np.mod(je, P)
    kap = 2 * np.pi * np.fft.fftfreq(P, h)[bins]
    k_center = center[n:] / hbar

    lo = grid.origin - grid.half_width
    padded = np.pad(u.values.reshape(grid.shape), patch)
    mass = np.abs(padded) ** 2
    boxes = _box_sums(mass, patch)
    total = float(np.sum(mass))
    offs = np.stack(np.meshgrid(*[np.arange(patch)] * n, indexing="ij"), -1).reshape(-1, n)

    ycells = np.stack(np.meshgrid(*[jy] * n, indexing="ij"), -1).reshape(-1, n)
    ypos = center[:n] + dy * ycells
    starts = np.round((ypos - lo) / h).astype(int) - patch // 2 + patch
    valid = np.all((starts >= 0) & (starts + patch <= padded.shape[0]), axis=1)
    keep = np.zeros(len(ypos), bool)
    keep[valid] = boxes[tuple(starts[valid].T)] >= skip * total
    cell = (dy * deta / (2 * np.pi * hbar)) ** n

    inside = outside = 0.0
    radii, masses = [], []
    todo = np.flatnonzero(keep)
    for block in np.array_split(todo, max(1, math.ceil(len(todo) / chunk))):
        if block.size == 0:
            continue
        st = starts[block]
        y = ypos[block]
        x = lo + h * (offs[None] + st[:, None, :] - patch)
        gather = tuple((st[:, None, a] + offs[None, :, a]) for a in range(n))
        w = padded[gather] * v.scaled(x - y[:, None, :], hbar)
        w = w * np.exp(-1j * (circulation_segment(A, y[:, None, :], x, order) / hbar + x @ k_center))
        spec = np.fft.fftn(w.reshape((len(block),) + (patch,) * n), s=(P,) * n, axes=tuple(range(1, n + 1)))
        spec = spec[(slice(None),) + np.ix_(*[bins] * n)]
        x0 = x[:, 0, :]
        for a in range(n):
            shape = [len(block)] + [1] * n
            shape[a + 1] = -1
            spec = spec * np.exp(-1j * x0[:, a, None] * kap[None, :]).reshape(shape)
        dens = (h**n * np.abs(spec)) ** 2 * band * cell
        if weight is not None:
            mesh = np.meshgrid(*[center[n + a] + eta_off for a in range(n)], indexing="ij")
            etas = np.stack(mesh, -1)
            Y = np.concatenate(
                [np.broadcast_to(y[:, None, :], (len(block), etas[..., 0].size, n)),
                 np.broadcast_to(etas.reshape(1, -1, n), (len(block), etas[..., 0].size, n))], axis=-1)
            gvals = np.asarray(weight(Y), dtype=float).reshape(dens.shape)
        else:
            gvals = 1.0
        rad_y = np.max(np.abs(ycells[block]), axis=1)
        inner = (rad_y <= k_in[0])[(slice(None),) + (None,) * n] & in_eta[None]
        inside += float(np.sum((dens * gvals)[inner]))
        outside += float(np.sum(dens[~inner])) * bound
        radii.append(np.maximum(rad_y[(slice(None),) + (None,) * n] * dy, rad_e[None] * deta).ravel())
        masses.append(dens.ravel())
    required = (k_out[0] + 0.5) * dy + cells.margin * s
    if radii:
        r = np.concatenate(radii)
        mvals = np.concatenate(masses)
        order_r = np.argsort(r)[::-1]
        beyond = np.cumsum(mvals[order_r]) * bound
        # smallest radius whose exterior mass fits the budget
        ok = np.flatnonzero(beyond >= cells.tail_budget)
        if ok.size == 0:
            required = 0.0
        elif ok[0] > 0 or beyond[0] < cells.tail_budget:
            required = float(r[order_r][ok[0]]) + 0.5 * max(dy, deta)
    return QuadratureResult(inside, outside, float(min(half_eff)), float(required), int(todo.size), int(len(ypos) - todo.size))


def _checked(result, budget):
    if result.tail_mass > budget:
        raise WindowError(
            f"tail mass {result.tail_mass:.3e} exceeds {budget:.1e}; "
            f"half-width {result.required_half_width:.3g} needed",
            required_half_width=result.required_half_width,
        )
    return result.value


def resolution_of_identity(u, v, A, hbar, cells=None, order=16, details=False):
    """``int |<v^A(Y), u>|^2 dY / (2 pi hbar)^N`` on a truncated window.

    Raises
    ------
    WindowError
        When the tail mass beyond the window exceeds the budget.
    """
    cells = PhaseCells() if cells is None else cells
    res = phase_space_quadrature(u, v, A, hbar, cells, order=order)
    value = _checked(res, cells.tail_budget)
    return (value, res) if details else value


def berezin_average(g, v, A, hbar, Z, cells=None, bound=1.0, order=16, grid=None, details=False):
    """Transition-probability weighted phase-space average of ``g`` around ``Z``.

    Parameters
    ----------
    g : callable
        Bounded function of stacked phase-space points ``(..., 2N)``.
    bound : float
        Supremum of ``|g|``; scales the tail estimate.
    """
    Z = _as_point(Z, v.dim)
    cells = PhaseCells() if cells is None else cells
    if cells.center is None:
        cells = PhaseCells(cells.half_width, cells.cells_per_width, cells.tail_budget, cells.margin, Z.as_array())
    c = coherent_vector(v, A, hbar, Z, grid=grid, order=order)
    res = phase_space_quadrature(c.wave, v, A, hbar, cells, weight=g, bound=bound, order=order)
    value = _checked(res, cells.tail_budget)
    return (value, res) if details else value


# ---------------------------------------------------------------------------
# expectations


def _route_matrix(f, v, A, hbar, Z, order, spacing, margin):
    grid = coherent_grid(v, hbar, [Z], A, spacing=spacing, margin=margin)
    c = coherent_vector(v, A, hbar, Z, grid, order=order)
    if isinstance(f, MomentumPolynomialSymbol) and f.momentum_free:
        sym = f
    else:
        sym = GridSymbol.from_symbol(f, grid, hbar, eta_center=Z.xi)
    S = op_A(sym, A, hbar, grid, order=order)
    return complex(inner_product(c.wave, S.apply(c.wave)))


def _fiducial_rule(v, n, dim):
    """Nodes and weights for ``int F(p) |v(p)|^2``-type integrals in ``p``."""
    if v.kind == "bump":
        t, w = np.polynomial.legendre.leggauss(n)
        return t * v.radius, w * v.radius
    t, w = np.polynomial.hermite.hermgauss(n)
    return t, w * np.exp(t**2)


def _route_quadrature(f, v, B, hbar, Z, nodes, order):
    """Gauge-free triple integral in scaled centre and difference variables.

    ``(2 pi)^{-N} int dp ds e^{-i s.zeta} T(z + sqrt(hbar) p, s)
    e^{-i flux<z, z + sqrt(hbar) x, z + sqrt(hbar) y> / hbar} v(x) v(y)``
    with ``x, y = p +- sqrt(hbar) s / 2`` and ``T`` the momentum Fourier
    transform of ``f``.
    """
    n, r = v.dim, math.sqrt(hbar)
    if isinstance(f, MomentumPolynomialSymbol) and f.momentum_free:
        t, w = _fiducial_rule(v, nodes, n)
        mesh = np.meshgrid(*[t] * n, indexing="ij")
        p = np.stack([m.ravel() for m in mesh], -1)
        wt = np.prod(np.stack(np.meshgrid(*[w] * n, indexing="ij"), -1).reshape(-1, n), -1)
        vals = f(Z.x + r * p, np.zeros_like(p)) * np.abs(v(p)) ** 2
        return complex(np.sum(wt * vals))
    if not isinstance(f, GaussianSymbol):
        raise UnsupportedFamilyError(f"no closed momentum transform for {type(f).__name__}")
    # envelope: |v(x) v(y)| ~ exp(-|p|^2 - hbar |s|^2 / 4), T decays with the momentum block
    pee = f.terms[0].P[n:, n:]
    s_prec = np.linalg.inv(pee) + 0.5 * hbar * np.eye(n)
    s_cov = np.linalg.inv(s_prec)
    p_nodes, p_w = _fiducial_rule(v, nodes, n)
    th, wh = np.polynomial.hermite.hermgauss(nodes)
    L = np.linalg.cholesky(s_cov)
    sg = np.stack(np.meshgrid(*[th] * n, indexing="ij"), -1).reshape(-1, n)
    sw = np.prod(np.stack(np.meshgrid(*[wh] * n, indexing="ij"), -1).reshape(-1, n), -1)
    sw = sw * np.exp(np.sum(sg**2, -1)) * abs(np.linalg.det(L)) * 2.0 ** (n / 2)
    s_pts = math.sqrt(2.0) * sg @ L.T
    pg = np.stack(np.meshgrid(*[p_nodes] * n, indexing="ij"), -1).reshape(-1, n)
    pw = np.prod(np.stack(np.meshgrid(*[p_w] * n, indexing="ij"), -1).reshape(-1, n), -1)
    total = 0.0 + 0.0j
    for i in range(len(pg)):
        p = pg[i]
        x = p + 0.5 * r * s_pts
        y = p - 0.5 * r * s_pts
        T = f.eta_transform(Z.x + r * p, s_pts)
        flux = flux_triangle(B, Z.x, Z.x + r * x, Z.x + r * y, order)
        vals = np.exp(-1j * (s_pts @ Z.xi + flux / hbar)) * T * np.conj(v(x)) * v(y)
        total += pw[i] * np.sum(sw * vals)
    return complex(total / (2 * np.pi) ** n)


def coherent_expectation(f, v, A, B, hbar, Z, tol=1e-4, order=16, nodes=None, spacing=0.35, margin=None, routes=False):
    """``<v^A(Z), Op^A(f) v^A(Z)>`` by the matrix route, checked by quadrature.

    The matrix route quantizes a band-limited sampling of ``f`` on a
    local grid. The quadrature route integrates the gauge-free triple
    integral, which depends on ``B`` only through triangle fluxes.

    Parameters
    ----------
    f : Symbol
        Gaussian-type symbols and momentum-free polynomial symbols.
    tol : float
        Expected agreement of the two routes.
    spacing : float
        Grid spacing of the matrix route in units of ``sqrt(hbar)``.
    routes : bool
        Also return both route values.

    Raises
    ------
    ConsistencyError
        If the routes differ by more than ``10 tol``.
    """
    hbar = PlanckParameter(hbar)
    Z = _as_point(Z, v.dim)
    if f.dim != v.dim:
        raise InputError("symbol and fiducial dimensions differ")
    if nodes is None:
        nodes = 48 if v.kind == "bump" else (28 if v.dim == 1 else 20)
    first = _route_matrix(f, v, A, hbar, Z, order, spacing, margin)
    second = _route_quadrature(f, v, B, hbar, Z, nodes, order)
    gap = abs(first - second)
    if gap > 10 * tol:
        raise ConsistencyError(
            f"expectation routes differ by {gap:.3e} (matrix {first:.8g}, quadrature {second:.8g})",
            {"matrix": first, "quadrature": second},
        )
    return (first, first, second) if routes else first


# ---------------------------------------------------------------------------
# symplectic pull-back


def _tangent_form(v, A, hbar, X, Y, Zt, step, grid, order):
    def diff(T):
        plus = coherent_vector(v, A, hbar, X + T * step, grid, order=order, verify=False).values
        minus = coherent_vector(v, A, hbar, X - T * step, grid, order=order, verify=False).values
        return (plus - minus) / (2 * step)

    dy, dz = diff(Y), diff(Zt)
    return float(-2 * hbar * np.imag(np.vdot(dy, dz)) * grid.cell_volume)


def pullback_form(v, A, hbar, X, Y, Zt, step=None, tol=1e-6, max_halvings=6, order=16, grid=None):
    """``-2 hbar Im <D_Y, D_Z>`` with central-difference tangent vectors.

    The step is halved until two consecutive values agree within ``tol``
    (relative to ``max(1, |value|)``); the Richardson combination of the
    last pair is returned.

    Raises
    ------
    NumericalError
        If step halving does not converge.
    """
    hbar = PlanckParameter(hbar)
    X, Y, Zt = (_as_point(P, v.dim) for P in (X, Y, Zt))
    if grid is None:
        grid = coherent_grid(v, hbar, [X], A, margin=v.reach + 1.0)
    if step is None:
        scale = 1.0 + np.max(np.abs(X.as_array())) + np.max(np.abs(np.concatenate([Y.as_array(), Zt.as_array()])))
        step = 0.02 * hbar / scale
    prev = _tangent_form(v, A, hbar, X, Y, Zt, step, grid, order)
    for _ in range(max_halvings):
        step *= 0.5
        cur = _tangent_form(v, A, hbar, X, Y, Zt, step, grid, order)
        if abs(cur - prev) <= tol * max(1.0, abs(cur)):
            return (4 * cur - prev) / 3
        prev = cur
    raise NumericalError("tangent step halving did not converge", {"last": prev, "step": step})


# ---------------------------------------------------------------------------
# ladders and extrapolation


def richardson_limit(hbars, values, max_order=4):
    """Extrapolate ``values(hbar)`` to ``hbar = 0`` on a geometric ladder.

    The leading order is read off the ratio of consecutive differences;
    each elimination step then raises the order by one.

    Returns
    -------
    limit : complex or float
    order : int
        Detected leading order.
    error : float
        Difference between the last two extrapolants.
    """
    h = np.asarray(hbars, dtype=float)
    vals = np.asarray(values)
    if h.size < 3:
        raise InputError("Richardson extrapolation needs at least three rungs")
    ratios = h[:-1] / h[1:]
    r = float(ratios[0])
    if np.any(np.abs(ratios - r) > 1e-9 * r) or r <= 1:
        raise InputError("ladder must be geometric and decreasing")
    d = np.diff(vals)
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.abs(d[-2] / d[-1]) if abs(d[-1]) > 0 else r
    order = int(max(1, round(math.log(q) / math.log(r)))) if q > 1 else 1
    table = vals.astype(complex)
    prev_last = table[-1]
    for k in range(order, order + max_order):
        if table.size < 2:
            break
        fac = r**k
        prev_last = table[-1]
        table = (fac * table[1:] - table[:-1]) / (fac - 1)
    limit = table[-1]
    err = float(abs(limit - prev_last))
    if np.isrealobj(vals):
        limit = float(limit.real)
    return limit, order, err


@dataclass
class ScanResult:
    """Ladder of coherent expectations and their extrapolated limit."""

    hbars: list
    values: list
    limit: float
    order: int
    limit_error: float
    reference: float | None = None
    max_jump: float = 0.0
    jump_budget: float = math.inf
    rows: list = field(default_factory=list)

    @property
    def continuous(self):
        return self.max_jump <= self.jump_budget


def state_continuity_scan(family, v, A, B, Z, ladder=None, lipschitz=2.0, reference=None, tol=1e-4, **kw):
    """Coherent-state values of an ``hbar``-dependent symbol family along a ladder.

    Parameters
    ----------
    family : callable
        ``hbar -> Symbol``.
    ladder : sequence of float
        Geometric, decreasing; default ``2^{-k/2}`` down to ``1/64``.
    lipschitz : float
        Modulus-of-continuity budget: adjacent rungs may differ by at most
        ``lipschitz * |hbar_k - hbar_{k+1}|``.
    reference : float, optional
        Expected ``hbar -> 0`` value; enables the ``abs_error`` column.

    Returns
    -------
    ScanResult
    """
    ladder = [2.0 ** (-k / 2) for k in range(13)] if ladder is None else [float(h) for h in ladder]
    values = [coherent_expectation(family(h), v, A, B, h, Z, tol=tol, **kw).real for h in ladder]
    limit, order, err = richardson_limit(ladder, values)
    jumps = [abs(a - b) / abs(h1 - h2) for a, b, h1, h2 in zip(values, values[1:], ladder, ladder[1:])]
    rows = [
        (h, val, reference, None if reference is None else abs(val - reference)) for h, val in zip(ladder, values)
    ]
    rows.append((0.0, limit, reference, None if reference is None else abs(limit - reference)))
    return ScanResult(ladder, values, limit, order, err, reference, max(jumps), lipschitz, rows)


def _fmt(x):
    return "" if x is None else repr(float(x))


def scan_to_csv(rows, path=None):
    """CSV text with columns ``hbar, value, reference, abs_error``."""
    lines = ["hbar,value,reference,abs_error"]
    lines += [",".join(_fmt(x) for x in row) for row in rows]
    text = "\n".join(lines) + "\n"
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def scan_sidecar(diagnostics, path=None):
    """Window and tail diagnostics as sorted JSON."""
    text = json.dumps(diagnostics, sort_keys=True, indent=2, default=float) + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text
