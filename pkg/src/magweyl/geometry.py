"""Magnetic fields, vector potentials, flux and circulation integrals,
symplectic forms and the magnetic Poisson bracket.

Positions are arrays whose last axis has length ``N``; every integral
accepts leading batch axes so that whole grids of segments or triangles
can be processed in one call.
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DomainError, InputError

FIELD_FAMILIES = ("zero", "constant", "linear", "bounded")
GAUGE_FAMILIES = ("linear", "quadratic", "cubic", "oscillatory")
POTENTIAL_GAUGES = {
    "zero": ("zero", "symmetric", "landau"),
    "constant": ("symmetric", "landau"),
    "linear": ("symmetric", "landau", "axial"),
    "bounded": ("radial",),
}


@lru_cache(maxsize=64)
def unit_gauss_legendre(order):
    """Gauss-Legendre nodes and weights mapped to [0, 1]."""
    if order < 2:
        raise InputError(f"quadrature order must be >= 2, got {order}")
    t, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (t + 1.0), 0.5 * w


@dataclass(frozen=True)
class PhaseSpacePoint:
    """A point X = (x, xi) of phase space."""

    x: np.ndarray
    xi: np.ndarray

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        xi = np.atleast_1d(np.asarray(self.xi, dtype=float))
        if x.ndim != 1 or x.shape != xi.shape:
            raise InputError(f"position {x.shape} and momentum {xi.shape} differ")
        if not 1 <= x.size <= 3:
            raise InputError(f"dimension must be 1, 2 or 3, got {x.size}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "xi", xi)

    @property
    def dim(self):
        return self.x.size

    def as_array(self):
        return np.concatenate([self.x, self.xi])

    @classmethod
    def from_array(cls, arr):
        arr = np.asarray(arr, dtype=float)
        n = arr.size // 2
        return cls(arr[:n], arr[n:])

    @classmethod
    def zero(cls, dim):
        return cls(np.zeros(dim), np.zeros(dim))

    def __add__(self, other):
        return PhaseSpacePoint(self.x + other.x, self.xi + other.xi)

    def __sub__(self, other):
        return PhaseSpacePoint(self.x - other.x, self.xi - other.xi)

    def __neg__(self):
        return PhaseSpacePoint(-self.x, -self.xi)

    def __mul__(self, s):
        return PhaseSpacePoint(s * self.x, s * self.xi)

    __rmul__ = __mul__


def _as_positions(x, dim):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] != dim:
        raise InputError(f"expected positions with last axis {dim}, got shape {x.shape}")
    return x


# ---------------------------------------------------------------------------
# magnetic fields


class MagneticField:
    """Closed-form magnetic 2-form ``B_jk(x)``.

    Families: ``zero``; ``constant`` (parameters are the upper-triangular
    components ``B_12, B_13, B_23``); ``linear`` with
    ``B_12 = b0 + b1 x_1``; ``bounded`` with ``B_12 = b0 / (1 + x_1^2 + x_2^2)``.
    """

    def __init__(self, family, dim, params=()):
        if family not in FIELD_FAMILIES:
            raise InputError(f"unknown field family {family!r}")
        if dim not in (1, 2, 3):
            raise InputError(f"dimension must be 1, 2 or 3, got {dim}")
        params = tuple(float(p) for p in params)
        npairs = dim * (dim - 1) // 2
        expected = {"zero": 0, "constant": npairs, "linear": 2, "bounded": 1}[family]
        if dim == 1 and family != "zero":
            if any(params):
                raise InputError("a magnetic field in one dimension must vanish")
            family, params, expected = "zero", (), 0
        if len(params) != expected:
            raise InputError(f"{family} field in dimension {dim} takes {expected} parameters")
        self.family = family
        self.dim = dim
        self.params = params
        if family == "constant":
            mat = np.zeros((dim, dim))
            iu = np.triu_indices(dim, 1)
            mat[iu] = params
            self._const = mat - mat.T

    @property
    def degree(self):
        return {"zero": 0, "constant": 0, "linear": 1, "bounded": None}[self.family]

    def __repr__(self):
        return f"MagneticField({self.family!r}, dim={self.dim}, params={self.params})"

    @property
    def is_constant(self):
        return self.family in ("zero", "constant")

    def matrix(self, x):
        """Components ``B[..., j, k]`` at positions ``x[..., :]``."""
        x = _as_positions(x, self.dim)
        out = np.zeros(x.shape[:-1] + (self.dim, self.dim))
        if self.family == "constant":
            out[...] = self._const
        elif self.family == "linear":
            b12 = self.params[0] + self.params[1] * x[..., 0]
            out[..., 0, 1], out[..., 1, 0] = b12, -b12
        elif self.family == "bounded":
            b12 = self.params[0] / (1.0 + x[..., 0] ** 2 + x[..., 1] ** 2)
            out[..., 0, 1], out[..., 1, 0] = b12, -b12
        return out

    def component(self, j, k, x):
        return self.matrix(x)[..., j, k]

    def constant_matrix(self):
        """The field matrix when it does not depend on position."""
        if not self.is_constant:
            raise InputError(f"{self.family} field is not constant")
        return self.matrix(np.zeros(self.dim))


def magnetic_field(family, dim, params=()):
    return MagneticField(family, dim, params)


# ---------------------------------------------------------------------------
# vector potentials and gauges


class VectorPotential:
    """Vector potential ``A_j(x)`` with analytic Jacobian ``d_k A_j(x)``."""

    def __init__(self, field, gauge, value, jacobian, degree=None):
        self.field = field
        # polynomial degree in x when known; lets quadratures drop to exact low orders
        self.degree = degree
        self.dim = field.dim
        self.gauge = gauge
        self._value = value
        self._jacobian = jacobian
        self._cache = {}

    def __repr__(self):
        return f"VectorPotential({self.gauge!r}, field={self.field!r})"

    def __call__(self, x):
        return self._value(_as_positions(x, self.dim))

    def jacobian(self, x):
        """``J[..., j, k] = d_k A_j(x)``."""
        return self._jacobian(_as_positions(x, self.dim))

    def curl(self, x):
        """``d_j A_k - d_k A_j`` at ``x``; equals ``B`` when the link is exact."""
        jac = self.jacobian(x)
        return np.swapaxes(jac, -1, -2) - jac


def _constant_potential(field, gauge):
    b = field.constant_matrix()
    if gauge == "symmetric":
        lin = 0.5 * b.T
    else:
        lin = -np.triu(b)
    # A(x) = lin @ x
    return VectorPotential(
        field,
        gauge,
        lambda x: x @ lin.T,
        lambda x: np.broadcast_to(lin, x.shape[:-1] + lin.shape).copy(),
        degree=1,
    )


def _linear_potential(field, gauge):
    b0, b1 = field.params
    dim = field.dim

    def value(x):
        out = np.zeros_like(x)
        x1, x2 = x[..., 0], x[..., 1]
        if gauge == "landau":
            out[..., 0] = -(b0 + b1 * x1) * x2
        elif gauge == "axial":
            out[..., 1] = b0 * x1 + 0.5 * b1 * x1**2
        else:
            out[..., 0] = -0.5 * b0 * x2
            out[..., 1] = 0.5 * b0 * x1 + 0.5 * b1 * x1**2
        return out

    def jacobian(x):
        out = np.zeros(x.shape[:-1] + (dim, dim))
        x1, x2 = x[..., 0], x[..., 1]
        if gauge == "landau":
            out[..., 0, 0] = -b1 * x2
            out[..., 0, 1] = -(b0 + b1 * x1)
        elif gauge == "axial":
            out[..., 1, 0] = b0 + b1 * x1
        else:
            out[..., 0, 1] = -0.5 * b0
            out[..., 1, 0] = 0.5 * b0 + b1 * x1
        return out

    return VectorPotential(field, gauge, value, jacobian, degree=2)


def _radial_profile(s, b0):
    """phi(s) = b0 log(1+s) / (2 s) and its derivative in s."""
    s = np.asarray(s, dtype=float)
    small = s < 1e-4
    safe = np.where(small, 1.0, s)
    phi = np.where(small, 1 - s / 2 + s**2 / 3 - s**3 / 4, np.log1p(safe) / safe)
    dphi = np.where(
        small,
        -0.5 + 2 * s / 3 - 0.75 * s**2,
        (safe / (1 + safe) - np.log1p(safe)) / safe**2,
    )
    return 0.5 * b0 * phi, 0.5 * b0 * dphi


def _radial_potential(field):
    (b0,) = field.params
    dim = field.dim

    def value(x):
        out = np.zeros_like(x)
        x1, x2 = x[..., 0], x[..., 1]
        phi, _ = _radial_profile(x1**2 + x2**2, b0)
        out[..., 0] = -x2 * phi
        out[..., 1] = x1 * phi
        return out

    def jacobian(x):
        out = np.zeros(x.shape[:-1] + (dim, dim))
        x1, x2 = x[..., 0], x[..., 1]
        phi, dphi = _radial_profile(x1**2 + x2**2, b0)
        out[..., 0, 0] = -2 * x1 * x2 * dphi
        out[..., 0, 1] = -phi - 2 * x2**2 * dphi
        out[..., 1, 0] = phi + 2 * x1**2 * dphi
        out[..., 1, 1] = 2 * x1 * x2 * dphi
        return out

    return VectorPotential(field, "radial", value, jacobian)


def vector_potential(field, gauge=None):
    """A closed-form potential generating ``field`` in the named gauge.

    Parameters
    ----------
    field : MagneticField
    gauge : str, optional
        ``symmetric``/``landau`` for constant fields, additionally
        ``axial`` for linear fields (whose potentials are quadratic),
        ``radial`` for the bounded family. Defaults to the first listed.
    """
    allowed = POTENTIAL_GAUGES[field.family]
    gauge = gauge or allowed[0]
    if gauge not in allowed:
        raise InputError(f"gauge {gauge!r} not available for {field.family} fields")
    if field.family == "zero":
        return VectorPotential(
            field,
            gauge,
            lambda x: np.zeros_like(x),
            lambda x: np.zeros(x.shape[:-1] + (field.dim, field.dim)),
            degree=0,
        )
    if field.family == "constant":
        return _constant_potential(field, gauge)
    if field.family == "linear":
        return _linear_potential(field, gauge)
    return _radial_potential(field)


class GaugeFunction:
    """Scalar gauge function ``rho`` with analytic gradient and Hessian.

    Families: ``linear`` (``c . x``), ``quadratic`` (``x^T S x / 2`` with
    ``S`` given row-major), ``cubic`` (``c x_1^2 x_N``), ``oscillatory``
    (``a sin(k . x)`` with parameters ``a, k_1, ..., k_N``).
    """

    def __init__(self, family, dim, params):
        if family not in GAUGE_FAMILIES:
            raise InputError(f"unknown gauge family {family!r}")
        params = np.asarray(params, dtype=float).ravel()
        expected = {"linear": dim, "quadratic": dim * dim, "cubic": 1, "oscillatory": dim + 1}
        if params.size != expected[family]:
            raise InputError(f"{family} gauge in dimension {dim} takes {expected[family]} parameters")
        self.family = family
        self.dim = dim
        self.params = params
        self.gradient_degree = {"linear": 0, "quadratic": 1, "cubic": 2, "oscillatory": None}[family]
        if family == "quadratic":
            s = params.reshape(dim, dim)
            self._sym = 0.5 * (s + s.T)

    def __repr__(self):
        return f"GaugeFunction({self.family!r}, params={self.params.tolist()})"

    def __call__(self, x):
        x = _as_positions(x, self.dim)
        p = self.params
        if self.family == "linear":
            return x @ p
        if self.family == "quadratic":
            return 0.5 * np.einsum("...j,jk,...k->...", x, self._sym, x)
        if self.family == "cubic":
            return p[0] * x[..., 0] ** 2 * x[..., -1]
        return p[0] * np.sin(x @ p[1:])

    def gradient(self, x):
        x = _as_positions(x, self.dim)
        p = self.params
        if self.family == "linear":
            return np.broadcast_to(p, x.shape).copy()
        if self.family == "quadratic":
            return x @ self._sym
        if self.family == "cubic":
            out = np.zeros_like(x)
            if self.dim == 1:
                out[..., 0] = 3 * p[0] * x[..., 0] ** 2
            else:
                out[..., 0] = 2 * p[0] * x[..., 0] * x[..., -1]
                out[..., -1] = p[0] * x[..., 0] ** 2
            return out
        return (p[0] * np.cos(x @ p[1:]))[..., None] * p[1:]

    def hessian(self, x):
        x = _as_positions(x, self.dim)
        p = self.params
        shape = x.shape[:-1] + (self.dim, self.dim)
        if self.family == "linear":
            return np.zeros(shape)
        if self.family == "quadratic":
            return np.broadcast_to(self._sym, shape).copy()
        if self.family == "cubic":
            out = np.zeros(shape)
            if self.dim == 1:
                out[..., 0, 0] = 6 * p[0] * x[..., 0]
            else:
                out[..., 0, 0] = 2 * p[0] * x[..., -1]
                out[..., 0, -1] = out[..., -1, 0] = 2 * p[0] * x[..., 0]
            return out
        k = p[1:]
        return (-p[0] * np.sin(x @ k))[..., None, None] * np.outer(k, k)


def gauge_function(family, dim, params):
    return GaugeFunction(family, dim, params)


def gauge_transform(A, rho):
    """Return ``A + d rho``, linked to the same magnetic field as ``A``."""
    if A.dim != rho.dim:
        raise InputError(f"potential dimension {A.dim} differs from gauge dimension {rho.dim}")
    return VectorPotential(
        A.field,
        f"{A.gauge}+{rho.family}{rho.params.tolist()}",
        lambda x: A._value(x) + rho.gradient(x),
        lambda x: A._jacobian(x) + rho.hessian(x),
        degree=None if A.degree is None or rho.gradient_degree is None else max(A.degree, rho.gradient_degree),
    )


# ---------------------------------------------------------------------------
# integrals


def circulation_segment(A, x, y, order=16):
    """Line integral of ``A`` along the oriented segment from ``x`` to ``y``.

    ``x`` and ``y`` broadcast against each other; the result has their
    common batch shape.
    """
    x = _as_positions(x, A.dim)
    y = _as_positions(y, A.dim)
    if A.degree is not None:
        order = min(order, max(2, (A.degree + 2) // 2))
    s, w = unit_gauss_legendre(order)
    d = y - x
    pts = x[..., None, :] + s[:, None] * d[..., None, :]
    vals = A(pts)
    return np.einsum("...sj,...j,s->...", vals, d, w)


def flux_triangle(B, a, b, c, order=16):
    """Flux of ``B`` through the oriented triangle ``<a, b, c>``.

    Uses the parametrization ``a + mu (b - a) + mu nu (c - b)`` over the
    unit square with a tensor Gauss-Legendre rule. Zero in one dimension.
    """
    a = _as_positions(a, B.dim)
    b = _as_positions(b, B.dim)
    c = _as_positions(c, B.dim)
    shape = np.broadcast_shapes(a.shape, b.shape, c.shape)[:-1]
    if B.dim == 1 or B.family == "zero":
        unit_gauss_legendre(order)
        return np.zeros(shape)
    u = b - a
    v = c - b
    if B.family == "constant":
        unit_gauss_legendre(order)
        return 0.5 * np.einsum("...j,jk,...k->...", u, B.constant_matrix(), v)
    if B.degree is not None:
        order = min(order, max(2, (B.degree + 3) // 2))
    t, w = unit_gauss_legendre(order)
    mu = t[:, None]
    nu = t[None, :]
    weights = (w[:, None] * w[None, :]) * mu
    pts = (
        a[..., None, None, :]
        + mu[..., None] * u[..., None, None, :]
        + (mu * nu)[..., None] * v[..., None, None, :]
    )
    bmat = B.matrix(pts)
    integrand = np.einsum("...pqjk,...j,...k->...pq", bmat, u, v)
    return np.einsum("...pq,pq->...", integrand, weights)


def symplectic_form(Y, Z):
    """Canonical form ``z . eta - y . zeta`` for stacked arrays ``(..., 2N)``."""
    Y = np.asarray(Y, dtype=float)
    Z = np.asarray(Z, dtype=float)
    n = Y.shape[-1] // 2
    return np.sum(Z[..., :n] * Y[..., n:] - Y[..., :n] * Z[..., n:], axis=-1)


def sigma_B(B, base, Y, Z):
    """Magnetic symplectic form at ``base`` evaluated on tangent vectors ``Y, Z``."""
    base = _as_positions(base, B.dim)
    if Y.dim != B.dim or Z.dim != B.dim:
        raise InputError("phase-space points and field have different dimensions")
    val = float(np.dot(Z.x, Y.xi) - np.dot(Y.x, Z.xi))
    return val + float(Y.x @ B.matrix(base) @ Z.x)


def symbol_gradient(f, X, step=None):
    """Partials ``(d_x f, d_xi f)`` at ``X``: analytic if offered, else central differences."""
    if hasattr(f, "gradient") and step is None:
        gx, gxi = f.gradient(X.x, X.xi)
        return np.asarray(gx), np.asarray(gxi)
    steps = np.asarray(step if step is not None else getattr(f, "fd_steps", 1e-5), dtype=float)
    steps = np.broadcast_to(steps, (2 * X.dim,))
    base = X.as_array()
    grad = np.zeros(2 * X.dim, dtype=complex)
    for i in range(2 * X.dim):
        e = np.zeros_like(base)
        e[i] = steps[i]
        hi, lo = PhaseSpacePoint.from_array(base + e), PhaseSpacePoint.from_array(base - e)
        grad[i] = (f(hi.x, hi.xi) - f(lo.x, lo.xi)) / (2 * steps[i])
    if np.all(grad.imag == 0):
        grad = grad.real
    return grad[: X.dim], grad[X.dim :]


def poisson_bracket(B, f, g, X, step=None, canonical_sign=1):
    """Magnetic Poisson bracket ``{f, g}^B`` at the phase-space point ``X``.

    ``sum_j (d_xi_j f d_x_j g - d_xi_j g d_x_j f) + sum_jk B_jk d_xi_j f d_xi_k g``.

    Parameters
    ----------
    B : MagneticField
    f, g : symbols
        Objects callable as ``f(x, xi)``; an analytic ``gradient(x, xi)``
        method is used when present, otherwise central differences with
        ``step`` (or the symbol's ``fd_steps``).
    X : PhaseSpacePoint
    step : float, optional
        Force the finite-difference path with this step.
    canonical_sign : {1, -1}
        Sign of the field-free part. ``-1`` gives the bracket approached by
        ``(F G - G F) / (i hbar)`` for the quantization with kinetic momentum
        ``-i hbar d - A``.
    """
    if X.dim != B.dim:
        raise InputError("point and field dimensions differ")
    for s in (f, g):
        inside = getattr(s, "contains", None)
        if inside is not None and not inside(X.x, X.xi):
            raise DomainError(f"{X} lies outside the symbol's grid domain")
    fx, fxi = symbol_gradient(f, X, step)
    gx, gxi = symbol_gradient(g, X, step)
    val = canonical_sign * (np.dot(fxi, gx) - np.dot(gxi, fx))
    return val + fxi @ B.matrix(X.x) @ gxi


# ---------------------------------------------------------------------------
# declarative records


def field_from_config(record):
    """Build a field from ``{"family": ..., "dim": N, "params": [...]}``."""
    return MagneticField(record["family"], int(record.get("dim", 2)), record.get("params", ()))


def potential_from_config(record, field=None):
    """Build a potential from a field record plus an optional ``gauge`` key."""
    field = field or field_from_config(record)
    return vector_potential(field, record.get("gauge"))


def gauge_from_config(record):
    return GaugeFunction(record["family"], int(record.get("dim", 2)), record["params"])
