"""Phase-space symbols.

Closed-form symbols are finite sums of terms
``p(X) exp(-X^T P X / 2 + J . X + c)`` with ``X = (x, xi)``, a polynomial
``p``, a positive definite real ``P`` and complex ``J, c``. The family is
closed under sums, products, derivatives and linear changes of variables,
and its partial Fourier transform in ``xi`` is analytic.
"""
from itertools import product as iproduct

import numpy as np

from .errors import DomainError, InputError, ResolutionError, UnsupportedFamilyError


class Poly:
    """Sparse polynomial in ``n`` variables, ``{exponent tuple: coefficient}``."""

    def __init__(self, n, coeffs=None):
        self.n = n
        self.coeffs = {}
        for exps, c in (coeffs or {}).items():
            exps = tuple(int(e) for e in exps)
            if len(exps) != n:
                raise InputError(f"exponent {exps} has wrong length for {n} variables")
            if c != 0:
                self.coeffs[exps] = self.coeffs.get(exps, 0) + complex(c)

    @classmethod
    def constant(cls, n, c=1.0):
        return cls(n, {(0,) * n: c})

    @classmethod
    def variable(cls, n, i, c=1.0):
        e = [0] * n
        e[i] = 1
        return cls(n, {tuple(e): c})

    @classmethod
    def linear(cls, coeffs, const=0.0):
        n = len(coeffs)
        out = cls.constant(n, const)
        for i, c in enumerate(coeffs):
            out = out + cls.variable(n, i, c)
        return out

    def __repr__(self):
        return f"Poly({self.n}, {self.coeffs})"

    def copy(self):
        return Poly(self.n, dict(self.coeffs))

    def __add__(self, other):
        if not isinstance(other, Poly):
            other = Poly.constant(self.n, other)
        out = self.copy()
        for e, c in other.coeffs.items():
            out.coeffs[e] = out.coeffs.get(e, 0) + c
        out.coeffs = {e: c for e, c in out.coeffs.items() if c != 0}
        return out

    __radd__ = __add__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other if isinstance(other, Poly) else -other)

    def __mul__(self, other):
        if not isinstance(other, Poly):
            return Poly(self.n, {e: c * other for e, c in self.coeffs.items()})
        out = {}
        for (e1, c1), (e2, c2) in iproduct(self.coeffs.items(), other.coeffs.items()):
            e = tuple(a + b for a, b in zip(e1, e2))
            out[e] = out.get(e, 0) + c1 * c2
        return Poly(self.n, out)

    __rmul__ = __mul__

    def conj(self):
        return Poly(self.n, {e: np.conj(c) for e, c in self.coeffs.items()})

    def derivative(self, i):
        out = {}
        for e, c in self.coeffs.items():
            if e[i]:
                f = list(e)
                f[i] -= 1
                out[tuple(f)] = out.get(tuple(f), 0) + c * e[i]
        return Poly(self.n, out)

    def degree(self, indices=None):
        idx = range(self.n) if indices is None else indices
        return max((sum(e[i] for i in idx) for e in self.coeffs), default=0)

    def __call__(self, X):
        X = np.asarray(X)
        out = np.zeros(X.shape[:-1], dtype=complex)
        for e, c in self.coeffs.items():
            term = np.full(X.shape[:-1], c, dtype=complex)
            for i, k in enumerate(e):
                if k:
                    term = term * X[..., i] ** k
            out = out + term
        return out

    def compose_linear(self, L, shift=None):
        """``p(L X + shift)`` as a polynomial in ``X``."""
        L = np.asarray(L)
        rows = [Poly.linear(L[i], 0.0 if shift is None else shift[i]) for i in range(self.n)]
        out = Poly(L.shape[1])
        cache = {}
        for e, c in self.coeffs.items():
            term = Poly.constant(L.shape[1], c)
            for i, k in enumerate(e):
                if k:
                    key = (i, k)
                    if key not in cache:
                        p = Poly.constant(L.shape[1])
                        for _ in range(k):
                            p = p * rows[i]
                        cache[key] = p
                    term = term * cache[key]
            out = out + term
        return out

    def reindex(self, n, mapping):
        """Move variable ``i`` to position ``mapping[i]`` in ``n`` variables."""
        out = {}
        for e, c in self.coeffs.items():
            f = [0] * n
            for i, k in enumerate(e):
                f[mapping[i]] += k
            out[tuple(f)] = c
        return Poly(n, out)


def gaussian_moment(indices, mean, cov, memo=None):
    """``E[prod_a (mean_a + Z_a)]`` for ``Z ~ N(0, cov)`` by Wick recursion.

    ``mean`` entries may be arrays or ``Poly`` objects.
    """
    if memo is None:
        memo = {}
    key = tuple(sorted(indices))
    if key in memo:
        return memo[key]
    if not key:
        return 1.0
    a, rest = key[0], key[1:]
    val = mean[a] * gaussian_moment(rest, mean, cov, memo)
    for t in range(len(rest)):
        c = cov[a, rest[t]]
        if np.any(c != 0):
            val = val + c * gaussian_moment(rest[:t] + rest[t + 1 :], mean, cov, memo)
    memo[key] = val
    return val


class _Entries:
    """``cov[a, b]`` access to the trailing axes of a batched matrix."""

    def __init__(self, mat):
        self.mat = mat

    def __getitem__(self, ab):
        return self.mat[..., ab[0], ab[1]]


def _expand_indices(exps):
    out = []
    for i, k in enumerate(exps):
        out.extend([i] * k)
    return out


class Symbol:
    """Base class: a function ``f(x, xi)`` on phase space of dimension ``2N``."""

    dim = None

    def __call__(self, x, xi):
        raise NotImplementedError

    def evaluate(self, X):
        X = np.asarray(X, dtype=float)
        return self(X[..., : self.dim], X[..., self.dim :])


class GaussianTerm:
    def __init__(self, poly, precision, linear, const=0.0):
        self.poly = poly
        self.P = np.asarray(precision, dtype=float)
        self.J = np.asarray(linear, dtype=complex)
        self.c = complex(const)

    def exponent(self, X):
        return -0.5 * np.sum((X @ self.P) * X, axis=-1) + X @ self.J + self.c

    def __call__(self, X):
        return self.poly(X) * np.exp(self.exponent(X))

    def times(self, other):
        return GaussianTerm(self.poly * other.poly, self.P + other.P, self.J + other.J, self.c + other.c)

    def conj(self):
        return GaussianTerm(self.poly.conj(), self.P, self.J.conj(), np.conj(self.c))

    def derivative(self, i):
        grad_exp = Poly.linear(-self.P[i].astype(complex), self.J[i])
        return GaussianTerm(self.poly.derivative(i) + self.poly * grad_exp, self.P, self.J, self.c)

    def pullback(self, L):
        return GaussianTerm(self.poly.compose_linear(L), L.T @ self.P @ L, L.T @ self.J, self.c)

    def reindex(self, n, mapping):
        P = np.zeros((n, n))
        J = np.zeros(n, dtype=complex)
        idx = np.asarray(mapping)
        P[np.ix_(idx, idx)] = self.P
        J[idx] = self.J
        return GaussianTerm(self.poly.reindex(n, mapping), P, J, self.c)


class GaussianSymbol(Symbol):
    """Finite sum of polynomial-times-Gaussian terms on ``R^N x R^N``."""

    def __init__(self, dim, terms, label="gaussian"):
        self.dim = dim
        self.terms = list(terms)
        self.label = label
        self._derivs = {}
        for t in self.terms:
            if t.P.shape != (2 * dim, 2 * dim):
                raise InputError("term precision has wrong shape")

    def __repr__(self):
        return f"GaussianSymbol({self.label}, dim={self.dim}, terms={len(self.terms)})"

    def __call__(self, x, xi):
        X = np.concatenate(np.broadcast_arrays(np.asarray(x, float), np.asarray(xi, float)), axis=-1)
        out = np.zeros(X.shape[:-1], dtype=complex)
        for t in self.terms:
            out = out + t(X)
        return out

    # algebra
    def __add__(self, other):
        if isinstance(other, GaussianSymbol):
            if other.dim != self.dim:
                raise InputError("symbol dimensions differ")
            return GaussianSymbol(self.dim, self.terms + other.terms, f"({self.label}+{other.label})")
        return NotImplemented

    def __sub__(self, other):
        return self + (-1.0) * other

    def __mul__(self, other):
        if isinstance(other, GaussianSymbol):
            terms = [a.times(b) for a in self.terms for b in other.terms]
            return GaussianSymbol(self.dim, terms, f"{self.label}*{other.label}")
        if np.isscalar(other):
            terms = [GaussianTerm(t.poly * other, t.P, t.J, t.c) for t in self.terms]
            return GaussianSymbol(self.dim, terms, self.label)
        return NotImplemented

    __rmul__ = __mul__

    def __neg__(self):
        return -1.0 * self

    def conj(self):
        return GaussianSymbol(self.dim, [t.conj() for t in self.terms], f"conj({self.label})")

    def derivative(self, i):
        """Partial derivative in phase-space coordinate ``i`` (positions first)."""
        if i not in self._derivs:
            self._derivs[i] = GaussianSymbol(self.dim, [t.derivative(i) for t in self.terms], f"d{i}{self.label}")
        return self._derivs[i]

    def gradient(self, x, xi):
        gx = np.stack([self.derivative(i)(x, xi) for i in range(self.dim)], axis=-1)
        gxi = np.stack([self.derivative(self.dim + i)(x, xi) for i in range(self.dim)], axis=-1)
        return gx, gxi

    def pullback(self, L):
        """The symbol ``X -> f(L X)`` for a real ``2N x 2N`` matrix ``L``."""
        L = np.asarray(L, dtype=float)
        return GaussianSymbol(self.dim, [t.pullback(L) for t in self.terms], f"{self.label}oL")

    def quadratic_kernel_core(self, grid, hbar):
        """Weyl kernel core on ``grid`` for terms without polynomial factors.

        The exponent of each term is a quadratic form in ``(x, y)``, so the
        mixed part is one matrix product. Returns ``None`` when some term
        carries a non-constant polynomial.
        """
        n = self.dim
        if any(any(any(e) for e in t.poly.coeffs) for t in self.terms):
            return None
        pts = grid.points()
        eye = np.eye(n)
        M = 0.5 * np.hstack([eye, eye])
        K = np.hstack([eye, -eye]) / hbar
        out = np.zeros((grid.size, grid.size), dtype=complex)
        for t in self.terms:
            Pxx, Pxe, Pee = t.P[:n, :n], t.P[:n, n:], t.P[n:, n:]
            try:
                chol = np.linalg.cholesky(Pee)
            except np.linalg.LinAlgError as exc:
                raise UnsupportedFamilyError("momentum block of the precision is not positive definite") from exc
            S = np.linalg.inv(Pee)
            # b = 1j k + J_eta - m Pxe, linear in z = (x, y)
            Bz = 1j * K - Pxe.T @ M
            Q = Bz.T @ S @ Bz - M.T @ Pxx @ M
            L = Bz.T @ S @ t.J[n:] + M.T @ t.J[:n]
            c0 = (0.5 * t.J[n:] @ S @ t.J[n:] + t.c + 0.5 * n * np.log(2 * np.pi)
                  - np.sum(np.log(np.diag(chol))))
            coef = sum(t.poly.coeffs.values())
            if coef == 0:
                continue
            ax = 0.5 * np.sum((pts @ Q[:n, :n]) * pts, axis=-1) + pts @ L[:n]
            ay = 0.5 * np.sum((pts @ Q[n:, n:]) * pts, axis=-1) + pts @ L[n:]
            expo = (pts @ (0.5 * (Q[:n, n:] + Q[n:, :n].T))) @ pts.T
            expo += ax[:, None]
            expo += ay[None, :]
            expo += c0 + np.log(coef + 0j)
            out += np.exp(expo)
        out *= (2 * np.pi * hbar) ** (-n)
        return out

    def eta_transform(self, m, k):
        """``int e^{i k . eta} f(m, eta) d eta`` evaluated analytically.

        ``m`` and ``k`` broadcast to ``(..., N)``.
        """
        n = self.dim
        m, k = np.broadcast_arrays(np.asarray(m, float), np.asarray(k, float))
        out = np.zeros(m.shape[:-1], dtype=complex)
        for t in self.terms:
            Pxx, Pxe, Pee = t.P[:n, :n], t.P[:n, n:], t.P[n:, n:]
            try:
                chol = np.linalg.cholesky(Pee)
            except np.linalg.LinAlgError as exc:
                raise UnsupportedFamilyError("momentum block of the precision is not positive definite") from exc
            S = np.linalg.inv(Pee)
            logdet = 2 * np.sum(np.log(np.diag(chol)))
            b = 1j * k + t.J[n:] - m @ Pxe
            expo = (
                0.5 * np.einsum("...i,ij,...j->...", b, S, b)
                - 0.5 * np.einsum("...i,ij,...j->...", m, Pxx, m)
                + m @ t.J[:n]
                + t.c
                + 0.5 * n * np.log(2 * np.pi)
                - 0.5 * logdet
            )
            mu = b @ S
            mean = [mu[..., a] for a in range(n)]
            memo = {}
            poly_val = np.zeros(m.shape[:-1], dtype=complex)
            for e, c in t.poly.coeffs.items():
                val = np.full(m.shape[:-1], c, dtype=complex)
                for a in range(n):
                    if e[a]:
                        val = val * m[..., a] ** e[a]
                val = val * gaussian_moment(_expand_indices(e[n:]), mean, S, memo)
                poly_val = poly_val + val
            out = out + poly_val * np.exp(expo)
        return out

    def characteristic(self, w, quad=None):
        """``int exp(i w . X + i X^T Q X / 2) f(X) dX`` over all of phase space.

        Parameters
        ----------
        w : array_like, shape ``(..., 2N)``
        quad : array_like, shape ``(..., 2N, 2N)``, optional
            Real symmetric ``Q``; its real quadratic phase keeps the
            integral Gaussian with precision ``P - i Q``.
        """
        w = np.asarray(w, dtype=complex)
        d = 2 * self.dim
        out = np.zeros(w.shape[:-1], dtype=complex)
        for t in self.terms:
            P = t.P if quad is None else t.P - 1j * np.asarray(quad)
            S = np.linalg.inv(P)
            # eigenvalues have positive real part, so principal roots continue det^{-1/2}
            logdet = np.sum(np.log(np.linalg.eigvals(P)), axis=-1)
            b = t.J + 1j * w
            mu = np.einsum("...ij,...j->...i", S, b)
            expo = 0.5 * np.sum(b * mu, axis=-1) + t.c + 0.5 * d * np.log(2 * np.pi) - 0.5 * logdet
            mean = [mu[..., a] for a in range(d)]
            cov = _Entries(S)
            memo = {}
            pv = np.zeros(w.shape[:-1], dtype=complex)
            for e, c in t.poly.coeffs.items():
                pv = pv + c * gaussian_moment(_expand_indices(e), mean, cov, memo)
            out = out + pv * np.exp(expo)
        return out

    def envelope(self):
        """Mean and covariance of the Gaussian factor of the first term."""
        t = self.terms[0]
        cov = np.linalg.inv(t.P)
        return cov @ t.J.real, cov

    def symplectic_fourier(self):
        """``F f(X) = (2pi)^{-N} int e^{i sigma(X, Y)} f(Y) dY`` in closed form."""
        n = self.dim
        omega = np.block([[np.zeros((n, n)), np.eye(n)], [-np.eye(n), np.zeros((n, n))]])
        terms = []
        for t in self.terms:
            S = np.linalg.inv(t.P)
            _, logdet = np.linalg.slogdet(t.P)
            Pn = omega.T @ S @ omega
            Jn = 1j * omega.T @ S @ t.J
            cn = t.c + 0.5 * t.J @ S @ t.J - 0.5 * logdet
            # mean of Y is S (J + i Omega X): affine in X
            A = 1j * S @ omega
            shift = S @ t.J
            mean = [Poly.linear(A[a], shift[a]) for a in range(2 * n)]
            memo = {}
            poly = Poly(2 * n)
            for e, c in t.poly.coeffs.items():
                mom = gaussian_moment(_expand_indices(e), mean, S, memo)
                poly = poly + (mom * c if isinstance(mom, Poly) else Poly.constant(2 * n, c * mom))
            terms.append(GaussianTerm(poly, Pn, Jn, cn))
        return GaussianSymbol(n, terms, f"F[{self.label}]")


def _as_center(center, dim):
    if center is None:
        return np.zeros(2 * dim)
    if hasattr(center, "as_array"):
        return center.as_array()
    c = np.asarray(center, dtype=float).ravel()
    if c.size != 2 * dim:
        raise InputError(f"center must have {2 * dim} entries")
    return c


def _as_covariance(cov, dim):
    cov = np.asarray(cov, dtype=float)
    if cov.ndim == 0:
        cov = np.eye(2 * dim) * cov
    elif cov.ndim == 1:
        cov = np.diag(cov)
    if cov.shape != (2 * dim, 2 * dim):
        raise InputError(f"covariance must be {2 * dim}x{2 * dim}")
    return cov


def gaussian_symbol(dim, center=None, cov=1.0, amplitude=1.0, poly=None):
    """``amplitude * p(X) * exp(-(X-X0)^T C^{-1} (X-X0) / 2)``.

    Parameters
    ----------
    dim : int
    center : PhaseSpacePoint or array of length ``2N``
    cov : float, vector of variances or ``2N x 2N`` matrix
    amplitude : complex
    poly : Poly, optional
        Polynomial prefactor in absolute coordinates.
    """
    X0 = _as_center(center, dim)
    P = np.linalg.inv(_as_covariance(cov, dim))
    P = 0.5 * (P + P.T)
    p = (poly if poly is not None else Poly.constant(2 * dim)) * amplitude
    return GaussianSymbol(dim, [GaussianTerm(p, P, (P @ X0).astype(complex), -0.5 * X0 @ P @ X0)])


def coordinate_symbol(dim, index, window=25.0, center=None):
    """Phase-space coordinate ``X_index`` times a Gaussian window of variance ``window``."""
    sym = gaussian_symbol(dim, center=center, cov=window, poly=Poly.variable(2 * dim, index))
    sym.label = f"X{index}"
    return sym


def mollified_character(X, width=10.0):
    """``e_X(Z) = exp(-i sigma(X, Z))`` times a Gaussian of the given width."""
    dim = X.dim
    J = np.concatenate([-1j * X.xi, 1j * X.x])
    P = np.eye(2 * dim) / width**2
    return GaussianSymbol(dim, [GaussianTerm(Poly.constant(2 * dim), P, J, 0.0)], "character")


def tensor_symbol(*factors):
    """Product ``f_1(x_1, xi_1) f_2(x_2, xi_2) ...`` of lower-dimensional symbols."""
    dims = [f.dim for f in factors]
    n = sum(dims)
    terms = [GaussianTerm(Poly.constant(2 * n), np.zeros((2 * n, 2 * n)), np.zeros(2 * n), 0.0)]
    offset = 0
    for f, d in zip(factors, dims):
        mapping = list(range(offset, offset + d)) + list(range(n + offset, n + offset + d))
        embedded = [t.reindex(2 * n, mapping) for t in f.terms]
        terms = [a.times(b) for a in terms for b in embedded]
        offset += d
    return GaussianSymbol(n, terms, "x".join(f.label for f in factors))


def poisson_symbol(f, g, B, canonical_sign=1):
    """``{f, g}^B`` as a closed-form symbol; needs a constant field.

    ``canonical_sign`` flips the field-free part as in ``poisson_bracket``.
    """
    if not B.is_constant:
        raise UnsupportedFamilyError("closed-form bracket requires a constant field")
    n = f.dim
    bmat = B.constant_matrix()
    out = None
    for j in range(n):
        term = canonical_sign * (f.derivative(n + j) * g.derivative(j) - g.derivative(n + j) * f.derivative(j))
        out = term if out is None else out + term
        for k in range(n):
            if bmat[j, k] != 0:
                out = out + bmat[j, k] * (f.derivative(n + j) * g.derivative(n + k))
    out.label = f"{{{f.label},{g.label}}}"
    return out


# ---------------------------------------------------------------------------
# polynomial symbols (distributional kernels)


def _band_limited_derivative(order, t, h, hbar):
    """Kernel of ``(-i hbar d)^order`` on a sinc basis at index offsets ``t``."""
    t = np.asarray(t)
    safe = np.where(t == 0, 1, t)
    sign = np.where(t % 2 == 0, 1.0, -1.0)
    if order == 0:
        return np.where(t == 0, 1.0 / h, 0.0).astype(complex)
    if order == 1:
        return np.where(t == 0, 0.0, -1j * hbar * sign / (safe * h**2))
    if order == 2:
        return np.where(t == 0, hbar**2 * np.pi**2 / (3 * h**3), 2 * hbar**2 * sign / (safe**2 * h**3)).astype(complex)
    raise UnsupportedFamilyError("momentum degree above 2 per axis is not supported")


class MomentumPolynomialSymbol(Symbol):
    """Symbol ``sum_beta a_beta(x) xi^beta`` with momentum degree at most 2 per axis.

    Its kernel is a distribution supported on the diagonal; it is realized
    on the band-limited (sinc) subspace of the grid, where the momentum
    powers become the sinc-basis derivative matrices and the coefficients
    are evaluated at midpoints.

    Parameters
    ----------
    dim : int
    coefficients : dict
        Maps a momentum exponent tuple ``beta`` to a vectorized callable
        ``a(x)`` or to a constant.
    """

    def __init__(self, dim, coefficients, label="polynomial", fd_steps=1e-5):
        self.dim = dim
        self.coefficients = {}
        for beta, a in coefficients.items():
            beta = tuple(int(b) for b in beta)
            if len(beta) != dim:
                raise InputError(f"momentum exponent {beta} has wrong length")
            if max(beta) > 2:
                raise UnsupportedFamilyError("momentum degree above 2 per axis is not supported")
            self.coefficients[beta] = a
        self.label = label
        self.fd_steps = fd_steps

    def _coef(self, a, x):
        if callable(a):
            return np.asarray(a(x), dtype=complex)
        return np.full(x.shape[:-1], a, dtype=complex)

    def __call__(self, x, xi):
        x, xi = np.broadcast_arrays(np.asarray(x, float), np.asarray(xi, float))
        out = np.zeros(x.shape[:-1], dtype=complex)
        for beta, a in self.coefficients.items():
            out = out + self._coef(a, x) * np.prod(xi ** np.asarray(beta), axis=-1)
        return out

    @property
    def momentum_free(self):
        return all(not any(beta) for beta in self.coefficients)

    def kernel_core(self, grid, hbar):
        n, m = self.dim, grid.points_per_axis
        idx = np.stack(np.meshgrid(*[np.arange(m)] * n, indexing="ij"), -1).reshape(-1, n)
        pts = grid.points()
        h = grid.spacing
        out = np.zeros((grid.size, grid.size), dtype=complex)
        for beta, a in self.coefficients.items():
            if not any(beta):
                out[np.diag_indices(grid.size)] += self._coef(a, pts) / h**n
                continue
            t = idx[:, None, :] - idx[None, :, :]
            val = self._coef(a, 0.5 * (pts[:, None, :] + pts[None, :, :]))
            for ax in range(n):
                val = val * _band_limited_derivative(beta[ax], t[..., ax], h, hbar)
            out = out + val
        return out


def harmonic_symbol(dim, mass=1.0):
    """``|xi|^2 + mass^2 |x|^2``."""
    coeffs = {}
    for a in range(dim):
        beta = [0] * dim
        beta[a] = 2
        coeffs[tuple(beta)] = 1.0
    if mass:
        coeffs[(0,) * dim] = lambda x: mass**2 * np.sum(x**2, axis=-1)
    return MomentumPolynomialSymbol(dim, coeffs, "harmonic" if mass else "kinetic")


def unit_symbol(dim, width=1e4):
    """The constant 1 mollified in position by ``exp(-|x|^2 / (2 width^2))``."""
    sym = MomentumPolynomialSymbol(dim, {(0,) * dim: lambda x: np.exp(-0.5 * np.sum(x**2, axis=-1) / width**2)})
    sym.label = "unit"
    return sym


# ---------------------------------------------------------------------------
# grid symbols


class GridSymbol(Symbol):
    """Symbol sampled through its untwisted kernel on a position grid.

    Stores ``K~(x, y)`` so that the symbol on the midpoint/momentum lattice
    is ``f(m, eta) = (2h)^N sum_d e^{-i d.eta/hbar} K~(m + d/2, m - d/2)``,
    where ``m`` runs over the half-grid and ``d`` over offsets of matching
    parity. The same lattice makes quantization its exact inverse.
    """

    def __init__(self, grid, hbar, core, label="grid", eta_center=None):
        self.grid = grid
        self.hbar = float(hbar)
        self.dim = grid.dim
        self.core = np.asarray(core, dtype=complex)
        self.label = label
        self.eta_center = np.zeros(self.dim) if eta_center is None else np.asarray(eta_center, float).reshape(self.dim)
        h = grid.spacing
        self.fd_steps = np.concatenate([np.full(self.dim, h / 2), np.full(self.dim, self.eta_spacing)])

    def __repr__(self):
        return f"GridSymbol({self.label}, {self.grid!r}, hbar={self.hbar})"

    @classmethod
    def from_symbol(cls, f, grid, hbar, eta_center=None):
        """Band-limited sampling of ``f`` on the lattice of ``grid``.

        The momentum lattice is centred on ``eta_center``. Quantizing the
        result agrees with quantizing ``f`` on states whose spectrum (after
        demodulation by ``eta_center / hbar``) fits in half the Nyquist band.
        """
        n, m, h = grid.dim, grid.points_per_axis, grid.spacing
        if f.dim != n:
            raise InputError("symbol and grid dimensions differ")
        center = np.zeros(n) if eta_center is None else np.asarray(eta_center, float).reshape(n)
        lo = grid.origin - grid.half_width
        q = np.arange(-m // 2, m // 2)
        r = np.arange(-m // 2, m // 2)
        deta = np.pi * hbar / (m * h)
        core = np.zeros((m,) * (2 * n), dtype=complex)
        w = (2 * h) ** n
        for parity in np.ndindex(*(2,) * n):
            s_axes = [np.arange(p, 2 * m - 1, 2) for p in parity]
            mids = [lo[a] + 0.5 * h * s_axes[a] for a in range(n)]
            etas = [center[a] + deta * q for a in range(n)]
            mesh = np.meshgrid(*(mids + etas), indexing="ij")
            X = np.stack(mesh[:n], axis=-1)
            XI = np.stack(mesh[n:], axis=-1)
            vals = f(X, XI)
            # vals(r) = (w M^N)^{-1} e^{i d.center/hbar} sum_q f(m, center + eta_q) e^{i pi t q / M}
            for a, p in enumerate(parity):
                ax = n + a
                shape = [1] * (2 * n)
                shape[ax] = m
                vals = vals * np.exp(1j * np.pi * p * q / m).reshape(shape)
                vals = np.fft.fftshift(np.fft.ifft(np.fft.ifftshift(vals, axes=ax), axis=ax), axes=ax)
            vals = vals / w
            t_axes = [2 * r + p for p in parity]
            for a in range(n):
                shape = [1] * (2 * n)
                shape[n + a] = m
                vals = vals * np.exp(1j * t_axes[a] * h * center[a] / hbar).reshape(shape)
            idx_i, idx_j, valid = [], [], np.ones(vals.shape, bool)
            for a in range(n):
                shape_s = [1] * (2 * n)
                shape_s[a] = len(s_axes[a])
                shape_t = [1] * (2 * n)
                shape_t[n + a] = m
                S = s_axes[a].reshape(shape_s)
                T = t_axes[a].reshape(shape_t)
                i, j = (S + T) // 2, (S - T) // 2
                valid = valid & (i >= 0) & (i < m) & (j >= 0) & (j < m)
                idx_i.append(np.broadcast_to(i, vals.shape))
                idx_j.append(np.broadcast_to(j, vals.shape))
            core[tuple(x[valid] for x in idx_i) + tuple(x[valid] for x in idx_j)] = vals[valid]
        return cls(grid, hbar, core.reshape(grid.size, grid.size), f"band({f.label})", center)

    @property
    def eta_spacing(self):
        return np.pi * self.hbar / (2 * self.grid.half_width)

    def midpoint_axis(self, j=0):
        g = self.grid
        return g.origin[j] - g.half_width + 0.5 * g.spacing * np.arange(2 * g.points_per_axis - 1)

    def eta_axis(self, j=0):
        m = self.grid.points_per_axis
        return self.eta_center[j] + self.eta_spacing * np.arange(-m // 2, m // 2)

    def _compatible(self, other):
        return (
            isinstance(other, GridSymbol) and other.grid == self.grid and other.hbar == self.hbar
            and np.array_equal(other.eta_center, self.eta_center)
        )

    def __add__(self, other):
        if not self._compatible(other):
            raise InputError("grid symbols live on different lattices")
        return GridSymbol(self.grid, self.hbar, self.core + other.core, f"({self.label}+{other.label})", self.eta_center)

    def __sub__(self, other):
        return self + (-1.0) * other

    def __mul__(self, s):
        if not np.isscalar(s):
            return NotImplemented
        return GridSymbol(self.grid, self.hbar, s * self.core, self.label, self.eta_center)

    __rmul__ = __mul__

    def conj(self):
        return GridSymbol(self.grid, self.hbar, self.core.conj().T, f"conj({self.label})", self.eta_center)

    def kernel_core(self, grid, hbar):
        if grid != self.grid or not np.isclose(hbar, self.hbar, rtol=0, atol=1e-15):
            raise ResolutionError(
                f"grid symbol sampled on M={self.grid.points_per_axis}, hbar={self.hbar} cannot be "
                f"quantized on M={grid.points_per_axis}, hbar={hbar}",
                minimal_points=self.grid.points_per_axis,
            )
        return self.core

    def _midpoint_index(self, x):
        g = self.grid
        s = (np.asarray(x, float) - (g.origin - g.half_width)) / (0.5 * g.spacing)
        si = np.rint(s).astype(int)
        if np.any(np.abs(s - si) > 1e-6) or np.any(si < 0) or np.any(si > 2 * g.points_per_axis - 2):
            raise DomainError("grid symbols are defined on the half-grid inside the box")
        return si

    def contains(self, x, xi=None):
        try:
            self._midpoint_index(x)
        except DomainError:
            return False
        return True

    def _offsets(self, s):
        """Index pairs ``(i, j)`` with ``i + j = s`` for one axis, padded with -1."""
        m = self.grid.points_per_axis
        p = s % 2
        r = np.arange(-m // 2, m // 2)
        t = 2 * r + p
        i = (s + t) // 2
        j = (s - t) // 2
        ok = (i >= 0) & (i < m) & (j >= 0) & (j < m)
        return np.where(ok, i, -1), np.where(ok, j, -1), t

    def _slice(self, s_vec):
        """Untwisted kernel on the difference lattice through one midpoint."""
        m, n = self.grid.points_per_axis, self.dim
        parts = [self._offsets(int(s)) for s in s_vec]
        core = self.core.reshape((m,) * (2 * n))
        ii = np.meshgrid(*[p[0] for p in parts], indexing="ij")
        jj = np.meshgrid(*[p[1] for p in parts], indexing="ij")
        valid = np.ones(ii[0].shape, bool)
        for a in range(n):
            valid &= (ii[a] >= 0) & (jj[a] >= 0)
        idx = tuple(np.where(valid, x, 0) for x in ii) + tuple(np.where(valid, x, 0) for x in jj)
        vals = np.where(valid, core[idx], 0)
        offs = np.stack(np.meshgrid(*[p[2] for p in parts], indexing="ij"), -1) * self.grid.spacing
        return vals, offs

    def __call__(self, x, xi):
        x = np.asarray(x, float)
        xi = np.asarray(xi, float)
        x, xi = np.broadcast_arrays(x, xi)
        flat_x = x.reshape(-1, self.dim)
        flat_xi = xi.reshape(-1, self.dim)
        out = np.empty(flat_x.shape[0], dtype=complex)
        w = (2 * self.grid.spacing) ** self.dim
        for q in range(flat_x.shape[0]):
            vals, offs = self._slice(self._midpoint_index(flat_x[q]))
            phase = np.exp(-1j * (offs @ flat_xi[q]) / self.hbar)
            out[q] = w * np.sum(phase * vals)
        return out.reshape(x.shape[:-1])

    def samples(self):
        """Values on the lattice ``midpoint_axis x eta_axis``, shape ``(2M-1,)*N + (M,)*N``."""
        m, n = self.grid.points_per_axis, self.dim
        nmid = 2 * m - 1
        q = np.arange(-m // 2, m // 2)
        out = np.empty((nmid,) * n + (m,) * n, dtype=complex)
        w = (2 * self.grid.spacing) ** n
        for s_vec in np.ndindex(*(nmid,) * n):
            vals, offs = self._slice(s_vec)
            spec = vals * np.exp(-1j * (offs @ self.eta_center) / self.hbar)
            for a in range(n):
                spec = np.fft.fftshift(np.fft.fft(np.fft.ifftshift(spec, axes=a), axis=a), axes=a)
                shape = [1] * n
                shape[a] = m
                spec = spec * np.exp(-1j * np.pi * (s_vec[a] % 2) * q / m).reshape(shape)
            out[s_vec] = w * spec
        return out


class CallableSymbol(Symbol):
    """Symbol given by a vectorized callable ``fn(x, xi)``.

    The partial Fourier transform uses a trapezoid rule on
    ``[-eta_extent, eta_extent]^N``; adequate for symbols decaying in ``xi``.
    """

    def __init__(self, dim, fn, eta_extent=8.0, eta_points=128, label="callable", fd_steps=1e-5):
        self.dim = dim
        self.fn = fn
        self.eta_extent = eta_extent
        self.eta_points = eta_points
        self.label = label
        self.fd_steps = fd_steps

    def __call__(self, x, xi):
        return np.asarray(self.fn(np.asarray(x, float), np.asarray(xi, float)), dtype=complex)

    def eta_transform(self, m, k):
        n = self.dim
        m, k = np.broadcast_arrays(np.asarray(m, float), np.asarray(k, float))
        ax = np.linspace(-self.eta_extent, self.eta_extent, self.eta_points)
        w = np.full(ax.size, ax[1] - ax[0])
        w[[0, -1]] *= 0.5
        etas = np.stack(np.meshgrid(*[ax] * n, indexing="ij"), -1).reshape(-1, n)
        weights = np.prod(np.stack(np.meshgrid(*[w] * n, indexing="ij"), -1).reshape(-1, n), axis=-1)
        flat_m = m.reshape(-1, n)
        flat_k = k.reshape(-1, n)
        out = np.empty(flat_m.shape[0], dtype=complex)
        for q in range(flat_m.shape[0]):
            vals = self(np.broadcast_to(flat_m[q], etas.shape), etas)
            out[q] = np.sum(weights * vals * np.exp(1j * etas @ flat_k[q]))
        return out.reshape(m.shape[:-1])
