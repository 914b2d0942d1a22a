"""Discretized position space: grids, wave functions, kernel operators,
operator norms, the unitary Fourier transform and binary fixtures.

A grid covers ``[c - L, c + L)`` on every axis with ``M`` points, where
``c`` is an optional origin. Functions on the grid are flattened
row-major, first axis slowest.
"""
import struct

import numpy as np
import scipy.sparse.linalg as spla

from .errors import ConfigurationError, InputError, NumericalError

DEFAULT_POINT_CAP = 2**16
_MAGIC = b"MWGL"
_HEADER = struct.Struct("<4sBqqd")


class PositionGrid:
    """Uniform tensor grid on a box of half-width ``L`` per axis.

    Parameters
    ----------
    dim : int
        Spatial dimension ``N``.
    half_width : float
        ``L``; the spacing is ``h = 2L / M``.
    points : int
        ``M`` per axis, even so that midpoints close on the half-grid.
    origin : array_like, optional
        Box center, default zero.
    cap : int
        Upper bound for ``M**N``.
    """

    def __init__(self, dim, half_width, points, origin=None, cap=DEFAULT_POINT_CAP, dual_origin=None):
        if dim not in (1, 2, 3):
            raise ConfigurationError(f"dimension must be 1, 2 or 3, got {dim}")
        if points < 2 or points % 2:
            raise ConfigurationError(f"points per axis must be even, got {points}")
        if half_width <= 0:
            raise ConfigurationError("half width must be positive")
        if points**dim > cap:
            raise ConfigurationError(f"{points}**{dim} grid points exceed the cap {cap}")
        self.dim = dim
        self.half_width = float(half_width)
        self.points_per_axis = int(points)
        self.cap = cap
        self.origin = np.zeros(dim) if origin is None else np.asarray(origin, dtype=float).reshape(dim)
        self.dual_origin = np.zeros(dim) if dual_origin is None else np.asarray(dual_origin, dtype=float).reshape(dim)

    def __repr__(self):
        return f"PositionGrid(dim={self.dim}, L={self.half_width}, M={self.points_per_axis})"

    def __eq__(self, other):
        return (
            isinstance(other, PositionGrid)
            and self.dim == other.dim
            and self.points_per_axis == other.points_per_axis
            and self.half_width == other.half_width
            and np.array_equal(self.origin, other.origin)
        )

    def __hash__(self):
        return hash(self.key)

    @property
    def key(self):
        return (self.dim, self.points_per_axis, self.half_width, tuple(self.origin))

    @property
    def spacing(self):
        return 2 * self.half_width / self.points_per_axis

    @property
    def size(self):
        return self.points_per_axis**self.dim

    @property
    def shape(self):
        return (self.points_per_axis,) * self.dim

    @property
    def cell_volume(self):
        return self.spacing**self.dim

    def axis(self, j=0):
        return self.origin[j] - self.half_width + self.spacing * np.arange(self.points_per_axis)

    def points(self):
        """All grid points as an ``(M**N, N)`` array."""
        mesh = np.meshgrid(*[self.axis(j) for j in range(self.dim)], indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def reciprocal(self):
        """Grid of the Fourier variable: spacing ``pi / L``, same point count."""
        return PositionGrid(
            self.dim,
            np.pi * self.points_per_axis / (2 * self.half_width),
            self.points_per_axis,
            origin=self.dual_origin,
            cap=self.cap,
            dual_origin=self.origin,
        )

    def contains(self, x, margin=0.0):
        x = np.asarray(x, dtype=float)
        lo = self.origin - self.half_width + margin
        hi = self.origin + self.half_width - self.spacing - margin
        return bool(np.all(x >= lo) and np.all(x <= hi))

    def check_same(self, other):
        if self != other:
            raise InputError(f"grid mismatch: {self!r} vs {other!r}")


class WaveFunction:
    """Complex samples of a function on a grid with the ``L^2`` inner product."""

    def __init__(self, grid, values):
        values = np.asarray(values, dtype=complex).ravel()
        if values.size != grid.size:
            raise InputError(f"expected {grid.size} values, got {values.size}")
        self.grid = grid
        self.values = values

    @classmethod
    def from_function(cls, grid, fn):
        return cls(grid, fn(grid.points()))

    def __repr__(self):
        return f"WaveFunction({self.grid!r}, norm={self.norm():.6g})"

    def norm(self):
        return float(np.sqrt(self.grid.cell_volume * np.vdot(self.values, self.values).real))

    def normalized(self):
        n = self.norm()
        if n == 0:
            raise NumericalError("cannot normalize the zero vector")
        return WaveFunction(self.grid, self.values / n)

    def reshaped(self):
        return self.values.reshape(self.grid.shape)

    def __add__(self, other):
        self.grid.check_same(other.grid)
        return WaveFunction(self.grid, self.values + other.values)

    def __sub__(self, other):
        self.grid.check_same(other.grid)
        return WaveFunction(self.grid, self.values - other.values)

    def __mul__(self, s):
        return WaveFunction(self.grid, s * self.values)

    __rmul__ = __mul__


def inner_product(u, v):
    """``<u, v> = h^N sum conj(u_i) v_i``, antilinear in the first slot."""
    u.grid.check_same(v.grid)
    return complex(u.grid.cell_volume * np.vdot(u.values, v.values))


class KernelOperator:
    """Dense integral operator ``(S u)(x_i) = h^N sum_j K(x_i, x_j) u(x_j)``.

    The weighted matrix ``h^N K`` is stored; ``kernel`` recovers ``K``.
    """

    def __init__(self, grid, kernel):
        kernel = np.asarray(kernel, dtype=complex)
        if kernel.shape != (grid.size, grid.size):
            raise InputError(f"kernel shape {kernel.shape} does not match grid size {grid.size}")
        self.grid = grid
        self.matrix = kernel * grid.cell_volume

    @classmethod
    def from_matrix(cls, grid, matrix):
        op = cls.__new__(cls)
        op.grid = grid
        op.matrix = np.asarray(matrix, dtype=complex)
        if op.matrix.shape != (grid.size, grid.size):
            raise InputError("matrix shape does not match grid")
        return op

    @classmethod
    def identity(cls, grid):
        return cls.from_matrix(grid, np.eye(grid.size, dtype=complex))

    @classmethod
    def multiplication(cls, grid, values):
        return cls.from_matrix(grid, np.diag(np.asarray(values, dtype=complex).ravel()))

    @property
    def kernel(self):
        return self.matrix / self.grid.cell_volume

    @property
    def shape(self):
        return self.matrix.shape

    def adjoint(self):
        return KernelOperator.from_matrix(self.grid, self.matrix.conj().T)

    def apply(self, u):
        self.grid.check_same(u.grid)
        return WaveFunction(self.grid, self.matrix @ u.values)

    def _combine(self, other, op):
        self.grid.check_same(other.grid)
        return KernelOperator.from_matrix(self.grid, op(self.matrix, other.matrix))

    def __add__(self, other):
        return self._combine(other, np.add)

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __matmul__(self, other):
        if isinstance(other, WaveFunction):
            return self.apply(other)
        return self._combine(other, np.matmul)

    def __mul__(self, s):
        return KernelOperator.from_matrix(self.grid, s * self.matrix)

    __rmul__ = __mul__

    def __truediv__(self, s):
        return KernelOperator.from_matrix(self.grid, self.matrix / s)

    def __neg__(self):
        return KernelOperator.from_matrix(self.grid, -self.matrix)

    def conjugated_by(self, phase):
        """``U S U*`` for the multiplication operator ``U`` by unimodular ``phase``."""
        phase = np.asarray(phase).ravel()
        return KernelOperator.from_matrix(self.grid, phase[:, None] * self.matrix * phase.conj()[None, :])


def apply(S, u):
    """Apply an operator to a wave function on the same grid."""
    return S.apply(u)


def start_vector(n, seed=0):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return v / np.linalg.norm(v)


def _as_linear_operator(S):
    if isinstance(S, KernelOperator):
        return spla.aslinearoperator(S.matrix), S.matrix
    if isinstance(S, np.ndarray):
        return spla.aslinearoperator(S), S
    if isinstance(S, spla.LinearOperator):
        return S, None
    if hasattr(S, "linear_operator"):
        return S.linear_operator(), None
    raise InputError(f"cannot take the norm of {type(S).__name__}")


def power_iteration(op, tol=1e-10, max_iter=2000, seed=0):
    """Largest singular value by power iteration on ``S* S``.

    Returns
    -------
    (float, int)
        The estimate and the number of iterations used.
    """
    op = _as_linear_operator(op)[0]
    x = start_vector(op.shape[1], seed)
    prev = np.inf
    for it in range(1, max_iter + 1):
        y = op.matvec(x)
        z = op.rmatvec(y)
        est = np.sqrt(np.vdot(x, z).real)
        nz = np.linalg.norm(z)
        if nz == 0:
            return 0.0, it
        x = z / nz
        if abs(est - prev) <= tol * est:
            return float(est), it
        prev = est
    raise NumericalError(
        "power iteration did not converge",
        {"iterations": max_iter, "last_estimate": float(prev), "tol": tol},
    )


def operator_norm(S, tol=1e-10, method="lanczos", max_iter=2000, seed=0):
    """Operator norm on ``L^2`` of the grid, i.e. the top singular value.

    Parameters
    ----------
    S : KernelOperator, ndarray or scipy LinearOperator
        Matrices are interpreted as already weighted by ``h^N``.
    tol : float
        Relative convergence tolerance.
    method : {"lanczos", "power", "dense"}
        ``lanczos`` runs ARPACK's Krylov refinement of the power iteration
        from a seeded start vector, ``power`` is plain power iteration on
        ``S* S`` and ``dense`` a full SVD for small oracles.
    """
    if tol <= 0:
        raise InputError("tol must be positive")
    op, dense = _as_linear_operator(S)
    if method == "dense" or (dense is not None and min(dense.shape) <= 3):
        if dense is None:
            dense = op.matmat(np.eye(op.shape[1], dtype=complex))
        return float(np.linalg.norm(dense, 2))
    if method == "power":
        return power_iteration(op, tol, max_iter, seed)[0]
    if method != "lanczos":
        raise InputError(f"unknown norm method {method!r}")
    try:
        s = spla.svds(
            op, k=1, tol=tol, v0=start_vector(op.shape[1], seed), maxiter=max_iter,
            return_singular_vectors=False, solver="arpack",
        )
    except spla.ArpackNoConvergence as exc:
        raise NumericalError("Lanczos norm iteration did not converge", {"iterations": max_iter}) from exc
    except spla.ArpackError:
        # degenerate top singular values can leave ARPACK without shifts
        return power_iteration(op, tol, max_iter, seed)[0]
    return float(s[0])


def _axis_dft(values, grid, sign):
    """Unitary transform from ``grid`` to its reciprocal along every axis."""
    target = grid.reciprocal()
    out = values.reshape(grid.shape).astype(complex)
    m = grid.points_per_axis
    j = np.arange(m)
    h, dk = grid.spacing, target.spacing
    for ax in range(grid.dim):
        x0 = grid.origin[ax] - grid.half_width
        k0 = target.origin[ax] - target.half_width
        pre = np.exp(sign * 1j * k0 * j * h)
        post = np.exp(sign * 1j * (k0 + dk * j) * x0)
        shape = [1] * grid.dim
        shape[ax] = m
        out = out * pre.reshape(shape)
        if sign < 0:
            out = np.fft.fft(out, axis=ax)
        else:
            out = np.fft.ifft(out, axis=ax) * m
        out = out * post.reshape(shape) * h / np.sqrt(2 * np.pi)
    return WaveFunction(target, out.ravel())


def fourier(u, direction="forward"):
    """Unitary Fourier transform with ``(2 pi)^{-N/2}`` normalization.

    ``forward`` computes ``(2pi)^{-N/2} int e^{-i k.x} u(x) dx`` on the
    reciprocal grid; ``inverse`` uses ``e^{+i k.x}`` and maps back.
    """
    if not np.all(np.isfinite(u.values)):
        raise InputError("wave function has non-finite values")
    if direction == "forward":
        return _axis_dft(u.values, u.grid, -1)
    if direction == "inverse":
        return _axis_dft(u.values, u.grid, +1)
    raise InputError(f"direction must be forward or inverse, got {direction!r}")


# ---------------------------------------------------------------------------
# binary fixtures


def save_binary(path, obj):
    """Write a wave function or kernel operator as little-endian float64.

    Layout: magic, kind byte (0 wave, 1 kernel), ``N``, ``M``, ``L``, the
    origin (``N`` doubles), then interleaved real/imaginary parts row-major.
    """
    if isinstance(obj, WaveFunction):
        kind, data = 0, obj.values
    elif isinstance(obj, KernelOperator):
        kind, data = 1, obj.kernel
    else:
        raise InputError(f"cannot serialize {type(obj).__name__}")
    g = obj.grid
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, kind, g.dim, g.points_per_axis, g.half_width))
        fh.write(g.origin.astype("<f8").tobytes())
        fh.write(np.ascontiguousarray(data).view(np.float64).astype("<f8").tobytes())


def load_binary(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, kind, dim, m, half = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise InputError(f"{path} is not a magweyl fixture")
    off = _HEADER.size
    origin = np.frombuffer(raw, "<f8", dim, off)
    grid = PositionGrid(dim, half, m, origin=origin, cap=max(DEFAULT_POINT_CAP, m**dim))
    data = np.frombuffer(raw, "<f8", offset=off + 8 * dim).astype(float).view(complex)
    if kind == 0:
        return WaveFunction(grid, data)
    return KernelOperator(grid, data.reshape(grid.size, grid.size))
