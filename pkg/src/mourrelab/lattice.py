"""Periodic grids, Fourier-multiplier operators and weighted operator norms.

Operators act on complex arrays of shape ``grid.shape`` or, for batched
application, ``grid.shape + (B,)``.  Inner products carry the quadrature
weight ``h**dim`` so discrete norms approximate continuum ones.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy.special import erfc

DENSE_CAP = 4096


class DenseSizeError(ValueError):
    """Raised when a dense materialization would exceed the size cap."""


class PowerIterationError(RuntimeError):
    """Power iteration did not converge; carries the last iterate."""

    def __init__(self, message: str, estimate: float, vector: np.ndarray):
        super().__init__(message)
        self.estimate = estimate
        self.vector = vector


def bracket(x):
    """Japanese bracket sqrt(1 + |x|^2), elementwise."""
    return np.sqrt(1.0 + np.abs(x) ** 2)


def _is_power_of_two(n: int) -> bool:
    return n >= 2 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid:
    """Periodic lattice on [-L, L)^dim with N points per axis.

    Position nodes are ``-L + offset + m*h`` and momentum nodes ``(pi/L)*n``
    for ``n`` in ``-N/2 .. N/2-1``.
    """

    dim: int
    n: int
    half_width: float
    offset: float = 0.0

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.dim}")
        if not _is_power_of_two(int(self.n)):
            raise ValueError(f"points per axis must be a power of two, got {self.n}")
        if not self.half_width > 0:
            raise ValueError("half_width must be positive")
        if not 0.0 <= self.offset < self.h:
            raise ValueError(f"offset must lie in [0, h) with h = {self.h}")

    @property
    def h(self) -> float:
        return 2.0 * self.half_width / self.n

    @property
    def dk(self) -> float:
        return math.pi / self.half_width

    @property
    def k_max(self) -> float:
        """Nyquist momentum pi/h."""
        return math.pi / self.h

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def size(self) -> int:
        return self.n**self.dim

    @property
    def cell(self) -> float:
        """Quadrature weight h**dim."""
        return self.h**self.dim

    @cached_property
    def axis_x(self) -> np.ndarray:
        return -self.half_width + self.offset + self.h * np.arange(self.n)

    @cached_property
    def axis_k(self) -> np.ndarray:
        """Momentum nodes of one axis in FFT order."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.h)

    @cached_property
    def _x_mesh(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.axis_x] * self.dim), indexing="ij"))

    @cached_property
    def _k_mesh(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.axis_k] * self.dim), indexing="ij"))

    def x(self, axis: int = 0) -> np.ndarray:
        return self._x_mesh[axis]

    def k(self, axis: int = 0) -> np.ndarray:
        """Momentum coordinate on the FFT-ordered momentum mesh."""
        return self._k_mesh[axis]

    @cached_property
    def radius(self) -> np.ndarray:
        return np.sqrt(sum(c**2 for c in self._x_mesh))

    @cached_property
    def k_squared(self) -> np.ndarray:
        return sum(c**2 for c in self._k_mesh)

    @property
    def positions(self) -> np.ndarray:
        return np.stack(self._x_mesh, axis=-1)

    @property
    def momenta(self) -> np.ndarray:
        return np.stack(self._k_mesh, axis=-1)

    def inner(self, f, g) -> complex:
        return self.cell * np.vdot(np.asarray(f).ravel(), np.asarray(g).ravel())

    def norm(self, f) -> float:
        return math.sqrt(self.cell) * float(np.linalg.norm(np.asarray(f).ravel()))

    def signature(self) -> dict:
        return {
            "dim": self.dim,
            "points_per_axis": self.n,
            "half_width": float(self.half_width),
            "offset": float(self.offset),
        }

    def refined(self) -> "Grid":
        """Same box, twice the points per axis, same relative offset."""
        return Grid(self.dim, 2 * self.n, self.half_width, self.offset / 2.0)


def make_grid(dim: int = 1, n: int = 256, half_width: float = 40.0, offset: float | None = None) -> Grid:
    """Build a grid; ``offset=None`` means half a cell so no node sits at 0."""
    if offset is None:
        offset = half_width / n
    return Grid(int(dim), int(n), float(half_width), float(offset))


def _axes(grid: Grid) -> tuple[int, ...]:
    return tuple(range(grid.dim))


def _expand(values: np.ndarray, f: np.ndarray) -> np.ndarray:
    extra = f.ndim - values.ndim
    return values.reshape(values.shape + (1,) * extra) if extra > 0 else values


def transform(grid: Grid, f) -> np.ndarray:
    """Continuum-normalized Fourier transform on ascending momentum nodes."""
    f = np.asarray(f, dtype=complex)
    axes = _axes(grid)
    phase = np.exp(-1j * sum(grid.k(j) * grid.axis_x[0] for j in axes))
    fh = np.fft.fftn(f, axes=axes) * _expand(phase, f)
    fh *= (grid.h / math.sqrt(2.0 * math.pi)) ** grid.dim
    return np.fft.fftshift(fh, axes=axes)


def inverse_transform(grid: Grid, fh) -> np.ndarray:
    axes = _axes(grid)
    fh = np.fft.ifftshift(np.asarray(fh, dtype=complex), axes=axes)
    phase = np.exp(1j * sum(grid.k(j) * grid.axis_x[0] for j in axes))
    f = np.fft.ifftn(fh * _expand(phase, fh), axes=axes)
    return f * grid.n**grid.dim * (grid.dk / math.sqrt(2.0 * math.pi)) ** grid.dim


def ascending_momenta(grid: Grid) -> np.ndarray:
    return np.fft.fftshift(grid.axis_k)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Values sampled on a grid; ``flags`` carries advisory notes."""

    grid: Grid
    values: np.ndarray
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        vals = np.asarray(self.values)
        if vals.shape != self.grid.shape:
            vals = vals.reshape(self.grid.shape)
        object.__setattr__(self, "values", vals)

    def norm(self) -> float:
        return self.grid.norm(self.values)

    def inner(self, other: "GridFunction") -> complex:
        return self.grid.inner(self.values, other.values)

    def transform(self) -> np.ndarray:
        return transform(self.grid, self.values)

    @classmethod
    def from_transform(cls, grid: Grid, fh) -> "GridFunction":
        return cls(grid, inverse_transform(grid, fh))


# ----------------------------------------------------------------------------
# Linear operators


class LinOp:
    """Linear operator on grid functions with an explicit adjoint."""

    kind = "abstract"

    def __init__(self, grid: Grid):
        self.grid = grid

    def apply(self, f: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def adjoint(self) -> "LinOp":
        return Adjoint(self)

    @property
    def H(self) -> "LinOp":
        return self.adjoint()

    def __call__(self, f):
        if isinstance(f, GridFunction):
            return GridFunction(f.grid, self.apply(f.values))
        return self.apply(np.asarray(f, dtype=complex))

    def __matmul__(self, other):
        if isinstance(other, LinOp):
            return Compose([self, other])
        return self(other)

    def __add__(self, other):
        if isinstance(other, LinOp):
            return Sum([self, other])
        if np.isscalar(other):
            return Sum([self, Scale(other, identity(self.grid))])
        return NotImplemented

    __radd__ = __add__

    def __neg__(self):
        return Scale(-1.0, self)

    def __sub__(self, other):
        if isinstance(other, LinOp):
            return Sum([self, Scale(-1.0, other)])
        if np.isscalar(other):
            return self + (-other)
        return NotImplemented

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, c):
        if np.isscalar(c):
            return Scale(c, self)
        return NotImplemented

    __rmul__ = __mul__

    def to_dense(self, cap: int = DENSE_CAP, block: int = 256) -> np.ndarray:
        size = self.grid.size
        if size > cap:
            raise DenseSizeError(
                f"dense form would be {size}x{size} (cap {cap}); use matrix-free norms instead"
            )
        out = np.empty((size, size), dtype=complex)
        for start in range(0, size, block):
            stop = min(size, start + block)
            basis = np.zeros((size, stop - start), dtype=complex)
            basis[np.arange(start, stop), np.arange(stop - start)] = 1.0
            cols = self.apply(basis.reshape(self.grid.shape + (stop - start,)))
            out[:, start:stop] = cols.reshape(size, stop - start)
        return out


class Multiplier(LinOp):
    """Function of momentum: ``F^-1 m(k) F`` with ``m`` on the FFT-ordered mesh."""

    kind = "multiplier"

    def __init__(self, grid: Grid, symbol):
        super().__init__(grid)
        self.symbol = np.broadcast_to(np.asarray(symbol), grid.shape)

    def apply(self, f):
        axes = _axes(self.grid)
        return np.fft.ifftn(_expand(self.symbol, f) * np.fft.fftn(f, axes=axes), axes=axes)

    def adjoint(self):
        return Multiplier(self.grid, np.conj(self.symbol))


class Diagonal(LinOp):
    """Multiplication by a function of position."""

    kind = "diagonal"

    def __init__(self, grid: Grid, values):
        super().__init__(grid)
        self.values = np.broadcast_to(np.asarray(values), grid.shape)

    def apply(self, f):
        return _expand(self.values, f) * f

    def adjoint(self):
        return Diagonal(self.grid, np.conj(self.values))


class Dense(LinOp):
    kind = "dense"

    def __init__(self, grid: Grid, matrix):
        super().__init__(grid)
        self.matrix = np.asarray(matrix)
        if self.matrix.shape != (grid.size, grid.size):
            raise ValueError("matrix shape does not match grid size")

    def apply(self, f):
        flat = f.reshape(self.grid.size, -1)
        return (self.matrix @ flat).reshape(f.shape)

    def adjoint(self):
        return Dense(self.grid, self.matrix.conj().T)

    def to_dense(self, cap: int = DENSE_CAP, block: int = 256):
        return np.array(self.matrix, dtype=complex)


class Compose(LinOp):
    """Product ``ops[0] @ ops[1] @ ...`` (rightmost applied first)."""

    kind = "compose"

    def __init__(self, ops: Sequence[LinOp]):
        flat: list[LinOp] = []
        for op in ops:
            flat.extend(op.ops if isinstance(op, Compose) else [op])
        super().__init__(flat[0].grid)
        self.ops = flat

    def apply(self, f):
        for op in reversed(self.ops):
            f = op.apply(f)
        return f

    def adjoint(self):
        return Compose([op.adjoint() for op in reversed(self.ops)])


class Sum(LinOp):
    kind = "sum"

    def __init__(self, ops: Sequence[LinOp]):
        flat: list[LinOp] = []
        for op in ops:
            flat.extend(op.ops if isinstance(op, Sum) else [op])
        super().__init__(flat[0].grid)
        self.ops = flat

    def apply(self, f):
        out = self.ops[0].apply(f)
        for op in self.ops[1:]:
            out = out + op.apply(f)
        return out

    def adjoint(self):
        return Sum([op.adjoint() for op in self.ops])


class Scale(LinOp):
    kind = "scale"

    def __init__(self, c, op: LinOp):
        super().__init__(op.grid)
        self.c = c
        self.op = op

    def apply(self, f):
        return self.c * self.op.apply(f)

    def adjoint(self):
        return Scale(np.conj(self.c), self.op.adjoint())


class Adjoint(LinOp):
    """Adjoint of an operator known only through its dense form."""

    kind = "adjoint"

    def __init__(self, op: LinOp):
        super().__init__(op.grid)
        self.op = op
        self._matrix = None

    def apply(self, f):
        if self._matrix is None:
            self._matrix = self.op.to_dense().conj().T
        flat = f.reshape(self.grid.size, -1)
        return (self._matrix @ flat).reshape(f.shape)

    def adjoint(self):
        return self.op


class FunctionOp(LinOp):
    """Matrix-free operator given by forward and adjoint callables."""

    kind = "function"

    def __init__(self, grid: Grid, forward: Callable, backward: Callable, label: str = ""):
        super().__init__(grid)
        self._forward = forward
        self._backward = backward
        self.label = label

    def apply(self, f):
        return self._forward(f)

    def adjoint(self):
        return FunctionOp(self.grid, self._backward, self._forward, self.label + "^*")


def identity(grid: Grid) -> Diagonal:
    return Diagonal(grid, np.ones(grid.shape))


def position(grid: Grid, axis: int = 0) -> Diagonal:
    return Diagonal(grid, grid.x(axis))


def momentum(grid: Grid, axis: int = 0) -> Multiplier:
    return Multiplier(grid, grid.k(axis))


def laplacian(grid: Grid) -> Multiplier:
    """The free Hamiltonian |p|^2 as an exact Fourier multiplier."""
    return Multiplier(grid, grid.k_squared)


def translation(grid: Grid, a: float, axis: int = 0) -> Multiplier:
    """exp(i a p_axis); shifts f(x) to f(x + a e_axis)."""
    return Multiplier(grid, np.exp(1j * a * grid.k(axis)))


def weight_op(grid: Grid, t: float, s: float) -> LinOp:
    """<p>^t <q>^s in this fixed order."""
    return Compose([Multiplier(grid, bracket(np.sqrt(grid.k_squared)) ** t),
                    Diagonal(grid, bracket(grid.radius) ** s)])


def weight_inverse(grid: Grid, t: float, s: float) -> LinOp:
    """Inverse of weight_op: <q>^-s <p>^-t."""
    return Compose([Diagonal(grid, bracket(grid.radius) ** (-s)),
                    Multiplier(grid, bracket(np.sqrt(grid.k_squared)) ** (-t))])


# ----------------------------------------------------------------------------
# Inner window


def window_function(grid: Grid, radius: float | None = None, width: float | None = None) -> np.ndarray:
    """Smooth radial erfc window, close to 1 at the origin and below 1e-16 at ``radius``.

    The transition is centred at ``radius - 6*width``; pass a smaller width
    for a window that is flat over a larger region.

    The erfc profile keeps the Fourier tail Gaussian, so products with
    band-limited states stay band-limited to near machine precision.
    """
    radius = grid.half_width / 2.0 if radius is None else radius
    width = radius / 8.0 if width is None else width
    centre = radius - 6.0 * width
    return 0.5 * erfc((grid.radius - centre) / width)


def inner_window_basis(grid: Grid, radius: float | None = None, band: float | None = 0.5,
                       sharp: bool = False, keep: float = 1e-3) -> np.ndarray:
    """Orthonormal basis (columns, quadrature inner product) of test states.

    ``sharp=True`` gives the nodal states inside |x| <= radius.  Otherwise the
    states are smooth-window multiples of functions band-limited to
    ``band * k_max``.
    """
    radius = grid.half_width / 2.0 if radius is None else radius
    if sharp:
        idx = np.flatnonzero(grid.radius.ravel() <= radius)
        basis = np.zeros((grid.size, idx.size))
        basis[idx, np.arange(idx.size)] = 1.0
        return basis / math.sqrt(grid.cell)
    chi = Diagonal(grid, window_function(grid, radius))
    if band is None:
        op: LinOp = chi
    else:
        cut = np.sqrt(grid.k_squared) <= band * grid.k_max
        op = chi @ Multiplier(grid, cut.astype(float))
    u, s, _ = np.linalg.svd(op.to_dense(), full_matrices=False)
    return u[:, s > keep * s[0]] / math.sqrt(grid.cell)


def form_norm(op: LinOp, basis: np.ndarray) -> float:
    """Norm of the compression of ``op`` to the span of ``basis``."""
    grid = op.grid
    image = op.apply(basis.reshape(grid.shape + (basis.shape[1],)).astype(complex))
    block = grid.cell * basis.conj().T @ image.reshape(grid.size, -1)
    return float(np.linalg.norm(block, 2)) if block.size else 0.0


# ----------------------------------------------------------------------------
# Norms


def weighted(T: LinOp, t_in: float = 0.0, s_in: float = 0.0, t_out: float = 0.0,
             s_out: float = 0.0, window: np.ndarray | None = None) -> LinOp:
    """W_out T W_in^-1, optionally sandwiched by a position window."""
    core = T if window is None else Diagonal(T.grid, window) @ T @ Diagonal(T.grid, window)
    return weight_op(T.grid, t_out, s_out) @ core @ weight_inverse(T.grid, t_in, s_in)


def power_iteration(B: LinOp, max_iters: int = 2000, tol: float = 1e-10, seed: int = 0) -> float:
    """Largest singular value of B by power iteration on B^* B."""
    rng = np.random.default_rng(seed)
    shape = B.grid.shape
    v = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    v /= np.linalg.norm(v)
    Bh = B.adjoint()
    sigma = 0.0
    for _ in range(max_iters):
        w = B.apply(v)
        new = float(np.linalg.norm(w))
        if new == 0.0:
            return 0.0
        v = Bh.apply(w)
        nv = np.linalg.norm(v)
        if nv == 0.0:
            return 0.0
        v = v / nv
        if abs(new - sigma) <= tol * new:
            return new
        sigma = new
    raise PowerIterationError(
        f"power iteration not converged after {max_iters} iterations", sigma, v)


def lanczos_norm(B: LinOp, tol: float = 1e-10, seed: int = 0, max_iters: int | None = None) -> float:
    """Largest singular value of B by implicitly restarted Lanczos (ARPACK)."""
    from scipy.sparse.linalg import LinearOperator, svds

    shape, size = B.grid.shape, B.grid.size
    Bh = B.adjoint()
    op = LinearOperator((size, size), dtype=complex,
                        matvec=lambda v: B.apply(v.reshape(shape).astype(complex)).ravel(),
                        rmatvec=lambda v: Bh.apply(v.reshape(shape).astype(complex)).ravel())
    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(size) + 1j * rng.standard_normal(size)
    if not np.any(op.rmatvec(op.matvec(v0))):
        return 0.0  # ARPACK cannot start from a null vector
    s = svds(op, k=1, tol=tol, v0=v0, maxiter=max_iters, return_singular_vectors=False)
    return float(s[0])


def opnorm(T: LinOp, t_in: float = 0.0, s_in: float = 0.0, t_out: float = 0.0,
           s_out: float = 0.0, method: str = "power_iteration", max_iters: int = 2000,
           tol: float = 1e-10, seed: int = 0, window: np.ndarray | None = None) -> float:
    """Norm of T from H^{t_in}_{s_in} to H^{t_out}_{s_out}: ||W_out T W_in^-1||."""
    B = weighted(T, t_in, s_in, t_out, s_out, window)
    if method == "dense_svd":
        return float(np.linalg.norm(B.to_dense(), 2))
    if method == "power_iteration":
        return power_iteration(B, max_iters=max_iters, tol=tol, seed=seed)
    if method == "lanczos":
        return lanczos_norm(B, tol=tol, seed=seed, max_iters=max_iters)
    raise ValueError(f"unknown method {method!r}")


def b1_norm(T: LinOp, **kwargs) -> float:
    """Norm in B(H^1, H^-1)."""
    return opnorm(T, 1.0, 0.0, -1.0, 0.0, **kwargs)


# ----------------------------------------------------------------------------
# Hamiltonians


@dataclass(eq=False)
class Hamiltonian:
    """H = |p|^2 + V(q) with an optional real potential sampled on the grid."""

    grid: Grid
    potential: np.ndarray | None = None
    _eig: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.potential is not None:
            pot = np.asarray(getattr(self.potential, "values", self.potential))
            if np.iscomplexobj(pot):
                if np.max(np.abs(pot.imag)) > 1e-12 * max(1.0, np.max(np.abs(pot))):
                    raise ValueError("potential must be real")
                pot = pot.real
            self.potential = pot.reshape(self.grid.shape).astype(float)

    @property
    def op(self) -> LinOp:
        lap = laplacian(self.grid)
        if self.potential is None:
            return lap
        return lap + Diagonal(self.grid, self.potential)

    def apply(self, f):
        return self.op.apply(f)

    def dense(self, cap: int = DENSE_CAP) -> np.ndarray:
        m = self.op.to_dense(cap)
        drift = np.max(np.abs(m - m.conj().T))
        if drift > 1e-8 * max(1.0, np.max(np.abs(m))):
            raise ValueError(f"non-Hermitian drift {drift:.3e}")
        m = 0.5 * (m + m.conj().T)
        if np.max(np.abs(m.imag)) <= 1e-12 * np.max(np.abs(m)):
            m = m.real
        return m

    def eigensystem(self, cap: int = DENSE_CAP) -> tuple[np.ndarray, np.ndarray]:
        """Eigenvalues and orthonormal (Euclidean) eigenvectors, cached."""
        if self._eig is None:
            self._eig = np.linalg.eigh(self.dense(cap))
        return self._eig

    def localization_scores(self, vectors: np.ndarray | None = None) -> np.ndarray:
        """<phi, <q>^2 phi> / L^2 for normalized eigenvectors."""
        if vectors is None:
            vectors = self.eigensystem()[1]
        w = (1.0 + self.grid.radius.ravel() ** 2)[:, None]
        num = np.sum(w * np.abs(vectors) ** 2, axis=0)
        den = np.sum(np.abs(vectors) ** 2, axis=0)
        return num / den / self.grid.half_width**2
