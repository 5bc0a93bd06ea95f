"""Vector fields u, the conjugate operators A_u, their flows and unitary groups."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import ndimage

from .lattice import (Diagonal, FunctionOp, Grid, Hamiltonian, LinOp, Multiplier,
                      bracket, inner_window_basis, inverse_transform, transform, weight_inverse,
                      weight_op)
from .records import SweepRecord


class FlowError(RuntimeError):
    """Integrator step underflow; ``state`` holds the last accepted point."""

    def __init__(self, message: str, tau: float, state: np.ndarray):
        super().__init__(message)
        self.tau = tau
        self.state = state


class FlowEscapeError(ValueError):
    """The flow carries a resolved momentum node outside the momentum window."""


def _as_points(k, dim: int | None = None) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    if dim == 1 and (k.ndim == 0 or k.shape[-1] != 1):
        k = k[..., None]
    return k


@dataclass(frozen=True, eq=False)
class VectorField:
    """A symbol u: R^dim -> R^dim with closed-form Jacobian and divergence.

    Callables take points of shape ``(..., dim)``.
    """

    kind: str
    params: dict
    field_fn: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    jacobian_fn: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    divergence_fn: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    sup_u: float = math.inf
    sup_du: float = math.inf

    def __call__(self, k) -> np.ndarray:
        return self.field_fn(np.asarray(k, dtype=float))

    def jacobian(self, k) -> np.ndarray:
        return self.jacobian_fn(np.asarray(k, dtype=float))

    def divergence(self, k) -> np.ndarray:
        return self.divergence_fn(np.asarray(k, dtype=float))

    def describe(self) -> dict:
        return {"kind": self.kind, **self.params}


def _componentwise(kind, params, g, dg, sup_u, sup_du) -> VectorField:
    def jac(k):
        d = dg(k)
        return d[..., :, None] * np.eye(k.shape[-1])

    return VectorField(kind, params, g, jac, lambda k: dg(k).sum(axis=-1), sup_u, sup_du)


def nakamura(a: float = 1.0) -> VectorField:
    """u(k) = (sin(a k_1), ..., sin(a k_dim))."""
    return _componentwise("nakamura", {"a": float(a)}, lambda k: np.sin(a * k),
                          lambda k: a * np.cos(a * k), 1.0, abs(a))


def dilation() -> VectorField:
    """u(k) = k, generating the dilation group."""
    return _componentwise("dilation", {}, lambda k: np.array(k, dtype=float),
                          lambda k: np.ones_like(k), math.inf, 1.0)


def arctan_field() -> VectorField:
    return _componentwise("arctan", {}, np.arctan, lambda k: 1.0 / (1.0 + k**2),
                          math.pi / 2.0, 1.0)


def _radial(kind, params, power) -> VectorField:
    # u(k) = k <k>^-power
    def g(k):
        return k * bracket(np.linalg.norm(k, axis=-1))[..., None] ** (-power)

    def jac(k):
        b = bracket(np.linalg.norm(k, axis=-1))[..., None, None]
        eye = np.eye(k.shape[-1])
        return eye * b ** (-power) - power * k[..., :, None] * k[..., None, :] * b ** (-power - 2)

    def div(k):
        r2 = np.sum(k**2, axis=-1)
        b = bracket(np.sqrt(r2))
        return k.shape[-1] * b ** (-power) - power * r2 * b ** (-power - 2)

    return VectorField(kind, params, g, jac, div, 1.0, 1.0 + power)


def normalized() -> VectorField:
    """u(k) = k / <k>."""
    return _radial("normalized", {}, 1.0)


def decay(power_dim: int = 1) -> VectorField:
    """u(k) = k <k>^(-dim-1) with ``dim`` given by ``power_dim``."""
    return _radial("decay", {"dim": int(power_dim)}, power_dim + 1.0)


def custom(u: Callable, jacobian: Callable, divergence: Callable, name: str = "custom",
           sup_u: float = math.inf, sup_du: float = math.inf) -> VectorField:
    return VectorField("custom", {"name": name}, u, jacobian, divergence, sup_u, sup_du)


def zero_field() -> VectorField:
    return custom(np.zeros_like, lambda k: np.zeros(k.shape + (k.shape[-1],)),
                  lambda k: np.zeros(k.shape[:-1]), "zero", 0.0, 0.0)


FIELDS = {
    "nakamura": nakamura,
    "sin": nakamura,
    "dilation": dilation,
    "arctan": arctan_field,
    "normalized": normalized,
    "decay": decay,
}


def field_from_config(kind: str, **params) -> VectorField:
    try:
        return FIELDS[kind](**params)
    except KeyError:
        raise ValueError(f"unknown vector field {kind!r}; choose from {sorted(FIELDS)}") from None


# ----------------------------------------------------------------------------
# Operators


def assemble_A(grid: Grid, u: VectorField) -> LinOp:
    """A_u = u(p).q + (i/2)(div u)(p) as a composite operator."""
    kpts = grid.momenta
    comps = u(kpts)
    terms: list[LinOp] = [Multiplier(grid, comps[..., j]) @ Diagonal(grid, grid.x(j))
                          for j in range(grid.dim)]
    terms.append(Multiplier(grid, 0.5j * u.divergence(kpts)))
    out = terms[0]
    for t in terms[1:]:
        out = out + t
    return out


def kinetic_gradient(k: np.ndarray) -> np.ndarray:
    """Gradient of |k|^2."""
    return 2.0 * k


def multiplier_commutator(grid: Grid, u: VectorField,
                          gradient: Callable[[np.ndarray], np.ndarray] = kinetic_gradient) -> Multiplier:
    """[h(p), iA_u] = (u . grad h)(p); the default h is |k|^2."""
    kpts = grid.momenta
    return Multiplier(grid, np.sum(u(kpts) * gradient(kpts), axis=-1))


def generic_commutator(B: LinOp, A: LinOp) -> LinOp:
    return B @ A - A @ B


def hamiltonian_commutator(H: Hamiltonian, u: VectorField) -> LinOp:
    """[H, iA_u]: exact multiplier for the kinetic part plus the grid [V, iA_u]."""
    free = multiplier_commutator(H.grid, u)
    if H.potential is None:
        return free
    V = Diagonal(H.grid, H.potential)
    return free + generic_commutator(V, 1j * assemble_A(H.grid, u))


# ----------------------------------------------------------------------------
# Flow


@dataclass(frozen=True)
class FlowResult:
    point: np.ndarray
    jacobian_det: np.ndarray
    tau: float


def default_step(u: VectorField) -> float:
    return 1e-3 * min(1.0, 1.0 / u.sup_du) if u.sup_du > 0 else 1e-3


def flow(u: VectorField, x, tau: float, step: float | None = None, tol: float = 1e-12) -> FlowResult:
    """Integrate d(phi)/d(tau) = u(phi) with the Liouville equation for det.

    Classical RK4 with step-doubling error control; the step never exceeds
    the default ``1e-3 * min(1, 1/sup|u'|)``.  ``x`` has shape (..., dim);
    a scalar or 1D array is read as points of a one-dimensional field.
    """
    x = np.asarray(x, dtype=float)
    scalar_input = x.ndim == 0
    pts = x[..., None] if (x.ndim <= 1 and not _is_pointlist(x)) else x
    if tau == 0.0:
        return FlowResult(x.copy(), np.ones(pts.shape[:-1]), 0.0)
    dt_max = step or default_step(u)

    def rhs(p):
        return u(p), u.divergence(p)

    def rk4(p, lj, dt):
        k1, l1 = rhs(p)
        k2, l2 = rhs(p + 0.5 * dt * k1)
        k3, l3 = rhs(p + 0.5 * dt * k2)
        k4, l4 = rhs(p + dt * k3)
        return (p + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4),
                lj + dt / 6.0 * (l1 + 2 * l2 + 2 * l3 + l4))

    sign = 1.0 if tau > 0 else -1.0
    remaining = abs(tau)
    n_min = max(1, math.ceil(remaining / dt_max - 1e-9))
    dt = remaining / n_min
    p, logj = pts.copy(), np.zeros(pts.shape[:-1])
    done = 0.0
    while remaining - done > 1e-15 * abs(tau):
        h = min(dt, remaining - done)
        full = rk4(p, logj, sign * h)
        half = rk4(*rk4(p, logj, sign * h / 2), sign * h / 2)
        err = max(np.max(np.abs(full[0] - half[0])), np.max(np.abs(full[1] - half[1])))
        scale = 1.0 + np.max(np.abs(half[0]))
        if err <= tol * scale or h <= 1e-14:
            if not np.all(np.isfinite(half[0])):
                raise FlowError("non-finite flow state", sign * done, p)
            # Richardson: the two half steps are fifth-order accurate together
            p = half[0] + (half[0] - full[0]) / 15.0
            logj = half[1] + (half[1] - full[1]) / 15.0
            done += h
        else:
            dt = h / 2.0
            if dt < 1e-12 * max(1.0, abs(tau)):
                raise FlowError("step underflow", sign * done, p)
    point = p[..., 0] if (x.ndim <= 1 and not _is_pointlist(x)) else p
    if scalar_input:
        point = point.reshape(())
    return FlowResult(point, np.exp(logj), float(tau))


def _is_pointlist(x: np.ndarray) -> bool:
    # 1D arrays are treated as many points of a one-dimensional field
    return x.ndim >= 2


# ----------------------------------------------------------------------------
# Unitary group


class GroupElement(FunctionOp):
    """e^{i tau A_u} by momentum-side transport on a zero-padded grid.

    In momentum space A_u acts as i(u.grad + div(u)/2), so
    e^{i tau A_u} f^(k) = J_{-tau}(k)^{1/2} f^(phi_{-tau}(k)).  The state is
    embedded in a box ``pad`` times larger (finer momentum mesh) before the
    spline interpolation, then cropped back.
    """

    kind = "group"

    def __init__(self, grid: Grid, u: VectorField, tau: float, pad: int = 8,
                 band: float = 0.75, order: int = 3):
        self.u, self.tau, self.pad, self.band, self.order = u, float(tau), int(pad), band, order
        self.fine = Grid(grid.dim, grid.n * self.pad, grid.half_width * self.pad, grid.offset)
        self._maps: dict[float, tuple] = {}
        super().__init__(grid, lambda f: self._transport(f, self.tau),
                         lambda f: self._transport(f, -self.tau), f"exp(i{tau}A)")

    def adjoint(self):
        return GroupElement(self.grid, self.u, -self.tau, self.pad, self.band, self.order)

    def _map(self, t: float):
        if t not in self._maps:
            fine = self.fine
            axis = np.fft.fftshift(fine.axis_k)
            mesh = np.stack(np.meshgrid(*([axis] * fine.dim), indexing="ij"), axis=-1)
            res = flow(self.u, mesh.reshape(-1, fine.dim), -t)
            img = res.point.reshape(mesh.shape)
            lo, hi = axis[0], axis[-1]
            outside = np.any((img < lo) | (img > hi), axis=-1)
            resolved = np.linalg.norm(mesh, axis=-1) <= self.band * self.grid.k_max
            bad = outside & resolved
            if np.any(bad):
                node = mesh[bad][0]
                raise FlowEscapeError(
                    f"flow at tau={-t} carries resolved momentum node {node.tolist()} "
                    f"outside the window [{lo:.4g}, {hi:.4g}]")
            coords = (img - lo) / fine.dk
            coords = np.moveaxis(coords, -1, 0)
            self._maps[t] = (coords, np.sqrt(res.jacobian_det.reshape(mesh.shape[:-1])))
        return self._maps[t]

    def _transport(self, f: np.ndarray, t: float) -> np.ndarray:
        if t == 0.0:
            return np.array(f, dtype=complex)
        grid, fine = self.grid, self.fine
        coords, sqrtj = self._map(t)
        lo = (self.pad - 1) * grid.n // 2
        sl = tuple(slice(lo, lo + grid.n) for _ in range(grid.dim))
        batch = f.shape[grid.dim:]
        flat = f.reshape(grid.shape + (-1,))
        out = np.empty(flat.shape, dtype=complex)
        for b in range(flat.shape[-1]):
            big = np.zeros(fine.shape, dtype=complex)
            big[sl] = flat[(...,) + (b,)]
            fh = transform(fine, big)
            re = ndimage.map_coordinates(fh.real, coords, order=self.order, mode="grid-constant")
            im = ndimage.map_coordinates(fh.imag, coords, order=self.order, mode="grid-constant")
            g = inverse_transform(fine, sqrtj * (re + 1j * im))
            out[..., b] = g[sl]
        return out.reshape(grid.shape + batch)


def group_element(grid: Grid, u: VectorField, tau: float, pad: int = 8, band: float = 0.75,
                  order: int = 3) -> GroupElement:
    """e^{i tau A_u} realized by transport; identity at tau = 0."""
    return GroupElement(grid, u, tau, pad, band, order)


def group_growth(grid: Grid, u: VectorField, tau_schedule, t: float = 0.0, s: float = 0.0,
                 radius: float | None = None, pad: int = 8) -> SweepRecord:
    """Measured norm of e^{i tau A_u} on H^t_s, restricted to inner-window states.

    The value at each tau is the largest singular value of
    W e^{i tau A_u} W^-1 on the span of inner_window_basis, with W = <p>^t <q>^s.
    No bound is assumed; the table is the result.
    """
    basis = inner_window_basis(grid, radius)
    cols = basis.reshape(grid.shape + (basis.shape[1],)).astype(complex)
    W, Wi = weight_op(grid, t, s), weight_inverse(grid, t, s)
    start = Wi.apply(cols)
    taus = [float(x) for x in tau_schedule]
    values = []
    for tau in taus:
        out = W.apply(group_element(grid, u, tau, pad=pad).apply(start)).reshape(grid.size, -1)
        values.append(float(np.linalg.norm(out, 2) * math.sqrt(grid.cell)))
    return SweepRecord("tau", taus, values, {"field": u.describe(), "t": t, "s": s,
                                             "states": int(basis.shape[1])},
                       value_name="growth_factor")

