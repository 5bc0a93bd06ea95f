"""Mourre windows: the multiplier infimum of 2k.u(k) on an energy shell, spectral
projections of a discretized H and the compressed commutator E[H, iA]E."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .conjugate import VectorField, hamiltonian_commutator
from .lattice import DENSE_CAP, Dense, Grid, Hamiltonian, LinOp, make_grid


class EmptyShellError(ValueError):
    pass


def nakamura_window(a: float) -> tuple[float, float]:
    """Energy window (0, (pi/a)^2) on which 2k sin(ak) stays positive."""
    if a <= 0:
        raise ValueError("a must be positive")
    return (0.0, (math.pi / a) ** 2)


def _shell_samples(grid: Grid, lo: float, hi: float, refine: int) -> np.ndarray:
    """Momentum points (..., dim) in the shell lo <= |k|^2 <= hi."""
    rlo, rhi = math.sqrt(max(lo, 0.0)), math.sqrt(hi)
    step = grid.dk / refine
    if grid.dim == 1:
        pos = np.arange(math.ceil(rlo / step), math.floor(rhi / step) + 1) * step
        pos = np.union1d(pos, [rlo, rhi])
        return np.concatenate([-pos[::-1], pos])[:, None]
    axis = np.arange(-math.floor(rhi / step), math.floor(rhi / step) + 1) * step
    mesh = np.stack(np.meshgrid(*([axis] * grid.dim), indexing="ij"), axis=-1).reshape(-1, grid.dim)
    r2 = np.sum(mesh**2, axis=-1)
    pts = mesh[(r2 >= lo) & (r2 <= hi)]
    # exact shell endpoints along the axes and the diagonals
    dirs = np.vstack([np.eye(grid.dim), np.ones((1, grid.dim)) / math.sqrt(grid.dim)])
    ends = np.vstack([dirs * rlo, dirs * rhi, -dirs * rlo, -dirs * rhi])
    return np.vstack([pts, ends])


def window_inf(u: VectorField, interval, grid: Grid | None = None, refine: int | None = None) -> float:
    """inf of 2k.u(k) over |k|^2 in ``interval``, scanned on the momentum nodes
    refined ``refine`` times (64 in one dimension) plus the shell endpoints."""
    grid = make_grid() if grid is None else grid
    lo, hi = float(interval[0]), float(interval[1])
    if lo > hi:
        raise ValueError("interval endpoints out of order")
    if hi > grid.k_max**2 * (1.0 + 1e-12):
        raise ValueError(f"interval exceeds the resolved range [0, {grid.k_max**2:.6g}]")
    refine = (64 if grid.dim == 1 else 8) if refine is None else refine
    pts = _shell_samples(grid, lo, hi, refine)
    if pts.size == 0:
        raise EmptyShellError(f"no momenta with |k|^2 in [{lo}, {hi}]")
    return float(np.min(np.sum(2.0 * pts * u(pts), axis=-1)))


def node_inf(u: VectorField, interval, grid: Grid) -> float:
    """Same infimum restricted to the grid's own momentum nodes."""
    lo, hi = interval
    k2 = grid.k_squared
    sel = (k2 >= lo) & (k2 <= hi)
    if not np.any(sel):
        raise EmptyShellError(f"no momentum node with |k|^2 in [{lo}, {hi}]")
    pts = grid.momenta[sel]
    return float(np.min(np.sum(2.0 * pts * u(pts), axis=-1)))


def spectral_projection(H: Hamiltonian, interval) -> LinOp:
    """E(I) from the full eigendecomposition of H."""
    vals, vecs = H.eigensystem()
    sel = (vals >= interval[0]) & (vals <= interval[1])
    V = vecs[:, sel]
    return Dense(H.grid, V @ V.conj().T)


@dataclass
class MourreCertificate:
    interval: tuple[float, float]
    c0_multiplier: float
    compression_spectrum: list[float]
    defect_count: int
    eigenvalues_of_H_in_I: list[float]
    localization: list[float] = field(default_factory=list)
    drift: float = 0.0

    @property
    def bottom(self) -> float:
        return self.compression_spectrum[0] if self.compression_spectrum else math.nan

    def to_dict(self) -> dict:
        return {"interval": list(self.interval), "c0_multiplier": self.c0_multiplier,
                "compression_spectrum": self.compression_spectrum,
                "defect_count": self.defect_count,
                "eigenvalues_of_H_in_I": self.eigenvalues_of_H_in_I,
                "localization": self.localization, "drift": self.drift}


def mourre_constant(H: Hamiltonian, u: VectorField, interval, tol: float = 1e-8,
                    cap: int = DENSE_CAP) -> MourreCertificate:
    """Compress [H, iA_u] to ran E(I) and compare with the multiplier bound.

    defect_count counts compression eigenvalues below c0_multiplier - tol.
    """
    grid = H.grid
    lo, hi = float(interval[0]), float(interval[1])
    vals, vecs = H.eigensystem(cap)
    sel = (vals >= lo) & (vals <= hi)
    c0 = node_inf(u, (lo, hi), grid)
    if not np.any(sel):
        return MourreCertificate((lo, hi), c0, [], 0, [], [], 0.0)
    V = vecs[:, sel]
    C = hamiltonian_commutator(H, u)
    image = C.apply(V.reshape(grid.shape + (V.shape[1],)).astype(complex)).reshape(grid.size, -1)
    M = V.conj().T @ image
    drift = float(np.max(np.abs(M - M.conj().T))) if M.size else 0.0
    spec = np.linalg.eigvalsh(0.5 * (M + M.conj().T))
    defects = int(np.sum(spec < c0 - tol))
    loc = H.localization_scores(V)
    return MourreCertificate((lo, hi), c0, [float(x) for x in spec], defects,
                             [float(x) for x in vals[sel]], [float(x) for x in loc], drift)
