"""Weighted resolvent norms along mu -> 0, level-spacing floors and Hölder fits
for the boundary values of the resolvent."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import LinearOperator, gmres

from .lattice import FunctionOp, Hamiltonian, LinOp, Multiplier, opnorm
from .records import INCONCLUSIVE, SlopeFit, SweepRecord, fit_loglog

LAP_CONSISTENT = "LAP-consistent"
DIVERGENT = "divergent"
RTOL = 1e-10
MU_MIN = 1e-14
LOCALIZED = 0.05


class SolveError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class NearEigenvalueError(ValueError):
    def __init__(self, message: str, eigenvalues: list[float]):
        super().__init__(message)
        self.eigenvalues = eigenvalues


@dataclass
class SolveStats:
    solves: int = 0
    iterations: int = 0
    max_residual: float = 0.0


def _solver(H: Hamiltonian, z: complex, stats: SolveStats, rtol: float = RTOL, maxiter: int = 2000):
    """x -> (H - z)^-1 x by GMRES with the preconditioner (|k|^2 - z)^-1."""
    grid = H.grid
    shape, size = grid.shape, grid.size
    shifted = H.op - z
    pre = Multiplier(grid, 1.0 / (grid.k_squared - z))
    A = LinearOperator((size, size), dtype=complex,
                       matvec=lambda v: shifted.apply(v.reshape(shape)).ravel())
    M = LinearOperator((size, size), dtype=complex,
                       matvec=lambda v: pre.apply(v.reshape(shape)).ravel())

    def solve_one(b: np.ndarray) -> np.ndarray:
        b = b.ravel().astype(complex)
        nb = np.linalg.norm(b)
        if nb == 0.0:
            return np.zeros(shape, dtype=complex)
        count = [0]

        def cb(_):
            count[0] += 1

        x, info = gmres(A, b, x0=M.matvec(b), rtol=rtol, atol=0.0, restart=200, maxiter=maxiter,
                        M=M, callback=cb, callback_type="pr_norm")
        res = float(np.linalg.norm(A.matvec(x) - b) / nb)
        stats.solves += 1
        stats.iterations += count[0]
        stats.max_residual = max(stats.max_residual, res)
        if info != 0 or res > 10.0 * rtol:
            raise SolveError(f"GMRES did not reach rtol {rtol} (residual {res:.3e})", res)
        return x.reshape(shape)

    def apply(f):
        if f.shape == shape:
            return solve_one(f)
        cols = f.reshape(size, -1)
        return np.stack([solve_one(cols[:, i]).ravel() for i in range(cols.shape[1])],
                        axis=-1).reshape(f.shape)

    return apply


def resolvent(H: Hamiltonian, z: complex, stats: SolveStats | None = None, rtol: float = RTOL) -> LinOp:
    """(H - z)^-1 as a matrix-free operator; its adjoint solves at conj(z)."""
    stats = SolveStats() if stats is None else stats
    return FunctionOp(H.grid, _solver(H, z, stats, rtol), _solver(H, np.conj(z), stats, rtol),
                      f"R({z})")


def weighted_resolvent_norm(H: Hamiltonian, lam: float, mu: float, s: float,
                            stats: SolveStats | None = None, tol: float = 1e-9) -> float:
    """||<p><q>^-s (H - lam - i mu)^-1 <q>^-s <p>||, the H^-1_s -> H^1_-s norm."""
    if mu < MU_MIN:
        raise ValueError(f"mu must be at least {MU_MIN}")
    if mu <= 0:
        raise ValueError("mu must be positive")
    R = resolvent(H, complex(lam, mu), stats)
    return opnorm(R, -1.0, s, 1.0, -s, method="lanczos", tol=tol)


def _eigen_near(H: Hamiltonian, lam: float, count: int = 21):
    """The ``count`` eigenvalues of H nearest lam with their eigenvectors.

    Without a potential the spectrum is the set of |k|^2 on the momentum
    nodes and the eigenvectors are plane waves, so no matrix is formed.
    """
    if H.potential is None:
        k2 = np.sort(H.grid.k_squared.ravel())
        idx = np.sort(np.argsort(np.abs(k2 - lam), kind="stable")[:count])
        return k2[idx], None
    m = H.dense()
    n = m.shape[0]
    vals = scipy.linalg.eigvalsh(m)
    idx = np.argsort(np.abs(vals - lam))[:min(count, n)]
    lo, hi = int(idx.min()), int(idx.max())
    sub_vals, sub_vecs = scipy.linalg.eigh(m, subset_by_index=[lo, hi])
    return sub_vals, sub_vecs


def level_spacing(H: Hamiltonian, lam: float, count: int = 21) -> float:
    """Mean spacing of the ``count`` eigenvalues nearest lam.

    The mean is used instead of the median because free periodic spectra
    are doubly degenerate, which makes the median spacing vanish.
    """
    vals, _ = _eigen_near(H, lam, count)
    return float((vals.max() - vals.min()) / (len(vals) - 1))


def localized_eigenvalues(H: Hamiltonian, lam: float, width: float, threshold: float = LOCALIZED):
    vals, vecs = _eigen_near(H, lam)
    if vecs is None:
        return []
    scores = H.localization_scores(vecs)
    near = (np.abs(vals - lam) <= width) & (scores < threshold)
    return [float(v) for v in vals[near]]


@dataclass
class LapVerdict:
    verdict: str
    record: SweepRecord
    floor: float
    spacing: float
    fit: SlopeFit | None
    plateau: float
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "floor": self.floor, "spacing": self.spacing,
                "fit": None if self.fit is None else self.fit.to_dict(), "plateau": self.plateau,
                "record": self.record.to_dict(), "notes": self.notes}


def mu_sweep(H: Hamiltonian, lam: float, s: float = 1.0, mu_schedule=None, mu0: float = 1.0,
             bounded_slope: float = -0.3, divergent_slope: float = -0.4,
             plateau_tol: float = 0.05) -> LapVerdict:
    """Tabulate N_s(lam, mu) down to the floor 4 * level spacing and classify.

    LAP-consistent needs the log-log slope over the last two octaves above
    ``bounded_slope`` and shrinking increments over the last three octaves
    (Cauchy behaviour).  A slope below ``divergent_slope`` over the last
    decade is divergent; anything else is inconclusive.
    ``plateau`` is the relative change across the last octave.
    """
    spacing = level_spacing(H, lam)
    floor = 4.0 * spacing
    bad = localized_eigenvalues(H, lam, 2.0 * spacing)
    if bad:
        raise NearEigenvalueError(f"lambda = {lam} lies within 2 level spacings of an eigenvalue", bad)
    if mu_schedule is None:
        mu_schedule = []
        mu = mu0
        while mu >= floor:
            mu_schedule.append(mu)
            mu /= 2.0
    mus = sorted((float(m) for m in mu_schedule if m >= floor), reverse=True)
    notes = [] if len(mus) == len(list(mu_schedule)) else [f"points below the floor {floor:.4g} dropped"]
    values, residuals, iters = [], [], []
    for mu in mus:
        stats = SolveStats()
        values.append(weighted_resolvent_norm(H, lam, mu, s, stats))
        residuals.append(stats.max_residual)
        iters.append(stats.iterations / max(stats.solves, 1))
    rec = SweepRecord("mu", mus, values, {"lambda": lam, "s": s, "floor": floor, "spacing": spacing},
                      {"residual": residuals, "solver_iters": iters}, value_name="norm")
    if len(mus) < 3:
        return LapVerdict(INCONCLUSIVE, rec, floor, spacing, None, math.nan,
                          notes + ["fewer than 3 points above the floor"])
    ax = np.asarray(mus)
    keep = ax <= ax.min() * 10.0
    fit = fit_loglog(ax[keep], np.asarray(values)[keep])
    local = fit_loglog(ax[-3:], np.asarray(values)[-3:]).slope
    plateau = abs(values[-1] - values[-2]) / values[-2]
    steps = np.abs(np.diff(values))[-3:]
    contracting = bool(np.all(steps[1:] < steps[:-1]))
    if local > bounded_slope and contracting:
        verdict = LAP_CONSISTENT
    elif fit.slope < divergent_slope:
        verdict = DIVERGENT
    else:
        verdict = INCONCLUSIVE
    if plateau > plateau_tol:
        notes.append(f"last octave changes by {plateau:.3g} (> {plateau_tol})")
    return LapVerdict(verdict, rec, floor, spacing, fit, plateau, notes)


@dataclass
class HolderFit:
    theta: float
    ci_low: float
    ci_high: float
    pairs: int
    verdict: str
    record: SweepRecord | None = None

    def to_dict(self) -> dict:
        return {"theta": self.theta, "ci_low": self.ci_low, "ci_high": self.ci_high,
                "pairs": self.pairs, "verdict": self.verdict,
                "record": None if self.record is None else self.record.to_dict()}


def holder_exponent(H: Hamiltonian, lam_grid, s: float, mu_star: float, anchor: float | None = None,
                    tol: float = 1e-9) -> HolderFit:
    """Fit ||W (R(lam + i mu*) - R(lam' + i mu*)) W|| ~ C |lam - lam'|^theta.

    Pairs are formed against ``anchor`` (default: the first point of
    ``lam_grid``).  Fewer than 6 usable pairs is inconclusive.
    """
    lams = [float(x) for x in lam_grid]
    if not 0.5 < s < 1.5:
        raise ValueError("s must lie in (1/2, 3/2)")
    anchor = lams[0] if anchor is None else float(anchor)
    others = sorted(x for x in lams if x != anchor)
    if len(others) < 6:
        return HolderFit(math.nan, math.nan, math.nan, len(others), INCONCLUSIVE)
    R0 = resolvent(H, complex(anchor, mu_star))
    gaps, diffs = [], []
    for lam in others:
        D = resolvent(H, complex(lam, mu_star)) - R0
        diffs.append(opnorm(D, -1.0, s, 1.0, -s, method="lanczos", tol=tol))
        gaps.append(abs(lam - anchor))
    order = np.argsort(gaps)
    gaps = [gaps[i] for i in order]
    diffs = [diffs[i] for i in order]
    fit = fit_loglog(gaps, diffs)
    rec = SweepRecord("gap", gaps, diffs, {"anchor": anchor, "mu_star": mu_star, "s": s},
                      value_name="difference")
    return HolderFit(fit.slope, fit.ci_low, fit.ci_high, fit.points, "fitted", rec)
