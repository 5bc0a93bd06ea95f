"""Wave-operator traces e^{itK} e^{-itH} psi and Cook's criterion on a box."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .lattice import Dense, Grid, Hamiltonian, LinOp, Multiplier, identity, transform
from .records import INCONCLUSIVE, SlopeFit, SweepRecord, fit_loglog, tail

CONVERGENT = "convergent"
DIVERGENT = "divergent"
LOCALIZATION_THRESHOLD = 0.05


def propagate(H: Hamiltonian, psi: np.ndarray, t: float) -> np.ndarray:
    """e^{-itH} psi by spectral calculus (a plain multiplier when V = 0)."""
    grid = H.grid
    psi = np.asarray(psi, dtype=complex)
    if t == 0:
        return psi.copy()
    if H.potential is None:
        return Multiplier(grid, np.exp(-1j * t * grid.k_squared)).apply(psi)
    vals, vecs = H.eigensystem()
    coeff = vecs.conj().T @ psi.ravel()
    return (vecs @ (np.exp(-1j * t * vals) * coeff)).reshape(psi.shape)


def continuity_projector(H: Hamiltonian, threshold: float = LOCALIZATION_THRESHOLD) -> LinOp:
    """Projection onto eigenvectors whose localization score exceeds ``threshold``."""
    if threshold <= 0 or H.potential is None:
        return identity(H.grid)
    vals, vecs = H.eigensystem()
    keep = H.localization_scores(vecs) > threshold
    V = vecs[:, keep]
    return Dense(H.grid, V @ V.conj().T)


def wave_packet(grid: Grid, centre: float = 0.0, momentum: float = 1.5, width: float = 0.15) -> np.ndarray:
    """Normalized Gaussian packet with momentum spread ``width``."""
    sx = 1.0 / (2.0 * width)
    x = grid.x(0)
    psi = np.exp(-((x - centre) ** 2) / (4.0 * sx**2) + 1j * momentum * x).astype(complex)
    return psi / grid.norm(psi)


def box_time(grid: Grid, psi: np.ndarray, centre: float = 0.0, level: float = 1e-3) -> tuple[float, dict]:
    """Transit horizon L/(2 v_min), further capped before the fastest part wraps.

    v = 2|k| over momenta where |psi^| exceeds ``level`` times its maximum.
    """
    amp = np.abs(transform(grid, psi)).ravel()
    k = np.abs(np.sort(grid.axis_k) if grid.dim == 1 else np.sqrt(grid.k_squared).ravel())
    support = k[amp >= level * amp.max()]
    v_min, v_max = 2.0 * float(support.min()), 2.0 * float(support.max())
    horizon = grid.half_width / (2.0 * v_min) if v_min > 0 else math.inf
    density = np.abs(psi.ravel()) ** 2
    spread = math.sqrt(float(np.sum(density * (grid.radius.ravel() - abs(centre)) ** 2) / np.sum(density)))
    wrap = (grid.half_width - abs(centre) - 4.0 * spread) / v_max
    info = {"v_min": v_min, "v_max": v_max, "transit": horizon, "wrap": wrap}
    return min(horizon, wrap), info


@dataclass
class WaveOpTrace:
    times: list[float]
    omega_states: np.ndarray
    cauchy_increments: list[float]
    cook_integrand: list[float]
    norm_drift: list[float]
    verdict: str = INCONCLUSIVE
    cook_fit: SlopeFit | None = None
    cauchy_fit: SlopeFit | None = None
    notes: list[str] = field(default_factory=list)

    def record(self) -> SweepRecord:
        inc = [math.nan] + list(self.cauchy_increments)
        return SweepRecord("t", self.times, self.cook_integrand, {"verdict": self.verdict},
                           {"cauchy_increment": inc, "norm_drift": self.norm_drift},
                           value_name="cook_integrand")

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "notes": self.notes,
                "cook_fit": None if self.cook_fit is None else self.cook_fit.to_dict(),
                "cauchy_fit": None if self.cauchy_fit is None else self.cauchy_fit.to_dict(),
                "record": self.record().to_dict()}


def wave_operator_trace(K: Hamiltonian, H: Hamiltonian, psi: np.ndarray, t_schedule,
                        horizon: float | None = None, keep_states: bool = False) -> WaveOpTrace:
    """Tabulate Omega(t) psi = e^{itK} e^{-itH} psi along an increasing schedule.

    Convergent when both the Cook integrand ||S e^{-itH} psi|| and the Cauchy
    increments decay with a fitted slope below -1 over the last decade of |t|.
    A schedule running to negative times probes the t -> -infinity limit.
    Times with |t| past ``horizon`` are dropped and the cap is recorded.
    """
    grid = H.grid
    S = np.zeros(grid.shape) if K.potential is None else K.potential.copy()
    if H.potential is not None:
        S = S - H.potential
    times = [float(t) for t in t_schedule]
    notes: list[str] = []
    if horizon is not None and max(abs(t) for t in times) > horizon:
        times = [t for t in times if abs(t) <= horizon]
        notes.append(f"schedule capped at the box horizon {horizon:.6g}")
    psi = np.asarray(psi, dtype=complex)
    n0 = grid.norm(psi)
    states, cook, drift, inc = [], [], [], []
    prev = None
    for t in times:
        free = propagate(H, psi, t)
        cook.append(grid.norm(S * free))
        omega = propagate(K, free, -t)
        drift.append(abs(grid.norm(omega) - n0))
        if prev is not None:
            inc.append(grid.norm(omega - prev))
        prev = omega
        if keep_states:
            states.append(omega)
    trace = WaveOpTrace(times, np.array(states), inc, cook, drift, notes=notes)
    if len(times) < 4:
        trace.notes.append("fewer than 4 times inside the horizon")
        return trace
    if max(cook) == 0.0:
        trace.verdict = CONVERGENT
        return trace
    span = [abs(t) for t in times[1:]]
    ax, val = tail(span, cook[1:], 1.0, "high")
    trace.cook_fit = fit_loglog(ax, val)
    ax, val = tail(span, inc, 1.0, "high")
    trace.cauchy_fit = fit_loglog(ax, val)
    ok = trace.cook_fit.ci_high < -1.0 and trace.cauchy_fit.ci_high < -1.0
    bad = trace.cook_fit.ci_low >= -1.0
    trace.verdict = CONVERGENT if ok else (DIVERGENT if bad else INCONCLUSIVE)
    return trace


def reverse_trace(K: Hamiltonian, H: Hamiltonian, psi: np.ndarray, t_schedule,
                  horizon: float | None = None, threshold: float = LOCALIZATION_THRESHOLD) -> WaveOpTrace:
    """Trace of e^{itH} e^{-itK} E_K^c psi, the roles of H and K swapped.

    Convergence here is the finite-box surrogate for completeness: states in
    the continuity subspace of K also scatter to free motion under H.
    """
    start = continuity_projector(K, threshold).apply(np.asarray(psi, dtype=complex))
    return wave_operator_trace(H, K, start, t_schedule, horizon=horizon)


def intertwining_defect(K: Hamiltonian, H: Hamiltonian, psi: np.ndarray, T: float, tau: float) -> float:
    """||(e^{-i tau K} Omega(T) - Omega(T) e^{-i tau H}) psi||."""
    grid = H.grid

    def omega(f):
        return propagate(K, propagate(H, f, T), -T)

    left = propagate(K, omega(psi), tau)
    right = omega(propagate(H, psi, tau))
    return grid.norm(left - right)
