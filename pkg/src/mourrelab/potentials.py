"""Potential catalog and the scalar diagnostics used in decay/regularity hypotheses."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import integrate, interpolate

from .lattice import (Diagonal, Grid, GridFunction, LinOp, Multiplier, b1_norm, bracket,
                      inverse_transform, ascending_momenta)
from .records import (INCONCLUSIVE, SATISFIED, VIOLATED, SlopeFit, SweepRecord, decay_verdict)

OUTSIDE_HYPOTHESIS = "outside the covered hypotheses: dimension below 3"


def smooth_bump(t):
    """exp(1 - 1/(1 - t^2)) on |t| < 1, zero elsewhere; equals 1 at t = 0."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - t[inside] ** 2))
    return out


def smooth_bump_derivative(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0
    ti = t[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - ti**2)) * (-2.0 * ti / (1.0 - ti**2) ** 2)
    return out


def cutoff_step(t):
    """Smooth step: 0 for t <= 0, 1 for t >= 1, C-infinity in between."""
    t = np.asarray(t, dtype=float)

    def psi(s):
        out = np.zeros_like(s)
        pos = s > 0
        out[pos] = np.exp(-1.0 / s[pos])
        return out

    a, b = psi(t), psi(1.0 - t)
    return a / (a + b)


def kappa(r, inner: float = 1.0, outer: float = 1.5):
    """Cutoff equal to 1 on |r| <= inner and 0 on |r| >= outer."""
    return 1.0 - cutoff_step((np.abs(r) - inner) / (outer - inner))


@lru_cache(maxsize=1)
def _bump_primitive():
    # B(t) = int_{-1}^t smooth_bump, tabulated for fast exact-enough lookups
    t = np.linspace(-1.0, 1.0, 40001)
    vals = integrate.cumulative_simpson(smooth_bump(t), x=t, initial=0.0)
    return interpolate.CubicSpline(t, vals), float(vals[-1])


def bump_primitive(t):
    spline, total = _bump_primitive()
    t = np.asarray(t, dtype=float)
    return np.where(t <= -1.0, 0.0, np.where(t >= 1.0, total, spline(np.clip(t, -1.0, 1.0))))


def bump_integral() -> float:
    return _bump_primitive()[1]


def example_profile(t):
    """chi(t) = (t + t^2/2) * bump(t): supported in [-1, 1], chi'(0) = chi''(0) = 1."""
    t = np.asarray(t, dtype=float)
    return (t + 0.5 * t**2) * smooth_bump(t)


def example_profile_derivative(t):
    t = np.asarray(t, dtype=float)
    return (1.0 + t) * smooth_bump(t) + (t + 0.5 * t**2) * smooth_bump_derivative(t)


def comb_weight(n):
    """lambda_n = p when |n| = 2^p (p >= 1), else 0."""
    n = np.abs(np.asarray(n, dtype=np.int64))
    out = np.zeros(n.shape)
    pos = (n > 1) & ((n & (n - 1)) == 0)
    out[pos] = np.log2(n[pos])
    return out


@dataclass(frozen=True, eq=False)
class PotentialSpec:
    """A named potential family with its parameters."""

    family: str
    params: dict = field(default_factory=dict)
    func: Callable | None = field(default=None, repr=False)

    def describe(self) -> dict:
        return {"family": self.family, **self.params}

    def evaluate(self, points) -> np.ndarray:
        """Closed-form values at points of shape (..., dim)."""
        pts = np.asarray(points, dtype=float)
        if self.family == "custom":
            return np.asarray(self.func(pts), dtype=float)
        if self.family == "fourier_comb":
            raise ValueError("fourier_comb has no pointwise closed form; use realize()")
        return self.radial(np.linalg.norm(pts, axis=-1))

    def radial(self, r) -> np.ndarray:
        r = np.abs(np.asarray(r, dtype=float))
        p = self.params
        if self.family == "oscillating":
            out = np.zeros_like(r)
            live = r > p["cutoff_inner"]
            rl = r[live]
            out[live] = ((1.0 - kappa(rl, p["cutoff_inner"], p["cutoff_outer"]))
                         * np.sin(p["k"] * rl ** p["alpha"]) / rl ** p["beta"])
            return out
        if self.family == "exponential":
            raw = np.exp(0.75 * r) * np.sin(np.exp(r))
            if p["cutoff_outer"] <= 0:
                return raw
            return (1.0 - kappa(r, p["cutoff_inner"], p["cutoff_outer"])) * raw
        if self.family == "bump_sum":
            dim = p["dim"]
            out = np.zeros_like(r)
            for n in range(2, p["n_max"] + 1):
                width = n ** (1.5 * dim)
                near = np.abs(r - n) < 1.0 / width
                if np.any(near):
                    out[near] += n ** ((3 * dim - 1) / 2) * example_profile_derivative(width * (r[near] - n))
            return out
        raise ValueError(f"family {self.family!r} is not radial")


def oscillating(alpha: float, beta: float, k: float = 1.0, cutoff_inner: float = 1.0,
                cutoff_outer: float = 1.5) -> PotentialSpec:
    """(1 - kappa(|x|)) sin(k|x|^alpha) / |x|^beta."""
    return PotentialSpec("oscillating", {"alpha": float(alpha), "beta": float(beta), "k": float(k),
                                         "cutoff_inner": float(cutoff_inner),
                                         "cutoff_outer": float(cutoff_outer)})


def exponential(cutoff_inner: float = 1.0, cutoff_outer: float = 1.5) -> PotentialSpec:
    """(1 - kappa(|x|)) exp(3|x|/4) sin(exp|x|); ``cutoff_outer <= 0`` drops the cutoff."""
    return PotentialSpec("exponential", {"cutoff_inner": float(cutoff_inner),
                                         "cutoff_outer": float(cutoff_outer)})


def fourier_comb(eps: float = 0.25) -> PotentialSpec:
    """V with (qV)^ = sum_n lambda_n chi(xi - n), lambda_n = p at |n| = 2^p."""
    return PotentialSpec("fourier_comb", {"eps": float(eps), "division": "pointwise on offset grid"})


def bump_sum(dim: int = 3, n_max: int = 8) -> PotentialSpec:
    """sum_{n>=2} n^((3 dim - 1)/2) chi'(n^(3 dim/2)(|x| - n))."""
    return PotentialSpec("bump_sum", {"dim": int(dim), "n_max": int(n_max)})


def custom(func: Callable, name: str = "custom") -> PotentialSpec:
    return PotentialSpec("custom", {"name": name}, func)


def bracket_power(power: float) -> PotentialSpec:
    """<x>^-power."""
    return custom(lambda x: bracket(np.linalg.norm(x, axis=-1)) ** (-power), f"bracket^-{power}")


FAMILIES = {"oscillating": oscillating, "exponential": exponential, "fourier_comb": fourier_comb,
            "bump_sum": bump_sum, "bracket": bracket_power}


def potential_from_config(family: str, **params) -> PotentialSpec:
    if family in ("zero", "none"):
        return custom(lambda x: np.zeros(np.shape(x)[:-1]), "zero")
    try:
        return FAMILIES[family](**params)
    except KeyError:
        raise ValueError(f"unknown potential family {family!r}; choose from {sorted(FAMILIES)}") from None


def comb_symbol(xi) -> np.ndarray:
    """sum_n lambda_n chi(xi - n) with chi the standard bump."""
    xi = np.asarray(xi, dtype=float)
    out = np.zeros_like(xi)
    top = int(np.max(np.abs(xi), initial=0.0)) + 2
    p = 1
    while 2**p <= top:
        n = 2**p
        out += p * (smooth_bump(xi - n) + smooth_bump(xi + n))
        p += 1
    return out


def comb_potential_hat(zeta) -> np.ndarray:
    """Momentum profile sum_n lambda_n int_0^zeta chi(s - n) ds of the comb V.

    Up to the constant factor -i (2 pi)^-1/2 this is the transform of V with
    the principal-value convention (no delta at 0).
    """
    zeta = np.asarray(zeta, dtype=float)
    out = np.zeros_like(zeta)
    top = int(np.max(np.abs(zeta), initial=0.0)) + 2
    p = 1
    while 2**p <= top:
        for n in (2**p, -(2**p)):
            out += p * (bump_primitive(zeta - n) - bump_primitive(-n))
        p += 1
    return out


def realize(spec: PotentialSpec, grid: Grid, band: float | None = None) -> GridFunction:
    """Sample a potential on the grid as a real GridFunction.

    With ``band`` the samples are projected onto |k| <= band * k_max, which
    removes the aliased part of oscillations the grid cannot resolve.
    """
    out = _realize(spec, grid)
    if band is None:
        return out
    keep = np.sqrt(grid.k_squared) <= band * grid.k_max
    axes = tuple(range(grid.dim))
    values = np.fft.ifftn(np.fft.fftn(out.values, axes=axes) * keep, axes=axes).real
    return GridFunction(grid, values, out.flags + (f"band-limited to {band} k_max",))


def _realize(spec: PotentialSpec, grid: Grid) -> GridFunction:
    flags: list[str] = []
    if spec.family == "fourier_comb":
        if grid.dim != 1:
            raise ValueError("fourier_comb is implemented in one dimension")
        x = grid.axis_x
        zero = np.flatnonzero(x == 0.0)
        if zero.size:
            raise ValueError(f"node {int(zero[0])} sits at x = 0; use an offset grid")
        k = ascending_momenta(grid)
        sym = np.where(np.abs(k) < grid.k_max - 1.0, comb_symbol(k), 0.0)
        if np.max(np.abs(k)) > 2.0:
            flags.append(f"comb truncated at |xi| < {grid.k_max - 1.0:.6g}")
        qv = inverse_transform(grid, sym)
        if np.max(np.abs(qv.imag)) > 1e-14 * max(1.0, np.max(np.abs(qv.real))):
            raise ValueError("comb inverse transform is not real")
        return GridFunction(grid, qv.real / x, tuple(flags))
    if spec.family == "bump_sum" and spec.params["dim"] < 3:
        warnings.warn(OUTSIDE_HYPOTHESIS, stacklevel=2)
        flags.append(OUTSIDE_HYPOTHESIS)
    values = spec.evaluate(grid.positions)
    if not np.all(np.isfinite(values)):
        bad = int(np.flatnonzero(~np.isfinite(values.ravel()))[0])
        raise ValueError(f"potential is singular at node {bad}")
    return GridFunction(grid, values.astype(float), tuple(flags))


def potential_op(spec_or_values, grid: Grid | None = None) -> Diagonal:
    if isinstance(spec_or_values, PotentialSpec):
        return Diagonal(grid, realize(spec_or_values, grid).values)
    if isinstance(spec_or_values, GridFunction):
        return Diagonal(spec_or_values.grid, spec_or_values.values)
    return Diagonal(grid, spec_or_values)


# ----------------------------------------------------------------------------
# Diagnostics


@dataclass
class SeminormReport:
    kind: str
    values: SweepRecord
    verdict: str
    truncation_radius: float | None = None
    fit: SlopeFit | None = None
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "verdict": self.verdict, "truncation_radius": self.truncation_radius,
                "values": self.values.to_dict(),
                "fit": None if self.fit is None else self.fit.to_dict(), "notes": self.notes}


def _local_integrals_1d(values: np.ndarray, x: np.ndarray, p: float, centres: np.ndarray) -> np.ndarray:
    f = np.abs(values) ** p
    h = x[1] - x[0]
    cum = np.concatenate([[0.0], np.cumsum(0.5 * h * (f[1:] + f[:-1]))])
    return np.interp(centres + 1.0, x, cum) - np.interp(centres - 1.0, x, cum)


def local_lp_seminorm(V: GridFunction, p: float, x) -> float:
    """(int_{|y - x| < 1} |V(y)|^p dy)^(1/p); NaN when the window leaves the grid."""
    if p < 1:
        raise ValueError("p must be at least 1")
    grid = V.grid
    x = np.atleast_1d(np.asarray(x, dtype=float))
    lo, hi = grid.axis_x[0], grid.axis_x[-1]
    if np.any(x - 1.0 < lo) or np.any(x + 1.0 > hi):
        warnings.warn("local window exceeds the grid; value inconclusive", stacklevel=2)
        return math.nan
    if grid.dim == 1:
        return float(_local_integrals_1d(V.values, grid.axis_x, p, x)[0] ** (1.0 / p))
    dist = np.linalg.norm(grid.positions - x, axis=-1)
    return float((grid.cell * np.sum(np.abs(V.values[dist < 1.0]) ** p)) ** (1.0 / p))


def _local_profile(V: np.ndarray, grid: Grid, p: float, centres_mask: np.ndarray) -> np.ndarray:
    if grid.dim == 1:
        xs = grid.axis_x[centres_mask]
        return _local_integrals_1d(V, grid.axis_x, p, xs) ** (1.0 / p)
    pts = grid.positions.reshape(-1, grid.dim)
    flat = np.abs(V.ravel()) ** p
    out = []
    for c in pts[centres_mask.ravel()]:
        d = np.linalg.norm(pts - c, axis=-1)
        out.append((grid.cell * flat[d < 1.0].sum()) ** (1.0 / p))
    return np.array(out)


def local_lp_sup(V: GridFunction, p: float) -> float:
    """Supremum of the local L^p seminorm over nodes of the inner window."""
    grid = V.grid
    mask = grid.radius <= grid.half_width / 2.0
    return float(np.max(_local_profile(V.values, grid, p, mask)))


def _shifted_difference(V, a: float, grid: Grid | None) -> tuple[np.ndarray, Grid]:
    if isinstance(V, PotentialSpec):
        pts = grid.positions.copy()
        pts[..., 0] += a
        if V.family == "fourier_comb":
            raise ValueError("pass a realized GridFunction for fourier_comb")
        return V.evaluate(pts) - V.evaluate(grid.positions), grid
    grid = V.grid
    steps = a / grid.h
    if abs(steps - round(steps)) < 1e-9:
        # whole cells: an exact roll, no sinc leakage
        shifted = np.roll(V.values, -int(round(steps)), axis=0)
    else:
        shifted = (Multiplier(grid, np.exp(1j * a * grid.k(0))).apply(V.values.astype(complex))).real
    return shifted - V.values, grid


def phi_a_profile(V, a: float, p: float, r_schedule, grid: Grid | None = None) -> SeminormReport:
    """phi_a(r) = sup_{|x| > r} |x| [V(. + a) - V]_p^x over the inner window.

    ``V`` is a PotentialSpec (with ``grid``) or a GridFunction.  Satisfied when
    the log-log slope over the last decade is below 0.
    """
    if a == 0:
        raise ValueError("a must be nonzero")
    diff, grid = _shifted_difference(V, a, grid)
    limit = grid.half_width / 2.0 - 1.0
    mask = grid.radius <= limit
    local = _local_profile(diff, grid, p, mask) * grid.radius[mask]
    radii = grid.radius[mask]
    rs, vals, notes = [], [], []
    for r in sorted(float(x) for x in r_schedule):
        if r >= limit:
            notes.append(f"r={r} beyond inner window; truncated")
            continue
        sel = radii > r
        rs.append(r)
        vals.append(float(np.max(local[sel])) if np.any(sel) else 0.0)
    rec = SweepRecord("r", rs, vals, {"a": a, "p": p}, value_name="phi_a")
    verdict, fit = decay_verdict(rs, vals, 0.0) if rs else (INCONCLUSIVE, None)
    return SeminormReport(f"phi_a(a={a}, p={p})", rec, verdict, limit, fit, notes)


def short_range_integral(S: LinOp, r_schedule, max_iters: int | None = None) -> SeminormReport:
    """r -> ||xi(q/r) S||_{B(H^1, H^-1)} with the slope threshold -1."""
    from .commutator import far_cutoff

    grid = S.grid
    limit = grid.half_width / 4.0
    rs, vals, notes = [], [], []
    for r in sorted(float(x) for x in r_schedule):
        if r > limit:
            notes.append(f"r={r} beyond inner window; truncated")
            continue
        rs.append(r)
        vals.append(b1_norm(Diagonal(grid, far_cutoff(grid, r)) @ S, method="lanczos",
                            max_iters=max_iters, tol=1e-9))
    rec = SweepRecord("r", rs, vals, {}, value_name="norm")
    verdict, fit = decay_verdict(rs, vals, -1.0) if rs else (INCONCLUSIVE, None)
    return SeminormReport("short_range", rec, verdict, limit, fit, notes)


def h_minus_one_norm(f: GridFunction, mu: float) -> float:
    """||<p>^-1 (<q>^(1+mu) f)||."""
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    grid = f.grid
    g = bracket(grid.radius) ** (1.0 + mu) * f.values
    return grid.norm(Multiplier(grid, 1.0 / bracket(np.sqrt(grid.k_squared))).apply(g.astype(complex)))


def h_minus_one_membership(spec: PotentialSpec, grid: Grid, mu: float, tol: float = 0.05) -> SeminormReport:
    """Membership proxy: the norm must be stable under N -> 2N and L -> 2L."""
    grids = [grid, grid.refined(), Grid(grid.dim, 2 * grid.n, 2 * grid.half_width, grid.offset)]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        vals = [h_minus_one_norm(realize(spec, g), mu) for g in grids]
    base = vals[0]
    drift = max(abs(v - base) for v in vals) / base if base > 0 else 0.0
    verdict = SATISFIED if drift <= tol else VIOLATED
    rec = SweepRecord("case", [0, 1, 2], vals,
                      {"cases": ["base", "N->2N", "L->2L"], "mu": mu, "relative_drift": drift},
                      value_name="norm")
    return SeminormReport(f"h_minus_one(mu={mu})", rec, verdict, None, None, [])
