"""Translations and finite differences, the explicit commutator expansions for
the sine-field conjugate operator, and regularity diagnostics built on them."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .conjugate import (FlowEscapeError, VectorField, assemble_A, dilation, generic_commutator,
                        group_element)
from .lattice import (Diagonal, Grid, LinOp, Multiplier, bracket, identity, opnorm,
                      position, translation, window_function)
from .potentials import PotentialSpec, cutoff_step, smooth_bump
from .records import (INCONCLUSIVE, SATISFIED, SlopeFit, SweepRecord, decay_verdict,
                      fit_loglog, slope_verdict, tail)


def _shift_steps(grid: Grid, a: float) -> int | None:
    s = a / grid.h
    r = round(s)
    return int(r) if abs(s - r) < 1e-9 else None


def wrap_mask(grid: Grid, a: float, axis: int = 0) -> np.ndarray:
    """Nodes where a shift by ``a`` along ``axis`` wraps around the torus."""
    shifted = grid.x(axis) + a
    return (shifted < -grid.half_width) | (shifted >= grid.half_width)


def delta(V: LinOp, a: float, j: int = 0) -> LinOp:
    """T_j V T_j^* - V with T_j = exp(i a p_j).

    For a diagonal V and a shift commensurate with the grid this is again
    diagonal: V(x + a e_j) - V(x) on the torus (see ``wrap_mask``).
    """
    grid = V.grid
    steps = _shift_steps(grid, a)
    if isinstance(V, Diagonal) and steps is not None:
        return Diagonal(grid, np.roll(V.values, -steps, axis=j) - V.values)
    if isinstance(V, Multiplier):
        return Multiplier(grid, np.zeros(grid.shape))
    T = translation(grid, a, j)
    return T @ V @ T.adjoint() - V


def second_difference(V: LinOp, a: float, j: int, k: int) -> LinOp:
    """delta_j delta_k V = V(q+ae_j+ae_k) - V(q+ae_j) - V(q+ae_k) + V(q)."""
    return delta(delta(V, a, k), a, j)


def first_commutator_AN(V: LinOp, a: float, j: int = 0) -> LinOp:
    """[2iA_j, V] for A_j built from sin(a p_j), via finite differences.

    Equals (b + q_j) delta_j(V) T_j + T_j^* (b + q_j) delta_j(V), b = a/2,
    whenever V commutes with q_j (multiplication operators).
    """
    grid = V.grid
    b = a / 2.0
    T = translation(grid, a, j)
    D = delta(V, a, j)
    bq = position(grid, j) + b
    return bq @ D @ T + T.adjoint() @ bq @ D


def ia_translation_commutator(grid: Grid, a: float, j: int, k: int) -> LinOp:
    """[iA_j, T_k] = b delta_jk (1 - T_k^2)."""
    if j != k:
        return Diagonal(grid, np.zeros(grid.shape))
    T2 = translation(grid, 2.0 * a, k)
    return (a / 2.0) * (identity(grid) - T2)


def second_commutator_AN(V: LinOp, a: float, j: int = 0, k: int = 0) -> LinOp:
    """[iA_j, [iA_k, V]] assembled from the finite-difference expansion."""
    grid = V.grid
    b = a / 2.0
    Tj, Tk = translation(grid, a, j), translation(grid, a, k)
    qj, qk = position(grid, j), position(grid, k)
    # [iA_k, V] = X T_k + T_k^* X
    X = 0.5 * ((qk + b) @ delta(V, a, k))
    # Leibniz: delta_j(X) = (1/2)[a delta_jk T_j delta_k(V) T_j^* + (b + q_k) delta_j delta_k V]
    dX = 0.5 * ((qk + b) @ second_difference(V, a, j, k))
    if j == k:
        dX = dX + (0.5 * a) * (Tj @ delta(V, a, k) @ Tj.adjoint())
    iAjX = 0.5 * ((qj + b) @ dX @ Tj + Tj.adjoint() @ (qj + b) @ dX)
    C = ia_translation_commutator(grid, a, j, k)
    return iAjX @ Tk + X @ C + C.adjoint() @ X + Tk.adjoint() @ iAjX


def nakamura_component(grid: Grid, a: float, j: int = 0) -> LinOp:
    """A_j = sin(a p_j) q_j + (i a/2) cos(a p_j)."""
    kj = grid.k(j)
    return (Multiplier(grid, np.sin(a * kj)) @ position(grid, j)
            + Multiplier(grid, 0.5j * a * np.cos(a * kj)))


def iterated(V: LinOp, A: LinOp, n: int) -> LinOp:
    """ad^n: [...[[V, iA], iA]..., iA] nested n times."""
    out = V
    for _ in range(n):
        out = generic_commutator(out, 1j * A)
    return out


# ----------------------------------------------------------------------------
# Regularity diagnostics


@dataclass
class RegularityReport:
    class_tested: str
    profile: SweepRecord
    verdict: str
    conjugate_used: dict
    fit: SlopeFit | None = None
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"class_tested": self.class_tested, "verdict": self.verdict,
                "conjugate_used": self.conjugate_used, "profile": self.profile.to_dict(),
                "fit": None if self.fit is None else self.fit.to_dict(), "notes": self.notes}


def far_cutoff(grid: Grid, r: float) -> np.ndarray:
    """xi(x/r): 0 for |x| < r, 1 for |x| > 2r, smooth in between."""
    return cutoff_step(grid.radius / r - 1.0)


def _norm(op: LinOp, norm_space: str, window, max_iters: int) -> float:
    t = 1.0 if norm_space == "B1" else 2.0
    return opnorm(op, t, 0.0, -t, 0.0, method="lanczos", window=window, max_iters=max_iters, tol=1e-8)


def c11_double_difference(V: LinOp, u: VectorField, tau_schedule, norm_space: str = "B1",
                          pad: int = 8, window: np.ndarray | None = None,
                          max_iters: int = 400) -> RegularityReport:
    """g(tau) = ||V_tau + V_-tau - 2V|| / tau^2 with V_tau = e^{i tau A} V e^{-i tau A}.

    Norms are taken between inner-window states.  Satisfied when the slope
    of g over the smallest decade of tau is above -1.
    """
    grid = V.grid
    window = window_function(grid) if window is None else window
    taus, vals, notes = [], [], []
    for tau in sorted(float(t) for t in tau_schedule):
        try:
            G = group_element(grid, u, tau, pad=pad)
        except FlowEscapeError as exc:
            notes.append(f"tau={tau}: {exc}")
            break
        Gi = G.adjoint()
        D = G @ V @ Gi + Gi @ V @ G - 2.0 * V
        taus.append(tau)
        vals.append(_norm(D, norm_space, window, max_iters) / tau**2)
    record = SweepRecord("tau", taus, vals, {"norm": norm_space, "pad": pad}, value_name="g")
    if notes:
        return RegularityReport("C11_doubledifference", record, INCONCLUSIVE, u.describe(), None, notes)
    if all(v == 0.0 for v in vals):
        return RegularityReport("C11_doubledifference", record, SATISFIED, u.describe(), None, notes)
    ax, val = tail(taus, vals, 1.0, "low")
    fit = fit_loglog(ax, val)
    return RegularityReport("C11_doubledifference", record, slope_verdict(fit, -1.0, "above"),
                            u.describe(), fit, notes)


def lr_scan(V: LinOp, r_schedule, mode: str = "generic", u: VectorField | None = None,
            a: float = 1.0, norm_space: str = "B1", window: np.ndarray | None = None,
            max_iters: int = 400) -> RegularityReport:
    """r-profile of ||xi(q/r) [V, iA_u]|| (generic) or, in "nakamura" mode, of the terms
    ||xi(q/r)[q_j, V]|| + ||xi(q/r) q_j delta_j(V)||.  Satisfied when the
    log-log slope over the last decade of r is negative.
    """
    grid = V.grid
    window = window_function(grid) if window is None else window
    limit = grid.half_width / 4.0
    rs, vals, notes = [], [], []
    if mode == "generic":
        if u is None:
            raise ValueError("generic mode needs a vector field")
        C = generic_commutator(V, 1j * assemble_A(grid, u))
        conj = u.describe()
    elif mode == "nakamura":
        conj = {"kind": "nakamura", "a": a}
    else:
        raise ValueError(f"unknown mode {mode!r}")
    for r in sorted(float(x) for x in r_schedule):
        if r > limit:
            notes.append(f"r={r} beyond inner window (limit {limit}); truncated")
            continue
        xi = Diagonal(grid, far_cutoff(grid, r))
        if mode == "generic":
            val = _norm(xi @ C, norm_space, window, max_iters)
        else:
            val = 0.0
            for j in range(grid.dim):
                qj = position(grid, j)
                comm = generic_commutator(qj, V)
                val += _norm(xi @ comm, norm_space, window, max_iters)
                val += _norm(xi @ qj @ delta(V, a, j), norm_space, window, max_iters)
        rs.append(r)
        vals.append(val)
    record = SweepRecord("r", rs, vals, {"mode": mode, "norm": norm_space}, value_name="norm")
    verdict, fit = decay_verdict(rs, vals, 0.0) if rs else (INCONCLUSIVE, None)
    return RegularityReport("C11_lr_scan", record, verdict, conj, fit, notes)


# ----------------------------------------------------------------------------
# Witness sequences


def _bump_derivatives(t):
    """smooth_bump and its first three derivatives."""
    t = np.asarray(t, dtype=float)
    out = [np.zeros_like(t) for _ in range(4)]
    inside = np.abs(t) < 1.0
    ti = t[inside]
    w = 1.0 - ti**2
    b = np.exp(1.0 - 1.0 / w)
    d1 = -2.0 * ti / w**2
    d2 = -2.0 / w**2 - 8.0 * ti**2 / w**3
    d3 = -24.0 * ti / w**3 - 48.0 * ti**3 / w**4
    out[0][inside] = b
    out[1][inside] = d1 * b
    out[2][inside] = (d2 + d1**2) * b
    out[3][inside] = (d3 + 3.0 * d1 * d2 + d1**3) * b
    return out


def profile_derivatives(t):
    """chi', chi'', chi''' for chi(t) = (t + t^2/2) bump(t)."""
    b, b1, b2, b3 = _bump_derivatives(t)
    t = np.asarray(t, dtype=float)
    P, P1 = t + 0.5 * t**2, 1.0 + t
    return (P1 * b + P * b1, b + 2.0 * P1 * b1 + P * b2, 3.0 * b1 + 3.0 * P1 * b2 + P * b3)


def _quad(fn, lo, hi) -> float:
    from scipy import integrate

    return float(integrate.quad(fn, lo, hi, limit=400, epsabs=0.0, epsrel=1e-11)[0])


def _comb_witness(kind: str, schedule, spacing: float = 1.0 / 64.0):
    """Momentum-side double integrals for the comb potential.

    dilation: (f_N, (zeta W(zeta)) * g) with f_N = 1_[N,N+1] <N+1>^-1, g = 1_[0,1];
    delta:    (f_N, Vhat * g) with f_N = 1_[N+1,N+2], g = 1_[0,1].
    """
    from .potentials import comb_potential_hat, comb_symbol

    m = int(round(1.0 / spacing))
    unit = np.linspace(0.0, 1.0, m + 1)
    wts = np.full(m + 1, spacing)
    wts[[0, -1]] *= 0.5
    eta = unit
    values, f_norms, g_norms = [], [], []
    g_norm = math.sqrt(np.sum(wts * bracket(eta) ** 2))
    for N in schedule:
        if kind == "dilation":
            xi = N + unit
            fhat = np.full_like(xi, 1.0 / bracket(N + 1.0))
            zeta = xi[:, None] - eta[None, :]
            kern = zeta * comb_symbol(zeta)
            f_norms.append(math.sqrt(np.sum(wts * bracket(xi) ** 2 * fhat**2)))
            g_norms.append(g_norm)
        else:
            xi = N + 1.0 + unit
            fhat = np.ones_like(xi)
            zeta = xi[:, None] - eta[None, :]
            kern = comb_potential_hat(zeta)
            f_norms.append(math.sqrt(np.sum(wts * fhat**2)))
            g_norms.append(math.sqrt(np.sum(wts * bracket(eta) ** 4)))
        values.append(float((wts * fhat) @ kern @ wts))
    norms = ("H1", "H1") if kind == "dilation" else ("L2", "H2")
    return values, f_norms, g_norms, norms


def _exponential_witness(kind: str, schedule):
    """One-dimensional pairings for exp(3|x|/4) sin(exp|x|) after sigma = e^|x| - 2 N pi.

    The packets g_N live at |x| ~ ln(2 N pi) with width ~ 1/N, so they are
    integrated exactly in sigma rather than sampled.
    """
    values, f_norms, g_norms = [], [], []
    f_h = _bracket_inverse_sobolev_norm(2 if kind == "delta" else 1)
    for N in schedule:
        base = 2.0 * N * math.pi
        if kind == "delta":
            lo, hi = math.pi / 4.0, 3.0 * math.pi / 4.0
            chi = lambda s: float(smooth_bump((s - math.pi / 2.0) / (math.pi / 4.0)))

            def integrand(s):
                big = s + base
                return chi(s) * big**0.25 * math.sin(s) / math.sqrt(1.0 + math.log(big) ** 2)

            g2 = 2.0 * _quad(lambda s: chi(s) ** 2, lo, hi)
        else:
            lo, hi = 0.0, math.pi / 4.0
            scale = math.pi / 8.0
            chi = lambda s: float(smooth_bump((s - scale) / scale))
            dchi = lambda s: float(_bump_derivatives((s - scale) / scale)[1]) / scale

            def integrand(s):
                big = s + base
                r = math.log(big)
                return (chi(s) * r / math.sqrt(1.0 + r * r)
                        * (big**0.25 * math.cos(s) + 0.75 * big**-0.75 * math.sin(s)))

            # ||g_N||_{H^1}^2: g_N = e^{-r/2} chi(sigma), g_N' ~ e^{r/2} chi'(sigma)
            g2 = 2.0 * _quad(lambda s: chi(s) ** 2 / (s + base) ** 2
                             + (dchi(s) - 0.5 * chi(s) / (s + base)) ** 2, lo, hi)
        values.append(2.0 * _quad(integrand, lo, hi))
        f_norms.append(f_h)
        g_norms.append(math.sqrt(g2))
    norms = ("H2", "L2") if kind == "delta" else ("H1", "H1")
    return values, f_norms, g_norms, norms


def _bracket_inverse_sobolev_norm(order: int, dim: int = 1) -> float:
    """H^order norm of <x>^-(dim+1)/2 in ``dim`` dimensions.

    Uses the transform of (1 + |x|^2)^-a: 2^(1-a)/Gamma(a) |k|^(a - dim/2) K_(dim/2 - a)(|k|).
    """
    from scipy import special

    a = (dim + 1) / 4.0
    c = 2.0 ** (1.0 - a) / math.gamma(a)
    area = 2.0 * math.pi ** (dim / 2.0) / math.gamma(dim / 2.0)

    def integrand(k):
        return (k ** (dim - 1) * (1.0 + k * k) ** order
                * (c * k ** (a - dim / 2.0) * special.kv(dim / 2.0 - a, k)) ** 2)

    return math.sqrt(area * _quad(integrand, 0.0, 80.0))


def _bump_sum_witness(kind: str, schedule, dim: int):
    """Radial pairings for the bump-sum potential; only the n = N shell meets g_N."""
    area = 2.0 * math.pi ** (dim / 2.0) / math.gamma(dim / 2.0)
    values, f_norms, g_norms = [], [], []
    f_h = _bracket_inverse_sobolev_norm(2 if kind == "delta" else 1, dim)
    for N in schedule:
        w = N ** (1.5 * dim)

        def radial(fn):
            return area * _quad(lambda t: (N + t / w) ** (dim - 1) * fn(t), -1.0, 1.0) / w

        fpow = lambda t: (1.0 + (N + t / w) ** 2) ** (-(dim + 1) / 4.0)
        amp = N ** (dim / 4.0 + 0.5)
        if kind == "delta":
            d1 = lambda t: float(profile_derivatives(t)[0])
            val = amp * N ** ((3 * dim - 1) / 2.0) * radial(lambda t: fpow(t) * d1(t) ** 2)
            g2 = amp**2 * radial(lambda t: d1(t) ** 2)
        else:
            d2 = lambda t: float(profile_derivatives(t)[1])
            d3 = lambda t: float(profile_derivatives(t)[2])
            val = amp * N ** ((3 * dim - 1) / 2.0) * radial(
                lambda t: (N + t / w) * fpow(t) * d2(t) ** 2)
            g2 = (amp / w) ** 2 * radial(lambda t: d2(t) ** 2 + (w * d3(t)) ** 2)
        values.append(val)
        f_norms.append(f_h)
        g_norms.append(math.sqrt(g2))
    norms = ("H2", "L2") if kind == "delta" else ("H1", "H1")
    return values, f_norms, g_norms, norms


def _grid_witness(V: np.ndarray, grid: Grid, kind: str, schedule):
    """Momentum-indicator witnesses sampled on the grid for any realized V."""
    from .lattice import inverse_transform

    k = grid.axis_k
    asc = np.sort(k)
    values, f_norms, g_norms, used = [], [], [], []
    ghat = ((asc >= 0.0) & (asc <= 1.0)).astype(float)
    g = inverse_transform(grid, ghat)
    Vop = Diagonal(grid, V)
    if kind == "dilation":
        C = generic_commutator(Vop, 1j * assemble_A(grid, dilation()))
    for N in schedule:
        lo = N if kind == "dilation" else N + 1.0
        if lo + 1.0 > grid.k_max:
            break
        fhat = ((asc >= lo) & (asc <= lo + 1.0)).astype(float)
        if kind == "dilation":
            fhat = fhat / bracket(N + 1.0)
        f = inverse_transform(grid, fhat)
        Tg = C.apply(g) if kind == "dilation" else Vop.apply(g)
        values.append(float(abs(grid.inner(f, Tg))))
        order_f = 1 if kind == "dilation" else 0
        order_g = 1 if kind == "dilation" else 2
        f_norms.append(math.sqrt(float(np.sum(bracket(asc) ** (2 * order_f) * fhat**2) * grid.dk)))
        g_norms.append(math.sqrt(float(np.sum(bracket(asc) ** (2 * order_g) * ghat**2) * grid.dk)))
        used.append(N)
    norms = ("H1", "H1") if kind == "dilation" else ("L2", "H2")
    return values, f_norms, g_norms, norms, used


def _oscillating_packets(spec: PotentialSpec, grid: Grid, radii):
    """Wave packets f = psi_R cos(k|x|^alpha), g = psi_R against [V, iA_D].

    Pairings are divided by ||f||_{H^2} ||g||_{H^2}; for alpha >= 1 the
    quotient behaves like R^(2 - alpha - beta).
    """
    from .potentials import realize

    V = Diagonal(grid, realize(spec, grid).values)
    C = generic_commutator(V, 1j * assemble_A(grid, dilation()))
    p = spec.params
    r = grid.radius
    h2 = Multiplier(grid, bracket(np.sqrt(grid.k_squared)) ** 2)
    values, f_norms, g_norms, used = [], [], [], []
    for R in radii:
        if 1.5 * R > grid.half_width / 2.0:
            break
        psi = smooth_bump((r - R) / (0.5 * R))
        f = (psi * np.cos(p["k"] * r ** p["alpha"])).astype(complex)
        g = psi.astype(complex)
        fn, gn = grid.norm(h2.apply(f)), grid.norm(h2.apply(g))
        values.append(float(abs(grid.inner(f, C.apply(g)))) / (fn * gn))
        f_norms.append(fn)
        g_norms.append(gn)
        used.append(R)
    return values, f_norms, g_norms, ("H2", "H2"), used


def witness_sequence(V, witness_kind: str, n_schedule, grid: Grid | None = None,
                     dim: int | None = None) -> SweepRecord:
    """Tabulate unboundedness witness pairings against N.

    ``witness_kind`` is "dilation" (pairings with [V, iA_D]) or "delta"
    (pairings with V itself, the Laplacian-boundedness test).  Witness norms
    go into the ``f_norm`` and ``g_norm`` columns.  For the oscillating family
    the schedule is the packet radius R and pairings are already normalized.
    """
    if witness_kind not in ("dilation", "delta"):
        raise ValueError(f"unknown witness kind {witness_kind!r}; use 'dilation' or 'delta'")
    schedule = sorted(float(n) for n in n_schedule)
    notes: list[str] = []
    family = V.family if isinstance(V, PotentialSpec) else "grid"
    axis = "N"
    if family == "fourier_comb":
        vals, fn, gn, norms = _comb_witness(witness_kind, schedule)
        method = "momentum-side quadrature, spacing 1/64"
    elif family == "exponential":
        vals, fn, gn, norms = _exponential_witness(witness_kind, schedule)
        method = "exact quadrature in sigma = exp|x| - 2 N pi (one dimension)"
    elif family == "bump_sum":
        d = dim or V.params["dim"]
        vals, fn, gn, norms = _bump_sum_witness(witness_kind, schedule, d)
        method = f"radial quadrature, dimension {d}"
    elif family == "oscillating" and witness_kind == "dilation":
        if grid is None:
            raise ValueError("the oscillating witness needs a grid")
        vals, fn, gn, norms, used = _oscillating_packets(V, grid, schedule)
        axis, method = "R", "wave packets on the grid, normalized by H^2 norms"
        if len(used) < len(schedule):
            notes.append(f"R capped at {used[-1] if used else 'none'} by the inner window")
        schedule = used
    else:
        if grid is None:
            raise ValueError("grid witnesses need a grid")
        if isinstance(V, PotentialSpec):
            from .potentials import realize

            values = realize(V, grid).values
        else:
            values = np.asarray(getattr(V, "values", V), dtype=float)
        vals, fn, gn, norms, used = _grid_witness(values, grid, witness_kind, schedule)
        method = "momentum indicators on the grid"
        if len(used) < len(schedule):
            notes.append(f"N capped at {used[-1] if used else 'none'}: support beyond k_max")
        schedule = used
    meta = {"potential": V.describe() if isinstance(V, PotentialSpec) else {"family": "grid"},
            "kind": witness_kind, "method": method, "f_norm_space": norms[0],
            "g_norm_space": norms[1], "notes": notes}
    return SweepRecord(axis, schedule, vals, meta, {"f_norm": fn, "g_norm": gn}, value_name="pairing")


def growth_verdict(record: SweepRecord, factor: float = 10.0) -> tuple[bool, bool, float]:
    """(monotone increase, growth >= factor, observed growth ratio)."""
    v = np.asarray(record.values)
    if v.size < 2 or v[0] <= 0:
        return False, False, 0.0
    ratio = float(v[-1] / v[0])
    return bool(np.all(np.diff(v) > 0)), ratio >= factor, ratio
