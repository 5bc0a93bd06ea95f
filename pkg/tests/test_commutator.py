import math

import numpy as np
import pytest
from scipy import integrate

from mourrelab.commutator import (c11_double_difference, delta, far_cutoff, first_commutator_AN,
                                  growth_verdict, ia_translation_commutator, iterated, lr_scan,
                                  nakamura_component, profile_derivatives, second_commutator_AN,
                                  second_difference, witness_sequence, wrap_mask)
from mourrelab.conjugate import arctan_field, assemble_A, generic_commutator
from mourrelab.lattice import (Diagonal, Multiplier, form_norm, inner_window_basis,
                               make_grid, opnorm, position, translation, window_function)
from mourrelab.potentials import (bracket_power, bump_integral, comb_weight, custom,
                                  example_profile, fourier_comb, oscillating, potential_op,
                                  smooth_bump)
from mourrelab.records import SATISFIED


@pytest.fixture
def oracle_grid():
    # h = 0.5, so a = 1 is a two-cell shift and translations are exact rolls
    return make_grid(n=32, half_width=8.0)


@pytest.fixture
def oracle_basis(oracle_grid):
    return inner_window_basis(oracle_grid, radius=4.0, sharp=True)


def test_delta_of_coordinates():
    g = make_grid(dim=2, n=16, half_width=8.0)
    a = 1.0
    for j in range(2):
        for k in range(2):
            d = delta(position(g, k), a, j).values
            interior = ~wrap_mask(g, a, j)
            np.testing.assert_array_equal(d[interior], a if j == k else 0.0)


def test_delta_kills_multipliers_and_constants(oracle_grid, rng):
    g = oracle_grid
    m = Multiplier(g, np.sin(g.k(0)))
    f = rng.standard_normal(32)
    assert np.all(delta(m, 1.0).apply(f) == 0)
    assert np.all(delta(Diagonal(g, np.full(32, 3.0)), 1.0).values == 0)
    # off-grid shifts still vanish on constants up to rounding
    assert np.max(np.abs(delta(Diagonal(g, np.full(32, 3.0)), 0.3).apply(f))) < 1e-12


def test_delta_leibniz(oracle_grid, rng):
    # delta(UV) = delta(U) V + U delta(V) + delta(U) delta(V) for diagonals
    g = oracle_grid
    U, V = Diagonal(g, rng.standard_normal(32)), Diagonal(g, rng.standard_normal(32))
    lhs = delta(Diagonal(g, U.values * V.values), 1.0).values
    dU, dV = delta(U, 1.0).values, delta(V, 1.0).values
    np.testing.assert_allclose(lhs, dU * V.values + U.values * dV + dU * dV, atol=1e-12)


def test_second_difference_formula(oracle_grid, rng):
    V = rng.standard_normal(32)
    d2 = second_difference(Diagonal(oracle_grid, V), 1.0, 0, 0).values
    np.testing.assert_allclose(d2, np.roll(V, -4) - 2 * np.roll(V, -2) + V, atol=1e-14)


def test_first_commutator_zero(oracle_grid):
    Z = Diagonal(oracle_grid, np.zeros(32))
    assert np.all(first_commutator_AN(Z, 1.0).to_dense() == 0)


def test_first_commutator_dense_oracle(oracle_grid, oracle_basis, rng):
    A = nakamura_component(oracle_grid, 1.0)
    for _ in range(10):
        V = Diagonal(oracle_grid, rng.standard_normal(32))
        oracle = generic_commutator(2j * A, V)
        assert form_norm(oracle - first_commutator_AN(V, 1.0), oracle_basis) <= 1e-8
        # the operator is self-adjoint
        F = first_commutator_AN(V, 1.0)
        assert form_norm(F - F.adjoint(), oracle_basis) <= 1e-12


def test_first_commutator_of_coordinate(oracle_grid, oracle_basis):
    g, a, b = oracle_grid, 1.0, 0.5
    q, T = position(g), translation(g, 1.0)
    reduced = (b + q) @ (a * T) + (q - b) @ (a * T.adjoint())
    oracle = generic_commutator(2j * nakamura_component(g, a), q)
    assert form_norm(first_commutator_AN(q, a) - reduced, oracle_basis) <= 1e-12
    assert form_norm(oracle - reduced, oracle_basis) <= 1e-8


def test_second_commutator_oracle(oracle_grid, oracle_basis):
    g = oracle_grid
    A = nakamura_component(g, 1.0)
    assert np.all(second_commutator_AN(Diagonal(g, np.zeros(32)), 1.0).to_dense() == 0)
    qq = Diagonal(g, g.x(0) ** 2)
    second = second_commutator_AN(qq, 1.0)
    assert form_norm(second, oracle_basis) > 1.0
    assert form_norm(iterated(qq, A, 2) - second, oracle_basis) <= 1e-8


def test_second_commutator_mixed_directions(rng):
    g = make_grid(dim=2, n=16, half_width=8.0)
    B = inner_window_basis(g, radius=4.0, sharp=True)
    A0, A1 = nakamura_component(g, 1.0, 0), nakamura_component(g, 1.0, 1)
    for _ in range(3):
        V = Diagonal(g, rng.standard_normal(g.shape))
        s01, s10 = second_commutator_AN(V, 1.0, 0, 1), second_commutator_AN(V, 1.0, 1, 0)
        assert form_norm(s01 - s10, B) <= 1e-12
        oracle = generic_commutator(1j * A0, generic_commutator(1j * A1, V))
        assert form_norm(oracle - s01, B) <= 1e-8


def test_translation_commutator(oracle_grid, oracle_basis):
    g = oracle_grid
    A = nakamura_component(g, 1.0)
    T = translation(g, 1.0)
    C = ia_translation_commutator(g, 1.0, 0, 0)
    assert form_norm(generic_commutator(1j * A, T) - C, oracle_basis) <= 1e-12
    g2 = make_grid(dim=2, n=8, half_width=4.0)
    assert np.all(ia_translation_commutator(g2, 1.0, 0, 1).values == 0)


def test_commutator_with_itself_vanishes(oracle_grid, oracle_basis):
    A = assemble_A(oracle_grid, arctan_field())
    assert form_norm(generic_commutator(A, A), oracle_basis) <= 1e-12


def test_second_iterated_commutator_is_resolution_stable():
    # alpha + beta - 1 = 3 >= 2, so two commutators with A_arctan stay bounded
    vals = []
    for n in (1024, 2048):
        g = make_grid(n=n, half_width=24.0)
        w = window_function(g, radius=18.0, width=0.6)
        V = potential_op(oscillating(3, 1), g)
        vals.append(opnorm(iterated(V, assemble_A(g, arctan_field()), 2), 1, 0, -1, 0,
                           method="lanczos", window=w, tol=1e-8))
    assert abs(vals[1] - vals[0]) <= 0.05 * vals[1]


def test_far_cutoff():
    g = make_grid(n=256, half_width=20.0)
    xi = far_cutoff(g, 3.0)
    assert np.all(xi[np.abs(g.axis_x) < 3.0] == 0) and np.all(xi[np.abs(g.axis_x) > 6.0] == 1)


def _scan_window(g):
    return window_function(g, radius=0.75 * g.half_width, width=g.half_width / 40)


def test_lr_scan_compact_support_vanishes():
    g = make_grid(n=256, half_width=32.0)
    V = potential_op(custom(lambda x: smooth_bump(x[..., 0] / 2.0)), g)
    rep = lr_scan(V, [1.0, 2.0, 3.5, 5.0, 8.0], mode="nakamura", a=1.0, window=_scan_window(g))
    assert rep.verdict == SATISFIED
    assert rep.profile.values[-3:] == [0.0, 0.0, 0.0]


def test_lr_scan_inverse_square():
    g = make_grid(n=256, half_width=32.0)
    V = potential_op(bracket_power(2.0), g)
    rep = lr_scan(V, np.geomspace(0.8, 8, 10), mode="nakamura", a=1.0, window=_scan_window(g))
    assert rep.verdict == SATISFIED and rep.fit.slope < -1.0
    assert all(v >= 0 for v in rep.profile.values)


def test_lr_scan_comb_with_bounded_field():
    g = make_grid(n=512, half_width=40.0)
    V = potential_op(fourier_comb(), g)
    rep = lr_scan(V, np.geomspace(1, 10, 10), u=arctan_field(), window=_scan_window(g))
    assert rep.verdict == SATISFIED


def test_lr_scan_truncates_and_validates():
    g = make_grid(n=128, half_width=16.0)
    V = potential_op(bracket_power(2.0), g)
    rep = lr_scan(V, [1.0, 2.0, 10.0], mode="nakamura", window=_scan_window(g))
    assert rep.profile.axis_values == [1.0, 2.0] and rep.notes
    with pytest.raises(ValueError):
        lr_scan(V, [1.0], mode="generic")
    with pytest.raises(ValueError):
        lr_scan(V, [1.0], mode="other")


def test_c11_zero_potential():
    g = make_grid(n=128, half_width=16.0)
    rep = c11_double_difference(Diagonal(g, np.zeros(128)), arctan_field(), [0.01, 0.1], pad=2)
    assert rep.verdict == SATISFIED and rep.profile.values == [0.0, 0.0]


def test_witness_zero_potential():
    g = make_grid(n=256, half_width=40.0)
    rec = witness_sequence(np.zeros(256), "dilation", [1, 2, 4], grid=g)
    assert rec.values == [0.0, 0.0, 0.0]
    rec = witness_sequence(np.zeros(256), "delta", [1, 2, 4], grid=g)
    assert rec.values == [0.0, 0.0, 0.0]


def _triangle_bump() -> float:
    return integrate.quad(lambda t: (1 - abs(t)) * float(smooth_bump(np.array([t]))[0]), -1, 1,
                          epsabs=1e-13)[0]


def test_comb_dilation_witness_bounds():
    ns = [2.0**p for p in range(1, 13)]
    rec = witness_sequence(fourier_comb(), "dilation", ns)
    c = _triangle_bump()
    for n, v in zip(ns, rec.values):
        lam = comb_weight(np.array([int(n)]))[0]
        assert lam * (n - 1) / math.hypot(1, n + 1) * c <= v * (1 + 1e-6)
        assert v <= lam * (n + 1) / math.hypot(1, n + 1) * c * (1 + 1e-6)
    mono, big, ratio = growth_verdict(rec)
    assert mono and big


def test_comb_delta_witness_bound():
    ns = [2.0**p + 1 for p in range(1, 13)]
    rec = witness_sequence(fourier_comb(), "delta", ns)
    for n, v in zip(ns, rec.values):
        assert v >= comb_weight(np.array([int(n) - 1]))[0] * bump_integral() * (1 - 1e-6)
    assert rec.metadata["f_norm_space"] == "L2" and rec.metadata["g_norm_space"] == "H2"
    assert np.ptp(rec.columns["f_norm"]) == 0.0


def test_profile_derivatives_match_differences():
    t = np.linspace(-0.9, 0.9, 7)
    eps = 1e-5
    d1, d2, _ = profile_derivatives(t)
    num1 = (example_profile(t + eps) - example_profile(t - eps)) / (2 * eps)
    num2 = (example_profile(t + eps) - 2 * example_profile(t) + example_profile(t - eps)) / eps**2
    np.testing.assert_allclose(d1, num1, atol=1e-8)
    np.testing.assert_allclose(d2, num2, atol=1e-4)


def test_witness_rejects_unknown_kind():
    with pytest.raises(ValueError):
        witness_sequence(fourier_comb(), "other", [2])


def test_growth_verdict_edge_cases():
    from mourrelab.records import SweepRecord

    assert growth_verdict(SweepRecord("N", [1], [1.0])) == (False, False, 0.0)
    mono, big, ratio = growth_verdict(SweepRecord("N", [1, 2, 3], [1.0, 3.0, 2.0]))
    assert not mono and ratio == 2.0
