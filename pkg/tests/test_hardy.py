import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate as sp_integrate

from axbheat.experiments import pairing_closed_form
from axbheat.group import GroupElement
from axbheat.hardy import (
    R0_BOX,
    Atom,
    CZSet,
    OverlapError,
    as_atom,
    atom_ok,
    cauchy_increments,
    cauchy_tail_bound,
    coefficient_sum,
    counter_c0,
    counter_ck,
    counter_ck_closed,
    cz_admissible,
    cz_lower,
    cz_superset,
    cz_upper,
    decompose_fL,
    dilate,
    dilation_stats,
    f_tilde,
    g_log,
    g_trunc,
    log_abs,
    make_fL,
    mean_oscillation,
    oscillation_1d,
    pairing,
    pairing_gN_counter,
    phi_closed_form,
    random_atom,
    reconstruction_residual,
    residual_check,
    validate_atom,
)
from axbheat.quadrature import BoxRegion, StepFunction

log_L = st.floats(0.75, 14.0)


def phi_oracle(L):
    return 4 * ((L + 1) * math.log(L + 1) - (L - 1) * math.log(L - 1) - 2) + 8


def test_phi_frozen():
    assert abs(phi_closed_form(10.0) - 26.4073) < 1e-4
    assert abs(pairing(g_log, make_fL(10.0)) - phi_oracle(10.0)) <= 1e-6


@pytest.mark.parametrize("L", [3.0, math.e**2, 50.0, math.e**5])
def test_phi_quadrature_matches_closed_form(L):
    assert abs(pairing(g_log, make_fL(L)) - phi_oracle(L)) <= 1e-6


def test_overlap_rejected():
    with pytest.raises(OverlapError):
        make_fL(2.0)
    with pytest.raises(OverlapError):
        decompose_fL(1.5)


@given(log_L)
@settings(max_examples=40)
def test_decomposition_properties(lnL):
    L = math.exp(lnL)
    f = make_fL(L)
    dec = decompose_fL(L)
    assert len(dec) == 2 * math.floor(lnL / 2 + 1e-12) + 1
    assert all(atom_ok(A) for _, A in dec)
    assert all(A.support.admissible for _, A in dec)
    assert reconstruction_residual(dec, f) <= 1e-12


def test_decomposition_at_even_powers():
    # ln(e^{2k}) can round below 2k; the atom count must still be 2k + 1
    for k in range(1, 6):
        assert len(decompose_fL(math.exp(2 * k))) == 2 * k + 1


def test_coefficients_constant_and_sum_linear():
    # chain atoms and the bridging atom each keep one coefficient for every L
    Ls = [math.exp(k) for k in range(4, 11)]
    decs = [decompose_fL(L) for L in Ls]
    chain = np.array([abs(lam) for d in decs for lam, _ in d[:-1]])
    bridge = np.array([abs(d[-1][0]) for d in decs])
    assert chain.max() / chain.min() - 1 <= 0.2
    assert bridge.max() / bridge.min() - 1 <= 0.2
    # the chain coefficient is rho(R_0) / rho(P_j) times the measure of the covering CZ set
    assert math.isclose(chain[0], 4 * math.e**10, rel_tol=1e-12)
    even = [math.exp(k) for k in (4, 6, 8, 10)]
    sums = np.array([coefficient_sum(decompose_fL(L)) for L in even])
    slope, icpt = np.polyfit(np.log(even), sums, 1)
    pred = slope * np.log(even) + icpt
    r2 = 1 - np.sum((sums - pred) ** 2) / np.sum((sums - np.mean(sums)) ** 2)
    assert r2 >= 0.98 and slope > 0


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-3, 3), st.floats(1e-3, 10), st.floats(1e-6, 1 - 1e-6))
def test_cz_translation_keeps_admissibility(z1, z2, w, r, theta):
    # strictly inside the admissible range: on the boundary L a and e^2 a r differ by an ulp
    lo, hi = cz_lower(1.0, r), cz_upper(1.0, r)
    R = CZSet(GroupElement(0, 0, 1), lo * (hi / lo) ** theta, r)
    assert R.admissible
    c = GroupElement(z1, z2, math.exp(w))
    T = R.translate(c)
    assert T.admissible
    assert math.isclose(T.measure, c.a**2 * R.measure, rel_tol=1e-12)
    assert math.isclose(T.box.measure, T.measure, rel_tol=1e-12)


@given(st.floats(-5, 5), st.floats(0.01, 50), st.floats(0.01, 50), st.floats(-4, 4), st.floats(1e-3, 6))
def test_cz_superset_contains_box(x, wx, wy, u, du):
    box = BoxRegion.from_u(x, x + wx, -wy, wy, u - du, u + du)
    R = cz_superset(box)
    assert R.admissible
    assert R.box.contains(box)


def test_cz_guards_and_dilation():
    with pytest.raises(ValueError):
        cz_admissible(GroupElement(0, 0, 1), -1.0, 1.0)
    R = CZSet(GroupElement(0, 0, 1), 1.0, 0.1)
    assert R.admissible
    assert dilate(R).contains(R.box)
    vol, rad = dilation_stats(R)
    assert vol > 1 and rad >= 1


@given(st.integers(0, 2**32 - 1), st.floats(0.1, 5.0))
@settings(max_examples=60)
def test_random_atoms_validate(seed, r0):
    A = random_atom(np.random.default_rng(seed), r0)
    rep = validate_atom(A)
    assert all(v[0] for v in rep.values())
    assert A.support.admissible
    assert math.isclose(A.values.sup_norm, 1 / A.support.measure, rel_tol=1e-12)
    lo = cz_lower(1.0, r0)
    assert lo <= A.support.L <= lo * (cz_upper(1.0, r0) / lo) ** 0.25


def test_validate_atom_detects_each_failure():
    R = CZSet(GroupElement(0, 0, 1), 2.0, 1.0)
    b = R.box
    half = BoxRegion(b.x1lo, 0.0, b.x2lo, b.x2hi, b.alo, b.ahi)
    other = BoxRegion(0.0, b.x1hi, b.x2lo, b.x2hi, b.alo, b.ahi)
    good = StepFunction([(half, 1 / R.measure), (other, -1 / R.measure)])
    assert atom_ok(Atom(good, R))
    assert not validate_atom(Atom(good.scaled(2.0), R))["size"][0]
    assert not validate_atom(Atom(StepFunction([(half, 1 / R.measure)]), R))["cancellation"][0]
    moved = good.left_translate(GroupElement(10.0, 0, 1))
    assert not validate_atom(Atom(moved, R))["support"][0]


def test_as_atom_normalises():
    lam, A = as_atom(StepFunction([(R0_BOX, 3.0), (R0_BOX.translate(GroupElement(5, 0, 1)), -3.0)]))
    assert atom_ok(A)
    assert math.isclose(lam * A.values.sup_norm, 3.0, rel_tol=1e-12)


def test_log_is_bmo_on_symmetric_boxes():
    # mean oscillation of ln|s| over a symmetric interval is 2/e
    assert math.isclose(oscillation_1d(log_abs, -1.0, 1.0), 2 / math.e, rel_tol=1e-9)
    assert math.isclose(oscillation_1d(log_abs, -7.0, 7.0), 2 / math.e, rel_tol=1e-9)
    box = BoxRegion.from_u(-3.0, 3.0, 0.0, 2.0, -1.0, 0.5)
    assert math.isclose(mean_oscillation(g_log, box), 2 / math.e, rel_tol=1e-6)


@given(st.floats(-20, 20), st.floats(1e-3, 50), st.floats(0.01, 100))
@settings(max_examples=40)
def test_log_oscillation_scale_invariant(lo, w, lam):
    # ln|lam s| = ln|s| + ln lam, and the mean oscillation ignores constants
    a = oscillation_1d(log_abs, lo, lo + w)
    b = oscillation_1d(log_abs, lam * lo, lam * (lo + w))
    assert math.isclose(a, b, rel_tol=1e-7, abs_tol=1e-10)


@pytest.mark.parametrize("lo, hi", [(-1.0, 2.0), (0.5, 3.0), (-4.0, -0.1)])
def test_log_oscillation_against_scipy(lo, hi):
    pts = [0.0] if lo < 0 < hi else None
    m = sp_integrate.quad(lambda s: math.log(abs(s)), lo, hi, points=pts, epsrel=1e-13, limit=200)[0] / (hi - lo)
    kinks = sorted(p for p in (0.0, math.exp(m), -math.exp(m)) if lo < p < hi)
    v = sp_integrate.quad(lambda s: abs(math.log(abs(s)) - m), lo, hi, points=kinks or None, epsrel=1e-13,
                          limit=200)[0]
    assert math.isclose(oscillation_1d(log_abs, lo, hi), v / (hi - lo), rel_tol=1e-9)


def test_truncation():
    g = g_trunc(2.0)
    assert np.allclose(g(np.array([1e-9, 1.0, 1e9]), 0.0, 1.0), [-2.0, 0.0, 2.0])


def test_counter_constants():
    assert abs(counter_c0() + 1 / math.sqrt(math.log(3.0))) <= 1e-12
    for k in (2, 3, 10, 50):
        assert math.isclose(counter_ck(k), counter_ck_closed(k), rel_tol=1e-12)


def test_counter_pairing_two_routes():
    # quadrature in v = ln x1 against the antiderivatives (valid for N >= ln 3)
    for N in (1.2, 4.0, 16.0, 64.0, 256.0):
        assert math.isclose(pairing_gN_counter(N), pairing_closed_form(N), rel_tol=1e-10)


def test_counter_pairing_against_scipy():
    N = 16.0
    c0 = -1 / math.sqrt(math.log(3.0))

    def main(s):
        return min(math.log(s), N) / (s * math.log(s) ** 1.5)

    m1, _ = sp_integrate.quad(main, 3.0, math.exp(N), limit=400, epsrel=1e-12)
    m2 = N * 2 / math.sqrt(N)  # int_{e^N}^inf ds / (s ln^{3/2} s)
    inner, _ = sp_integrate.quad(lambda s: max(math.log(s), -N), 0.0, 1.0, points=[math.exp(-N)], epsrel=1e-12)
    want = 4 * (m1 + m2) + c0 * 4 * 2 * inner
    assert math.isclose(pairing_gN_counter(N), want, rel_tol=1e-8)


def test_counterexample_mean_zero():
    # int f d rho = 0: mass of the x1 > 3 part cancels c0 rho(R_0)
    mass = 4 * 2 / math.sqrt(math.log(3.0))
    assert abs(mass + counter_c0() * R0_BOX.measure) <= 1e-12


@pytest.mark.parametrize("k", [2, 5, 20, 50])
def test_residual_checks(k):
    r = residual_check(k)
    assert r["sup_ok"] and r["atom_ok"]


def test_f_tilde_is_mean_zero():
    f = f_tilde(10)
    assert abs(f.integral()) <= 1e-12 * f.l1_norm()


def test_cauchy_tail():
    inc = cauchy_increments(1000, 20_000)
    assert np.all(inc > 0) and inc.max() < 1e-3
    # the bound dominates the partial tail sum it covers
    assert cauchy_increments(1001, 200_000).sum() <= cauchy_tail_bound(1000)
