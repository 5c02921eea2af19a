import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate as sp_integrate

from axbheat._cubature import AdaptiveCubature, genz_malik_rule
from axbheat.group import GroupElement, MeasureKind
from axbheat.kernels import HEAT, POISSON, kernel_arrays
from axbheat.maximal import _axis_segments, _graded, _power_graded
from axbheat.numerics import (
    Certificate,
    QuadratureSpec,
    ToleranceNotMet,
    adaptive_gl,
    gauss_legendre,
    pairwise_sum,
)
from axbheat.quadrature import (
    BoxRegion,
    StepFunction,
    convolve,
    convolve_many,
    integrate,
    kernel_sup,
    outside_ball_mass,
)


@given(st.integers(2, 12), st.data())
def test_gauss_legendre_exact_for_polynomials(order, data):
    deg = data.draw(st.integers(0, 2 * order - 1))
    x, w = gauss_legendre(order)
    assert math.isclose(float(w @ x**deg), 1.0 / (deg + 1), rel_tol=1e-12)


@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), max_size=200))
def test_pairwise_sum_accuracy(vals):
    assert abs(pairwise_sum(vals) - math.fsum(vals)) <= 1e-9 * max(1.0, sum(abs(v) for v in vals))


def test_adaptive_gl_closed_forms():
    v, e, ok = adaptive_gl(np.sin, 0.0, math.pi, QuadratureSpec(rel_tol=1e-13))
    assert ok and abs(v - 2.0) <= 1e-12
    v, e, ok = adaptive_gl(np.abs, -1.0, 2.0, QuadratureSpec(rel_tol=1e-13), breakpoints=(0.0,))
    assert ok and abs(v - 2.5) <= 1e-13
    v, e, ok = adaptive_gl(lambda x: x**-0.5, 0.0, 1.0, QuadratureSpec(rel_tol=1e-10, max_subdivisions=60))
    assert ok and abs(v - 2.0) <= max(10 * e, 1e-8)


def test_adaptive_gl_reports_failure():
    with pytest.raises(ToleranceNotMet):
        adaptive_gl(lambda x: np.sign(x - 0.3), 0.0, 1.0, QuadratureSpec(rel_tol=1e-15, max_subdivisions=2))


def test_quadrature_spec_validation():
    with pytest.raises(ValueError):
        QuadratureSpec(order=1)
    with pytest.raises(ValueError):
        QuadratureSpec(rel_tol=0.0)
    with pytest.raises(ValueError):
        Certificate(1.0, float("nan"))


def test_integrate_polynomial_both_measures():
    box = BoxRegion(-1.0, 2.0, 0.0, 1.0, 0.5, 3.0)

    def f(x1, x2, a):
        return x1**2 * x2 * a

    # right: int x1^2 dx1 * int x2 dx2 * int a da/a
    right = 3.0 * 0.5 * 2.5
    # left: int a * a^-3 da = 1/alo - 1/ahi
    left = 3.0 * 0.5 * (1 / 0.5 - 1 / 3.0)
    for kind, want in ((MeasureKind.RIGHT, right), (MeasureKind.LEFT, left)):
        c = integrate(f, box, kind, QuadratureSpec(rel_tol=1e-12))
        assert abs(c.value - want) <= 1e-11 * want


def test_box_measures():
    b = BoxRegion.from_u(0, 2, 0, 3, -1, 1)
    assert math.isclose(b.measure, 12.0)
    assert math.isclose(b.left_measure(), 6 * 0.5 * (math.e**2 - math.e**-2))
    z = GroupElement(1.0, -2.0, 4.0)
    assert math.isclose(b.translate(z).left_measure(), b.left_measure(), rel_tol=1e-14)
    assert math.isclose(b.translate(z).measure, 16 * b.measure, rel_tol=1e-14)
    with pytest.raises(ValueError):
        BoxRegion(1, 0, 0, 1, 1, 2)


def test_step_function_algebra():
    a = BoxRegion.from_u(0, 1, 0, 1, 0, 1)
    b = BoxRegion.from_u(1, 2, 0, 1, 0, 1)
    f = StepFunction([(a, 2.0), (b, -1.0)])
    assert f.integral() == 1.0 and f.l1_norm() == 3.0 and f.sup_norm == 2.0
    g = f - f
    assert all(c == 0 for c in g.normalized()[0].values())
    assert f.evaluate(0.5, 0.5, 1.5) == 2.0 and f.evaluate(1.5, 0.5, 1.5) == -1.0
    assert f.evaluate(5.0, 0.5, 1.5) == 0.0


@pytest.mark.parametrize("n", [2, 3, 4])
def test_genz_malik_exactness(n):
    nodes, w7, w5, _, _ = genz_malik_rule(n)
    for exps in itertools.product(range(8), repeat=n):
        deg = sum(exps)
        if deg > 7:
            continue
        exact = math.prod(0.0 if k % 2 else 2.0 / (k + 1) for k in exps)
        mono = np.prod(nodes ** np.array(exps), axis=1)
        assert abs(mono @ w7 - exact) <= 1e-12
        if deg <= 5:
            assert abs(mono @ w5 - exact) <= 1e-12


def test_adaptive_cubature_smooth_and_kinked():
    cub = AdaptiveCubature(lambda P, R: np.exp(P.sum(axis=1)), 3, [0])
    v, e, ok = cub.run(1e-10, 1e-14, 200_000)
    assert ok and abs(v - (math.e - 1) ** 3) <= 1e-9
    cub = AdaptiveCubature(lambda P, R: np.abs(P[:, 0] - 0.3) * (R + 1), 2, [0, 1])
    v, e, ok = cub.run(1e-6, 1e-14, 200_000)
    want = 3 * (0.3**2 + 0.7**2) / 2
    assert ok and abs(v - want) <= 1e-5


def test_outside_ball_mass_total_is_one():
    for t in (0.3, 1.0, 5.0):
        assert math.isclose(outside_ball_mass(HEAT, t, 0.0), 1.0, rel_tol=1e-13)
        assert math.isclose(outside_ball_mass(POISSON, t, 0.0), 1.0, rel_tol=1e-13)


@pytest.mark.parametrize("R", [0.5, 3.0, 12.0])
def test_outside_ball_mass_against_scipy(R):
    for spec in (HEAT, POISSON):
        t = 1.3
        if spec is HEAT:
            fr = lambda r: r * r * math.exp(-r * r / (4 * t)) * t**-1.5
        else:
            fr = lambda r: t * r * r / (t * t + r * r) ** 2
        val, _ = sp_integrate.quad(fr, R, math.inf, epsabs=0, epsrel=1e-12)
        assert math.isclose(outside_ball_mass(spec, t, R), 4 * math.pi * spec.c0 * val, rel_tol=1e-9)


def test_kernel_sup_bounds_samples():
    rng = np.random.default_rng(3)
    for spec in (HEAT, POISSON):
        for t in (0.2, 2.0):
            s = kernel_sup(spec, t)
            x1, x2 = rng.normal(0, 2, (2, 5000))
            a = np.exp(rng.normal(0, 2, 5000))
            assert np.all(kernel_arrays(spec, t, x1, x2, a) <= s)


@pytest.mark.parametrize("t", [0.05, 1.0, 20.0])
def test_convolution_engine_against_tensor_quadrature(t):
    box = BoxRegion.from_u(-0.7, 0.4, -0.2, 0.9, -0.5, 0.6)
    f = StepFunction([(box, 1.0)])
    x = GroupElement(0.9, -0.3, math.exp(0.4))

    def g(y1, y2, b):
        # delta(x) p_t(x^{-1} y)
        return x.a**-2 * kernel_arrays(HEAT, t, (y1 - x.x1) / x.a, (y2 - x.x2) / x.a, b / x.a)

    want = integrate(g, box, spec=QuadratureSpec(rel_tol=1e-9, max_subdivisions=20))
    got = convolve(f, HEAT, t, x, QuadratureSpec(rel_tol=1e-10))
    assert abs(got - want.value) <= 1e-7 * abs(want.value) + 10 * want.error


@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2), st.floats(-3, 3))
@settings(max_examples=40)
def test_convolution_linear_and_translation_covariant(z1, z2, w, lt):
    f = StepFunction([(BoxRegion.from_u(0, 1, 0, 1, 0, 1), 1.0), (BoxRegion.from_u(1, 2, 0, 1, 0, 1), -0.5)])
    c = GroupElement(z1, z2, math.exp(w))
    x = GroupElement(0.3, 0.1, 1.2)
    ts = [math.exp(lt)]
    q = QuadratureSpec(rel_tol=1e-11)
    v = convolve_many(f, HEAT, ts, x, q)[0][0]
    # (f o c^{-1}) * p_t (c x) = f * p_t (x): delta(c) cancels the scaling of rho
    v2 = convolve_many(f.left_translate(c), HEAT, ts, c * x, q)[0][0]
    assert abs(v - v2) <= 1e-8 * abs(v) + 1e-12
    v3 = convolve_many(f.scaled(-3.0), HEAT, ts, x, q)[0][0]
    assert abs(v3 + 3 * v) <= 1e-8 * abs(v) + 1e-12


@given(st.sampled_from([-1, 0, 1, 2]), st.floats(0.01, 10.0), st.floats(-5, 5), st.floats(0.01, 20))
def test_graded_maps_cover_the_segment(mode, h, lo, span):
    hi = lo + span
    eta = np.linspace(0, 1, 4001)
    for x, jac in (_graded(eta, lo, hi, mode, h), _power_graded(eta, lo, hi, mode, 3.0)):
        assert abs(x[0] - lo) <= 1e-9 * (1 + abs(lo)) or mode == 2
        assert np.all(np.diff(x) >= -1e-12 * span) or mode == 2
        assert x.min() >= lo and x.max() <= hi
    # the jacobian integrates to the length
    x, w = gauss_legendre(20)
    edges = np.linspace(0, 1, 129)
    for fn, arg in ((_graded, h), (_power_graded, 3.0)):
        tot = 0.0
        for e0, e1 in zip(edges, edges[1:]):
            _, j = fn(e0 + (e1 - e0) * x, lo, hi, mode, arg)
            tot += (e1 - e0) * float(w @ j)
        assert math.isclose(tot, span, rel_tol=1e-6)


@given(st.floats(-10, 0), st.floats(0.1, 10), st.lists(st.floats(-12, 12), max_size=6), st.booleans())
def test_axis_segments_partition(lo, span, faces, merge):
    hi = lo + span
    segs = _axis_segments(lo, hi, faces, merge)
    assert segs[0][0] == lo and segs[-1][1] == hi
    for (a, b, _), (c, d, _) in zip(segs, segs[1:]):
        assert b == c
    assert all(a < b for a, b, _ in segs)
