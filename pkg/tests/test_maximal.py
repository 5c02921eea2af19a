import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from axbheat._cubature import AdaptiveCubature
from axbheat.group import GroupElement, distance
from axbheat.hardy import R0_BOX, make_fL, random_atom
from axbheat.kernels import HEAT, GradBoundFit, ball_stencil
from axbheat.maximal import (
    DivergenceWarning,
    RegionError,
    SupSearchSpec,
    _is_fL,
    _mirror_centre,
    fL_domain,
    fL_tail_bound,
    indicator_sup_bound,
    inner_ball_radius,
    maximal_at,
    maximal_l1,
    maximal_many,
    support_domain,
    support_hull,
)
from axbheat.numerics import QuadratureSpec
from axbheat.quadrature import BoxRegion, StepFunction, convolve_many

DIPOLE = StepFunction([(BoxRegion.from_u(-1, 0, -1, 1, -0.5, 0.5), 1.0), (BoxRegion.from_u(0, 1, -1, 1, -0.5, 0.5), -1.0)])


def brute_maximal(f, x, n=600):
    """max over a log grid in t of |f * p_t(x)|, through the single-point convolution engine."""
    ts = np.exp(np.linspace(math.log(1e-5), math.log(1e5), n))
    vals, _ = convolve_many(f, HEAT, ts, x, QuadratureSpec(rel_tol=1e-10))
    return float(np.max(np.abs(vals)))


@pytest.mark.parametrize("x", [GroupElement(0.3, 0.2, 1.0), GroupElement(2.5, -1.0, 0.5),
                               GroupElement(-4.0, 3.0, 6.0), GroupElement(0.05, 0.0, 1.3)])
def test_maximal_matches_brute_force(x):
    for f in (DIPOLE, StepFunction([(R0_BOX, 1.0)])):
        v, _ = maximal_at(f, x)
        b = brute_maximal(f, x)
        # the golden refinement can only improve on the grid
        assert v >= b * (1 - 1e-6)
        assert v <= b * (1 + 1e-3)


@given(st.floats(-6, 6), st.floats(-6, 6), st.floats(-2, 2))
@settings(max_examples=40)
def test_maximal_respects_mirror_symmetry(x1, x2, u):
    v = maximal_many(DIPOLE, [x1, -x1, x1], [x2, x2, -x2], [u, u, u])[0]
    assert np.allclose(v, v[0], rtol=1e-6, atol=1e-10)


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-2, 2))
@settings(max_examples=30)
def test_left_translation_invariance_of_maximal(z1, z2, w):
    c = GroupElement(z1, z2, math.exp(w))
    x = GroupElement(1.7, -0.4, 0.8)
    v = maximal_at(DIPOLE, x)[0]
    v2 = maximal_at(DIPOLE.left_translate(c), c * x)[0]
    assert math.isclose(v, v2, rel_tol=1e-6)


def test_indicator_bound_dominates():
    box = R0_BOX
    f = StepFunction([(box, 1.0)])
    for x in (GroupElement(6.0, 0.0, 1.0), GroupElement(0.0, 0.0, 30.0), GroupElement(3.0, 3.0, 0.05)):
        assert maximal_at(f, x)[0] <= indicator_sup_bound(x, box)
    with pytest.raises(RegionError):
        indicator_sup_bound(GroupElement(0.5, 0, 1), box)


def test_fl_tail_bound_guards():
    with pytest.raises(Exception):
        fL_tail_bound(math.e**3, GroupElement(1e4, 0, 1), GradBoundFit(1, 1, 1))
    fit = GradBoundFit(1, 1, 1, c_fl=1.0)
    with pytest.raises(RegionError):
        fL_tail_bound(math.e**3, GroupElement(1, 0, 1), fit)
    assert fL_tail_bound(math.e**3, GroupElement(1e6, 0, 1), fit) > 0


def test_sup_search_validation():
    with pytest.raises(ValueError):
        SupSearchSpec(grid=4)
    with pytest.raises(ValueError):
        SupSearchSpec(t_min=2, t_max=1)


def test_mirror_detection():
    rng = np.random.default_rng(5)
    for _ in range(20):
        A = random_atom(rng, float(rng.uniform(0.1, 5)))
        assert _mirror_centre(A.values, 0) is not None
        assert _mirror_centre(A.values, 1) is not None
    lopsided = StepFunction([(BoxRegion.from_u(0, 1, 0, 1, 0, 1), 1.0), (BoxRegion.from_u(1, 3, 0, 1, 0, 1), -0.5)])
    assert _mirror_centre(lopsided, 0) is None
    assert _mirror_centre(lopsided, 1) == 0.5


@pytest.mark.parametrize("power", [None, 4.0])
@pytest.mark.parametrize("symmetric", [True, False])
def test_domain_volume(power, symmetric):
    # the mapped domain, with its multiplicity, has the Lebesgue volume of the hull
    f = random_atom(np.random.default_rng(7), 1.0).values
    dom = support_domain(f, 3.0, power=power, symmetric=symmetric)
    tab = dom.arrays()

    def F(P, R):
        return dom.map(P, R, tab)[3]

    cub = AdaptiveCubature(F, 3, list(range(len(tab))))
    v, err, _ = cub.run(1e-10, 1e-12, 100_000)
    h = support_hull(f, 3.0)
    want = (h.x1hi - h.x1lo) * (h.x2hi - h.x2lo) * (h.uhi - h.ulo)
    assert abs(v - want) <= 3 * err + 1e-9 * want and err <= 1e-3 * want


def test_fl_domain_volume():
    L = math.e**3
    dom = fL_domain(L)
    tab = dom.arrays()
    cub = AdaptiveCubature(lambda P, R: dom.map(P, R, tab)[3], 3, list(range(len(tab))))
    v, err, _ = cub.run(1e-10, 1e-12, 100_000)
    b = dom.bounds()
    want = 4 * (b["x1"][1] - b["x1"][0]) * (b["x2"][1] - b["x2"][0]) * (b["u"][1] - b["u"][0])
    assert abs(v - want) <= 3 * err + 1e-9 * want and err <= 1e-3 * want


@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-1, 1))
def test_inner_ball_inside_box(c1, c2, cu):
    box = BoxRegion.from_u(-3, 3, -3, 3, -1.5, 1.5)
    c = GroupElement(c1, c2, math.exp(cu))
    R = inner_ball_radius(box, c)
    if R <= 0:
        return
    for y1, y2, w in ball_stencil(R):
        p = c * GroupElement(y1, y2, math.exp(w))
        assert box.x1lo - 1e-9 <= p.x1 <= box.x1hi + 1e-9
        assert box.x2lo - 1e-9 <= p.x2 <= box.x2hi + 1e-9
        assert box.ulo - 1e-9 <= p.u <= box.uhi + 1e-9
        assert distance(c, p) <= R * (1 + 1e-9)


def test_nonzero_integral_warns():
    f = StepFunction([(R0_BOX, 1.0 / R0_BOX.measure)])
    with pytest.warns(DivergenceWarning):
        rep = maximal_l1(f, s=SupSearchSpec(grid=16, refine=10), q=QuadratureSpec(rel_tol=1e-4), max_evals=400)
    assert rep.tail == 0.0 and rep.warnings


def test_maximal_l1_small_budget_is_sane():
    A = random_atom(np.random.default_rng(11), 1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error", DivergenceWarning)
        rep = maximal_l1(A.values, s=SupSearchSpec(grid=24, refine=20), q=QuadratureSpec(rel_tol=1e-5),
                         rel_tol=1e-2, max_evals=1500, power=4.0)
    assert rep.inner > 0 and rep.tail >= 0 and rep.inner_error >= 0
    # Mf >= |f| almost everywhere (t -> 0), and the domain contains the support
    assert rep.inner >= 0.95 * A.values.l1_norm()
    assert rep.evaluations <= 1500 + 32 * 2 * 33
    assert rep.domain["multiplicity"] == 4.0


def test_fl_is_recognised():
    L = math.e**2
    assert _is_fL(make_fL(L), L)
    assert not _is_fL(make_fL(L).scaled(2.0), L)
    assert not _is_fL(DIPOLE, L)
