"""Compiled core: kernel mass of coordinate boxes, f * p_t and sup over t.

For a box B and a point x, (chi_B * p_t)(x) is the p_t-mass of x^{-1}B, again a
box in (z1, z2, u).  Writing z in polar form around the z-origin, the kernel
depends on (u, rho) only:

    sinh^2(r/2) = sinh^2(u/2) + rho^2 e^{-u} / 4,

so the angular integral is the exact arc length Theta(rho) of the circle of
radius rho inside the z-rectangle.  What remains is a 2D integral over
(u, rho), done by adaptive Gauss-Legendre on panels, vectorised over a grid
of t values.  When the z-origin lies inside the rectangle and the u-range
is near 0 the complement form is used: full-plane marginal in closed form,
minus the outside-of-rectangle part, minus the closed-form tail beyond the
farthest corner.
"""

import math

import numpy as np
from numba import njit

HEAT = 0
POISSON = 1
TWO_PI = 2.0 * math.pi
HALF_PI = 0.5 * math.pi
SQRT_PI = math.sqrt(math.pi)


@njit(cache=True)
def _quadrant(a, b, rho):
    # angular measure of {phi : rho cos(phi) >= a, rho sin(phi) >= b}
    ca = a / rho
    cb = b / rho
    if ca >= 1.0 or cb >= 1.0:
        return 0.0
    h1 = math.pi if ca <= -1.0 else math.acos(ca)
    h2 = math.pi if cb <= -1.0 else math.acos(cb)
    if h1 >= math.pi:
        return 2.0 * h2
    if h2 >= math.pi:
        return 2.0 * h1
    total = 0.0
    for k in range(-1, 2):
        lo = max(-h1, HALF_PI - h2 + TWO_PI * k)
        hi = min(h1, HALF_PI + h2 + TWO_PI * k)
        if hi > lo:
            total += hi - lo
    return total


@njit(cache=True)
def theta_rect(a1, b1, a2, b2, rho):
    """Arc length of the circle |z| = rho inside [a1, b1] x [a2, b2]."""
    if rho <= 0.0:
        rho = 1e-300
    v = _quadrant(a1, a2, rho) - _quadrant(b1, a2, rho) - _quadrant(a1, b2, rho) + _quadrant(b1, b2, rho)
    if v < 0.0:
        return 0.0
    if v > TWO_PI:
        return TWO_PI
    return v


@njit(cache=True)
def radius_of(u, rho):
    s2 = math.sinh(0.5 * u) ** 2 + 0.25 * rho * rho * math.exp(-u)
    return 2.0 * math.asinh(math.sqrt(s2)), s2


@njit(cache=True)
def r_over_sinh(r, s2):
    if r < 1e-4:
        return 1.0 - r * r / 6.0
    # sinh r = 2 sinh(r/2) cosh(r/2)
    return r / (2.0 * math.sqrt(s2 * (1.0 + s2)))


@njit(cache=True)
def _prof(kind, r, tq, tl, t):
    if kind == HEAT:
        return math.exp(-r * r * tq - 1.5 * tl)
    d = t * t + r * r
    return t / (d * d)


@njit(cache=True)
def _tail_prof(kind, r, tq, tl, t):
    # in-plane integral of e^{-u} (r/sinh r) profile over |z| > rho, divided by c0
    if kind == HEAT:
        return 4.0 * math.pi * math.exp(-r * r * tq - 0.5 * tl)
    return math.pi * t / (t * t + r * r)


@njit(cache=True)
def _marginal(kind, t, lo, hi):
    # integral over u in [lo, hi] of the full-plane marginal, divided by c0
    if kind == HEAT:
        s = 2.0 * math.sqrt(t)
        if lo >= 0.0:
            v = math.erfc(lo / s) - math.erfc(hi / s)
        elif hi <= 0.0:
            v = math.erfc(-hi / s) - math.erfc(-lo / s)
        else:
            v = math.erf(hi / s) - math.erf(lo / s)
        return 4.0 * math.pi * SQRT_PI * v
    return math.pi * (math.atan(hi / t) - math.atan(lo / t))


@njit(cache=True)
def box_distance(a1, b1, a2, b2, ulo, uhi):
    """Distance from e to the box [a1,b1]x[a2,b2]x[e^ulo, e^uhi] (in z, u coordinates)."""
    dx = a1 if a1 > 0.0 else (-b1 if b1 < 0.0 else 0.0)
    dy = a2 if a2 > 0.0 else (-b2 if b2 < 0.0 else 0.0)
    rho = math.sqrt(dx * dx + dy * dy)
    us = 0.5 * math.log1p(rho * rho)
    if us < ulo:
        us = ulo
    elif us > uhi:
        us = uhi
    r, _ = radius_of(us, rho)
    return r


@njit(cache=True)
def _grow(buf, n_need):
    if n_need <= buf.shape[0]:
        return buf
    new = np.empty(max(2 * buf.shape[0], n_need), dtype=buf.dtype)
    new[: buf.shape[0]] = buf
    return new


@njit(cache=True)
def _panel_nodes(u0, u1, s0, s1, p, q, comp, rect, pref, gx, gw, out_r, out_w):
    # nodes of one (u, sigma) panel; rho = p + (q - p) sin^2(pi sigma / 2)
    n = gx.shape[0]
    du = u1 - u0
    ds = s1 - s0
    k = 0
    for i in range(n):
        u = u0 + du * gx[i]
        eu = math.exp(-u)
        wu = gw[i] * du
        for j in range(n):
            sg = s0 + ds * gx[j]
            sn = math.sin(HALF_PI * sg)
            rho = p + (q - p) * sn * sn
            jac = (q - p) * HALF_PI * math.sin(math.pi * sg)
            th = theta_rect(rect[0], rect[1], rect[2], rect[3], rho)
            if comp:
                th = TWO_PI - th
            r, s2 = radius_of(u, rho)
            out_r[k] = r
            out_w[k] = pref * wu * gw[j] * ds * jac * eu * th * rho * r_over_sinh(r, s2)
            k += 1
    return k


@njit(cache=True)
def _tail_nodes(u0, u1, q, pref, gx, gw, out_r, out_w):
    n = gx.shape[0]
    du = u1 - u0
    for i in range(n):
        u = u0 + du * gx[i]
        r, _ = radius_of(u, q)
        out_r[i] = r
        out_w[i] = pref * gw[i] * du
    return n


@njit(cache=True)
def _accumulate(kind, tail, nr, nw, m, tq, tl, ts, out):
    nt = ts.shape[0]
    for k in range(nt):
        out[k] = 0.0
    for i in range(m):
        r = nr[i]
        w = nw[i]
        if w == 0.0:
            continue
        for k in range(nt):
            if tail:
                out[k] += w * _tail_prof(kind, r, tq[k], tl[k], ts[k])
            else:
                out[k] += w * _prof(kind, r, tq[k], tl[k], ts[k])


@njit(cache=True)
def _adapt(kind, tail, geo, seg_p, seg_q, comp, rect, pref, gx, gw, tq, tl, ts,
           tol, max_depth, buf_r, buf_w, buf_t, nbuf, vals_out, err_out):
    """Adaptive integration over the initial panels in `geo` (rows u0,u1,s0,s1,seg).

    Accepted children contribute their nodes to the buffers.  Returns the
    (possibly reallocated) buffers and the new fill count.
    """
    nt = ts.shape[0]
    n = gx.shape[0]
    npan = n if tail else n * n
    nchild = 2 if tail else 4
    cap = geo.shape[0] + 3 * (max_depth + 2) * nchild
    st_g = np.empty((cap, 5))
    st_d = np.empty(cap, dtype=np.int64)
    st_v = np.empty((cap, nt))
    tmp_r = np.empty(npan)
    tmp_w = np.empty(npan)
    ch_r = np.empty((nchild, npan))
    ch_w = np.empty((nchild, npan))
    ch_v = np.empty((nchild, nt))
    ch_g = np.empty((nchild, 5))
    for k in range(nt):
        vals_out[k] = 0.0
        err_out[k] = 0.0
    top = 0
    for i in range(geo.shape[0]):
        si = int(geo[i, 4])
        if tail:
            m = _tail_nodes(geo[i, 0], geo[i, 1], seg_q[0], pref, gx, gw, tmp_r, tmp_w)
        else:
            m = _panel_nodes(geo[i, 0], geo[i, 1], geo[i, 2], geo[i, 3], seg_p[si], seg_q[si],
                             comp, rect, pref, gx, gw, tmp_r, tmp_w)
        _accumulate(kind, tail, tmp_r, tmp_w, m, tq, tl, ts, st_v[top])
        for c in range(5):
            st_g[top, c] = geo[i, c]
        st_d[top] = 0
        top += 1
    while top > 0:
        top -= 1
        g0 = st_g[top, 0]
        g1 = st_g[top, 1]
        g2 = st_g[top, 2]
        g3 = st_g[top, 3]
        si = int(st_g[top, 4])
        depth = st_d[top]
        um = 0.5 * (g0 + g1)
        sm = 0.5 * (g2 + g3)
        if tail:
            ch_g[0, 0] = g0; ch_g[0, 1] = um
            ch_g[1, 0] = um; ch_g[1, 1] = g1
            for c in range(2):
                ch_g[c, 2] = g2; ch_g[c, 3] = g3; ch_g[c, 4] = si
        else:
            c = 0
            for iu in range(2):
                for js in range(2):
                    ch_g[c, 0] = g0 if iu == 0 else um
                    ch_g[c, 1] = um if iu == 0 else g1
                    ch_g[c, 2] = g2 if js == 0 else sm
                    ch_g[c, 3] = sm if js == 0 else g3
                    ch_g[c, 4] = si
                    c += 1
        for c in range(nchild):
            if tail:
                m = _tail_nodes(ch_g[c, 0], ch_g[c, 1], seg_q[0], pref, gx, gw, ch_r[c], ch_w[c])
            else:
                m = _panel_nodes(ch_g[c, 0], ch_g[c, 1], ch_g[c, 2], ch_g[c, 3], seg_p[si], seg_q[si],
                                 comp, rect, pref, gx, gw, ch_r[c], ch_w[c])
            _accumulate(kind, tail, ch_r[c], ch_w[c], m, tq, tl, ts, ch_v[c])
        err = 0.0
        for k in range(nt):
            s = 0.0
            for c in range(nchild):
                s += ch_v[c, k]
            e = abs(s - st_v[top, k])
            if e > err:
                err = e
        if err <= tol or depth >= max_depth or top + nchild > cap:
            for k in range(nt):
                s = 0.0
                for c in range(nchild):
                    s += ch_v[c, k]
                vals_out[k] += s
                err_out[k] += abs(s - st_v[top, k])
            buf_r = _grow(buf_r, nbuf + nchild * npan)
            buf_w = _grow(buf_w, nbuf + nchild * npan)
            buf_t = _grow(buf_t, nbuf + nchild * npan)
            for c in range(nchild):
                for i in range(npan):
                    buf_r[nbuf] = ch_r[c, i]
                    buf_w[nbuf] = ch_w[c, i]
                    buf_t[nbuf] = 1 if tail else 0
                    nbuf += 1
        else:
            for c in range(nchild):
                for j in range(5):
                    st_g[top, j] = ch_g[c, j]
                st_d[top] = depth + 1
                for k in range(nt):
                    st_v[top, k] = ch_v[c, k]
                top += 1
    return buf_r, buf_w, buf_t, nbuf


@njit(cache=True)
def _sorted_unique_inside(vals, lo, hi):
    v = np.sort(vals)
    out = np.empty(v.shape[0] + 2)
    out[0] = lo
    m = 1
    span = hi - lo
    for x in v:
        if x > out[m - 1] + 1e-12 * span and x < hi - 1e-12 * span:
            out[m] = x
            m += 1
    out[m] = hi
    return out[: m + 1]


@njit(cache=True)
def box_mass(kind, c0, coef, box, x1, x2, u, ts, gx, gw, rel_tol, abs_tol, max_depth,
             buf_r, buf_w, buf_t, nbuf, vals, errs):
    """coef * (chi_box * p_t)(x) for all t in ts; box = (x1lo,x1hi,x2lo,x2hi,ulo,uhi).

    Node data (scaled by coef) are appended to the buffers so the same value
    can be re-evaluated at other t.  Returns (buffers, nbuf, analytic_flag).
    The analytic part (complement mode) is included in vals; the caller
    re-adds it through `_marginal` when re-evaluating.
    """
    nt = ts.shape[0]
    a = math.exp(u)
    rect = np.empty(4)
    rect[0] = (box[0] - x1) / a
    rect[1] = (box[1] - x1) / a
    rect[2] = (box[2] - x2) / a
    rect[3] = (box[3] - x2) / a
    ulo = box[4] - u
    uhi = box[5] - u
    tq = np.empty(nt)
    tl = np.empty(nt)
    for k in range(nt):
        tq[k] = 0.25 / ts[k]
        tl[k] = math.log(ts[k])
    inside = rect[0] < 0.0 < rect[1] and rect[2] < 0.0 < rect[3]
    comp = inside and ulo < 1.0 and uhi > -1.0
    cn = np.empty(4)
    cn[0] = math.hypot(rect[0], rect[2])
    cn[1] = math.hypot(rect[1], rect[2])
    cn[2] = math.hypot(rect[0], rect[3])
    cn[3] = math.hypot(rect[1], rect[3])
    rho_max = max(max(cn[0], cn[1]), max(cn[2], cn[3]))
    if comp:
        rho_lo = min(min(-rect[0], rect[1]), min(-rect[2], rect[3]))
    else:
        dx = rect[0] if rect[0] > 0.0 else (-rect[1] if rect[1] < 0.0 else 0.0)
        dy = rect[2] if rect[2] > 0.0 else (-rect[3] if rect[3] < 0.0 else 0.0)
        rho_lo = math.sqrt(dx * dx + dy * dy)
    cand = np.empty(8)
    for i in range(4):
        cand[i] = abs(rect[i])
        cand[4 + i] = cn[i]
    rb = _sorted_unique_inside(cand, rho_lo, rho_max)
    nseg = rb.shape[0] - 1
    seg_p = rb[:-1].copy()
    seg_q = rb[1:].copy()
    # u breakpoints: ends, the minimiser of r along rho = rho_lo, and 0
    uc = np.empty(2)
    uc[0] = 0.5 * math.log1p(rho_lo * rho_lo)
    uc[1] = 0.0
    ub = _sorted_unique_inside(uc, ulo, uhi)
    nu = ub.shape[0] - 1
    geo = np.empty((nu * nseg, 5))
    k = 0
    for i in range(nu):
        for j in range(nseg):
            geo[k, 0] = ub[i]
            geo[k, 1] = ub[i + 1]
            geo[k, 2] = 0.0
            geo[k, 3] = 1.0
            geo[k, 4] = j
            k += 1
    sign = -1.0 if comp else 1.0
    pref = sign * coef * c0
    # reference magnitude from a coarse pass
    n = gx.shape[0]
    tmp_r = np.empty(n * n)
    tmp_w = np.empty(n * n)
    tmp_v = np.empty(nt)
    ref = np.zeros(nt)
    for i in range(geo.shape[0]):
        si = int(geo[i, 4])
        m = _panel_nodes(geo[i, 0], geo[i, 1], 0.0, 1.0, seg_p[si], seg_q[si], comp, rect, pref,
                         gx, gw, tmp_r, tmp_w)
        _accumulate(kind, False, tmp_r, tmp_w, m, tq, tl, ts, tmp_v)
        for kk in range(nt):
            ref[kk] += tmp_v[kk]
    tgeo = np.empty((nu, 5))
    for i in range(nu):
        tgeo[i, 0] = ub[i]
        tgeo[i, 1] = ub[i + 1]
        tgeo[i, 2] = 0.0
        tgeo[i, 3] = 1.0
        tgeo[i, 4] = 0
    qarr = np.empty(1)
    qarr[0] = rho_max
    if comp:
        for i in range(nu):
            m = _tail_nodes(ub[i], ub[i + 1], rho_max, pref, gx, gw, tmp_r, tmp_w)
            _accumulate(kind, True, tmp_r, tmp_w, m, tq, tl, ts, tmp_v)
            for kk in range(nt):
                ref[kk] += tmp_v[kk]
        for kk in range(nt):
            ref[kk] += coef * c0 * _marginal(kind, ts[kk], ulo, uhi)
    big = 0.0
    for kk in range(nt):
        if abs(ref[kk]) > big:
            big = abs(ref[kk])
    tol = max(abs_tol, rel_tol * big)
    v2 = np.empty(nt)
    e2 = np.empty(nt)
    buf_r, buf_w, buf_t, nbuf = _adapt(kind, False, geo, seg_p, seg_q, comp, rect, pref, gx, gw,
                                       tq, tl, ts, tol, max_depth, buf_r, buf_w, buf_t, nbuf, vals, errs)
    if comp:
        buf_r, buf_w, buf_t, nbuf = _adapt(kind, True, tgeo, seg_p, qarr, comp, rect, pref, gx, gw,
                                           tq, tl, ts, tol, max_depth, buf_r, buf_w, buf_t, nbuf, v2, e2)
        for kk in range(nt):
            vals[kk] += v2[kk] + coef * c0 * _marginal(kind, ts[kk], ulo, uhi)
            errs[kk] += e2[kk]
    return buf_r, buf_w, buf_t, nbuf, comp, ulo, uhi


@njit(cache=True)
def _eval_nodes(kind, t, buf_r, buf_w, buf_t, nbuf, an_c, an_lo, an_hi, nan):
    tq = 0.25 / t
    tl = math.log(t)
    s = 0.0
    for i in range(nbuf):
        if buf_t[i] == 0:
            s += buf_w[i] * _prof(kind, buf_r[i], tq, tl, t)
        else:
            s += buf_w[i] * _tail_prof(kind, buf_r[i], tq, tl, t)
    for i in range(nan):
        s += an_c[i] * _marginal(kind, t, an_lo[i], an_hi[i])
    return s


@njit(cache=True)
def support_distance(boxes, coefs, x1, x2, u):
    a = math.exp(u)
    d = np.inf
    for b in range(boxes.shape[0]):
        if coefs[b] == 0.0:
            continue
        bx = boxes[b]
        db = box_distance((bx[0] - x1) / a, (bx[1] - x1) / a, (bx[2] - x2) / a, (bx[3] - x2) / a,
                          bx[4] - u, bx[5] - u)
        if db < d:
            d = db
    return d


@njit(cache=True)
def convolve_point(kind, c0, boxes, coefs, x1, x2, u, ts, gx, gw, rel_tol, abs_tol, max_depth):
    """(f * p_t)(x) and error estimates for every t in ts."""
    nt = ts.shape[0]
    total = np.zeros(nt)
    err = np.zeros(nt)
    vals = np.empty(nt)
    errs = np.empty(nt)
    buf_r = np.empty(4096)
    buf_w = np.empty(4096)
    buf_t = np.empty(4096, dtype=np.int8)
    nbuf = 0
    for b in range(boxes.shape[0]):
        if coefs[b] == 0.0:
            continue
        buf_r, buf_w, buf_t, nbuf, comp, lo, hi = box_mass(
            kind, c0, coefs[b], boxes[b], x1, x2, u, ts, gx, gw, rel_tol, abs_tol, max_depth,
            buf_r, buf_w, buf_t, 0, vals, errs)
        for k in range(nt):
            total[k] += vals[k]
            err[k] += errs[k]
    return total, err


@njit(cache=True)
def maximal_point(kind, c0, boxes, coefs, x1, x2, u, t_floor, t_factor, t_max, n_grid, n_golden,
                  gx, gw, rel_tol, abs_tol, max_depth):
    """sup_t |(f * p_t)(x)| over a log grid refined by golden section.

    Returns (value, argmax t, error estimate at the grid argmax).  Inside a box
    carrying the largest |coefficient| the value is that coefficient exactly
    (|f * p_t| <= sup|f| and f * p_t -> f as t -> 0); the argmax is then reported as 0.
    """
    cmax = 0.0
    for b in range(boxes.shape[0]):
        cmax = max(cmax, abs(coefs[b]))
    for b in range(boxes.shape[0]):
        bx = boxes[b]
        if (abs(coefs[b]) == cmax and bx[0] < x1 < bx[1] and bx[2] < x2 < bx[3]
                and bx[4] < u < bx[5]):
            return cmax, 0.0, 0.0
    d = support_distance(boxes, coefs, x1, x2, u)
    t_min = t_factor * max(t_floor, d * d)
    if t_min >= t_max:
        t_min = t_max * 1e-3
    ts = np.exp(np.linspace(math.log(t_min), math.log(t_max), n_grid))
    nt = n_grid
    total = np.zeros(nt)
    err = np.zeros(nt)
    vals = np.empty(nt)
    errs = np.empty(nt)
    buf_r = np.empty(8192)
    buf_w = np.empty(8192)
    buf_t = np.empty(8192, dtype=np.int8)
    nbuf = 0
    nb = boxes.shape[0]
    an_c = np.zeros(nb)
    an_lo = np.zeros(nb)
    an_hi = np.zeros(nb)
    nan = 0
    for b in range(nb):
        if coefs[b] == 0.0:
            continue
        buf_r, buf_w, buf_t, nbuf, comp, lo, hi = box_mass(
            kind, c0, coefs[b], boxes[b], x1, x2, u, ts, gx, gw, rel_tol, abs_tol, max_depth,
            buf_r, buf_w, buf_t, nbuf, vals, errs)
        if comp:
            an_c[nan] = coefs[b] * c0
            an_lo[nan] = lo
            an_hi[nan] = hi
            nan += 1
        for k in range(nt):
            total[k] += vals[k]
            err[k] += errs[k]
    kbest = 0
    best = -1.0
    for k in range(nt):
        if abs(total[k]) > best:
            best = abs(total[k])
            kbest = k
    tbest = ts[kbest]
    ebest = err[kbest]
    if n_golden > 0 and best > 0.0:
        lo = math.log(ts[max(kbest - 1, 0)])
        hi = math.log(ts[min(kbest + 1, nt - 1)])
        inv_phi = 0.6180339887498949
        c = hi - inv_phi * (hi - lo)
        dd = lo + inv_phi * (hi - lo)
        fc = abs(_eval_nodes(kind, math.exp(c), buf_r, buf_w, buf_t, nbuf, an_c, an_lo, an_hi, nan))
        fd = abs(_eval_nodes(kind, math.exp(dd), buf_r, buf_w, buf_t, nbuf, an_c, an_lo, an_hi, nan))
        for _ in range(n_golden):
            if fc > fd:
                hi = dd
                dd = c
                fd = fc
                c = hi - inv_phi * (hi - lo)
                fc = abs(_eval_nodes(kind, math.exp(c), buf_r, buf_w, buf_t, nbuf, an_c, an_lo, an_hi, nan))
            else:
                lo = c
                c = dd
                fc = fd
                dd = lo + inv_phi * (hi - lo)
                fd = abs(_eval_nodes(kind, math.exp(dd), buf_r, buf_w, buf_t, nbuf, an_c, an_lo, an_hi, nan))
        if fc > best:
            best = fc
            tbest = math.exp(c)
        if fd > best:
            best = fd
            tbest = math.exp(dd)
    return best, tbest, ebest


@njit(cache=True)
def maximal_batch(kind, c0, boxes, coefs, pts, t_floor, t_factor, t_max, n_grid, n_golden,
                  gx, gw, rel_tol, abs_tol, max_depth):
    """maximal_point over rows (x1, x2, u) of pts."""
    n = pts.shape[0]
    out = np.empty((n, 3))
    for i in range(n):
        v, t, e = maximal_point(kind, c0, boxes, coefs, pts[i, 0], pts[i, 1], pts[i, 2], t_floor,
                                t_factor, t_max, n_grid, n_golden, gx, gw, rel_tol, abs_tol, max_depth)
        out[i, 0] = v
        out[i, 1] = t
        out[i, 2] = e
    return out


@njit(cache=True)
def box_distance_batch(box, x1, x2, u):
    """d(x, B) for arrays of points x = (x1, x2, e^u) and one box (x1lo, x1hi, x2lo, x2hi, ulo, uhi)."""
    n = x1.shape[0]
    out = np.empty(n)
    for i in range(n):
        ia = math.exp(-u[i])
        out[i] = box_distance((box[0] - x1[i]) * ia, (box[1] - x1[i]) * ia, (box[2] - x2[i]) * ia,
                              (box[3] - x2[i]) * ia, box[4] - u[i], box[5] - u[i])
    return out
