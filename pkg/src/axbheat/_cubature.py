"""Globally adaptive degree-7/5 embedded cubature on boxes (Genz and Malik, 1980).

The integrand is evaluated in batches: every refinement round splits the
worst cells and evaluates all new points in a single call.
"""

from __future__ import annotations

import heapq
import itertools
import math

import numpy as np


def genz_malik_rule(n):
    """Nodes on [-1, 1]^n with degree-7 and degree-5 weights (same nodes).

    Node groups: centre, +-l2 e_i, +-l3 e_i, +-l4 e_i +-l4 e_j, (+-l5, ..., +-l5).
    Returns (nodes, w7, w5, axis_index) where axis_index[i] = indices of the
    nodes (+l2, -l2, +l3, -l3) on axis i, used for the fourth-difference split rule.
    """
    l2 = math.sqrt(9.0 / 70.0)
    l3 = l4 = math.sqrt(9.0 / 10.0)
    l5 = math.sqrt(9.0 / 19.0)
    p = 2.0**n
    w = (p * (12824 - 9120 * n + 400 * n * n) / 19683, p * 980 / 6561, p * (1820 - 400 * n) / 19683,
         p * 200 / 19683, 6859 / 19683)
    v = (p * (729 - 950 * n + 50 * n * n) / 729, p * 245 / 486, p * (265 - 100 * n) / 1458, p * 25 / 729, 0.0)
    nodes, g = [np.zeros(n)], [0]
    axis_index = []
    for i in range(n):
        idx = []
        for lam, grp in ((l2, 1), (l3, 2)):
            for s in (1.0, -1.0):
                e = np.zeros(n)
                e[i] = s * lam
                idx.append(len(nodes))
                nodes.append(e)
                g.append(grp)
        axis_index.append(idx)
    for i, j in itertools.combinations(range(n), 2):
        for si, sj in itertools.product((1.0, -1.0), repeat=2):
            e = np.zeros(n)
            e[i], e[j] = si * l4, sj * l4
            nodes.append(e)
            g.append(3)
    for signs in itertools.product((1.0, -1.0), repeat=n):
        nodes.append(l5 * np.array(signs))
        g.append(4)
    g = np.array(g)
    return np.array(nodes), np.array(w)[g], np.array(v)[g], np.array(axis_index), (l2 / l3) ** 2


class AdaptiveCubature:
    """Adaptive integration of F(points in [0,1]^n, region ids) over a list of unit cells.

    F is vectorised: F(P, R) with P of shape (m, n) and R of shape (m,) returns (m,) values.
    """

    def __init__(self, F, n, regions, batch=32):
        self.F = F
        self.n = n
        self.nodes, self.w7, self.w5, self.axis_index, self.ratio = genz_malik_rule(n)
        self.batch = batch
        self.heap = []
        self.counter = itertools.count()
        self.evals = 0
        self.frozen = []
        self._push([(np.zeros(n), np.ones(n), r) for r in regions])

    def _push(self, cells):
        if not cells:
            return
        m = len(self.nodes)
        centres = np.array([0.5 * (lo + hi) for lo, hi, _ in cells])
        halfw = np.array([0.5 * (hi - lo) for lo, hi, _ in cells])
        pts = centres[:, None, :] + halfw[:, None, :] * self.nodes[None, :, :]
        rid = np.repeat(np.array([r for _, _, r in cells]), m)
        vals = np.asarray(self.F(pts.reshape(-1, self.n), rid), dtype=float).reshape(len(cells), m)
        self.evals += vals.size
        vol = np.prod(halfw, axis=1)
        i7 = vals @ self.w7 * vol
        i5 = vals @ self.w5 * vol
        err = np.abs(i7 - i5)
        f0 = vals[:, 0:1]
        ai = self.axis_index
        d4 = np.abs(vals[:, ai[:, 0]] + vals[:, ai[:, 1]] - 2 * f0
                    - self.ratio * (vals[:, ai[:, 2]] + vals[:, ai[:, 3]] - 2 * f0))
        for k, (lo, hi, r) in enumerate(cells):
            # ties in the difference go to the widest axis
            score = d4[k] + 1e-14 * (hi - lo)
            axis = int(np.argmax(score))
            heapq.heappush(self.heap, (-float(err[k]), next(self.counter), lo, hi, r, float(i7[k]), axis))

    def totals(self):
        val = math.fsum(h[5] for h in self.heap) + math.fsum(v for v, _ in self.frozen)
        err = math.fsum(-h[0] for h in self.heap) + math.fsum(e for _, e in self.frozen)
        return val, err

    def run(self, rel_tol, abs_tol, max_evals, min_width=1e-9):
        """Refine until err <= max(abs_tol, rel_tol |value|) or the budget is spent.
        Returns (value, error, converged)."""
        val, err = self.totals()
        while self.heap and err > max(abs_tol, rel_tol * abs(val)) and self.evals < max_evals:
            split = []
            while self.heap and len(split) < self.batch:
                h = heapq.heappop(self.heap)
                lo, hi, r, axis = h[2], h[3], h[4], h[6]
                if hi[axis] - lo[axis] < min_width:
                    self.frozen.append((h[5], -h[0]))
                    continue
                mid = 0.5 * (lo[axis] + hi[axis])
                h1 = hi.copy()
                h1[axis] = mid
                l2 = lo.copy()
                l2[axis] = mid
                split += [(lo, h1, r), (l2, hi, r)]
            self._push(split)
            val, err = self.totals()
        return val, err, err <= max(abs_tol, rel_tol * abs(val))

    def cells(self):
        return [(h[2], h[3], h[4], h[5], -h[0]) for h in self.heap]
