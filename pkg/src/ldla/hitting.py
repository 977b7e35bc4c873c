"""Harmonic measure from infinity on a finite set, via the potential kernel.

For A = {a_1..a_m} the weights z_i = H_A(inf, a_i) and the constant kappa
solve the bordered linear system

    kappa + sum_i z_i a(a_k - a_i) = 0   for every a_k in A,
    sum_i z_i = 1,

and the far-start Green function is g_A(inf, x) = kappa + sum_i z_i a(x-a_i).
The system matrix is symmetric; its inverse is kept so that adding one point
is a quadratic-cost bordered update (full re-solve forced periodically to cap
floating-point drift).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .potential import PotentialKernel

RESOLVE_EVERY_DEFAULT = 64
RESIDUAL_TOL = 1e-8
HM_SUM_TOL = 1e-9


class HittingSolveError(RuntimeError):
    pass


@dataclass
class HittingSystem:
    """Solved hitting-from-infinity data for one aggregate.

    Owned by a single run; matrix storage is in insertion order with the
    normalization border at index 0.
    """

    points: np.ndarray           # sorted
    pts_mat: np.ndarray          # insertion (matrix) order
    hm_infinity: np.ndarray      # H_A(inf, .) in matrix order
    kappa: float
    inverse_cache: np.ndarray    # inverse of the bordered matrix
    kernel_rows: np.ndarray      # a(p_i - p_j) in matrix order (grows in place)
    staleness_counter: int = 0
    resolve_every: int = RESOLVE_EVERY_DEFAULT
    n_fresh_solves: int = field(default=1)

    @property
    def size(self):
        return len(self.pts_mat)

    def hm_sorted(self):
        """H_A(inf, .) aligned with the sorted points array."""
        order = np.argsort(self.pts_mat, kind="stable")
        return self.pts_mat[order], self.hm_infinity[order]

    def contains(self, x):
        i = np.searchsorted(self.points, x)
        return i < len(self.points) and self.points[i] == x

    def g_infinity(self, kernel: PotentialKernel, x):
        """g_A(inf, x) = kappa + sum_i H(inf,i) a(x - i), vectorized over x."""
        scalar = np.isscalar(x) or np.ndim(x) == 0
        x = np.atleast_1d(np.asarray(x, dtype=np.int64))
        diffs = np.abs(x[:, None] - self.pts_mat[None, :])
        vals = self.kappa + kernel.eval_a(diffs) @ self.hm_infinity
        if np.any(vals < -1e-8 * max(1.0, abs(self.kappa))):
            raise HittingSolveError(
                "negative g_infinity: kernel/solve inconsistency "
                f"(min={float(np.min(vals))!r})")
        out = np.maximum(vals, 0.0)
        return float(out[0]) if scalar else out

    def residual(self):
        """Max violation of the defining constraint rows."""
        m = self.size
        r_rows = self.kappa + self.kernel_rows[:m, :m] @ self.hm_infinity
        return float(np.max(np.abs(r_rows))), abs(float(self.hm_infinity.sum()) - 1.0)


def _bordered_matrix(kernel_rows, m):
    M = np.empty((m + 1, m + 1))
    M[0, 0] = 0.0
    M[0, 1:] = 1.0
    M[1:, 0] = 1.0
    M[1:, 1:] = kernel_rows[:m, :m]
    return M


def _fresh_inverse(kernel_rows, m):
    M = _bordered_matrix(kernel_rows, m)
    try:
        Minv = np.linalg.inv(M)
    except np.linalg.LinAlgError as e:
        raise HittingSolveError(f"singular hitting system at size {m}: {e}") from e
    return Minv


def _grow_rows(kernel, rows, pts_mat, capacity_hint=0):
    """Pairwise kernel matrix buffer, grown geometrically."""
    m = len(pts_mat)
    cap = max(m, capacity_hint)
    if rows is None or rows.shape[0] < cap:
        new_cap = max(16, int(1.5 * cap) + 8)
        new = np.empty((new_cap, new_cap))
        if rows is not None:
            old = rows.shape[0]
            new[:old, :old] = rows
        rows = new
    return rows


def solve_hitting_from_infinity(kernel: PotentialKernel, A,
                                resolve_every=RESOLVE_EVERY_DEFAULT) -> HittingSystem:
    """Fresh dense solve for the set A (iterable of distinct integers)."""
    pts = np.asarray(sorted(set(int(a) for a in A)), dtype=np.int64)
    if len(pts) == 0:
        raise HittingSolveError("empty aggregate")
    m = len(pts)
    rows = _grow_rows(kernel, None, pts)
    rows[:m, :m] = kernel.eval_a(np.abs(pts[:, None] - pts[None, :]))
    Minv = _fresh_inverse(rows, m)
    u = Minv[:, 0]
    system = HittingSystem(points=pts, pts_mat=pts.copy(),
                           hm_infinity=u[1:].copy(), kappa=float(u[0]),
                           inverse_cache=Minv, kernel_rows=rows,
                           staleness_counter=0, resolve_every=resolve_every)
    _check_residual(system)
    return system


def _check_residual(system):
    r_row, r_sum = system.residual()
    if r_row > RESIDUAL_TOL * max(1.0, abs(system.kappa)) or r_sum > HM_SUM_TOL:
        raise HittingSolveError(
            f"solve residual too large: rows={r_row!r} sum={r_sum!r} "
            f"points={system.pts_mat.tolist()[:20]}...")


def extend_hitting(system: HittingSystem, kernel: PotentialKernel,
                   x_new: int) -> HittingSystem:
    """Add one point by a bordered-inverse update (quadratic cost).

    Falls back to a fresh solve on conditioning trouble and forces one every
    ``resolve_every`` insertions; mutates and returns ``system``.
    """
    x_new = int(x_new)
    if system.contains(x_new):
        raise HittingSolveError(f"point {x_new} already in the aggregate")
    m = system.size
    rows = _grow_rows(kernel, system.kernel_rows, system.pts_mat, m + 1)
    new_col = kernel.eval_a(np.abs(system.pts_mat - x_new))
    rows[m, :m] = new_col
    rows[:m, m] = new_col
    rows[m, m] = 0.0
    system.kernel_rows = rows
    system.pts_mat = np.append(system.pts_mat, x_new)
    system.points = np.sort(system.pts_mat)

    force = system.staleness_counter + 1 >= system.resolve_every
    if not force:
        Minv = system.inverse_cache
        v = np.empty(m + 1)
        v[0] = 1.0
        v[1:] = new_col
        w = Minv @ v
        s = 0.0 - float(v @ w)
        ok = abs(s) > 1e-12 * max(1.0, float(np.abs(new_col).max()))
        if ok:
            grown = np.empty((m + 2, m + 2))
            grown[:m + 1, :m + 1] = Minv + np.outer(w, w) / s
            grown[:m + 1, m + 1] = -w / s
            grown[m + 1, :m + 1] = -w / s
            grown[m + 1, m + 1] = 1.0 / s
            u = grown[:, 0]
            system.inverse_cache = grown
            system.kappa = float(u[0])
            system.hm_infinity = u[1:].copy()
            system.staleness_counter += 1
            r_row, r_sum = system.residual()
            if (r_row <= RESIDUAL_TOL * max(1.0, abs(system.kappa))
                    and r_sum <= HM_SUM_TOL):
                return system
        # conditioning failure: fall through to fresh solve

    Minv = _fresh_inverse(system.kernel_rows, m + 1)
    u = Minv[:, 0]
    system.inverse_cache = Minv
    system.kappa = float(u[0])
    system.hm_infinity = u[1:].copy()
    system.staleness_counter = 0
    system.n_fresh_solves += 1
    _check_residual(system)
    return system


def two_point_escape(kernel: PotentialKernel, d: int) -> float:
    """P_x(T_y < T_x) for |x - y| = d, equal to 1/(2 a(d))."""
    d = int(d)
    if d < 1:
        raise ValueError("d must be >= 1")
    return 1.0 / (2.0 * kernel.eval_a(d))
