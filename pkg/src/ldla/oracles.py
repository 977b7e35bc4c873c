"""Independent brute-force certification routes for the potential/gluing stack.

Nothing here may import the hitting solver or the kernel quadrature: these
oracles exist to check those modules from the outside.  They are allowed to
be slow.

The truncation scheme is bracket-style: walks leaving the finite state space
[-R, R] are routed to the best and to the worst outcome, so every bracket
provably contains the untruncated value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .steplaws import StepLaw


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True)
class Bracket:
    lo: float
    hi: float
    method: str

    def __post_init__(self):
        if self.lo > self.hi + 1e-15:
            raise OracleError(f"inverted bracket {self.lo} > {self.hi}")

    def contains(self, v, slack=0.0):
        return self.lo - slack <= v <= self.hi + slack

    @property
    def width(self):
        return self.hi - self.lo


def _pmf_matrix(law, src, dst):
    """Dense transition sub-matrix P[i, j] = pmf(dst_j - src_i)."""
    return law.pmf(np.subtract.outer(dst, src).T * -1)


def _is_bounded(law):
    return law.exact_tail(law.table_cutoff) == 0.0


def bracket_hitting_truncated(law: StepLaw, A, x: int, radius: int) -> Bracket:
    """Bracket for P_x(T_A < T_x) from two absorbing solves on [-R, R].

    Upper route sends all out-of-range mass to "hit A", lower route to
    "returned to x"; the truth lies in between.
    """
    A = sorted(set(int(a) for a in A))
    x = int(x)
    R = int(radius)
    if x in A:
        raise OracleError("x must lie outside A")
    if max(abs(x), max(abs(a) for a in A)) > R // 2:
        raise OracleError("A and x must fit inside [-R/2, R/2]")

    sites = np.arange(-R, R + 1)
    absorb = set(A) | {x}
    interior = np.array([s for s in sites if s not in absorb], dtype=np.int64)
    A_arr = np.array(A, dtype=np.int64)

    if _is_bounded(law):
        # sparse banded system for bounded-support laws
        cutoff = law.table_cutoff
        offsets = np.arange(-cutoff, cutoff + 1)
        probs = law.pmf(offsets)
        idx = {int(s): i for i, s in enumerate(interior)}
        n = len(interior)
        rows, cols, vals = [], [], []
        bA = np.zeros(n)
        q_out = np.zeros(n)
        for i, s in enumerate(interior):
            for off, pr in zip(offsets, probs):
                if pr == 0.0:
                    continue
                t = int(s + off)
                if abs(t) > R:
                    q_out[i] += pr
                elif t in idx:
                    rows.append(i)
                    cols.append(idx[t])
                    vals.append(pr)
                elif t in absorb and t != x:
                    bA[i] += pr
        P = scipy.sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
        I = scipy.sparse.identity(n, format="csr")
        u_lo = scipy.sparse.linalg.spsolve(I - P, bA)
        u_hi = scipy.sparse.linalg.spsolve(I - P, bA + q_out)
    else:
        P = _pmf_matrix(law, interior, interior)
        bA = law.pmf(np.subtract.outer(A_arr, interior)).sum(axis=0)
        inside_mass = P.sum(axis=1) + bA + law.pmf(x - interior)
        q_out = np.maximum(0.0, 1.0 - inside_mass)
        M = np.eye(len(interior)) - P
        lu, piv = scipy.linalg.lu_factor(M)
        u_lo = scipy.linalg.lu_solve((lu, piv), bA)
        u_hi = scipy.linalg.lu_solve((lu, piv), bA + q_out)

    # first step from x
    p_direct = float(law.pmf(A_arr - x).sum())
    p_step = law.pmf(interior - x)
    out_from_x = max(0.0, 1.0 - p_step.sum() - p_direct - float(law.pmf(0)))
    lo = p_direct + float(p_step @ u_lo)
    hi = p_direct + float(p_step @ u_hi) + out_from_x
    return Bracket(lo=min(lo, hi), hi=max(lo, hi), method=f"truncated_solve_R{R}")


@dataclass(frozen=True)
class McEstimate:
    estimate: float
    stderr: float
    reps: int
    note: str = ""
    truncation_bound: float = float("nan")


def mc_potential_kernel(law: StepLaw, n: int, t_max: int, reps: int,
                        rng=None) -> McEstimate:
    """Time-summation estimate of a(n): coupled counts of visits to 0 and n.

    Partial sums converge slowly (the truncation term decays like
    t_max^(-1/2) for finite-variance laws); the reported bound covers it.
    """
    n = int(n)
    if n == 0:
        return McEstimate(0.0, 0.0, reps, note="exact at n=0")
    rng = rng or np.random.default_rng()
    sampler = law.sampler()
    diffs = np.zeros(reps)
    chunk_t = 10_000
    pos = np.zeros(reps, dtype=np.int64)
    remaining = t_max
    # common random numbers: one path feeds both occupation counts
    while remaining > 0:
        t = min(chunk_t, remaining)
        steps = sampler.sample(rng, size=reps * t).reshape(reps, t)
        paths = pos[:, None] + np.cumsum(steps, axis=1)
        diffs += (paths == 0).sum(axis=1) - (paths == n).sum(axis=1)
        pos = paths[:, -1]
        remaining -= t
    # the t=0 term of the defining series contributes exactly 1
    est = 1.0 + float(diffs.mean())
    se = float(diffs.std(ddof=1) / np.sqrt(reps)) if reps > 1 else float("inf")
    if np.isfinite(law.sigma_sq):
        s2 = law.sigma_sq
        trunc = 1.5 * n * n / (s2 * np.sqrt(2 * np.pi * s2 * t_max))
        note = "finite-variance truncation bound included"
    else:
        trunc = float("nan")
        note = "heavy-tailed law: truncation bound not available"
    return McEstimate(est, se, reps, note=note, truncation_bound=trunc)


@dataclass
class GluingTable:
    """mu(x, a) on a window, built without the hitting-from-infinity solver."""

    xs: np.ndarray                 # window sites (excluding A)
    anchors: np.ndarray
    mu: np.ndarray                 # mu[i, j] = mu(xs[i], anchors[j])
    achieved_tol: float
    radius: int

    def total(self):
        return float(self.mu.sum())

    def mu_x(self):
        return self.mu.sum(axis=1)

    def as_dict(self):
        return {(int(x), int(a)): float(self.mu[i, j])
                for i, x in enumerate(self.xs) for j, a in enumerate(self.anchors)}


def _gluing_pass(law, A_arr, xs, R):
    """One truncated-Green pass at radius R.

    Returns the per-x estimate of P_inf(T_x<T_A)/P_x(T_A<T_x), with the
    far-launch factor conditioned on in-box resolution (paths that fall off
    the truncation edge before hitting A or x are removed from both sides of
    the ratio; the residual bias vanishes polynomially in R and is handled
    by Richardson extrapolation in the caller).
    """
    sites = np.arange(-R, R + 1)
    states = sites[~np.isin(sites, A_arr)]
    P = _pmf_matrix(law, states, states)
    pA = law.pmf(np.subtract.outer(A_arr, states)).sum(axis=0)
    lu, piv = scipy.linalg.lu_factor(np.eye(len(states)) - P)
    pos = {int(s): i for i, s in enumerate(states)}
    rhs = np.zeros((len(states), len(xs)))
    for j, x in enumerate(xs):
        rhs[pos[int(x)], j] = 1.0
    G = scipy.linalg.lu_solve((lu, piv), rhs)   # G[y, j] = visits to x_j pre T_A
    qA = scipy.linalg.lu_solve((lu, piv), pA)   # P_y(T_A < box exit)
    band_r = (states >= R // 2) & (states <= 3 * R // 4)
    band_l = (states <= -R // 2) & (states >= -3 * R // 4)
    out = np.empty(len(xs))
    for j, x in enumerate(xs):
        gxx = G[pos[int(x)], j]
        p1 = G[:, j] / gxx                       # P_y(T_x first, in box)
        pA_strict = np.maximum(qA - p1 * qA[pos[int(x)]], 0.0)
        ratio = p1 / np.maximum(p1 + pA_strict, 1e-300)
        p_inf = 0.5 * (ratio[band_r].mean() + ratio[band_l].mean())
        out[j] = p_inf * gxx                     # P_inf / P_escape
    return out


def _richardson(vals, radii, p_exp, log_mode):
    """Quadratic extrapolation to R=inf in t = R^-p (or 1/log R)."""
    t = 1.0 / np.log(radii) if log_mode else np.asarray(radii, dtype=float) ** -p_exp
    v = np.asarray(vals, dtype=float)
    quad = np.polyfit(t, v, 2)[-1]
    lin = np.polyfit(t[-2:], v[-2:], 1)[-1]
    return quad, abs(quad - lin)


def enumerate_gluing_small(law: StepLaw, A, window_radius: int,
                           tol: float, radius: int = None) -> GluingTable:
    """Full mu table on the hull +- window_radius, certified within tol.

    Built from eq-style ingredients only: truncated dense solves at three
    radii with far-launch averaging, extrapolated in the truncation radius.
    Never touches the hitting-from-infinity solver or the kernel quadrature.
    """
    A = sorted(set(int(a) for a in A))
    if max(A) - min(A) > 200:
        raise OracleError("enumerate_gluing_small needs diam(A) <= 200")
    R = radius or max(1600, 16 * window_radius)
    span = max(abs(min(A) - window_radius), abs(max(A) + window_radius))
    if span > R // 8:
        raise OracleError("window too wide for the truncation radius")
    A_arr = np.array(A, dtype=np.int64)
    window = range(min(A) - window_radius, max(A) + window_radius + 1)
    xs = np.array([x for x in window if x not in set(A)], dtype=np.int64)

    radii = np.array([R // 4, R // 2, R])
    passes = np.array([_gluing_pass(law, A_arr, xs, r) for r in radii])
    if law.kind == "z2_restricted" or (law.kind == "power_law" and law.alpha <= 1.0):
        log_mode, p_exp = True, 1.0
    else:
        log_mode = False
        p_exp = min(law.alpha - 1.0, 1.0) if np.isfinite(law.alpha) else 1.0
    g_est = np.empty(len(xs))
    g_err = np.empty(len(xs))
    for j in range(len(xs)):
        g_est[j], g_err[j] = _richardson(passes[:, j], radii, p_exp, log_mode)

    pmf_block = law.pmf(np.subtract.outer(A_arr, xs)).T   # [i, j] = pmf(a_j - x_i)
    mu = pmf_block * g_est[:, None]
    achieved = float(np.max(pmf_block * (2.0 * g_err[:, None]))) + 1e-12
    if achieved > tol:
        raise OracleError(
            f"requested tol {tol} not achieved at radius {R}: spread {achieved!r}")
    return GluingTable(xs=xs, anchors=A_arr, mu=mu,
                       achieved_tol=achieved, radius=R)


def mc_half_line(law: StepLaw, x: int, reps: int, rng=None,
                 episode_cap=10 ** 7) -> McEstimate:
    """Monte Carlo P_x(T_{Z^-} < T_x): episodes until the walk goes negative
    or returns to its start.

    Episode lengths are heavy-tailed, so episodes are capped.  For +-1-step
    laws a capped episode sitting right of x must return before going
    negative (path continuity), so the censoring is exact there; otherwise
    the censored fraction is folded into the reported stderr.
    """
    x = int(x)
    if x < 1:
        raise OracleError("x must be >= 1")
    rng = rng or np.random.default_rng()
    sampler = law.sampler()
    pos = np.full(reps, x, dtype=np.int64)
    alive = np.ones(reps, dtype=bool)
    hit_neg = np.zeros(reps, dtype=bool)
    steps = np.zeros(reps, dtype=np.int64)
    nn_law = law.table_cutoff == 1
    capped = np.zeros(reps, dtype=bool)
    while alive.any():
        idx = np.nonzero(alive)[0]
        chunk = int(min(2 ** 16, max(64, 4_000_000 // len(idx))))
        moves = sampler.sample(rng, size=len(idx) * chunk).reshape(len(idx), chunk)
        paths = pos[idx, None] + np.cumsum(moves, axis=1)
        neg_first = np.where((paths < 0).any(axis=1), (paths < 0).argmax(axis=1), chunk)
        ret_first = np.where((paths == x).any(axis=1), (paths == x).argmax(axis=1), chunk)
        resolved = np.minimum(neg_first, ret_first) < chunk
        hit_neg[idx[resolved]] = neg_first[resolved] < ret_first[resolved]
        alive[idx[resolved]] = False
        cont = ~resolved
        pos[idx[cont]] = paths[cont, -1]
        steps[idx] += chunk
        over = alive & (steps >= episode_cap)
        if over.any():
            capped[over] = True
            alive[over] = False
    if nn_law:
        # a +-1 path right of x must revisit x before ever going negative
        ambiguous = capped & (pos < x)
    else:
        ambiguous = capped
    n_amb = int(np.count_nonzero(ambiguous))
    est = float(hit_neg.mean())
    se = float(np.sqrt(max(est * (1 - est), 1e-12) / reps))
    if n_amb:
        se = float(np.hypot(se, n_amb / reps))
    note = (f"{int(capped.sum())} episodes capped, {n_amb} ambiguous "
            "(ambiguous count folded into stderr)")
    return McEstimate(est, se, reps, note=note)


def tv_distance(p, q) -> float:
    """Total variation distance between two finite distributions.

    Accepts dicts keyed by outcome or aligned arrays."""
    if isinstance(p, dict) or isinstance(q, dict):
        keys = set(p) | set(q)
        return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise OracleError("tv_distance needs a common support indexing")
    return 0.5 * float(np.abs(p - q).sum())
