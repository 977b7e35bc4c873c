"""Direct (walk-from-far) gluing sampler.

The walker performs honest steps of the law; the only engineering is an
exact fast-forward of the far-from-aggregate stretches: while at distance d
from the interaction window the walk cannot touch A before leaving the
centered interval (x-r, x+r) with r <= d/2, so the whole excursion can be
replaced by one draw of the pair (last interior site, exit site).  That
pair has the exact law

    P(Z=z, Y=y) = G_r(z) * pmf(y - z),   |z| < r <= |y|,

where G_r is the occupation measure of the walk killed on exiting the
interval: (I - T_r) G_r = e_0 with T_r the pmf convolution restricted to
the interval.  G_r is solved once per (law, radius) by conjugate gradients
with a circulant preconditioner and certified by its residual; the exit
step y may land anywhere, including on A (the long-jump gluing channel),
so no part of the dynamics is approximated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft
import scipy.sparse.linalg

from .steplaws import StepLaw, sample_conditional_tail


class WalkerError(RuntimeError):
    pass


MIN_EXCURSION_RADIUS = 32
G_RESIDUAL_TOL = 1e-11


@dataclass
class KilledIntervalTable:
    """Occupation measure of the walk from 0 killed on leaving (-r, r)."""

    radius: int
    occupation: np.ndarray      # G(z) for z = -(r-1)..(r-1)
    z_cum: np.ndarray           # cumsum of G(z) * P(exit from z)
    right_frac: np.ndarray      # P(exit right | exit from z)
    residual: float

    def sample_exit(self, law, rng):
        """(dz, dy): last interior offset and exit offset, exact."""
        r = self.radius
        u = rng.random() * self.z_cum[-1]
        i = min(int(np.searchsorted(self.z_cum, u, side="right")),
                len(self.z_cum) - 1)
        z = i - (r - 1)
        if rng.random() < self.right_frac[i]:
            k = sample_conditional_tail(law, r - z - 1, rng)
            return z, z + k
        k = sample_conditional_tail(law, r + z - 1, rng)
        return z, z - k


def _solve_killed_interval(law: StepLaw, r: int) -> KilledIntervalTable:
    m = 2 * r - 1
    z = np.arange(-(r - 1), r)
    kern = law.pmf(np.arange(m))
    L = scipy.fft.next_fast_len(2 * m)
    ksym = np.zeros(L)
    ksym[:m] = kern
    ksym[L - m + 1:] = kern[1:][::-1]
    KH = scipy.fft.rfft(ksym)

    def matvec(v):
        pad = np.zeros(L)
        pad[:m] = v
        conv = scipy.fft.irfft(scipy.fft.rfft(pad) * KH, L)[:m]
        return v - conv

    sym = 1.0 - scipy.fft.rfft(ksym).real
    floor = max(np.partition(np.abs(sym), 1)[1], 1e-14)
    pre = 1.0 / np.maximum(sym, floor)

    def precond(v):
        pad = np.zeros(L)
        pad[:m] = v
        out = scipy.fft.irfft(scipy.fft.rfft(pad) * pre, L)[:m]
        return out

    A = scipy.sparse.linalg.LinearOperator((m, m), matvec=matvec)
    M = scipy.sparse.linalg.LinearOperator((m, m), matvec=precond)
    e0 = np.zeros(m)
    e0[r - 1] = 1.0
    G, info = scipy.sparse.linalg.cg(A, e0, M=M, rtol=1e-13, atol=0.0,
                                     maxiter=600)
    if info != 0:
        raise WalkerError(f"killed-interval CG failed at r={r}: info={info}")
    resid = float(np.max(np.abs(matvec(G) - e0)))
    if resid > G_RESIDUAL_TOL:
        raise WalkerError(f"killed-interval solve residual {resid} at r={r}")
    G = np.maximum(G, 0.0)
    q_right = 0.5 * law.tail(r - z - 1)
    q_left = 0.5 * law.tail(r + z - 1)
    q = q_right + q_left
    w = G * q
    total = w.sum()
    if abs(total - 1.0) > 1e-6:
        raise WalkerError(f"exit mass {total} != 1 at r={r}")
    return KilledIntervalTable(radius=r, occupation=G, z_cum=np.cumsum(w / total),
                               right_frac=q_right / np.maximum(q, 1e-300),
                               residual=resid)


class ExcursionCache:
    """Dyadic ladder of killed-interval tables, built lazily per law."""

    def __init__(self, law: StepLaw):
        self.law = law
        self._tables = {}

    def table_for(self, d: int) -> KilledIntervalTable:
        """Largest cached dyadic radius <= d/2 (at least the minimum)."""
        r = MIN_EXCURSION_RADIUS
        while 2 * r <= d // 2:
            r *= 2
        if r not in self._tables:
            self._tables[r] = _solve_killed_interval(self.law, r)
        return self._tables[r]


@dataclass
class GluePair:
    x: int
    a: int
    steps: int
    excursions: int
    relaunches: int


def _batch_walk_window(law, sampler, rng, x, points_sorted, point_set,
                       win_lo, win_hi, max_batches=10 ** 9):
    """Step individually until gluing onto A or leaving the window.

    Returns ("glue", x, a, steps) or ("exit", y, steps)."""
    steps = 0
    chunk = 128
    while True:
        moves = sampler.sample(rng, size=chunk)
        pos = x + np.cumsum(moves)
        idx = np.searchsorted(points_sorted, pos)
        idx = np.minimum(idx, len(points_sorted) - 1)
        hit = points_sorted[idx] == pos
        out = (pos < win_lo) | (pos > win_hi)
        hit_i = int(np.argmax(hit)) if hit.any() else chunk
        out_i = int(np.argmax(out)) if out.any() else chunk
        if hit_i < out_i:
            prev = int(pos[hit_i - 1]) if hit_i > 0 else int(x)
            return "glue", prev, int(pos[hit_i]), steps + hit_i + 1
        if out_i < chunk:
            return "exit", int(pos[out_i]), steps + out_i + 1
        x = int(pos[-1])
        steps += chunk


def direct_particle(law: StepLaw, points, launch_factor: float,
                    step_cap: int, rng, skip_far: bool = True,
                    cache: ExcursionCache = None, launch_min: int = 1000,
                    max_relaunches: int = 1000) -> GluePair:
    """One particle walked in from far away; returns its gluing pair.

    The walk starts at hull edge +- L (fair coin), L = launch_factor *
    max(diam, launch_min).  A proposed step landing in A at a while the
    walker sits at x glues the pair (x, a).  Walkers drifting beyond 10 L
    from the hull or past the step budget are discarded and relaunched.
    """
    points_sorted = np.asarray(sorted(points), dtype=np.int64)
    point_set = set(int(p) for p in points_sorted)
    if not point_set:
        raise WalkerError("empty aggregate")
    hull_lo, hull_hi = int(points_sorted[0]), int(points_sorted[-1])
    diam = hull_hi - hull_lo
    L = int(launch_factor * max(diam, launch_min))
    w_buf = max(128, min(diam // 8 + 128, 4096))
    win_lo, win_hi = hull_lo - w_buf, hull_hi + w_buf
    sampler = law.sampler()
    cache = cache if cache is not None else (ExcursionCache(law) if skip_far else None)

    relaunches = 0
    tot_steps = 0
    tot_exc = 0
    while relaunches <= max_relaunches:
        x = hull_hi + L if rng.random() < 0.5 else hull_lo - L
        budget = step_cap
        while True:
            if budget <= 0:
                relaunches += 1
                break
            dist_out = max(win_lo - x, x - win_hi)
            if dist_out > 10 * L + w_buf:
                relaunches += 1
                break
            if win_lo <= x <= win_hi or not skip_far or dist_out < 2 * MIN_EXCURSION_RADIUS:
                kind, *rest = _batch_walk_window(
                    law, sampler, rng, x, points_sorted, point_set,
                    win_lo - (0 if skip_far else 10 * L), win_hi + (0 if skip_far else 10 * L))
                if kind == "glue":
                    gx, ga, st = rest
                    return GluePair(x=gx, a=ga, steps=tot_steps + st,
                                    excursions=tot_exc, relaunches=relaunches)
                y, st = rest
                tot_steps += st
                budget -= st
                x = y
                continue
            table = cache.table_for(dist_out)
            dz, dy = table.sample_exit(law, rng)
            z, y = x + dz, x + dy
            tot_exc += 1
            budget -= 1
            if y in point_set:
                return GluePair(x=z, a=y, steps=tot_steps, excursions=tot_exc,
                                relaunches=relaunches)
            x = y
    raise WalkerError(
        f"relaunch budget exhausted ({max_relaunches}); law={law.kind}, "
        f"launch={L}, steps={tot_steps}, excursions={tot_exc}")


def mc_hitting_measure(law: StepLaw, points, launch_distance: int,
                       n_walkers: int, rng, cache=None):
    """Empirical H_A(inf, .): entry-point frequencies of walkers launched at
    +-launch_distance (averaged sides).  Returns dict point -> frequency."""
    points_sorted = np.asarray(sorted(points), dtype=np.int64)
    counts = dict.fromkeys(int(p) for p in points_sorted)
    for k in counts:
        counts[k] = 0
    cache = cache or ExcursionCache(law)
    diam = int(points_sorted[-1] - points_sorted[0])
    lf = launch_distance / max(diam, 1000)
    for _ in range(n_walkers):
        gp = direct_particle(law, points_sorted, lf, step_cap=10 ** 9, rng=rng,
                             cache=cache, launch_min=1000)
        counts[gp.a] += 1
    return {k: v / n_walkers for k, v in counts.items()}
