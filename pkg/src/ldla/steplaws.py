"""Symmetric integer step distributions driving all walks in this package.

Supported families:

* ``power_law``     P(xi=0)=h, P(xi=+-k) = c k^(-1-alpha) with
                    c = (1-h) / (2 zeta(1+alpha)), exact for every k.
* ``z2_restricted`` the restriction of the planar simple random walk to an
                    embedded copy of Z: P(xi=0)=1-2/pi,
                    P(xi=+-k)=2/(pi(4k^2-1)).  Cauchy-type tails (alpha=1).
* ``lazy_nearest_neighbor``  P(xi=0)=h, P(xi=+-1)=(1-h)/2.
* ``table``         arbitrary finite symmetric pmf.

Everything downstream (quadrature, samplers, oracles) consumes only the
public surface here: pmf / tail / cdf_upto / char_fn / sample_step.
pmf and tail are exact also beyond the tabulated range (analytic
continuation via Hurwitz zeta, or closed forms).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import mpmath as mp
import numpy as np
from scipy.special import zeta as _hurwitz

DEFAULT_TABLE_CUTOFF = 2 ** 16


class StepLawError(ValueError):
    pass


def _riemann_zeta(s):
    return float(_hurwitz(s, 1))


@dataclass(frozen=True)
class StepLaw:
    """Immutable symmetric step law; safe to share across threads."""

    kind: str
    alpha: float                 # tail exponent; inf for bounded support
    holding_prob: float          # mass at 0
    normalizer: float            # c in P(xi=+-k)=c k^(-1-alpha), 0 if unused
    table_cutoff: int
    pmf_table: np.ndarray        # pmf_table[k] = P(xi=k) for 0<=k<=table_cutoff
    sigma_sq: float              # variance, may be inf
    # coefficients of the small-frequency polylog expansion of
    # sum k^{-1-alpha} cos(k zeta); empty for closed-form laws
    _charfn_coeffs: np.ndarray = field(default=None, repr=False)
    _charfn_special: tuple = field(default=None, repr=False)

    def __post_init__(self):
        t = self.pmf_table
        total = t[0] + 2.0 * t[1:].sum() + self.exact_tail(self.table_cutoff)
        if abs(total - 1.0) > 1e-12:
            raise StepLawError(f"law not normalized: total mass {total!r}")
        if t[0] <= 0.0 and self._support_gcd() != 1:
            raise StepLawError("periodic law: no atom at 0 and support gcd != 1")

    def _support_gcd(self):
        support = np.nonzero(self.pmf_table[1:])[0] + 1
        if self.tail(self.table_cutoff) > 0:
            # unbounded support includes arbitrarily large consecutive k
            return 1
        g = 0
        for k in support:
            g = math.gcd(g, int(k))
        return g

    # -- exact pointwise quantities -------------------------------------

    def pmf(self, k):
        """P(xi = k), exact for any integer k (vectorized)."""
        k = np.abs(np.asarray(k, dtype=np.int64))
        out = np.empty(k.shape, dtype=float)
        inside = k <= self.table_cutoff
        out[inside] = self.pmf_table[k[inside]]
        if not inside.all():
            out[~inside] = self._pmf_analytic(k[~inside])
        return out if out.shape else float(out)

    def _pmf_analytic(self, k):
        if self.kind == "power_law":
            return self.normalizer * np.asarray(k, dtype=float) ** (-1.0 - self.alpha)
        if self.kind == "z2_restricted":
            k = np.asarray(k, dtype=float)
            return 2.0 / (np.pi * (4.0 * k * k - 1.0))
        return np.zeros(np.shape(k))

    def tail(self, t):
        """P(|xi| > t), exact (partial sums replaced by analytic remainders);
        vectorized."""
        t = np.asarray(t, dtype=np.int64)
        if np.any(t < 0):
            raise StepLawError("tail needs t >= 0")
        if self.kind == "power_law":
            out = 2.0 * self.normalizer * _hurwitz(1.0 + self.alpha,
                                                   t.astype(float) + 1.0)
        elif self.kind == "z2_restricted":
            out = (2.0 / np.pi) / (2.0 * t.astype(float) + 1.0)
        else:
            suffix = self._suffix_table
            out = suffix[np.minimum(t, self.table_cutoff)]
        return out if out.shape else float(out)

    @property
    def _suffix_table(self):
        # _suffix[t] = 2 sum_{k>t} pmf(k), exact for bounded laws
        cached = getattr(self, "_suffix_cache", None)
        if cached is None:
            rev = np.concatenate([2.0 * np.cumsum(self.pmf_table[:0:-1])[::-1], [0.0]])
            object.__setattr__(self, "_suffix_cache", rev)
            cached = rev
        return cached

    def exact_tail(self, t: int) -> float:
        return float(self.tail(np.int64(t)))

    def char_fn(self, zeta):
        """phi(zeta) = E cos(xi zeta) on [-pi, pi], certified to ~1e-13."""
        out = 1.0 - self.one_minus_char_fn(zeta)
        return out if np.shape(out) else float(out)

    def one_minus_char_fn(self, zeta):
        """1 - phi(zeta), evaluated without cancellation near zeta = 0.

        This is the quantity every kernel quadrature divides by; near 0 it decays
        like |zeta|^min(alpha,2) and a direct 1-phi would lose all digits.
        """
        z = np.abs(np.asarray(zeta, dtype=float))
        if np.any(z > np.pi + 1e-12):
            raise StepLawError("char_fn defined on [-pi, pi]")
        if self.kind == "lazy_nearest_neighbor":
            out = (1.0 - self.holding_prob) * 2.0 * np.sin(z / 2.0) ** 2
        elif self.kind == "z2_restricted":
            out = np.sin(z / 2.0)
        elif self.kind == "power_law":
            # 1 - phi = 2c (zeta(s) - S(zeta)); the expansion gives the
            # difference directly, dropping the constant term
            out = -2.0 * self.normalizer * self._cos_series_excess(z)
        else:
            k = np.arange(1, self.table_cutoff + 1)
            out = 4.0 * (
                self.pmf_table[1:][None, :]
                * np.sin(np.outer(z.ravel(), k) / 2.0) ** 2
            ).sum(axis=1).reshape(z.shape)
        return out if np.shape(out) else float(out)

    def _cos_series_excess(self, z):
        """S(z) - S(0) with S(z) = sum_{k>=1} k^{-s} cos(k z), s = 1+alpha,
        via the polylog expansion around 0; geometric convergence on [0, pi]."""
        coeffs = self._charfn_coeffs
        gam_amp, gam_arg, m_int = self._charfn_special
        z = np.asarray(z, dtype=float)
        out = np.zeros(z.shape)
        nz = z > 0
        zz = z[nz]
        acc = np.zeros(zz.shape)
        z2 = zz * zz
        p = z2.copy()
        for c in coeffs[1:]:
            acc += c * p
            p *= z2
        if m_int < 0:
            # non-integer s: Gamma(1-s) (-i z)^{s-1} has real part
            # gam_amp * z^alpha * cos(pi alpha / 2)
            acc += gam_amp * np.exp(self.alpha * np.log(zz)) * gam_arg
        else:
            # integer s=m: mu^{m-1}/(m-1)! (H_{m-1} - ln(-mu)), mu = iz
            mu_pow = np.exp(1j * np.pi / 2 * (m_int - 1)) * zz ** (m_int - 1)
            acc += (mu_pow / math.factorial(m_int - 1)
                    * (gam_amp - np.log(zz) + 1j * np.pi / 2)).real
        out[nz] = acc
        return out

    # -- sampling --------------------------------------------------------

    def sampler(self):
        return StepSampler(self)

    def to_config(self) -> dict:
        return {
            "kind": self.kind,
            "alpha": None if math.isinf(self.alpha) else self.alpha,
            "holding_prob": self.holding_prob,
            "table_cutoff": self.table_cutoff,
        }


def _power_law_charfn_setup(alpha, max_terms=160):
    """Precompute expansion coefficients for sum k^{-1-alpha} cos(k zeta)."""
    s = 1.0 + alpha
    is_int = abs(s - round(s)) < 1e-12
    coeffs = []
    j = 0
    while True:
        k = 2 * j
        if is_int and k == round(s) - 1:
            coeffs.append(0.0)  # pole term handled separately
        else:
            c = mp.zeta(s - k) * (-1) ** j / mp.factorial(k)
            coeffs.append(float(c))
        # conservative magnitude bound of the term at zeta=pi
        if j > 4 and abs(coeffs[-1]) * np.pi ** k < 1e-18:
            break
        j += 1
        if j > max_terms:
            raise StepLawError("char_fn expansion did not converge")
    if is_int:
        m = int(round(s))
        special = (float(mp.harmonic(m - 1)), 0.0, m)
    else:
        special = (float(mp.gamma(1 - s)), math.cos(math.pi * alpha / 2.0), -1)
    return np.array(coeffs), special


def make_power_law(alpha, holding_prob=0.2,
                   table_cutoff=DEFAULT_TABLE_CUTOFF) -> StepLaw:
    """Pure power law P(xi=+-k) = c k^(-1-alpha) with an atom at 0."""
    if alpha <= 0:
        raise StepLawError("alpha must be positive")
    if not 0.0 <= holding_prob < 1.0:
        raise StepLawError("holding_prob must lie in [0, 1)")
    zsum = _riemann_zeta(1.0 + alpha)
    c = (1.0 - holding_prob) / (2.0 * zsum)
    k = np.arange(1, table_cutoff + 1, dtype=float)
    table = np.empty(table_cutoff + 1)
    table[0] = holding_prob
    table[1:] = c * k ** (-1.0 - alpha)
    if alpha > 2:
        sig = 2.0 * c * _riemann_zeta(alpha - 1.0)
    else:
        sig = math.inf
    coeffs, special = _power_law_charfn_setup(alpha)
    return StepLaw(kind="power_law", alpha=float(alpha),
                   holding_prob=float(holding_prob), normalizer=c,
                   table_cutoff=table_cutoff, pmf_table=table, sigma_sq=sig,
                   _charfn_coeffs=coeffs, _charfn_special=special)


def make_z2_restricted(table_cutoff=DEFAULT_TABLE_CUTOFF) -> StepLaw:
    """Steps of the planar SRW restricted to a diagonal copy of Z."""
    k = np.arange(1, table_cutoff + 1, dtype=float)
    table = np.empty(table_cutoff + 1)
    table[0] = 1.0 - 2.0 / np.pi
    table[1:] = 2.0 / (np.pi * (4.0 * k * k - 1.0))
    return StepLaw(kind="z2_restricted", alpha=1.0,
                   holding_prob=table[0], normalizer=2.0 / np.pi,
                   table_cutoff=table_cutoff, pmf_table=table,
                   sigma_sq=math.inf)


def make_lazy_nearest_neighbor(holding_prob=0.5) -> StepLaw:
    """Lazy +-1 walk; potential kernel has the closed form a(n)=|n|/(1-h)."""
    if not 0.0 < holding_prob < 1.0:
        raise StepLawError("holding_prob must lie strictly in (0, 1)")
    table = np.zeros(2)
    table[0] = holding_prob
    table[1] = (1.0 - holding_prob) / 2.0
    return StepLaw(kind="lazy_nearest_neighbor", alpha=math.inf,
                   holding_prob=holding_prob, normalizer=0.0,
                   table_cutoff=1, pmf_table=table,
                   sigma_sq=1.0 - holding_prob)


def make_table_law(pmf_half, holding_prob) -> StepLaw:
    """Law from explicit one-sided table pmf_half[k-1] = P(xi=k), k>=1."""
    pmf_half = np.asarray(pmf_half, dtype=float)
    if np.any(pmf_half < 0):
        raise StepLawError("negative mass in table")
    table = np.concatenate([[holding_prob], pmf_half])
    total = holding_prob + 2.0 * pmf_half.sum()
    if abs(total - 1.0) > 1e-12:
        raise StepLawError(f"table law has total mass {total!r}")
    var = 2.0 * np.sum(np.arange(1, len(pmf_half) + 1, dtype=float) ** 2 * pmf_half)
    return StepLaw(kind="table", alpha=math.inf, holding_prob=holding_prob,
                   normalizer=0.0, table_cutoff=len(pmf_half),
                   pmf_table=table, sigma_sq=var)


def law_from_config(cfg: dict) -> StepLaw:
    kind = cfg["kind"]
    if kind == "power_law":
        return make_power_law(cfg["alpha"], cfg.get("holding_prob", 0.2),
                              cfg.get("table_cutoff", DEFAULT_TABLE_CUTOFF))
    if kind == "z2_restricted":
        return make_z2_restricted(cfg.get("table_cutoff", DEFAULT_TABLE_CUTOFF))
    if kind == "lazy_nearest_neighbor":
        return make_lazy_nearest_neighbor(cfg.get("holding_prob", 0.5))
    raise StepLawError(f"unknown law kind {kind!r}")


class StepSampler:
    """Exact sampler for a StepLaw: table inversion plus analytic tail.

    Holds the cumulative table; needs a caller-supplied numpy Generator,
    one per worker.
    """

    def __init__(self, law: StepLaw):
        self.law = law
        t = law.pmf_table
        # buckets: [0], |k|=1..cutoff (mass 2 pmf), tail beyond cutoff
        masses = np.concatenate([[t[0]], 2.0 * t[1:], [law.exact_tail(law.table_cutoff)]])
        self.cum = np.cumsum(masses)
        self.cum[-1] = 1.0
        self.tail_start = law.table_cutoff

    def sample(self, rng, size=None):
        scalar = size is None
        n = 1 if scalar else int(size)
        u = rng.random(n)
        idx = np.searchsorted(self.cum, u, side="right")
        out = idx.astype(np.int64)
        tail_mask = idx > self.tail_start
        if tail_mask.any():
            out[tail_mask] = [self._sample_tail(rng) for _ in range(tail_mask.sum())]
        signs = rng.integers(0, 2, size=n) * 2 - 1
        out *= signs
        out[idx == 0] = 0
        return int(out[0]) if scalar else out

    def _sample_tail(self, rng):
        return sample_conditional_tail(self.law, self.tail_start, rng)


def sample_conditional_tail(law, t_min, rng, t_max=None):
    """Sample |xi| conditioned on |xi| > t_min (and <= t_max if given),
    by bisection on the exact tail function."""
    lo_tail = law.exact_tail(t_min)
    hi_tail = law.exact_tail(t_max) if t_max is not None else 0.0
    if lo_tail <= hi_tail:
        raise StepLawError("empty conditional tail range")
    u = rng.random()
    target = lo_tail + u * (hi_tail - lo_tail)
    # find smallest k > t_min with tail(k) <= target; then |xi| = k
    lo, hi = t_min, t_max if t_max is not None else max(2 * t_min, 16)
    if t_max is None:
        while law.exact_tail(hi) > target:
            lo, hi = hi, hi * 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if law.exact_tail(mid) <= target:
            hi = mid
        else:
            lo = mid
    return hi


def sample_step(law, rng, size=None):
    """Convenience one-shot sampling; build a StepSampler for bulk use."""
    return law.sampler().sample(rng, size=size)
