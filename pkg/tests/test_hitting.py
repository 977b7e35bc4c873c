import numpy as np
import pytest

from ldla.hitting import (
    HittingSolveError,
    extend_hitting,
    solve_hitting_from_infinity,
    two_point_escape,
)
from ldla.potential import build_kernel
from ldla.steplaws import make_lazy_nearest_neighbor, make_power_law


@pytest.fixture(scope="module")
def kern_lazy():
    return build_kernel(make_lazy_nearest_neighbor(0.5), N_table=1024, tol=1e-9)


@pytest.fixture(scope="module")
def kern15():
    return build_kernel(make_power_law(1.5, 0.2), N_table=4096, tol=1e-8)


def test_singleton(kern15):
    s = solve_hitting_from_infinity(kern15, [0])
    assert s.hm_infinity[0] == pytest.approx(1.0, abs=1e-12)
    assert s.kappa == pytest.approx(0.0, abs=1e-12)


def test_two_point_symmetry(kern15):
    d = 17
    s = solve_hitting_from_infinity(kern15, [0, d])
    assert np.allclose(s.hm_infinity, [0.5, 0.5], atol=1e-9)
    assert s.kappa == pytest.approx(-kern15.eval_a(d) / 2.0, rel=1e-10)


def test_g_infinity_singleton(kern15):
    s = solve_hitting_from_infinity(kern15, [0])
    for x in (1, 5, -40):
        assert s.g_infinity(kern15, x) == pytest.approx(kern15.eval_a(x), rel=1e-12)


def test_g_infinity_two_point_lazy(kern_lazy):
    # closed form a(n) = 2n: g(x) = (a(x)+a(x-d))/2 - a(d)/2; d=4, x=6 -> 4
    s = solve_hitting_from_infinity(kern_lazy, [0, 4])
    assert s.g_infinity(kern_lazy, 6) == pytest.approx(4.0, abs=1e-6)


def test_g_infinity_zero_on_points(kern15):
    s = solve_hitting_from_infinity(kern15, [0, 1, 3])
    for p in (0, 1, 3):
        val = s.kappa + float(kern15.eval_a(np.abs(p - s.pts_mat)) @ s.hm_infinity)
        assert abs(val) <= 1e-8


def test_residuals_random_aggregates(kern15):
    rng = np.random.default_rng(5)
    for _ in range(25):
        size = rng.integers(1, 60)
        pts = rng.choice(np.arange(-2000, 2000), size=size, replace=False)
        s = solve_hitting_from_infinity(kern15, pts)
        r_row, r_sum = s.residual()
        assert r_row <= 1e-8 * max(1.0, abs(s.kappa))
        assert r_sum <= 1e-9
        assert np.all(s.hm_infinity > -1e-9)


def test_extend_matches_fresh(kern15):
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(50):
        size = int(rng.integers(2, 30))
        pts = list(rng.choice(np.arange(-500, 500), size=size, replace=False))
        s = solve_hitting_from_infinity(kern15, pts[:-1])
        s = extend_hitting(s, kern15, pts[-1])
        f = solve_hitting_from_infinity(kern15, pts)
        zi_s = dict(zip(s.pts_mat.tolist(), s.hm_infinity.tolist()))
        zi_f = dict(zip(f.pts_mat.tolist(), f.hm_infinity.tolist()))
        for p in pts:
            denom = max(abs(zi_f[p]), 1e-12)
            worst = max(worst, abs(zi_s[p] - zi_f[p]) / denom)
        worst = max(worst, abs(s.kappa - f.kappa) / max(1.0, abs(f.kappa)))
    assert worst <= 1e-8


def test_extend_two_point_symmetric(kern15):
    s = solve_hitting_from_infinity(kern15, [0])
    s = extend_hitting(s, kern15, 10)
    assert np.allclose(np.sort(s.hm_infinity), [0.5, 0.5], atol=1e-9)


def test_staleness_reset(kern15):
    s = solve_hitting_from_infinity(kern15, [0], resolve_every=4)
    for x in (3, 7, 12):
        s = extend_hitting(s, kern15, x)
    assert s.staleness_counter == 3
    s = extend_hitting(s, kern15, 20)
    assert s.staleness_counter == 0


def test_extend_rejects_duplicate(kern15):
    s = solve_hitting_from_infinity(kern15, [0, 5])
    with pytest.raises(HittingSolveError):
        extend_hitting(s, kern15, 5)


def test_two_point_escape_lazy(kern_lazy):
    assert two_point_escape(kern_lazy, 5) == pytest.approx(0.05, abs=1e-8)


def test_two_point_escape_decreasing(kern15):
    vals = [two_point_escape(kern15, d) for d in (10, 100, 1000, 10000)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    assert vals[-1] > 0
