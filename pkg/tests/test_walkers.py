import numpy as np
import pytest

from ldla.oracles import tv_distance
from ldla.steplaws import make_lazy_nearest_neighbor, make_power_law
from ldla.walkers import (
    ExcursionCache,
    _solve_killed_interval,
    direct_particle,
    mc_hitting_measure,
)

POW15 = make_power_law(1.5, 0.2)
LAZY = make_lazy_nearest_neighbor(0.5)


def _dense_killed_occupation(law, r):
    z = np.arange(-(r - 1), r)
    P = law.pmf(np.abs(np.subtract.outer(z, z)))
    G = np.linalg.solve(np.eye(len(z)) - P, np.eye(len(z))[r - 1])
    return G


@pytest.mark.parametrize("law", [POW15, LAZY, make_power_law(2.5, 0.2)])
@pytest.mark.parametrize("r", [32, 128])
def test_killed_interval_matches_dense(law, r):
    t = _solve_killed_interval(law, r)
    G_dense = _dense_killed_occupation(law, r)
    assert np.max(np.abs(t.occupation - G_dense)) < 1e-9


def test_killed_interval_exit_law_vs_naive(law=POW15, r=32):
    t = _solve_killed_interval(law, r)
    rng = np.random.default_rng(5)
    n = 30_000
    emp_skip = {}
    for _ in range(n):
        dz, dy = t.sample_exit(law, rng)
        assert abs(dz) < r <= abs(dy)
        key = (dz, min(dy, 3 * r) if dy > 0 else max(dy, -3 * r))
        emp_skip[key] = emp_skip.get(key, 0) + 1
    sampler = law.sampler()
    emp_naive = {}
    for _ in range(n):
        x = 0
        while abs(x) < r:
            z = x
            x = x + int(sampler.sample(rng))
        key = (z, min(x, 3 * r) if x > 0 else max(x, -3 * r))
        emp_naive[key] = emp_naive.get(key, 0) + 1
    p = {k: v / n for k, v in emp_skip.items()}
    q = {k: v / n for k, v in emp_naive.items()}
    # expected TV between two empirical copies scales like sqrt(K/n)
    assert tv_distance(p, q) < 0.035


def test_direct_particle_lazy_singleton():
    rng = np.random.default_rng(11)
    cache = ExcursionCache(LAZY)
    xs = []
    for _ in range(3000):
        gp = direct_particle(LAZY, [0], launch_factor=4, step_cap=10 ** 9,
                             rng=rng, cache=cache, launch_min=64)
        assert gp.a == 0
        xs.append(gp.x)
    xs = np.array(xs)
    assert set(np.unique(xs)) == {-1, 1}
    assert abs(np.mean(xs == 1) - 0.5) < 4 * np.sqrt(0.25 / len(xs))


def test_direct_particle_never_in_aggregate():
    rng = np.random.default_rng(13)
    pts = [0, 1, 3]
    cache = ExcursionCache(POW15)
    for _ in range(400):
        gp = direct_particle(POW15, pts, launch_factor=4, step_cap=10 ** 9,
                             rng=rng, cache=cache, launch_min=64)
        assert gp.x not in set(pts)
        assert gp.a in set(pts)


def test_skip_matches_naive_stepping():
    # same launch geometry, with and without excursion fast-forwarding
    pts = [0, 1, 3]
    n = 4000
    cache = ExcursionCache(POW15)

    def empirical(skip, seed):
        rng = np.random.default_rng(seed)
        counts = {}
        for _ in range(n):
            gp = direct_particle(POW15, pts, launch_factor=4, step_cap=10 ** 9,
                                 rng=rng, skip_far=skip, cache=cache,
                                 launch_min=64)
            key = (min(max(gp.x, -40), 40), gp.a)
            counts[key] = counts.get(key, 0) + 1
        return {k: v / n for k, v in counts.items()}

    p = empirical(True, 101)
    q = empirical(False, 202)
    assert tv_distance(p, q) < 0.05


def test_mc_hitting_measure_two_points():
    rng = np.random.default_rng(17)
    h = mc_hitting_measure(POW15, [0, 20], launch_distance=50_000,
                           n_walkers=1500, rng=rng)
    assert abs(h[0] - 0.5) < 4 * np.sqrt(0.25 / 1500)
    assert abs(h[0] + h[20] - 1.0) < 1e-12
