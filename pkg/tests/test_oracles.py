import numpy as np
import pytest

from ldla.oracles import (
    Bracket,
    OracleError,
    bracket_hitting_truncated,
    enumerate_gluing_small,
    mc_half_line,
    mc_potential_kernel,
    tv_distance,
)
from ldla.steplaws import make_lazy_nearest_neighbor, make_power_law

LAZY = make_lazy_nearest_neighbor(0.5)
POW15 = make_power_law(1.5, 0.2)


def test_oracle_module_independence():
    # audit: the oracle module must not import the hitting solver, the
    # quadrature kernel, or the gluing stack
    import ast

    import ldla.oracles as m

    tree = ast.parse(open(m.__file__).read())
    banned = {"hitting", "potential", "gluing", "walkers", "simulate"}
    for node in ast.walk(tree):
        if isinstance(node, ast.Import):
            names = [a.name for a in node.names]
        elif isinstance(node, ast.ImportFrom):
            names = [node.module or ""] + [a.name for a in node.names]
        else:
            continue
        for name in names:
            assert not any(b in name for b in banned), f"forbidden import {name}"


def test_bracket_lazy_closed_form():
    # a(n) = 2n for the lazy half walk, so P_5(T_0 < T_5) = 1/(2 a(5)) = 1/20
    br = bracket_hitting_truncated(LAZY, [0], 5, radius=10_000)
    assert br.contains(1.0 / 20.0)
    assert br.width <= 1e-4


def test_bracket_width_shrinks_with_radius():
    w = [bracket_hitting_truncated(LAZY, [0], 5, radius=r).width
         for r in (100, 200, 400)]
    assert w[0] > w[1] > w[2]


def test_bracket_power_law_sane():
    br = bracket_hitting_truncated(POW15, [0], 10, radius=1200)
    assert 0.0 < br.lo <= br.hi < 1.0
    br2 = bracket_hitting_truncated(POW15, [0], 10, radius=2400)
    assert br2.width < br.width
    assert br2.lo >= br.lo - 1e-12 and br2.hi <= br.hi + 1e-12


def test_bracket_rejects_bad_geometry():
    with pytest.raises(OracleError):
        bracket_hitting_truncated(LAZY, [0], 90, radius=100)
    with pytest.raises(OracleError):
        bracket_hitting_truncated(LAZY, [0, 5], 5, radius=100)


def test_mc_potential_kernel_zero():
    r = mc_potential_kernel(LAZY, 0, 10, 10)
    assert r.estimate == 0.0 and r.stderr == 0.0


def test_mc_potential_kernel_lazy():
    rng = np.random.default_rng(42)
    r = mc_potential_kernel(LAZY, 3, t_max=100_000, reps=400, rng=rng)
    assert abs(r.estimate - 6.0) <= 3.0 * r.stderr + r.truncation_bound


def test_mc_potential_kernel_symmetric():
    rng = np.random.default_rng(1)
    rp = mc_potential_kernel(LAZY, 2, t_max=20_000, reps=300, rng=rng)
    rm = mc_potential_kernel(LAZY, -2, t_max=20_000, reps=300, rng=rng)
    sigma = np.hypot(rp.stderr, rm.stderr)
    assert abs(rp.estimate - rm.estimate) <= 4.0 * sigma


def test_enumerate_gluing_singleton_lazy():
    # A={0}: mu(x, 0) = pmf(x) a(x) with a(x)=2|x|; only x=+-1 reach 0
    t = enumerate_gluing_small(LAZY, [0], window_radius=6, tol=5e-3, radius=1500)
    d = t.as_dict()
    assert d[(1, 0)] == pytest.approx(0.25 * 2.0, abs=5e-3)
    assert d[(-1, 0)] == pytest.approx(0.5, abs=5e-3)
    assert d[(3, 0)] == 0.0
    assert t.total() == pytest.approx(1.0, abs=2e-2)


def test_enumerate_gluing_reflection_symmetry():
    t = enumerate_gluing_small(POW15, [-2, 0, 2], window_radius=10, tol=5e-2)
    d = t.as_dict()
    for x in (1, 5, 9):
        for a in (-2, 0, 2):
            assert d[(x, a)] == pytest.approx(d[(-x, -a)], rel=1e-6, abs=1e-9)


def test_enumerate_gluing_rejects_wide():
    with pytest.raises(OracleError):
        enumerate_gluing_small(POW15, [0, 500], 10, tol=1e-2)


def test_mc_half_line_basics():
    rng = np.random.default_rng(7)
    r = mc_half_line(POW15, 1, reps=4000, rng=rng)
    assert 0.0 < r.estimate < 1.0


def test_mc_half_line_lazy_asymptotics():
    rng = np.random.default_rng(9)
    r = mc_half_line(LAZY, 50, reps=100_000, rng=rng)
    norm = r.estimate * (2 * 50) / 0.5
    assert 0.9 <= norm <= 1.1


def test_mc_half_line_decreasing_in_x():
    rng = np.random.default_rng(11)
    ests = [mc_half_line(LAZY, x, reps=40_000, rng=rng) for x in (25, 50, 100)]
    for r1, r2 in zip(ests, ests[1:]):
        assert r1.estimate >= r2.estimate - 2.0 * np.hypot(r1.stderr, r2.stderr)


def test_tv_distance():
    assert tv_distance({1: 0.5, 2: 0.5}, {1: 0.5, 2: 0.5}) == 0.0
    assert tv_distance({1: 1.0}, {2: 1.0}) == 1.0
    assert tv_distance(np.array([0.5, 0.5]), np.array([1.0, 0.0])) == 0.5
    with pytest.raises(OracleError):
        tv_distance(np.ones(3) / 3, np.ones(4) / 4)


def test_bracket_dataclass():
    b = Bracket(0.1, 0.2, "m")
    assert b.contains(0.15) and not b.contains(0.25)
    with pytest.raises(OracleError):
        Bracket(0.3, 0.2, "m")
