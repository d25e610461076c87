from itertools import permutations

import numpy as np
import pytest

from meanfield_lab import (
    EmpiricalMeasure,
    MetaMeasure,
    TransportPlan,
    empirical_lift,
    gaussian_density,
    gaussian_w2,
    isometry_gap,
    nested_d2,
    nested_d2_squared_to_dirac,
    sample_product,
    solve_discrete_ot,
    uniform_density,
    w2_assignment,
    w2_quantile,
    w2_squared_quantile,
)


def brute_force_w2(x, y):
    x = np.asarray(x, dtype=float)
    n = x.size
    best = min(float(np.sum((x - np.asarray(p)) ** 2)) for p in permutations(y))
    return np.sqrt(best / n)


# ---------------------------------------------------------------------------
# quantile distance


def test_w2_quantile_point_masses():
    assert w2_quantile(empirical_lift([0.0]), empirical_lift([1.0])) == pytest.approx(1.0)


def test_w2_quantile_identity():
    rho = gaussian_density(0.3, 0.8, -6.0, 6.0, 128)
    assert w2_quantile(rho, rho) == 0.0
    e = empirical_lift([0.1, 0.7, 2.0])
    assert w2_quantile(e, e) == 0.0


def test_w2_quantile_sorted_matching_example():
    a = empirical_lift([0.0, 2.0])
    b = empirical_lift([1.0, 3.0])
    assert w2_quantile(a, b) ** 2 == pytest.approx(1.0)
    assert brute_force_w2([0.0, 2.0], [1.0, 3.0]) == pytest.approx(1.0)


def test_w2_quantile_grid_vs_grid_translation():
    # translated copies of the same profile: distance equals the shift
    a = gaussian_density(-1.0, 0.5, -8.0, 8.0, 2048)
    b = gaussian_density(2.0, 0.5, -8.0, 8.0, 2048)
    assert w2_quantile(a, b) == pytest.approx(3.0, abs=1e-6)


def test_w2_quantile_gaussian_closed_form():
    a = gaussian_density(-0.5, 0.25, -9.0, 9.0, 2048)
    b = gaussian_density(1.0, 1.44, -9.0, 9.0, 2048)
    assert w2_quantile(a, b) == pytest.approx(gaussian_w2(-0.5, 0.25, 1.0, 1.44),
                                              abs=1e-4)


def test_w2_quantile_grid_vs_empirical_closed_form():
    # U[0,1] against a point mass at 1/2: integral of (q - 1/2)^2 dq = 1/12
    rho = uniform_density(0.0, 1.0, 256)
    assert w2_squared_quantile(rho, empirical_lift([0.5])) == pytest.approx(1.0 / 12.0,
                                                                            abs=1e-12)


def test_w2_quantile_empirical_matches_brute_force():
    rng = np.random.default_rng(5)
    for _ in range(40):
        n = int(rng.integers(1, 7))
        x = rng.uniform(-3, 3, n)
        y = rng.uniform(-3, 3, n)
        got = w2_quantile(empirical_lift(x), empirical_lift(y))
        assert got == pytest.approx(brute_force_w2(x, y), abs=1e-12)


def test_w2_quantile_unequal_sizes():
    # n=1 vs n=2: quantile integral in closed form
    a = empirical_lift([0.0])
    b = empirical_lift([-1.0, 1.0])
    assert w2_squared_quantile(a, b) == pytest.approx(1.0, abs=1e-12)


def test_w2_quantile_metric_properties():
    rng = np.random.default_rng(17)
    measures = []
    for _ in range(6):
        n = int(rng.integers(1, 9))
        measures.append(empirical_lift(rng.uniform(-2, 2, n)))
        measures.append(gaussian_density(rng.uniform(-1, 1), rng.uniform(0.2, 1.0),
                                         -8.0, 8.0, 128))
    for a in measures:
        for b in measures:
            dab = w2_quantile(a, b)
            assert dab == pytest.approx(w2_quantile(b, a), abs=1e-10)
            for c in measures:
                assert dab <= w2_quantile(a, c) + w2_quantile(c, b) + 1e-10


# ---------------------------------------------------------------------------
# assignment distance


def test_w2_assignment_examples():
    x = np.array([0.3, -1.0, 2.0])
    assert w2_assignment(x, x) == 0.0
    assert w2_assignment([0.0, 2.0], [3.0, 1.0]) ** 2 == pytest.approx(1.0)
    assert w2_assignment([0.0, 1.0, 2.0], [2.0, 0.0, 1.0]) == 0.0
    with pytest.raises(ValueError):
        w2_assignment([0.0], [0.0, 1.0])


def test_w2_assignment_solver_agrees_with_sorting():
    rng = np.random.default_rng(23)
    for _ in range(30):
        n = int(rng.integers(1, 65))
        x = rng.standard_normal(n)
        y = rng.standard_normal(n)
        assert w2_assignment(x, y) == pytest.approx(
            w2_assignment(x, y, method="solver"), abs=1e-12)


def test_w2_assignment_scaling_identity():
    rng = np.random.default_rng(2)
    x, y = rng.standard_normal(16), rng.standard_normal(16)
    xs, ys = np.sort(x), np.sort(y)
    assert w2_assignment(x, y) ** 2 * 16 == pytest.approx(np.sum((xs - ys) ** 2),
                                                          rel=1e-12)


# ---------------------------------------------------------------------------
# discrete OT and the nested distance


def test_solve_discrete_ot_plan_invariants():
    rng = np.random.default_rng(8)
    cost = rng.random((5, 7))
    rw = rng.random(5); rw /= rw.sum()
    cw = rng.random(7); cw /= cw.sum()
    plan = solve_discrete_ot(cost, rw, cw)
    assert np.max(np.abs(plan.plan.sum(axis=1) - rw)) < 1e-10
    assert np.max(np.abs(plan.plan.sum(axis=0) - cw)) < 1e-10
    assert plan.cost == pytest.approx(float(np.sum(plan.plan * cost)))
    text = plan.to_csv()
    assert text.splitlines()[0] == "i,j,mass,cost"


def test_solve_discrete_ot_rejects_degenerate():
    with pytest.raises(ValueError):
        solve_discrete_ot(np.ones((2, 2)), np.zeros(2), np.array([0.5, 0.5]))


def test_transport_plan_validation():
    cost = np.ones((2, 2))
    bad = np.array([[0.5, 0.0], [0.0, 0.25]])
    with pytest.raises(ValueError):
        TransportPlan(np.array([0.5, 0.5]), np.array([0.5, 0.5]), bad, 0.75, cost)


def test_nested_d2_identity_and_dirac():
    rho1 = gaussian_density(0.0, 1.0, -8.0, 8.0, 256)
    rho2 = gaussian_density(1.0, 0.25, -8.0, 8.0, 256)
    x = MetaMeasure(np.array([0.5, 0.5]), (rho1, rho2))
    assert nested_d2(x, x) == pytest.approx(0.0, abs=1e-7)
    a = MetaMeasure.dirac(rho1)
    b = MetaMeasure.dirac(rho2)
    assert nested_d2(a, b) == pytest.approx(w2_quantile(rho1, rho2), rel=1e-12)


def test_nested_d2_two_point_example():
    x = MetaMeasure(np.array([0.5, 0.5]),
                    (empirical_lift([0.0]), empirical_lift([2.0])))
    y = MetaMeasure(np.array([0.5, 0.5]),
                    (empirical_lift([1.0]), empirical_lift([3.0])))
    # plans on 2x2 with uniform marginals: diagonal matching costs 1, the
    # anti-diagonal costs 5; the optimum takes the monotone matching
    d, plan = nested_d2(x, y, return_plan=True)
    assert d ** 2 == pytest.approx(1.0, abs=1e-10)
    assert np.allclose(plan.plan, np.diag([0.5, 0.5]), atol=1e-10)


def test_nested_d2_reduces_to_assignment_for_dirac_atoms():
    rng = np.random.default_rng(3)
    pts_x = rng.uniform(-2, 2, 6)
    pts_y = rng.uniform(-2, 2, 6)
    x = MetaMeasure(np.full(6, 1 / 6), tuple(empirical_lift([p]) for p in pts_x))
    y = MetaMeasure(np.full(6, 1 / 6), tuple(empirical_lift([p]) for p in pts_y))
    assert nested_d2(x, y) == pytest.approx(w2_assignment(pts_x, pts_y), abs=1e-10)


def test_nested_d2_squared_to_dirac_is_weighted_average():
    rho = uniform_density(0.0, 1.0, 64)
    atoms = (empirical_lift([0.2, 0.8]), empirical_lift([0.5]))
    x = MetaMeasure(np.array([0.25, 0.75]), atoms)
    expected = 0.25 * w2_squared_quantile(atoms[0], rho) + \
        0.75 * w2_squared_quantile(atoms[1], rho)
    assert nested_d2_squared_to_dirac(x, rho) == pytest.approx(expected, rel=1e-12)


# ---------------------------------------------------------------------------
# the scaled isometry


def test_isometry_single_replica_gap_is_exactly_zero():
    rng = np.random.default_rng(4)
    for n in (1, 2, 5, 16):
        a = sample_product(uniform_density(-1.0, 1.0, 64), n, 1, seed=int(rng.integers(1e6)))
        b = sample_product(uniform_density(0.0, 2.0, 64), n, 1, seed=int(rng.integers(1e6)))
        res = isometry_gap(a, b)
        assert res.gap == 0.0
        assert res.lhs == pytest.approx(w2_assignment(a.configurations[0],
                                                      b.configurations[0]) ** 2,
                                        rel=1e-12)


def test_isometry_identical_ensembles():
    ens = sample_product(gaussian_density(0.0, 1.0, -6.0, 6.0, 128), 4, 8, seed=11)
    res = isometry_gap(ens, ens)
    assert res.lhs == pytest.approx(0.0, abs=1e-12)
    assert res.rhs == pytest.approx(0.0, abs=1e-9)


def test_isometry_concentrated_ensembles():
    mass = np.zeros(512); mass[0] = 1.0
    at_zero = __import__("meanfield_lab").GridDensity(0.0, 512.0 * 1e-9, 512, mass)
    mass2 = np.zeros(512); mass2[0] = 1.0
    at_one = __import__("meanfield_lab").GridDensity(1.0, 1.0 + 512.0 * 1e-9, 512, mass2)
    a = sample_product(at_zero, 3, 16, seed=1)
    b = sample_product(at_one, 3, 16, seed=2)
    res = isometry_gap(a, b)
    assert res.lhs == pytest.approx(1.0, abs=1e-6)
    assert res.rhs == pytest.approx(1.0, abs=1e-6)


def test_isometry_requires_matching_shapes():
    rho = uniform_density(0.0, 1.0, 32)
    with pytest.raises(ValueError):
        isometry_gap(sample_product(rho, 2, 4, 1), sample_product(rho, 3, 4, 1))
    with pytest.raises(ValueError):
        isometry_gap(sample_product(rho, 2, 4, 1), sample_product(rho, 2, 5, 1))


def test_isometry_sampled_gap_is_solver_noise():
    rho_a = gaussian_density(-1.0, 0.25, -8.0, 8.0, 256)
    rho_b = gaussian_density(1.0, 0.25, -8.0, 8.0, 256)
    res = isometry_gap(sample_product(rho_a, 4, 32, seed=7),
                       sample_product(rho_b, 4, 32, seed=8))
    assert abs(res.gap) <= 1e-8 * (1.0 + res.rhs)
    assert res.rhs == pytest.approx(4.0, rel=0.2)  # mean shift 2 => d2^2 near 4
