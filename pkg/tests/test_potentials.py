import numpy as np
import pytest

from meanfield_lab import (
    MetaMeasure,
    EmpiricalMeasure,
    convexity_modulus_estimate,
    custom_potential,
    double_well,
    doubling_check,
    free_energy_meta,
    free_energy_mf,
    free_energy_product,
    gaussian_density,
    hessian_quadratic_form,
    hessian_quadratic_form_fd,
    interaction_quadrature,
    quadratic,
    uniform_density,
    w_n,
    zero_potential,
)


def test_potential_factories_and_moduli():
    assert quadratic(2.0).lambda_claimed == pytest.approx(2.0)
    assert zero_potential().lambda_claimed == 0.0
    dw = double_well(1.0)
    assert dw.lambda_claimed == pytest.approx(-4.0, abs=1e-4)
    dw.validate(-8.0, 8.0)
    quadratic(1.0).validate(-8.0, 8.0)


def test_validate_catches_wrong_gradient():
    bad = custom_potential(
        evaluate=lambda x: np.square(x),
        gradient=lambda x: np.asarray(x, dtype=float),  # wrong: should be 2x
        hessian=lambda x: np.full_like(np.asarray(x, dtype=float), 2.0),
        lambda_claimed=2.0)
    with pytest.raises(ValueError):
        bad.validate(-1.0, 1.0)


# ---------------------------------------------------------------------------
# N-body energy


def test_w_n_single_particle():
    V = quadratic(1.0)
    assert w_n([2.0], V, quadratic(5.0)) == pytest.approx(2.0)


def test_w_n_pair_interaction_only():
    V = zero_potential()
    H = quadratic(2.0)  # H(x) = x^2
    assert w_n([0.0, 1.0], V, H) == pytest.approx(0.5)


def test_w_n_confinement_only():
    V = quadratic(1.0)
    assert w_n([1.0, 2.0], V, zero_potential()) == pytest.approx(2.5)


def test_w_n_rejects_odd_interaction():
    odd = custom_potential(
        evaluate=lambda x: np.asarray(x, dtype=float),
        gradient=lambda x: np.ones_like(np.asarray(x, dtype=float)),
        hessian=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        lambda_claimed=0.0, kind="linear")
    with pytest.raises(ValueError):
        w_n([0.0, 1.0], zero_potential(), odd)


# ---------------------------------------------------------------------------
# Hessian quadratic form


def test_hessian_form_convex_quadratics():
    V = quadratic(1.0)
    H = quadratic(1.0)
    rng = np.random.default_rng(0)
    x = rng.standard_normal(6)
    v = rng.standard_normal(6)
    v /= np.linalg.norm(v)
    n = 6
    dv = v[:, None] - v[None, :]
    expected = np.sum(v * v) + (dv * dv)[~np.eye(n, dtype=bool)].sum() / (2 * n)
    assert hessian_quadratic_form(x, v, V, H) == pytest.approx(expected, rel=1e-12)
    assert expected >= 1.0


def test_hessian_form_concave_pair_example():
    V = quadratic(-1.0)
    H = quadratic(-1.0)
    v = np.array([1.0, -1.0]) / np.sqrt(2.0)
    got = hessian_quadratic_form([0.3, -0.7], v, V, H)
    assert got == pytest.approx(-2.0, rel=1e-12)
    assert got >= 3 * (-1.0)


def test_hessian_form_decouples_without_interaction():
    V = double_well(1.0)
    x = np.array([0.5, -1.5, 2.0])
    v = np.array([1.0, 2.0, -1.0])
    expected = float(np.sum(V.hessian(x) * v * v))
    assert hessian_quadratic_form(x, v, V, zero_potential()) == pytest.approx(expected)


def test_hessian_form_rejects_zero_direction():
    with pytest.raises(ValueError):
        hessian_quadratic_form([0.0], [0.0], quadratic(1.0), zero_potential())


def test_hessian_analytic_vs_finite_difference():
    rng = np.random.default_rng(42)
    for V, H in [(quadratic(1.0), quadratic(0.5)),
                 (double_well(1.0), quadratic(0.5)),
                 (double_well(0.7), double_well(0.3))]:
        for _ in range(25):
            n = rng.integers(1, 17)
            x = rng.uniform(-2.0, 2.0, n)
            v = rng.standard_normal(n)
            v /= np.linalg.norm(v)
            a = hessian_quadratic_form(x, v, V, H)
            b = hessian_quadratic_form_fd(x, v, V, H)
            assert abs(a - b) <= 1e-5 * (1.0 + abs(a))


def test_convexity_modulus_three_lambda_bound():
    # convex case: estimate stays above 0 = min(3*1, 0)
    est = convexity_modulus_estimate(quadratic(1.0), quadratic(1.0), N=8,
                                     trials=200, seed=1)
    assert est >= -1e-8
    # concave case lambda = -1: bounded below by -3
    est = convexity_modulus_estimate(quadratic(-1.0), quadratic(-1.0), N=8,
                                     trials=500, seed=2)
    assert est >= -3.0 - 1e-8
    # no interaction: bounded below by lambda itself
    est = convexity_modulus_estimate(quadratic(-0.5), zero_potential(), N=8,
                                     trials=200, seed=3)
    assert est >= -0.5 - 1e-8


# ---------------------------------------------------------------------------
# doubling condition


def test_doubling_quadratic():
    holds, c = doubling_check(quadratic(2.0), np.linspace(-5, 5, 201))
    assert holds and c <= 2.0 + 1e-12


def test_doubling_zero():
    holds, c = doubling_check(zero_potential(), np.linspace(-5, 5, 101))
    assert holds and c == 0.0


def test_doubling_quartic():
    quartic = custom_potential(
        evaluate=lambda x: np.power(x, 4),
        gradient=lambda x: 4.0 * np.power(x, 3),
        hessian=lambda x: 12.0 * np.square(x),
        lambda_claimed=0.0, kind="quartic")
    holds, c = doubling_check(quartic, np.linspace(-4, 4, 161))
    assert holds and c <= 8.0 + 1e-12


# ---------------------------------------------------------------------------
# free energies


def test_free_energy_mf_zero_case():
    rho = uniform_density(0.0, 1.0, 128)
    rep = free_energy_mf(rho, zero_potential(), zero_potential())
    assert rep.total == pytest.approx(0.0, abs=1e-12)


def test_free_energy_mf_uniform_interaction():
    rho = uniform_density(0.0, 1.0, 1024)
    rep = free_energy_mf(rho, zero_potential(), quadratic(2.0))
    # half of E|X-Y|^2 = Var/… : E(X-Y)^2 = 1/6 for U[0,1]
    assert rep.interaction == pytest.approx(1.0 / 12.0, abs=1e-6)
    assert rep.total == pytest.approx(rep.confinement + rep.interaction + rep.entropy)


def test_free_energy_mf_entropy_on_wider_interval():
    rho = uniform_density(0.0, 2.0, 512)
    rep = free_energy_mf(rho, zero_potential(), zero_potential())
    assert rep.total == pytest.approx(-np.log(2.0), abs=1e-12)


def test_free_energy_product_limits():
    rho = gaussian_density(0.5, 0.5, -6.0, 6.0, 512)
    V, H = quadratic(1.0), quadratic(1.0)
    mf = free_energy_mf(rho, V, H)
    # N = 1: no interaction term
    assert free_energy_product(rho, 1, V, H) == pytest.approx(
        mf.confinement + mf.entropy, rel=1e-12)
    # H = 0: equal to the mean-field value for every N
    for n in (1, 2, 7):
        assert free_energy_product(rho, n, V, zero_potential()) == pytest.approx(
            free_energy_mf(rho, V, zero_potential()).total, rel=1e-12)
    # exact finite-N gap
    quad = interaction_quadrature(rho, H)
    for n in (1, 2, 10, 100):
        gap = free_energy_product(rho, n, V, H) - mf.total
        assert gap == pytest.approx(-quad / (2 * n), abs=1e-12)
    # monotone increase toward the mean-field value when the quadrature is >= 0
    vals = [free_energy_product(rho, n, V, H) for n in (1, 2, 4, 8, 64)]
    assert all(a <= b + 1e-12 for a, b in zip(vals, vals[1:]))
    assert vals[-1] <= mf.total + 1e-12


def test_free_energy_meta_affine_and_entropy_identity():
    rho1 = uniform_density(0.0, 1.0, 128)
    rho2 = uniform_density(0.0, 2.0, 128)
    V = H = zero_potential()
    x = MetaMeasure(np.array([0.75, 0.25]), (rho1, rho2))
    # discrete meta-measure entropy: weighted atom entropies
    assert free_energy_meta(x, V, H) == pytest.approx(0.25 * -np.log(2.0), abs=1e-12)
    # affine in the weights
    y = MetaMeasure(np.array([0.25, 0.75]), (rho1, rho2))
    half = MetaMeasure(np.array([0.5, 0.5]), (rho1, rho2))
    a = free_energy_meta(x, V, H)
    b = free_energy_meta(y, V, H)
    assert free_energy_meta(half, V, H) == pytest.approx(0.5 * (a + b), abs=1e-12)


def test_free_energy_meta_dirac_and_rejects_empirical_atoms():
    rho = gaussian_density(0.0, 1.0, -6.0, 6.0, 256)
    V, H = quadratic(1.0), quadratic(0.5)
    x = MetaMeasure.dirac(rho)
    assert free_energy_meta(x, V, H) == pytest.approx(free_energy_mf(rho, V, H).total)
    bad = MetaMeasure.dirac(EmpiricalMeasure([0.0, 1.0]))
    with pytest.raises(ValueError):
        free_energy_meta(bad, V, H)
