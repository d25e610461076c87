import numpy as np
import pytest

from meanfield_lab import (
    PdeConfig,
    free_energy_mf,
    gaussian_density,
    ou_oracle,
    quadratic,
    semigroup_step,
    solve,
    uniform_density,
    w2_quantile,
    zero_potential,
)


def ou_cfg(cells=256, dt=5e-4, t_end=1.0, snaps=(), advection="hybrid"):
    return PdeConfig(dt=dt, t_end=t_end, V=quadratic(1.0), H=zero_potential(),
                     grid=(-8.0, 8.0, cells), snapshot_times=snaps,
                     advection=advection)


def test_cfl_validation():
    with pytest.raises(ValueError):
        ou_cfg(cells=1024, dt=5e-4)  # violates dt <= 0.4 dx^2/(2 + dx max|b|)
    ou_cfg(cells=1024, dt=4e-5)


def test_free_uniform_is_stationary():
    cfg = PdeConfig(dt=4e-5, t_end=0.01, V=zero_potential(), H=zero_potential(),
                    grid=(0.0, 1.0, 64), snapshot_times=(0.01,))
    rho = uniform_density(0.0, 1.0, 64)
    out = semigroup_step(rho, cfg)
    assert np.array_equal(out.mass, rho.mass)


def test_mass_conserved_every_step():
    cfg = ou_cfg(cells=256, dt=5e-4)
    rho = gaussian_density(1.0, 0.25, -8.0, 8.0, 256)
    for _ in range(200):
        rho = semigroup_step(rho, cfg)
        assert abs(rho.mass.sum() - 1.0) <= 1e-12
        assert rho.mass.min() >= -1e-12


def test_ou_oracle_values():
    assert ou_oracle(1.0, 0.25, 0.0) == (1.0, 0.25)
    m, v = ou_oracle(1.0, 0.25, 50.0)
    assert m == pytest.approx(0.0, abs=1e-12)
    assert v == pytest.approx(1.0, abs=1e-12)
    m, v = ou_oracle(1.0, 0.25, 1.0)
    assert m == pytest.approx(np.exp(-1.0))
    assert v == pytest.approx(1.0 - 0.75 * np.exp(-2.0))
    with pytest.raises(ValueError):
        ou_oracle(0.0, -1.0, 0.5)


def test_ou_moments_match_oracle():
    cfg = ou_cfg(cells=512, dt=1.2e-4, t_end=1.0, snaps=(0.25, 0.5, 1.0))
    rho0 = gaussian_density(1.0, 0.25, -8.0, 8.0, 512)
    for t, rho in solve(rho0, cfg):
        m, v = ou_oracle(1.0, 0.25, t)
        assert rho.mean() == pytest.approx(m, abs=2e-4)
        assert rho.variance() == pytest.approx(v, abs=5e-4)


def test_solve_time_zero():
    cfg = ou_cfg(t_end=0.0, snaps=(0.0,))
    rho0 = gaussian_density(0.0, 1.0, -8.0, 8.0, 256)
    snaps = solve(rho0, cfg)
    assert len(snaps) == 1
    assert snaps[0][0] == 0.0
    assert np.array_equal(snaps[0][1].mass, rho0.mass)


def test_ou_ergodicity_to_standard_gaussian():
    cfg = ou_cfg(cells=256, dt=5e-4, t_end=6.0, snaps=(6.0,))
    rho0 = gaussian_density(-2.0, 0.09, -8.0, 8.0, 256)
    (_, rho), = solve(rho0, cfg)
    target = gaussian_density(0.0, 1.0, -8.0, 8.0, 256)
    assert w2_quantile(rho, target) < 5e-3


def test_even_initial_condition_keeps_zero_mean():
    cfg = PdeConfig(dt=1.2e-4, t_end=0.5, V=quadratic(1.0), H=quadratic(0.5),
                    grid=(-6.0, 6.0, 384), snapshot_times=(0.25, 0.5))
    rho0 = gaussian_density(0.0, 0.5, -6.0, 6.0, 384)
    for _, rho in solve(rho0, cfg):
        assert abs(rho.mean()) < 1e-10


def test_free_energy_dissipates():
    from meanfield_lab import double_well

    cases = [
        (quadratic(1.0), zero_potential(), gaussian_density(1.0, 0.25, -8.0, 8.0, 512),
         (-8.0, 8.0, 512), 1.2e-4),
        (double_well(1.0), quadratic(0.5), gaussian_density(0.5, 1.0, -3.0, 3.0, 384),
         (-3.0, 3.0, 384), 8e-6),
    ]
    for V, H, rho0, grid, dt in cases:
        cfg = PdeConfig(dt=dt, t_end=0.5, V=V, H=H, grid=grid,
                        snapshot_times=tuple(np.linspace(0.05, 0.5, 10)))
        energies = [free_energy_mf(r, V, H).total for _, r in solve(rho0, cfg)]
        budget = 1e-6 + 10 * (grid[1] - grid[0]) ** 2 / grid[2] ** 2
        for a, b in zip(energies[:-1], energies[1:]):
            assert b <= a + budget


def test_interacting_pde_matches_large_n_particles():
    # quadratic confinement plus quadratic attraction: a single large-N
    # replica's empirical measure should track the mean-field density
    from meanfield_lab import SdeConfig, evolve, sample_product

    V, H = quadratic(1.0), quadratic(0.5)
    grid = (-8.0, 8.0, 512)
    rho0 = gaussian_density(1.0, 0.25, -8.0, 8.0, 512)
    pde = PdeConfig(dt=1e-4, t_end=1.0, V=V, H=H, grid=grid,
                    snapshot_times=(0.5, 1.0))
    pde_snaps = solve(rho0, pde)
    sde = SdeConfig(dt=2e-3, t_end=1.0, V=V, H=H, domain=(-8.0, 8.0), seed=17,
                    snapshot_times=(0.5, 1.0))
    ens0 = sample_product(rho0, 1024, 1, seed=3)
    sde_snaps = evolve(ens0, sde)
    for (tp, rho), (ts, ens) in zip(pde_snaps, sde_snaps):
        d = w2_quantile(ens.empirical(0), rho)
        # sampling error ~ N^{-1/2} plus scheme bias
        assert d < 0.15


def test_negative_mass_guard():
    # an aggressively coarse advection-dominated setup cannot arise within
    # the CFL bound, so drive the guard directly on a crafted mass vector
    from meanfield_lab.fokker_planck import _Workspace, StabilityError

    cfg = PdeConfig(dt=2e-4, t_end=0.5, V=quadratic(1.0), H=zero_potential(),
                    grid=(-4.0, 4.0, 128), snapshot_times=(0.5,))
    ws = _Workspace(cfg)
    mass = np.zeros(128)
    mass[0] = 1.0
    out = ws.step_mass(mass)  # boundary cell: no-flux keeps mass in
    assert abs(out.sum() - 1.0) < 1e-12
