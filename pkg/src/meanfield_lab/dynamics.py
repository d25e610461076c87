"""Euler-Maruyama simulation of the interacting particle system.

Each particle feels the confinement force, the mean pairwise interaction
force, and unit-temperature noise (diffusion coefficient sqrt(2), matching
the generator of the mean-field equation). Bounded domains use reflecting
(no-flux) boundaries implemented by folding.

Noise is drawn from counter-based (Philox) blocks keyed by the master seed
and the step index, so trajectories are reproducible regardless of replica
scheduling and permutation tests can replay matched noise.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .measures import ParticleEnsemble
from .potentials import Potential, is_zero

# cap on the replica-block size of the O(N^2) pairwise force buffer
_PAIR_BUDGET = 4_000_000


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SdeConfig:
    """Time stepping and model parameters for the particle simulation.

    ``domain=None`` means the whole line; otherwise positions reflect at the
    interval ends. ``snapshot_times`` are matched to the nearest step time.
    """

    dt: float
    t_end: float
    V: Potential
    H: Potential
    domain: tuple[float, float] | None
    seed: int
    snapshot_times: tuple[float, ...] = ()

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.t_end < 0:
            raise ValueError("t_end must be nonnegative")
        if self.t_end > 0 and self.dt > self.t_end + 1e-15:
            raise ValueError("dt must not exceed t_end")
        snaps = tuple(float(t) for t in self.snapshot_times)
        if snaps != tuple(sorted(snaps)):
            raise ValueError("snapshot_times must be sorted")
        if snaps and (snaps[0] < 0 or snaps[-1] > self.t_end + 1e-12):
            raise ValueError("snapshot_times must lie in [0, t_end]")
        if not snaps:
            snaps = (self.t_end,)
        object.__setattr__(self, "snapshot_times", snaps)
        if self.domain is not None:
            left, right = self.domain
            if not right > left:
                raise ValueError("domain requires right > left")
            object.__setattr__(self, "domain", (float(left), float(right)))
        lip = self._drift_lipschitz_scale()
        if self.dt * lip >= 0.5:
            raise ValueError(
                f"dt*Lipschitz scale = {self.dt * lip:.3g} >= 0.5; reduce dt")

    def _drift_lipschitz_scale(self) -> float:
        if self.domain is not None:
            left, right = self.domain
        else:
            # heuristic scan window for the whole line
            left, right = -4.0, 4.0
        xs = np.linspace(left, right, 513)
        self.V.validate(left, right)
        gv = np.asarray(self.V.gradient(xs), dtype=float)
        scale = float(np.max(np.abs(np.diff(gv) / np.diff(xs))))
        if not is_zero(self.H):
            ds = np.linspace(-(right - left), right - left, 1025)
            self.H.validate(ds[0], ds[-1])
            gh = np.asarray(self.H.gradient(ds), dtype=float)
            scale += float(np.max(np.abs(np.diff(gh) / np.diff(ds))))
        return scale

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt)) if self.t_end > 0 else 0


def step_noise(seed: int, step_index: int, n_replicas: int, n_particles: int) -> np.ndarray:
    """Standard-normal block for one step, from a counter-based stream keyed
    by (seed, step index); entry [r, p] is the increment of particle p in
    replica r."""
    bitgen = np.random.Philox(key=seed & ((1 << 128) - 1),
                              counter=[0, 0, 0, step_index])
    return np.random.Generator(bitgen).standard_normal((n_replicas, n_particles))


def _interaction_force(x: np.ndarray, H: Potential) -> np.ndarray:
    """(1/N) sum_j H'(x_i - x_j), rows are replicas. O(N^2) per replica,
    evaluated in replica blocks to bound memory."""
    m, n = x.shape
    out = np.empty_like(x)
    block = max(1, _PAIR_BUDGET // (n * n))
    for start in range(0, m, block):
        xb = x[start:start + block]
        diff = xb[:, :, None] - xb[:, None, :]
        forces = np.asarray(H.gradient(diff), dtype=float)
        idx = np.arange(n)
        forces[:, idx, idx] = 0.0
        out[start:start + block] = forces.sum(axis=2) / n
    return out


def _reflect(x: np.ndarray, domain: tuple[float, float]) -> np.ndarray:
    left, right = domain
    width = right - left
    y = np.mod(x - left, 2.0 * width)
    return left + np.minimum(y, 2.0 * width - y)


def step(ensemble: ParticleEnsemble, cfg: SdeConfig, step_index: int = 0,
         noise: np.ndarray | None = None) -> ParticleEnsemble:
    """One Euler-Maruyama step for every replica.

    x <- x - [V'(x_i) + (1/N) sum_{j != i} H'(x_i - x_j)] dt + sqrt(2 dt) xi,
    followed by reflection into the domain. ``noise`` overrides the seeded
    block (used by permutation tests)."""
    x = ensemble.configurations
    m, n = x.shape
    if noise is None:
        noise = step_noise(cfg.seed, step_index, m, n)
    elif noise.shape != x.shape:
        raise ValueError("noise block must match the ensemble shape")
    drift = -np.asarray(cfg.V.gradient(x), dtype=float)
    if n > 1 and not is_zero(cfg.H):
        drift -= _interaction_force(x, cfg.H)
    if not np.all(np.isfinite(drift)):
        bad = np.argwhere(~np.isfinite(drift))[0]
        r, p = int(bad[0]), int(bad[1])
        raise SimulationError(
            f"non-finite drift at replica {r}, particle {p}: "
            f"position={x[r, p]!r}, force={drift[r, p]!r}")
    new = x + drift * cfg.dt + np.sqrt(2.0 * cfg.dt) * noise
    if cfg.domain is not None:
        new = _reflect(new, cfg.domain)
    if not np.all(np.isfinite(new)):
        raise SimulationError("non-finite position after step")
    return ParticleEnsemble(n, m, new, ensemble.rng_seed)


def evolve(ensemble: ParticleEnsemble, cfg: SdeConfig) -> list[tuple[float, ParticleEnsemble]]:
    """Run the simulation, returning (time, ensemble) snapshots at the step
    times nearest to ``cfg.snapshot_times``."""
    n_steps = cfg.n_steps
    wanted = [min(int(round(t / cfg.dt)), n_steps) if n_steps > 0 else 0
              for t in cfg.snapshot_times]
    out: list[tuple[float, ParticleEnsemble]] = []
    state = ensemble
    k = 0
    for target in wanted:
        while k < target:
            state = step(state, cfg, step_index=k)
            k += 1
        out.append((k * cfg.dt, state))
    return out


def with_snapshots(cfg: SdeConfig, times) -> SdeConfig:
    return replace(cfg, snapshot_times=tuple(times))
