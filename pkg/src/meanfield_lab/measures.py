"""Measure representations at the three description levels.

Single densities on a 1D interval (:class:`GridDensity`), particle
configurations and their empirical measures (:class:`EmpiricalMeasure`,
:class:`ParticleEnsemble`), measures over measures (:class:`MetaMeasure`),
and an exact finite-state oracle type (:class:`DiscreteSymmetricMeasure`)
together with the structural operators connecting them: marginals, the
empirical lift, the tensor-product lift and product sampling.

All types are immutable after construction; operations are pure functions.
"""

from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

MASS_TOL = 1e-12
TABLE_CAP = 10**7


def derive_seed(master: int, *parts) -> int:
    """Stable 63-bit seed derived from a master seed and a label tuple."""
    blob = repr((int(master), parts)).encode()
    digest = hashlib.sha256(blob).digest()
    return int.from_bytes(digest[:8], "little") & (2**63 - 1)


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class GridDensity:
    """Probability density on [left, right], stored as per-cell masses."""

    left: float
    right: float
    cells: int
    mass: np.ndarray

    def __post_init__(self):
        if not self.right > self.left:
            raise ValueError("grid requires right > left")
        if self.cells < 2:
            raise ValueError("grid requires at least 2 cells")
        mass = _frozen_array(self.mass)
        if mass.shape != (self.cells,):
            raise ValueError(f"mass must have shape ({self.cells},), got {mass.shape}")
        if np.any(mass < 0):
            raise ValueError("negative cell mass")
        total = float(mass.sum())
        if abs(total - 1.0) > MASS_TOL:
            raise ValueError(f"cell masses sum to {total!r}, not 1")
        object.__setattr__(self, "mass", mass)

    @property
    def cell_width(self) -> float:
        return (self.right - self.left) / self.cells

    @property
    def centers(self) -> np.ndarray:
        return self.left + (np.arange(self.cells) + 0.5) * self.cell_width

    @property
    def edges(self) -> np.ndarray:
        return self.left + np.arange(self.cells + 1) * self.cell_width

    def density_values(self) -> np.ndarray:
        """Piecewise-constant density values mass / cell width."""
        return self.mass / self.cell_width

    def mean(self) -> float:
        return float(self.centers @ self.mass)

    def variance(self) -> float:
        c = self.centers - self.mean()
        return float((c * c) @ self.mass)

    def entropy(self) -> float:
        """Boltzmann entropy sum m log(m / dx), with 0 log 0 = 0."""
        m = self.mass[self.mass > 0]
        return float(np.sum(m * np.log(m / self.cell_width)))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"GridDensity,left={self.left:.17g},right={self.right:.17g},cells={self.cells}\n")
        for m in self.mass:
            buf.write(f"{m:.17g}\n")
        return buf.getvalue()

    @staticmethod
    def from_csv(text: str) -> "GridDensity":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        head = lines[0].split(",")
        if head[0] != "GridDensity":
            raise ValueError(f"expected GridDensity header, got {head[0]!r}")
        params = dict(item.split("=", 1) for item in head[1:])
        mass = np.array([float(ln) for ln in lines[1:]])
        return GridDensity(float(params["left"]), float(params["right"]),
                           int(params["cells"]), mass)


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Uniformly weighted atoms: the image of a configuration under the
    empirical lift. Atoms are kept sorted (the 1D monotone coupling order)."""

    atoms: np.ndarray

    def __post_init__(self):
        atoms = np.array(self.atoms, dtype=float)
        if atoms.ndim != 1 or atoms.size == 0:
            raise ValueError("atoms must be a nonempty 1D array")
        atoms.sort()
        atoms.flags.writeable = False
        object.__setattr__(self, "atoms", atoms)

    @property
    def n(self) -> int:
        return self.atoms.size

    def mean(self) -> float:
        return float(self.atoms.mean())

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"EmpiricalMeasure,n={self.n}\n")
        for a in self.atoms:
            buf.write(f"{a:.17g}\n")
        return buf.getvalue()

    @staticmethod
    def from_csv(text: str) -> "EmpiricalMeasure":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        head = lines[0].split(",")
        if head[0] != "EmpiricalMeasure":
            raise ValueError(f"expected EmpiricalMeasure header, got {head[0]!r}")
        atoms = np.array([float(ln) for ln in lines[1:]])
        return EmpiricalMeasure(atoms)


@dataclass(frozen=True)
class ParticleEnsemble:
    """M independent N-particle configurations (a Monte Carlo stand-in for a
    symmetric N-particle law). Coordinate order within a configuration is
    not meaningful."""

    n_particles: int
    n_replicas: int
    configurations: np.ndarray
    rng_seed: int

    def __post_init__(self):
        if self.n_particles < 1 or self.n_replicas < 1:
            raise ValueError("need at least one particle and one replica")
        conf = _frozen_array(self.configurations)
        if conf.shape != (self.n_replicas, self.n_particles):
            raise ValueError(
                f"configurations must have shape ({self.n_replicas}, {self.n_particles}),"
                f" got {conf.shape}")
        if not np.all(np.isfinite(conf)):
            raise ValueError("non-finite particle position")
        object.__setattr__(self, "configurations", conf)

    def empirical(self, replica: int) -> EmpiricalMeasure:
        return EmpiricalMeasure(self.configurations[replica])

    def empiricals(self) -> list[EmpiricalMeasure]:
        return [EmpiricalMeasure(row) for row in self.configurations]


@dataclass(frozen=True)
class MetaMeasure:
    """Finitely supported probability measure over measures."""

    weights: np.ndarray
    atoms: tuple

    def __post_init__(self):
        w = _frozen_array(self.weights)
        atoms = tuple(self.atoms)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a nonempty 1D array")
        if len(atoms) != w.size:
            raise ValueError("weights and atoms must have equal length")
        if np.any(w < 0):
            raise ValueError("negative weight")
        if abs(float(w.sum()) - 1.0) > MASS_TOL:
            raise ValueError(f"weights sum to {float(w.sum())!r}, not 1")
        for a in atoms:
            if not isinstance(a, (GridDensity, EmpiricalMeasure)):
                raise TypeError(f"atom of unsupported type {type(a).__name__}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "atoms", atoms)

    @property
    def size(self) -> int:
        return len(self.atoms)

    @staticmethod
    def dirac(atom) -> "MetaMeasure":
        return MetaMeasure(np.array([1.0]), (atom,))


@dataclass(frozen=True)
class DiscreteSymmetricMeasure:
    """Exact exchangeable probability table on a finite state set.

    ``table`` has shape (k,)*n; entry [i1,...,in] is the probability of the
    tuple (sites[i1], ..., sites[in]). Used as a brute-force oracle."""

    sites: np.ndarray
    n: int
    table: np.ndarray

    def __post_init__(self):
        sites = _frozen_array(self.sites)
        if sites.ndim != 1 or sites.size == 0:
            raise ValueError("sites must be a nonempty 1D array")
        if np.unique(sites).size != sites.size:
            raise ValueError("sites must be distinct")
        if self.n < 1:
            raise ValueError("n must be positive")
        k = sites.size
        if k**self.n > TABLE_CAP:
            raise ValueError(f"table with {k}^{self.n} entries exceeds cap {TABLE_CAP}")
        table = _frozen_array(self.table)
        if table.shape != (k,) * self.n:
            raise ValueError(f"table must have shape {(k,) * self.n}, got {table.shape}")
        if np.any(table < 0):
            raise ValueError("negative probability")
        total = float(table.sum())
        if abs(total - 1.0) > MASS_TOL:
            raise ValueError(f"table sums to {total!r}, not 1")
        # Invariance under adjacent transpositions implies full permutation
        # symmetry (they generate the symmetric group).
        for axis in range(self.n - 1):
            if not np.allclose(table, np.swapaxes(table, axis, axis + 1),
                               rtol=0.0, atol=MASS_TOL):
                raise ValueError("table is not permutation symmetric")
        object.__setattr__(self, "sites", sites)
        object.__setattr__(self, "table", table)

    @property
    def k(self) -> int:
        return self.sites.size


# ---------------------------------------------------------------------------
# constructors


def uniform_density(left: float, right: float, cells: int,
                    support: tuple[float, float] | None = None) -> GridDensity:
    """Uniform density on ``support`` (default: the whole interval),
    projected exactly onto the grid by overlap lengths."""
    edges = left + np.arange(cells + 1) * ((right - left) / cells)
    a, b = support if support is not None else (left, right)
    if not (left <= a < b <= right):
        raise ValueError("support must be a nondegenerate subinterval of the grid")
    overlap = np.clip(np.minimum(edges[1:], b) - np.maximum(edges[:-1], a), 0.0, None)
    mass = overlap / (b - a)
    mass = mass / mass.sum()
    return GridDensity(left, right, cells, mass)


def gaussian_density(mean: float, var: float, left: float, right: float,
                     cells: int) -> GridDensity:
    """Gaussian projected onto the grid via exact cell masses (CDF increments),
    renormalized after truncation to [left, right]."""
    if var <= 0:
        raise ValueError("variance must be positive")
    sd = np.sqrt(var)
    edges = left + np.arange(cells + 1) * ((right - left) / cells)
    cdf = ndtr((edges - mean) / sd)
    mass = np.diff(cdf)
    total = mass.sum()
    if total <= 0:
        raise ValueError("grid does not intersect the Gaussian support")
    return GridDensity(left, right, cells, mass / total)


def product_measure(sites, weights, n: int) -> DiscreteSymmetricMeasure:
    """n-fold product of a single-site distribution ``weights`` on ``sites``."""
    sites = np.asarray(sites, dtype=float)
    w = np.asarray(weights, dtype=float)
    if w.shape != sites.shape:
        raise ValueError("weights must match sites")
    table = w.copy()
    for _ in range(n - 1):
        table = np.multiply.outer(table, w)
    return DiscreteSymmetricMeasure(sites, n, table)


def exchangeable_from_tuples(sites, tuples, weights) -> DiscreteSymmetricMeasure:
    """Symmetric measure charging the permutation orbit of each site tuple.

    Each weight is split uniformly over the distinct permutations of its tuple.
    """
    sites = np.asarray(sites, dtype=float)
    tuples = [tuple(t) for t in tuples]
    w = np.asarray(weights, dtype=float)
    if len(tuples) != w.size:
        raise ValueError("one weight per tuple required")
    n = len(tuples[0])
    k = sites.size
    site_index = {float(s): i for i, s in enumerate(sites)}
    table = np.zeros((k,) * n)
    from itertools import permutations
    for t, wt in zip(tuples, w):
        if len(t) != n:
            raise ValueError("all tuples must have equal length")
        idx = tuple(site_index[float(v)] for v in t)
        orbit = set(permutations(idx))
        for o in orbit:
            table[o] += wt / len(orbit)
    table /= table.sum()
    return DiscreteSymmetricMeasure(sites, n, table)


# ---------------------------------------------------------------------------
# operations


def marginal(m: DiscreteSymmetricMeasure, n: int) -> DiscreteSymmetricMeasure:
    """Exact n-variable marginal, summing out the last m.n - n variables."""
    if n < 1 or n > m.n:
        raise ValueError(f"marginal order {n} outside 1..{m.n}")
    if n == m.n:
        return m
    # one axis at a time, from the last: iterated marginals then agree with
    # direct ones exactly, not just to rounding
    table = m.table
    for axis in range(m.n - 1, n - 1, -1):
        table = table.sum(axis=axis)
    return DiscreteSymmetricMeasure(m.sites, n, table)


def empirical_lift(config) -> EmpiricalMeasure:
    """Empirical measure of a configuration: sorted copy, weights 1/N."""
    config = np.asarray(config, dtype=float)
    if config.ndim != 1 or config.size == 0:
        raise ValueError("configuration must be a nonempty 1D array")
    return EmpiricalMeasure(config)


def discrete_empirical_pushforward(m: DiscreteSymmetricMeasure) -> MetaMeasure:
    """Exact law of the empirical measure under ``m``.

    Tuples sharing a multiset of site values share an empirical measure;
    their probabilities are pooled."""
    k, n = m.k, m.n
    size = k**n
    idx = np.stack(np.unravel_index(np.arange(size), (k,) * n), axis=1)
    canon = np.sort(idx, axis=1)
    groups, inverse = np.unique(canon, axis=0, return_inverse=True)
    weights = np.bincount(inverse, weights=m.table.ravel(), minlength=groups.shape[0])
    keep = weights > 0
    atoms = tuple(EmpiricalMeasure(m.sites[g]) for g in groups[keep])
    return MetaMeasure(weights[keep], atoms)


def tensor_lift(x: MetaMeasure, n: int,
                sites=None) -> DiscreteSymmetricMeasure:
    """Mixture of n-fold products: the symmetric n-variable table of
    integral rho^(x) n dX(rho).

    Atoms must be empirical measures supported on a common finite site set;
    ``sites`` fixes that set explicitly (default: union of atom positions).
    """
    if n < 1:
        raise ValueError("n must be positive")
    positions = []
    for a in x.atoms:
        if not isinstance(a, EmpiricalMeasure):
            raise ValueError("tensor_lift requires finitely supported (empirical) atoms")
        positions.append(a.atoms)
    if sites is None:
        sites = np.unique(np.concatenate(positions))
    else:
        sites = np.asarray(sites, dtype=float)
    k = sites.size
    if k**n > TABLE_CAP:
        raise ValueError(f"table with {k}^{n} entries exceeds cap {TABLE_CAP}")
    table = np.zeros((k,) * n)
    for w, pos in zip(x.weights, positions):
        loc = np.searchsorted(sites, pos)
        ok = (loc < k) & (sites[np.minimum(loc, k - 1)] == pos)
        if not np.all(ok):
            raise ValueError("atom supported outside the declared site set")
        p = np.bincount(loc, minlength=k) / pos.size
        block = p.copy()
        for _ in range(n - 1):
            block = np.multiply.outer(block, p)
        table += w * block
    return DiscreteSymmetricMeasure(sites, n, table)


def sample_product(rho: GridDensity, n_particles: int, n_replicas: int,
                   seed: int) -> ParticleEnsemble:
    """M x N i.i.d. samples from ``rho`` by inverse CDF on the grid
    (uniform placement within a cell). Deterministic given ``seed``."""
    if n_particles < 1 or n_replicas < 1:
        raise ValueError("need at least one particle and one replica")
    rng = np.random.default_rng(seed)
    u = rng.random((n_replicas, n_particles))
    cs = np.cumsum(rho.mass)
    cs[-1] = 1.0
    cell = np.searchsorted(cs, u, side="right")
    cell = np.minimum(cell, rho.cells - 1)
    prev = cs[cell] - rho.mass[cell]
    frac = np.where(rho.mass[cell] > 0, (u - prev) / np.where(rho.mass[cell] > 0, rho.mass[cell], 1.0), 0.0)
    positions = rho.left + (cell + frac) * rho.cell_width
    return ParticleEnsemble(n_particles, n_replicas, positions, seed)
