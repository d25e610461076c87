"""Confinement and interaction potentials and the free-energy functionals.

Potentials carry analytic value/gradient/hessian callables plus a claimed
convexity modulus. The energy side implements the N-body potential energy,
its Hessian quadratic form, the doubling-condition scan, and the mean-field,
product and meta-level free energies (Boltzmann entropy in cell-mass form).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .measures import GridDensity, MetaMeasure, EmpiricalMeasure


@dataclass(frozen=True)
class Potential:
    """Scalar potential with analytic derivatives.

    Callables are vectorized over numpy arrays. ``lambda_claimed`` is the
    convexity modulus: a lower bound for the second derivative on the region
    of interest.
    """

    kind: str
    lambda_claimed: float
    evaluate: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    hessian: Callable[[np.ndarray], np.ndarray]

    def validate(self, left: float, right: float, points: int = 257) -> None:
        """Grid-scan sanity check: bounded below, derivatives consistent with
        central finite differences."""
        xs = np.linspace(left, right, points)
        vals = np.asarray(self.evaluate(xs), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise ValueError(f"potential {self.kind} non-finite on [{left}, {right}]")
        h = 1e-5 * np.maximum(1.0, np.abs(xs))
        fd_grad = (self.evaluate(xs + h) - self.evaluate(xs - h)) / (2 * h)
        grad = np.asarray(self.gradient(xs), dtype=float)
        tol = 1e-6 * (1.0 + np.abs(grad)) + 1e-9 * np.abs(vals)
        if np.any(np.abs(fd_grad - grad) > tol):
            raise ValueError(f"potential {self.kind}: gradient inconsistent with values")
        h2 = 1e-4 * np.maximum(1.0, np.abs(xs))
        fd_hess = (self.evaluate(xs + h2) - 2 * vals + self.evaluate(xs - h2)) / (h2 * h2)
        hess = np.asarray(self.hessian(xs), dtype=float)
        # second term: roundoff allowance for the second difference
        tol = 1e-6 * (1.0 + np.abs(hess)) + 64 * np.finfo(float).eps * np.abs(vals) / (h2 * h2)
        if np.any(np.abs(fd_hess - hess) > tol):
            raise ValueError(f"potential {self.kind}: hessian inconsistent with values")


def quadratic(a: float = 1.0) -> Potential:
    """V(x) = a x^2 / 2, convexity modulus a."""
    return Potential(
        kind=f"quadratic(a={a:g})",
        lambda_claimed=float(a),
        evaluate=lambda x: 0.5 * a * np.square(x),
        gradient=lambda x: a * np.asarray(x, dtype=float),
        hessian=lambda x: np.full_like(np.asarray(x, dtype=float), float(a)),
    )


def double_well(a: float = 1.0, scan_radius: float = 8.0) -> Potential:
    """V(x) = a (1 - x^2)^2; modulus is the scanned minimum of V'' on
    [-scan_radius, scan_radius] (attained at 0, where V'' = -4a)."""
    hess = lambda x: 4.0 * a * (3.0 * np.square(x) - 1.0)
    xs = np.linspace(-scan_radius, scan_radius, 4097)
    lam = float(np.min(hess(xs)))
    return Potential(
        kind=f"double_well(a={a:g})",
        lambda_claimed=lam,
        evaluate=lambda x: a * np.square(1.0 - np.square(x)),
        gradient=lambda x: 4.0 * a * (np.power(x, 3) - np.asarray(x, dtype=float)),
        hessian=hess,
    )


def zero_potential() -> Potential:
    return Potential(
        kind="zero",
        lambda_claimed=0.0,
        evaluate=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        gradient=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        hessian=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
    )


def custom_potential(evaluate, gradient, hessian, lambda_claimed: float,
                     kind: str = "custom") -> Potential:
    return Potential(kind=kind, lambda_claimed=float(lambda_claimed),
                     evaluate=evaluate, gradient=gradient, hessian=hessian)


def is_zero(pot: Potential) -> bool:
    return pot.kind == "zero"


def _check_even(H: Potential, diffs: np.ndarray) -> None:
    d = np.unique(np.abs(np.asarray(diffs, dtype=float)))
    if d.size == 0:
        return
    a = np.asarray(H.evaluate(d), dtype=float)
    b = np.asarray(H.evaluate(-d), dtype=float)
    if np.any(np.abs(a - b) > 1e-10 * (1.0 + np.abs(a))):
        raise ValueError("interaction potential must be even: H(x) = H(-x)")


@dataclass(frozen=True)
class EnergyReport:
    """Free-energy decomposition; total is the sum of the three parts."""

    confinement: float
    interaction: float
    entropy: float

    @property
    def total(self) -> float:
        return self.confinement + self.interaction + self.entropy


# ---------------------------------------------------------------------------
# N-body potential energy


def w_n(config, V: Potential, H: Potential) -> float:
    """Per-configuration potential energy
    sum_i V(x_i) + (1/2N) sum_{i != j} H(x_i - x_j), ordered pairs."""
    x = np.asarray(config, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("configuration must be a nonempty 1D array")
    n = x.size
    conf = float(np.sum(V.evaluate(x)))
    if n == 1 or is_zero(H):
        return conf
    diff = x[:, None] - x[None, :]
    _check_even(H, diff[~np.eye(n, dtype=bool)])
    hv = np.asarray(H.evaluate(diff), dtype=float)
    np.fill_diagonal(hv, 0.0)
    return conf + float(hv.sum()) / (2.0 * n)


def hessian_quadratic_form(config, v, V: Potential, H: Potential) -> float:
    """Second variation of the N-body energy along direction ``v``:
    sum_i V''(x_i) v_i^2 + (1/2N) sum_{i != j} H''(x_i - x_j)(v_i - v_j)^2."""
    x = np.asarray(config, dtype=float)
    w = np.asarray(v, dtype=float)
    if x.shape != w.shape or x.ndim != 1:
        raise ValueError("config and direction must be 1D arrays of equal length")
    if not np.any(w != 0):
        raise ValueError("direction must be nonzero")
    n = x.size
    out = float(np.sum(V.hessian(x) * w * w))
    if n == 1 or is_zero(H):
        return out
    dx = x[:, None] - x[None, :]
    dv = w[:, None] - w[None, :]
    hpp = np.asarray(H.hessian(dx), dtype=float)
    np.fill_diagonal(hpp, 0.0)
    return out + float(np.sum(hpp * dv * dv)) / (2.0 * n)


def hessian_quadratic_form_fd(config, v, V: Potential, H: Potential,
                              eps: float = 1e-4) -> float:
    """Independent finite-difference route: second difference of the energy
    along ``v``. Must agree with the analytic quadratic form."""
    x = np.asarray(config, dtype=float)
    w = np.asarray(v, dtype=float)
    f0 = w_n(x, V, H)
    fp = w_n(x + eps * w, V, H)
    fm = w_n(x - eps * w, V, H)
    return (fp - 2.0 * f0 + fm) / (eps * eps)


def convexity_modulus_estimate(V: Potential, H: Potential, N: int, trials: int,
                               seed: int, radius: float = 2.0) -> float:
    """Minimum of the Hessian quadratic form over random configurations in
    [-radius, radius]^N and random unit directions."""
    if trials < 1:
        raise ValueError("trials must be positive")
    rng = np.random.default_rng(seed)
    best = np.inf
    for _ in range(trials):
        x = rng.uniform(-radius, radius, size=N)
        v = rng.standard_normal(N)
        v /= np.linalg.norm(v)
        best = min(best, hessian_quadratic_form(x, v, V, H))
    return float(best)


def doubling_check(H: Potential, scan_points) -> tuple[bool, float]:
    """Smallest C with H(x+y) <= C (1 + H(x) + H(y)) over the scan grid,
    after shifting H to be nonnegative on the scan."""
    xs = np.asarray(scan_points, dtype=float)
    vals = np.asarray(H.evaluate(xs), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise ValueError("interaction potential non-finite on scan grid")
    shift = float(vals.min())
    hx = vals - shift
    sums = xs[:, None] + xs[None, :]
    hxy = np.asarray(H.evaluate(sums), dtype=float) - shift
    if not np.all(np.isfinite(hxy)):
        raise ValueError("interaction potential non-finite on scan grid sums")
    denom = 1.0 + hx[:, None] + hx[None, :]
    constant = float(np.max(hxy / denom))
    constant = max(constant, 0.0)
    return True, constant


# ---------------------------------------------------------------------------
# free energies


def interaction_quadrature(rho: GridDensity, H: Potential) -> float:
    """Midpoint quadrature of the double integral of H(x - y) drho drho."""
    if is_zero(H):
        return 0.0
    c = rho.centers
    kernel = np.asarray(H.evaluate(c[:, None] - c[None, :]), dtype=float)
    return float(rho.mass @ kernel @ rho.mass)


def free_energy_mf(rho: GridDensity, V: Potential, H: Potential) -> EnergyReport:
    """Mean-field free energy: confinement + half the pair interaction +
    Boltzmann entropy, all by midpoint quadrature on the grid."""
    conf = float(np.asarray(V.evaluate(rho.centers), dtype=float) @ rho.mass)
    inter = 0.5 * interaction_quadrature(rho, H)
    return EnergyReport(confinement=conf, interaction=inter, entropy=rho.entropy())


def free_energy_product(rho: GridDensity, N: int, V: Potential, H: Potential) -> float:
    """Per-particle free energy of the N-fold product of ``rho``, in closed
    form: the pair interaction carries the finite-N factor (N-1)/2N."""
    if N < 1:
        raise ValueError("N must be positive")
    conf = float(np.asarray(V.evaluate(rho.centers), dtype=float) @ rho.mass)
    quad = interaction_quadrature(rho, H)
    return conf + (N - 1) / (2.0 * N) * quad + rho.entropy()


def free_energy_meta(x: MetaMeasure, V: Potential, H: Potential) -> float:
    """Weighted average of the mean-field free energy over the atoms.

    With V = H = 0 this is the meta-level entropy of a finitely supported
    meta-measure: the weighted average of the atom entropies."""
    for a in x.atoms:
        if isinstance(a, EmpiricalMeasure):
            raise ValueError("meta free energy requires density atoms (entropy of "
                             "atomic measures is undefined)")
    return float(sum(w * free_energy_mf(a, V, H).total
                     for w, a in zip(x.weights, x.atoms)))
