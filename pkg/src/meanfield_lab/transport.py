"""2-Wasserstein distances at all three description levels.

``w2_quantile`` is the exact 1D distance via piecewise closed-form quantile
integration, ``w2_assignment`` the configuration-space distance (sorting
route plus an assignment-solver cross-check), ``nested_d2`` the distance
between measures over measures (exact discrete OT on a ground-cost matrix of
squared 1D distances), and ``isometry_gap`` compares the two levels on
ensembles, which the lifting map makes equal.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import io

import numpy as np
import scipy.sparse as sparse
from scipy.optimize import linear_sum_assignment, linprog

from .measures import EmpiricalMeasure, GridDensity, MetaMeasure, ParticleEnsemble

PLAN_TOL = 1e-10
ATOM_CAP = 2048


# ---------------------------------------------------------------------------
# quantile representation of a 1D measure


def _sorted_mean_sq(xs: np.ndarray, ys: np.ndarray) -> float:
    d = xs - ys
    return float(np.mean(d * d))


def _segments(m) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, float]:
    """Piecewise-linear quantile description: on segment c, for cumulative
    mass q in (cs[c-1], cs[c]], Q(q) = x0[c] + slope[c] * (q - q0[c]),
    clamped to the segment's spatial extent (last tuple entry)."""
    if isinstance(m, EmpiricalMeasure):
        n = m.n
        cs = np.arange(1, n + 1) / n
        x0 = m.atoms
        slope = np.zeros(n)
        q0 = np.arange(n) / n
        return cs, x0, slope, q0, 0.0
    if isinstance(m, GridDensity):
        # cumsum of tiny tail masses can overshoot 1 by an ulp; keep the
        # breakpoints monotone with an exact endpoint
        cs = np.minimum(np.cumsum(m.mass), 1.0)
        cs[-1] = 1.0
        x0 = m.left + np.arange(m.cells) * m.cell_width
        with np.errstate(divide="ignore"):
            slope = np.where(m.mass > 0, m.cell_width / np.where(m.mass > 0, m.mass, 1.0), 0.0)
        q0 = cs - m.mass
        return cs, x0, slope, q0, m.cell_width
    raise TypeError(f"unsupported measure type {type(m).__name__}")


def _quantile_eval(segs, seg_idx: np.ndarray, q: np.ndarray) -> np.ndarray:
    _, x0, slope, q0, width = segs
    # clamping keeps near-empty cells (huge slopes) from amplifying ulp-level
    # breakpoint error; the quantile cannot leave its cell
    return x0[seg_idx] + np.clip(slope[seg_idx] * (q - q0[seg_idx]), 0.0, width)


def w2_squared_quantile(a, b) -> float:
    """Squared exact 1D 2-Wasserstein distance via quantile integration.

    Equal-size empirical measures reduce to the sorted pairwise matching;
    otherwise the two cumulative-mass breakpoint sets are merged and the
    squared quantile difference is integrated segment by segment (Simpson,
    exact for the piecewise-quadratic integrand).
    """
    if isinstance(a, EmpiricalMeasure) and isinstance(b, EmpiricalMeasure) and a.n == b.n:
        return _sorted_mean_sq(a.atoms, b.atoms)
    segs_a = _segments(a)
    segs_b = _segments(b)
    q = np.unique(np.concatenate((np.array([0.0]), segs_a[0], segs_b[0])))
    q = q[(q >= 0.0) & (q <= 1.0)]
    lo, hi = q[:-1], q[1:]
    mid = 0.5 * (lo + hi)
    ia = np.searchsorted(segs_a[0], mid, side="left")
    ib = np.searchsorted(segs_b[0], mid, side="left")
    ia = np.minimum(ia, segs_a[0].size - 1)
    ib = np.minimum(ib, segs_b[0].size - 1)
    d_lo = _quantile_eval(segs_a, ia, lo) - _quantile_eval(segs_b, ib, lo)
    d_mid = _quantile_eval(segs_a, ia, mid) - _quantile_eval(segs_b, ib, mid)
    d_hi = _quantile_eval(segs_a, ia, hi) - _quantile_eval(segs_b, ib, hi)
    total = np.sum((hi - lo) / 6.0 * (d_lo * d_lo + 4.0 * d_mid * d_mid + d_hi * d_hi))
    return float(max(total, 0.0))


def w2_quantile(a, b) -> float:
    """Exact 1D 2-Wasserstein distance between grid densities and/or
    empirical measures."""
    return float(np.sqrt(w2_squared_quantile(a, b)))


# ---------------------------------------------------------------------------
# configuration space


def w2_assignment(x, y, method: str = "sort") -> float:
    """Distance between two N-point configurations under the optimal
    relabeling: sqrt(min over permutations of (1/N) sum |x_i - y_s(i)|^2).

    ``method='sort'`` is the 1D-optimal monotone matching; ``method='solver'``
    solves the assignment problem generically and is kept as a cross-check.
    """
    xs = np.sort(np.asarray(x, dtype=float))
    ys = np.sort(np.asarray(y, dtype=float))
    if xs.ndim != 1 or xs.size == 0:
        raise ValueError("configurations must be nonempty 1D arrays")
    if xs.shape != ys.shape:
        raise ValueError(f"configuration sizes differ: {xs.size} vs {ys.size}")
    if method == "sort":
        return float(np.sqrt(_sorted_mean_sq(xs, ys)))
    if method == "solver":
        cost = np.square(xs[:, None] - ys[None, :])
        rows, cols = linear_sum_assignment(cost)
        return float(np.sqrt(cost[rows, cols].mean()))
    raise ValueError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------
# discrete optimal transport


@dataclass(frozen=True)
class TransportPlan:
    """Coupling between two weight vectors with its ground-cost matrix."""

    row_weights: np.ndarray
    col_weights: np.ndarray
    plan: np.ndarray
    cost: float
    ground_cost: np.ndarray = field(repr=False)

    def __post_init__(self):
        plan = np.asarray(self.plan, dtype=float)
        rw = np.asarray(self.row_weights, dtype=float)
        cw = np.asarray(self.col_weights, dtype=float)
        if np.max(np.abs(plan.sum(axis=1) - rw)) > PLAN_TOL:
            raise ValueError("plan row sums do not match row weights")
        if np.max(np.abs(plan.sum(axis=0) - cw)) > PLAN_TOL:
            raise ValueError("plan column sums do not match column weights")
        if abs(float(np.sum(plan * self.ground_cost)) - self.cost) > PLAN_TOL * (1.0 + abs(self.cost)):
            raise ValueError("recorded cost inconsistent with plan")

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("i,j,mass,cost\n")
        rows, cols = np.nonzero(self.plan)
        for i, j in zip(rows, cols):
            buf.write(f"{i},{j},{self.plan[i, j]:.17g},{self.ground_cost[i, j]:.17g}\n")
        return buf.getvalue()


def solve_discrete_ot(cost: np.ndarray, row_weights, col_weights) -> TransportPlan:
    """Exact discrete OT between two weight vectors (LP, dual simplex).

    Returns the optimal plan; the optimum is an LP vertex, so no
    regularization bias enters downstream inequality margins.
    """
    cost = np.asarray(cost, dtype=float)
    rw = np.asarray(row_weights, dtype=float)
    cw = np.asarray(col_weights, dtype=float)
    n, m = cost.shape
    if rw.shape != (n,) or cw.shape != (m,):
        raise ValueError("weight vectors must match the cost matrix")
    if np.all(rw == 0) or np.all(cw == 0):
        raise ValueError("degenerate (all-zero) weights")
    if n == 1:
        plan = cw[None, :].copy()
        return TransportPlan(rw, cw, plan, float(plan[0] @ cost[0]), cost)
    if m == 1:
        plan = rw[:, None].copy()
        return TransportPlan(rw, cw, plan, float(plan[:, 0] @ cost[:, 0]), cost)
    a_rows = sparse.kron(sparse.eye(n, format="csr"), np.ones((1, m)), format="csr")
    a_cols = sparse.kron(np.ones((1, n)), sparse.eye(m, format="csr"), format="csr")
    a_eq = sparse.vstack([a_rows, a_cols], format="csr")
    b_eq = np.concatenate([rw, cw])
    res = linprog(cost.ravel(), A_eq=a_eq, b_eq=b_eq, bounds=(0, None),
                  method="highs-ds",
                  options={"primal_feasibility_tolerance": 1e-10,
                           "dual_feasibility_tolerance": 1e-10})
    if res.status != 0:
        raise RuntimeError(f"transport LP failed: {res.message}")
    plan = np.clip(res.x.reshape(n, m), 0.0, None)
    value = float(np.sum(plan * cost))
    return TransportPlan(rw, cw, plan, value, cost)


def _nested_cost_matrix(x: MetaMeasure, y: MetaMeasure) -> np.ndarray:
    if x.size > ATOM_CAP or y.size > ATOM_CAP:
        raise ValueError(f"meta-measures capped at {ATOM_CAP} atoms")
    c = np.empty((x.size, y.size))
    for i, a in enumerate(x.atoms):
        for j, b in enumerate(y.atoms):
            c[i, j] = w2_squared_quantile(a, b)
    return c


def nested_d2(x: MetaMeasure, y: MetaMeasure, return_plan: bool = False):
    """2-Wasserstein distance between measures over measures: exact OT on
    the matrix of squared 1D distances between atoms.

    Diracs on either side need no OT solve. With ``return_plan`` the optimal
    coupling is returned alongside the distance.
    """
    if np.all(x.weights == 0) or np.all(y.weights == 0):
        raise ValueError("degenerate (all-zero) weights")
    cost = _nested_cost_matrix(x, y)
    if x.size == 1:
        plan = y.weights[None, :].copy()
        value = float(plan[0] @ cost[0])
    elif y.size == 1:
        plan = x.weights[:, None].copy()
        value = float(plan[:, 0] @ cost[:, 0])
    else:
        tp = solve_discrete_ot(cost, x.weights, y.weights)
        plan, value = tp.plan, tp.cost
    dist = float(np.sqrt(max(value, 0.0)))
    if return_plan:
        return dist, TransportPlan(x.weights, y.weights, plan, value, cost)
    return dist


def nested_d2_squared_to_dirac(x: MetaMeasure, target) -> float:
    """Squared nested distance to a Dirac meta-measure: the weighted average
    of squared atom distances (no OT solve needed)."""
    return float(sum(w * w2_squared_quantile(a, target)
                     for w, a in zip(x.weights, x.atoms)))


# ---------------------------------------------------------------------------
# the scaled isometry between configuration space and lifted space


@dataclass(frozen=True)
class IsometryResult:
    lhs: float
    rhs: float
    gap: float


def isometry_gap(ensemble_a: ParticleEnsemble, ensemble_b: ParticleEnsemble) -> IsometryResult:
    """Compare the per-particle squared configuration distance with the
    squared nested distance of the lifted ensembles.

    lhs: optimal replica assignment under the relabeling-invariant
    per-configuration cost min_s (1/N) sum |x_i - y_s(i)|^2.
    rhs: squared nested distance between the uniform empirical meta-measures.
    The lifting map makes the two equal; the gap isolates numerical error of
    the two independent routes.
    """
    if ensemble_a.n_particles != ensemble_b.n_particles:
        raise ValueError("particle counts differ")
    if ensemble_a.n_replicas != ensemble_b.n_replicas:
        raise ValueError("replica counts differ")
    m = ensemble_a.n_replicas
    xs = np.sort(ensemble_a.configurations, axis=1)
    ys = np.sort(ensemble_b.configurations, axis=1)
    diff = xs[:, None, :] - ys[None, :, :]
    cost = np.mean(diff * diff, axis=2)
    rows, cols = linear_sum_assignment(cost)
    lhs = float(cost[rows, cols].mean())

    weights = np.full(m, 1.0 / m)
    meta_a = MetaMeasure(weights, tuple(EmpiricalMeasure(r) for r in xs))
    meta_b = MetaMeasure(weights, tuple(EmpiricalMeasure(r) for r in ys))
    ccost = _nested_cost_matrix(meta_a, meta_b)
    if m == 1:
        rhs = float(ccost[0, 0])
    else:
        rhs = solve_discrete_ot(ccost, weights, weights).cost
    return IsometryResult(lhs=lhs, rhs=rhs, gap=lhs - rhs)
