"""Penalized joint estimation by block coordinate descent.

The joint objective adds, to each function's weighted isotonic fit
criterion, a penalty on squared pairwise differences of fitted levels at
shared design points:

    sum_k sum_i { w[k,i] (y[k,i] - f[k,i])^2
                  + 1/2 sum_{p != k} v[k,p,i] (f[k,i] - f[p,i])^2 }.

Minimizing over one function with the others held fixed is again a plain
weighted isotonic problem with combined weights w + sum_p v and a
pseudo-target that blends the data with the neighbours' current levels,
so the descent loop cycles exact isotonic solves until the values stop
moving. The objective is strictly convex on the active coordinates, so
the minimizer is unique and the sweep order cannot change the limit.

A function's active index set I_k covers its observed points plus any
point where some fusion weight is positive; active points with no data of
their own are flagged ``borrowed_only``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .borrowing import (
    FunctionData,
    WeightField,
    build_weight_field,
    prepare_function,
)
from .errors import DescentViolation, IncompleteValues
from .isotonic import interpolate_values, solve_dag
from .likelihood import Dataset, ModelFamily
from .poset import DesignPoset, union_poset

#: Objective increases beyond this are treated as solver defects.
DESCENT_TOL = 1e-9

DEFAULT_TOL = 1e-8
DEFAULT_MAX_SWEEPS = 10_000


@dataclass(frozen=True)
class JointProblem:
    """Aligned arrays for the joint objective over the union design.

    ``y``/``w``/``active`` are (K, n) node-aligned arrays (weight zero
    where a function does not observe a point); ``vmat`` is the dense
    symmetric (K, K, n) fusion-weight tensor.
    """

    union_poset: DesignPoset
    datasets: tuple[Dataset, ...]
    families: tuple[ModelFamily, ...]
    weight_field: WeightField
    function_data: tuple[FunctionData, ...]
    y: np.ndarray
    w: np.ndarray
    vmat: np.ndarray
    active: np.ndarray
    borrowed_only: np.ndarray
    obs_index: tuple[np.ndarray, ...]  # per function: union index of each node

    @property
    def n_functions(self) -> int:
        return len(self.datasets)

    @property
    def n_points(self) -> int:
        return self.union_poset.n

    def active_set(self, k: int) -> np.ndarray:
        """I_k as sorted union indices."""
        return np.nonzero(self.active[k])[0]


def build_joint_problem(
    datasets: Sequence[Dataset],
    families: Sequence[ModelFamily],
    alpha: float = 0.1,
    weight_field: Optional[WeightField] = None,
    poset: Optional[DesignPoset] = None,
    cap_weights: bool = False,
    function_data: Optional[Sequence[FunctionData]] = None,
) -> JointProblem:
    """Assemble the joint problem: union poset, weights, and alignments.

    When ``weight_field`` is not supplied it is built by running the
    similarity tests at level ``alpha``. ``cap_weights`` clamps every
    fusion weight at 1/(K-1), trading borrowing strength for a guarantee
    that at least half of each update's weight stays on the data.
    """
    datasets = tuple(datasets)
    families = tuple(families)
    if len(datasets) != len(families):
        raise ValueError("one family per dataset is required")
    if function_data is None:
        function_data = tuple(
            prepare_function(d, f) for d, f in zip(datasets, families)
        )
    else:
        function_data = tuple(function_data)
    if poset is None:
        poset = union_poset([fd.points for fd in function_data])
    if weight_field is None:
        if len(datasets) > 1:
            weight_field = build_weight_field(
                datasets, families, poset, alpha, function_data=function_data
            )
        else:
            weight_field = WeightField(
                alpha=alpha, n_functions=1, n_points=poset.n
            )
    if cap_weights and len(datasets) > 1:
        weight_field = weight_field.capped(1.0 / (len(datasets) - 1))

    kk = len(datasets)
    n = poset.n
    y = np.zeros((kk, n))
    w = np.zeros((kk, n))
    obs_index = []
    for k, fd in enumerate(function_data):
        idx = np.fromiter(
            (poset.index_of(p) for p in fd.points), dtype=np.int64, count=fd.n
        )
        y[k, idx] = fd.y
        w[k, idx] = fd.w
        obs_index.append(idx)
    vmat = weight_field.as_matrix()
    active = (w > 0) | (vmat.sum(axis=1) > 0)
    borrowed = active & ~(w > 0)
    return JointProblem(
        union_poset=poset,
        datasets=datasets,
        families=families,
        weight_field=weight_field,
        function_data=tuple(function_data),
        y=y,
        w=w,
        vmat=vmat,
        active=active,
        borrowed_only=borrowed,
        obs_index=tuple(obs_index),
    )


@dataclass(frozen=True)
class JointFit:
    """Fitted levels over each function's active set plus diagnostics.

    ``values[k, i]`` is NaN outside I_k. The objective trace holds the
    value before the first sweep and after each sweep and is
    non-increasing.
    """

    values: np.ndarray
    active: np.ndarray
    borrowed_only: np.ndarray
    iterations: int
    objective_trace: np.ndarray
    converged: bool
    union_points: tuple

    def values_of(self, k: int) -> dict[int, float]:
        """Map union index -> fitted level over I_k."""
        idx = np.nonzero(self.active[k])[0]
        return {int(i): float(self.values[k, i]) for i in idx}


def joint_objective(problem: JointProblem, values: np.ndarray) -> float:
    """Evaluate the penalized objective at (K, n) values.

    Raises :class:`IncompleteValues` when any active coordinate is NaN.
    """
    values = np.asarray(values, dtype=float)
    if values.shape != problem.active.shape:
        raise ValueError("values must be (K, n)")
    if np.any(np.isnan(values[problem.active])):
        raise IncompleteValues("a value is missing on an active index")
    filled = np.where(problem.active, values, 0.0)
    return float(
        _kernels.joint_objective_arrays(
            problem.y, problem.w, problem.vmat, problem.active, filled
        )
    )


def _initial_values(problem: JointProblem) -> np.ndarray:
    """Separate fits, extended to borrowed-only points.

    Observed points start at the function's own no-borrowing fit.
    Borrowed-only points take the function's max-interpolated separate fit
    when some observed point is dominated, else the fusion-weighted
    average of their donors' starting values.
    """
    kk = problem.n_functions
    n = problem.n_points
    vals = np.zeros((kk, n))
    for k, fd in enumerate(problem.function_data):
        vals[k, problem.obs_index[k]] = fd.sep_fit
    for k in range(kk):
        borrowed = np.nonzero(problem.borrowed_only[k])[0]
        if borrowed.size == 0:
            continue
        fd = problem.function_data[k]
        for i in borrowed:
            coords_i = np.asarray(problem.union_poset.points[i].coords)
            dominated = np.all(fd.coords <= coords_i[None, :], axis=1)
            if np.any(dominated):
                vals[k, i] = fd.sep_fit[dominated].max()
            else:
                vv = problem.vmat[k, :, i]
                vals[k, i] = float(np.dot(vv, vals[:, i]) / vv.sum())
    return vals


def block_update(
    problem: JointProblem, k: int, values: np.ndarray
) -> np.ndarray:
    """Exact minimizer over function k's levels with the others fixed.

    Returns the updated levels on I_k (in union-index order). The update
    solves a weighted isotonic problem on k's induced subposet with
    combined weights and pseudo-targets.
    """
    idx = problem.active_set(k)
    if idx.size == 0:
        return np.empty(0)
    wk = problem.w[k, idx]
    contrib = problem.vmat[k, :, :][:, idx] * np.where(
        problem.active[:, idx], values[:, idx], 0.0
    )
    vsum = problem.vmat[k, :, :][:, idx].sum(axis=0)
    cw = wk + vsum
    tgt = (wk * problem.y[k, idx] + contrib.sum(axis=0)) / cw
    if problem.union_poset.dim == 1:
        order = np.argsort(
            [problem.union_poset.points[i].coords[0] for i in idx], kind="stable"
        )
        fit = np.empty_like(tgt)
        fit[order] = _kernels.pava(tgt[order], cw[order])
        return fit
    coords = np.asarray(
        [problem.union_poset.points[i].coords for i in idx]
    )
    from .borrowing import _reduced_edges

    edges = _reduced_edges(coords)
    fit, _, _ = solve_dag(tgt, cw, edges)
    return fit


def fit_joint(
    problem: JointProblem,
    tol: float = DEFAULT_TOL,
    max_sweeps: int = DEFAULT_MAX_SWEEPS,
    sweep_order: str = "ascending",
) -> JointFit:
    """Cycle block updates until levels stop moving.

    Starts from the separate fits, updates functions in turn, and stops
    once the largest coordinate change in a full sweep drops below
    ``tol`` (or ``max_sweeps`` is hit, leaving ``converged`` False).
    Raises :class:`DescentViolation` if the objective ever rises beyond
    tolerance, which would indicate a defective update.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_sweeps < 1:
        raise ValueError("max_sweeps must be >= 1")
    if sweep_order not in ("ascending", "descending"):
        raise ValueError("sweep_order must be 'ascending' or 'descending'")
    ascending = sweep_order == "ascending"

    vals0 = _initial_values(problem)
    kk = problem.n_functions
    n = problem.n_points

    if problem.union_poset.dim == 1 and n > 0:
        cnt = problem.active.sum(axis=1).astype(np.int64)
        act_idx = np.zeros((kk, n), dtype=np.int64)
        order_of = np.argsort(
            [p.coords[0] for p in problem.union_poset.points], kind="stable"
        )
        pos_sorted = np.empty(n, dtype=np.int64)
        pos_sorted[order_of] = np.arange(n)
        for k in range(kk):
            idx = np.nonzero(problem.active[k])[0]
            idx = idx[np.argsort(pos_sorted[idx], kind="stable")]
            act_idx[k, : idx.size] = idx
        vals, trace, sweeps, converged, worst_rise = _kernels.bcd_chain(
            problem.y,
            problem.w,
            problem.vmat,
            problem.active,
            act_idx,
            cnt,
            vals0,
            ascending,
            tol,
            max_sweeps,
        )
        if worst_rise > DESCENT_TOL:
            raise DescentViolation(
                f"objective rose by {worst_rise} during a block update"
            )
    else:
        vals = vals0.copy()
        obj = joint_objective(problem, vals)
        trace_list = [obj]
        converged = False
        sweeps = 0
        for sweep in range(max_sweeps):
            max_change = 0.0
            ks = range(kk) if ascending else range(kk - 1, -1, -1)
            for k in ks:
                idx = problem.active_set(k)
                fit = block_update(problem, k, vals)
                if idx.size:
                    max_change = max(
                        max_change, float(np.max(np.abs(fit - vals[k, idx])))
                    )
                    vals[k, idx] = fit
                new_obj = joint_objective(problem, vals)
                if new_obj - obj > DESCENT_TOL:
                    raise DescentViolation(
                        f"objective rose by {new_obj - obj} during a block update"
                    )
                obj = new_obj
            sweeps = sweep + 1
            trace_list.append(obj)
            if max_change < tol:
                converged = True
                break
        trace = np.asarray(trace_list)

    out_vals = np.where(problem.active, vals, np.nan)
    return JointFit(
        values=out_vals,
        active=problem.active.copy(),
        borrowed_only=problem.borrowed_only.copy(),
        iterations=int(sweeps),
        objective_trace=np.asarray(trace),
        converged=bool(converged),
        union_points=problem.union_poset.points,
    )


def predict(fit: JointFit, k: int, z) -> float:
    """Piecewise-constant prediction for function k at a new point.

    Max-interpolation over k's active fitted levels; raises
    :class:`BelowObservedRange` when no active point is dominated.
    """
    idx = np.nonzero(fit.active[k])[0]
    pts = [fit.union_points[i] for i in idx]
    return interpolate_values(pts, fit.values[k, idx], z)


def separate_fit_values(problem: JointProblem) -> np.ndarray:
    """(K, n) no-borrowing fits (NaN off the observed sets)."""
    kk = problem.n_functions
    vals = np.full((kk, problem.n_points), np.nan)
    for k, fd in enumerate(problem.function_data):
        vals[k, problem.obs_index[k]] = fd.sep_fit
    return vals


def fit_datasets(
    datasets: Sequence[Dataset],
    families: Sequence[ModelFamily],
    alpha: float = 0.1,
    tol: float = DEFAULT_TOL,
    max_sweeps: int = DEFAULT_MAX_SWEEPS,
    cap_weights: bool = False,
    sweep_order: str = "ascending",
) -> tuple[JointFit, JointProblem]:
    """End-to-end pipeline: weights, joint problem, and descent fit."""
    problem = build_joint_problem(
        datasets, families, alpha=alpha, cap_weights=cap_weights
    )
    fit = fit_joint(
        problem, tol=tol, max_sweeps=max_sweeps, sweep_order=sweep_order
    )
    return fit, problem
