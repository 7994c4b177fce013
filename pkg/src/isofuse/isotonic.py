"""Exact weighted least-squares isotonic regression over posets.

Two solvers share the contracts here: a pool-adjacent-violators solver for
chains and a recursive-partitioning solver for general DAGs. Both return
the exact global minimizer of sum w_i (y_i - f_i)^2 over the isotonic cone
(intersected with any merge equalities).

The partitioning solver follows the classic divide-and-conquer scheme for
quadratic isotonic regression: a block whose weighted mean admits no
improving order-respecting two-way cut is a level set of the optimum; an
optimal cut (a maximum-weight successor-closed subset, found by min-cut)
never crosses a level set, so recursing on the two sides is exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from . import _kernels
from .errors import BelowObservedRange, NoActiveNodes, NotAChain
from .poset import DesignPoset, as_point

_FEAS_TOL = 1e-10


@dataclass(frozen=True)
class IsotonicProblem:
    """A weighted isotonic regression instance on a design poset.

    ``merges`` lists groups of node indices forced to share one value
    (tied nodes); groups must be disjoint and nonempty. Nodes may carry
    zero weight; they act as constraint carriers only and receive a value
    only when some positive-weight node is connected to them.
    """

    poset: DesignPoset
    targets: np.ndarray
    weights: np.ndarray
    merges: tuple[frozenset[int], ...] = ()

    def __post_init__(self) -> None:
        targets = np.asarray(self.targets, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        n = self.poset.n
        if targets.shape != (n,) or weights.shape != (n,):
            raise ValueError(
                f"targets/weights must have length {n}, got "
                f"{targets.shape} and {weights.shape}"
            )
        if not np.all(np.isfinite(targets)):
            raise ValueError("targets must be finite")
        if not np.all(np.isfinite(weights)) or np.any(weights < 0):
            raise ValueError("weights must be finite and nonnegative")
        merges = tuple(frozenset(m) for m in self.merges)
        seen: set[int] = set()
        for m in merges:
            if not m:
                raise ValueError("merge sets must be nonempty")
            if not all(0 <= i < n for i in m):
                raise ValueError("merge indices out of range")
            if seen & m:
                raise ValueError("merge sets must be disjoint")
            seen |= m
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "merges", merges)

    @property
    def n(self) -> int:
        return self.poset.n


@dataclass(frozen=True)
class IsotonicSolution:
    """Fitted levels, objective value, and level-set partition.

    ``values[i]`` is NaN for nodes whose value the problem leaves
    undefined (zero-weight nodes in components without any data).
    ``level_sets`` partitions the defined nodes into constant-value
    blocks; each block's value is the weighted mean of its members.
    """

    values: np.ndarray
    objective: float
    level_sets: tuple[tuple[int, ...], ...]

    @property
    def defined(self) -> np.ndarray:
        return ~np.isnan(self.values)

    @property
    def n_levels(self) -> int:
        """Number of distinct fitted values (1e-9 grouping tolerance)."""
        vals = np.sort(self.values[self.defined])
        if vals.size == 0:
            return 0
        return 1 + int(np.count_nonzero(np.diff(vals) > 1e-9))


def solve_chain(problem: IsotonicProblem) -> IsotonicSolution:
    """Exact solver for totally ordered problems (PAVA specialization).

    Requires a chain poset, strictly positive weights, and no merges.
    """
    if problem.merges:
        raise ValueError("solve_chain does not accept merges")
    if np.any(problem.weights <= 0):
        raise ValueError("solve_chain requires strictly positive weights")
    if not problem.poset.is_chain():
        raise NotAChain("the poset is not totally ordered")
    order = problem.poset.chain_order()
    y = problem.targets[order]
    w = problem.weights[order]
    fit = _kernels.pava(y, w)
    values = np.empty(problem.n)
    values[order] = fit
    objective = float(_kernels.wsse(y, w, fit))
    bvals, _, counts, nb = _kernels.pava_blocks(y, w)
    level_sets: list[tuple[int, ...]] = []
    pos = 0
    for b in range(nb):
        cnt = int(counts[b])
        blk = tuple(int(i) for i in order[pos:pos + cnt])
        # PAVA keeps equal-value neighbours separate; level sets are maximal
        if level_sets and b > 0 and bvals[b] <= bvals[b - 1]:
            level_sets[-1] = level_sets[-1] + blk
        else:
            level_sets.append(blk)
        pos += cnt
    return IsotonicSolution(
        values=values,
        objective=objective,
        level_sets=tuple(level_sets),
    )


def solve_partial_order(problem: IsotonicProblem) -> IsotonicSolution:
    """Exact solver for general DAG problems with merges and zero weights.

    Merged nodes are contracted into supernodes (pooled target and weight);
    contraction may create cycles, whose strongly connected components are
    contracted again (an equality merge can force further equalities but
    never infeasibility). Zero-weight nodes ride along as constraint
    carriers; those in components without any positive weight are excluded
    from the output with undefined values.
    """
    values, objective, level_sets = solve_dag(
        problem.targets, problem.weights, problem.poset.edges, problem.merges
    )
    return IsotonicSolution(
        values=values, objective=objective, level_sets=level_sets
    )


def solve_dag(
    targets: np.ndarray,
    weights: np.ndarray,
    edges,
    merges=(),
) -> tuple[np.ndarray, float, tuple[tuple[int, ...], ...]]:
    """Array-level DAG solver behind :func:`solve_partial_order`.

    ``edges`` is an iterable of (i, j) constraints value_i <= value_j and
    ``merges`` an iterable of index groups forced equal. Returns
    ``(values, objective, level_sets)`` with NaN for undefined values.
    """
    y = np.asarray(targets, dtype=float)
    w = np.asarray(weights, dtype=float)
    n = y.shape[0]
    if not np.any(w > 0):
        raise NoActiveNodes("no node carries positive weight")

    group = np.arange(n)
    for m in merges:
        members = sorted(m)
        for i in members:
            group[i] = members[0]
    # relabel to 0..g-1
    _, group = np.unique(group, return_inverse=True)
    g = int(group.max()) + 1

    edges = {(int(group[i]), int(group[j])) for i, j in edges}
    edges = {(u, v) for u, v in edges if u != v}

    # merge-induced cycles force further equalities
    if edges:
        eu = np.fromiter((e[0] for e in edges), dtype=np.int64, count=len(edges))
        ev = np.fromiter((e[1] for e in edges), dtype=np.int64, count=len(edges))
        adj = csr_matrix((np.ones(len(edges)), (eu, ev)), shape=(g, g))
        n_scc, scc = connected_components(adj, directed=True, connection="strong")
        if n_scc < g:
            group = scc[group]
            g = n_scc
            edges = {(int(scc[u]), int(scc[v])) for u, v in edges}
            edges = {(u, v) for u, v in edges if u != v}

    gw = np.zeros(g)
    gyw = np.zeros(g)
    np.add.at(gw, group, w)
    np.add.at(gyw, group, w * y)
    gy = np.where(gw > 0, gyw / np.maximum(gw, 1e-300), 0.0)

    if edges:
        eu = np.fromiter((e[0] for e in edges), dtype=np.int64, count=len(edges))
        ev = np.fromiter((e[1] for e in edges), dtype=np.int64, count=len(edges))
        sym = csr_matrix(
            (np.ones(len(edges)), (eu, ev)), shape=(g, g)
        )
        _, comp = connected_components(sym, directed=False)
    else:
        eu = np.empty(0, dtype=np.int64)
        ev = np.empty(0, dtype=np.int64)
        comp = np.arange(g)

    gvals = np.full(g, np.nan)
    blocks: list[np.ndarray] = []
    for cid in np.unique(comp):
        nodes = np.nonzero(comp == cid)[0]
        if gw[nodes].sum() <= 0:
            continue  # carrier-only component: values undefined
        sel = np.isin(eu, nodes)
        vals_c, blocks_c = _partition_component(
            gy, gw, nodes, eu[sel], ev[sel]
        )
        gvals[nodes] = vals_c
        blocks.extend(blocks_c)

    values = gvals[group]
    active = w > 0
    objective = float(np.sum(w[active] * (y[active] - values[active]) ** 2))

    members: dict[int, list[int]] = {}
    for i in range(n):
        members.setdefault(int(group[i]), []).append(i)
    level_sets = tuple(
        tuple(sorted(i for gn in blk for i in members[int(gn)]))
        for blk in blocks
    )
    level_sets = tuple(sorted(level_sets, key=lambda b: b[0]))
    return values, objective, level_sets


def _partition_component(gy, gw, nodes, eu, ev):
    """Recursive partitioning on one weakly connected component.

    ``nodes`` are contracted-node ids; ``eu``/``ev`` the induced edges.
    Returns (values aligned to ``nodes``, list of final blocks as arrays
    of contracted-node ids).
    """
    loc = {}
    for a, gn in enumerate(nodes):
        loc[int(gn)] = a
    leu = np.fromiter((loc[int(u)] for u in eu), dtype=np.int64, count=len(eu))
    lev = np.fromiter((loc[int(v)] for v in ev), dtype=np.int64, count=len(ev))
    ly = gy[nodes]
    lw = gw[nodes]

    values = np.empty(len(nodes))
    blocks: list[np.ndarray] = []
    stack: list[np.ndarray] = [np.arange(len(nodes))]
    while stack:
        blk = stack.pop()
        wt = lw[blk]
        mu = float(np.dot(wt, ly[blk]) / wt.sum())
        if blk.size == 1:
            values[blk] = mu
            blocks.append(nodes[blk])
            continue
        c = wt * (ly[blk] - mu)
        scale = float(np.abs(c).sum())
        if scale <= 1e-13:
            values[blk] = mu
            blocks.append(nodes[blk])
            continue
        upper = _best_upper_set(len(nodes), blk, c, leu, lev)
        val = float(c[upper].sum()) if upper is not None else 0.0
        if upper is None or val <= 1e-12 * scale:
            values[blk] = mu
            blocks.append(nodes[blk])
            continue
        lower_mask = np.ones(blk.size, dtype=bool)
        # ``upper`` indexes into blk
        lower_mask[upper] = False
        stack.append(blk[lower_mask])
        stack.append(blk[upper])
    return values, blocks


def _best_upper_set(ncomp, blk, c, leu, lev):
    """Maximum-weight successor-closed subset of ``blk`` (indices into blk).

    Solved as a min-cut: source feeds nodes with positive c, negative
    nodes drain to the sink, and order edges get infinite capacity so the
    source side is closed under successors. Returns None when the best
    subset is empty or the whole block.
    """
    nb = blk.size
    pos = np.full(ncomp, -1, dtype=np.int64)
    pos[blk] = np.arange(nb)
    sel = (pos[leu] >= 0) & (pos[lev] >= 0)
    beu = pos[leu[sel]]
    bev = pos[lev[sel]]

    src = nb
    snk = nb + 1
    cpos = c > 0
    cneg = c < 0
    n_cap = int(cpos.sum() + cneg.sum())
    m = n_cap + beu.shape[0]
    u = np.empty(m, dtype=np.int64)
    v = np.empty(m, dtype=np.int64)
    cap = np.empty(m)
    inf_cap = float(c[cpos].sum()) + 1.0
    j = 0
    for i in range(nb):
        if c[i] > 0:
            u[j] = src
            v[j] = i
            cap[j] = c[i]
            j += 1
        elif c[i] < 0:
            u[j] = i
            v[j] = snk
            cap[j] = -c[i]
            j += 1
    for e in range(beu.shape[0]):
        u[j] = beu[e]
        v[j] = bev[e]
        cap[j] = inf_cap
        j += 1

    eps = 1e-14 * max(inf_cap, 1.0)
    side = _kernels.dinic_side(nb + 2, u, v, cap, src, snk, eps)
    upper = np.nonzero(side[:nb])[0]
    if upper.size == 0 or upper.size == nb:
        return None
    return upper


def solution_feasible(
    solution: IsotonicSolution, poset: DesignPoset, tol: float = _FEAS_TOL
) -> bool:
    """Check every edge constraint on the defined values within ``tol``."""
    vals = solution.values
    for i, j in poset.edges:
        if np.isnan(vals[i]) or np.isnan(vals[j]):
            continue
        if vals[i] > vals[j] + tol:
            return False
    return True


def interpolate(solution: IsotonicSolution, poset: DesignPoset, z) -> float:
    """Piecewise-constant interpolant: max fitted value among dominated points.

    Reproduces the fit exactly at design points. Raises
    :class:`BelowObservedRange` when no defined design point is dominated
    by ``z``.
    """
    zp = as_point(z)
    best = -np.inf
    found = False
    for i, p in enumerate(poset.points):
        if np.isnan(solution.values[i]):
            continue
        if p.dominated_by(zp):
            found = True
            if solution.values[i] > best:
                best = solution.values[i]
    if not found:
        raise BelowObservedRange(
            f"no fitted design point is dominated by {zp.coords}"
        )
    return float(best)


def interpolate_values(
    points: Sequence, values: np.ndarray, z
) -> float:
    """Max-interpolation over an explicit (points, values) table."""
    zp = as_point(z)
    best = -np.inf
    found = False
    for p, val in zip(points, values):
        if as_point(p).dominated_by(zp):
            found = True
            if val > best:
                best = val
    if not found:
        raise BelowObservedRange(
            f"no fitted design point is dominated by {zp.coords}"
        )
    return float(best)
