"""Pointwise similarity testing and fusion-weight construction.

For a pair of functions (k, p) and a design point t, the null-constrained
problem re-solves both isotonic regressions with the extra equality
fit_k(t) == fit_p(t); the likelihood-ratio statistic is twice the
log-likelihood gap to the unconstrained (separate) fits. The statistic
maps to a fusion weight through a chi-squared(1) quantile:

    weight = max(0, 1 - LR / q_{1-alpha}),

with weight = 1 whenever LR = 0 (which includes the random-design case
where the tie constraint never becomes active).

Weights are zeroed at points that would extrapolate a function beyond its
own observed range: whenever the point dominates all, or is dominated by
all, of that function's observations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import ndtri

from . import _kernels
from .errors import DomainError, NullBeatsAlternative, PointNotTestable
from .isotonic import solve_dag
from .likelihood import (
    BINOMIAL,
    GAUSSIAN,
    AggregatedData,
    Dataset,
    ModelFamily,
    aggregate,
    log_likelihood,
)
from .poset import DesignPoint, DesignPoset, as_point

#: LR values closer to zero than this are clamped to exactly zero.
LR_CLAMP = 1e-10

#: Fitted-value difference that counts as "the tie constraint moved a fit".
ACTIVE_TOL = 1e-9


def chi2_quantile_1df(prob: float) -> float:
    """Quantile function of the chi-squared distribution with 1 df.

    Uses the exact identity q(p) = (Phi^-1((1+p)/2))^2 with the normal
    quantile, accurate to double precision.
    """
    if not 0.0 < prob < 1.0:
        raise DomainError(f"probability must lie in (0, 1), got {prob}")
    return float(ndtri((1.0 + prob) / 2.0) ** 2)


def weight_from_lr(lr: float, alpha: float, constrained_active: bool = True) -> float:
    """Map an LR statistic to a fusion weight in [0, 1].

    Returns exactly 1 when lr == 0 regardless of whether the tie
    constraint was active; otherwise max(0, 1 - lr/q) with q the
    chi-squared(1) quantile at 1 - alpha.
    """
    if lr < 0:
        raise ValueError("lr must be nonnegative")
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    if lr == 0.0:
        return 1.0
    q = chi2_quantile_1df(1.0 - alpha)
    return max(0.0, 1.0 - lr / q)


# ---------------------------------------------------------------------------
# per-function working data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FunctionData:
    """Aggregated per-function data with cached separate fit.

    Nodes are the function's distinct design points; for one covariate
    they are sorted in increasing order so chains can be solved directly.
    ``sep_ll`` caches the node-level binomial log-likelihood of the
    separate fit (constant-free); for Gaussian data the weighted SSE
    ``sep_obj`` plays that role since weights are 1/sigma^2.
    """

    family: ModelFamily
    agg: AggregatedData
    coords: np.ndarray  # (n, m) node coordinates in node order
    y: np.ndarray
    w: np.ndarray
    succ: Optional[np.ndarray]
    fail: Optional[np.ndarray]
    sep_fit: np.ndarray
    sep_obj: float
    sep_ll: float
    edges: tuple[tuple[int, int], ...]  # reduced order edges among nodes

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def dim(self) -> int:
        return self.coords.shape[1]

    @property
    def points(self) -> tuple[DesignPoint, ...]:
        return self.agg.points

    def node_of(self, point: DesignPoint) -> Optional[int]:
        try:
            return self.points.index(point)
        except ValueError:
            return None


def prepare_function(data: Dataset, family: ModelFamily) -> FunctionData:
    """Aggregate a dataset and cache its separate isotonic fit."""
    agg = aggregate(data, family)
    coords = np.asarray([p.coords for p in agg.points])
    order = np.lexsort(coords.T[::-1])
    points = tuple(agg.points[i] for i in order)
    coords = coords[order]
    y = agg.targets[order]
    w = agg.weights[order]
    succ = fail = None
    if family.kind == BINOMIAL:
        succ = agg.successes[order]
        fail = agg.totals[order] - succ
    row_node = np.empty_like(agg.row_node)
    inv = np.empty(len(order), dtype=np.int64)
    inv[order] = np.arange(len(order))
    row_node = inv[agg.row_node]
    agg_sorted = AggregatedData(
        points=points,
        targets=y,
        weights=w,
        successes=succ,
        totals=(succ + fail) if succ is not None else None,
        row_node=row_node,
    )

    m = coords.shape[1]
    if m == 1:
        sep_fit = _kernels.pava(y, w)
        edges = tuple((i, i + 1) for i in range(len(y) - 1))
    else:
        edges = _reduced_edges(coords)
        sep_fit, _, _ = solve_dag(y, w, edges)
    sep_obj = float(_kernels.wsse(y, w, sep_fit))
    if family.kind == BINOMIAL:
        sep_ll = float(_kernels.binom_loglik(succ, fail, sep_fit))
    else:
        sep_ll = 0.0
    return FunctionData(
        family=family,
        agg=agg_sorted,
        coords=coords,
        y=y,
        w=w,
        succ=succ,
        fail=fail,
        sep_fit=sep_fit,
        sep_obj=sep_obj,
        sep_ll=sep_ll,
        edges=edges,
    )


def _reduced_edges(coords: np.ndarray) -> tuple[tuple[int, int], ...]:
    """Transitive reduction of strict componentwise dominance."""
    n = coords.shape[0]
    le = np.ones((n, n), dtype=bool)
    for d in range(coords.shape[1]):
        col = coords[:, d]
        le &= col[:, None] <= col[None, :]
    np.fill_diagonal(le, False)
    through = (le.astype(np.uint8) @ le.astype(np.uint8)) > 0
    red = le & ~through
    ii, jj = np.nonzero(red)
    return tuple(zip(ii.tolist(), jj.tolist()))


def _dominance_vs_nodes(coords: np.ndarray, zc: np.ndarray):
    """(z_dominates_node, node_dominates_z) boolean vectors."""
    z_dom = np.all(coords <= zc[None, :], axis=1)
    dom_z = np.all(coords >= zc[None, :], axis=1)
    return z_dom, dom_z


@dataclass(frozen=True)
class _NullFit:
    """Null-constrained fits for one pair at one point (node aligned)."""

    fit_k: np.ndarray  # over fd_k's nodes (tie node excluded when inserted)
    fit_p: np.ndarray
    tie_value: float
    lr: float
    constrained_active: bool


def _null_fit_1d(fd_k: FunctionData, fd_p: FunctionData, xt: float) -> _NullFit:
    """Tied fit on chains via the exact two-chain kernel."""
    yk, wk, sk, fk, ik, ins_k = _with_tie_1d(fd_k, xt)
    yp, wp, sp, fp, ip, ins_p = _with_tie_1d(fd_p, xt)
    if ins_k and ins_p:
        raise PointNotTestable(f"neither data set observes x = {xt}")
    fit_k, fit_p, c = _kernels.tied_chain(yk, wk, ik, yp, wp, ip)
    lr = _lr_contribution(fd_k, yk, wk, sk, fk, fit_k) + _lr_contribution(
        fd_p, yp, wp, sp, fp, fit_p
    )
    lr = _clamp_lr(lr)
    nk = np.delete(fit_k, ik) if ins_k else fit_k
    npv = np.delete(fit_p, ip) if ins_p else fit_p
    active = bool(
        np.any(np.abs(nk - fd_k.sep_fit) > ACTIVE_TOL)
        or np.any(np.abs(npv - fd_p.sep_fit) > ACTIVE_TOL)
    )
    return _NullFit(fit_k=nk, fit_p=npv, tie_value=float(c), lr=lr,
                    constrained_active=active)


def _with_tie_1d(fd: FunctionData, xt: float):
    """Insert the tie node into a 1-D chain when unobserved.

    Returns (y, w, succ, fail, tie_index, inserted_flag).
    """
    xs = fd.coords[:, 0]
    pos = int(np.searchsorted(xs, xt))
    if pos < len(xs) and xs[pos] == xt:
        return fd.y, fd.w, fd.succ, fd.fail, pos, False
    y = np.insert(fd.y, pos, 0.0)
    w = np.insert(fd.w, pos, 0.0)
    succ = np.insert(fd.succ, pos, 0.0) if fd.succ is not None else None
    fail = np.insert(fd.fail, pos, 0.0) if fd.fail is not None else None
    return y, w, succ, fail, pos, True


def _lr_contribution(fd, y, w, succ, fail, null_fit) -> float:
    """One function's term of the LR statistic (null minus alternative)."""
    if fd.family.kind == GAUSSIAN:
        # weights are 1/sigma^2, so the weighted SSE gap is the LR term
        return float(_kernels.wsse(y, w, null_fit)) - fd.sep_obj
    return -2.0 * (float(_kernels.binom_loglik(succ, fail, null_fit)) - fd.sep_ll)


def _clamp_lr(lr: float) -> float:
    if lr < -LR_CLAMP:
        raise NullBeatsAlternative(
            f"tied fit beat the separate fits by {-lr}; solver defect"
        )
    return max(lr, 0.0)


def _null_fit_nd(fd_k: FunctionData, fd_p: FunctionData, point: DesignPoint) -> _NullFit:
    """Tied fit for multivariate designs via the merged-DAG solver."""
    zc = np.asarray(point.coords)
    nk, ins_k = _tie_node_nd(fd_k, point)
    npn, ins_p = _tie_node_nd(fd_p, point)
    if ins_k and ins_p:
        raise PointNotTestable(f"neither data set observes {point.coords}")

    size_k = fd_k.n + (1 if ins_k else 0)
    size_p = fd_p.n + (1 if ins_p else 0)
    y = np.zeros(size_k + size_p)
    w = np.zeros(size_k + size_p)
    y[: fd_k.n] = fd_k.y
    w[: fd_k.n] = fd_k.w
    y[size_k:size_k + fd_p.n] = fd_p.y
    w[size_k:size_k + fd_p.n] = fd_p.w

    edges = list(fd_k.edges)
    if ins_k:
        edges += _tie_edges(fd_k, zc, fd_k.n)
    off = size_k
    edges += [(u + off, v + off) for u, v in fd_p.edges]
    if ins_p:
        edges += [(u + off, v + off) for u, v in _tie_edges(fd_p, zc, fd_p.n)]

    tie_k = nk if not ins_k else fd_k.n
    tie_p = (npn if not ins_p else fd_p.n) + off
    values, _, _ = solve_dag(y, w, edges, merges=(frozenset({tie_k, tie_p}),))

    full_k = values[:size_k]
    full_p = values[size_k:]
    succ_k, fail_k = fd_k.succ, fd_k.fail
    succ_p, fail_p = fd_p.succ, fd_p.fail
    yk = y[:size_k]
    wk = w[:size_k]
    yp = y[size_k:]
    wp = w[size_k:]
    if ins_k and succ_k is not None:
        succ_k = np.append(succ_k, 0.0)
        fail_k = np.append(fail_k, 0.0)
    if ins_p and succ_p is not None:
        succ_p = np.append(succ_p, 0.0)
        fail_p = np.append(fail_p, 0.0)
    lr = _lr_contribution(fd_k, yk, wk, succ_k, fail_k, full_k)
    lr += _lr_contribution(fd_p, yp, wp, succ_p, fail_p, full_p)
    lr = _clamp_lr(lr)

    fit_k = full_k[: fd_k.n]
    fit_p = full_p[: fd_p.n]
    active = bool(
        np.any(np.abs(fit_k - fd_k.sep_fit) > ACTIVE_TOL)
        or np.any(np.abs(fit_p - fd_p.sep_fit) > ACTIVE_TOL)
    )
    return _NullFit(
        fit_k=fit_k,
        fit_p=fit_p,
        tie_value=float(values[tie_k]),
        lr=lr,
        constrained_active=active,
    )


def _tie_node_nd(fd: FunctionData, point: DesignPoint):
    """(node index or None, inserted flag) for the tie point."""
    node = fd.node_of(point)
    if node is not None:
        return node, False
    return None, True


def _tie_edges(fd: FunctionData, zc: np.ndarray, tie_idx: int):
    """Order edges between an inserted tie node and a function's nodes.

    Connects the tie to the maximal dominated nodes and the minimal
    dominating nodes; redundant transitive arcs would be harmless but are
    avoided for flow-network size.
    """
    z_dom, dom_z = _dominance_vs_nodes(fd.coords, zc)
    below = np.nonzero(z_dom)[0]
    above = np.nonzero(dom_z)[0]
    edges = []
    if below.size:
        sub = fd.coords[below]
        maximal = ~np.any(
            np.all(sub[:, None, :] <= sub[None, :, :], axis=2)
            & ~np.eye(below.size, dtype=bool),
            axis=1,
        )
        edges += [(int(i), tie_idx) for i in below[maximal]]
    if above.size:
        sub = fd.coords[above]
        minimal = ~np.any(
            np.all(sub[:, None, :] >= sub[None, :, :], axis=2)
            & ~np.eye(above.size, dtype=bool),
            axis=1,
        )
        edges += [(tie_idx, int(j)) for j in above[minimal]]
    return edges


def _null_fit(fd_k: FunctionData, fd_p: FunctionData, point: DesignPoint) -> _NullFit:
    if fd_k.dim == 1:
        return _null_fit_1d(fd_k, fd_p, point.coords[0])
    return _null_fit_nd(fd_k, fd_p, point)


# ---------------------------------------------------------------------------
# public test surface
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TiedPairFit:
    """Null and alternative fits for one pair at one design point.

    Fits are aligned to each dataset's distinct design points in
    increasing order (``points_k`` / ``points_p``).
    """

    point: DesignPoint
    tie_value: float
    points_k: tuple[DesignPoint, ...]
    points_p: tuple[DesignPoint, ...]
    null_k: np.ndarray
    null_p: np.ndarray
    alt_k: np.ndarray
    alt_p: np.ndarray
    constrained_active: bool


def tied_pair_fit(
    data_k: Dataset,
    data_p: Dataset,
    point,
    family_k: ModelFamily,
    family_p: ModelFamily,
) -> TiedPairFit:
    """Solve the null-constrained and separate problems for one pair.

    ``point`` must be observed by at least one of the two datasets; in a
    random design the other side joins with weight zero.
    """
    pt = as_point(point)
    fd_k = prepare_function(data_k, family_k)
    fd_p = prepare_function(data_p, family_p)
    nf = _null_fit(fd_k, fd_p, pt)
    return TiedPairFit(
        point=pt,
        tie_value=nf.tie_value,
        points_k=fd_k.points,
        points_p=fd_p.points,
        null_k=nf.fit_k,
        null_p=nf.fit_p,
        alt_k=fd_k.sep_fit.copy(),
        alt_p=fd_p.sep_fit.copy(),
        constrained_active=nf.constrained_active,
    )


def lr_statistic(
    fits: TiedPairFit,
    data_k: Dataset,
    data_p: Dataset,
    family_k: ModelFamily,
    family_p: ModelFamily,
) -> float:
    """Likelihood-ratio statistic from tied-pair fits (general form).

    Evaluates the log-likelihood of every observation row under the null
    and alternative fitted values; clamped to zero within tolerance.
    """
    lr = 0.0
    for data, family, fit_points, null_fit, alt_fit in (
        (data_k, family_k, fits.points_k, fits.null_k, fits.alt_k),
        (data_p, family_p, fits.points_p, fits.null_p, fits.alt_p),
    ):
        node_of = {p.coords: i for i, p in enumerate(fit_points)}
        rows = np.fromiter(
            (node_of[p.coords] for p in data.points),
            dtype=np.int64,
            count=data.n,
        )
        ll0 = log_likelihood(data, null_fit[rows], family)
        ll1 = log_likelihood(data, alt_fit[rows], family)
        lr += -2.0 * (ll0 - ll1)
    return _clamp_lr(lr)


@dataclass(frozen=True)
class PairTestResult:
    """Outcome of one similarity test: statistic and fusion weight."""

    k: int
    p: int
    index: int
    lr: float
    constrained_active: bool
    weight: float


@dataclass
class WeightField:
    """Symmetric fusion weights v[(k, p, i)] over the union design.

    Entries are stored once per unordered pair; absent entries mean zero
    weight (no borrowing).
    """

    alpha: float
    n_functions: int
    n_points: int
    entries: dict = field(default_factory=dict)

    @staticmethod
    def _key(k: int, p: int, i: int):
        return (k, p, i) if k < p else (p, k, i)

    def put(self, result: PairTestResult) -> None:
        self.entries[self._key(result.k, result.p, result.index)] = result

    def get(self, k: int, p: int, i: int) -> Optional[PairTestResult]:
        return self.entries.get(self._key(k, p, i))

    def weight(self, k: int, p: int, i: int) -> float:
        r = self.get(k, p, i)
        return r.weight if r is not None else 0.0

    def lr(self, k: int, p: int, i: int) -> Optional[float]:
        r = self.get(k, p, i)
        return r.lr if r is not None else None

    def as_matrix(self) -> np.ndarray:
        """Dense (K, K, n) symmetric weight array."""
        mat = np.zeros((self.n_functions, self.n_functions, self.n_points))
        for (k, p, i), r in self.entries.items():
            mat[k, p, i] = r.weight
            mat[p, k, i] = r.weight
        return mat

    def capped(self, bound: float) -> "WeightField":
        """Clamp every weight at ``bound`` (e.g. 1/(K-1)); returns a copy."""
        out = WeightField(
            alpha=self.alpha,
            n_functions=self.n_functions,
            n_points=self.n_points,
        )
        for key, r in self.entries.items():
            out.entries[key] = PairTestResult(
                k=r.k,
                p=r.p,
                index=r.index,
                lr=r.lr,
                constrained_active=r.constrained_active,
                weight=min(r.weight, bound),
            )
        return out


def extrapolation_mask(
    datasets: Sequence[Dataset], union_poset: DesignPoset
) -> np.ndarray:
    """(K, n) mask; True where a union point would extrapolate function k.

    A point is masked for k when it dominates all, or is dominated by all,
    of k's own observations (non-strict dominance, so the extremes of a
    fully observed design are masked too).
    """
    coords_u = np.asarray([p.coords for p in union_poset.points])
    mask = np.zeros((len(datasets), union_poset.n), dtype=bool)
    for k, data in enumerate(datasets):
        obs = np.asarray(sorted({p.coords for p in data.points}))
        below_all = np.ones(union_poset.n, dtype=bool)
        above_all = np.ones(union_poset.n, dtype=bool)
        for d in range(coords_u.shape[1]):
            below_all &= np.all(
                coords_u[:, d][:, None] <= obs[None, :, d], axis=1
            )
            above_all &= np.all(
                coords_u[:, d][:, None] >= obs[None, :, d], axis=1
            )
        mask[k] = below_all | above_all
    return mask


def build_weight_field(
    datasets: Sequence[Dataset],
    families: Sequence[ModelFamily],
    union_poset: DesignPoset,
    alpha: float,
    extrap_mask: Optional[np.ndarray] = None,
    function_data: Optional[Sequence[FunctionData]] = None,
) -> WeightField:
    """Run the similarity test for every pair and eligible design point.

    A point is eligible for pair (k, p) when at least one of the two
    observes it and it is not extrapolation-masked for either. Alternative
    fits are cached per function; only the null problem is re-solved per
    point. Cells are independent, so any evaluation order (or a parallel
    schedule) yields the same field.
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    kk = len(datasets)
    if function_data is None:
        function_data = [
            prepare_function(d, f) for d, f in zip(datasets, families)
        ]
    if extrap_mask is None:
        extrap_mask = extrapolation_mask(datasets, union_poset)

    obs_sets = []
    for fd in function_data:
        obs = np.zeros(union_poset.n, dtype=bool)
        for p in fd.points:
            obs[union_poset.index_of(p)] = True
        obs_sets.append(obs)

    fieldobj = WeightField(
        alpha=alpha, n_functions=kk, n_points=union_poset.n
    )
    for k in range(kk):
        for p in range(k + 1, kk):
            eligible = (obs_sets[k] | obs_sets[p]) & ~extrap_mask[k] & ~extrap_mask[p]
            for i in np.nonzero(eligible)[0]:
                nf = _null_fit(
                    function_data[k], function_data[p], union_poset.points[i]
                )
                fieldobj.put(
                    PairTestResult(
                        k=k,
                        p=p,
                        index=int(i),
                        lr=nf.lr,
                        constrained_active=nf.constrained_active,
                        weight=weight_from_lr(nf.lr, alpha, nf.constrained_active),
                    )
                )
    return fieldobj
