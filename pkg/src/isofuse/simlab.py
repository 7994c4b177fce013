"""Monte Carlo study lab: generators, metrics, and preconfigured runners.

Reproduces the simulation designs behind the method at configurable
scale: null-distribution quantiles of the similarity statistic, the power
curve of the test, the alpha-sensitivity studies, the five-function fixed
and random designs, the two-covariate grid studies, and the binomial
studies. Every study is a pure function of (study, n, alpha, replications,
seed): replication r uses its own counter-based substream per function,
so runs parallelize over replications without changing any number.

Sample-size semantics of ``n``: observations per function for 1-D fixed
designs, grid side length for the two-covariate studies, and the size of
the larger groups for the unequal random design.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernels
from .borrowing import LR_CLAMP, chi2_quantile_1df, prepare_function
from .errors import DegenerateBaseline, NoEvalPoints, UnknownStudy
from .joint import build_joint_problem, fit_joint
from .likelihood import Dataset, ModelFamily
from .poset import DesignPoint

# ---------------------------------------------------------------------------
# truths
# ---------------------------------------------------------------------------


def expit(x):
    return 1.0 / (1.0 + np.exp(-x))


def _sq(c):
    return c[:, 0] ** 2


def _sq_then_linear(c):
    x = c[:, 0]
    return np.where(x <= 2.0, x**2, x + 2.0)


def _const_195(c):
    return np.full(c.shape[0], 1.95)


def _one_plus_expit(c):
    return 1.0 + expit(c[:, 0])


def _quartic(c):
    return c[:, 0] ** 4 - 1.0


def _five_1(c):
    return c[:, 0]


def _five_2(c):
    x = c[:, 0]
    return 0.9 * x + 0.2 + 6.0 * (x > 2.0)


def _five_3(c):
    x = c[:, 0]
    return 0.8 * x + 4.0 * expit(2.0 * x - 5.0)


def _five_4(c):
    x = c[:, 0]
    return 0.3 * x**2 + x - 0.2


def _five_5(c):
    x = c[:, 0]
    return 4.0 * np.sqrt(x + 1.0) + 1.0


FIVE_FUNCTIONS = (_five_1, _five_2, _five_3, _five_4, _five_5)


def _twod_s1_1(c):
    return 0.5 * c[:, 0] + 0.7 * c[:, 1] + 1.5 * (np.maximum(c[:, 0], c[:, 1]) > 2.0)


def _twod_s1_2(c):
    return 0.6 * c[:, 0] + 0.5 * c[:, 1] + 1.4 * (np.maximum(c[:, 0], c[:, 1]) > 2.0)


def _twod_s1_2_mod(c):
    return 0.6 * c[:, 0] + 0.5 * c[:, 1] + 1.4 * (np.maximum(c[:, 0], c[:, 1]) > 1.5)


def _twod_s2_1(c):
    r = (c[:, 0] / 2.0) ** 2 + (c[:, 1] / 2.0) ** 2
    out = np.where(r > 1.0, 3.0 * np.sqrt(np.maximum(r - 1.0, 0.0)), 0.0)
    return 0.4 + out


def _twod_s2_2(c):
    r = (2.0 * c[:, 0] / 5.0) ** 2 + (2.0 * c[:, 1] / 5.0) ** 2
    out = np.where(
        r > 1.0, 0.3 + 4.0 * np.sqrt(np.maximum(r - 1.0, 0.0)), 0.0
    )
    return 0.3 + out


def _binom2_1(c):
    return 0.9 * np.sin(c[:, 0] + 0.3) + 0.01


def _binom2_2(c):
    return np.sin(c[:, 0] + 0.2)


def _binom4_1(c):
    return 0.05 + 0.73 * expit(10.0 * c[:, 0] - 5.0)


def _binom4_2(c):
    return 0.2 + 0.55 * expit(13.0 * c[:, 0] - 4.0)


def _binom4_3(c):
    return 0.2 + 0.7 * expit(11.0 * c[:, 0] - 4.0)


def _binom4_4(c):
    return 0.05 + 0.8 * expit(4.0 * c[:, 0] - 4.0)


BINOM4_FUNCTIONS = (_binom4_1, _binom4_2, _binom4_3, _binom4_4)


# ---------------------------------------------------------------------------
# study registry and configuration
# ---------------------------------------------------------------------------

STUDY_IDS = (
    "LRQuantileFixed",
    "LRQuantileRandom",
    "PowerCurve",
    "Sensitivity1",
    "Sensitivity2",
    "Sensitivity3",
    "FiveFunctionFixed",
    "TwoDimStudy1",
    "TwoDimStudy2",
    "TwoDimStudy1Modified",
    "BinomialK2",
    "BinomialK4Balanced",
    "BinomialK4Unbalanced",
    "FiveFunctionRandom1",
    "FiveFunctionRandom2",
)

_RP_STUDIES = {
    "Sensitivity1": dict(design="fixed1d", truths=(_sq, _sq_then_linear)),
    "Sensitivity2": dict(design="fixed1d", truths=(_const_195, _one_plus_expit)),
    "Sensitivity3": dict(design="fixed1d", truths=(_sq, _quartic)),
    "FiveFunctionFixed": dict(design="fixed1d", truths=FIVE_FUNCTIONS),
    "TwoDimStudy1": dict(design="grid2d", truths=(_twod_s1_1, _twod_s1_2)),
    "TwoDimStudy2": dict(design="grid2d", truths=(_twod_s2_1, _twod_s2_2)),
    "TwoDimStudy1Modified": dict(
        design="grid2d", truths=(_twod_s1_1, _twod_s1_2_mod)
    ),
    "BinomialK2": dict(
        design="unit1d", truths=(_binom2_1, _binom2_2), trials=(5, 5)
    ),
    "BinomialK4Balanced": dict(
        design="unit1d", truths=BINOM4_FUNCTIONS, trials=(20, 20, 20, 20)
    ),
    "BinomialK4Unbalanced": dict(
        design="unit1d", truths=BINOM4_FUNCTIONS, trials=(20, 5, 20, 20)
    ),
    "FiveFunctionRandom1": dict(
        design="random1d", truths=FIVE_FUNCTIONS, size_factors=(1, 1, 1, 1, 1)
    ),
    "FiveFunctionRandom2": dict(
        design="random1d",
        truths=FIVE_FUNCTIONS,
        size_factors=(0.5, 1, 1, 0.5, 0.5),
    ),
}

_DEFAULT_N = {
    "LRQuantileFixed": 50,
    "LRQuantileRandom": 200,
    "PowerCurve": 200,
    "TwoDimStudy1": 10,
    "TwoDimStudy2": 10,
    "TwoDimStudy1Modified": 10,
}

_DEFAULT_REPS = {"lr_quantile": 20_000, "power": 1_000, "rp": 200}
_FAST_REPS = {"lr_quantile": 2_000, "power": 200, "rp": 50}


def study_kind(study_id: str) -> str:
    if study_id in ("LRQuantileFixed", "LRQuantileRandom"):
        return "lr_quantile"
    if study_id == "PowerCurve":
        return "power"
    if study_id in _RP_STUDIES:
        return "rp"
    raise UnknownStudy(f"unknown study id: {study_id!r}")


@dataclass(frozen=True)
class StudyConfig:
    """Fully determines one study run (reports are pure functions of it)."""

    study_id: str
    n: int
    alpha: float
    replications: int
    seed: int
    threads: int = 1
    tol: float = 1e-8
    max_sweeps: int = 10_000
    cap_weights: bool = False

    def __post_init__(self) -> None:
        study_kind(self.study_id)  # validates the id
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")


def default_config(
    study_id: str,
    n: Optional[int] = None,
    alpha: Optional[float] = None,
    replications: Optional[int] = None,
    seed: int = 0,
    fast: bool = False,
    threads: int = 1,
    cap_weights: bool = False,
) -> StudyConfig:
    """Fill paper-scale defaults (or the --fast CI profile) per study."""
    kind = study_kind(study_id)
    if n is None:
        n = _DEFAULT_N.get(study_id, 100)
    if alpha is None:
        alpha = 0.05 if study_id == "PowerCurve" else 0.1
    if replications is None:
        replications = (_FAST_REPS if fast else _DEFAULT_REPS)[kind]
    return StudyConfig(
        study_id=study_id,
        n=n,
        alpha=alpha,
        replications=replications,
        seed=seed,
        threads=threads,
        cap_weights=cap_weights,
    )


def rng_for(seed: int, study_id: str, replication: int, function: int = 0):
    """Counter-based generator for one (study, replication, function) cell."""
    key = (seed, STUDY_IDS.index(study_id), replication, function)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


# ---------------------------------------------------------------------------
# data generation
# ---------------------------------------------------------------------------


def _design_sizes(config: StudyConfig) -> tuple[int, ...]:
    spec = _RP_STUDIES[config.study_id]
    if spec["design"] == "random1d":
        return tuple(
            int(round(f * config.n)) for f in spec["size_factors"]
        )
    return tuple(config.n for _ in spec["truths"])


def _gen_arrays(config: StudyConfig, replication: int):
    """Per-function (coords, responses, trials) arrays for one replication.

    Fixed 1-D designs use x_i = 4 i / n; the binomial studies use the unit
    grid x_i = i / n; random designs draw X ~ Uniform(0, 4) and sort.
    Gaussian noise is standard normal (variance 1, treated as known).
    """
    spec = _RP_STUDIES[config.study_id]
    design = spec["design"]
    truths = spec["truths"]
    out = []
    for k, lam in enumerate(truths):
        rng = rng_for(config.seed, config.study_id, replication, k)
        if design == "fixed1d":
            x = 4.0 * np.arange(1, config.n + 1) / config.n
            coords = x[:, None]
            y = lam(coords) + rng.normal(size=config.n)
            trials = None
        elif design == "unit1d":
            x = np.arange(1, config.n + 1) / config.n
            coords = x[:, None]
            m = spec["trials"][k]
            y = rng.binomial(m, lam(coords)).astype(float)
            trials = np.full(config.n, float(m))
        elif design == "random1d":
            n_k = _design_sizes(config)[k]
            x = np.sort(rng.uniform(0.0, 4.0, size=n_k))
            coords = x[:, None]
            y = lam(coords) + rng.normal(size=n_k)
            trials = None
        elif design == "grid2d":
            side = np.linspace(0.0, 4.0, config.n)
            g1, g2 = np.meshgrid(side, side, indexing="ij")
            coords = np.column_stack([g1.ravel(), g2.ravel()])
            y = lam(coords) + rng.normal(size=coords.shape[0])
            trials = None
        else:  # pragma: no cover
            raise UnknownStudy(design)
        out.append((coords, y, trials))
    return out, truths


def generate(config: StudyConfig, replication: int):
    """Datasets plus true functions for one replication of an R/P study.

    Bit-identical for identical (config, replication); each function draws
    from its own substream.
    """
    if study_kind(config.study_id) != "rp":
        raise UnknownStudy(
            f"{config.study_id} is not a data-generating R/P study"
        )
    arrays, truths = _gen_arrays(config, replication)
    datasets = []
    for k, (coords, y, trials) in enumerate(arrays):
        points = tuple(DesignPoint(tuple(c)) for c in coords)
        datasets.append(
            Dataset(
                function_id=k,
                points=points,
                responses=y,
                trials=trials,
            )
        )
    return datasets, truths


def _families_for(config: StudyConfig) -> tuple[ModelFamily, ...]:
    spec = _RP_STUDIES[config.study_id]
    if spec["design"] == "unit1d":
        return tuple(ModelFamily.binomial() for _ in spec["truths"])
    return tuple(ModelFamily.gaussian(1.0) for _ in spec["truths"])


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


def rmse(
    fit_values: Sequence[np.ndarray],
    true_functions: Sequence[Callable],
    eval_points: Sequence[np.ndarray],
) -> float:
    """Root mean squared error across functions at their evaluation points.

    sqrt of the average over functions of the mean squared error at that
    function's evaluation points (all design points in fixed designs; a
    function's own observed points in random designs).
    """
    if len(fit_values) == 0:
        raise NoEvalPoints("no functions to evaluate")
    mses = []
    for fitted, lam, pts in zip(fit_values, true_functions, eval_points):
        pts = np.asarray(pts, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.shape[0] == 0:
            raise NoEvalPoints("empty evaluation set")
        truth = lam(pts)
        mses.append(float(np.mean((truth - np.asarray(fitted)) ** 2)))
    return math.sqrt(sum(mses) / len(mses))


@dataclass(frozen=True)
class RatioSummary:
    """Median and interquartile range of R plus the estimate P(R < 1)."""

    median_r: float
    q25: float
    q75: float
    p_below_1: float


def r_and_p(
    rmse_joint: Sequence[float], rmse_separate: Sequence[float]
) -> RatioSummary:
    """Summarize efficiency ratios R = RMSE_joint / RMSE_separate."""
    joints = np.asarray(rmse_joint, dtype=float)
    seps = np.asarray(rmse_separate, dtype=float)
    if np.any(seps == 0):
        raise DegenerateBaseline("separate-fit RMSE of zero")
    r = joints / seps
    return RatioSummary(
        median_r=float(np.median(r)),
        q25=float(np.quantile(r, 0.25)),
        q75=float(np.quantile(r, 0.75)),
        p_below_1=float(np.mean(r < 1.0)),
    )


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuantileRow:
    """One row of an LR-statistic quantile table."""

    label: str
    conditioned: bool
    count: int
    n_zero: int
    quantiles: tuple[float, ...]  # at QUANTILE_PROBS


QUANTILE_PROBS = (0.5, 0.7, 0.8, 0.9, 0.95)


@dataclass(frozen=True)
class PowerCurveResult:
    """Per-point rejection rates of the similarity test."""

    x: tuple[float, ...]
    rejection: tuple[float, ...]
    critical_value: float
    avg_rejection_null: float  # x <= 2 (functions identical)
    avg_rejection_far: float  # x > 2.5 (functions clearly apart)


@dataclass(frozen=True)
class StudyReport:
    """Complete outcome of one study run (a pure function of the config)."""

    config: StudyConfig
    kind: str
    per_function: Optional[tuple[RatioSummary, ...]] = None
    overall: Optional[RatioSummary] = None
    quantile_rows: Optional[tuple[QuantileRow, ...]] = None
    power: Optional[PowerCurveResult] = None
    diagnostics: Optional[dict] = None


# ---------------------------------------------------------------------------
# R / P study runner
# ---------------------------------------------------------------------------


def _rp_replication(config: StudyConfig, replication: int):
    """One replication: joint vs separate fits and order diagnostics."""
    datasets, truths = generate(config, replication)
    families = _families_for(config)
    fdata = [prepare_function(d, f) for d, f in zip(datasets, families)]
    problem = build_joint_problem(
        datasets,
        families,
        alpha=config.alpha,
        cap_weights=config.cap_weights,
        function_data=fdata,
    )
    fit = fit_joint(
        problem, tol=config.tol, max_sweeps=config.max_sweeps,
        sweep_order="ascending",
    )
    fit_rev = fit_joint(
        problem, tol=config.tol, max_sweeps=config.max_sweeps,
        sweep_order="descending",
    )
    act = problem.active
    order_gap = float(
        np.max(np.abs(fit.values[act] - fit_rev.values[act]))
    )
    trace = fit.objective_trace
    trace_rise = float(np.max(np.diff(trace))) if trace.size > 1 else 0.0

    mse_joint = []
    mse_sep = []
    for k, fd in enumerate(fdata):
        truth = truths[k](fd.coords)
        fitted = fit.values[k, problem.obs_index[k]]
        mse_joint.append(float(np.mean((truth - fitted) ** 2)))
        mse_sep.append(float(np.mean((truth - fd.sep_fit) ** 2)))
    return (
        tuple(mse_joint),
        tuple(mse_sep),
        order_gap,
        trace_rise,
        bool(fit.converged and fit_rev.converged),
        int(fit.iterations),
    )


def _rp_chunk(config: StudyConfig, reps: Sequence[int]):
    return [_rp_replication(config, r) for r in reps]


def rp_study(config: StudyConfig) -> StudyReport:
    """Run an efficiency study: median/IQR of R and P per function/overall."""
    rows = [row for part in _run_chunked(config, _rp_chunk) for row in part]
    kk = len(rows[0][0])
    mse_joint = np.asarray([row[0] for row in rows])
    mse_sep = np.asarray([row[1] for row in rows])
    per_function = tuple(
        r_and_p(np.sqrt(mse_joint[:, k]), np.sqrt(mse_sep[:, k]))
        for k in range(kk)
    )
    overall = r_and_p(
        np.sqrt(mse_joint.mean(axis=1)), np.sqrt(mse_sep.mean(axis=1))
    )
    diagnostics = {
        "max_order_gap": max(row[2] for row in rows),
        "max_trace_rise": max(row[3] for row in rows),
        "all_converged": all(row[4] for row in rows),
        "max_sweeps_used": max(row[5] for row in rows),
        "replications": len(rows),
    }
    return StudyReport(
        config=config,
        kind="rp",
        per_function=per_function,
        overall=overall,
        diagnostics=diagnostics,
    )


# ---------------------------------------------------------------------------
# LR quantile studies
# ---------------------------------------------------------------------------


def _pair_lr_fixed(y1, y2, w, t_indices):
    """LR at tied indices for two fully observed chains (shared design)."""
    f1 = _kernels.pava(y1, w)
    f2 = _kernels.pava(y2, w)
    o1 = float(_kernels.wsse(y1, w, f1))
    o2 = float(_kernels.wsse(y2, w, f2))
    out = np.empty(len(t_indices))
    for j, t in enumerate(t_indices):
        n1, n2, _ = _kernels.tied_chain(y1, w, t, y2, w, t)
        lr = (
            float(_kernels.wsse(y1, w, n1))
            - o1
            + float(_kernels.wsse(y2, w, n2))
            - o2
        )
        out[j] = 0.0 if lr < LR_CLAMP else lr
    return out


def _lr_tied_inserted(x1, y1, w1, o1, x2, y2, w2, o2, xt):
    """LR when the tie point may be unobserved for either chain."""
    p1 = int(np.searchsorted(x1, xt))
    if p1 < x1.size and x1[p1] == xt:
        a1, b1, i1 = y1, w1, p1
    else:
        a1 = np.insert(y1, p1, 0.0)
        b1 = np.insert(w1, p1, 0.0)
        i1 = p1
    p2 = int(np.searchsorted(x2, xt))
    if p2 < x2.size and x2[p2] == xt:
        a2, b2, i2 = y2, w2, p2
    else:
        a2 = np.insert(y2, p2, 0.0)
        b2 = np.insert(w2, p2, 0.0)
        i2 = p2
    n1, n2, _ = _kernels.tied_chain(a1, b1, i1, a2, b2, i2)
    lr = (
        float(_kernels.wsse(a1, b1, n1))
        - o1
        + float(_kernels.wsse(a2, b2, n2))
        - o2
    )
    return 0.0 if lr < LR_CLAMP else lr


def nearest_fixed_index(n: int, x_target: float) -> int:
    """0-based index of the design point 4i/n closest to ``x_target``."""
    i = int(math.floor(x_target * n / 4.0 + 0.5))
    return min(max(i, 1), n) - 1


def _lrq_fixed_chunk(config: StudyConfig, reps: Sequence[int]):
    n = config.n
    x = 4.0 * np.arange(1, n + 1) / n
    targets = (1.0, 2.0, 3.0)
    t_idx = [nearest_fixed_index(n, t) for t in targets]
    w = np.ones(n)
    out = np.empty((len(reps), len(targets)))
    for j, rep in enumerate(reps):
        y1 = x**2 + rng_for(config.seed, config.study_id, rep, 0).normal(size=n)
        y2 = x**2 + rng_for(config.seed, config.study_id, rep, 1).normal(size=n)
        out[j] = _pair_lr_fixed(y1, y2, w, t_idx)
    return out


def _lrq_random_chunk(config: StudyConfig, reps: Sequence[int]):
    n = config.n
    qlevels = (0.25, 0.5, 0.75)
    out = np.empty((len(reps), len(qlevels)))
    for j, rep in enumerate(reps):
        rng1 = rng_for(config.seed, config.study_id, rep, 0)
        rng2 = rng_for(config.seed, config.study_id, rep, 1)
        x1 = np.sort(rng1.uniform(0.0, 4.0, size=n))
        y1 = x1**2 + rng1.normal(size=n)
        x2 = np.sort(rng2.uniform(0.0, 4.0, size=n))
        y2 = x2**2 + rng2.normal(size=n)
        w1 = np.ones(n)
        w2 = np.ones(n)
        f1 = _kernels.pava(y1, w1)
        f2 = _kernels.pava(y2, w2)
        o1 = float(_kernels.wsse(y1, w1, f1))
        o2 = float(_kernels.wsse(y2, w2, f2))
        # classic empirical quantiles are order statistics of the draws
        taus = np.quantile(x1, qlevels, method="inverted_cdf")
        for q, xt in enumerate(taus):
            out[j, q] = _lr_tied_inserted(
                x1, y1, w1, o1, x2, y2, w2, o2, float(xt)
            )
    return out


def lr_quantile_study(config: StudyConfig) -> StudyReport:
    """Empirical quantiles of the LR statistic under identical truths.

    The fixed variant evaluates at the design points nearest x = 1, 2, 3;
    the random variant at the empirical 25/50/75% quantiles of the first
    function's covariate draws and reports both the unconditional table
    and the table conditioned on LR > 0.
    """
    kind = study_kind(config.study_id)
    if kind != "lr_quantile":
        raise UnknownStudy(f"{config.study_id} is not an LR quantile study")
    fixed = config.study_id == "LRQuantileFixed"
    chunk_fn = _lrq_fixed_chunk if fixed else _lrq_random_chunk
    lrs = np.concatenate(_run_chunked(config, chunk_fn), axis=0)

    if fixed:
        labels = [
            f"x={t:g} (grid x={4.0 * (nearest_fixed_index(config.n, t) + 1) / config.n:g})"
            for t in (1.0, 2.0, 3.0)
        ]
    else:
        labels = ["X quantile 25%", "X quantile 50%", "X quantile 75%"]

    rows = []
    for j, label in enumerate(labels):
        col = lrs[:, j]
        rows.append(
            QuantileRow(
                label=label,
                conditioned=False,
                count=col.size,
                n_zero=int(np.sum(col == 0.0)),
                quantiles=tuple(
                    float(q) for q in np.quantile(col, QUANTILE_PROBS)
                ),
            )
        )
    if not fixed:
        for j, label in enumerate(labels):
            col = lrs[:, j]
            pos = col[col > 0.0]
            if pos.size == 0:
                pos = col
            rows.append(
                QuantileRow(
                    label=label,
                    conditioned=True,
                    count=int(pos.size),
                    n_zero=0,
                    quantiles=tuple(
                        float(q) for q in np.quantile(pos, QUANTILE_PROBS)
                    ),
                )
            )
    return StudyReport(
        config=config,
        kind="lr_quantile",
        quantile_rows=tuple(rows),
        diagnostics={"replications": int(lrs.shape[0])},
    )


# ---------------------------------------------------------------------------
# power study
# ---------------------------------------------------------------------------


def _power_chunk(config: StudyConfig, reps: Sequence[int]):
    n = config.n
    x = 4.0 * np.arange(1, n + 1) / n
    coords = x[:, None]
    lam1 = _sq(coords)
    lam2 = _sq_then_linear(coords)
    w = np.ones(n)
    crit = chi2_quantile_1df(1.0 - config.alpha)
    rejections = np.zeros(n)
    for rep in reps:
        y1 = lam1 + rng_for(config.seed, config.study_id, rep, 0).normal(size=n)
        y2 = lam2 + rng_for(config.seed, config.study_id, rep, 1).normal(size=n)
        lrs = _pair_lr_fixed(y1, y2, w, np.arange(n))
        rejections += lrs > crit
    return rejections


def power_study(config: StudyConfig) -> StudyReport:
    """Rejection-rate curve of the similarity test across the design.

    Truths coincide on [0, 2] (the null region) and split increasingly
    beyond; the test uses the chi-squared(1) critical value at 1 - alpha.
    """
    if config.study_id != "PowerCurve":
        raise UnknownStudy(f"{config.study_id} is not the power study")
    rejections = np.sum(_run_chunked(config, _power_chunk), axis=0)
    rates = rejections / config.replications
    x = 4.0 * np.arange(1, config.n + 1) / config.n
    null_region = x <= 2.0
    far_region = x > 2.5
    crit = chi2_quantile_1df(1.0 - config.alpha)
    power = PowerCurveResult(
        x=tuple(float(v) for v in x),
        rejection=tuple(float(r) for r in rates),
        critical_value=float(crit),
        avg_rejection_null=float(np.mean(rates[null_region])),
        avg_rejection_far=float(np.mean(rates[far_region]))
        if np.any(far_region)
        else float("nan"),
    )
    return StudyReport(
        config=config,
        kind="power",
        power=power,
        diagnostics={"replications": config.replications},
    )


# ---------------------------------------------------------------------------
# execution helpers and dispatch
# ---------------------------------------------------------------------------


def _run_chunked(config: StudyConfig, chunk_fn) -> list:
    """Run chunk_fn over contiguous replication ranges, optionally parallel.

    Returns the per-chunk results in replication order regardless of
    scheduling, so reports never depend on the degree of parallelism.
    """
    reps = list(range(config.replications))
    threads = max(1, config.threads)
    if threads == 1:
        return [chunk_fn(config, reps)]
    n_chunks = min(len(reps), threads * 4)
    bounds = np.linspace(0, len(reps), n_chunks + 1).astype(int)
    chunks = [reps[bounds[i]:bounds[i + 1]] for i in range(n_chunks)]
    chunks = [c for c in chunks if c]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        results = list(
            pool.map(
                _chunk_worker,
                [(config, chunk_fn.__name__, c) for c in chunks],
            )
        )
    return results


_CHUNK_FNS = {}


def _chunk_worker(args):
    config, fn_name, reps = args
    return _CHUNK_FNS[fn_name](config, reps)


def run_study(config: StudyConfig) -> StudyReport:
    """Dispatch a study configuration to its runner."""
    kind = study_kind(config.study_id)
    if kind == "rp":
        return rp_study(config)
    if kind == "lr_quantile":
        return lr_quantile_study(config)
    return power_study(config)


_CHUNK_FNS.update(
    {
        "_rp_chunk": _rp_chunk,
        "_lrq_fixed_chunk": _lrq_fixed_chunk,
        "_lrq_random_chunk": _lrq_random_chunk,
        "_power_chunk": _power_chunk,
    }
)
