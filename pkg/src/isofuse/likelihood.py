"""Response-model families: Gaussian and binomial.

These supply the three ingredients the similarity test and the joint
estimator need from a distributional model: per-node isotonic weights,
log-likelihoods, and nuisance-parameter estimation. For both families the
weighted least-squares isotonic fit coincides with the constrained
maximum-likelihood fit (exponential-family pooling), which is why the
quadratic solvers carry the whole pipeline:

* Gaussian: weight 1/sigma^2 per observation, targets are the responses.
* Binomial: weight = trial count per observation, targets are observed
  proportions; fitted values are success probabilities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .errors import (
    DegenerateLikelihood,
    InsufficientData,
    MissingNuisance,
    NullBeatsAlternative,
)
from .poset import DesignPoint, as_point

GAUSSIAN = "gaussian"
BINOMIAL = "binomial"

#: Lower clamp for estimated Gaussian variances (perfect fits).
SIGMA2_FLOOR = 1e-8


@dataclass(frozen=True)
class ModelFamily:
    """Distributional family of one response function.

    ``sigma2`` is the (known or estimated) Gaussian noise variance; trial
    counts for the binomial family live on the data rows.
    """

    kind: str
    sigma2: Optional[float] = None

    def __post_init__(self) -> None:
        if self.kind not in (GAUSSIAN, BINOMIAL):
            raise ValueError(f"unknown family kind: {self.kind!r}")
        if self.kind == BINOMIAL and self.sigma2 is not None:
            raise ValueError("sigma2 is a Gaussian-only parameter")
        if self.sigma2 is not None and not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")

    @classmethod
    def gaussian(cls, sigma2: Optional[float] = None) -> "ModelFamily":
        return cls(kind=GAUSSIAN, sigma2=sigma2)

    @classmethod
    def binomial(cls) -> "ModelFamily":
        return cls(kind=BINOMIAL)

    def with_sigma2(self, sigma2: float) -> "ModelFamily":
        return ModelFamily(kind=self.kind, sigma2=float(sigma2))


@dataclass(frozen=True)
class Dataset:
    """Observations for one function: rows of (point, response[, trials]).

    Binomial responses are success counts in [0, trials] (Bernoulli rows
    use trials=1); Gaussian rows leave trials None.
    """

    function_id: int
    points: tuple[DesignPoint, ...]
    responses: np.ndarray
    trials: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        points = tuple(as_point(p) for p in self.points)
        responses = np.asarray(self.responses, dtype=float)
        if len(points) == 0:
            raise ValueError("a dataset needs at least one row")
        if responses.shape != (len(points),):
            raise ValueError("responses must align with points")
        if not np.all(np.isfinite(responses)):
            raise ValueError("responses must be finite")
        trials = self.trials
        if trials is not None:
            trials = np.asarray(trials, dtype=float)
            if trials.shape != (len(points),):
                raise ValueError("trials must align with points")
            if np.any(trials < 1):
                raise ValueError("trials must be >= 1")
            if np.any(responses < 0) or np.any(responses > trials):
                raise ValueError("binomial responses must lie in [0, trials]")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "responses", responses)
        object.__setattr__(self, "trials", trials)

    @classmethod
    def from_rows(cls, function_id: int, rows: Sequence) -> "Dataset":
        """Build from (point, response) or (point, response, trials) rows."""
        pts = []
        resp = []
        trials = []
        has_trials = False
        for row in rows:
            if len(row) == 3 and row[2] is not None:
                has_trials = True
        for row in rows:
            pts.append(as_point(row[0]))
            resp.append(float(row[1]))
            if has_trials:
                if len(row) < 3 or row[2] is None:
                    raise ValueError("mixed rows with and without trials")
                trials.append(float(row[2]))
        return cls(
            function_id=function_id,
            points=tuple(pts),
            responses=np.asarray(resp),
            trials=np.asarray(trials) if has_trials else None,
        )

    @property
    def n(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class AggregatedData:
    """Per-node reduction of a dataset over its distinct design points.

    ``targets`` are response means (Gaussian) or pooled proportions
    (binomial); ``weights`` are the isotonic regression weights for the
    family. ``successes``/``totals`` are pooled binomial counts (None for
    Gaussian). ``row_node`` maps each original row to its node.
    """

    points: tuple[DesignPoint, ...]
    targets: np.ndarray
    weights: np.ndarray
    successes: Optional[np.ndarray]
    totals: Optional[np.ndarray]
    row_node: np.ndarray

    @property
    def n(self) -> int:
        return len(self.points)


def iso_weights(data: Dataset, family: ModelFamily) -> np.ndarray:
    """Per-observation isotonic weights for the family.

    Gaussian: 1/sigma^2 per row (constant within a function); binomial:
    the trial counts (the targets being observed proportions). With these
    weights the least-squares isotonic fit is the constrained MLE.
    """
    if family.kind == GAUSSIAN:
        if family.sigma2 is None:
            raise MissingNuisance(
                "Gaussian sigma2 is not set; supply it or estimate it first"
            )
        return np.full(data.n, 1.0 / family.sigma2)
    if data.trials is None:
        raise ValueError("binomial data needs trial counts")
    return data.trials.astype(float).copy()


def aggregate(data: Dataset, family: ModelFamily) -> AggregatedData:
    """Pool duplicate design points into single nodes.

    Weights add and targets pool by weighted mean, which changes the
    quadratic objective only by a constant, so fits are unaffected.
    """
    w_rows = iso_weights(data, family)
    if family.kind == BINOMIAL:
        t_rows = data.responses / data.trials
    else:
        t_rows = data.responses

    node_of: dict[tuple, int] = {}
    row_node = np.empty(data.n, dtype=np.int64)
    points: list[DesignPoint] = []
    for r, p in enumerate(data.points):
        node = node_of.get(p.coords)
        if node is None:
            node = len(points)
            node_of[p.coords] = node
            points.append(p)
        row_node[r] = node
    nn = len(points)
    weights = np.zeros(nn)
    acc = np.zeros(nn)
    np.add.at(weights, row_node, w_rows)
    np.add.at(acc, row_node, w_rows * t_rows)
    targets = acc / weights
    successes = totals = None
    if family.kind == BINOMIAL:
        successes = np.zeros(nn)
        totals = np.zeros(nn)
        np.add.at(successes, row_node, data.responses)
        np.add.at(totals, row_node, data.trials)
    return AggregatedData(
        points=tuple(points),
        targets=targets,
        weights=weights,
        successes=successes,
        totals=totals,
        row_node=row_node,
    )


def log_likelihood(
    data: Dataset, fitted: np.ndarray, family: ModelFamily
) -> float:
    """Model log-likelihood of the rows at per-row fitted values.

    Gaussian: sum of Normal(fit, sigma2) log-densities. Binomial: full
    binomial log-pmf including the combinatorial constant, with the
    0*log(0) convention for saturated fits.
    """
    fitted = np.asarray(fitted, dtype=float)
    if fitted.shape != (data.n,):
        raise ValueError("fitted must align with data rows")
    if family.kind == GAUSSIAN:
        if family.sigma2 is None:
            raise MissingNuisance("Gaussian sigma2 is not set")
        s2 = family.sigma2
        resid = data.responses - fitted
        return float(
            -0.5 * data.n * math.log(2.0 * math.pi * s2)
            - 0.5 * np.sum(resid**2) / s2
        )
    if data.trials is None:
        raise ValueError("binomial data needs trial counts")
    if np.any(fitted < 0) or np.any(fitted > 1):
        raise ValueError("binomial fitted values must lie in [0, 1]")
    y = data.responses
    m = data.trials
    bad = ((fitted == 0) & (y > 0)) | ((fitted == 1) & (y < m))
    if np.any(bad):
        raise DegenerateLikelihood(
            "fitted probability of 0 or 1 contradicts the observed counts"
        )
    ll = float(_kernels.binom_loglik(y, m - y, fitted))
    from scipy.special import gammaln

    ll += float(np.sum(gammaln(m + 1) - gammaln(y + 1) - gammaln(m - y + 1)))
    return ll


def estimate_sigma2(data: Dataset) -> float:
    """Estimate Gaussian noise variance from the separate isotonic fit.

    sigma2_hat = RSS / (n - d) with d the number of distinct fitted
    levels (the effective dimension of the monotone fit); when n <= d the
    divisor falls back to max(1, n - 1). Clamped below at SIGMA2_FLOOR.
    """
    if data.n < 2:
        raise InsufficientData("sigma2 estimation needs at least 2 rows")
    # Unit-weight fit: the variance scale cancels from the fitted values.
    agg = aggregate(data, ModelFamily.gaussian(sigma2=1.0))
    from .poset import build_poset
    from .isotonic import IsotonicProblem, solve_partial_order

    poset = build_poset(agg.points)
    sol = solve_partial_order(
        IsotonicProblem(poset, agg.targets, agg.weights)
    )
    fitted_rows = sol.values[agg.row_node]
    rss = float(np.sum((data.responses - fitted_rows) ** 2))
    d = sol.n_levels
    div = data.n - d if data.n > d else max(1, data.n - 1)
    return max(rss / div, SIGMA2_FLOOR)


def lr_gaussian_shortcut(rss0: float, rss1: float, sigma2: float) -> float:
    """Per-function Gaussian LR contribution: (RSS_null - RSS_alt) / sigma2.

    The Gaussian normalizing constants cancel between the two fits, so
    the likelihood-ratio statistic reduces to this scaled RSS gap.
    """
    if rss0 < rss1 - 1e-10:
        raise NullBeatsAlternative(
            f"null RSS {rss0} is below alternative RSS {rss1}"
        )
    return max(rss0 - rss1, 0.0) / sigma2
