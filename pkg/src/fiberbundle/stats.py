"""Censored strength statistics: product-limit curves, censored Weibull fits,
Weibull plots with lower-tail slopes, and partition-based Dirichlet posteriors."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy.optimize import brentq

__all__ = [
    "CensoredSample",
    "KMCurve",
    "WeibullFit",
    "TailFit",
    "IntervalPartition",
    "PBDPosterior",
    "kaplan_meier",
    "weibull_mle_censored",
    "weibull_plot_points",
    "weibull_plot_from_samples",
    "lower_tail_slope",
    "inflation_factor",
    "pbd_prior_weights",
    "pbd_posterior",
]

logger = logging.getLogger(__name__)

_Z95 = 1.959963984540054  # central 95% normal quantile


@dataclass(frozen=True)
class CensoredSample:
    """One strength observation; ``censored`` means right-censored at value."""

    value: float
    censored: bool = False

    def __post_init__(self):
        if self.value <= 0:
            raise ValueError("strength observations must be positive")


@dataclass(frozen=True)
class KMCurve:
    """Product-limit survival estimate with Greenwood 95% bands."""

    times: np.ndarray
    survival: np.ndarray
    variance: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def survival_at(self, t: float) -> float:
        """Step-function value S(t); 1 before the first event."""
        idx = np.searchsorted(self.times, t, side="right") - 1
        return 1.0 if idx < 0 else float(self.survival[idx])


def _as_censored(samples) -> list[CensoredSample]:
    out = []
    for s in samples:
        if isinstance(s, CensoredSample):
            out.append(s)
        else:
            value, censored = s
            out.append(CensoredSample(float(value), bool(censored)))
    if not out:
        raise ValueError("empty sample")
    return out


def kaplan_meier(samples) -> KMCurve:
    """Kaplan-Meier estimate; at tied times deaths are processed before
    censorings, so same-time censored items still count as at risk."""
    data = _as_censored(samples)
    values = np.array([s.value for s in data])
    events = np.array([not s.censored for s in data])
    if not events.any():
        warnings.warn("all observations are censored; survival curve is constant 1")
        empty = np.empty(0)
        return KMCurve(empty, empty, empty, empty, empty)
    order = np.argsort(values, kind="stable")
    values, events = values[order], events[order]
    times = []
    surv = []
    var = []
    s = 1.0
    greenwood = 0.0
    nobs = values.size
    for t in np.unique(values[events]):
        at_risk = int(np.sum(values >= t))
        deaths = int(np.sum((values == t) & events))
        s *= 1.0 - deaths / at_risk
        if at_risk > deaths:
            greenwood += deaths / (at_risk * (at_risk - deaths))
            var_t = s * s * greenwood
        else:
            var_t = 0.0  # curve hit zero; Greenwood is degenerate there
        times.append(t)
        surv.append(s)
        var.append(var_t)
    times = np.array(times)
    surv = np.array(surv)
    var = np.array(var)
    half = _Z95 * np.sqrt(var)
    return KMCurve(
        times=times,
        survival=surv,
        variance=var,
        lower=np.clip(surv - half, 0.0, 1.0),
        upper=np.clip(surv + half, 0.0, 1.0),
    )


@dataclass(frozen=True)
class WeibullFit:
    rho: float
    sigma: float
    loglik: float
    converged: bool

    def __post_init__(self):
        if self.rho <= 0 or self.sigma <= 0:
            raise ValueError("fitted shape and scale must be positive")


def weibull_mle_censored(samples, tol: float = 1e-10) -> WeibullFit:
    """Maximum likelihood Weibull fit under right censoring.

    Profiles the shape: given rho, the scale is closed form, and the shape
    solves 1/rho + mean(log x | events) = weighted mean of log x with weights
    x**rho over all observations.  Solved by bracketed root finding with
    geometric bracket expansion; |profile derivative| <= tol at the root.
    """
    data = _as_censored(samples)
    x = np.array([s.value for s in data])
    event = np.array([not s.censored for s in data])
    d = int(event.sum())
    if d < 2:
        raise ValueError("need at least 2 uncensored observations")
    logx = np.log(x)
    mean_unc = float(logx[event].mean())
    if np.ptp(logx) < 1e-13:
        raise ValueError("degenerate data: all observations equal")

    lmax = logx.max()

    def profile(rho: float) -> float:
        w = np.exp(rho * (logx - lmax))
        return 1.0 / rho + mean_unc - float(np.sum(w * logx) / np.sum(w))

    lo, hi = 1e-3, 8.0
    while profile(lo) < 0 and lo > 1e-12:
        lo /= 8.0
    expansions = 0
    while profile(hi) > 0:
        hi *= 2.0
        expansions += 1
        if expansions > 60:
            raise ValueError(
                f"profile root bracket failed to close: value at rho={hi:.3e} "
                f"is {profile(hi):.3e} (degenerate or pathological data)"
            )
    rho = float(brentq(profile, lo, hi, xtol=1e-13, rtol=8.9e-16, maxiter=200))
    converged = abs(profile(rho)) <= tol
    log_sigma = lmax + math.log(np.sum(np.exp(rho * (logx - lmax))) / d) / rho
    sigma = math.exp(log_sigma)
    loglik = float(d * math.log(rho) - d * rho * log_sigma + (rho - 1.0) * logx[event].sum() - d)
    return WeibullFit(rho=rho, sigma=sigma, loglik=loglik, converged=converged)


def weibull_plot_points(x, survival) -> tuple[np.ndarray, np.ndarray]:
    """Transform (x, S(x)) pairs to (ln x, ln(-ln S)); a Weibull is linear
    with slope equal to its shape.  Points with S in {0, 1} are dropped."""
    x = np.asarray(x, dtype=float)
    sf = np.asarray(survival, dtype=float)
    keep = (sf > 0.0) & (sf < 1.0) & (x > 0.0)
    dropped = int(np.sum(~keep))
    if dropped:
        logger.info("weibull_plot_points: dropped %d points with survival 0 or 1", dropped)
    return np.log(x[keep]), np.log(-np.log(sf[keep]))


def weibull_plot_from_samples(samples) -> tuple[np.ndarray, np.ndarray]:
    """Empirical Weibull plot: sorted sample against 1 - i/n survival."""
    xs = np.sort(np.asarray(samples, dtype=float))
    sf = 1.0 - np.arange(1, xs.size + 1) / xs.size
    return weibull_plot_points(xs, sf)


@dataclass(frozen=True)
class TailFit:
    slope: float
    intercept: float
    stderr: float
    n_points: int
    window: tuple[float, float]


def lower_tail_slope(samples, window: tuple[float, float] = (1e-5, 1e-3)) -> TailFit:
    """OLS slope of the Weibull plot restricted to an empirical-quantile window.

    The slope is the effective Weibull shape of the lower tail; dividing by the
    component shape gives the inflation factor.
    """
    xs = np.sort(np.asarray(samples, dtype=float))
    nobs = xs.size
    ranks = np.arange(1, nobs + 1) / nobs
    lo, hi = window
    sel = (ranks >= lo) & (ranks <= hi) & (ranks < 1.0)
    if int(sel.sum()) < 100:
        raise ValueError(
            f"only {int(sel.sum())} points in quantile window {window}; "
            "increase the replica count"
        )
    lx = np.log(xs[sel])
    ly = np.log(-np.log(1.0 - ranks[sel]))
    n = lx.size
    sxx = float(np.sum((lx - lx.mean()) ** 2))
    slope = float(np.sum((lx - lx.mean()) * (ly - ly.mean())) / sxx)
    intercept = float(ly.mean() - slope * lx.mean())
    resid = ly - (intercept + slope * lx)
    stderr = float(np.sqrt(np.sum(resid**2) / (n - 2) / sxx))
    return TailFit(slope=slope, intercept=intercept, stderr=stderr, n_points=n,
                   window=(float(lo), float(hi)))


def inflation_factor(rho_g: float, rho: float) -> float:
    """Ratio of the bundle tail shape to the component shape; equals the size
    of the structure's smallest cut set in the small-load limit."""
    if rho <= 0:
        raise ValueError("component shape must be positive")
    return rho_g / rho


# ---------------------------------------------------------------------------
# partition-based Dirichlet posterior


@dataclass(frozen=True)
class IntervalPartition:
    """Ordered interval cells of [0, inf): [e0, e1), ..., [e_{J-1}, inf)."""

    edges: tuple[float, ...]

    def __post_init__(self):
        edges = tuple(float(e) for e in self.edges)
        object.__setattr__(self, "edges", edges)
        if not edges or edges[0] != 0.0:
            raise ValueError("partition must start at 0")
        if any(b <= a for a, b in zip(edges[:-1], edges[1:])):
            raise ValueError("partition edges must be strictly increasing")

    @property
    def n_cells(self) -> int:
        return len(self.edges)

    def cell_bounds(self, j: int) -> tuple[float, float]:
        hi = self.edges[j + 1] if j + 1 < len(self.edges) else math.inf
        return (self.edges[j], hi)

    def cell_of(self, value: float) -> int:
        if value < 0:
            raise ValueError("values live on [0, inf)")
        return int(np.searchsorted(np.asarray(self.edges), value, side="right") - 1)


@dataclass(frozen=True)
class PBDPosterior:
    """Mixture of Dirichlet laws over the partition cells.

    Every component's parameter vector is the prior weights plus an integer
    assignment of the observations to cells; weights are the sequential
    urn-predictive probabilities of those assignments and sum to 1.
    """

    partition: IntervalPartition
    prior: tuple[float, ...]
    weights: tuple[float, ...]
    counts: tuple[tuple[int, ...], ...]

    def parameter_vectors(self) -> list[np.ndarray]:
        alpha = np.asarray(self.prior)
        return [alpha + np.asarray(c) for c in self.counts]

    def mean_cell_probabilities(self) -> np.ndarray:
        out = np.zeros(self.partition.n_cells)
        for w, vec in zip(self.weights, self.parameter_vectors()):
            out += w * vec / vec.sum()
        return out


def pbd_prior_weights(partition: IntervalPartition, base, total_mass: float) -> np.ndarray:
    """Prior cell weights: total mass times the base-measure cell probabilities.

    Uses survival differences so far-tail cells keep their (tiny) mass instead
    of underflowing through 1 - cdf."""
    if total_mass <= 0:
        raise ValueError("total mass must be positive")
    if hasattr(base, "sf"):
        sf_vals = [1.0] + [float(base.sf(e)) for e in partition.edges[1:]] + [0.0]
        probs = -np.diff(sf_vals)
    else:
        cdf_vals = [0.0] + [float(base.cdf(e)) for e in partition.edges[1:]] + [1.0]
        probs = np.diff(cdf_vals)
    return total_mass * probs


def pbd_posterior(partition: IntervalPartition, base, total_mass: float,
                  observations, max_exact: int = 100_000,
                  mc_draws: int = 20_000, seed: int = 0) -> PBDPosterior:
    """Posterior over cell probabilities given censored observations.

    Each observation is a set of candidate cells (a singleton when
    uncensored).  Every way of assigning observations to cells yields a
    Dirichlet component; assignments are weighted by sequential urn
    predictive probabilities.  Exact enumeration while the assignment space
    is at most ``max_exact``; Monte Carlo over assignment paths beyond.
    """
    alpha = pbd_prior_weights(partition, base, total_mass)
    ncells = partition.n_cells
    cell_sets: list[tuple[int, ...]] = []
    for obs in observations:
        cells = (obs,) if isinstance(obs, (int, np.integer)) else tuple(sorted(set(obs)))
        if not cells:
            raise ValueError("observation with empty cell-set")
        if any(not 0 <= c < ncells for c in cells):
            raise ValueError(f"cell index out of range in {cells}")
        cell_sets.append(cells)

    space = 1
    for cells in cell_sets:
        space *= len(cells)

    acc: dict[tuple[int, ...], float] = {}

    def weight_of(assignment: tuple[int, ...]) -> float:
        counts = np.zeros(ncells)
        w = 1.0
        for cells, j in zip(cell_sets, assignment):
            masses = np.array([alpha[c] + counts[c] for c in cells])
            w *= masses[cells.index(j)] / masses.sum()
            counts[j] += 1
        return w

    if space <= max_exact:
        for assignment in product(*cell_sets):
            key = tuple(np.bincount(assignment, minlength=ncells).tolist())
            acc[key] = acc.get(key, 0.0) + weight_of(assignment)
    else:
        rng = np.random.default_rng(seed)
        for _ in range(mc_draws):
            counts = np.zeros(ncells)
            path = []
            for cells in cell_sets:
                masses = np.array([alpha[c] + counts[c] for c in cells])
                j = cells[rng.choice(len(cells), p=masses / masses.sum())]
                path.append(j)
                counts[j] += 1
            key = tuple(np.bincount(path, minlength=ncells).tolist())
            acc[key] = acc.get(key, 0.0) + 1.0 / mc_draws

    items = sorted(acc.items(), key=lambda kv: -kv[1])
    total = sum(w for _, w in items)
    return PBDPosterior(
        partition=partition,
        prior=tuple(float(a) for a in alpha),
        weights=tuple(w / total for _, w in items),
        counts=tuple(k for k, _ in items),
    )
