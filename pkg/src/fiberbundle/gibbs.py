"""Exact state measure of a loaded bundle over all 2^n configurations.

At a load per component s, the log odds of each component surviving its share
determine an energy via Moebius inversion on the subset lattice; normalizing
exp(-U) gives the probability of every working-set configuration.  For small
bundles the measure is enumerated exactly, and the family of potentials at one
load can be regressed onto another load's potentials (the linear median-field
reduction).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import logsumexp

from .loadshare import Configuration, Rule

__all__ = [
    "SubsetTable",
    "GibbsModel",
    "LMFFit",
    "PositivityError",
    "log_odds",
    "mobius_potentials",
    "mobius_energy",
    "potentials_from_energy",
    "build_gibbs",
    "lmf_fit",
    "strength_percentile",
    "total_variation",
]

MAX_ENUM_N = 20


class PositivityError(ValueError):
    """A component CDF hit 0 or 1 at its shared load, so the log odds are
    undefined (the positivity condition fails)."""


@dataclass(frozen=True)
class SubsetTable:
    """One real value per subset of {0..n-1}, indexed by bit mask."""

    n: int
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        if vals.shape != (1 << self.n,):
            raise ValueError(f"expected {1 << self.n} entries, got {vals.shape}")

    def value(self, subset: frozenset[int]) -> float:
        mask = 0
        for i in subset:
            mask |= 1 << i
        return float(self.values[mask])

    @property
    def sizes(self) -> np.ndarray:
        return np.bitwise_count(np.arange(1 << self.n, dtype=np.uint64)).astype(np.int64)


def _layered(values: np.ndarray, n: int, op) -> np.ndarray:
    # in-place butterfly over the subset lattice, one bit layer at a time
    out = values.copy()
    for b in range(n):
        shaped = out.reshape(-1, 2, 1 << b)
        op(shaped)
        out = shaped.reshape(-1)
    return out


def _zeta(values: np.ndarray, n: int) -> np.ndarray:
    """g(B) = sum over A subset of B of f(A)."""

    def op(shaped):
        shaped[:, 1, :] += shaped[:, 0, :]

    return _layered(values, n, op)


def _mobius(values: np.ndarray, n: int) -> np.ndarray:
    """g(K) = alternating sum over A subset of K of (-1)^{|K \\ A|} f(A)."""

    def op(shaped):
        shaped[:, 1, :] -= shaped[:, 0, :]

    return _layered(values, n, op)


def mobius_potentials(sigma: SubsetTable) -> SubsetTable:
    """Potentials from aggregated log odds: alternating subset sum over each
    K divided by |K|; the empty set carries no potential."""
    if sigma.values[0] != 0.0:
        raise ValueError("sigma at the empty set must be 0")
    raw = _mobius(sigma.values, sigma.n)
    sizes = sigma.sizes
    out = np.zeros_like(raw)
    nz = sizes > 0
    out[nz] = raw[nz] / sizes[nz]
    return SubsetTable(sigma.n, out)


def mobius_energy(potentials: SubsetTable) -> SubsetTable:
    """Energy U(B) = -sum of V over subsets of B (fast zeta transform)."""
    if potentials.values[0] != 0.0:
        raise ValueError("potential at the empty set must be 0")
    return SubsetTable(potentials.n, -_zeta(potentials.values, potentials.n))


def potentials_from_energy(energy: SubsetTable) -> SubsetTable:
    """Inverse of :func:`mobius_energy`: V(A) = -alternating subset sum of U."""
    if energy.values[0] != 0.0:
        raise ValueError("energy at the empty set must be 0")
    return SubsetTable(energy.n, -_mobius(energy.values, energy.n))


def _log_survival(dist, load):
    """log sf evaluated so deep loads do not underflow to -inf prematurely."""
    if hasattr(dist, "logsf"):
        return np.asarray(dist.logsf(load), dtype=float)
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(dist.sf(load), dtype=float))


def _odds_from_logsf(logsf: np.ndarray) -> np.ndarray:
    # sigma = log sf - log(1 - sf); exact at both ends of the support
    return logsf - np.log(-np.expm1(logsf))


def log_odds(a: Configuration, i: int, s: float, rule: Rule, dist) -> float:
    """log of survival odds of component i at its shared load lambda_i(A) * s."""
    if i not in a.working:
        raise ValueError(f"component {i} is not in the working set")
    lam = rule(a)
    load = lam[i] * s
    ls = float(_log_survival(dist, load))
    if not (np.isfinite(ls) and ls < 0.0):
        raise PositivityError(
            f"positivity condition fails at component {i}, load {load}: "
            f"survival probability is {np.exp(ls)}"
        )
    return float(_odds_from_logsf(np.asarray(ls)))


@dataclass(frozen=True)
class GibbsModel:
    """Exact configuration measure at load s: P(A) = exp(-U(A)) / Z."""

    n: int
    s: float
    sigma: SubsetTable
    potentials: SubsetTable
    energy: SubsetTable
    logz: float

    @cached_property
    def log_probs(self) -> np.ndarray:
        return -self.energy.values - self.logz

    def probabilities(self) -> np.ndarray:
        return np.exp(self.log_probs)

    def prob(self, working: frozenset[int]) -> float:
        mask = 0
        for i in working:
            mask |= 1 << i
        return float(np.exp(self.log_probs[mask]))


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(p - q).sum())


def _rule_table_nan(rule: Rule, n: int) -> np.ndarray:
    """(2^n, n) share table with NaN outside the working set."""
    table = np.full((1 << n, n), np.nan)
    if hasattr(rule, "_vector"):
        for mask in range(1, 1 << n):
            table[mask] = rule._vector(mask)
    else:
        for mask in range(1, 1 << n):
            lam = rule(Configuration.from_mask(n, mask))
            for i, v in lam.values.items():
                table[mask, i] = v
    return table


def build_gibbs(n: int, s: float, rule: Rule, dist) -> GibbsModel:
    """Enumerate the exact measure of working sets at load per component s.

    Computes the per-component log odds at every configuration (memoizing the
    load-share solves), aggregates them, converts to potentials and energy by
    the subset-lattice transforms, and normalizes in log space.
    """
    if n > MAX_ENUM_N:
        raise ValueError(
            f"n = {n} exceeds the exact-enumeration bound {MAX_ENUM_N}; "
            "use sampling for larger bundles"
        )
    if s <= 0:
        raise ValueError("load must be positive")
    dists = dist if isinstance(dist, (list, tuple)) else [dist] * n
    if len(dists) != n:
        raise ValueError(f"need {n} component distributions, got {len(dists)}")

    table = _rule_table_nan(rule, n)
    size = 1 << n
    member = ~np.isnan(table)
    sigma_sum = np.zeros(size)
    for i in range(n):
        col = table[:, i]
        sel = member[:, i]
        load = col[sel] * s
        ls = _log_survival(dists[i], load)
        bad = ~(np.isfinite(ls) & (ls < 0.0))
        if np.any(bad):
            mask = int(np.flatnonzero(sel)[np.argmax(bad)])
            raise PositivityError(
                f"positivity condition fails at component {i}, configuration mask "
                f"{mask}, load {float(load[np.argmax(bad)])}"
            )
        contrib = np.zeros(size)
        contrib[sel] = _odds_from_logsf(ls)
        sigma_sum += contrib
    sigma = SubsetTable(n, sigma_sum)
    potentials = mobius_potentials(sigma)
    energy = mobius_energy(potentials)
    logz = float(logsumexp(-energy.values))
    return GibbsModel(n=n, s=s, sigma=sigma, potentials=potentials, energy=energy, logz=logz)


@dataclass(frozen=True)
class LMFFit:
    """Linear reduction of the potentials at one load onto another load's.

    ``median_potentials[k-1]`` is the median potential over subsets of size k
    at the reference load; ``tv_error`` is the total-variation distance between
    the reduced measure and the exact one at the target load.
    """

    slope: float
    intercept: float
    r2: float
    median_potentials: tuple[float, ...]
    tv_error: float
    s_ref: float
    s_target: float
    p_ref: float | None = None
    p_target: float | None = None


def lmf_fit(model_ref: GibbsModel, model_target: GibbsModel,
            p_ref: float | None = None, p_target: float | None = None) -> LMFFit:
    """Least-squares fit of target potentials against reference potentials.

    The reduced energy takes -U(A) ~= slope * sum_{K in A} V_ref(K) +
    intercept * 2^(|A|-1); its measure is compared to the exact target model.
    """
    if model_ref.n != model_target.n:
        raise ValueError("models must share the component count")
    n = model_ref.n
    v_ref = model_ref.potentials.values[1:]
    v_tgt = model_target.potentials.values[1:]
    if np.ptp(v_ref) == 0.0:
        raise ValueError("reference potentials are degenerate (zero variance); fit rejected")
    design = np.column_stack([v_ref, np.ones_like(v_ref)])
    (slope, intercept), *_ = np.linalg.lstsq(design, v_tgt, rcond=None)
    resid = v_tgt - (slope * v_ref + intercept)
    ss_tot = float(np.sum((v_tgt - v_tgt.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0

    sizes = model_ref.potentials.sizes
    medians = tuple(
        float(np.median(model_ref.potentials.values[sizes == k])) for k in range(1, n + 1)
    )

    # reduced energy: zeta of the reference potentials is -U_ref
    u_lmf = slope * model_ref.energy.values - intercept * np.exp2(sizes - 1.0)
    u_lmf[0] = 0.0
    log_probs = -u_lmf - logsumexp(-u_lmf)
    tv = total_variation(np.exp(log_probs), model_target.probabilities())
    return LMFFit(
        slope=float(slope),
        intercept=float(intercept),
        r2=r2,
        median_potentials=medians,
        tv_error=tv,
        s_ref=model_ref.s,
        s_target=model_target.s,
        p_ref=p_ref,
        p_target=p_target,
    )


def strength_percentile(samples, p: float) -> float:
    """p-th percentile (0 < p < 100) with linear order-statistic interpolation."""
    arr = np.asarray(samples, dtype=float)
    if arr.size == 0:
        raise ValueError("sample vector is empty")
    if not 0.0 < p < 100.0:
        raise ValueError("percentile must lie in (0, 100)")
    return float(np.quantile(arr, p / 100.0, method="linear"))
