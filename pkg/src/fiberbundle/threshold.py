"""Gamma-mixture threshold densities for order statistics and bundle stresses.

The k-th order statistic of n unit exponentials is a scale mixture of
gamma(k) laws whose mixing density is a size-biased, shifted convolution of
uniforms (an Irwin-Hall density).  The same machinery yields the joint
density of the Phase-I breaking stresses and the breaking pattern of a
monotone load-sharing bundle, and the constant of its power-law lower tail.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .cascade import BreakingPattern, enumerate_patterns
from .loadshare import Configuration, Rule

__all__ = [
    "irwin_hall_pdf",
    "MixingDensity",
    "order_stat_mixing",
    "order_stat_mixing_density",
    "OrderStatJointDensity",
    "order_stat_joint_density",
    "TiltedConditional",
    "tilted_conditional_density",
    "PatternDensityInput",
    "pattern_density_input",
    "phase1_pattern_density",
    "pattern_probability",
    "lower_tail_constant",
    "parallel_exponential_tail_constant",
]

_PANEL_TOL = 1e-10
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


def irwin_hall_pdf(m: int, t) -> float | np.ndarray:
    """Density b_m of the sum of m independent U[0,1] variables.

    Exact piecewise polynomial via the alternating binomial series, evaluated
    in rational arithmetic so cancellation cannot bite even near m = 30.
    m = 0 is a point mass at 0 and has no density; it is handled symbolically
    by :class:`MixingDensity`.
    """
    if m < 1:
        raise ValueError("m must be >= 1; b_0 is a point mass handled symbolically")
    t_arr = np.asarray(t, dtype=float)
    out = np.zeros_like(t_arr, dtype=float)
    flat = t_arr.ravel()
    res = out.ravel()
    fact = math.factorial(m - 1)
    for idx, tv in enumerate(flat):
        if not (0.0 <= tv <= m):
            continue
        acc = Fraction(0)
        ft = Fraction(tv)
        for j in range(int(tv) + 1):
            term = Fraction(math.comb(m, j)) * (ft - j) ** (m - 1)
            acc += -term if j % 2 else term
        res[idx] = float(acc / fact)
    return out if t_arr.ndim else float(res[0])


def _integrate_panels(f: Callable[[np.ndarray], np.ndarray], lo: float, hi: float,
                      knots: Sequence[float] = (), tol: float = _PANEL_TOL) -> float:
    """Adaptive Gauss-Legendre integration, pre-split at known kinks."""
    points = sorted({lo, hi, *(k for k in knots if lo < k < hi)})

    def gl(a: float, b: float) -> float:
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        return half * float(np.sum(_GL_WEIGHTS * f(mid + half * _GL_NODES)))

    def adapt(a: float, b: float, whole: float, budget: float, depth: int) -> float:
        mid = 0.5 * (a + b)
        left, right = gl(a, mid), gl(mid, b)
        if depth > 40 or abs(left + right - whole) < budget:
            return left + right
        return adapt(a, mid, left, budget / 2, depth + 1) + adapt(mid, b, right, budget / 2, depth + 1)

    total = 0.0
    for a, b in zip(points[:-1], points[1:]):
        total += adapt(a, b, gl(a, b), tol, 0)
    return total


@dataclass(frozen=True)
class MixingDensity:
    """Size-biased shifted Irwin-Hall density b_m(theta - shift) / theta**power.

    Supported on [shift, shift + m]; m = 0 degenerates to an atom at ``shift``
    (kept symbolic: ``is_atom`` with unnormalized weight shift**-power).
    """

    m: int
    shift: float
    power: int

    @property
    def is_atom(self) -> bool:
        return self.m == 0

    @property
    def support(self) -> tuple[float, float]:
        return (self.shift, self.shift + self.m)

    @cached_property
    def normalizer(self) -> float:
        """Integral of the unnormalized density (atom: its raw weight)."""
        if self.is_atom:
            return self.shift ** (-self.power)
        lo, hi = self.support
        knots = [self.shift + j for j in range(1, self.m)]
        return _integrate_panels(self._raw, lo, hi, knots)

    def _raw(self, theta):
        theta = np.asarray(theta, dtype=float)
        return irwin_hall_pdf(self.m, theta - self.shift) / theta**self.power

    def pdf(self, theta) -> float | np.ndarray:
        if self.is_atom:
            raise ValueError("point-mass mixing density has no pdf; use the atom directly")
        theta_arr = np.asarray(theta, dtype=float)
        lo, hi = self.support
        inside = (theta_arr >= lo) & (theta_arr <= hi)
        vals = np.where(inside, self._raw(np.clip(theta_arr, lo, hi)) / self.normalizer, 0.0)
        return vals if theta_arr.ndim else float(vals)

    def moment(self, r: int) -> float:
        """E[Theta**r] under the normalized density."""
        if self.is_atom:
            return self.shift**r
        lo, hi = self.support
        knots = [self.shift + j for j in range(1, self.m)]
        raw = _integrate_panels(lambda t: self._raw(t) * t**r, lo, hi, knots)
        return raw / self.normalizer

    def gamma_mixture_pdf(self, shape: int, z: float) -> float:
        """Integral of gamma(shape, rate=theta) density at z over this mixing law."""
        if z <= 0:
            return 0.0
        if self.is_atom:
            return _gamma_pdf(z, shape, self.shift)
        lo, hi = self.support
        knots = [self.shift + j for j in range(1, self.m)]
        raw = _integrate_panels(lambda t: _gamma_pdf(z, shape, t) * self._raw(t), lo, hi, knots)
        return raw / self.normalizer


def _gamma_pdf(z, shape: int, rate):
    z = np.asarray(z, dtype=float)
    rate = np.asarray(rate, dtype=float)
    return np.exp(shape * np.log(rate) + (shape - 1) * np.log(z) - rate * z - math.lgamma(shape))


def order_stat_mixing(k: int, n: int) -> MixingDensity:
    """Mixing density of the k-th order statistic of n unit exponentials.

    b_{k-1}(theta - (n-k+1)) / theta**k on [n-k+1, n]; k = 1 is the point
    mass at n (minimum case).
    """
    if not 1 <= k <= n:
        raise ValueError("need 1 <= k <= n")
    return MixingDensity(m=k - 1, shift=float(n - k + 1), power=k)


def _spacing_mixing(k: int, l: int, n: int) -> MixingDensity:
    # mixing law of the (l-k)-spacing factor; the convolution order is l-k-1,
    # matching the uniform-integral identity for (1-e^{-u})^{l-k-1}
    return MixingDensity(m=l - k - 1, shift=float(n - l + 1), power=l - k)


def order_stat_mixing_density(k: int, n: int, theta) -> float | np.ndarray:
    """Evaluate the order-statistic mixing density a_{k;n} at theta."""
    mix = order_stat_mixing(k, n)
    if mix.is_atom:
        raise ValueError(f"a_({k};{n}) is a point mass at theta={n}; no density to evaluate")
    return mix.pdf(theta)


@dataclass(frozen=True)
class OrderStatJointDensity:
    """Joint density of the (k, l) order statistics of n unit exponentials.

    Two independent evaluation paths: ``direct`` is the normalized closed
    form; ``mixture`` re-assembles the density from gamma kernels against the
    two uniform-convolution mixing laws.  They must agree, which is the main
    numerical check on the whole construction.
    """

    k: int
    l: int
    n: int

    def __post_init__(self):
        if not 1 <= self.k < self.l <= self.n:
            raise ValueError("need 1 <= k < l <= n")

    @cached_property
    def _const(self) -> float:
        k, l, n = self.k, self.l, self.n
        return math.factorial(n) / (
            math.factorial(k - 1) * math.factorial(l - k - 1) * math.factorial(n - l)
        )

    @cached_property
    def _mix1(self) -> MixingDensity:
        return order_stat_mixing(self.k, self.n)

    @cached_property
    def _mix2(self) -> MixingDensity:
        return _spacing_mixing(self.k, self.l, self.n)

    def direct(self, x: float, y: float) -> float:
        if not 0 < x < y:
            return 0.0
        k, l, n = self.k, self.l, self.n
        return float(
            self._const
            * (-np.expm1(-x)) ** (k - 1)
            * np.exp(-(l - k) * x)
            * (-np.expm1(-(y - x))) ** (l - k - 1)
            * np.exp(-(n - l + 1) * y)
        )

    def mixture(self, x: float, y: float) -> float:
        if not 0 < x < y:
            return 0.0
        f1 = self._mix1.gamma_mixture_pdf(self.k, x)
        f2 = self._mix2.gamma_mixture_pdf(self.l - self.k, y - x)
        return f1 * f2

    def marginal_k(self, x: float) -> float:
        """Closed-form marginal of the k-th order statistic (for checks)."""
        if x <= 0:
            return 0.0
        k, n = self.k, self.n
        c = math.factorial(n) / (math.factorial(k - 1) * math.factorial(n - k))
        return float(c * (-np.expm1(-x)) ** (k - 1) * np.exp(-(n - k + 1) * x))


def order_stat_joint_density(k: int, l: int, n: int, x: float, y: float,
                             path: str = "direct") -> float:
    joint = OrderStatJointDensity(k, l, n)
    if path == "direct":
        return joint.direct(x, y)
    if path == "mixture":
        return joint.mixture(x, y)
    raise ValueError(f"unknown path {path!r}; expected 'direct' or 'mixture'")


@dataclass(frozen=True)
class TiltedConditional:
    """Conditional law of the mixing thresholds given (X, Y) = (x, y).

    Each factor is an exponentially tilted shifted convolution of uniforms,
    e^{-x theta} b_m(theta - shift), normalized by quadrature; the joint is
    the product of the two factors (conditional independence is structural).
    """

    k: int
    l: int
    n: int
    x: float
    y: float

    def __post_init__(self):
        if not 1 <= self.k < self.l <= self.n:
            raise ValueError("need 1 <= k < l <= n")
        if not 0 < self.x < self.y:
            raise ValueError("need 0 < x < y")
        if self.k == 1 or self.l == self.k + 1:
            raise ValueError(
                "degenerate tilt: the corresponding mixing law is a point mass "
                "(k = 1 or l = k + 1); handle symbolically"
            )

    def _factor(self, m: int, shift: float, tilt: float):
        lo, hi = shift, shift + m
        knots = [shift + j for j in range(1, m)]

        def raw(theta):
            theta = np.asarray(theta, dtype=float)
            return np.exp(-tilt * theta) * irwin_hall_pdf(m, theta - shift)

        norm = _integrate_panels(raw, lo, hi, knots)

        def pdf(theta):
            theta_arr = np.asarray(theta, dtype=float)
            inside = (theta_arr >= lo) & (theta_arr <= hi)
            vals = np.where(inside, raw(np.clip(theta_arr, lo, hi)) / norm, 0.0)
            return vals if theta_arr.ndim else float(vals)

        return pdf

    @cached_property
    def factor1(self):
        """Density of Theta_1 given X = x."""
        return self._factor(self.k - 1, float(self.n - self.k + 1), self.x)

    @cached_property
    def factor2(self):
        """Density of Theta_2 given (X, Y) = (x, y)."""
        return self._factor(self.l - self.k - 1, float(self.n - self.l + 1), self.y - self.x)

    def pdf(self, theta1: float, theta2: float) -> float:
        return float(self.factor1(theta1)) * float(self.factor2(theta2))


def tilted_conditional_density(k: int, l: int, n: int, x: float, y: float,
                               theta1: float, theta2: float) -> float:
    return TiltedConditional(k, l, n, x, y).pdf(theta1, theta2)


# ---------------------------------------------------------------------------
# Phase-I pattern density


@dataclass(frozen=True)
class PatternDensityInput:
    """Everything needed to evaluate the joint stress/pattern density.

    ``phase1_shares`` holds the share a_u of each cycle's Phase-I component at
    its working set; ``bounds`` holds, per cycle, the (component, L, U) share
    bounds bracketing every Phase-II failure in that cycle.
    """

    pattern: BreakingPattern
    cdfs: tuple[Callable[[float], float], ...]
    pdfs: tuple[Callable[[float], float], ...]
    phase1_shares: tuple[float, ...]
    bounds: tuple[tuple[tuple[int, float, float], ...], ...]
    s: tuple[float, ...]


def _per_component(dist, n: int) -> list:
    if hasattr(dist, "cdf"):
        return [dist] * n
    dists = list(dist)
    if len(dists) != n:
        raise ValueError(f"need {n} component distributions, got {len(dists)}")
    return dists


def pattern_density_input(pattern: BreakingPattern, rule: Rule, n: int, dist,
                          s: Sequence[float]) -> PatternDensityInput:
    """Compute the share bounds of a pattern from the rule and package them."""
    dists = _per_component(dist, n)
    working = frozenset(range(n))
    shares = []
    bounds = []
    for cyc in pattern.cycles:
        if cyc.phase1 not in working:
            raise ValueError(f"cycle component {cyc.phase1} already failed")
        lam = rule(Configuration(n, working))
        shares.append(lam[cyc.phase1])
        lower = working
        cur = working - {cyc.phase1}
        rows = []
        for grp in cyc.groups:
            if not grp <= cur:
                raise ValueError("burst group contains failed components")
            lam_lo = rule(Configuration(n, lower))
            lam_hi = rule(Configuration(n, cur))
            for i2 in sorted(grp):
                lo, hi = lam_lo[i2], lam_hi[i2]
                if hi < lo:
                    raise ValueError(
                        f"bounds inverted for component {i2}: rule is not monotone"
                    )
                rows.append((i2, lo, hi))
            lower = cur
            cur = cur - grp
        bounds.append(tuple(rows))
        working = cur
    return PatternDensityInput(
        pattern=pattern,
        cdfs=tuple(d.cdf for d in dists),
        pdfs=tuple(d.pdf for d in dists),
        phase1_shares=tuple(shares),
        bounds=tuple(bounds),
        s=tuple(float(v) for v in s),
    )


def phase1_pattern_density(inp: PatternDensityInput) -> float:
    """Joint density of the Phase-I stresses and the breaking pattern.

    Product over cycles of the Phase-I factor a_u f(a_u s_u) and, for each
    Phase-II component, the probability F(U s_u) - F(L s_u) of its strength
    landing in the bracketed band.  Empty-burst cycles contribute only their
    Phase-I factor.
    """
    s = inp.s
    if len(s) != len(inp.pattern.cycles):
        raise ValueError("stress vector length must match the number of cycles")
    if any(b <= a for a, b in zip(s[:-1], s[1:])):
        raise ValueError("phase-I stresses must be strictly increasing")
    if any(v <= 0 for v in s):
        return 0.0
    out = 1.0
    for u, cyc in enumerate(inp.pattern.cycles):
        a_u = inp.phase1_shares[u]
        out *= a_u * float(inp.pdfs[cyc.phase1](a_u * s[u]))
        for (i2, lo, hi) in inp.bounds[u]:
            out *= float(inp.cdfs[i2](hi * s[u])) - float(inp.cdfs[i2](lo * s[u]))
    return max(out, 0.0)


def pattern_probability(pattern: BreakingPattern, rule: Rule, n: int, dist,
                        upper: float = np.inf, epsabs: float = 1e-10,
                        epsrel: float = 1e-9) -> float:
    """Probability of a breaking pattern by integrating its stress density.

    The density factorizes across cycles, so the ordered-simplex integral runs
    as nested 1-d quadratures.
    """
    f = len(pattern.cycles)
    inp = pattern_density_input(pattern, rule, n, dist, [float(u + 1) for u in range(f)])

    def cycle_factor(u: int, s_u: float) -> float:
        cyc = inp.pattern.cycles[u]
        a_u = inp.phase1_shares[u]
        val = a_u * float(inp.pdfs[cyc.phase1](a_u * s_u))
        for (i2, lo, hi) in inp.bounds[u]:
            val *= float(inp.cdfs[i2](hi * s_u)) - float(inp.cdfs[i2](lo * s_u))
        return val

    def nested(u: int, lower: float) -> float:
        if u == f:
            return 1.0
        val, _ = integrate.quad(
            lambda t: cycle_factor(u, t) * nested(u + 1, t),
            lower, upper, epsabs=epsabs, epsrel=epsrel, limit=200,
        )
        return val

    return nested(0, 0.0)


# ---------------------------------------------------------------------------
# lower-tail constant


def lower_tail_constant(m: int, samples=None, mixing: MixingDensity | None = None,
                        window: tuple[float, float] = (1e-5, 1e-3)) -> float:
    """Constant K of the power-law lower tail F(x) ~ K x**m.

    From ``samples``: intercept of log(ECDF) - m log(x) over the empirical
    quantile window (the slope m is known from the structure).  From a
    ``mixing`` density: K = E[Theta**m] / m!.
    """
    if (samples is None) == (mixing is None):
        raise ValueError("provide exactly one of samples or mixing")
    if mixing is not None:
        return mixing.moment(m) / math.factorial(m)
    xs = np.sort(np.asarray(samples, dtype=float))
    nobs = xs.size
    ranks = np.arange(1, nobs + 1) / nobs
    lo, hi = window
    sel = (ranks >= lo) & (ranks <= hi)
    if sel.sum() < 100:
        raise ValueError(
            f"only {int(sel.sum())} tail points in quantile window {window}; "
            "increase the replica count"
        )
    logk = np.log(ranks[sel]) - m * np.log(xs[sel])
    return float(np.exp(logk.mean()))


def parallel_exponential_tail_constant(rule: Rule, n: int) -> float:
    """Exact K for a parallel bundle of unit exponentials under ``rule``.

    Sums, over every breaking pattern, the leading term of its integrated
    stress density: the Phase-I share product times the Phase-II band widths,
    divided by the ordered-simplex moment of the per-cycle stress powers.
    """
    if n > 5:
        raise ValueError("pattern enumeration is exponential; n <= 5 only")
    total = 0.0
    for pattern in enumerate_patterns(n):
        f = len(pattern.cycles)
        inp = pattern_density_input(pattern, rule, n, _UnitExponentialStub(),
                                    [float(u + 1) for u in range(f)])
        coeff = 1.0
        denom = 1.0
        cum = 0
        for u in range(len(pattern.cycles)):
            coeff *= inp.phase1_shares[u]
            for (_, lo, hi) in inp.bounds[u]:
                coeff *= hi - lo
            cum += len(inp.bounds[u])
            denom *= (u + 1) + cum
        total += coeff / denom
    return total


class _UnitExponentialStub:
    """Unit exponential with the only methods the pattern machinery needs."""

    @staticmethod
    def cdf(x):
        return -np.expm1(-x)

    @staticmethod
    def pdf(x):
        return np.exp(-x)
