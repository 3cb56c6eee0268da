"""Load-sharing rules built from absorbing Markov chains on component graphs.

A grid of fiber-segment components defines a one-step transition matrix
(equal probability to each horizontal/diagonal neighbor).  For a working set
A, freezing the chain on A and solving the absorption-probability system
gives the share of load each failed component sheds onto each survivor; the
resulting multipliers form a monotone load-sharing rule.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Callable, Iterable, NamedTuple

import numpy as np

__all__ = [
    "ComponentGraph",
    "TransitionMatrix",
    "Configuration",
    "LoadShareVector",
    "AbsorptionResult",
    "MonotoneCheck",
    "build_grid_graph",
    "transition_matrix",
    "complete_graph_transition",
    "absorption_probabilities",
    "absorbing_load_share",
    "equal_load_share",
    "verify_monotone",
    "AbsorbingRule",
    "EqualRule",
    "UnitRule",
]

_CONDITION_LIMIT = 1e12
_ROW_SUM_TOL = 1e-9


class SingularAbsorptionError(RuntimeError):
    """The absorption system is (near-)singular: some failed component has no
    route to the working set.  Cannot happen on a connected graph; raised as an
    internal-consistency failure rather than returning garbage."""


@dataclass(frozen=True)
class ComponentGraph:
    """Grid of fiber-segment nodes with horizontal and diagonal adjacency.

    Node (r, c) has index r*cols + c.  Neighbors are (r, c±1) and (r±1, c±1)
    when they exist; never (r±1, c).
    """

    rows: int
    cols: int
    adjacency: tuple[tuple[int, ...], ...]

    @property
    def n(self) -> int:
        return self.rows * self.cols

    def node_index(self, r: int, c: int) -> int:
        if not (0 <= r < self.rows and 0 <= c < self.cols):
            raise IndexError(f"node ({r},{c}) outside {self.rows}x{self.cols} grid")
        return r * self.cols + c

    def neighbors(self, i: int) -> tuple[int, ...]:
        return self.adjacency[i]


@dataclass(frozen=True)
class TransitionMatrix:
    """Row-stochastic one-step matrix; p[i, j] > 0 exactly on graph edges."""

    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        object.__setattr__(self, "p", p)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise ValueError("transition matrix must be square")
        if np.any(p < 0):
            raise ValueError("transition probabilities must be non-negative")
        if np.any(np.abs(p.sum(axis=1) - 1.0) > 1e-12):
            raise ValueError("each row must sum to 1 within 1e-12")
        if np.any(np.diag(p) != 0):
            raise ValueError("self-transitions are not allowed")
        if np.any((p > 0) != (p.T > 0)):
            raise ValueError("edge support must be symmetric")

    @property
    def n(self) -> int:
        return self.p.shape[0]


@dataclass(frozen=True)
class Configuration:
    """The set of working components A within {0..n-1}."""

    n: int
    working: frozenset[int]

    def __post_init__(self):
        object.__setattr__(self, "working", frozenset(self.working))
        if self.n < 1:
            raise ValueError("component count must be positive")
        if any(not (0 <= i < self.n) for i in self.working):
            raise ValueError("working set contains out-of-range components")

    @classmethod
    def full(cls, n: int) -> "Configuration":
        return cls(n, frozenset(range(n)))

    @classmethod
    def from_mask(cls, n: int, mask: int) -> "Configuration":
        return cls(n, frozenset(i for i in range(n) if mask >> i & 1))

    @property
    def mask(self) -> int:
        m = 0
        for i in self.working:
            m |= 1 << i
        return m

    def __len__(self) -> int:
        return len(self.working)


@dataclass(frozen=True)
class LoadShareVector:
    """Load multipliers for the surviving components only.

    Indexing a failed component raises: the rule is defined on survivors, and
    callers must not read a silent 0 for a node that carries no load.
    """

    values: dict[int, float]

    def __getitem__(self, i: int) -> float:
        try:
            return self.values[i]
        except KeyError:
            raise KeyError(
                f"component {i} is not in the working set; "
                "load shares are defined for survivors only"
            ) from None

    def __iter__(self):
        return iter(self.values)

    def __len__(self) -> int:
        return len(self.values)

    def total(self) -> float:
        return sum(self.values.values())


class AbsorptionResult(NamedTuple):
    """Absorption probabilities u[i, j] from failed node i into working node j."""

    failed: tuple[int, ...]
    working: tuple[int, ...]
    u: np.ndarray

    def prob(self, i: int, j: int) -> float:
        return float(self.u[self.failed.index(i), self.working.index(j)])


class MonotoneCheck(NamedTuple):
    ok: bool
    counterexample: tuple[frozenset[int], frozenset[int], int] | None


def build_grid_graph(rows: int, cols: int) -> ComponentGraph:
    """Grid graph with horizontal and diagonal (never vertical) adjacency.

    Interior nodes have exactly six neighbors.  A single-column grid is
    rejected: with no horizontal or diagonal neighbor there is nowhere to
    shed load.
    """
    if rows < 1:
        raise ValueError("rows must be >= 1")
    if cols < 2:
        raise ValueError("cols must be >= 2 (a single-fiber grid has no neighbors)")
    adjacency = []
    for r in range(rows):
        for c in range(cols):
            nbrs = []
            for dr, dc in ((0, -1), (0, 1), (-1, -1), (-1, 1), (1, -1), (1, 1)):
                rr, cc = r + dr, c + dc
                if 0 <= rr < rows and 0 <= cc < cols:
                    nbrs.append(rr * cols + cc)
            nbrs.sort()
            adjacency.append(tuple(nbrs))
    return ComponentGraph(rows=rows, cols=cols, adjacency=tuple(adjacency))


def transition_matrix(g: ComponentGraph) -> TransitionMatrix:
    """Equal one-step probability to each neighbor: p[i, j] = 1/degree(i)."""
    n = g.n
    p = np.zeros((n, n))
    for i, nbrs in enumerate(g.adjacency):
        for j in nbrs:
            p[i, j] = 1.0 / len(nbrs)
    return TransitionMatrix(p)


def complete_graph_transition(n: int) -> TransitionMatrix:
    """Complete-graph chain: p[i, j] = 1/(n-1) for j != i.

    Test oracle: the absorbing rule on this chain reduces to the equal rule.
    """
    if n < 2:
        raise ValueError("complete graph needs at least 2 nodes")
    p = np.full((n, n), 1.0 / (n - 1))
    np.fill_diagonal(p, 0.0)
    return TransitionMatrix(p)


def absorption_probabilities(p: TransitionMatrix, a: Configuration) -> AbsorptionResult:
    """Solve U = QU + R for the chain frozen on the working set A.

    Q holds failed-to-failed transitions, R failed-to-working; the solution
    (I - Q)^{-1} R gives, row by row, how a failed component's load splits
    over the survivors.  Rows sum to 1 on a connected graph.
    """
    if p.n != a.n:
        raise ValueError("configuration size does not match transition matrix")
    if not a.working:
        raise ValueError("working set must be nonempty")
    working = tuple(sorted(a.working))
    failed = tuple(i for i in range(a.n) if i not in a.working)
    if not failed:
        return AbsorptionResult(failed, working, np.zeros((0, len(working))))
    q = p.p[np.ix_(failed, failed)]
    r = p.p[np.ix_(failed, working)]
    m = np.eye(len(failed)) - q
    try:
        u = np.linalg.solve(m, r)
    except np.linalg.LinAlgError as exc:
        raise SingularAbsorptionError(
            f"absorption system singular for working set {working}: "
            "some failed component cannot reach the working set"
        ) from exc
    row_sums = u.sum(axis=1)
    if np.any(np.abs(row_sums - 1.0) > _ROW_SUM_TOL):
        cond = np.linalg.cond(m)
        raise SingularAbsorptionError(
            f"absorption rows do not sum to 1 (max dev {np.max(np.abs(row_sums - 1.0)):.3e}, "
            f"cond {cond:.3e} vs limit {_CONDITION_LIMIT:.0e})"
        )
    return AbsorptionResult(failed, working, u)


def absorbing_load_share(p: TransitionMatrix, a: Configuration) -> LoadShareVector:
    """Absorbing-state rule: each survivor carries 1 plus the load absorbed
    from every failed component."""
    res = absorption_probabilities(p, a)
    extra = res.u.sum(axis=0) if res.u.size else np.zeros(len(res.working))
    return LoadShareVector({j: 1.0 + float(e) for j, e in zip(res.working, extra)})


def equal_load_share(n: int, a: Configuration) -> LoadShareVector:
    """Equal rule: the total load n is split evenly over the survivors."""
    if a.n != n:
        raise ValueError("configuration size does not match n")
    if not a.working:
        raise ValueError("working set must be nonempty")
    lam = n / len(a.working)
    return LoadShareVector({i: lam for i in a.working})


class AbsorbingRule:
    """Callable load-sharing rule backed by absorption solves, memoized per
    working-set mask.

    The cache is a plain dict: writes are atomic under the GIL, so concurrent
    evaluators at worst recompute a value (single-writer-wins, no torn reads).
    """

    def __init__(self, transition: TransitionMatrix):
        self.transition = transition
        self._cache: dict[int, np.ndarray] = {}

    @property
    def n(self) -> int:
        return self.transition.n

    def __call__(self, config: Configuration) -> LoadShareVector:
        vec = self._vector(config.mask)
        return LoadShareVector({i: float(vec[i]) for i in config.working})

    def _vector(self, mask: int) -> np.ndarray:
        """Length-n vector with lambda at working positions, NaN elsewhere."""
        cached = self._cache.get(mask)
        if cached is not None:
            return cached
        n = self.n
        working = [i for i in range(n) if mask >> i & 1]
        res = absorption_probabilities(self.transition, Configuration(n, frozenset(working)))
        vec = np.full(n, np.nan)
        extra = res.u.sum(axis=0) if res.u.size else np.zeros(len(working))
        vec[list(res.working)] = 1.0 + extra
        self._cache[mask] = vec
        return vec


class EqualRule:
    """Callable equal rule on n components."""

    def __init__(self, n: int):
        if n < 1:
            raise ValueError("n must be positive")
        self.n = n

    def __call__(self, config: Configuration) -> LoadShareVector:
        return equal_load_share(self.n, config)

    def _vector(self, mask: int) -> np.ndarray:
        vec = np.full(self.n, np.nan)
        members = [i for i in range(self.n) if mask >> i & 1]
        if not members:
            raise ValueError("working set must be nonempty")
        vec[members] = self.n / len(members)
        return vec


class UnitRule:
    """No-sharing reference rule, lambda == 1 everywhere.

    Deliberately violates load conservation; it is the independence oracle
    for the Gibbs construction, not a physical rule.
    """

    def __init__(self, n: int):
        self.n = n

    def __call__(self, config: Configuration) -> LoadShareVector:
        if not config.working:
            raise ValueError("working set must be nonempty")
        return LoadShareVector({i: 1.0 for i in config.working})

    def _vector(self, mask: int) -> np.ndarray:
        vec = np.full(self.n, np.nan)
        members = [i for i in range(self.n) if mask >> i & 1]
        vec[members] = 1.0
        return vec


Rule = Callable[[Configuration], LoadShareVector]


def _submasks(mask: int) -> Iterable[int]:
    """Proper nonempty submasks of mask, standard descending enumeration."""
    sub = (mask - 1) & mask
    while sub:
        yield sub
        sub = (sub - 1) & mask


def verify_monotone(rule: Rule, n: int, budget: int = 200_000, seed: int = 0) -> MonotoneCheck:
    """Check that failures never relieve a survivor: lambda_j(B) <= lambda_j(A)
    for every A subset of B containing j, plus positive total load.

    Exhaustive over the subset lattice for n <= 12 (3^n ordered pairs),
    randomized pairs up to ``budget`` beyond that.  Returns the first
    violating (A, B, j) triple if any.
    """
    cache: dict[int, dict[int, float]] = {}

    def shares(mask: int) -> dict[int, float]:
        got = cache.get(mask)
        if got is None:
            got = dict(rule(Configuration.from_mask(n, mask)).values)
            cache[mask] = got
        return got

    def check_pair(amask: int, bmask: int) -> MonotoneCheck | None:
        la, lb = shares(amask), shares(bmask)
        for j, val in la.items():
            if lb[j] > val + 1e-12:
                a = frozenset(i for i in range(n) if amask >> i & 1)
                b = frozenset(i for i in range(n) if bmask >> i & 1)
                return MonotoneCheck(False, (a, b, j))
        return None

    if n <= 12:
        for bmask in range(1, 1 << n):
            if sum(shares(bmask).values()) <= 0:
                b = frozenset(i for i in range(n) if bmask >> i & 1)
                return MonotoneCheck(False, (b, b, -1))
            for amask in _submasks(bmask):
                bad = check_pair(amask, bmask)
                if bad is not None:
                    return bad
        return MonotoneCheck(True, None)

    rng = random.Random(seed)
    full = (1 << n) - 1
    for _ in range(budget):
        bmask = rng.randrange(1, full + 1)
        if bin(bmask).count("1") < 2:
            continue
        amask = 0
        while not (0 < amask < bmask):
            amask = bmask & rng.randrange(1, full + 1)
            if amask == bmask:
                amask = 0
        if sum(shares(bmask).values()) <= 0:
            b = frozenset(i for i in range(n) if bmask >> i & 1)
            return MonotoneCheck(False, (b, b, -1))
        bad = check_pair(amask, bmask)
        if bad is not None:
            return bad
    return MonotoneCheck(True, None)
