"""Failure-cascade simulation for loaded bundles.

A bundle under increasing load fails in Phase I/II cycles: the external load
grows until one component breaks (Phase I), the shed load may knock out
groups of further components instantaneously (Phase II bursts), and the
process repeats until the survivor set no longer contains a path set of the
structure.  The bundle strength is the Phase-I stress of the terminal cycle.

Two execution paths are provided: a scalar :func:`simulate_cascade` that
records the full breaking pattern, and a vectorized sampler that evaluates
many replicas at once against a precomputed load-share table.
"""

from __future__ import annotations

import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .distributions import StrengthModel
from .loadshare import Configuration, LoadShareVector, Rule

__all__ = [
    "ComponentStrengths",
    "StructureFunction",
    "PatternCycle",
    "BreakingPattern",
    "CascadeResult",
    "ChainSpec",
    "NonMonotoneRuleError",
    "simulate_cascade",
    "sample_bundle_strengths",
    "chain_strength",
    "cycles_to_failure",
    "cycles_to_failure_samples",
    "replay_pattern",
    "enumerate_patterns",
    "format_pattern",
    "parse_pattern",
    "PowerScaledRule",
]

_TABLE_MAX_N = 24
_CHUNK = 1 << 16
_REL_TOL = 1e-9


class NonMonotoneRuleError(RuntimeError):
    """A load share decreased after a removal; the rule is not monotone."""


@dataclass(frozen=True)
class ComponentStrengths:
    """Realized strengths of the n components, optionally with their law."""

    x: tuple[float, ...]
    model: StrengthModel | None = None

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(float(v) for v in self.x))
        if any(v <= 0 for v in self.x):
            raise ValueError("all component strengths must be strictly positive")

    def __len__(self) -> int:
        return len(self.x)


@dataclass(frozen=True)
class StructureFunction:
    """Coherent structure given by its minimal path sets.

    ``parallel``: any single surviving component keeps the system alive
    (smallest cut set is everything).  ``column-paths``: the system lives as
    long as some grid column is fully intact, so the smallest cut sets are
    transversals with one node per column.
    """

    kind: str
    n: int
    rows: int = 0
    cols: int = 0

    @classmethod
    def parallel(cls, n: int) -> "StructureFunction":
        if n < 1:
            raise ValueError("n must be positive")
        return cls(kind="parallel", n=n)

    @classmethod
    def column_paths(cls, rows: int, cols: int) -> "StructureFunction":
        if rows < 1 or cols < 1:
            raise ValueError("rows and cols must be positive")
        return cls(kind="column-paths", n=rows * cols, rows=rows, cols=cols)

    def __post_init__(self):
        if self.kind not in ("parallel", "column-paths"):
            raise ValueError(f"unknown structure kind {self.kind!r}")

    def minimal_path_sets(self) -> tuple[frozenset[int], ...]:
        if self.kind == "parallel":
            return tuple(frozenset({i}) for i in range(self.n))
        return tuple(
            frozenset(r * self.cols + c for r in range(self.rows)) for c in range(self.cols)
        )

    def smallest_cut_size(self) -> int:
        return self.n if self.kind == "parallel" else self.cols

    def works(self, working: frozenset[int]) -> bool:
        if self.kind == "parallel":
            return bool(working)
        return any(path <= working for path in self.minimal_path_sets())

    def _path_masks(self) -> np.ndarray:
        masks = []
        for path in self.minimal_path_sets():
            m = 0
            for i in path:
                m |= 1 << i
            masks.append(m)
        return np.asarray(masks, dtype=np.int64)

    def _works_masks(self, masks: np.ndarray) -> np.ndarray:
        if self.kind == "parallel":
            return masks != 0
        ok = np.zeros(masks.shape, dtype=bool)
        for pm in self._path_masks():
            ok |= (masks & pm) == pm
        return ok


@dataclass(frozen=True)
class PatternCycle:
    """One Phase I/II cycle: the Phase-I component and its ordered burst groups."""

    phase1: int
    groups: tuple[frozenset[int], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(frozenset(g) for g in self.groups))
        if any(not g for g in self.groups):
            raise ValueError("burst groups must be nonempty")
        if 1 + sum(len(g) for g in self.groups) != len(self.components()):
            raise ValueError("components repeat within a cycle")

    def components(self) -> frozenset[int]:
        out = {self.phase1}
        for g in self.groups:
            out |= g
        return frozenset(out)


@dataclass(frozen=True)
class BreakingPattern:
    """Ordered record of the failure process, one entry per Phase I/II cycle."""

    cycles: tuple[PatternCycle, ...]

    def __post_init__(self):
        object.__setattr__(self, "cycles", tuple(self.cycles))
        seen: set[int] = set()
        for cyc in self.cycles:
            comps = cyc.components()
            if seen & comps:
                raise ValueError("components repeat across the breaking pattern")
            seen |= comps

    def components(self) -> frozenset[int]:
        out: set[int] = set()
        for cyc in self.cycles:
            out |= cyc.components()
        return frozenset(out)

    def __str__(self) -> str:
        return format_pattern(self)


def format_pattern(pattern: BreakingPattern) -> str:
    """Render with 1-based labels, bursts as nested groups: ``1(2,3(4)) 5``."""

    def nest(groups: tuple[frozenset[int], ...]) -> str:
        if not groups:
            return ""
        inner = ",".join(str(i + 1) for i in sorted(groups[0]))
        return "(" + inner + nest(groups[1:]) + ")"

    return " ".join(str(c.phase1 + 1) + nest(c.groups) for c in pattern.cycles)


def parse_pattern(text: str) -> BreakingPattern:
    """Inverse of :func:`format_pattern`."""
    pos = 0

    def fail(msg: str):
        raise ValueError(f"bad pattern at position {pos}: {msg} in {text!r}")

    def read_int() -> int:
        nonlocal pos
        m = re.match(r"\d+", text[pos:])
        if not m:
            fail("expected component label")
        pos += m.end()
        return int(m.group()) - 1

    def read_groups() -> tuple[frozenset[int], ...]:
        nonlocal pos
        if pos >= len(text) or text[pos] != "(":
            return ()
        pos += 1
        members = {read_int()}
        while pos < len(text) and text[pos] == ",":
            pos += 1
            members.add(read_int())
        rest = read_groups()
        if pos >= len(text) or text[pos] != ")":
            fail("expected ')'")
        pos += 1
        return (frozenset(members),) + rest

    cycles = []
    while pos < len(text):
        while pos < len(text) and text[pos] == " ":
            pos += 1
        if pos >= len(text):
            break
        phase1 = read_int()
        groups = read_groups()
        cycles.append(PatternCycle(phase1, groups))
    if not cycles:
        raise ValueError(f"empty pattern {text!r}")
    return BreakingPattern(tuple(cycles))


@dataclass(frozen=True)
class CascadeResult:
    strength: float
    phase1_stresses: tuple[float, ...]
    pattern: BreakingPattern
    survivor_sets: tuple[frozenset[int], ...]


@dataclass(frozen=True)
class ChainSpec:
    """Series chain of m identical bundles; the chain strength is the minimum."""

    m: int

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("chain length must be >= 1")


def _as_strengths(x) -> np.ndarray:
    if isinstance(x, ComponentStrengths):
        x = x.x
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("strengths must be a nonempty 1-d vector")
    if np.any(arr <= 0):
        raise ValueError("all component strengths must be strictly positive")
    return arr


def simulate_cascade(x, rule: Rule, structure: StructureFunction) -> CascadeResult:
    """Run one full Phase I/II cascade and record the breaking pattern.

    Each cycle finds the smallest load at which a survivor breaks, removes it,
    then repeatedly strips every component whose strength is no longer above
    its (recomputed) share of that load, one burst group per recomputation.
    Stops once the survivor set contains no minimal path set.
    """
    xs = _as_strengths(x)
    n = structure.n
    if xs.size != n:
        raise ValueError(f"expected {n} strengths, got {xs.size}")

    last_shares: dict[int, float] = {}

    def shares(working: frozenset[int]) -> LoadShareVector:
        lam = rule(Configuration(n, working))
        for j, old in last_shares.items():
            if j in lam.values and lam[j] < old * (1.0 - _REL_TOL):
                raise NonMonotoneRuleError(
                    f"share of component {j} dropped from {old} to {lam[j]} after removals"
                )
        last_shares.clear()
        last_shares.update(lam.values)
        return lam

    working = frozenset(range(n))
    survivor_sets = [working]
    stresses: list[float] = []
    cycles: list[PatternCycle] = []
    prev_s = 0.0
    while True:
        lam = shares(working)
        order = sorted(working)
        ratios = [xs[i] / lam[i] for i in order]
        j = int(np.argmin(ratios))
        s_u, i0 = float(ratios[j]), order[j]
        if stresses and s_u <= prev_s:
            raise NonMonotoneRuleError(
                f"phase-I stress did not increase ({prev_s} -> {s_u}); rule is not monotone"
            )
        cur = working - {i0}
        groups: list[frozenset[int]] = []
        while cur:
            lam2 = shares(cur)
            grp = frozenset(i for i in cur if xs[i] <= lam2[i] * s_u)
            if not grp:
                break
            groups.append(grp)
            cur = cur - grp
        cycles.append(PatternCycle(i0, tuple(groups)))
        stresses.append(s_u)
        survivor_sets.append(cur)
        working = cur
        prev_s = s_u
        if not structure.works(working):
            break
    return CascadeResult(
        strength=stresses[-1],
        phase1_stresses=tuple(stresses),
        pattern=BreakingPattern(tuple(cycles)),
        survivor_sets=tuple(survivor_sets),
    )


def replay_pattern(pattern: BreakingPattern, x, rule: Rule, structure: StructureFunction,
                   rtol: float = _REL_TOL) -> bool:
    """Check a pattern against the strength vector by replaying its constraints.

    Verifies, cycle by cycle: the Phase-I equality defining each breaking
    stress, strictly increasing stresses, Phase-I minimality, the lower/upper
    share bounds bracketing every burst component, burst termination, and that
    the structure survives exactly until the final cycle.  Independent of the
    bookkeeping in :func:`simulate_cascade`, which it serves as an oracle for.
    """
    xs = _as_strengths(x)
    n = structure.n
    working = frozenset(range(n))
    prev_s = 0.0

    def lam_of(members: frozenset[int]) -> LoadShareVector:
        return rule(Configuration(n, members))

    for idx, cyc in enumerate(pattern.cycles):
        if cyc.phase1 not in working or not cyc.components() <= working:
            return False
        lam = lam_of(working)
        s_u = xs[cyc.phase1] / lam[cyc.phase1]
        if s_u <= prev_s:
            return False
        for j in working:
            if j != cyc.phase1 and xs[j] < lam[j] * s_u * (1.0 - rtol):
                return False
        lower = working
        cur = working - {cyc.phase1}
        for grp in cyc.groups:
            if not grp <= cur:
                return False
            lam_lo = lam_of(lower)
            lam_hi = lam_of(cur)
            for j in grp:
                if lam_hi[j] < lam_lo[j] * (1.0 - rtol):
                    raise NonMonotoneRuleError(
                        f"share of component {j} dropped after removals during replay"
                    )
                if not (lam_lo[j] * s_u * (1.0 - rtol) < xs[j] <= lam_hi[j] * s_u * (1.0 + rtol)):
                    return False
            lower = cur
            cur = cur - grp
        if cur:
            lam_t = lam_of(cur)
            if any(xs[j] <= lam_t[j] * s_u * (1.0 - rtol) for j in cur):
                return False  # burst should have continued
        working = cur
        alive = structure.works(working)
        final = idx == len(pattern.cycles) - 1
        if alive == final:
            return False
        prev_s = s_u
    return True


class PowerScaledRule:
    """Transform a rule into {(lambda_i(M)/sigma_i)**rho}.

    Maps a Weibull-strength cascade onto an equivalent unit-exponential one:
    simulate exponentials under the transformed rule, then take the rho-th
    root of the resulting stresses.
    """

    def __init__(self, base: Rule, scales, rho: float):
        self.base = base
        self.scales = np.asarray(scales, dtype=float)
        self.rho = float(rho)

    def __call__(self, config: Configuration) -> LoadShareVector:
        lam = self.base(config)
        sig = self.scales
        if sig.ndim == 0:
            sig = np.full(config.n, float(sig))
        return LoadShareVector({i: (lam[i] / sig[i]) ** self.rho for i in config.working})


# ---------------------------------------------------------------------------
# vectorized sampling


def _rule_table(rule: Rule, n: int) -> np.ndarray:
    """Dense (2^n, n) table of load shares; non-member slots hold 1.0 and must
    only ever be read through the membership mask."""
    cached = getattr(rule, "_table", None)
    if cached is not None and cached.shape == (1 << n, n):
        return cached
    table = np.ones((1 << n, n))
    if hasattr(rule, "_vector"):
        for mask in range(1, 1 << n):
            vec = rule._vector(mask)
            sel = ~np.isnan(vec)
            table[mask, sel] = vec[sel]
    else:
        for mask in range(1, 1 << n):
            lam = rule(Configuration.from_mask(n, mask))
            for i, v in lam.values.items():
                table[mask, i] = v
    try:
        rule._table = table
    except AttributeError:
        pass
    return table


def _cascade_strengths_block(x: np.ndarray, table: np.ndarray,
                             structure: StructureFunction) -> np.ndarray:
    """Strengths for a block of replicas, bit-mask state per replica."""
    m, n = x.shape
    bit = np.int64(1) << np.arange(n, dtype=np.int64)
    masks = np.full(m, np.int64((1 << n) - 1))
    strength = np.zeros(m)
    active = np.arange(m)
    while active.size:
        am = masks[active]
        lam = table[am]
        member = (am[:, None] & bit) != 0
        ratio = np.where(member, x[active] / lam, np.inf)
        s = ratio.min(axis=1)
        i0 = ratio.argmin(axis=1)
        am = am & ~bit[i0]
        masks[active] = am
        strength[active] = s
        cur = np.arange(active.size)
        while cur.size:
            rows = active[cur]
            rm = masks[rows]
            lam2 = table[rm]
            member2 = (rm[:, None] & bit) != 0
            over = member2 & (x[rows] <= lam2 * s[cur, None])
            rem = over.astype(np.int64) @ bit
            hit = rem != 0
            if not hit.any():
                break
            masks[rows[hit]] &= ~rem[hit]
            cur = cur[hit]
        ok = structure._works_masks(masks[active])
        active = active[ok]
    return strength


def _chunk_rng(seed: int, chunk_index: int) -> np.random.Generator:
    # keyed by (seed, chunk); chunk boundaries are fixed, so the sample stream
    # is independent of how chunks are assigned to workers
    return np.random.default_rng([seed, chunk_index])


_WORKER: dict = {}


def _init_worker(model, table, structure, seed, n):
    _WORKER.update(model=model, table=table, structure=structure, seed=seed, n=n)


def _run_worker_chunk(spec: tuple[int, int]) -> tuple[int, np.ndarray]:
    ci, size = spec
    rng = _chunk_rng(_WORKER["seed"], ci)
    x = _WORKER["model"].sample(rng, _WORKER["n"], size)
    return ci, _cascade_strengths_block(x, _WORKER["table"], _WORKER["structure"])


def sample_bundle_strengths(model: StrengthModel, rule: Rule, structure: StructureFunction,
                            replicas: int, seed: int = 0,
                            workers: int | None = None) -> np.ndarray:
    """Draw iid bundle strengths under ``model`` components and the given rule.

    Deterministic in (seed, replica index): replicas are generated in fixed
    chunks with a per-chunk generator keyed by (seed, chunk), so the output
    is byte-identical regardless of the worker count.
    """
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    n = structure.n
    if n > _TABLE_MAX_N:
        return _sample_scalar(model, rule, structure, replicas, seed)
    table = _rule_table(rule, n)
    specs = [(ci, min(_CHUNK, replicas - ci * _CHUNK)) for ci in range((replicas + _CHUNK - 1) // _CHUNK)]
    if workers is None or workers <= 1 or len(specs) == 1:
        _init_worker(model, table, structure, seed, n)
        parts = [_run_worker_chunk(spec)[1] for spec in specs]
    else:
        parts_by_ci: dict[int, np.ndarray] = {}
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                                 initargs=(model, table, structure, seed, n)) as pool:
            for ci, part in pool.map(_run_worker_chunk, specs, chunksize=4):
                parts_by_ci[ci] = part
        parts = [parts_by_ci[ci] for ci, _ in specs]
    return np.concatenate(parts)


def _sample_scalar(model, rule, structure, replicas, seed):
    # slow path for bundles too large for a dense share table
    out = np.empty(replicas)
    n = structure.n
    pos = 0
    for ci in range((replicas + _CHUNK - 1) // _CHUNK):
        size = min(_CHUNK, replicas - pos)
        x = model.sample(_chunk_rng(seed, ci), n, size)
        for r in range(size):
            out[pos + r] = simulate_cascade(x[r], rule, structure).strength
        pos += size
    return out


def chain_strength(samples, chain: ChainSpec, seed: int = 0,
                   draws: int | None = None) -> np.ndarray:
    """Chain-of-bundles strengths: minima of m draws from the bundle pool."""
    pool = np.asarray(samples, dtype=float)
    if pool.size == 0:
        raise ValueError("bundle sample pool is empty")
    if draws is None:
        draws = max(1, pool.size // chain.m)
    if chain.m == 1:
        rng = np.random.default_rng([seed])
        return pool[rng.integers(0, pool.size, size=draws)]
    rng = np.random.default_rng([seed])
    idx = rng.integers(0, pool.size, size=(draws, chain.m))
    return pool[idx].min(axis=1)


def cycles_to_failure(x, rule: Rule, structure: StructureFunction,
                      s_star: float, a: float) -> int:
    """Number of load ramps 0 -> s_star until the bundle fails.

    Strengths degrade comonotonically: after k completed cycles component i
    has strength a**k * x_i.  With a monotone rule the whole sequence of
    cycles is one quasistatic ramp of the effective load s_star / a**(k-1),
    so the count is the first k with a**(k-1) * S* <= s_star.
    """
    if s_star <= 0:
        raise ValueError("s_star must be positive")
    _check_degradation(a)
    s = simulate_cascade(x, rule, structure).strength
    k = 1
    while s > s_star:
        s *= a
        k += 1
    return k


def _check_degradation(a: float):
    if not (0 < a < 1):
        raise ValueError(
            "degradation factor a must lie in (0, 1): without degradation "
            "either the bundle fails in the first cycle or it never fails"
        )


def cycles_to_failure_samples(model: StrengthModel, rule: Rule, structure: StructureFunction,
                              s_star: float, a: float, replicas: int, seed: int = 0,
                              workers: int | None = None) -> np.ndarray:
    """Replicated cycles-to-failure counts (see :func:`cycles_to_failure`)."""
    if s_star <= 0:
        raise ValueError("s_star must be positive")
    _check_degradation(a)
    strengths = sample_bundle_strengths(model, rule, structure, replicas, seed, workers)
    k = np.ones(strengths.size, dtype=np.int64)
    above = strengths > s_star
    ratio = np.log(s_star / strengths[above]) / np.log(a)
    kk = 1 + np.ceil(ratio).astype(np.int64)
    # guard the ceil against round-off in either direction
    down = (kk > 1) & (a ** (kk - 2) * strengths[above] <= s_star)
    kk[down] -= 1
    up = a ** (kk - 1) * strengths[above] > s_star
    kk[up] += 1
    k[above] = kk
    return k


def enumerate_patterns(n: int) -> list[BreakingPattern]:
    """All breaking patterns of a parallel bundle on n components.

    Every ordered assignment of the components to Phase-I failures and nested
    burst groups; for a monotone rule these are exactly the attainable
    patterns.  Exponential in n, guarded to n <= 6.
    """
    if n > 6:
        raise ValueError("pattern enumeration is exponential; n <= 6 only")

    def group_seqs(pool: frozenset[int]):
        yield ()
        items = sorted(pool)
        for pick in range(1, 1 << len(items)):
            first = frozenset(items[i] for i in range(len(items)) if pick >> i & 1)
            for rest in group_seqs(pool - first):
                yield (first,) + rest

    def tails(remaining: frozenset[int]):
        if not remaining:
            yield ()
            return
        for i in sorted(remaining):
            pool = remaining - {i}
            for groups in group_seqs(pool):
                used = frozenset({i}).union(*groups) if groups else frozenset({i})
                for tail in tails(remaining - used):
                    yield (PatternCycle(i, groups),) + tail

    return [BreakingPattern(cycles) for cycles in tails(frozenset(range(n)))]
