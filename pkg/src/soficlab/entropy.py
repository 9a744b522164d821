"""Per-chart sofic topological entropy of subshifts.

A *microstate* assigns to every carrier point ``v`` an admissible pattern
over ``F+ = {1} u F``; its *trace* is the value each pattern takes at the
identity. Because the shift pseudometric only reads the identity
coordinate, two microstates are separated at any scale ``0 < eps < 1``
exactly when their traces differ, so separated-set counting reduces to
counting traces that carry at least one good microstate.
"""
from __future__ import annotations

import csv
import io
import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .charts import Chart, ChartError, fraction_str
from .shifts import SFT, LocalLanguage, local_language
from .transformation import max_fiber

DEFAULT_EXACT_CAP = 2**22
DEFAULT_BRUTEFORCE_CAP = 10**6

EXACT = "exact"
SAMPLED = "sampled-lower-bound"
UPPER = "combinatorial-upper-bound"


class SizeCapError(ValueError):
    def __init__(self, size, cap):
        self.size, self.cap = size, cap
        super().__init__(f"search space of {size} exceeds the cap of {cap}")


class HypothesesUnmet(ValueError):
    pass


@dataclass(frozen=True)
class GoodnessParams:
    """``F`` as chart positions, the defect tolerance ``delta`` and the
    separation scale ``epsilon``."""

    F: tuple[int, ...]
    delta: Fraction
    epsilon: Fraction = Fraction(1, 2)

    def __post_init__(self):
        object.__setattr__(self, "F", tuple(int(i) for i in self.F))
        object.__setattr__(self, "delta", Fraction(self.delta))
        object.__setattr__(self, "epsilon", Fraction(self.epsilon))
        if not self.F or len(set(self.F)) != len(self.F):
            raise ValueError("F must be a non-empty list of distinct chart positions")
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")

    @classmethod
    def from_elements(cls, chart: Chart, F: Iterable, delta, epsilon=Fraction(1, 2)):
        return cls(tuple(chart.index_of(x) for x in F), delta, epsilon)

    def threshold(self, d: int) -> int:
        """Largest defect count allowed per ``m``: ``floor(delta^2 |D|)``."""
        return math.floor(self.delta**2 * d)

    def check(self, chart: Chart):
        if any(not 0 <= i < len(chart) for i in self.F):
            raise ChartError("F refers to positions outside the chart")

    def plus(self, chart: Chart) -> tuple[int, ...]:
        """Positions of ``F+``: the identity first, then ``F`` in order."""
        return (chart.identity,) + tuple(i for i in self.F if i != chart.identity)

    def offsets(self, chart: Chart) -> tuple[int, ...]:
        plus = self.plus(chart)
        return tuple(plus.index(i) for i in self.F)


@dataclass(frozen=True)
class Microstate:
    """One pattern over ``F+`` per carrier point (identity coordinate first)."""

    patterns: tuple[tuple[int, ...], ...]

    @property
    def trace(self) -> tuple[int, ...]:
        return tuple(p[0] for p in self.patterns)


def defect_set(phi: Microstate, m: int, chart: Chart, params: GoodnessParams) -> frozenset[int]:
    """Points where reading the trace along ``sigma(m)`` disagrees with the
    pattern's own value at ``m``."""
    if m not in params.F:
        raise ValueError(f"position {m} is not in F")
    j = params.plus(chart).index(m)
    omega = phi.trace
    img = chart.sigma[m].image
    return frozenset(v for v in range(chart.d) if omega[img[v]] != phi.patterns[v][j])


def is_good(phi: Microstate, params: GoodnessParams, chart: Chart) -> bool:
    limit = params.threshold(chart.d)
    return all(len(defect_set(phi, m, chart, params)) <= limit for m in params.F)


def full_shift_witness(omega: Sequence[int], chart: Chart, params: GoodnessParams) -> Microstate:
    """``phi(v)(m) = omega(sigma(m)(v))``; zero defects when ``sigma(1) = Id``."""
    if not chart.sigma[chart.identity].is_identity():
        raise ChartError("the witness needs sigma(1) = Id")
    if len(omega) != chart.d:
        raise ValueError("trace length must equal the carrier size")
    imgs = [chart.sigma[i].image for i in params.plus(chart)]
    return Microstate(tuple(tuple(int(omega[img[v]]) for img in imgs) for v in range(chart.d)))


# -- counting ---------------------------------------------------------------


@dataclass(frozen=True)
class CountResult:
    count: int
    method: str
    mode: str
    d: int
    alphabet: int
    language_size: int = 0
    unresolved: int = 0

    @property
    def is_exact(self) -> bool:
        return self.method == EXACT


def _language_for(sft: SFT, params: GoodnessParams, chart: Chart, admissibility: str,
                  translates=None) -> LocalLanguage:
    if sft.monoid != chart.monoid:
        raise ValueError(f"SFT lives on {sft.monoid.descriptor}, chart on {chart.monoid.descriptor}")
    params.check(chart)
    if admissibility not in ("local", "exact"):
        raise ValueError("admissibility must be 'local' or 'exact'")
    support = [chart.elements[i] for i in params.plus(chart)]
    if translates is None:
        translates = list(chart.elements)
    return local_language(sft, support, translates, exact=admissibility == "exact")


class TraceCounter:
    """Depth-first enumeration of traces that admit a good microstate.

    Trace values are fixed point by point. Once ``v`` and all ``sigma(m)(v)``
    carry values, the cheapest defect patterns available at ``v`` are known;
    branches die as soon as the forced defects exceed the per-``m`` budget,
    and complete traces are settled by a small exact assignment search.
    """

    def __init__(self, d: int, a: int, images: Sequence[Sequence[int]],
                 offsets: Sequence[int], patterns: Sequence[Sequence[int]], budget: int):
        self.d, self.a, self.k, self.budget = d, a, len(images), budget
        self.images = [list(map(int, img)) for img in images]
        close_at: list[list[int]] = [[] for _ in range(d)]
        for v in range(d):
            close_at[max([v] + [img[v] for img in self.images])].append(v)
        self.close_at = close_at
        self.options = self._option_table(offsets, patterns)

    def _option_table(self, offsets, patterns):
        """Pareto-minimal defect masks for each local reading
        ``(omega(v), omega(sigma_1 v), ..., omega(sigma_k v))``."""
        a, k = self.a, self.k
        table = []
        for key in itertools.product(range(a), repeat=k + 1):
            masks = {sum(1 << j for j in range(k) if q[offsets[j]] != key[j + 1])
                     for q in patterns if q[0] == key[0]}
            if not masks:
                table.append(None)
                continue
            minimal = sorted(m for m in masks if not any(o != m and o & m == o for o in masks))
            table.append(tuple(minimal))
        return table

    def _key(self, omega, v):
        key = omega[v]
        for img in self.images:
            key = key * self.a + omega[img[v]]
        return key

    def _settle(self, costly) -> bool:
        if not costly:
            return True
        k, budget = self.k, self.budget
        order = sorted(costly, key=len)
        memo: dict = {}

        def go(i, used):
            if i == len(order):
                return True
            state = (i, used)
            if state in memo:
                return memo[state]
            ok = False
            for mask in order[i]:
                nxt = tuple(u + ((mask >> j) & 1) for j, u in enumerate(used))
                if all(u <= budget for u in nxt) and go(i + 1, nxt):
                    ok = True
                    break
            memo[state] = ok
            return ok

        return go(0, (0,) * k)

    def count(self, prefix: Sequence[int] = ()) -> int:
        d, a, k, budget = self.d, self.a, self.k, self.budget
        omega = [0] * d
        forced = [0] * k
        costly: list[tuple[int, ...]] = []
        cap_costly = k * budget

        def dfs(t):
            if t == d:
                return 1 if self._settle(costly) else 0
            total = 0
            values = (prefix[t],) if t < len(prefix) else range(a)
            for val in values:
                omega[t] = val
                pushed, bumped, ok = 0, [], True
                for v in self.close_at[t]:
                    opts = self.options[self._key(omega, v)]
                    if opts is None:
                        ok = False
                        break
                    if opts[0] == 0:
                        continue
                    if budget == 0:
                        ok = False
                        break
                    costly.append(opts)
                    pushed += 1
                    common = opts[0]
                    for o in opts[1:]:
                        common &= o
                    for j in range(k):
                        if common >> j & 1:
                            forced[j] += 1
                            bumped.append(j)
                if ok and len(costly) <= cap_costly and all(f <= budget for f in forced):
                    total += dfs(t + 1)
                for j in bumped:
                    forced[j] -= 1
                del costly[len(costly) - pushed:]
            return total

        return dfs(0)

    def trace_is_good(self, omega: Sequence[int]) -> bool:
        costly = []
        for v in range(self.d):
            opts = self.options[self._key(omega, v)]
            if opts is None:
                return False
            if opts[0] != 0:
                costly.append(opts)
        if len(costly) > self.k * self.budget:
            return False
        return self._settle(costly)


def _count_shard(args):
    counter, prefix = args
    return counter.count(prefix)


def _prefixes(a: int, d: int, shards: int) -> list[tuple[int, ...]]:
    length = 0
    while a**length < shards and length < d:
        length += 1
    return list(itertools.product(range(a), repeat=length))


def make_counter(language: LocalLanguage, params: GoodnessParams, chart: Chart,
                 alphabet: int) -> TraceCounter:
    return TraceCounter(chart.d, alphabet, [chart.sigma[m].image for m in params.F],
                        params.offsets(chart), language.patterns, params.threshold(chart.d))


def count_good_traces(sft: SFT, params: GoodnessParams, chart: Chart, method: str = EXACT,
                      admissibility: str = "local", *, translates=None, shards: int = 1,
                      workers: int = 1, samples: int = 1000, seed: int = 0,
                      cap: int = DEFAULT_EXACT_CAP) -> CountResult:
    """Number of traces in ``A^D`` carrying at least one good microstate.

    ``method`` is ``"exact"`` (depth-first search, sharded by trace prefix),
    ``"sampled-lower-bound"`` (distinct verified traces among random draws)
    or ``"combinatorial-upper-bound"`` (the certified packing bound, or
    ``|A|^|D|`` when its hypotheses fail). Local admissibility over-admits
    patterns, so local-mode counts bound the true count from above.
    """
    a, d = sft.alphabet, chart.d
    language = _language_for(sft, params, chart, admissibility, translates)
    base = dict(mode=admissibility, d=d, alphabet=a, language_size=len(language),
                unresolved=language.unresolved)
    if method == UPPER:
        report = monotonicity_report(sft, chart, params)
        bound = report.certified_upper_bound if report.hypotheses_met else a**d
        return CountResult(bound, UPPER, **base)
    if not language.patterns:
        return CountResult(0, method, **base)
    full = len(language) == a ** len(language.support)
    if method == EXACT and full and chart.sigma[chart.identity].is_identity():
        return CountResult(a**d, EXACT, **base)
    counter = make_counter(language, params, chart, a)
    if method == SAMPLED:
        rng = np.random.default_rng(seed)
        found = {tuple(w) for w in rng.integers(0, a, size=(samples, d)).tolist()
                 if counter.trace_is_good(w)}
        return CountResult(len(found), SAMPLED, **base)
    if method != EXACT:
        raise ValueError(f"unknown counting method {method!r}")
    if a**d > cap:
        raise SizeCapError(a**d, cap)
    jobs = [(counter, p) for p in _prefixes(a, d, shards)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as pool:
            total = sum(pool.map(_count_shard, jobs))
    else:
        total = sum(map(_count_shard, jobs))
    return CountResult(total, EXACT, **base)


def count_good_traces_bruteforce(sft: SFT, params: GoodnessParams, chart: Chart,
                                 admissibility: str = "local", *, translates=None,
                                 cap: int = DEFAULT_BRUTEFORCE_CAP, chunk: int = 50_000) -> int:
    """Enumerate every microstate, keep the good ones, count distinct traces."""
    language = _language_for(sft, params, chart, admissibility, translates)
    if not language.patterns:
        return 0
    L = np.array(language.patterns, dtype=np.int64)
    d, n = chart.d, len(L)
    if n**d > cap:
        raise SizeCapError(n**d, cap)
    limit = params.threshold(d)
    images = [chart.sigma[m].image for m in params.F]
    offsets = params.offsets(chart)
    weights = sft.alphabet ** np.arange(d, dtype=np.int64)
    traces: set[int] = set()
    total = n**d
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total), dtype=np.int64)
        choice = (idx[:, None] // n ** np.arange(d, dtype=np.int64)[None, :]) % n
        vals = L[choice]                       # (rows, d, |F+|)
        omega = vals[:, :, 0]
        good = np.ones(len(idx), dtype=bool)
        for img, j in zip(images, offsets):
            good &= np.count_nonzero(omega[:, img] != vals[:, :, j], axis=1) <= limit
        traces.update((omega[good] @ weights).tolist())
    return len(traces)


# -- estimates and bounds ---------------------------------------------------


@dataclass(frozen=True)
class EntropyEstimate:
    nats: float
    base_a: float


def _exact_log(count: int, a: int) -> int | None:
    """``e`` with ``a**e == count``, if any."""
    if a < 2 or count < 1:
        return None
    e = round(math.log(count) / math.log(a))
    for cand in (e - 1, e, e + 1):
        if cand >= 0 and a**cand == count:
            return cand
    return None


def entropy_estimate(result: CountResult) -> EntropyEstimate:
    """``log(count) / |D|`` in nats and in base ``|A|``; ``-inf`` for zero."""
    count, d, a = result.count, result.d, result.alphabet
    if count == 0:
        return EntropyEstimate(-math.inf, -math.inf)
    e = _exact_log(count, a)
    if e is not None:
        ratio = Fraction(e, d)
        return EntropyEstimate(float(ratio) * math.log(a), float(ratio))
    nats = math.log(count) / d
    return EntropyEstimate(nats, nats / math.log(a) if a > 1 else math.inf)


@dataclass(frozen=True)
class InjectivitySets:
    V: tuple[int, ...]
    U: tuple[int, ...]
    delta_F: int
    lower_bound: int
    covers: bool


def injectivity_sets(chart: Chart, F: Sequence[int]) -> InjectivitySets:
    """Points where ``s -> sigma(s)(v)`` collides on ``F``, and a greedy
    packing of the rest whose ``sigma(F)``-images are pairwise disjoint."""
    images = np.stack([chart.sigma[i].image for i in F], axis=1)   # (d, |F|)
    d, nF = images.shape
    sorted_rows = np.sort(images, axis=1)
    collide = np.any(sorted_rows[:, 1:] == sorted_rows[:, :-1], axis=1)
    V = tuple(int(v) for v in np.flatnonzero(collide))
    used = np.zeros(d, dtype=bool)
    U = []
    for v in range(d):
        if collide[v]:
            continue
        row = images[v]
        if not used[row].any():
            used[row] = True
            U.append(v)
    rest = np.flatnonzero(~collide)
    covers = bool(all(used[images[v]].any() for v in rest))
    delta_F = max(max_fiber(chart.sigma[i]) for i in F)
    lower = math.ceil(len(rest) / (nF * nF * delta_F))
    assert len(U) >= lower and covers
    return InjectivitySets(V, tuple(U), delta_F, lower, covers)


@dataclass(frozen=True)
class Beta0:
    value: float
    bound_nats: float          # (1 - beta0) log a

    @property
    def rational(self) -> Fraction:
        return Fraction(self.value).limit_denominator(10**12)


def beta0(a: int, nF: int, delta_F: int) -> Beta0:
    """Entropy deficit ``-log_a(1 - a^-|F|) / (2 Delta_F |F|^2)``."""
    if a < 2:
        raise ValueError("alphabet must have at least two symbols")
    if nF < 2:
        raise ValueError("|F| must be at least 2")
    if delta_F < 1:
        raise ValueError("Delta_F must be at least 1")
    value = -math.log(1 - float(a) ** -nF, a) / (2 * delta_F * nF * nF)
    return Beta0(value, (1 - value) * math.log(a))


def _exact_t(t) -> Fraction:
    return t if isinstance(t, Fraction) else Fraction(repr(t)) if isinstance(t, float) else Fraction(t)


def binary_entropy(t: float) -> float:
    return -t * math.log(t) - (1 - t) * math.log(1 - t)


def binomial_tail(d: int, t) -> int:
    """``sum_{j <= floor(t d)} C(d, j)`` exactly."""
    top = math.floor(_exact_t(t) * d)
    return sum(math.comb(d, j) for j in range(top + 1))


@dataclass(frozen=True)
class StirlingBound:
    t: float
    d: int
    beta: float

    @property
    def log_bound(self) -> float:
        return self.beta * self.d

    @property
    def bound(self) -> float:
        return math.exp(self.log_bound)


def stirling_bound(t, d: int) -> StirlingBound:
    """``exp(H(t) d)`` with ``H`` the natural-log binary entropy; dominates
    the number of subsets of size at most ``t d`` for every ``d >= 1``."""
    tf = float(t)
    if not 0 < tf < 0.5:
        raise ValueError("t must lie in (0, 1/2)")
    if d < 1:
        raise ValueError("d must be positive")
    return StirlingBound(tf, d, binary_entropy(tf))


@dataclass
class MonotonicityReport:
    d: int
    alphabet: int
    F_size: int
    delta: Fraction
    epsilon: Fraction
    pattern: tuple | None = None
    hypotheses_met: bool = True
    reasons: list[str] = field(default_factory=list)
    sm3_over_F: Fraction | None = None
    delta_F: int | None = None
    V_size: int | None = None
    V_limit: Fraction | None = None
    packing_size: int | None = None
    packing_lower_bound: int | None = None
    beta0: float | None = None
    t: Fraction | None = None
    subset_count: int | None = None
    stirling_beta: float | None = None
    log_bound_tail: float | None = None
    log_bound_stirling: float | None = None
    certified_upper_bound: int | None = None

    def fail(self, reason: str):
        self.hypotheses_met = False
        self.reasons.append(reason)

    def to_json(self) -> dict:
        out = asdict(self)
        for key, val in out.items():
            if isinstance(val, Fraction):
                out[key] = fraction_str(val)
        if self.pattern is not None:
            out["pattern"] = list(self.pattern)
        return out


def monotonicity_report(sft: SFT, chart: Chart, params: GoodnessParams,
                        epsilon: Fraction | None = None) -> MonotonicityReport:
    """Assemble the packing argument that bounds the trace count of a
    proper SFT below ``|A|^|D|`` on one chart.

    Hypotheses: ``|F| >= 2``; a forbidden pattern supported inside ``F``;
    ``delta <= 1/(2(|F|+1))``; ``sigma(1) = Id``; pairwise SM3 on ``F`` at
    level ``epsilon <= delta / C(|F|, 2)``. Then every trace count is at most
    ``(#subsets of size <= t|D|) * |A|^((1 - beta0)|D|)`` with
    ``t = (|F|+1) delta``; the subset count is also bounded by
    ``exp(H(t)|D|)`` when ``t < 1/2``.
    """
    if sft.is_full_shift:
        raise ValueError("the bound needs a subshift with at least one forbidden pattern")
    params.check(chart)
    d, a, nF = chart.d, sft.alphabet, len(params.F)
    if nF < 2:
        raise ValueError("|F| must be at least 2")
    pairs = math.comb(nF, 2)
    delta = params.delta
    eps = Fraction(epsilon) if epsilon is not None else delta / pairs
    rep = MonotonicityReport(d, a, nF, delta, eps)
    F_elems = {chart.elements[i] for i in params.F}
    pattern = next((p for p in sft.forbidden if set(p.support) <= F_elems), None)
    if pattern is None:
        rep.fail("no forbidden pattern is supported inside F")
    else:
        rep.pattern = pattern.values
    if delta > Fraction(1, 2 * (nF + 1)):
        rep.fail("delta exceeds 1/(2(|F|+1))")
    if not 0 < eps < 1 or eps > delta / pairs:
        rep.fail("epsilon must lie in (0, delta / C(|F|, 2)]")
    if not chart.sigma[chart.identity].is_identity():
        rep.fail("sigma(1) is not the identity")
    seps = [Fraction(int(np.count_nonzero(chart.sigma[i].image != chart.sigma[j].image)), d)
            for i, j in itertools.combinations(params.F, 2)]
    rep.sm3_over_F = min(seps)
    if rep.sm3_over_F < 1 - eps:
        rep.fail("SM3 on F is weaker than 1 - epsilon")
    inj = injectivity_sets(chart, params.F)
    rep.delta_F = inj.delta_F
    rep.V_size = len(inj.V)
    rep.V_limit = delta * d
    if rep.V_size > rep.V_limit:
        rep.fail("|V| exceeds delta |D|")
    rep.packing_size = len(inj.U)
    rep.packing_lower_bound = inj.lower_bound
    b0 = beta0(a, nF, inj.delta_F)
    rep.beta0 = b0.value
    rep.t = (nF + 1) * delta
    rep.subset_count = binomial_tail(d, rep.t)
    packed = (1 - b0.value) * d * math.log(a)
    rep.log_bound_tail = math.log(rep.subset_count) + packed
    if rep.t < Fraction(1, 2):
        rep.stirling_beta = binary_entropy(float(rep.t))
        rep.log_bound_stirling = rep.stirling_beta * d + packed
    if rep.hypotheses_met:
        log_best = min(x for x in (rep.log_bound_tail, rep.log_bound_stirling) if x is not None)
        chain = math.floor(math.exp(log_best) * (1 + 1e-12))
        rep.certified_upper_bound = min(chain, a**d)
    return rep


# -- sweeps -----------------------------------------------------------------

CSV_COLUMNS = ["d", "method", "mode", "count", "log_count_per_d_nats", "log_count_per_d_base_a",
               "beta0", "certified_upper_bound", "note"]


@dataclass
class SweepRow:
    d: int
    method: str = ""
    mode: str = ""
    count: int | None = None
    log_count_per_d_nats: float | None = None
    log_count_per_d_base_a: float | None = None
    beta0: float | None = None
    certified_upper_bound: int | None = None
    note: str = ""


def sweep(charts: Iterable[Chart], sft: SFT, F: Sequence, delta, epsilon=Fraction(1, 2),
          method: str = EXACT, admissibility: str = "local", **count_kw) -> list[SweepRow]:
    """One row per chart; ``F`` is given as monoid elements."""
    rows = []
    for chart in charts:
        row = SweepRow(chart.d)
        try:
            params = GoodnessParams.from_elements(chart, F, delta, epsilon)
            res = count_good_traces(sft, params, chart, method, admissibility, **count_kw)
            est = entropy_estimate(res)
            row.method, row.mode, row.count = res.method, res.mode, res.count
            row.log_count_per_d_nats, row.log_count_per_d_base_a = est.nats, est.base_a
            if not sft.is_full_shift and len(params.F) >= 2:
                rep = monotonicity_report(sft, chart, params)
                row.beta0 = rep.beta0
                row.certified_upper_bound = rep.certified_upper_bound
                if not rep.hypotheses_met:
                    row.note = "bound hypotheses unmet: " + "; ".join(rep.reasons)
        except (ValueError, ChartError) as exc:
            row.note = f"failed: {exc}"
        rows.append(row)
    return rows


def rows_to_csv(rows: Sequence[SweepRow]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: ("" if v is None else (repr(v) if isinstance(v, float) else v))
                         for k, v in asdict(row).items()})
    return buf.getvalue()
