"""Finite approximation charts ``(D, sigma|K)`` and their quality reports.

A chart assigns one self-map of ``{0..d-1}`` to every element of a finite
list ``K`` of monoid elements. :func:`quality` measures how close the
assignment comes to being a multiplicative, separating map with bounded
fibers; the constructors below build the standard examples.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from .monoids import (
    Bicyclic,
    FiniteMonoid,
    FreeMonoid,
    IntAdd,
    IntPolynomial,
    Monoid,
    MonoidError,
    NatAdd,
    P,
    PolyComposition,
    ProductMonoid,
    Q,
    close_fragment,
    parse_descriptor,
)
from .transformation import (
    Transformation,
    compose,
    disagreements,
    idempotent_fiber_witness,
    max_fiber,
    product_embed,
)

DEFAULT_PRODUCT_CAP = 10**6
PRODUCT_CAP_ENV = "SOFICLAB_PRODUCT_CAP"


class ChartError(ValueError):
    pass


class CarrierCapError(ChartError):
    def __init__(self, size, cap):
        self.size, self.cap = size, cap
        super().__init__(f"product carrier of {size} points exceeds cap {cap}")


def fraction_str(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}"


def parse_fraction(text: str) -> Fraction:
    try:
        num, sep, den = str(text).partition("/")
        return Fraction(int(num), int(den)) if sep else Fraction(int(num))
    except (ValueError, ZeroDivisionError):
        raise ValueError(f"not an exact rational 'num/den': {text!r}") from None


@dataclass(frozen=True, eq=False)
class Chart:
    monoid: Monoid
    elements: tuple
    sigma: tuple[Transformation, ...]
    identity: int
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))
        object.__setattr__(self, "sigma", tuple(self.sigma))
        if not self.elements:
            raise ChartError("a chart needs at least one element")
        if len(self.elements) != len(self.sigma):
            raise ChartError("one transformation per element is required")
        if len(set(self.elements)) != len(self.elements):
            raise ChartError("chart elements must be distinct")
        for x in self.elements:
            self.monoid.check(x)
        if self.elements[self.identity] != self.monoid.identity():
            raise ChartError("the designated identity position does not hold the identity")
        d = self.sigma[0].d
        if any(s.d != d for s in self.sigma):
            raise ChartError("all transformations must share the carrier size")

    @property
    def d(self) -> int:
        return self.sigma[0].d

    def __len__(self):
        return len(self.elements)

    def index_of(self, x) -> int:
        try:
            return self.elements.index(x)
        except ValueError:
            raise ChartError(f"{self.monoid.label(x)} is not a chart element") from None

    def position(self, label: str) -> int:
        return self.index_of(self.monoid.parse(label))

    def labels(self) -> list[str]:
        return [self.monoid.label(x) for x in self.elements]

    def __getitem__(self, x) -> Transformation:
        return self.sigma[self.index_of(x)]

    def to_json(self) -> dict:
        out = {
            "d": self.d,
            "monoid": self.monoid.descriptor,
            "elements": self.labels(),
            "identity": self.identity,
            "sigma": [s.tolist() for s in self.sigma],
        }
        if self.seed is not None:
            out["seed"] = self.seed
        return out

    @classmethod
    def from_json(cls, data: dict, monoid: Monoid | None = None, base_dir=None) -> Chart:
        monoid = monoid or parse_descriptor(data["monoid"], base_dir)
        chart = cls(monoid, [monoid.parse(lbl) for lbl in data["elements"]],
                    [Transformation(s) for s in data["sigma"]], data["identity"], data.get("seed"))
        if chart.d != data["d"]:
            raise ChartError(f"declared d={data['d']} but sigma acts on {chart.d} points")
        return chart


# -- quality ----------------------------------------------------------------


@dataclass(frozen=True)
class QualityReport:
    d: int
    size: int
    sm1_ok: bool
    sm2_defect: Fraction
    sm2_coverage: Fraction
    sm3_separation: Fraction
    sm4_delta: int
    carrier_ok: bool = True
    obstructions: tuple = field(default=())

    @property
    def epsilon(self) -> Fraction:
        """Smallest level at which the measured SM2/SM3 statistics hold."""
        return max(self.sm2_defect, 1 - self.sm3_separation)

    def satisfies(self, epsilon: Fraction, delta: int) -> bool:
        return (self.sm1_ok and self.sm2_defect <= epsilon
                and self.sm3_separation >= 1 - epsilon and self.sm4_delta <= delta)

    def verdict(self) -> str:
        head = "(SM1–SM4)" if self.sm1_ok else "(SM1 fails; SM2–SM4)"
        return (f"{head} at (ε={fraction_str(self.epsilon)}, Δ={self.sm4_delta}) "
                f"with SM2 coverage {fraction_str(self.sm2_coverage)}")

    def to_json(self) -> dict:
        return {
            "d": self.d,
            "size": self.size,
            "sm1_ok": self.sm1_ok,
            "sm2_defect": fraction_str(self.sm2_defect),
            "sm2_coverage": fraction_str(self.sm2_coverage),
            "sm3_separation": fraction_str(self.sm3_separation),
            "sm4_delta": self.sm4_delta,
            "epsilon": fraction_str(self.epsilon),
            "carrier_ok": self.carrier_ok,
            "verdict": self.verdict(),
            "obstructions": [o.to_json() for o in self.obstructions],
        }


def covered_pairs(monoid: Monoid, elements: Sequence) -> list[tuple[int, int, int]]:
    """All ``(i, j, k)`` with ``elements[i] * elements[j] == elements[k]``."""
    index = {x: i for i, x in enumerate(elements)}
    out = []
    for i, x in enumerate(elements):
        for j, y in enumerate(elements):
            k = index.get(monoid.multiply(x, y))
            if k is not None:
                out.append((i, j, k))
    return out


def _carrier_can_separate(size: int, d: int) -> bool:
    # |K| distinct maps need |Map(D)| = d^d >= |K|
    return d >= 16 or size <= d ** d


def quality(chart: Chart, monoid: Monoid | None = None) -> QualityReport:
    monoid = monoid or chart.monoid
    for x in chart.elements:
        if not monoid.contains(x):
            raise ChartError(f"chart element {x!r} does not resolve in {monoid.descriptor}")
    d, n = chart.d, len(chart)
    sig = chart.sigma
    pairs = covered_pairs(monoid, chart.elements)
    worst = max((disagreements(sig[k], compose(sig[i], sig[j])) for i, j, k in pairs), default=0)
    sep = min((disagreements(sig[i], sig[j]) for i in range(n) for j in range(i + 1, n)),
              default=d)
    report = QualityReport(
        d=d,
        size=n,
        sm1_ok=sig[chart.identity].is_identity(),
        sm2_defect=Fraction(worst, d),
        sm2_coverage=Fraction(len(pairs), n * n),
        sm3_separation=Fraction(sep, d),
        sm4_delta=max(max_fiber(s) for s in sig),
        carrier_ok=sep == 0 or _carrier_can_separate(n, d),
    )
    if not report.carrier_ok:
        raise AssertionError("separated chart has more elements than Map(D)")
    return report


def quality_with_obstructions(chart: Chart, monoid: Monoid | None = None) -> QualityReport:
    """:func:`quality` plus an obstruction certificate for every
    non-trivial idempotent among the chart elements."""
    monoid = monoid or chart.monoid
    report = quality(chart, monoid)
    one = monoid.identity()
    certs = tuple(idempotent_obstruction(chart, i, monoid)
                  for i, x in enumerate(chart.elements)
                  if x != one and monoid.multiply(x, x) == x)
    return QualityReport(**{**report.__dict__, "obstructions": certs})


# -- constructors -----------------------------------------------------------


def _int_list(K) -> list[int]:
    K = [int(k) for k in K]
    if len(set(K)) != len(K):
        raise ChartError("K must not contain duplicates")
    return K


def _with_identity_first(K: list, one) -> list:
    return K if one in K else [one] + K


def cyclic_chart(n: int, K: Sequence[int]) -> Chart:
    """Translations ``v -> v + m mod n`` for ``m`` in ``K`` (a chart for ``Z``)."""
    if n < 1:
        raise ChartError("n must be positive")
    K = _with_identity_first(_int_list(K), 0)
    base = np.arange(n)
    sigma = [Transformation((base + m) % n) for m in K]
    return Chart(IntAdd(), K, sigma, K.index(0))


def saturating_chart(n: int, K: Sequence[int]) -> Chart:
    """Saturating translations ``v -> min(v + m, n - 1)`` (a chart for ``N``)."""
    K = _with_identity_first(_int_list(K), 0)
    if min(K) < 0:
        raise ChartError("saturating charts need K inside N")
    if n <= max(K):
        raise ChartError(f"n={n} must exceed max(K)={max(K)}")
    base = np.arange(n)
    sigma = [Transformation(np.minimum(base + m, n - 1)) for m in K]
    return Chart(NatAdd(), K, sigma, K.index(0))


def is_prime(p: int) -> bool:
    if p < 2:
        return False
    return all(p % q for q in range(2, math.isqrt(p) + 1))


def polynomial_chart(p: int, K: Sequence[IntPolynomial]) -> Chart:
    """Evaluation maps ``a -> P(a) mod p`` on the field with ``p`` elements."""
    if not is_prime(p):
        raise ChartError(f"{p} is not prime")
    monoid = PolyComposition()
    K = list(K)
    for P_ in K:
        monoid.check(P_)
    K = _with_identity_first(K, monoid.identity())
    reduced = [P_.reduce_mod(p) for P_ in K]
    if any(r.degree < 1 for r in reduced):
        raise ChartError(f"every polynomial must stay non-constant modulo {p}")
    if len(set(reduced)) != len(reduced):
        raise ChartError(f"polynomials must stay pairwise distinct modulo {p}")
    field_ = np.arange(p, dtype=np.int64)
    sigma = [Transformation(P_.evaluate_mod(field_, p)) for P_ in K]
    return Chart(monoid, K, sigma, K.index(monoid.identity()))


def random_perm_chart(d: int, k: int, L: int, seed: int) -> Chart:
    """Independent uniform permutations for ``k`` free generators, extended
    multiplicatively to every word of length at most ``L``."""
    if d < 1 or k < 1 or L < 1:
        raise ChartError("d, k and L must be positive")
    rng = np.random.default_rng(seed)
    gens = [Transformation(rng.permutation(d)) for _ in range(k)]
    monoid = FreeMonoid(k)
    words = close_fragment(monoid, monoid.generators(), L).elements
    sigma = []
    for w in words:
        f = Transformation.identity(d)
        for letter in w:
            f = compose(f, gens[letter])
        sigma.append(f)
    return Chart(monoid, words, sigma, 0, seed)


def regular_chart(monoid: FiniteMonoid, K: Sequence[int] | None = None) -> Chart:
    """Left multiplication ``v -> m*v`` on the carrier ``M`` itself."""
    K = list(monoid.elements()) if K is None else _with_identity_first(list(K), monoid.identity())
    sigma = [Transformation(monoid.table[m]) for m in K]
    return Chart(monoid, K, sigma, K.index(monoid.identity()))


def product_cap() -> int:
    return int(os.environ.get(PRODUCT_CAP_ENV, DEFAULT_PRODUCT_CAP))


def product_eta(epsilon: Fraction, n: int) -> float:
    """Largest component level ``eta`` with ``1 - (1 - eta)^n <= epsilon``."""
    return min(float(epsilon), 1 - (1 - float(epsilon)) ** (1 / n))


def product_chart(charts: Sequence[Chart], epsilon: Fraction | None = None,
                  cap: int | None = None) -> Chart:
    """Coordinatewise product of charts listing the same number of elements;
    element ``j`` of the result is the tuple of the components' ``j``-th
    elements."""
    if not charts:
        raise ChartError("product needs at least one chart")
    n = len(charts[0])
    if any(len(c) != n for c in charts) or any(c.identity != charts[0].identity for c in charts):
        raise ChartError("component charts must be aligned on a common K")
    cap = product_cap() if cap is None else cap
    size = math.prod(c.d for c in charts)
    if size > cap:
        raise CarrierCapError(size, cap)
    monoid = ProductMonoid([c.monoid for c in charts])
    elements = [tuple(c.elements[j] for c in charts) for j in range(n)]
    sigma = [product_embed(*(c.sigma[j] for c in charts)) for j in range(n)]
    result = Chart(monoid, elements, sigma, charts[0].identity)

    parts = [quality(c) for c in charts]
    report = quality(result)
    predicted = 1 - math.prod(1 - q.sm2_defect for q in parts)
    assert report.sm2_defect <= predicted
    assert report.sm4_delta <= math.prod(q.sm4_delta for q in parts)
    if epsilon is not None:
        if not 0 < epsilon < 1:
            raise ChartError("epsilon must lie in (0, 1)")
        eta = product_eta(epsilon, len(charts))
        if all(float(q.epsilon) <= eta for q in parts):
            assert report.sm2_defect <= epsilon and report.sm3_separation >= 1 - epsilon
    return result


def extend_by_identity(chart: Chart, extra: Sequence) -> Chart:
    """Append elements mapped to the identity transformation."""
    extra = list(extra)
    for x in extra:
        chart.monoid.check(x)
    if len(set(extra)) != len(extra) or set(extra) & set(chart.elements):
        raise ChartError("extra elements must be new and distinct")
    ident = Transformation.identity(chart.d)
    return Chart(chart.monoid, chart.elements + tuple(extra),
                 chart.sigma + (ident,) * len(extra), chart.identity, chart.seed)


# -- idempotent obstruction -------------------------------------------------


@dataclass(frozen=True)
class ObstructionCertificate:
    element: str
    d: int
    fixed_count: int        # |D'|
    stable_count: int       # |D''|
    witness_point: int | None
    witness_fiber: int | None
    implied_delta: int      # ceil(|D''| / |D'|)

    @property
    def sm2_mass(self) -> int:
        """Points where ``sigma(e)`` and ``sigma(e)^2`` disagree."""
        return self.d - self.stable_count

    @property
    def sm3_agreement(self) -> int:
        """Points where ``sigma(e)`` agrees with the identity."""
        return self.fixed_count

    @property
    def epsilon(self) -> Fraction:
        return Fraction(max(self.sm2_mass, self.sm3_agreement), self.d)

    @property
    def tension(self) -> Fraction | None:
        """``(1 - eps) / eps``: the fiber bound forced at the chart's own level."""
        eps = self.epsilon
        return None if eps == 0 else (1 - eps) / eps

    def to_json(self) -> dict:
        tension = self.tension
        return {
            "element": self.element,
            "d": self.d,
            "fixed_count": self.fixed_count,
            "stable_count": self.stable_count,
            "witness_point": self.witness_point,
            "witness_fiber": self.witness_fiber,
            "implied_delta": self.implied_delta,
            "sm2_mass": self.sm2_mass,
            "sm3_agreement": self.sm3_agreement,
            "epsilon": fraction_str(self.epsilon),
            "tension": None if tension is None else fraction_str(tension),
        }


def idempotent_obstruction(chart: Chart, index: int, monoid: Monoid | None = None
                           ) -> ObstructionCertificate:
    monoid = monoid or chart.monoid
    e = chart.elements[index]
    if e == monoid.identity():
        raise ChartError("the identity is a trivial idempotent")
    if monoid.multiply(e, e) != e:
        raise ChartError(f"{monoid.label(e)} is not idempotent")
    f = chart.sigma[index]
    w = idempotent_fiber_witness(f)
    if w is None:
        n_fixed = int(np.count_nonzero(f.image == np.arange(f.d)))
        return ObstructionCertificate(monoid.label(e), f.d, n_fixed, 0, None, None, 1)
    cert = ObstructionCertificate(monoid.label(e), f.d, w.fixed_count, w.stable_count,
                                  w.point, w.fiber, w.bound)
    if cert.tension is not None:
        assert cert.implied_delta >= cert.tension
    return cert


# -- bicyclic search --------------------------------------------------------


BICYCLIC_K = (Bicyclic().identity(), P, Q, Bicyclic().multiply(Q, P))
STAGNATION_RESTART = 500


@dataclass(frozen=True)
class SearchResult:
    chart: Chart
    report: QualityReport
    trace: tuple[tuple[Fraction, Fraction], ...]   # best (sm2_defect, sm3_separation) per step

    def to_json(self) -> dict:
        return {
            "chart": self.chart.to_json(),
            "report": self.report.to_json(),
            "trace": [[fraction_str(a), fraction_str(b)] for a, b in self.trace],
        }


def _bicyclic_chart(f: np.ndarray, g: np.ndarray, seed) -> Chart:
    d = f.size
    sigma = [Transformation.identity(d), Transformation(f), Transformation(g),
             Transformation(g[f])]
    return Chart(Bicyclic(), BICYCLIC_K, sigma, 0, seed)


def _search_counts(f, g, pairs):
    d = f.size
    maps = [np.arange(d), f, g, g[f]]
    defect = max(int(np.count_nonzero(maps[k] != maps[i][maps[j]])) for i, j, k in pairs)
    sep = min(int(np.count_nonzero(maps[i] != maps[j])) for i in range(4) for j in range(i + 1, 4))
    return defect, sep


def _search_key(defect, sep, budget_count):
    if defect <= budget_count:
        return (1, sep, -defect)
    return (0, -defect, sep)


def bicyclic_chart_search(d: int, iterations: int, seed: int,
                          budget: Fraction = Fraction(1, 10)) -> SearchResult:
    """Local search for a chart of ``{1, p, q, qp}`` in the bicyclic monoid.

    Objective: maximize SM3 separation among charts whose SM2 defect is
    within ``budget``; infeasible charts rank below feasible ones and are
    compared by defect. Each walk starts from a random permutation
    ``sigma(p)`` with ``sigma(q)`` its inverse. Moves mutate one image entry of ``sigma(p)`` or
    ``sigma(q)``; ``sigma(qp)`` is always ``sigma(q) o sigma(p)``. The walk
    restarts from a fresh random pair after 500 steps in which the current
    walk does not strictly improve.
    """
    rng = np.random.default_rng(seed)
    pairs = covered_pairs(Bicyclic(), BICYCLIC_K)
    budget_count = math.floor(budget * d)

    def fresh():
        # A random permutation and its inverse: feasible (defect 0) but with
        # sigma(qp) = Id, so all separation has to be bought with defect.
        f = rng.permutation(d)
        return f, np.argsort(f)

    f, g = fresh()
    cur = _search_key(*_search_counts(f, g, pairs), budget_count)
    best_fg, best, best_counts = (f.copy(), g.copy()), cur, _search_counts(f, g, pairs)
    trace = [(Fraction(best_counts[0], d), Fraction(best_counts[1], d))]
    stagnant = 0
    for _ in range(iterations):
        which, v, val = int(rng.integers(2)), int(rng.integers(d)), int(rng.integers(d))
        target = f if which == 0 else g
        old = int(target[v])
        target[v] = val
        counts = _search_counts(f, g, pairs)
        key = _search_key(*counts, budget_count)
        if key > cur:
            stagnant = 0
        else:
            stagnant += 1
        if key >= cur:
            cur = key
        else:
            target[v] = old
        if cur > best:
            best, best_counts, best_fg = cur, _search_counts(f, g, pairs), (f.copy(), g.copy())
        elif stagnant >= STAGNATION_RESTART:
            f, g = fresh()
            cur = _search_key(*_search_counts(f, g, pairs), budget_count)
            stagnant = 0
        trace.append((Fraction(best_counts[0], d), Fraction(best_counts[1], d)))
    chart = _bicyclic_chart(best_fg[0], best_fg[1], seed)
    return SearchResult(chart, quality_with_obstructions(chart), tuple(trace))


def merge_search_results(results: Sequence[SearchResult],
                         budget: Fraction = Fraction(1, 10)) -> SearchResult:
    """Best result by objective; earlier shards win ties."""
    def key(r):
        return _search_key(r.report.sm2_defect, r.report.sm3_separation, budget)
    best = results[0]
    for r in results[1:]:
        if key(r) > key(best):
            best = r
    return best


def load_chart(path, monoid: Monoid | None = None) -> Chart:
    path = Path(path)
    return Chart.from_json(json.loads(path.read_text()), monoid, base_dir=path.parent)


__all__ = [
    "Chart", "ChartError", "CarrierCapError", "QualityReport", "ObstructionCertificate",
    "SearchResult", "quality", "quality_with_obstructions", "cyclic_chart",
    "saturating_chart", "polynomial_chart", "random_perm_chart", "regular_chart",
    "product_chart", "extend_by_identity", "idempotent_obstruction",
    "bicyclic_chart_search", "merge_search_results", "load_chart", "covered_pairs",
    "fraction_str", "parse_fraction", "MonoidError",
]
