"""Concrete monoids: finite tables, bicyclic normal forms, polynomial
composition, free words, additive integers and finite direct products.

Every monoid exposes the same small surface (``identity``, ``multiply``,
``label``/``parse``) so charts, subshifts and cellular automata can treat
them uniformly. Infinite monoids are only ever explored through
:class:`MonoidFragment` windows.
"""
from __future__ import annotations

import itertools
import json
import re
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Hashable, Iterable, NamedTuple, Sequence

import numpy as np

Element = Hashable

ASSOCIATIVITY_CHECK_LIMIT = 64
DEFAULT_FRAGMENT_CAP = 100_000


class MonoidError(ValueError):
    pass


class NotAssociativeError(MonoidError):
    def __init__(self, triple):
        self.triple = tuple(int(t) for t in triple)
        x, y, z = self.triple
        super().__init__(f"table is not associative: ({x}*{y})*{z} != {x}*({y}*{z})")


class FragmentCapError(MonoidError):
    def __init__(self, cap):
        self.cap = cap
        super().__init__(f"fragment exceeds size cap of {cap} elements")


class Monoid:
    """Base class; subclasses define the element representation."""

    descriptor = "?"
    finite = False

    def identity(self) -> Element:
        raise NotImplementedError

    def multiply(self, x: Element, y: Element) -> Element:
        raise NotImplementedError

    def contains(self, x: Element) -> bool:
        raise NotImplementedError

    def label(self, x: Element) -> str:
        return str(x)

    def parse(self, text: str) -> Element:
        raise NotImplementedError

    def solve_right(self, s: Element, f: Element) -> list[Element] | None:
        """All ``g`` with ``s * g == f``, or ``None`` when not computable."""
        return None

    def power(self, x: Element, k: int) -> Element:
        result = self.identity()
        for _ in range(k):
            result = self.multiply(result, x)
        return result

    def check(self, x: Element) -> Element:
        if not self.contains(x):
            raise MonoidError(f"{x!r} is not an element of {self.descriptor}")
        return x

    def __eq__(self, other):
        return type(self) is type(other) and self.descriptor == other.descriptor

    def __hash__(self):
        return hash((type(self).__name__, self.descriptor))

    def __repr__(self):
        return f"<monoid {self.descriptor}>"


# -- finite tables ----------------------------------------------------------


class FiniteMonoid(Monoid):
    """A monoid given by its multiplication table on ``0..n-1``."""

    finite = True

    def __init__(self, table, identity: int | None = None, labels: Sequence[str] | None = None,
                 name: str | None = None):
        arr = np.array(table, dtype=np.int64)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] == 0:
            raise MonoidError("multiplication table must be a non-empty square matrix")
        n = arr.shape[0]
        if arr.min() < 0 or arr.max() >= n:
            raise MonoidError("table entries must lie in 0..n-1")
        rng = np.arange(n)
        if identity is None:
            found = [e for e in range(n)
                     if np.array_equal(arr[e], rng) and np.array_equal(arr[:, e], rng)]
            if not found:
                raise MonoidError("table has no identity element")
            identity = found[0]
        elif not (0 <= identity < n and np.array_equal(arr[identity], rng)
                  and np.array_equal(arr[:, identity], rng)):
            raise MonoidError(f"element {identity} is not an identity")
        if n <= ASSOCIATIVITY_CHECK_LIMIT:
            bad = _associativity_violation(arr)
            if bad is not None:
                raise NotAssociativeError(bad)
        arr.flags.writeable = False
        self.table = arr
        self.order = n
        self.identity_index = int(identity)
        if labels is not None and len(labels) != n:
            raise MonoidError("labels must match the table order")
        self.labels = tuple(labels) if labels is not None else tuple(str(i) for i in range(n))
        self.descriptor = name or "finite:" + json.dumps(arr.tolist(), separators=(",", ":"))

    def identity(self):
        return self.identity_index

    def multiply(self, x, y):
        return int(self.table[x, y])

    def contains(self, x):
        return isinstance(x, (int, np.integer)) and 0 <= x < self.order

    def elements(self) -> range:
        return range(self.order)

    def label(self, x):
        return self.labels[x]

    def parse(self, text):
        text = text.strip()
        if text in self.labels:
            return self.labels.index(text)
        try:
            x = int(text)
        except ValueError:
            raise MonoidError(f"unknown element label {text!r}") from None
        return self.check(x)

    def solve_right(self, s, f):
        return [int(g) for g in np.flatnonzero(self.table[s] == f)]

    def to_json(self) -> dict:
        return {"table": self.table.tolist(), "identity": self.identity_index,
                "labels": list(self.labels)}


def _associativity_violation(table: np.ndarray):
    n = table.shape[0]
    idx = np.arange(n)
    left = table[table[:, :, None], idx[None, None, :]]   # (x*y)*z
    right = table[idx[:, None, None], table[None, :, :]]  # x*(y*z)
    bad = np.argwhere(left != right)
    return None if len(bad) == 0 else bad[0]


def cyclic_group(n: int) -> FiniteMonoid:
    idx = np.arange(n)
    return FiniteMonoid((idx[:, None] + idx[None, :]) % n, 0, name=f"zmod:{n}")


def boolean_monoid() -> FiniteMonoid:
    """The multiplicative monoid {0, 1}."""
    return FiniteMonoid([[0, 0], [0, 1]], 1, name="bool")


def full_transformation_monoid(n: int) -> FiniteMonoid:
    """``Map({0..n-1})`` as a table; element ``i`` is the map whose image,
    read as base-``n`` digits (most significant first), encodes ``i``.
    Composition is ``(f*g)(v) = f(g(v))``."""
    maps = list(itertools.product(range(n), repeat=n))
    index = {m: i for i, m in enumerate(maps)}
    table = [[index[tuple(f[g[v]] for v in range(n))] for g in maps] for f in maps]
    labels = ["(" + ",".join(map(str, m)) + ")" for m in maps]
    return FiniteMonoid(table, index[tuple(range(n))], labels, name=f"trans:{n}")


def load_table(path: str | Path) -> FiniteMonoid:
    data = json.loads(Path(path).read_text())
    if isinstance(data, list):
        data = {"table": data}
    return FiniteMonoid(data["table"], data.get("identity"), data.get("labels"),
                        name=f"finite:{path}")


def find_nontrivial_idempotent(monoid: FiniteMonoid) -> int | None:
    """Return the first ``e`` with ``e*e == e`` and ``e != 1``, or ``None``.

    The scan is cross-checked against the power construction: any
    non-invertible element yields an idempotent power.
    """
    e_scan = next((e for e in monoid.elements()
                   if e != monoid.identity_index and monoid.table[e, e] == e), None)
    non_invertible = [a for a in monoid.elements() if _inverse(monoid, a) is None]
    if non_invertible:
        derived = frobenius_idempotent(monoid, non_invertible[0])
        if e_scan is None or derived.idempotent == monoid.identity_index:
            raise AssertionError("scan and power construction disagree")
    elif e_scan is not None:
        raise AssertionError("a group cannot have a non-trivial idempotent")
    return e_scan


def idempotents(monoid: FiniteMonoid) -> list[int]:
    return [e for e in monoid.elements() if monoid.table[e, e] == e]


class FrobeniusTrace(NamedTuple):
    element: int
    index: int      # first exponent m with a^m = a^(m+t)
    period: int     # t
    exponent: int   # m*t
    idempotent: int


def frobenius_idempotent(monoid: FiniteMonoid, a: int) -> FrobeniusTrace:
    """Derive the idempotent power ``a^(m*t)`` from the eventual period of ``a``."""
    seen = {}
    power, k = a, 1
    while power not in seen:
        seen[power] = k
        power, k = monoid.multiply(power, a), k + 1
    m = seen[power]
    t = k - m
    e = monoid.power(a, m * t)
    if monoid.multiply(e, e) != e:
        raise AssertionError(f"a^{m * t} is not idempotent")
    return FrobeniusTrace(a, m, t, m * t, e)


def _inverse(monoid: FiniteMonoid, a: int) -> int | None:
    one = monoid.identity_index
    for b in monoid.elements():
        if monoid.table[a, b] == one and monoid.table[b, a] == one:
            return b
    return None


def is_group(monoid: FiniteMonoid) -> bool:
    return all(_inverse(monoid, a) is not None for a in monoid.elements())


# -- additive integers ------------------------------------------------------


class IntAdd(Monoid):
    descriptor = "int-add"

    def identity(self):
        return 0

    def multiply(self, x, y):
        return x + y

    def contains(self, x):
        return isinstance(x, int)

    def parse(self, text):
        try:
            return int(text)
        except ValueError:
            raise MonoidError(f"not an integer: {text!r}") from None

    def solve_right(self, s, f):
        return [f - s]


class NatAdd(IntAdd):
    descriptor = "nat-add"

    def contains(self, x):
        return isinstance(x, int) and x >= 0

    def parse(self, text):
        return self.check(super().parse(text))

    def solve_right(self, s, f):
        return [f - s] if f >= s else []


# -- bicyclic monoid --------------------------------------------------------


class BicyclicElement(NamedTuple):
    """The normal form ``q^a p^b`` of the bicyclic monoid ``<p, q | pq = 1>``."""
    a: int
    b: int


P = BicyclicElement(0, 1)
Q = BicyclicElement(1, 0)

_BICYCLIC_TOKEN = re.compile(r"([pq])(?:\^(\d+))?")


class Bicyclic(Monoid):
    descriptor = "bicyclic"

    def identity(self):
        return BicyclicElement(0, 0)

    def multiply(self, x, y):
        a, b = x
        c, d = y
        t = min(b, c)
        return BicyclicElement(a + c - t, b + d - t)

    def contains(self, x):
        return (isinstance(x, tuple) and len(x) == 2
                and all(isinstance(v, int) and v >= 0 for v in x))

    def label(self, x):
        if x == (0, 0):
            return "1"
        out = ""
        for sym, k in (("q", x[0]), ("p", x[1])):
            if k == 1:
                out += sym
            elif k > 1:
                out += f"{sym}^{k}"
        return out

    def parse(self, text):
        text = text.replace(" ", "").replace("*", "")
        if text in ("1", "e", ""):
            return self.identity()
        pos, result = 0, self.identity()
        for match in _BICYCLIC_TOKEN.finditer(text):
            if match.start() != pos:
                break
            gen = P if match.group(1) == "p" else Q
            result = self.multiply(result, self.power(gen, int(match.group(2) or 1)))
            pos = match.end()
        if pos != len(text):
            raise MonoidError(f"cannot parse bicyclic word {text!r}")
        return result

    def solve_right(self, s, f):
        a, b = s
        x, y = f
        out = []
        # g = (c, d) with c >= b: product is (a + c - b, d)
        if x >= a:
            out.append(BicyclicElement(x - a + b, y))
        # c < b: product is (a, b + d - c)
        if x == a:
            out.extend(BicyclicElement(c, y - b + c) for c in range(b) if y - b + c >= 0)
        return out


def reduce_bicyclic_word(word: str) -> BicyclicElement:
    """Rewrite ``pq -> 1`` to a fixed point; used as an oracle for the
    normal-form product."""
    while "pq" in word:
        word = word.replace("pq", "")
    a = len(word) - len(word.lstrip("q"))
    rest = word[a:]
    assert set(rest) <= {"p"}
    return BicyclicElement(a, len(rest))


# -- integer polynomials under composition ----------------------------------


@dataclass(frozen=True)
class IntPolynomial:
    """Integer polynomial, coefficients listed from the constant term up."""

    coeffs: tuple[int, ...]

    def __post_init__(self):
        c = tuple(int(v) for v in self.coeffs)
        while len(c) > 1 and c[-1] == 0:
            c = c[:-1]
        object.__setattr__(self, "coeffs", c or (0,))

    @classmethod
    def x(cls) -> IntPolynomial:
        return cls((0, 1))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1 if self.coeffs != (0,) else -1

    def __add__(self, other):
        n = max(len(self.coeffs), len(other.coeffs))
        a = self.coeffs + (0,) * (n - len(self.coeffs))
        b = other.coeffs + (0,) * (n - len(other.coeffs))
        return IntPolynomial(tuple(x + y for x, y in zip(a, b)))

    def __mul__(self, other):
        out = [0] * (len(self.coeffs) + len(other.coeffs) - 1)
        for i, x in enumerate(self.coeffs):
            for j, y in enumerate(other.coeffs):
                out[i + j] += x * y
        return IntPolynomial(tuple(out))

    def compose(self, inner: IntPolynomial) -> IntPolynomial:
        """``self(inner(X))`` by Horner's rule."""
        result = IntPolynomial((self.coeffs[-1],))
        for c in reversed(self.coeffs[:-1]):
            result = result * inner + IntPolynomial((c,))
        return result

    def __call__(self, value: int) -> int:
        result = 0
        for c in reversed(self.coeffs):
            result = result * value + c
        return result

    def evaluate_mod(self, values: np.ndarray, p: int) -> np.ndarray:
        result = np.zeros_like(values)
        for c in reversed(self.coeffs):
            result = (result * values + c % p) % p
        return result

    def reduce_mod(self, p: int) -> IntPolynomial:
        return IntPolynomial(tuple(c % p for c in self.coeffs))

    def __str__(self):
        if self.coeffs == (0,):
            return "0"
        terms = []
        for k in range(len(self.coeffs) - 1, -1, -1):
            c = self.coeffs[k]
            if c == 0:
                continue
            mono = "" if k == 0 else ("X" if k == 1 else f"X^{k}")
            if k == 0:
                body = str(abs(c))
            elif abs(c) == 1:
                body = mono
            else:
                body = f"{abs(c)}{mono}"
            sign = "-" if c < 0 else "+"
            terms.append((sign, body))
        first_sign, first = terms[0]
        out = ("-" if first_sign == "-" else "") + first
        for sign, body in terms[1:]:
            out += sign + body
        return out


_POLY_TERM = re.compile(r"([+-]?)(\d*)(\*?X(?:\^(\d+))?)?")


def parse_polynomial(text: str) -> IntPolynomial:
    text = text.replace(" ", "").replace("x", "X")
    if not text:
        raise MonoidError("empty polynomial")
    coeffs: dict[int, int] = {}
    pos = 0
    while pos < len(text):
        m = _POLY_TERM.match(text, pos)
        if not m or m.end() == pos or (not m.group(2) and not m.group(3)):
            raise MonoidError(f"cannot parse polynomial {text!r}")
        if pos > 0 and not m.group(1):
            raise MonoidError(f"cannot parse polynomial {text!r}")
        sign = -1 if m.group(1) == "-" else 1
        coef = int(m.group(2)) if m.group(2) else 1
        power = 0 if not m.group(3) else int(m.group(4) or 1)
        coeffs[power] = coeffs.get(power, 0) + sign * coef
        pos = m.end()
    top = max(coeffs)
    return IntPolynomial(tuple(coeffs.get(k, 0) for k in range(top + 1)))


class PolyComposition(Monoid):
    """Non-constant integer polynomials under composition; identity is ``X``."""

    descriptor = "polyZ"

    def identity(self):
        return IntPolynomial.x()

    def multiply(self, x, y):
        if x.degree < 1 or y.degree < 1:
            raise MonoidError("constant polynomials are not elements of the composition monoid")
        return x.compose(y)

    def contains(self, x):
        return isinstance(x, IntPolynomial) and x.degree >= 1

    def label(self, x):
        return str(x)

    def parse(self, text):
        return self.check(parse_polynomial(text))


# -- free monoids -----------------------------------------------------------


class FreeMonoid(Monoid):
    """Words over ``k`` letters ``a, b, c, ...``; elements are int tuples."""

    def __init__(self, k: int):
        if not 1 <= k <= 26:
            raise MonoidError("free monoid rank must be in 1..26")
        self.k = k
        self.descriptor = f"free:{k}"

    def generators(self) -> list[tuple[int, ...]]:
        return [(i,) for i in range(self.k)]

    def identity(self):
        return ()

    def multiply(self, x, y):
        return x + y

    def contains(self, x):
        return isinstance(x, tuple) and all(isinstance(i, int) and 0 <= i < self.k for i in x)

    def label(self, x):
        return "".join(chr(ord("a") + i) for i in x) or "1"

    def parse(self, text):
        text = text.strip()
        if text in ("1", "e", ""):
            return ()
        return self.check(tuple(ord(ch) - ord("a") for ch in text))

    def solve_right(self, s, f):
        return [f[len(s):]] if f[:len(s)] == s else []


# -- direct products --------------------------------------------------------


class ProductMonoid(Monoid):
    def __init__(self, factors: Sequence[Monoid]):
        if not factors:
            raise MonoidError("product needs at least one factor")
        self.factors = tuple(factors)
        self.finite = all(f.finite for f in factors)
        self.descriptor = "product(" + ",".join(f.descriptor for f in factors) + ")"

    def identity(self):
        return tuple(f.identity() for f in self.factors)

    def multiply(self, x, y):
        return tuple(f.multiply(a, b) for f, a, b in zip(self.factors, x, y))

    def contains(self, x):
        return (isinstance(x, tuple) and len(x) == len(self.factors)
                and all(f.contains(a) for f, a in zip(self.factors, x)))

    def label(self, x):
        return "(" + ",".join(f.label(a) for f, a in zip(self.factors, x)) + ")"

    def parse(self, text):
        text = text.strip()
        if not (text.startswith("(") and text.endswith(")")):
            raise MonoidError(f"product element must be parenthesised: {text!r}")
        parts = split_top_level(text[1:-1])
        if len(parts) != len(self.factors):
            raise MonoidError(f"expected {len(self.factors)} components in {text!r}")
        return tuple(f.parse(p) for f, p in zip(self.factors, parts))

    def solve_right(self, s, f):
        per = [m.solve_right(a, b) for m, a, b in zip(self.factors, s, f)]
        if any(sol is None for sol in per):
            return None
        return [tuple(c) for c in itertools.product(*per)]


def split_top_level(text: str) -> list[str]:
    parts, depth, start = [], 0, 0
    for i, ch in enumerate(text):
        if ch in "([":
            depth += 1
        elif ch in ")]":
            depth -= 1
        elif ch == "," and depth == 0:
            parts.append(text[start:i])
            start = i + 1
    parts.append(text[start:])
    return [p.strip() for p in parts]


# -- descriptors ------------------------------------------------------------


def parse_descriptor(text: str, base_dir: str | Path | None = None) -> Monoid:
    """Build a monoid from its text descriptor.

    Grammar::

        descriptor := "int-add" | "nat-add" | "bicyclic" | "polyZ"
                    | "free:" k | "zmod:" n | "trans:" n | "bool"
                    | "finite:" (path | json-table)
                    | "product(" descriptor ("," descriptor)* ")"
    """
    text = text.strip()
    simple = {"int-add": IntAdd, "nat-add": NatAdd, "bicyclic": Bicyclic, "polyZ": PolyComposition}
    if text in simple:
        return simple[text]()
    if text == "bool":
        return boolean_monoid()
    if text.startswith("product(") and text.endswith(")"):
        return ProductMonoid([parse_descriptor(p, base_dir) for p in split_top_level(text[8:-1])])
    head, _, arg = text.partition(":")
    if head == "free":
        return FreeMonoid(int(arg))
    if head == "zmod":
        return cyclic_group(int(arg))
    if head == "trans":
        return full_transformation_monoid(int(arg))
    if head == "finite":
        if arg.lstrip().startswith("["):
            return FiniteMonoid(json.loads(arg))
        path = Path(arg)
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        return load_table(path)
    raise MonoidError(f"unknown monoid descriptor {text!r}")


# -- fragments --------------------------------------------------------------


class MonoidFragment:
    """A finite list of distinct elements with the products that stay inside."""

    def __init__(self, monoid: Monoid, elements: Iterable[Element]):
        elems = tuple(elements)
        index: dict = {}
        for i, x in enumerate(elems):
            monoid.check(x)
            if x in index:
                raise MonoidError(f"duplicate fragment element {monoid.label(x)}")
            index[x] = i
        if monoid.identity() not in index:
            raise MonoidError("fragment must contain the identity")
        self.monoid = monoid
        self.elements = elems
        self.index = index

    def __len__(self):
        return len(self.elements)

    def __contains__(self, x):
        return x in self.index

    @property
    def identity_index(self) -> int:
        return self.index[self.monoid.identity()]

    def product(self, i: int, j: int) -> int | None:
        return self.index.get(self.monoid.multiply(self.elements[i], self.elements[j]))

    @cached_property
    def products(self) -> dict[tuple[int, int], int]:
        """Every in-fragment product ``i*j = k`` as ``{(i, j): k}``."""
        out = {}
        n = len(self.elements)
        for i in range(n):
            for j in range(n):
                k = self.product(i, j)
                if k is not None:
                    out[i, j] = k
        return out

    def labels(self) -> list[str]:
        return [self.monoid.label(x) for x in self.elements]


def close_fragment(monoid: Monoid, generators: Sequence[Element], radius: int,
                   cap: int = DEFAULT_FRAGMENT_CAP) -> MonoidFragment:
    """Identity plus all products of at most ``radius`` generators, in
    breadth-first order with generators taken in the order given."""
    if radius < 0:
        raise MonoidError("radius must be non-negative")
    gens = [monoid.check(g) for g in generators]
    elems = [monoid.identity()]
    seen = set(elems)
    frontier = list(elems)
    for _ in range(radius):
        nxt = []
        for x in frontier:
            for g in gens:
                y = monoid.multiply(x, g)
                if y not in seen:
                    seen.add(y)
                    elems.append(y)
                    nxt.append(y)
                    if len(elems) > cap:
                        raise FragmentCapError(cap)
        frontier = nxt
    return MonoidFragment(monoid, elems)
