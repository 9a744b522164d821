"""Patterns, subshifts of finite type and cellular automata over monoids.

Conventions used throughout:

* the shift acts by ``(m x)(m') = x(m' m)``, so a pattern ``p`` with
  support ``S`` occurs in ``x`` at ``g`` when ``x(s g) = p(s)`` for all ``s``;
* a local rule table is indexed by the mixed-radix value of the memory
  pattern, the first memory element being the most significant digit;
* a configuration of a finite monoid ``M = {0..n-1}`` is indexed by
  ``sum(x[m] * a**m)``, element ``0`` being the least significant digit.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .monoids import FiniteMonoid, Monoid

DEFAULT_CONFIG_CAP = 2**20


class ConfigCapError(ValueError):
    def __init__(self, size, cap):
        self.size, self.cap = size, cap
        super().__init__(f"{size} configurations exceed the cap of {cap}")


class MissingInputError(KeyError):
    pass


@dataclass(frozen=True)
class Pattern:
    support: tuple
    values: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "support", tuple(self.support))
        object.__setattr__(self, "values", tuple(int(v) for v in self.values))
        if len(self.support) != len(self.values):
            raise ValueError("pattern needs one value per support element")
        if len(set(self.support)) != len(self.support):
            raise ValueError("pattern support entries must be distinct")

    def check_alphabet(self, a: int):
        if any(not 0 <= v < a for v in self.values):
            raise ValueError(f"pattern values must lie in 0..{a - 1}")


@dataclass(frozen=True)
class SFT:
    """Subshift of finite type: configurations avoiding every forbidden pattern."""

    monoid: Monoid
    alphabet: int
    forbidden: tuple[Pattern, ...] = ()

    def __post_init__(self):
        if self.alphabet < 1:
            raise ValueError("alphabet must be non-empty")
        object.__setattr__(self, "forbidden", tuple(self.forbidden))
        for p in self.forbidden:
            p.check_alphabet(self.alphabet)
            for s in p.support:
                self.monoid.check(s)

    @property
    def is_full_shift(self) -> bool:
        return not self.forbidden

    def contains_config(self, x: Sequence[int]) -> bool:
        """Membership of a configuration of a finite monoid."""
        M = self.monoid
        for p in self.forbidden:
            for g in M.elements():
                if all(x[M.multiply(s, g)] == v for s, v in zip(p.support, p.values)):
                    return False
        return True

    def to_json(self) -> dict:
        M = self.monoid
        return {
            "monoid": M.descriptor,
            "alphabet": self.alphabet,
            "forbidden": [{"support": [M.label(s) for s in p.support], "values": list(p.values)}
                          for p in self.forbidden],
        }

    @classmethod
    def from_json(cls, data: dict, monoid: Monoid) -> SFT:
        pats = [Pattern([monoid.parse(s) for s in f["support"]], f["values"])
                for f in data.get("forbidden", [])]
        return cls(monoid, int(data["alphabet"]), pats)


def golden_mean(monoid: Monoid | None = None) -> SFT:
    """Forbid two adjacent ones: the pattern ``(1, 1)`` on ``{0, 1}``."""
    from .monoids import IntAdd
    return SFT(monoid or IntAdd(), 2, [Pattern((0, 1), (1, 1))])


@dataclass(frozen=True)
class LocalLanguage:
    support: tuple
    patterns: tuple[tuple[int, ...], ...]
    mode: str               # "exact" or "local"
    unresolved: int = 0     # forbidden patterns whose translates fell back to a window

    def __len__(self):
        return len(self.patterns)

    def __contains__(self, q):
        return tuple(q) in set(self.patterns)

    @property
    def approximate(self) -> bool:
        return self.mode != "exact"


def _occurrence_translates(monoid: Monoid, p: Pattern, support: Sequence,
                           fallback: Iterable) -> tuple[set, bool]:
    """Candidate ``g`` for which ``p`` could sit inside ``support``."""
    s0 = p.support[0]
    found, resolved = set(), True
    for f in support:
        sols = monoid.solve_right(s0, f)
        if sols is None:
            resolved = False
            break
        found.update(sols)
    if not resolved:
        found = set(fallback)
    return found, resolved


def local_language(sft: SFT, support: Sequence, translates: Iterable | None = None,
                   exact: bool = False, cap: int = DEFAULT_CONFIG_CAP) -> LocalLanguage:
    """Patterns over ``support`` admitted by ``sft``.

    Local mode keeps every pattern in which no translate of a forbidden
    pattern lies entirely inside ``support`` and matches; this can only
    over-admit. Exact mode (finite monoids) restricts the genuine subshift.
    When a monoid cannot solve ``s g = f`` the translates are taken from
    ``translates`` (default: the support itself plus the identity) and the
    language records the fallback in ``unresolved``.
    """
    support = tuple(support)
    if len(set(support)) != len(support):
        raise ValueError("support entries must be distinct")
    if exact:
        return _exact_language(sft, support, cap)
    M, a = sft.monoid, sft.alphabet
    pos = {x: i for i, x in enumerate(support)}
    fallback = list(translates) if translates is not None else list(support) + [M.identity()]
    banned: list[dict[int, int]] = []
    unresolved = 0
    for p in sft.forbidden:
        gs, ok = _occurrence_translates(M, p, support, fallback)
        unresolved += not ok
        for g in sorted(gs, key=repr):
            need: dict[int, int] = {}
            for s, v in zip(p.support, p.values):
                i = pos.get(M.multiply(s, g))
                if i is None or need.get(i, v) != v:
                    break
                need[i] = v
            else:
                banned.append(need)
    keep = tuple(q for q in itertools.product(range(a), repeat=len(support))
                 if not any(all(q[i] == v for i, v in need.items()) for need in banned))
    return LocalLanguage(support, keep, "local", unresolved)


def all_configurations(a: int, n: int, cap: int = DEFAULT_CONFIG_CAP) -> np.ndarray:
    """Row ``c`` holds the digits of configuration index ``c`` (element 0 first)."""
    size = a**n
    if size > cap:
        raise ConfigCapError(size, cap)
    idx = np.arange(size, dtype=np.int64)
    return (idx[:, None] // a ** np.arange(n, dtype=np.int64)[None, :]) % a


def config_index(digits: np.ndarray, a: int) -> np.ndarray:
    n = digits.shape[-1]
    return digits @ (a ** np.arange(n, dtype=np.int64))


def subshift_mask(sft: SFT, cap: int = DEFAULT_CONFIG_CAP) -> np.ndarray:
    M = sft.monoid
    if not isinstance(M, FiniteMonoid):
        raise TypeError("exact admissibility needs a finite monoid")
    configs = all_configurations(sft.alphabet, M.order, cap)
    ok = np.ones(len(configs), dtype=bool)
    for p in sft.forbidden:
        vals = np.array(p.values)
        for g in M.elements():
            cols = [M.multiply(s, g) for s in p.support]
            ok &= ~np.all(configs[:, cols] == vals, axis=1)
    return ok


def _exact_language(sft: SFT, support: tuple, cap: int) -> LocalLanguage:
    configs = all_configurations(sft.alphabet, sft.monoid.order, cap)
    mask = subshift_mask(sft, cap)
    rows = {tuple(r) for r in configs[mask][:, list(support)].tolist()}
    return LocalLanguage(support, tuple(sorted(rows)), "exact")


# -- cellular automata ------------------------------------------------------


@dataclass(frozen=True)
class CellularAutomaton:
    """``tau(x)(m) = rule[pattern s -> x(s m) over the memory set]``."""

    alphabet: int
    memory: tuple
    rule: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "memory", tuple(self.memory))
        object.__setattr__(self, "rule", tuple(int(v) for v in self.rule))
        if not self.memory:
            raise ValueError("memory set must be non-empty")
        if len(set(self.memory)) != len(self.memory):
            raise ValueError("memory set entries must be distinct")
        if len(self.rule) != self.alphabet ** len(self.memory):
            raise ValueError(f"rule table needs {self.alphabet ** len(self.memory)} entries")
        if any(not 0 <= v < self.alphabet for v in self.rule):
            raise ValueError("rule outputs must be alphabet symbols")

    def rule_index(self, values: Sequence[int]) -> int:
        idx = 0
        for v in values:
            idx = idx * self.alphabet + int(v)
        return idx

    def local(self, values: Sequence[int]) -> int:
        return self.rule[self.rule_index(values)]

    def to_json(self, monoid: Monoid) -> dict:
        return {"alphabet": self.alphabet, "memory": [monoid.label(s) for s in self.memory],
                "rule": list(self.rule)}

    @classmethod
    def from_json(cls, data: dict, monoid: Monoid) -> CellularAutomaton:
        return cls(int(data["alphabet"]), [monoid.parse(s) for s in data["memory"]], data["rule"])


def identity_ca(monoid: Monoid, a: int) -> CellularAutomaton:
    return CellularAutomaton(a, (monoid.identity(),), tuple(range(a)))


def ca_apply_window(ca: CellularAutomaton, monoid: Monoid, values: Mapping,
                    window: Sequence) -> list[int]:
    """Evaluate ``tau(x)`` on ``window`` from the values of ``x`` near it."""
    out = []
    for m in window:
        local = []
        for s in ca.memory:
            sm = monoid.multiply(s, m)
            if sm not in values:
                raise MissingInputError(f"input window lacks {monoid.label(sm)}")
            local.append(values[sm])
        out.append(ca.local(local))
    return out


@dataclass(frozen=True, eq=False)
class FullMap:
    """A self-map of ``A^M`` tabulated over configuration indices."""

    alphabet: int
    table: np.ndarray

    @property
    def image_size(self) -> int:
        return int(np.unique(self.table).size)

    def is_injective(self) -> bool:
        return self.image_size == self.table.size

    def is_surjective(self) -> bool:
        return self.image_size == self.table.size

    def __matmul__(self, other: FullMap) -> FullMap:
        """``self o other``."""
        return FullMap(self.alphabet, self.table[other.table])


def ca_full_map(monoid: FiniteMonoid, ca: CellularAutomaton,
                cap: int = DEFAULT_CONFIG_CAP) -> FullMap:
    a, n = ca.alphabet, monoid.order
    configs = all_configurations(a, n, cap)
    weights = a ** np.arange(len(ca.memory) - 1, -1, -1, dtype=np.int64)
    rule = np.array(ca.rule, dtype=np.int64)
    out = np.empty_like(configs)
    for m in monoid.elements():
        cols = [monoid.multiply(s, m) for s in ca.memory]
        out[:, m] = rule[configs[:, cols] @ weights]
    return FullMap(a, config_index(out, a))


def shift_table(monoid: FiniteMonoid, a: int, m: int, cap: int = DEFAULT_CONFIG_CAP) -> np.ndarray:
    """Index map of ``x -> m x`` where ``(m x)(m') = x(m' m)``."""
    configs = all_configurations(a, monoid.order, cap)
    cols = [monoid.multiply(mp, m) for mp in monoid.elements()]
    return config_index(configs[:, cols], a)


def check_equivariance(monoid: FiniteMonoid, tau: FullMap, cap: int = DEFAULT_CONFIG_CAP) -> bool:
    """``tau(m x) == m tau(x)`` for every element and configuration."""
    for m in monoid.elements():
        shift = shift_table(monoid, tau.alphabet, m, cap)
        if not np.array_equal(tau.table[shift], shift[tau.table]):
            return False
    return True


def local_rule_from_map(monoid: FiniteMonoid, tau: FullMap, memory: Sequence[int]
                        ) -> CellularAutomaton:
    """Read a local rule off ``tau`` at the identity, assuming ``tau(x)(1)``
    depends only on ``x`` restricted to ``memory``."""
    a = tau.alphabet
    memory = tuple(memory)
    one = monoid.identity()
    rule = []
    for values in itertools.product(range(a), repeat=len(memory)):
        idx = sum(v * a**s for s, v in zip(memory, values))
        rule.append(int(tau.table[idx] // a**one % a))
    return CellularAutomaton(a, memory, rule)


def product_memory(monoid: Monoid, outer: Sequence, inner: Sequence) -> tuple:
    """Memory set of ``tau_outer o tau_inner``: all ``t * s`` with ``t`` in
    the inner and ``s`` in the outer memory set, in first-seen order."""
    out: list = []
    for s in outer:
        for t in inner:
            x = monoid.multiply(t, s)
            if x not in out:
                out.append(x)
    return tuple(out)


def enumerate_rules(a: int, memory_size: int) -> Iterable[tuple[int, ...]]:
    return itertools.product(range(a), repeat=a**memory_size)
