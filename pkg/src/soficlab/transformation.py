"""Self-maps of a finite carrier ``{0, ..., d-1}`` and the Hamming metric.

Hamming values are exact :class:`fractions.Fraction` objects so that
quality thresholds compare without rounding.
"""
from __future__ import annotations

import math
from fractions import Fraction
from typing import NamedTuple, Sequence

import numpy as np


class CarrierMismatch(ValueError):
    pass


class Transformation:
    """An immutable map ``v -> image[v]`` on ``{0, ..., d-1}``."""

    __slots__ = ("image",)

    def __init__(self, image):
        arr = np.array(image, dtype=np.int64).reshape(-1)
        if arr.size == 0:
            raise ValueError("carrier must be non-empty")
        if arr.min() < 0 or arr.max() >= arr.size:
            raise ValueError("image entries must lie in 0..d-1")
        arr.flags.writeable = False
        self.image = arr

    @classmethod
    def identity(cls, d: int) -> Transformation:
        return cls(np.arange(d))

    @classmethod
    def constant(cls, d: int, c: int) -> Transformation:
        return cls(np.full(d, c))

    @property
    def d(self) -> int:
        return self.image.size

    def __call__(self, v):
        return self.image[v]

    def __len__(self):
        return self.image.size

    def __eq__(self, other):
        return isinstance(other, Transformation) and np.array_equal(self.image, other.image)

    def __hash__(self):
        return hash(self.image.tobytes())

    def __repr__(self):
        if self.d <= 12:
            return f"Transformation({tuple(self.image.tolist())})"
        return f"Transformation(d={self.d})"

    def tolist(self) -> list[int]:
        return self.image.tolist()

    def is_identity(self) -> bool:
        return bool(np.array_equal(self.image, np.arange(self.d)))

    def fibers(self) -> np.ndarray:
        """``fibers()[v] == |f^{-1}(v)|``."""
        return np.bincount(self.image, minlength=self.d)


def _same_carrier(f: Transformation, g: Transformation):
    if f.d != g.d:
        raise CarrierMismatch(f"carrier sizes differ: {f.d} != {g.d}")


def compose(f: Transformation, g: Transformation) -> Transformation:
    """``(f o g)(v) = f(g(v))``."""
    _same_carrier(f, g)
    return Transformation(f.image[g.image])


def disagreements(f: Transformation, g: Transformation) -> int:
    _same_carrier(f, g)
    return int(np.count_nonzero(f.image != g.image))


def hamming(f: Transformation, g: Transformation) -> Fraction:
    """Normalized Hamming distance: fraction of points where ``f`` and ``g`` differ."""
    return Fraction(disagreements(f, g), f.d)


def product_embed(*factors: Transformation) -> Transformation:
    """Act coordinatewise on the product carrier.

    Product points are indexed lexicographically, the first factor being
    the most significant coordinate.
    """
    if not factors:
        raise ValueError("product_embed needs at least one factor")
    image = np.zeros(1, dtype=np.int64)
    for f in factors:
        image = (image[:, None] * f.d + f.image[None, :]).reshape(-1)
    return Transformation(image)


def product_index(coords: Sequence[int], sizes: Sequence[int]) -> int:
    idx = 0
    for c, n in zip(coords, sizes):
        idx = idx * n + c
    return idx


def max_fiber(f: Transformation) -> int:
    return int(f.fibers().max())


class FiberWitness(NamedTuple):
    point: int
    fiber: int
    fixed_count: int    # |D'|, points with f(v) = v
    stable_count: int   # |D''|, points with f(v) = f(f(v))

    @property
    def bound(self) -> int:
        """The pigeonhole lower bound ``ceil(|D''| / |D'|)``."""
        return math.ceil(self.stable_count / self.fixed_count)


def idempotent_fiber_witness(f: Transformation) -> FiberWitness | None:
    """A point of ``f(D'')`` whose fiber is at least ``|D''|/|D'|``.

    ``f`` maps ``D''`` into the fixed set ``D'``, so some fixed point
    receives at least the average share of ``D''``. Returns ``None`` when
    ``D''`` is empty.
    """
    img = f.image
    stable = img == img[img]
    n_stable = int(stable.sum())
    if n_stable == 0:
        return None
    n_fixed = int(np.count_nonzero(img == np.arange(f.d)))
    hits = np.bincount(img[stable], minlength=f.d)
    v = int(hits.argmax())
    witness = FiberWitness(v, int(f.fibers()[v]), n_fixed, n_stable)
    assert witness.fiber >= witness.bound
    return witness
