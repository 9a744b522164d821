import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from soficlab.transformation import (
    CarrierMismatch,
    Transformation,
    compose,
    hamming,
    idempotent_fiber_witness,
    max_fiber,
    product_embed,
    product_index,
)


@st.composite
def maps(draw, d=None, max_d=8):
    if d is None:
        d = draw(st.integers(1, max_d))
    return Transformation(draw(st.lists(st.integers(0, d - 1), min_size=d, max_size=d)))


@st.composite
def same_size(draw, count, max_d=8):
    d = draw(st.integers(1, max_d))
    return [draw(maps(d=d)) for _ in range(count)]


def test_compose_examples():
    f, g = Transformation([1, 2, 0]), Transformation([0, 0, 1])
    assert compose(f, g).tolist() == [1, 1, 2]
    assert compose(Transformation.identity(3), f) == f
    c1, c2 = Transformation.constant(5, 3), Transformation.constant(5, 1)
    assert compose(c1, c2) == c1


def test_carrier_mismatch():
    with pytest.raises(CarrierMismatch):
        compose(Transformation.identity(2), Transformation.identity(3))
    with pytest.raises(CarrierMismatch):
        hamming(Transformation.identity(2), Transformation.identity(3))


def test_invalid_images():
    with pytest.raises(ValueError):
        Transformation([0, 3, 1])
    with pytest.raises(ValueError):
        Transformation([])


def test_hamming_examples():
    f = Transformation([2, 0, 1, 1])
    assert hamming(f, f) == 0
    assert hamming(Transformation.identity(3), Transformation.constant(3, 0)) == Fraction(2, 3)
    assert isinstance(hamming(f, f), Fraction)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_hamming_metric_exhaustive(d):
    all_maps = [Transformation(t) for t in itertools.product(range(d), repeat=d)]
    for f, g, h in itertools.product(all_maps, repeat=3):
        assert hamming(f, h) <= hamming(f, g) + hamming(g, h)
    for f, g in itertools.product(all_maps, repeat=2):
        assert hamming(f, g) == hamming(g, f)
        assert (hamming(f, g) == 0) == (f == g)


@given(same_size(3, max_d=64))
def test_hamming_metric_random(fgh):
    f, g, h = fgh
    assert 0 <= hamming(f, g) <= 1
    assert hamming(f, h) <= hamming(f, g) + hamming(g, h)
    assert hamming(f, g) == hamming(g, f)


def test_product_embed_examples():
    ids = [Transformation.identity(n) for n in (2, 3, 4)]
    assert product_embed(*ids).is_identity()
    # d1 = 1/2 on 2 points, d2 = 1/3 on 3 points
    f1, g1 = Transformation([0, 1]), Transformation([0, 0])
    f2, g2 = Transformation([0, 1, 2]), Transformation([0, 1, 0])
    assert hamming(product_embed(f1, f2), product_embed(g1, g2)) == Fraction(2, 3)
    with pytest.raises(ValueError):
        product_embed()


def test_product_embed_coordinates():
    f, g = Transformation([1, 0]), Transformation([2, 2, 0])
    phi = product_embed(f, g)
    for x in range(2):
        for y in range(3):
            assert phi(product_index((x, y), (2, 3))) == product_index((f(x), g(y)), (2, 3))


def _brute_product_hamming(fs, gs):
    sizes = [f.d for f in fs]
    diff = 0
    for coords in itertools.product(*(range(n) for n in sizes)):
        if any(f(c) != g(c) for f, g, c in zip(fs, gs, coords)):
            diff += 1
    return Fraction(diff, math.prod(sizes))


@given(st.lists(same_size(2, max_d=6), min_size=1, max_size=3))
def test_hamming_product_formula(pairs):
    fs = [p[0] for p in pairs]
    gs = [p[1] for p in pairs]
    predicted = 1 - math.prod((1 - hamming(f, g) for f, g in pairs), start=Fraction(1))
    assert hamming(product_embed(*fs), product_embed(*gs)) == predicted
    assert _brute_product_hamming(fs, gs) == predicted


@given(st.lists(same_size(2, max_d=5), min_size=1, max_size=3))
def test_product_embed_is_morphism(pairs):
    fs = [p[0] for p in pairs]
    gs = [p[1] for p in pairs]
    lhs = product_embed(*(compose(f, g) for f, g in zip(fs, gs)))
    assert lhs == compose(product_embed(*fs), product_embed(*gs))


def test_max_fiber_examples():
    rng = np.random.default_rng(0)
    assert max_fiber(Transformation(rng.permutation(9))) == 1
    assert max_fiber(Transformation.constant(10, 4)) == 10
    assert max_fiber(Transformation([0, 0, 1, 1, 1])) == 3


@given(maps(max_d=40))
def test_fibers_sum_to_d(f):
    assert int(f.fibers().sum()) == f.d


def test_witness_examples():
    w = idempotent_fiber_witness(Transformation.constant(10, 7))
    assert (w.point, w.fiber, w.fixed_count, w.stable_count) == (7, 10, 1, 10)
    assert idempotent_fiber_witness(Transformation([1, 0, 3, 2])) is None


def _random_idempotent(rng, d, k):
    fixed = rng.choice(d, size=k, replace=False)
    image = rng.choice(fixed, size=d)
    image[fixed] = fixed
    return Transformation(image)


def test_witness_on_idempotents():
    rng = np.random.default_rng(11)
    for _ in range(300):
        d = int(rng.integers(1, 13))
        k = int(rng.integers(1, d + 1))
        f = _random_idempotent(rng, d, k)
        w = idempotent_fiber_witness(f)
        assert w.stable_count == d and w.fixed_count == k
        assert w.fiber >= math.ceil(d / k)


@given(maps(max_d=30))
def test_witness_bound_holds(f):
    w = idempotent_fiber_witness(f)
    img = f.image
    stable = np.flatnonzero(img == img[img])
    if stable.size == 0:
        assert w is None
        return
    assert f(w.point) == w.point
    assert w.point in set(img[stable].tolist())
    assert w.fiber == int(np.count_nonzero(img == w.point))
    assert w.fiber >= w.bound


def test_values_immutable():
    f = Transformation([0, 1])
    with pytest.raises(ValueError):
        f.image[0] = 1
    assert hash(f) == hash(Transformation([0, 1]))
