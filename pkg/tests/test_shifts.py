import itertools

import numpy as np
import pytest

from soficlab.monoids import (
    FiniteMonoid,
    IntAdd,
    MonoidError,
    boolean_monoid,
    cyclic_group,
    full_transformation_monoid,
)
from soficlab.shifts import (
    SFT,
    CellularAutomaton,
    ConfigCapError,
    FullMap,
    MissingInputError,
    Pattern,
    all_configurations,
    ca_apply_window,
    ca_full_map,
    check_equivariance,
    enumerate_rules,
    golden_mean,
    identity_ca,
    local_language,
    local_rule_from_map,
    product_memory,
    shift_table,
    subshift_mask,
)


def small_monoids():
    """Every monoid table of order <= 3, plus a few of order 4."""
    out = []
    for n in (1, 2, 3):
        for flat in itertools.product(range(n), repeat=n * n):
            try:
                out.append(FiniteMonoid(np.array(flat).reshape(n, n)))
            except MonoidError:
                pass
    out += [cyclic_group(4), full_transformation_monoid(2)]
    return out


# -- languages --------------------------------------------------------------


def test_full_shift_language():
    sft = SFT(IntAdd(), 3)
    lang = local_language(sft, [0, 1, 5])
    assert len(lang.patterns) == 27
    assert sft.is_full_shift


def test_golden_mean_language():
    lang = local_language(golden_mean(), [0, 1])
    assert sorted(lang.patterns) == [(0, 0), (0, 1), (1, 0)]
    assert lang.mode == "local"


def test_golden_mean_translates_by_right_multiplication():
    # On support {0, 2} no translate of {0, 1} fits, so nothing is excluded.
    assert len(local_language(golden_mean(), [0, 2]).patterns) == 4
    # On {0, 1, 2} both translates {0,1} and {1,2} fit.
    assert len(local_language(golden_mean(), [0, 1, 2]).patterns) == 5


def test_exact_language_boolean_monoid():
    M = boolean_monoid()
    sft = SFT(M, 2, [Pattern((0,), (1,))])
    lang = local_language(sft, [1, 0], exact=True)
    assert lang.mode == "exact"
    assert len(lang.patterns) == 2


def test_exact_language_inside_local():
    rng = np.random.default_rng(5)
    for M in small_monoids():
        for _ in range(3):
            sup = rng.choice(M.order, size=int(rng.integers(1, M.order + 1)), replace=False)
            pats = [Pattern(tuple(int(s) for s in sup), tuple(int(v) for v in rng.integers(0, 2, len(sup))))]
            sft = SFT(M, 2, pats)
            F = list(M.elements())
            exact = set(local_language(sft, F, exact=True).patterns)
            local = set(local_language(sft, F).patterns)
            assert exact <= local


def test_exact_language_matches_configs():
    M = full_transformation_monoid(2)
    sft = SFT(M, 2, [Pattern((0, 3), (1, 0))])
    mask = subshift_mask(sft)
    configs = all_configurations(2, M.order)
    assert all(mask[i] == sft.contains_config(c) for i, c in enumerate(configs))


def test_sft_json_roundtrip():
    sft = golden_mean()
    data = sft.to_json()
    assert data["forbidden"] == [{"support": ["0", "1"], "values": [1, 1]}]
    back = SFT.from_json(data, IntAdd())
    assert back.forbidden == sft.forbidden


def test_pattern_rejects_bad_values():
    with pytest.raises(ValueError):
        SFT(IntAdd(), 2, [Pattern((0,), (2,))])
    with pytest.raises(ValueError):
        Pattern((0, 0), (1, 1))


# -- cellular automata ------------------------------------------------------


def test_identity_window():
    Z = IntAdd()
    x = {m: m % 2 for m in range(-3, 4)}
    assert ca_apply_window(identity_ca(Z, 2), Z, x, [0, 1, 2]) == [0, 1, 0]


def test_xor_window():
    Z = IntAdd()
    x = dict(zip(range(6), [0, 1, 1, 0, 0, 1]))
    xor = CellularAutomaton(2, (0, 1), (0, 1, 1, 0))
    assert ca_apply_window(xor, Z, x, range(5)) == [x[m] ^ x[m + 1] for m in range(5)]
    with pytest.raises(MissingInputError):
        ca_apply_window(xor, Z, x, [5])


def test_constant_rule_window():
    zero = CellularAutomaton(2, (0, 1), (0, 0, 0, 0))
    x = {m: 1 for m in range(5)}
    assert ca_apply_window(zero, IntAdd(), x, range(4)) == [0] * 4


def test_rule_index_big_endian():
    ca = CellularAutomaton(3, (0, 1), tuple(v % 3 for v in range(9)))
    assert ca.rule_index([2, 1]) == 7
    with pytest.raises(ValueError):
        CellularAutomaton(2, (0,), (0, 1, 0))


def test_identity_ca_bijective():
    M = full_transformation_monoid(2)
    tau = ca_full_map(M, identity_ca(M, 2))
    assert tau.is_injective() and tau.is_surjective()


def test_projection_not_injective():
    M = boolean_monoid()
    proj = CellularAutomaton(2, (0, 1), (0, 0, 1, 1))   # mu(x(0), x(1)) = x(0)
    tau = ca_full_map(M, proj)
    assert tau.image_size == 2 and not tau.is_injective()


def test_non_equivariant_map():
    M = boolean_monoid()
    table = np.arange(4)
    table[[1, 2]] = table[[2, 1]]   # swap x=(1,0) and x=(0,1) by index
    tau = FullMap(2, table)
    assert not check_equivariance(M, tau)
    assert check_equivariance(M, FullMap(2, np.arange(4)))


def test_shift_convention():
    M = full_transformation_monoid(2)
    configs = all_configurations(2, M.order)
    for m in M.elements():
        shift = shift_table(M, 2, m)
        for i, x in enumerate(configs):
            y = configs[shift[i]]
            assert all(y[mp] == x[M.multiply(mp, m)] for mp in M.elements())


def test_config_cap():
    M = cyclic_group(4)
    with pytest.raises(ConfigCapError):
        ca_full_map(M, identity_ca(M, 3), cap=50)


@pytest.mark.parametrize("M", small_monoids(), ids=lambda M: f"n{M.order}")
def test_surjunctive_and_equivariant(M):
    for size in (1, 2):
        for memory in itertools.combinations(M.elements(), min(size, M.order)):
            for rule in enumerate_rules(2, len(memory)):
                tau = ca_full_map(M, CellularAutomaton(2, memory, rule))
                assert check_equivariance(M, tau)
                if tau.is_injective():
                    assert tau.is_surjective()


def test_composition_memory():
    rng = np.random.default_rng(2)
    for M in [boolean_monoid(), full_transformation_monoid(2), cyclic_group(3)]:
        for _ in range(20):
            m1 = tuple(int(s) for s in rng.choice(M.order, size=2, replace=False))
            m2 = tuple(int(s) for s in rng.choice(M.order, size=2, replace=False))
            c1 = CellularAutomaton(2, m1, tuple(int(v) for v in rng.integers(0, 2, 4)))
            c2 = CellularAutomaton(2, m2, tuple(int(v) for v in rng.integers(0, 2, 4)))
            t1, t2 = ca_full_map(M, c1), ca_full_map(M, c2)
            comp = t1 @ t2
            mem = product_memory(M, c1.memory, c2.memory)
            rebuilt = ca_full_map(M, local_rule_from_map(M, comp, mem))
            assert np.array_equal(rebuilt.table, comp.table)
