import itertools
import math

import numpy as np
import pytest

from decoupling_lab import banach
from decoupling_lab.chaos import (
    GuardExceeded,
    decoupled_homogeneous,
    evaluate,
    evaluate_sliced,
    exact_l2,
    exact_modular,
    homogeneous_value,
    pin_decoupling_exponent,
    polarize,
    coupled_decoupled_families,
    sum_projection_gap,
    symmetrization_l2_pair,
    walsh_expand,
)
from decoupling_lab.multiindex import (
    CoefficientFamily,
    HomogeneousSlice,
    MultiIndex,
    is_symmetric,
    symmetrize,
)
from decoupling_lab.randsource import parse_spec, sample_matrix

SEED = 20260810


def random_family(rng, n, N, d, density=0.4):
    entries = {}
    for k in range(1, n + 1):
        for slots in itertools.combinations(range(1, n + 1), k):
            alpha = MultiIndex.from_slots(slots, n)
            for tup in itertools.permutations(range(1, N + 1), k):
                if rng.random() < density:
                    entries[(alpha, tup)] = rng.normal(size=d)
    return CoefficientFamily(n, N, d, entries, rng.normal(size=d))


def random_symmetric_slice(rng, k, N, d=1, density=1.0):
    table = {}
    for comb in itertools.combinations(range(1, N + 1), k):
        if rng.random() <= density:
            v = rng.normal(size=d)
            for perm in itertools.permutations(comb):
                table[perm] = v
    return HomogeneousSlice(k, N, d, table)


# -- evaluate ----------------------------------------------------------------


def test_evaluate_constant_only():
    f = CoefficientFamily(2, 2, 2, {}, [1.5, -2.0])
    X = np.ones((2, 2)) * 9.0
    assert np.array_equal(evaluate(f, X), np.array([1.5, -2.0]))


def test_evaluate_linear_term():
    a = MultiIndex.from_slots([1], 1)
    f = CoefficientFamily(1, 1, 2, {(a, (1,)): [3.0, -1.0]}, [1.0, 1.0])
    X = np.array([[2.0]])
    assert np.allclose(evaluate(f, X), [1.0 + 6.0, 1.0 - 2.0])


def test_evaluate_dimension_mismatch():
    f = CoefficientFamily(3, 4, 1, {})
    with pytest.raises(ValueError):
        evaluate(f, np.zeros((2, 4)))


# -- slicing ------------------------------------------------------------------


def test_sliced_degree_one_and_empty():
    a = MultiIndex.from_slots([2], 2)
    f = CoefficientFamily(2, 3, 1, {(a, (2,)): [4.0]}, [0.5])
    X = np.arange(6.0).reshape(2, 3)
    assert np.allclose(evaluate_sliced(f, X), evaluate(f, X))
    empty = CoefficientFamily(2, 3, 1, {}, [0.25])
    assert evaluate_sliced(empty, X)[0] == 0.25


def test_sliced_matches_direct_on_500_random_families():
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for _ in range(500):
        n = int(rng.integers(1, 5))
        N = int(rng.integers(1, 6))
        d = int(rng.integers(1, 4))
        f = random_family(rng, n, N, d, density=0.35)
        X = rng.normal(size=(n, N))
        worst = max(worst, float(np.max(np.abs(evaluate(f, X) - evaluate_sliced(f, X)))))
    assert worst <= 1e-12


# -- polarization ---------------------------------------------------------------


def test_polarize_classical_two_scalars():
    alpha = MultiIndex.from_slots([1, 2], 2)
    X = np.array([[1.0], [2.0]])
    lhs, rhs = polarize(alpha, X)
    assert lhs[(1, 1)] == pytest.approx(2.0)  # x1 * x2
    assert rhs[(1, 1)] == pytest.approx(2.0)  # (1/2)[(x1+x2)^2 - x1^2 - x2^2]


def test_polarize_degree_one_identity():
    alpha = MultiIndex.from_slots([2], 3)
    X = np.arange(12.0).reshape(3, 4)
    lhs, rhs = polarize(alpha, X)
    for i in range(1, 5):
        assert lhs[(i,)] == pytest.approx(X[1, i - 1])
        assert rhs[(i,)] == pytest.approx(X[1, i - 1])


def test_polarize_random_agreement_scalar_and_vector():
    rng = np.random.default_rng(SEED + 1)
    for case in range(40):
        k = int(rng.integers(1, 5))
        n = k + int(rng.integers(0, 2))
        shape = (n, 3) if case % 2 == 0 else (n, 3, 3)
        X = rng.normal(size=shape)
        slots = sorted(rng.choice(np.arange(1, n + 1), size=k, replace=False).tolist())
        lhs, rhs = polarize(MultiIndex.from_slots(slots, n), X)
        for tup, left in lhs.items():
            assert np.max(np.abs(left - rhs[tup]), initial=0.0) <= 1e-10


def test_polarize_guard():
    alpha = MultiIndex.from_slots(range(1, 10), 9)
    with pytest.raises(GuardExceeded):
        polarize(alpha, np.zeros((9, 2)))


# -- decoupled homogeneous ------------------------------------------------------


def test_decoupled_homogeneous_degree_one_gamma_free():
    fk = HomogeneousSlice(1, 3, 1, {(1,): [2.0], (3,): [-1.0]})
    X = sample_matrix(parse_spec("gaussian"), 1, 3, "decoupled", SEED, key=(30,))
    v0 = decoupled_homogeneous(fk, X, 0.0)
    v1 = decoupled_homogeneous(fk, X, 0.7)
    assert np.allclose(v0, v1)  # 1!^gamma = 1
    assert v0[0] == pytest.approx(2.0 * X.values[0, 0] - X.values[0, 2])


def test_decoupled_homogeneous_tetrahedral_single_term():
    fk = HomogeneousSlice(2, 2, 1, {(1, 2): [1.0]})
    X = sample_matrix(parse_spec("rademacher"), 2, 2, "decoupled", SEED, key=(31,))
    v = decoupled_homogeneous(fk, X, 0.9)  # gamma forced to 0 on tetrahedral
    assert v[0] == pytest.approx(X.values[0, 0] * X.values[1, 1])


def test_decoupled_homogeneous_mode_guard():
    fk = HomogeneousSlice(2, 2, 1, {(1, 2): [1.0]})
    X = sample_matrix(parse_spec("rademacher"), 2, 2, "coupled", SEED, key=(32,))
    with pytest.raises(ValueError):
        decoupled_homogeneous(fk, X, 0.0)


def test_gamma_pinned_by_enumeration_oracle():
    # the spec example: symmetric f = 1 off-diagonal on {1,2}^2 has coupled
    # second moment 4 and plain decoupled second moment 2
    s2 = HomogeneousSlice(2, 2, 1, {(1, 2): [1.0], (2, 1): [1.0]})
    coupled, plain = coupled_decoupled_families({2: s2}, 0.0)
    line = banach.Lp(2.0, 1)
    sq = banach.Power(2.0)
    assert exact_modular(coupled, "coupled", sq, line) == pytest.approx(4.0)
    assert exact_modular(plain, "decoupled", sq, line) == pytest.approx(2.0)
    gamma = pin_decoupling_exponent(s2)
    assert gamma == pytest.approx(0.5, abs=1e-12)
    # equality of chaos values requires the (k!)^(1/2) factor
    X = sample_matrix(parse_spec("rademacher"), 2, 2, "decoupled", SEED, key=(33,))
    q = decoupled_homogeneous(s2, X, gamma)
    assert abs(q[0]) == pytest.approx(
        math.sqrt(2.0) * abs(homogeneous_value(s2, X)[0])
    )


def test_gamma_pin_is_stable_across_random_slices():
    rng = np.random.default_rng(SEED + 2)
    for _ in range(10):
        s2 = random_symmetric_slice(rng, 2, int(rng.integers(2, 5)))
        if not s2.table:
            continue
        assert pin_decoupling_exponent(s2) == pytest.approx(0.5, abs=1e-9)


# -- walsh expansion and exact expectations --------------------------------------


def test_walsh_expand_examples():
    a1 = MultiIndex.from_slots([1], 1)
    f = CoefficientFamily(1, 2, 1, {(a1, (1,)): [1.0]})
    p = walsh_expand(f, "coupled")
    assert p.terms == {frozenset({1}): pytest.approx(np.array([1.0]))}

    a2 = MultiIndex.from_slots([1, 2], 2)
    g = CoefficientFamily(2, 2, 1, {(a2, (1, 2)): [1.0], (a2, (2, 1)): [1.0]})
    q = walsh_expand(g, "coupled")
    assert set(q.terms) == {frozenset({1, 2})}
    assert q.terms[frozenset({1, 2})][0] == pytest.approx(2.0)
    qd = walsh_expand(g, "decoupled")
    assert set(qd.terms) == {
        frozenset({(1, 1), (2, 2)}),
        frozenset({(1, 2), (2, 1)}),
    }


def test_walsh_expand_point_evaluation_oracle():
    rng = np.random.default_rng(SEED + 3)
    f = random_family(rng, 3, 3, 2, density=0.5)
    for mode in ("coupled", "decoupled"):
        poly = walsh_expand(f, mode)
        for _ in range(50):
            signs = rng.integers(0, 2, size=(3, 3)) * 2.0 - 1.0
            if mode == "coupled":
                signs = np.broadcast_to(signs[0], (3, 3)).copy()
                assign = {c + 1: signs[0, c] for c in range(3)}
            else:
                assign = {
                    (r + 1, c + 1): signs[r, c] for r in range(3) for c in range(3)
                }
            assert np.allclose(poly.evaluate(assign), evaluate(f, signs), atol=1e-12)


def test_exact_l2_trivials():
    from decoupling_lab.chaos import WalshPolynomial

    constant = WalshPolynomial(1, {frozenset(): np.array([3.0])})
    assert exact_l2(constant) == pytest.approx(9.0)
    two_vars = WalshPolynomial(
        1, {frozenset({1}): np.array([1.0]), frozenset({2}): np.array([1.0])}
    )
    assert exact_l2(two_vars) == pytest.approx(2.0)


def test_exact_l2_matches_enumeration_on_30_random_families():
    rng = np.random.default_rng(SEED + 4)
    line2 = banach.Power(2.0)
    for _ in range(30):
        n = int(rng.integers(1, 4))
        N = int(rng.integers(1, 4))
        f = random_family(rng, n, N, 1, density=0.5)
        for mode in ("coupled", "decoupled"):
            l2 = exact_l2(walsh_expand(f, mode))
            enum = exact_modular(f, mode, line2, banach.Lp(2.0, 1))
            assert abs(l2 - enum) <= 1e-10


def test_exact_modular_trivials():
    f0 = CoefficientFamily(1, 1, 2, {}, [3.0, 4.0])
    val = exact_modular(f0, "coupled", banach.Power(2.0), banach.Lp(2.0, 2))
    assert val == pytest.approx(25.0)
    a1 = MultiIndex.from_slots([1], 1)
    f1 = CoefficientFamily(1, 1, 1, {(a1, (1,)): [1.0]})
    assert exact_modular(f1, "coupled", banach.Power(2.0), banach.Lp(2.0, 1)) == pytest.approx(1.0)
    assert exact_modular(f1, "decoupled", banach.Power(2.0), banach.Lp(2.0, 1)) == pytest.approx(1.0)


def test_enumeration_guard():
    a = MultiIndex.from_slots([1], 1)
    entries = {(a, (i,)): [1.0] for i in range(1, 24)}
    f = CoefficientFamily(1, 23, 1, entries)
    with pytest.raises(GuardExceeded):
        exact_modular(f, "coupled", banach.Power(2.0), banach.Lp(2.0, 1))
    assert walsh_expand(f, "coupled", var_cap=None).nvars == 23


# -- conditional expectations ------------------------------------------------------


def test_row_sum_projection_identity_all_small_cases():
    for n in (2, 3):
        for N in (2, 3):
            for abits in range(1, 1 << n):
                for bbits in range(1 << n):
                    gap = sum_projection_gap(MultiIndex(abits, n), MultiIndex(bbits, n), N)
                    assert gap <= 1e-12


def test_symmetrization_is_an_l2_contraction():
    rng = np.random.default_rng(SEED + 5)
    saw_strict = False
    for _ in range(30):
        f = random_family(rng, 3, 3, 1, density=0.5)
        raw, proj = symmetrization_l2_pair(f)
        assert proj <= raw + 1e-12
        if is_symmetric(f):
            assert abs(raw - proj) <= 1e-12
        else:
            assert proj < raw - 1e-12
            saw_strict = True
        fs = symmetrize(f)
        raw_s, proj_s = symmetrization_l2_pair(fs)
        assert abs(raw_s - proj_s) <= 1e-12
    assert saw_strict


# -- coupled/decoupled second-moment bridges -----------------------------------------


def test_degree_one_coupled_equals_decoupled():
    rng = np.random.default_rng(SEED + 6)
    s1 = HomogeneousSlice(1, 5, 1, {(i,): rng.normal(size=1) for i in range(1, 6)})
    coupled, plain = coupled_decoupled_families({1: s1}, 0.0)
    assert exact_l2(walsh_expand(coupled, "coupled")) == pytest.approx(
        exact_l2(walsh_expand(plain, "decoupled"))
    )


def test_second_moment_bridge_mixed_degrees():
    rng = np.random.default_rng(SEED + 7)
    for _ in range(10):
        N = int(rng.integers(4, 9))
        slices = {
            k: random_symmetric_slice(rng, k, N, density=0.6) for k in range(1, 5)
        }
        coupled, scaled = coupled_decoupled_families(slices, 0.5, empty_term=rng.normal(size=1))
        lc = exact_l2(walsh_expand(coupled, "coupled", var_cap=None))
        ld = exact_l2(walsh_expand(scaled, "decoupled", var_cap=None))
        assert abs(lc - ld) <= 1e-10 * max(1.0, lc)


def test_second_moment_bridge_tetrahedral():
    rng = np.random.default_rng(SEED + 8)
    for _ in range(10):
        N = int(rng.integers(4, 9))
        slices = {
            k: HomogeneousSlice(
                k, N, 1,
                {c: rng.normal(size=1) for c in itertools.combinations(range(1, N + 1), k)},
            )
            for k in range(1, 5)
        }
        coupled, plain = coupled_decoupled_families(slices, 0.0, empty_term=rng.normal(size=1))
        lc = exact_l2(walsh_expand(coupled, "coupled", var_cap=None))
        ld = exact_l2(walsh_expand(plain, "decoupled", var_cap=None))
        assert abs(lc - ld) <= 1e-10 * max(1.0, lc)


def test_cross_degree_orthogonality():
    rng = np.random.default_rng(SEED + 9)
    slices = {k: random_symmetric_slice(rng, k, 5) for k in (1, 2, 3)}
    coupled, _ = coupled_decoupled_families(slices, 0.0, empty_term=rng.normal(size=1))
    total = exact_l2(walsh_expand(coupled, "coupled"))
    parts = []
    for k, fk in slices.items():
        single, _ = coupled_decoupled_families({k: fk}, 0.0)
        parts.append(exact_l2(walsh_expand(single, "coupled")))
    parts.append(float(coupled.empty_term[0] ** 2))
    assert total == pytest.approx(math.fsum(parts), abs=1e-10)
