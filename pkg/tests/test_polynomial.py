import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from equibound.polynomial import Polynomial

N = 3
coeffs = st.floats(min_value=-5, max_value=5, allow_nan=False).filter(lambda c: abs(c) > 1e-3)
exponents = st.tuples(*[st.integers(0, 3)] * N)
polys = st.lists(st.tuples(exponents, coeffs), max_size=6).map(lambda t: Polynomial(N, t))
points = st.tuples(*[st.integers(0, 6)] * N)


def test_canonical_form_merges_and_drops():
    p = Polynomial(2, [((1, 0), 2.0), ((1, 0), -2.0), ((0, 1), 1.5), ((0, 1), 0.5)])
    assert p.terms == {(0, 1): 2.0}
    assert p.degree == 1


def test_zero_polynomial():
    z = Polynomial(2)
    assert z.is_zero() and z.degree == 0 and z((3, 4)) == 0.0


def test_zero_to_the_zero_is_one():
    assert Polynomial.constant(2, 3.0)((0, 0)) == 3.0
    assert Polynomial(1, {(2,): 1.0})((0,)) == 0.0


def test_sum_of_squares_value():
    g = Polynomial.sum_of_squares(6)
    assert g((1, 2, 0, 1, 1, 0)) == 7.0


def test_shift_difference_of_square():
    x2 = Polynomial(1, {(2,): 1.0})
    assert x2.shift_difference((1,)) == Polynomial(1, {(1,): 2.0, (0,): 1.0})
    assert x2.shift_difference((-1,)) == Polynomial(1, {(1,): -2.0, (0,): 1.0})


def test_restrict():
    p = Polynomial(3, {(1, 1, 1): 2.0, (0, 0, 2): 1.0})
    q = p.restrict([0], {1: 3, 2: 2})
    assert q == Polynomial(1, {(1,): 12.0, (0,): 4.0})


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        Polynomial(2, {(1,): 1.0})
    with pytest.raises(ValueError):
        Polynomial(2)((1, 2, 3))


@given(polys, polys, points)
def test_evaluation_is_linear_in_terms(p, q, x):
    assert (p + q)(x) == pytest.approx(p(x) + q(x), rel=1e-12, abs=1e-9)


@given(polys, polys, points)
def test_product_evaluates_to_product(p, q, x):
    assert (p * q)(x) == pytest.approx(p(x) * q(x), rel=1e-9, abs=1e-6)


@given(polys, st.tuples(*[st.integers(-2, 2)] * N), points)
def test_shift_matches_direct_evaluation(p, v, x):
    y = [a + b for a, b in zip(x, v)]
    assert p.shift(v)(x) == pytest.approx(p(y), rel=1e-9, abs=1e-6)
    assert p.shift_difference(v)(x) == pytest.approx(p(y) - p(x), rel=1e-9, abs=1e-6)


@given(polys)
def test_shift_difference_drops_a_degree(p):
    d = p.shift_difference((1, -1, 2))
    assert d.is_zero() or d.degree <= max(p.degree - 1, 0)


@given(polys, st.lists(points, min_size=1, max_size=5))
def test_evaluate_many_matches_scalar(p, xs):
    arr = np.array(xs)
    expected = [p(x) for x in xs]
    np.testing.assert_allclose(p.evaluate_many(arr), expected, rtol=1e-12, atol=1e-9)


@settings(max_examples=50)
@given(polys, points)
def test_partial_derivative_by_finite_difference(p, x):
    h = 1e-5
    for i in range(N):
        xp = list(map(float, x))
        xm = list(map(float, x))
        xp[i] += h
        xm[i] -= h
        fd = (p(xp) - p(xm)) / (2 * h)
        assert p.partial(i)(x) == pytest.approx(fd, rel=1e-5, abs=1e-4)
