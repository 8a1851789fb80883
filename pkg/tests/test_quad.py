import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lookback_ctmc.quad import (
    QuadratureError,
    concatenate,
    gauss_legendre_unit,
    integrate,
    make_rule,
    parse_rule_name,
    rule_from_points,
)


@pytest.mark.parametrize("n", range(1, 17))
def test_gauss_exact_through_degree_2n_minus_1(n):
    rule = make_rule("gauss_legendre", n, -0.3, 1.7)
    for deg in range(2 * n):
        exact = (1.7 ** (deg + 1) - (-0.3) ** (deg + 1)) / (deg + 1)
        assert abs(integrate(rule, lambda x: x**deg) - exact) <= 1e-12 * max(1.0, abs(exact))


@pytest.mark.parametrize("n", [1, 2, 5, 11, 21, 40])
def test_gauss_matches_numpy_reference(n):
    z, w = gauss_legendre_unit(n)
    zr, wr = np.polynomial.legendre.leggauss(n)
    assert np.max(np.abs(z - zr)) < 1e-14
    assert np.max(np.abs(w - wr)) < 1e-14


def test_gauss_nodes_symmetric_and_odd_count_has_zero():
    z, w = gauss_legendre_unit(11)
    assert np.allclose(z, -z[::-1], atol=0, rtol=0)
    assert z[5] == 0.0


@pytest.mark.parametrize("kind,n", [("rectangle", 7), ("trapezoid", 7), ("simpson", 8), ("gauss_legendre", 9)])
def test_weights_sum_to_length(kind, n):
    rule = make_rule(kind, n, 1.5, 12.25)
    assert abs(rule.weights.sum() - 10.75) < 1e-12


@given(a=st.floats(-5, 5), length=st.floats(0.01, 10), n=st.integers(1, 30),
       kind=st.sampled_from(["rectangle", "trapezoid", "gauss_legendre"]))
@settings(max_examples=60, deadline=None)
def test_weights_sum_property(a, length, n, kind):
    rule = make_rule(kind, n, a, a + length)
    assert rule.weights.sum() == pytest.approx(length, rel=1e-12)
    assert rule.nodes[0] >= a and rule.nodes[-1] <= a + length


def _empirical_order(kind, ns):
    exact = math.e - 1.0
    errs = [abs(integrate(make_rule(kind, n, 0.0, 1.0), np.exp) - exact) for n in ns]
    return -np.polyfit(np.log(ns), np.log(errs), 1)[0], errs


def test_rule_orders_on_exp():
    assert _empirical_order("rectangle", [8, 16, 32, 64])[0] == pytest.approx(1.0, abs=0.1)
    assert _empirical_order("trapezoid", [8, 16, 32, 64])[0] == pytest.approx(2.0, abs=0.1)
    assert _empirical_order("simpson", [4, 8, 16, 32])[0] == pytest.approx(4.0, abs=0.15)
    # Gauss-Legendre: error falls faster than any fixed power
    exact = math.e - 1.0
    errs = [abs(integrate(make_rule("gauss_legendre", n, 0.0, 1.0), np.exp) - exact) for n in (1, 2, 3, 4, 5)]
    rates = [math.log(errs[i] / errs[i + 1]) / math.log((i + 2) / (i + 1)) for i in range(4)]
    assert all(b > a for a, b in zip(rates, rates[1:]))
    assert errs[4] < 1e-9


def test_right_rectangle_ends_at_b():
    rule = make_rule("rectangle", 4, 0.0, 1.0, right=True)
    assert rule.nodes[-1] == 1.0
    assert np.allclose(rule.nodes, [0.25, 0.5, 0.75, 1.0])


def test_parse_rule_names():
    assert parse_rule_name("gauss-11") == ("gauss_legendre", 11)
    assert parse_rule_name("trap-11") == ("trapezoid", 10)
    assert parse_rule_name("simpson-21") == ("simpson", 20)
    assert rule_from_points("trap-11", 0, 1).size == 11
    for bad in ("gauss", "foo-3", "gauss-0", "trap-1"):
        with pytest.raises(QuadratureError):
            parse_rule_name(bad)


def test_concatenate_merges_shared_endpoint():
    a = make_rule("trapezoid", 2, 0.0, 1.0)
    b = make_rule("trapezoid", 2, 1.0, 3.0)
    c = concatenate(a, b)
    assert c.size == 5
    assert c.weights.sum() == pytest.approx(3.0)
    assert integrate(c, lambda x: 2 * x + 1) == pytest.approx(12.0)
    with pytest.raises(QuadratureError):
        concatenate(a, make_rule("trapezoid", 2, 1.5, 2.0))


def test_invalid_rules():
    with pytest.raises(QuadratureError):
        make_rule("simpson", 3, 0, 1)
    with pytest.raises(QuadratureError):
        make_rule("gauss_legendre", 3, 1, 1)
    with pytest.raises(QuadratureError):
        make_rule("midpoint", 3, 0, 1)
