import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dnlab.models import coupled_system, random_system
from dnlab.symbols import (Bump, Coefficient, DNSystem, DNValidationError, Sector, Term, anisotropic_weight,
                           formal_adjoint, lambda_mask, nested_determinant, parity_check, symbol_batch,
                           validate_orders)


def test_orders_coupled_example():
    o = validate_orders((0, 0), (4, 2))
    assert o.m == (4, 2)
    assert o.d == 2
    assert o.groups == (1, 2)
    assert o.partial_sums == (0, 4, 6)


def test_orders_single_group():
    o = validate_orders((1, 1), (1, 1))
    assert o.m == (2, 2) and o.d == 1 and o.groups == (2,) and o.partial_sums == (0, 4)


@pytest.mark.parametrize("s, t, path", [
    ((0,), (0,), "/t/0"),
    ((-1,), (2,), "/s/0"),
    ((0, 1), (2, 2), "/s/1"),
    ((0, 0), (2, 3), "/t/1"),
])
def test_orders_rejected_with_index(s, t, path):
    with pytest.raises(DNValidationError) as err:
        validate_orders(s, t)
    assert err.value.path == path


def test_orders_length_mismatch():
    with pytest.raises(DNValidationError):
        validate_orders((0, 0), (2,))


def test_anisotropic_weight_examples():
    assert anisotropic_weight(np.zeros(1), 1.0, 4) == pytest.approx(1.0)
    assert anisotropic_weight(np.array([1.0, 0.0]), 0.0, 4) == pytest.approx(1.0)
    assert anisotropic_weight(np.array([1.0, 0.0]), 16.0, 4) == pytest.approx(math.sqrt(5.0), rel=1e-15)


def test_weight_scaling(rng):
    for _ in range(50):
        xi = rng.normal(size=3)
        lam = complex(*rng.normal(size=2))
        tau = rng.uniform(0.1, 10.0)
        m = int(rng.integers(1, 7))
        lhs = anisotropic_weight(tau * xi, tau ** m * lam, m)
        assert lhs == pytest.approx(tau * anisotropic_weight(xi, lam, m), rel=1e-13)


def test_sector_contains():
    sec = Sector.from_epsilon(math.pi / 6)
    assert sec.contains(-1.0)
    assert sec.contains(0.0)
    assert not sec.contains(1.0)
    assert not sec.contains(np.exp(0.1j))
    full = Sector(0.0, 2 * math.pi)
    assert full.contains(1.0) and full.contains(-1j)
    with pytest.raises(DNValidationError):
        Sector(1.0, 0.5)


def test_eval_symbol_examples():
    sys0 = coupled_system(2, c=0.0)
    A = sys0.symbol(np.array([0.3, 0.4]), np.array([1.0, 0.0]))
    np.testing.assert_allclose(A, np.eye(2), atol=1e-15)
    sys1 = coupled_system(1, c=1.0)
    np.testing.assert_allclose(sys1.symbol(np.zeros(1), np.zeros(1)), -np.eye(2))
    consts = DNSystem(1, validate_orders((0, 0), (1, 1)),
                      [[[Term((0,), Coefficient(2.0))], [Term((0,), Coefficient(1j))]],
                       [[], [Term((1,), Coefficient(0.0, (Bump(1.0, (0.0,), 1.0),))),
                             Term((0,), Coefficient(-3.0))]]])
    np.testing.assert_allclose(consts.symbol(np.zeros(1), np.zeros(1), 5.0),
                               np.array([[2.0, 1j], [0.0, -3.0]]) - 5.0 * np.eye(2))


def test_eval_symbol_with_perturbation_at_zero_frequency():
    sys = coupled_system(1, 1.0, "strong")
    x = np.array([math.pi])
    A = sys.symbol(x, np.zeros(1))
    expected = np.array([[-1.0 - 40.0, 0.0], [0.5, -1.0 - 30.0]])
    np.testing.assert_allclose(A, expected, atol=1e-13)


def test_principal_symbol_ignores_perturbation(strong_system, rng):
    n = strong_system.n
    for _ in range(10):
        x = rng.uniform(0, 2 * math.pi, size=n)
        xi = rng.normal(size=n)
        r2 = float(xi @ xi)
        np.testing.assert_allclose(strong_system.principal_symbol(x, xi), np.diag([r2 ** 2, r2]), rtol=1e-13)


def test_principal_symbol_lower_order_only_is_zero():
    sys = DNSystem(1, validate_orders((0,), (2,)), [[[Term((1,), Coefficient(3.0)), Term((0,), Coefficient(1.0))]]])
    assert np.all(sys.principal_symbol(np.zeros(1), np.array([2.0])) == 0)


def test_principal_homogeneity(rng):
    sys = random_system(rng, 2, (1, 0), (2, 1))
    s, t = sys.orders.s, sys.orders.t
    x = rng.normal(size=2)
    xi = rng.normal(size=2)
    tau = 3.0
    a = sys.principal_symbol(x, xi)
    b = sys.principal_symbol(x, tau * xi)
    for j in range(2):
        for k in range(2):
            assert b[j, k] == pytest.approx(tau ** (s[j] + t[k]) * a[j, k], rel=1e-12)


def test_nested_principal_and_mask():
    sys = coupled_system(1, 1.0, "weak")
    xi = np.array([1.5])
    B1 = sys.nested_principal(np.zeros(1), xi, 1)
    assert B1.shape == (1, 1) and B1[0, 0] == pytest.approx(1.5 ** 4)
    np.testing.assert_array_equal(lambda_mask(sys.orders, 1), [[1.0]])
    B2 = sys.nested_principal(np.zeros(1), xi, 2)
    np.testing.assert_allclose(B2, np.diag([1.5 ** 4, 1.5 ** 2]))
    np.testing.assert_array_equal(lambda_mask(sys.orders, 2), np.diag([0.0, 1.0]))
    with pytest.raises(DNValidationError):
        sys.nested_principal(np.zeros(1), xi, 3)


def test_single_group_mask_is_identity(rng):
    sys = random_system(rng, 1, (1, 1), (1, 1))
    np.testing.assert_array_equal(lambda_mask(sys.orders, 1), np.eye(2))
    xi = np.array([0.7])
    np.testing.assert_allclose(sys.nested_principal(np.zeros(1), xi, 1), sys.principal_symbol(np.zeros(1), xi))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10 ** 6), tau=st.floats(0.2, 5.0))
def test_quasi_homogeneous_determinant(seed, tau):
    rng = np.random.default_rng(seed)
    sys = random_system(rng, 2, (1, 1, 0), (3, 1, 1))
    o = sys.orders
    x = rng.normal(size=2)
    xi = rng.normal(size=2)
    lam = complex(*rng.normal(size=2))
    for r in range(1, o.d + 1):
        m = o.group_order(r)
        lhs = nested_determinant(sys, x, tau * xi, tau ** m * lam, r)
        rhs = tau ** o.partial_sums[r] * nested_determinant(sys, x, xi, lam, r)
        assert abs(lhs - rhs) <= 1e-12 * max(abs(rhs), 1e-300)


def test_lower_order_part_decays(rng):
    sys = coupled_system(1, 1.0, "strong")
    x = np.array([math.pi + 0.1])
    ratios = []
    for tau in (1e2, 1e3, 1e4):
        xi = np.array([tau])
        diff = np.abs(sys.symbol(x, xi) - sys.principal_symbol(x, xi))
        ratios.append(diff[0, 0] / tau ** 4 + diff[1, 1] / tau ** 2 + diff[0, 1] / tau ** 2 + diff[1, 0] / tau ** 4)
    assert ratios[0] > ratios[1] > ratios[2]


def test_symbol_batch_matches_pointwise(rng):
    sys = coupled_system(2, 1.0, "strong")
    xs = rng.uniform(2.0, 4.0, size=(5, 2))
    xi = rng.normal(size=(7, 2))
    batch = symbol_batch(sys, xs, xi)
    for i, x in enumerate(xs):
        np.testing.assert_allclose(batch[i], sys.symbol(x, xi), rtol=1e-13, atol=1e-13)


def test_parity_check():
    o = validate_orders((0, 0), (4, 2))
    v3 = parity_check(o, 3)
    assert v3.passed
    assert parity_check(validate_orders((0,), (3,)), 1).offending_group == 1
    v2 = parity_check(validate_orders((0, 0), (4, 1)), 2)
    assert v2.passed
    assert "not applicable" in v2.details[1]
    assert not parity_check(validate_orders((0, 0), (4, 1)), 3).passed


def test_bump_derivative_closed_form(rng):
    # D = -i d/dx; check each D^beta against a central difference of D^(beta - e_axis)
    c = Coefficient(1.0, (Bump(0.7 - 0.2j, (0.3, -0.4), 0.8),))
    x = rng.normal(size=(20, 2))
    h = 1e-5
    for beta in ((1, 0), (0, 1), (2, 0), (1, 1), (0, 3)):
        axis = 0 if beta[0] else 1
        lower = list(beta)
        lower[axis] -= 1
        e = np.zeros(2)
        e[axis] = h
        g = c.D(tuple(lower))
        approx = -1j * (g.evaluate(x + e) - g.evaluate(x - e)) / (2 * h)
        np.testing.assert_allclose(c.D(beta).evaluate(x), approx, rtol=1e-6, atol=1e-8)


def test_coefficient_periodization():
    c = Coefficient(0.0, (Bump(1.0, (0.1,), 0.5),))
    L = 2 * math.pi
    x = np.array([[0.0], [L - 0.05]])
    v = c.evaluate(x, period=L)
    assert v[1] == pytest.approx(math.exp(-(0.15 / 0.5) ** 2), rel=1e-12)


def test_adjoint_constant_real_diagonal(rng):
    sys = coupled_system(2, 1.0, 0.0)
    adj = formal_adjoint(sys)
    for _ in range(5):
        x, xi = rng.normal(size=2), rng.normal(size=2)
        np.testing.assert_allclose(adj.symbol(x, xi), sys.symbol(x, xi).conj().T, atol=1e-12)


def test_adjoint_first_order_bump():
    a = Coefficient(0.0, (Bump(0.5 + 0.3j, (0.2,), 0.7),))
    sys = DNSystem(1, validate_orders((0,), (1,)), [[[Term((1,), a)]]])
    adj = formal_adjoint(sys)
    x = np.linspace(-2, 2, 11)[:, None]
    for xi in (0.0, 1.3, -2.0):
        got = adj.symbol(x, np.array([xi]))[..., 0, 0]
        # D = -i d/dx
        h = 1e-6
        dconj = (a.conj().evaluate(x + h) - a.conj().evaluate(x - h)) / (2 * h)
        expected = a.conj().evaluate(x) * xi - 1j * dconj
        np.testing.assert_allclose(got, expected, atol=1e-8)


def test_double_adjoint_is_identity(rng):
    sys = coupled_system(2, 1.0, "strong")
    twice = formal_adjoint(formal_adjoint(sys))
    for _ in range(10):
        x = rng.uniform(2.0, 4.0, size=2)
        xi = rng.normal(size=2) * 2
        np.testing.assert_allclose(twice.symbol(x, xi), sys.symbol(x, xi), rtol=1e-12, atol=1e-12)


def test_adjoint_rejects_positive_s(rng):
    sys = random_system(rng, 1, (1, 0), (1, 1))
    with pytest.raises(DNValidationError):
        formal_adjoint(sys)


def test_term_order_cap():
    with pytest.raises(DNValidationError) as err:
        DNSystem(1, validate_orders((0,), (2,)), [[[Term((3,), Coefficient(1.0))]]])
    assert err.value.path == "/entries/0/0/0/alpha"
