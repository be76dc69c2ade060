from math import comb

import mpmath
import numpy as np
import pytest
import sympy

from cdfnet.deriv_poly import MAX_ORDER, derivative_polynomial, horner, tanh_nth_derivative


def symbolic_coeffs(n):
    """Differentiate tanh n times symbolically, then read it as a polynomial in tanh."""
    x, u = sympy.symbols("x u")
    expr = sympy.diff(sympy.tanh(x), x, n)
    poly = sympy.Poly(sympy.expand(expr.subs(sympy.tanh(x), u)), u)
    coeffs = [0] * (n + 2)
    for (power,), c in poly.terms():
        coeffs[power] = int(c)
    return coeffs


def fd_derivative(f, x, n, h):
    """n-th central difference of f at x with step h."""
    return sum((-1) ** k * comb(n, k) * f(x + (n / 2 - k) * h) for k in range(n + 1)) / h ** n


def richardson(f, x, n, h):
    coarse = fd_derivative(f, x, n, h)
    fine = fd_derivative(f, x, n, h / 2)
    return (4 * fine - coarse) / 3


class TestCoefficients:
    def test_first_two_orders(self):
        np.testing.assert_array_equal(derivative_polynomial(1).coeffs, [1, 0, -1])
        np.testing.assert_array_equal(derivative_polynomial(2).coeffs, [0, -2, 0, 2])

    def test_third_order(self):
        np.testing.assert_array_equal(derivative_polynomial(3).coeffs, [-2, 0, 8, 0, -6])

    @pytest.mark.parametrize("n", range(1, 11))
    def test_symbolic_oracle(self, n):
        assert derivative_polynomial(n).coeffs.tolist() == symbolic_coeffs(n)

    @pytest.mark.parametrize("n", [1, 5, 12, 20, 40])
    def test_structure(self, n):
        c = derivative_polynomial(n).coeffs
        assert c.size == n + 2 and c[-1] != 0
        # exact while the coefficients are exactly representable (n <= 20)
        tol = 0.0 if n <= 20 else 1e-12 * np.abs(c).sum()
        assert abs(horner(c, 1.0)) <= tol and abs(horner(c, -1.0)) <= tol
        # P_n(-u) = (-1)^(n+1) P_n(u): only powers with parity of n+1 survive
        powers = np.arange(c.size)
        assert np.all(c[(powers % 2) != ((n + 1) % 2)] == 0)

    def test_integral_to_twenty(self):
        for n in range(1, 21):
            c = derivative_polynomial(n).coeffs
            assert np.all(c == np.rint(c))

    @pytest.mark.parametrize("n", [0, MAX_ORDER + 1, -3])
    def test_out_of_range(self, n):
        with pytest.raises(ValueError):
            derivative_polynomial(n)

    def test_cached_copy_is_read_only(self):
        c = derivative_polynomial(4).coeffs
        with pytest.raises(ValueError):
            c[0] = 99.0


class TestEvaluation:
    def test_simple_values(self):
        assert tanh_nth_derivative(0, 0.5) == pytest.approx(np.tanh(0.5))
        assert tanh_nth_derivative(1, 0.0) == 1.0
        assert tanh_nth_derivative(2, 0.0) == 0.0

    def test_fourth_order_at_point_three(self):
        fd = richardson(np.tanh, 0.3, 4, 1e-2)
        assert tanh_nth_derivative(4, 0.3) == pytest.approx(fd, abs=1e-5)
        # 30-digit mpmath differentiation
        assert tanh_nth_derivative(4, 0.3) == pytest.approx(3.72248581661372007, abs=1e-12)

    @pytest.mark.parametrize("n", range(1, 7))
    def test_against_finite_differences(self, n):
        # float64 stencils lose too many digits past n = 4; run them in 50 digits
        x = np.random.default_rng(n).uniform(-3, 3, size=100)
        with mpmath.workdps(50):
            step = mpmath.mpf("1e-4")
            fd = [float(fd_derivative(mpmath.tanh, mpmath.mpf(float(xi)), n, step)) for xi in x]
        np.testing.assert_allclose(tanh_nth_derivative(n, x), fd, rtol=1e-4, atol=1e-9)

    @pytest.mark.parametrize("n", range(1, 5))
    def test_against_float_richardson(self, n):
        x = np.random.default_rng(n).uniform(-3, 3, size=100)
        np.testing.assert_allclose(tanh_nth_derivative(n, x), richardson(np.tanh, x, n, 0.02), rtol=1e-4, atol=1e-6)

    # |tanh^(n)(10)| ~ 2^(n+1) e^-20 first exceeds 1e-6 at n = 8
    @pytest.mark.parametrize("n", range(1, 8))
    def test_vanishes_at_saturation(self, n):
        assert abs(tanh_nth_derivative(n, 10.0)) < 1e-6
        assert abs(tanh_nth_derivative(n, -10.0)) < 1e-6

    @pytest.mark.parametrize("n", range(1, 12))
    def test_parity(self, n):
        x = np.random.default_rng(0).uniform(-4, 4, size=50)
        np.testing.assert_array_equal(tanh_nth_derivative(n, -x), (-1) ** (n + 1) * tanh_nth_derivative(n, x))

    def test_bounded_by_polynomial_max(self):
        for n in range(1, 8):
            u = np.linspace(-1, 1, 20001)
            bound = np.max(np.abs(horner(derivative_polynomial(n).coeffs, u)))
            x = np.linspace(-8, 8, 1001)
            assert np.all(np.abs(tanh_nth_derivative(n, x)) <= bound + 1e-12)
