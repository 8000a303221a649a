import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from minmod import expr


class TestParse:
    def test_product_structure(self):
        ast = expr.parse("2*z*(1+exp(-z))")
        assert isinstance(ast, expr.Mul)
        assert isinstance(ast.left, expr.Mul)
        assert ast.left.left == expr.Const(2.0)
        assert isinstance(ast.left.right, expr.Var)
        assert isinstance(ast.right, expr.Add)

    def test_variable(self):
        assert expr.parse("z") == expr.Var()

    def test_sum_structure(self):
        ast = expr.parse("z + 7*sin(z)")
        assert isinstance(ast, expr.Add)
        assert isinstance(ast.left, expr.Var)
        assert ast.right == expr.Mul(expr.Const(7.0), expr.Call("sin", expr.Var()))

    def test_precedence_power_binds_tightest(self):
        assert expr.parse("-z^2") == expr.Neg(expr.Pow(expr.Var(), 2))
        assert expr.parse("2*z^3") == expr.Mul(expr.Const(2.0), expr.Pow(expr.Var(), 3))

    def test_subtraction_desugars(self):
        ast = expr.parse("z - 1")
        assert ast == expr.Add(expr.Var(), expr.Neg(expr.Const(1.0)))

    def test_named_constants(self):
        assert expr.parse("i") == expr.Const(1j)
        assert expr.parse("pi") == expr.Const(complex(math.pi))
        assert expr.parse("e") == expr.Const(complex(math.e))

    def test_syntax_error_offset(self):
        with pytest.raises(expr.ExprError) as exc:
            expr.parse("2*z*((1+exp(-z))")
        assert exc.value.offset == 16

    def test_unknown_identifier(self):
        with pytest.raises(expr.ExprError, match="unknown identifier"):
            expr.parse("tan(z)")

    def test_non_integer_exponent(self):
        with pytest.raises(expr.ExprError, match="non-integer exponent"):
            expr.parse("z^2.5")
        with pytest.raises(expr.ExprError):
            expr.parse("z^(2)")


# AST generator that mirrors what the parser can produce
_leaf = st.one_of(
    st.just(expr.Var()),
    st.just(expr.Const(1j)),
    st.floats(min_value=0.0, max_value=1e6, allow_nan=False).map(
        lambda x: expr.Const(complex(x))),
)


def _nodes(children):
    return st.one_of(
        st.tuples(children, children).map(lambda ab: expr.Add(*ab)),
        st.tuples(children, children).map(lambda ab: expr.Mul(*ab)),
        st.tuples(children, children).map(lambda ab: expr.Div(*ab)),
        children.map(expr.Neg),
        st.tuples(children, st.integers(min_value=0, max_value=9)).map(
            lambda bk: expr.Pow(*bk)),
        st.tuples(st.sampled_from(expr.BUILTINS), children).map(
            lambda na: expr.Call(*na)),
    )


ast_strategy = st.recursive(_leaf, _nodes, max_leaves=25)


class TestRoundTrip:
    @settings(max_examples=300, deadline=None)
    @given(ast_strategy)
    def test_parse_print_identity(self, ast):
        assert expr.parse(expr.to_source(ast)) == ast

    def test_examples(self):
        for src in ["2*z*(1+exp(-z))", "z + 7*sin(z)", "cos(sqrt(z))",
                    "z^3 - 2*z + 1", "exp(z^2)/2", "-(z + 1)"]:
            ast = expr.parse(src)
            assert expr.parse(expr.to_source(ast)) == ast


class TestEvaluate:
    def test_euler_identity(self):
        r = expr.evaluate(expr.parse("exp(z)"), 1j * math.pi)
        assert r.is_finite
        assert abs(r.value - (-1.0)) < 1e-14

    def test_periodicity(self):
        f = expr.parse("2*z*(1+exp(-z))")
        r = expr.evaluate(f, 4j * math.pi)
        assert abs(r.value - 16j * math.pi) < 1e-12

    def test_zero(self):
        f = expr.parse("2*z*(1+exp(-z))")
        assert expr.evaluate(f, 0.0).value == 0.0

    def test_overflow_carries_log_magnitude(self):
        r = expr.evaluate(expr.parse("exp(z)"), 1000.0)
        assert not r.is_finite
        assert r.valid
        assert r.log_magnitude == pytest.approx(1000.0)

    def test_finite_value_consistent_with_log(self):
        f = expr.parse("sinh(z)*cos(z) + z^4")
        for z in [0.3 + 0.7j, -2 + 1j, 5.0, 100.0 + 3j]:
            r = expr.evaluate(f, z)
            assert r.is_finite
            if r.value != 0:
                # exact in the log domain; exp() round-trip costs |log|*eps
                assert r.log_magnitude == math.log(abs(r.value))

    def test_deep_tower_honest(self):
        r = expr.evaluate(expr.parse("exp(exp(z))"), 800.0)
        assert not r.is_finite
        assert math.isinf(r.log_magnitude) or not r.valid


class TestDerivative:
    def test_exp(self):
        assert expr.derivative(expr.parse("exp(z)")) == expr.parse("exp(z)")

    def test_sine_shift(self):
        d = expr.derivative(expr.parse("z + 7*sin(z)"))
        # 1 + 7 cos z
        zs = np.array([0.0, 1.0 + 2j, -3j])
        got, _, _ = expr.eval_many(d, zs)
        want = 1 + 7 * np.cos(zs)
        assert np.allclose(got, want, rtol=1e-13)

    def test_product_rule_matches_closed_form(self):
        d = expr.derivative(expr.parse("2*z*(1+exp(-z))"))
        zs = np.array([0.5, 1 + 1j, -2 + 0.3j])
        got, _, _ = expr.eval_many(d, zs)
        want = 2 * (1 + np.exp(-zs)) - 2 * zs * np.exp(-zs)
        assert np.allclose(got, want, rtol=1e-13)

    def test_finite_difference_oracle(self):
        rng = np.random.default_rng(7)
        pts = rng.uniform(-5, 5, 12) + 1j * rng.uniform(-5, 5, 12)
        h = 1e-6
        for src in ["2*z*(1+exp(-z))", "z + 7*sin(z)", "cos(sqrt(z+16))",
                    "sinh(z)/2 + cosh(z)*z^2", "log(z + 100)"]:
            f = expr.parse(src)
            d = expr.derivative(f)
            dv, _, _ = expr.eval_many(d, pts)
            up, _, _ = expr.eval_many(f, pts + h)
            dn, _, _ = expr.eval_many(f, pts - h)
            fd = (up - dn) / (2 * h)
            scale = np.maximum(1.0, np.abs(dv))
            assert np.all(np.abs(dv - fd) / scale < 1e-5)

    def test_poly_derivative(self):
        p = expr.Poly((1.0, 2.0, 3.0))
        d = expr.derivative(p)
        assert d == expr.Poly((2.0, 6.0))
        assert expr.derivative(expr.Poly((5.0,))) == expr.Const(0)


class TestTaylor:
    def test_exp_series(self):
        res = expr.taylor_coefficients(expr.parse("exp(z)"), 31, 2.0)
        for k in range(31):
            want = 1.0 / math.factorial(k)
            assert abs(res.coefficients[k] - want) < 1e-10
            assert res.error_bounds[k] < 1e-10

    def test_doubling_series(self):
        # 2z(1 + e^-z) = 4z - 2z^2 + z^3 - ...
        res = expr.taylor_coefficients(expr.parse("2*z*(1+exp(-z))"), 4, 1.0)
        want = [0.0, 4.0, -2.0, 1.0]
        for k, w in enumerate(want):
            assert abs(res.coefficients[k] - w) < 1e-12

    def test_coshalf_series(self):
        res = expr.taylor_coefficients(expr.parse("cos(sqrt(z))"), 16, 4.0)
        for k in range(16):
            want = (-1.0) ** k / math.factorial(2 * k)
            assert abs(res.coefficients[k] - want) < 1e-10

    def test_two_radii_agree_within_bounds(self):
        f = expr.parse("exp(z)*cos(z) + z^5")
        a = expr.taylor_coefficients(f, 20, 1.5)
        b = expr.taylor_coefficients(f, 20, 3.0)
        diff = np.abs(a.coefficients - b.coefficients)
        assert np.all(diff <= a.error_bounds + b.error_bounds)

    def test_overflow_on_circle(self):
        with pytest.raises(OverflowError):
            expr.taylor_coefficients(expr.parse("exp(z)"), 8, 1000.0)


class TestPoly:
    def test_horner_exact(self):
        coeffs = (1.0 + 0j, -0.5 + 0.25j, 3.0, 0.0, 2.0 - 1j)
        p = expr.Poly(coeffs)
        rng = np.random.default_rng(3)
        zs = rng.normal(0, 2, 64) + 1j * rng.normal(0, 2, 64)
        got, _, _ = expr.eval_many(p, zs)
        acc = np.full_like(zs, coeffs[-1])
        for c in coeffs[-2::-1]:
            acc = acc * zs + c
        assert np.array_equal(got, acc)

    def test_rejects_all_zero(self):
        with pytest.raises(ValueError):
            expr.Poly((0.0, 0.0))

    def test_load_coefficients(self, tmp_path):
        path = tmp_path / "f.poly"
        path.write_text("poly:\ntail: 1e-12\n1 0\n0 -2.5\n3.5 0\n")
        p = expr.load_coefficients(path)
        assert p.coeffs == (1 + 0j, -2.5j, 3.5 + 0j)
        assert p.tail_bound == 1e-12

    def test_load_rejects_bad_header(self, tmp_path):
        path = tmp_path / "f.poly"
        path.write_text("1 0\n")
        with pytest.raises(ValueError, match="poly"):
            expr.load_coefficients(path)


class TestSymmetry:
    def test_real_coefficients(self):
        assert expr.is_real_symmetric(expr.parse("2*z*(1+exp(-z))"))
        assert expr.is_real_symmetric(expr.parse("cos(sqrt(z))"))

    def test_complex_coefficients(self):
        assert not expr.is_real_symmetric(expr.parse("i*z + exp(z)"))
