import numpy as np
import pytest

from tselliptic.nonlinearity import (
    Binary,
    Const,
    EvaluationError,
    GrowthHypotheses,
    Neg,
    ParseError,
    Pow,
    UnknownIdentifierError,
    Var,
    check_one_sided,
    estimate_lipschitz,
    evaluate,
    max_coordinate,
    nemytskii,
    parse,
    to_string,
    uses_u,
)
from tselliptic.operator import weighted_norm
from tselliptic.timescale import (
    GridFunction,
    ProductGridFunction,
    TimeScale,
    discretize,
)

from conftest import random_grid

G4 = discretize(TimeScale.parse("0,1,2,3"))

ROUNDTRIP_CORPUS = [
    "-2*u",
    "1 + u^2",
    "c0 + c1*u + c2*u^2",
    "u",
    "x1",
    "x",
    "-u",
    "u - 1",
    "1 - u - 2",
    "1 - (u - 2)",
    "u/2/3",
    "u/(2/3)",
    "2*u + 3*x1 - 4",
    "sin(u)",
    "cos(x1*u)",
    "exp(-u)",
    "abs(u - 1)",
    "sqrt(u^2 + 1)",
    "u^3",
    "u^-2",
    "(u + 1)^2",
    "(-u)^2",
    "-u^2",
    "2^3",
    "u^2^3",
    "(1 + u)*(1 - u)",
    "u*x1*x2",
    "x2 - x1",
    "1/(1 + u^2)",
    "sin(cos(u))",
    "-(u + 1)",
    "-sin(u)",
    "3.5e-2*u",
    "0.5 + .25*u",
    "u - -1",
    "-u - -u",
    "((u))",
    "sin(u)^2 + cos(u)^2",
    "exp(u)/exp(u)",
    "u^0",
    "-1",
    "u*2 - 2*u",
    "sqrt(abs(u))",
    "x1^2 + x2^2 + x3^2",
    "1 - u^2/2 + u^4/24",
    "(u - 1)*(u - 2)*(u - 3)",
    "u/x1",
    "-x1*u^2",
    "5",
    "u + u + u",
]


class TestParser:
    def test_canonical_neg_constant(self):
        assert parse("-2*u") == Binary("*", Const(-2.0), Var("u"))

    def test_superlinear_example(self):
        assert parse("1 + u^2") == Binary("+", Const(1.0), Pow(Var("u"), 2))

    def test_bindings_fold(self):
        e = parse("c0 + c1*u + c2*u^2", bindings={"c0": 1, "c1": 0, "c2": 2})
        assert e == Binary(
            "+",
            Binary("+", Const(1.0), Binary("*", Const(0.0), Var("u"))),
            Binary("*", Const(2.0), Pow(Var("u"), 2)),
        )

    def test_precedence(self):
        assert parse("-u^2") == Neg(Pow(Var("u"), 2))
        assert parse("1 + 2*u") == Binary(
            "+", Const(1.0), Binary("*", Const(2.0), Var("u"))
        )
        assert parse("1 - u - 2") == Binary(
            "-", Binary("-", Const(1.0), Var("u")), Const(2.0)
        )

    def test_x_alias(self):
        assert parse("x") == Var("x1")
        assert max_coordinate(parse("x2*u")) == 2
        assert uses_u(parse("x1")) is False

    def test_roundtrip_corpus(self):
        bindings = {"c0": 1.0, "c1": 2.0, "c2": 3.0}
        for text in ROUNDTRIP_CORPUS:
            e = parse(text, bindings=bindings)
            assert parse(to_string(e), bindings=bindings) == e, text

    def test_syntax_error_offset(self):
        with pytest.raises(ParseError) as err:
            parse("1 + * u")
        assert err.value.offset == 4
        with pytest.raises(ParseError):
            parse("(1 + u")
        with pytest.raises(ParseError):
            parse("1 + u)")
        with pytest.raises(ParseError):
            parse("")

    def test_integer_exponent_enforced(self):
        with pytest.raises(ParseError):
            parse("u^2.5")
        with pytest.raises(ParseError):
            parse("u^u")
        assert parse("u^(-2)") == Pow(Var("u"), -2)

    def test_unknown_identifier(self):
        with pytest.raises(UnknownIdentifierError):
            parse("k*u")
        with pytest.raises(ParseError):
            parse("x1 + x2", dim=1)


class TestEvaluate:
    def test_examples(self):
        assert evaluate(parse("-u"), (), 3.0) == -3.0
        assert evaluate(parse("1+u^2"), (), 1.0) == 2.0
        assert evaluate(parse("sin(u)"), (), 0.0) == 0.0

    def test_coordinates(self):
        assert evaluate(parse("x1 + 10*x2"), (2.0, 3.0), 0.0) == 32.0

    def test_negative_base_integer_power(self):
        assert evaluate(parse("u^3"), (), -2.0) == -8.0
        assert evaluate(parse("u^-2"), (), -2.0) == 0.25

    def test_division_by_zero(self):
        with pytest.raises(EvaluationError):
            evaluate(parse("1/u"), (), 0.0)

    def test_sqrt_negative(self):
        with pytest.raises(EvaluationError):
            evaluate(parse("sqrt(u)"), (), -1.0)

    def test_deterministic(self):
        e = parse("sin(u)*exp(x1) - u^3/7")
        a = evaluate(e, (0.3,), 1.7)
        b = evaluate(e, (0.3,), 1.7)
        assert a == b


class TestNemytskii:
    def test_constant(self):
        u = ProductGridFunction.zeros((G4,))
        F = nemytskii(parse("5"), (G4,), u)
        assert np.array_equal(F.values, np.full(4, 5.0))

    def test_negation_of_eigenfunction(self):
        phi = ProductGridFunction((G4,), [0.0, 2**-0.5, 2**-0.5, 0.0])
        F = nemytskii(parse("-u"), (G4,), phi)
        assert np.array_equal(F.values, -phi.values)

    def test_superlinear_interior(self):
        u = ProductGridFunction((G4,), [0.0, 2.0, 3.0, 0.0])
        F = nemytskii(parse("1+u^2"), (G4,), u)
        assert np.array_equal(F.values, [1.0, 5.0, 10.0, 1.0])

    def test_position_dependence_2d(self):
        u = ProductGridFunction.zeros((G4, G4))
        F = nemytskii(parse("x1 + 10*x2"), (G4, G4), u)
        expected = G4.points[:, None] + 10 * G4.points[None, :]
        assert np.array_equal(F.values, expected)

    def test_error_reports_grid_point(self):
        u = ProductGridFunction((G4,), [1.0, 1.0, 0.0, 1.0])
        with pytest.raises(EvaluationError) as err:
            nemytskii(parse("1/u"), (G4,), u)
        assert "2.0" in str(err.value)

    def test_lipschitz_transfer(self, rng):
        # ||F(u) - F(v)|| <= 2 ||u - v|| holds exactly for f = -2u
        e = parse("-2*u")
        for _ in range(30):
            g = random_grid(rng)
            u = ProductGridFunction((g,), rng.standard_normal(len(g.points)))
            v = ProductGridFunction((g,), rng.standard_normal(len(g.points)))
            Fu = nemytskii(e, (g,), u)
            Fv = nemytskii(e, (g,), v)
            du = GridFunction(g, u.values - v.values)
            dF = GridFunction(g, Fu.values - Fv.values)
            assert weighted_norm(dF) <= 2.0 * weighted_norm(du) + 1e-12


class TestLipschitzEstimate:
    def test_linear(self):
        est = estimate_lipschitz(parse("-2*u"), (G4,), (-5.0, 5.0))
        assert est.value == pytest.approx(2.0, abs=1e-6)

    def test_constant(self):
        est = estimate_lipschitz(parse("7"), (G4,), (-5.0, 5.0))
        assert est.value == 0.0

    def test_quadratic_range(self):
        est = estimate_lipschitz(parse("1+u^2"), (G4,), (-5.0, 5.0))
        assert est.value == pytest.approx(10.0, abs=1e-4)

    def test_sample_validation(self):
        with pytest.raises(ValueError):
            estimate_lipschitz(parse("u"), (G4,), (-1.0, 1.0), samples=1)


class TestOneSided:
    def test_negative_linear_passes(self):
        rep = check_one_sided(parse("-u"), (G4,), 0.5, 0.0, (-10.0, 10.0))
        assert rep.passed and rep.witness is None

    def test_positive_linear_fails_large_eta(self):
        rep = check_one_sided(parse("2*u"), (G4,), 0.9, 5.0, (-10.0, 10.0))
        assert not rep.passed
        x, eta = rep.witness
        assert abs(eta) > 2.0

    def test_superlinear_fails(self):
        rep = check_one_sided(parse("1+u^2"), (G4,), 0.9, 100.0, (-50.0, 50.0))
        assert not rep.passed


class TestGrowthHypotheses:
    def test_validation(self):
        with pytest.raises(ValueError):
            GrowthHypotheses(L=-1.0)
        with pytest.raises(ValueError):
            GrowthHypotheses(cbound=-0.1)
        h = GrowthHypotheses(L=2.0, alpha=0.5, cbound=0.0)
        assert h.L == 2.0
