import numpy as np
import pytest

from csrisk.claims import claim_from_table, evaluate_expression, parse_claim
from csrisk.errors import ConfigurationError
from csrisk.lattice import LatticeModel


@pytest.fixture
def model():
    return LatticeModel.build(2.0, 3, "node")


def test_expressions(model):
    B = model.terminal_brownian()
    np.testing.assert_allclose(evaluate_expression("-B_T", model), -B)
    np.testing.assert_allclose(evaluate_expression("max(B_T - 0.5, 0) * T", model), np.maximum(B - 0.5, 0) * 2)
    np.testing.assert_allclose(evaluate_expression("min(B_T, 1, 0.2)", model), np.minimum(np.minimum(B, 1), 0.2))
    np.testing.assert_allclose(evaluate_expression("exp(-abs(B_T)) ** 2 / 3", model), np.exp(-np.abs(B)) ** 2 / 3)
    np.testing.assert_allclose(evaluate_expression("+2", model), np.full(4, 2.0))


def test_earlier_claims_are_names(model):
    Y = parse_claim("-B_T", model)
    np.testing.assert_allclose(parse_claim({"expr": "Y / 2"}, model, {"Y": Y}), Y / 2)
    with pytest.raises(ConfigurationError, match="unknown symbol"):
        parse_claim("Y / 2", model)


@pytest.mark.parametrize("text", [
    "__import__('os')", "B_T.real", "B_T[0]", "lambda: 1", "B_T if 1 else 0", "sin(B_T)",
    "max(B_T)", "exp(B_T, 2)", "B_T // 2", "B_T > 0", "True", "'a'", "", "B_T +",
    "max(B_T, key=abs)", "1 / (B_T - B_T)",
])
def test_rejected_expressions(model, text):
    with pytest.raises(ConfigurationError):
        evaluate_expression(text, model)


def test_tables():
    path = LatticeModel.build(1.0, 2, "path")
    np.testing.assert_array_equal(parse_claim({"table": [1, 2, 3, 4]}, path), [1.0, 2.0, 3.0, 4.0])
    with pytest.raises(ConfigurationError):
        claim_from_table([1, 2, 3], path)
    with pytest.raises(ConfigurationError):
        claim_from_table([1, 2, float("nan"), 4], path)
    big = LatticeModel.build(1.0, 13, "path")
    with pytest.raises(ConfigurationError, match="at most 12"):
        claim_from_table(np.zeros(2 ** 13), big)


def test_numbers_and_bad_specs(model):
    np.testing.assert_array_equal(parse_claim(-1, model), -np.ones(4))
    for bad in (True, None, [1, 2], {"expr": "1", "table": [1]}, {"formula": "1"}):
        with pytest.raises(ConfigurationError):
            parse_claim(bad, model)
