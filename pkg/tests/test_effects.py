import math

import pytest
from hypothesis import assume, given, strategies as st

from fundgap.effects import (BenchmarkInput, SelectionBoundInput, benchmark_effect_size, compute_effects,
                             format_percent, green_card_share, nonemployment_contribution,
                             selection_bias_differential)

reals = st.floats(-10, 10, allow_nan=False)


def test_benchmark_examples():
    assert benchmark_effect_size(BenchmarkInput(0.03, 0.042, 0.123)) == pytest.approx(0.37, abs=0.005)
    assert round(benchmark_effect_size(BenchmarkInput(0.0302, 0.0419, 0.1226)), 3) == 0.374
    assert benchmark_effect_size(BenchmarkInput(0.0, 0.1, 0.3)) == 0
    assert math.isnan(benchmark_effect_size(BenchmarkInput(0.03, 0.1, 0.1)))


def test_contribution_examples():
    assert nonemployment_contribution(0.03, 0.2, 0.125) == 0.048
    assert nonemployment_contribution(0.0, 0.3, 0.2) == 0
    assert nonemployment_contribution(0.06, 0.1, 0.12) == pytest.approx(0.05, abs=1e-15)
    assert math.isnan(nonemployment_contribution(0.03, 0.2, 0.0))


def test_selection_examples():
    assert selection_bias_differential(SelectionBoundInput(0.0, -0.2, 0.2)) == 1.0
    assert selection_bias_differential(SelectionBoundInput(-0.3, -0.3, 0.7)) == 0
    assert selection_bias_differential(SelectionBoundInput(-0.1, -0.2, 0.25)) == pytest.approx(0.4, abs=1e-15)
    for bad in (0.0, 1.0, -0.1):
        with pytest.raises(ValueError):
            SelectionBoundInput(0.0, 0.1, bad)


def test_green_card_examples():
    n = {"China": 100, "India": 100, "RoW": 300}
    stay = {"China": 0.9, "India": 0.85, "RoW": 0.7}
    assert green_card_share(0.076, n, stay) == pytest.approx(15.2 / 115, abs=1e-12)
    assert round(green_card_share(0.076, n, stay), 4) == 0.1322
    assert green_card_share(0.0, n, stay) == 0
    assert math.isnan(green_card_share(0.076, n, {"China": 1.0, "India": 1.0, "RoW": 1.0}))
    with pytest.raises(KeyError):
        green_card_share(0.076, {"China": 1, "India": 1}, stay)
    with pytest.raises(ValueError):
        green_card_share(0.076, n, {**stay, "RoW": 1.5})


@given(reals, reals, reals, st.floats(0.01, 100))
def test_benchmark_degree_zero(beta, a, b, c):
    assume(abs(a - b) > 1e-6)
    base = benchmark_effect_size(BenchmarkInput(beta, a, b))
    scaled = benchmark_effect_size(BenchmarkInput(c * beta, c * a, c * b))
    assert scaled == pytest.approx(base, rel=1e-9, abs=1e-12)


@given(reals, reals, st.floats(0.001, 0.999), st.floats(0.1, 10))
def test_selection_linear_and_signed(beta, hat, nb, k):
    v = selection_bias_differential(SelectionBoundInput(beta, hat, nb))
    assert math.copysign(1, v) == math.copysign(1, beta - hat) or v == 0
    w = selection_bias_differential(SelectionBoundInput(hat + k * (beta - hat), hat, nb))
    assert w == pytest.approx(k * v, rel=1e-9, abs=1e-12)
    assert v * nb == pytest.approx(beta - hat, rel=1e-9, abs=1e-12)


def test_format_percent():
    assert format_percent(0.048) == "4.8%"
    assert format_percent(float("nan")) == "undefined"


def test_compute_effects_payload():
    out = compute_effects({
        "benchmark": {"beta_hat": 0.03, "ybar_c_minus1": 0.042, "ybar_c_5": 0.123},
        "nonemployment_contribution": [{"att": 0.03, "treated_share": 0.2, "base_rate": 0.125},
                                       {"att": 0.03, "treated_share": 0.2, "base_rate": 0.0}],
        "selection_bias": {"beta_true": 0, "beta_hat": -0.2, "n_b": 0.2},
    })
    assert out["benchmark"]["percent"] == "37.0%"
    assert out["nonemployment_contribution"][0]["value"] == 0.048
    assert out["nonemployment_contribution"][1] == {"inputs": {"att": 0.03, "treated_share": 0.2, "base_rate": 0.0},
                                                    "value": None, "percent": "undefined", "defined": False}
    assert out["selection_bias"]["value"] == 1.0
    with pytest.raises(KeyError):
        compute_effects({"bogus": {}})
