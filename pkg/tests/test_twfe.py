import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings, strategies as st

from fundgap.did import StackedData, estimate, twfe_stacked
from fundgap.synth.oracle import brute_force_twfe

from conftest import random_stacked_frame

WINDOW = (-3, 3)


def test_two_by_two_equals_difference_in_means():
    rng = np.random.default_rng(0)
    rows = [{"cohort": 2000, "person_id": f"p{i}", "event_time": e, "treated": i < 4, "y": rng.normal()}
            for i in range(9) for e in (-1, 0)]
    df = pd.DataFrame(rows)
    res = twfe_stacked(StackedData(df, (-1, 0)))
    wide = df.pivot(index="person_id", columns="event_time", values="y")
    ch = wide[0] - wide[-1]
    t = df.drop_duplicates("person_id").set_index("person_id")["treated"]
    assert res.coef[0] == pytest.approx(ch[t].mean() - ch[~t].mean(), abs=1e-10)


@settings(max_examples=20)
@given(st.integers(0, 2**31), st.integers(1, 3), st.sampled_from([0.0, 0.2]))
def test_matches_dense_least_squares(seed, G, missing):
    df = random_stacked_frame(seed, G, 10, WINDOW, missing)
    s = StackedData(df, WINDOW)
    res = twfe_stacked(s)
    if res.dropped:
        return
    ref = brute_force_twfe(s.frame, range(-3, 4))
    for e, v in ref.items():
        assert res.coef[e] == pytest.approx(v, abs=1e-8)


@settings(max_examples=20)
@given(st.integers(0, 2**31), st.lists(st.integers(2, 6), min_size=1, max_size=3))
def test_equal_share_balanced_matches_cs(seed, halves):
    rng = np.random.default_rng(seed)
    rows = []
    for gi, h in enumerate(halves):
        for i in range(2 * h):
            t = i < h
            for e in range(-3, 4):
                rows.append({"cohort": 2000 + 5 * gi, "person_id": f"p{i}", "event_time": e, "treated": t,
                             "y": rng.normal() + (0.03 if t and e >= 0 else 0.0)})
    s = StackedData(pd.DataFrame(rows), WINDOW)
    tw = twfe_stacked(s).coef
    cs = estimate(s, min_cell=2, bootstrap_reps=0).event_study
    for e in range(0, 4):
        assert tw[e] == pytest.approx(cs[e].coef, abs=1e-8)
    # pre-period coefficients are cumulative consecutive-change placebos
    for e in (-3, -2):
        assert tw[e] == pytest.approx(-sum(cs[k].coef for k in range(e, -1)), abs=1e-8)


def test_zero_effect_close_to_zero():
    rng = np.random.default_rng(1)
    rows = [{"cohort": 2000, "person_id": f"p{i}", "event_time": e, "treated": i % 2 == 0,
             "y": 0.01 * rng.normal() + 0.1 * e} for i in range(400) for e in range(-3, 4)]
    res = twfe_stacked(StackedData(pd.DataFrame(rows), WINDOW))
    assert max(abs(v) for v in res.coef.values()) < 0.01


def test_collinear_dummy_dropped():
    df = random_stacked_frame(2, 1, 10, WINDOW)
    df = df[~((df["event_time"] == 2) & ~df["treated"])]  # only treated seen at e = 2
    df = df[~((df["event_time"] == -3) & df["treated"])]  # no treated at e = -3
    res = twfe_stacked(StackedData(df, WINDOW))
    assert set(res.dropped) == {-3, 2}
    assert set(res.coef) == {-2, 0, 1, 3}


def test_weights_ignored_with_warning(caplog):
    df = random_stacked_frame(3, 1, 10, WINDOW, weights=True)
    with caplog.at_level("WARNING"):
        a = twfe_stacked(StackedData(df, WINDOW))
    b = twfe_stacked(StackedData(df.assign(weight=1.0), WINDOW))
    assert "weights" in caplog.text
    assert a.coef == b.coef
