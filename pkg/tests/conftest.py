import datetime as dt
import os

import pytest
from hypothesis import HealthCheck, settings

from fundgap.grants import BudgetRecord

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=200, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def budget(core, fy, app, start, end, pis=("P1",), activity="R01", full=None, cost=None):
    start = dt.date.fromisoformat(start) if isinstance(start, str) else start
    end = dt.date.fromisoformat(end) if isinstance(end, str) else end
    return BudgetRecord(
        core_project_num=core,
        full_project_num=full or f"{app}{core}-01",
        fiscal_year=fy,
        application_type=app,
        budget_start=start,
        budget_end=end,
        pi_ids=frozenset(pis),
        activity_code=activity,
        awarding_institute="GM",
        total_cost=cost,
    )


def yearly(core, first_fy, types, pis=("P1",), activity="R01", start_month=7):
    """One budget row per fiscal year, each twelve months long."""
    rows = []
    for i, t in enumerate(types):
        fy = first_fy + i
        s = dt.date(fy - 1, start_month, 1) if start_month >= 10 else dt.date(fy, start_month, 1)
        e = dt.date(s.year + 1, s.month, 1) - dt.timedelta(days=1)
        rows.append(budget(core, fy, t, s, e, pis, activity, full=f"{t}{core}-{i + 1:02d}"))
    return rows


@pytest.fixture
def exporter_example():
    return yearly("R01GM049850", 1996, [1, 5, 5, 5, 2, 5, 5, 5], pis=("SIMON",), start_month=1)


def random_stacked_frame(seed, n_cohorts=2, n_persons=20, window=(-3, 3), missing=0.0, weights=False,
                         covariate=False, cluster_size=2):
    """Small random stacked panel used by oracle comparisons."""
    import numpy as np
    import pandas as pd

    rng = np.random.default_rng(seed)
    lo, hi = window
    rows = []
    for gi in range(n_cohorts):
        g = 2000 + 3 * gi
        n = int(rng.integers(max(4, n_persons // 2), n_persons + 1))
        for i in range(n):
            treated = bool(i % 2 == 0) if i < 8 else bool(rng.random() < 0.5)
            w = float(rng.uniform(0.5, 2.0)) if weights else 1.0
            x = float(rng.integers(0, 3)) if covariate else 0.0
            level = rng.normal()
            for e in range(lo, hi + 1):
                if missing and rng.random() < missing:
                    continue
                rows.append({"cohort": g, "person_id": f"p{i}", "pair_id": f"c{g}-{'T' if treated else 'C'}{i // cluster_size}",
                             "event_time": e, "year": g + e, "treated": treated, "weight": w, "x": x,
                             "y": level + 0.1 * e + (0.05 * e if treated and e >= 0 else 0) + rng.normal()})
    return pd.DataFrame(rows)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
