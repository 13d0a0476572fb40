"""Acceptance gate: every criterion at its stated tolerance and time budget.

Run with ``pytest tests/test_acceptance.py -s`` to see one line per criterion.
"""

from collections import defaultdict

import pytest

from besselvar.config import RunConfig
from besselvar.experiments import EXPERIMENTS, run_suite

# wall-time budgets in seconds, summed over the lambda values of a criterion
BUDGETS = {1: 1, 2: 10, 3: 60, 4: 120, 5: 300, 6: 60, 7: 30, 8: 120, 9: 120,
           10: 600, 11: 600, 12: 600, 13: 600, 14: 300, 15: 600}

CRITERIA = sorted((e.criterion, name) for name, e in EXPERIMENTS.items())


@pytest.fixture(scope="module")
def reports(tmp_path_factory):
    cfg = RunConfig(out_dir=str(tmp_path_factory.mktemp("acceptance")))
    by_criterion = defaultdict(list)
    for r in run_suite(cfg):
        by_criterion[EXPERIMENTS[r.name].criterion].append(r)
    return by_criterion


@pytest.mark.slow
@pytest.mark.parametrize("criterion,name", CRITERIA, ids=[f"{c:02d}-{n}" for c, n in CRITERIA])
def test_criterion(reports, criterion, name):
    rs = reports[criterion]
    assert rs, f"no reports for criterion {criterion}"
    runtime = sum(r.runtime for r in rs)
    ok = all(r.passed for r in rs) and runtime < BUDGETS[criterion]
    print(f"\ncriterion {criterion:2d} {name}: {'PASS' if ok else 'FAIL'} ({runtime:.1f}s, budget {BUDGETS[criterion]}s)")
    for r in rs:
        shown = ", ".join(f"{k}={v:.3g}" for k, v in r.constants.items() if isinstance(v, float))
        print(f"    {r.label}: {'PASS' if r.passed else 'FAIL'} {shown}")
    failed = [r.label for r in rs if not r.passed]
    assert not failed, f"failing runs: {failed}: " + "; ".join(str(r.note) for r in rs if not r.passed)
    assert runtime < BUDGETS[criterion]
