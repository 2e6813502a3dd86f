"""The eight acceptance criteria at their stated tolerances and time budgets.

Each test prints one pass/fail line; the lines are repeated in the terminal
summary so they survive output capture.
"""

import pytest

from conftest import ACCEPTANCE_LINES
from wulfflab.verify import CRITERIA, run_criterion


@pytest.mark.parametrize("number", sorted(CRITERIA), ids=[CRITERIA[k][0].replace(" ", "_") for k in sorted(CRITERIA)])
def test_criterion(number, capsys):
    r = run_criterion(number, seed=0)
    line = r.line()
    ACCEPTANCE_LINES.append(line)
    with capsys.disabled():
        print("\n" + line)
    assert r.passed, r.details
    assert r.seconds < r.budget, f"{r.seconds:.1f} s over the {r.budget:.0f} s budget"
