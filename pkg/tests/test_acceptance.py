"""Acceptance gate: every criterion at its stated tolerance, one line each."""

import pytest

from radwave.acceptance import CRITERIA, run_criterion

from conftest import ACCEPTANCE_LINES


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, capsys):
    result = run_criterion(number)
    line = result.line()
    ACCEPTANCE_LINES.append(line)
    with capsys.disabled():
        print("\n" + line, flush=True)
    assert result.passed, line
