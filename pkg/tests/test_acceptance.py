"""Acceptance gate: every criterion at its stated tolerance, one line each.

Run with -s to see the lines as they complete; the full suite is also
available from the command line as `ppdelab acceptance`.
"""

import pytest

from ppdelab import acceptance


@pytest.mark.parametrize("criterion", acceptance.ALL_CRITERIA,
                         ids=[fn.__name__ for fn in acceptance.ALL_CRITERIA])
def test_criterion(criterion):
    result = criterion()
    print(result.line())
    assert result.passed, result.line()
