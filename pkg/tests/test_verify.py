import pytest

from rami.verify import SUITES, format_table, run_suite


@pytest.mark.parametrize("suite", sorted(SUITES))
def test_suite_passes(suite):
    results = run_suite(suite)
    assert results
    failed = [r for r in results if not r.passed]
    assert not failed, format_table(failed)


def test_unknown_suite():
    with pytest.raises(KeyError):
        run_suite("astrology")
