"""One test per acceptance criterion; each prints a PASS/FAIL line with its tolerance."""

import pytest

from conftest import ACCEPTANCE_LINES
from smoothaa.suite import AcceptanceSuite


@pytest.fixture(scope="module")
def suite(tmp_path_factory):
    return AcceptanceSuite(tmp_path_factory.mktemp("paper_suite"), log=lambda m: None)


def check(suite, number, capsys):
    r = suite.run_criterion(number)
    ACCEPTANCE_LINES.append(r.line())
    with capsys.disabled():
        print("\n" + r.line())
    assert r.passed, r.line()


def test_smoothing_function_soundness(suite, capsys):
    check(suite, 1, capsys)


def test_subproblem_oracle_equivalence(suite, capsys):
    check(suite, 2, capsys)


def test_bearing_iteration_counts(suite, capsys):
    check(suite, 3, capsys)


def test_bearing_lcp_correctness(suite, capsys):
    check(suite, 4, capsys)


def test_enr_iteration_ordering(suite, capsys):
    check(suite, 5, capsys)


def test_rate_estimates_within_contraction(suite, capsys):
    check(suite, 6, capsys)


def test_mu_schedule_monotone(suite, capsys):
    check(suite, 7, capsys)


def test_nnls_rate_ordering(suite, capsys):
    check(suite, 8, capsys)


def test_determinism(suite, capsys):
    check(suite, 9, capsys)
