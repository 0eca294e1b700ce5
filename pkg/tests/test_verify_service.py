from __future__ import annotations

import pytest

from models import InvalidArgumentError, InvariantLedger
from services.verify_service import (
    REPORT_HEADER,
    SuiteReport,
    VerifyHorizons,
    run_suite,
    verify_counterexample,
    verify_schedule,
    verify_spectral,
)


@pytest.fixture
def quick():
    return VerifyHorizons.quick()


def _failures(report: SuiteReport) -> dict[str, float]:
    return {check.name: check.min_slack for check in report.ledger.checks.values() if not check.passed}


def test_ledger_tracks_min_slack_and_first_violation():
    ledger = InvariantLedger(tolerance=1e-9)
    ledger.record("gap", 0.5, 1)
    ledger.record("gap", -1e-12, 2)
    assert ledger.passed
    ledger.record("gap", -1e-3, 3)
    ledger.record("gap", -1.0, 4)
    check = ledger.checks["gap"]
    assert check.checks == 4
    assert check.min_slack == -1.0
    assert check.first_violation_t == 3
    assert not ledger.passed


def test_ledger_merge():
    first, second = InvariantLedger(), InvariantLedger()
    first.record("a", 1.0, 1)
    second.record("a", -1.0, 7)
    second.record("b", 2.0, 1)
    first.merge(second)
    assert first.checks["a"].checks == 2
    assert first.checks["a"].first_violation_t == 7
    assert set(first.checks) == {"a", "b"}


def test_schedule_suite_passes(quick):
    report = verify_schedule(quick)
    assert report.passed, _failures(report)
    assert len(report.rows()[0]) == len(REPORT_HEADER)


def test_spectral_suite_passes(quick):
    report = verify_spectral(quick)
    assert report.passed, _failures(report)
    assert "consensus_contraction" in report.ledger.checks


def test_counterexample_suite_passes(quick):
    report = verify_counterexample(quick)
    assert report.passed, _failures(report)
    assert "gap_ratio_sixteen_over_four" in report.ledger.checks


def test_lemma_suite_passes(quick):
    (report,) = run_suite("lemmas", quick)
    assert report.passed, _failures(report)
    assert {"mapping_descent", "centralized_telescoping", "consensus_mean"} <= set(report.ledger.checks)


@pytest.mark.slow
def test_full_suites_pass():
    reports = run_suite("all")
    assert [report.suite for report in reports] == ["schedule", "spectral", "lemmas", "counterexample"]
    assert all(report.passed for report in reports), [_failures(report) for report in reports]


def test_unknown_suite():
    with pytest.raises(InvalidArgumentError):
        run_suite("nonsense")


def test_counterexample_suite_checks_solver_runs_and_the_three_quarter_curves(quick):
    report = verify_counterexample(quick)
    checks = report.ledger.checks
    assert checks["solver_gap_matches_closed_form"].checks == 3
    assert checks["scaled_gap_below_one_beta_0.75"].checks == 3
    assert checks["scaled_gap_below_one_beta_0.75"].min_slack > 0
