import json
import math

import pytest

from src.services.settings import ScenarioSettings
from src.services.verification import CriterionResult, VerificationSuite, _result, run_verify
from src.utils.constants import EXIT_CHECK_FAILED, EXIT_OK, REPORT_FILE


@pytest.fixture(scope="module")
def suite():
    return VerificationSuite(fast=True)


def _all_pass(results):
    return all(r.passed for r in results), [r.line() for r in results if not r.passed]


# ===========================================
# RESULT LINES
# ===========================================
def test_result_line_format():
    result = _result("2", "closed form", 1e-12, 0.0, 1e-8)
    assert result.passed
    assert result.line() == "[PASS] 2    closed form: measured=1e-12 target=0 tol=1e-08"
    assert result.to_dict()["status"] == "PASS"


def test_failed_result_with_detail():
    result = _result("9", "divergence", 0.5, 0.0, 0.2, detail="never below -10")
    assert result.status == "FAIL"
    assert result.line().endswith("(never below -10)")


def test_fast_suite_skips_grid_criteria(suite):
    results = suite.harmonic_shift()
    assert [r.status for r in results] == ["SKIP"]
    assert results[0].passed
    assert suite.euclidean_capacity()[-1].skipped


# ===========================================
# QUADRATURE CRITERIA
# ===========================================
@pytest.mark.parametrize("criterion", [
    "schwarzschild_closed_form",
    "mass_recovery",
    "form_equivalence",
    "bray_miao",
    "beta_consistency",
    "higher_dimensions",
    "asymmetric_divergence",
    "isoperimetric_cross_check",
    "invariants",
])
def test_quadrature_criteria_pass(suite, criterion):
    passed, failures = _all_pass(getattr(suite, criterion)())
    assert passed, failures


def test_mass_recovery_lines_per_mass(suite):
    labels = [r.label for r in suite.mass_recovery()]
    assert labels == ["3.0.5", "3c0.5", "3.1", "3c1", "3.2", "3c2"]


# ===========================================
# DRIVER
# ===========================================
def test_raising_criterion_is_reported_and_suite_continues(monkeypatch):
    suite = VerificationSuite(fast=True)

    def broken():
        raise RuntimeError("boom")

    monkeypatch.setattr(suite, "criteria", lambda: [("x", broken), ("2", suite.schwarzschild_closed_form)])
    echoed = []
    results = suite.run(echo=echoed.append)
    assert [r.label for r in results] == ["x", "2"]
    assert results[0].status == "FAIL"
    assert "RuntimeError: boom" in results[0].detail
    assert math.isnan(results[0].measured)
    assert results[1].passed
    assert echoed == [r.line() for r in results]


def test_run_verify_writes_report(tmp_path, monkeypatch):
    def criteria(self):
        return [
            ("a", lambda: [_result("a", "good", 0.0, 0.0, 1.0)]),
            ("b", lambda: [_result("b", "bad", 5.0, 0.0, 1.0)]),
        ]

    monkeypatch.setattr(VerificationSuite, "criteria", criteria)
    outcome = run_verify(ScenarioSettings(), tmp_path, fast=True)
    assert outcome.exit_code == EXIT_CHECK_FAILED
    assert outcome.summary == "1/2 verification lines passed"
    report = json.loads((tmp_path / REPORT_FILE).read_text(encoding="utf-8"))
    assert report["passed"] is False
    assert [c["status"] for c in report["criteria"]] == ["PASS", "FAIL"]


def test_run_verify_passes_when_every_line_passes(tmp_path, monkeypatch):
    monkeypatch.setattr(
        VerificationSuite, "criteria", lambda self: [("2", self.schwarzschild_closed_form)]
    )
    outcome = run_verify(ScenarioSettings(), tmp_path, fast=True)
    assert outcome.exit_code == EXIT_OK
    assert isinstance(outcome.lines[0], str)


def test_criterion_result_is_a_plain_record():
    result = CriterionResult("1", "name", True, 1.0, 1.0, 0.0)
    assert result.status == "PASS"
    assert not result.skipped
