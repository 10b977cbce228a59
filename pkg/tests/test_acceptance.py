"""Acceptance criteria 1-12 at full sample sizes and stated tolerances.

Each test prints one PASS/FAIL line for its criterion (plus the individual
check lines) and fails if any check inside it fails. The whole module takes
on the order of an hour on one core.
"""

import pytest

from gmclab import validate

SEED = 0

pytestmark = pytest.mark.acceptance


@pytest.fixture(scope="module")
def tail_curve():
    return validate.localized_tail_curve(200_000, SEED)


def _report(capsys, number: int, title: str, results):
    ok = all(r.passed for r in results)
    with capsys.disabled():
        print(f"\n{'PASS' if ok else 'FAIL'}  criterion {number}: {title}")
        for r in results:
            print(f"      {r.line()}")
    assert ok, "; ".join(r.line() for r in results if not r.passed)


def test_criterion_01_closed_forms(capsys):
    _report(capsys, 1, "closed-form agreement", validate.check_closed_forms())


def test_criterion_02_exponent_algebra(capsys):
    _report(capsys, 2, "exponent algebra", validate.check_exponent_algebra())


def test_criterion_03_max_law(capsys):
    _report(capsys, 3, "law of the maximum", validate.check_max_law(100_000, SEED))


def test_criterion_04_williams(capsys):
    _report(capsys, 4, "path split at the maximum", validate.check_williams(10_000, 10_000, SEED))


def test_criterion_05_reflection(capsys):
    _report(capsys, 5, "reflection coefficient via paths",
            validate.check_reflection(100_000, 1_000_000, SEED))


def test_criterion_06_localization(capsys):
    _report(capsys, 6, "localization identity", validate.check_localization(100_000, SEED))


def test_criterion_07_tail_exponent(capsys, tail_curve):
    _report(capsys, 7, "tail exponent", validate.check_tail_exponent(tail_curve))


def test_criterion_08_tail_constant(capsys, tail_curve):
    _report(capsys, 8, "tail constant", validate.check_tail_constant(tail_curve, seed=SEED))


def test_criterion_09_annulus_scaling(capsys):
    _report(capsys, 9, "annulus scaling", validate.check_annulus_scaling(400_000, SEED))


def test_criterion_10_moment_identity(capsys):
    _report(capsys, 10, "moment identity", validate.check_moment_identity(1_000_000, SEED))


def test_criterion_11_boundary(capsys):
    _report(capsys, 11, "one-dimensional tail and reflection", validate.check_boundary(seed=SEED))


def test_criterion_12_neumann(capsys):
    _report(capsys, 12, "Neumann boundary constant", validate.check_neumann(seed=SEED))
