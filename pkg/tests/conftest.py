from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from coneglm.families import FamilyLink, GlmModel
from coneglm.formula import build_model_matrix, read_csv

FIXTURES = Path(__file__).parent / "fixtures"

# criterion -> list of (label, ok, detail); filled by test_acceptance
ACCEPTANCE: dict = {}


def fixture_table(name: str):
    """Load ``tests/fixtures/<name>.csv`` or fail the calling test."""
    path = FIXTURES / f"{name}.csv"
    if not path.exists():
        pytest.fail(f"fixture {path.name} is missing; export it with scripts/make_fixtures.py", pytrace=False)
    return read_csv(path)


def model_from(formula: str, table, family: str = "gaussian", link: str | None = None) -> GlmModel:
    frame = build_model_matrix(formula, table)
    return GlmModel(frame.X, frame.y, FamilyLink.of(family, link), frame.column_names, frame.weights,
                    frame.intercept)


CAESARIAN_FORMULA = "cbind(n1, n0) ~ RISK + NPLAN + ANTIB"
BOSTON_FORMULA = "medv ~ rm + rad + dis + lstat + tax + ptratio"


@pytest.fixture(scope="session")
def caesarian():
    return model_from(CAESARIAN_FORMULA, fixture_table("caesarian"), "binomial", "log")


@pytest.fixture(scope="session")
def boston():
    return model_from(BOSTON_FORMULA, fixture_table("boston"))


@pytest.fixture
def rng():
    return np.random.default_rng(20240517)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(ACCEPTANCE):
        for label, ok, detail in ACCEPTANCE[crit]:
            terminalreporter.write_line(f"criterion {crit} {label}: {'PASS' if ok else 'FAIL'}  {detail}")
