import numpy as np
import pytest

from itomap.harness.config import canonical_config
from itomap.harness.engine import run_scenario


@pytest.fixture(scope="session")
def small_canonical():
    """5000 canonical paths on the default reporting grid."""
    cfg = canonical_config(paths={"estimation": 5000, "evaluation": 5000})
    return run_scenario(cfg, np.arange(5000))


def mc_mean(values):
    values = np.asarray(values, dtype=float)
    return values.mean(), values.std(ddof=1) / np.sqrt(len(values))


ACCEPTANCE: list[tuple[str, bool, str]] = []


def record(criterion: str, passed: bool, detail: str) -> bool:
    """Store one acceptance verdict for the end-of-run summary."""
    ACCEPTANCE.append((criterion, bool(passed), detail))
    return bool(passed)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{criterion}: {'PASS' if passed else 'FAIL'}  {detail}")
