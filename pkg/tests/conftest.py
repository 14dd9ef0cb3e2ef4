from pathlib import Path

import pytest

from gimbal_adrc.config import OUT_ROOT_ENV

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"

# criterion number -> (passed, detail), filled by test_acceptance.py
ACCEPTANCE = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (bool(passed), detail)


@pytest.fixture(autouse=True)
def _isolated_out_root(tmp_path, monkeypatch):
    # Keep CLI output out of the working tree.
    monkeypatch.setenv(OUT_ROOT_ENV, str(tmp_path / "runs"))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if passed else 'FAIL'}  {detail}")
