from __future__ import annotations

import numpy as np
import pytest

from lpns2d.littlewood_paley import build_partition
from lpns2d.spectral import Grid

# acceptance verdicts, printed as one line per criterion at the end of the session
ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


def record(number: int, name: str, ok: bool, detail: str) -> None:
    ACCEPTANCE[number] = (name, bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        name, ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {name} -- {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


@pytest.fixture(scope="session")
def grid64():
    return Grid(64)


@pytest.fixture(scope="session")
def part64(grid64):
    return build_partition(grid64)


@pytest.fixture(scope="session")
def grid128():
    return Grid(128)


@pytest.fixture(scope="session")
def part128(grid128):
    return build_partition(grid128)


@pytest.fixture(scope="session")
def default_patch_report():
    from lpns2d.patch import PatchScenario, run_patch_scenario

    return run_patch_scenario(PatchScenario())
