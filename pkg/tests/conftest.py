from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parent.parent
CONFIGS = ROOT / "configs"

_criteria: list[str] = []


@pytest.fixture(scope="session")
def warm_jit():
    """Load the compiled kernels once so timed sections exclude compilation."""
    from rloc.alg1 import NOISY_SOLVER, ConstraintWindow, solve
    from rloc.geometry import Pose

    rng = np.random.default_rng(0)
    a = [Pose(*rng.uniform(0, 10, 2), rng.uniform(0, 6)) for _ in range(4)]
    b = [Pose(*rng.uniform(0, 10, 2), rng.uniform(0, 6)) for _ in range(4)]
    w = ConstraintWindow.from_poses(a, b)
    solve(w)
    solve(w, tol=0.1, config=NOISY_SOLVER)


@pytest.fixture
def criterion(capsys):
    """Print and remember one PASS/FAIL line, then assert on it."""

    def report(number: int, ok: bool, detail: str):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
        _criteria.append(line)
        with capsys.disabled():
            print(f"\n{line}")
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter):
    if _criteria:
        terminalreporter.section("acceptance criteria")
        for line in _criteria:
            terminalreporter.write_line(line)
