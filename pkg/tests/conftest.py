import numpy as np
import pytest


def random_conflicting_pair(rng: np.random.Generator, dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian pair with g1 . g2 < 0 (g2 is negated when needed)."""
    while True:
        g1 = rng.standard_normal(dim) * rng.uniform(0.1, 10.0)
        g2 = rng.standard_normal(dim) * rng.uniform(0.1, 10.0)
        ip = g1 @ g2
        if ip == 0.0:
            continue
        return (g1, g2) if ip < 0 else (g1, -g2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line per acceptance criterion; printed in the terminal summary."""
    lines = request.config.stash.setdefault(ACCEPTANCE_KEY, [])

    def record(number: int, title: str, ok: bool, detail: str) -> bool:
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
