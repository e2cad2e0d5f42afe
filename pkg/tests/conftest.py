import numpy as np
import pytest

from ncfsi.mesh import BenchmarkGeometry, build_benchmark_mesh, rectangle_mesh


@pytest.fixture(scope="session")
def geometry():
    return BenchmarkGeometry()


@pytest.fixture(scope="session")
def coarse_bench(geometry):
    return build_benchmark_mesh(geometry, 600)


@pytest.fixture(scope="session")
def bench_2199(geometry):
    return build_benchmark_mesh(geometry, 2199)


@pytest.fixture
def square():
    return rectangle_mesh(4, 4)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_report():
    """Record one pass/fail line per acceptance criterion; echoed in the terminal summary."""

    def report(label: str, passed: bool, detail: str) -> None:
        line = f"[{'PASS' if passed else 'FAIL'}] {label}: {detail}"
        print(line)
        _ACCEPTANCE_LINES.append(line)

    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
