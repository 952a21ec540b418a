import numpy as np
import pytest

from imma.graph import CostModel, Graph, build_instance


def path_graph(p=0.5):
    """0 -> 1 -> 2 with equal edge probabilities."""
    return Graph(3, np.array([0, 1]), np.array([1, 2]), np.array([p, p]))


def i1(k=2.0, b=2, beta=0.5, p=0.5):
    return build_instance(path_graph(p), beta, b, CostModel(), k)


def within(value, target, stderr, z=3.0):
    return abs(value - target) <= z * stderr + 1e-12


@pytest.fixture
def t1():
    return path_graph()


@pytest.fixture
def inst1():
    return i1()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list = []


def report(criterion: int, title: str, ok: bool, detail: str = "") -> None:
    """Record and print a one-line verdict for an acceptance criterion."""
    line = f"criterion {criterion:>2} [{'PASS' if ok else 'FAIL'}] {title}" + (f": {detail}" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
