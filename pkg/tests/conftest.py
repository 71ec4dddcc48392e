import numpy as np
import pytest

from gaitgraph.pose_io import PoseSequence
from gaitgraph.skeleton import OPENPOSE18


def random_sequence(seed, T=30, skeleton=OPENPOSE18, scale=100.0, subject="S0", view=90):
    rng = np.random.default_rng(seed)
    frames = np.empty((T, skeleton.N, 3))
    frames[..., :2] = rng.normal(0.0, scale, (T, skeleton.N, 2))
    frames[..., 2] = rng.uniform(0.1, 1.0, (T, skeleton.N))
    return PoseSequence(subject, view, "nm", skeleton, frames)


@pytest.fixture
def rand_seq():
    return random_sequence


def random_connected_edges(rng, n):
    """Random spanning tree plus a few extra edges on ``n`` nodes."""
    edges = set()
    order = rng.permutation(n)
    for k in range(1, n):
        a, b = int(order[k]), int(order[rng.integers(k)])
        edges.add((min(a, b), max(a, b)))
    for _ in range(int(rng.integers(0, n + 1))):
        a, b = (int(v) for v in rng.choice(n, 2, replace=False))
        edges.add((min(a, b), max(a, b)))
    return tuple(sorted(edges))


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, title: str, passed: bool, detail: str) -> str:
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2d} {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
