from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from pinning.network import CouplingMatrix, from_weighted_adjacency

ROOT = Path(__file__).resolve().parents[1]
SPECS = ROOT / "specs"

_ACCEPTANCE: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion."""

    def record(key: str, passed: bool, detail: str = "") -> None:
        _ACCEPTANCE[key] = (bool(passed), detail)
        print(f"[{'PASS' if passed else 'FAIL'}] {key}: {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")

    def order(key: str):
        head = key.split(" ", 1)[0].rstrip(".")
        return (int(head) if head.isdigit() else 99, key)

    for key in sorted(_ACCEPTANCE, key=order):
        passed, detail = _ACCEPTANCE[key]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {key}: {detail}")


def random_connected_symmetric(rng: np.random.Generator, m: int, extra: float = 0.2) -> CouplingMatrix:
    """Symmetric irreducible coupling matrix: random spanning tree plus extra edges.

    Weights are uniform on (0, 1].
    """
    w = np.zeros((m, m))
    order = rng.permutation(m)
    for k in range(1, m):
        i, j = order[k], order[rng.integers(k)]
        w[i, j] = w[j, i] = 1.0 - rng.random()
    iu = np.triu_indices(m, 1)
    mask = rng.random(len(iu[0])) < extra
    vals = 1.0 - rng.random(mask.sum())
    w[iu[0][mask], iu[1][mask]] = vals
    w[iu[1][mask], iu[0][mask]] = vals
    return from_weighted_adjacency(w)


def random_strongly_connected(rng: np.random.Generator, m: int, extra: float = 0.2) -> CouplingMatrix:
    """Directed irreducible coupling matrix: a random Hamiltonian cycle plus extra arcs."""
    w = np.where(rng.random((m, m)) < extra, 1.0 - rng.random((m, m)), 0.0)
    order = rng.permutation(m)
    for k in range(m):
        w[order[(k + 1) % m], order[k]] = 1.0 - rng.random()
    np.fill_diagonal(w, 0.0)
    return from_weighted_adjacency(w)
