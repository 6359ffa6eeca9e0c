import numpy as np
import pytest

from logit3fe.montecarlo import DgpConfig, generate
from logit3fe.panel import Panel, drop_uninformative


def grid_panel(I, J, T, y, X=None, diagonal=True):
    ii, jj, tt = np.meshgrid(np.arange(I), np.arange(J), np.arange(T), indexing="ij")
    keep = np.ones(ii.shape, dtype=bool) if diagonal else (ii != jj)
    n = int(keep.sum())
    if X is None:
        X = np.arange(n, dtype=float)
    return Panel.from_arrays(ii[keep], jj[keep], tt[keep], np.asarray(y, dtype=float), X)


def sim_panel(N, T, seed, rep=0):
    """Pruned simulated panel."""
    return drop_uninformative(generate(DgpConfig(N=N, T=T, seed=seed), rep))[0]


@pytest.fixture(scope="session")
def panel_20x5():
    return sim_panel(20, 5, 7)


# --- acceptance reporting -------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


def report(criterion: str, passed: bool, detail: str) -> None:
    """Record one pass/fail line for the acceptance summary and echo it."""
    line = f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
