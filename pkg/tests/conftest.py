import numpy as np
import pytest

from dmimo.cir import DiffusionParams, NoiseModel, build_cir, paired_grid

PAPER_C1 = np.array([60.21, 41.58, 9.11, 8.71, 3.83, 3.74, 18.06])
PAPER_X1 = "1110000101011001"
PAPER_X2 = "1110100011100001"

_acceptance = []


def record(criterion, ok, detail=""):
    """Remember one acceptance line for the end-of-session summary."""
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}"
    _acceptance.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if _acceptance:
        terminalreporter.section("acceptance criteria")
        def order(line):
            tag = line.split()[2].rstrip(":")
            digits = "".join(ch for ch in tag if ch.isdigit())
            return int(digits), tag

        for line in sorted(_acceptance, key=order):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def paper_params():
    return DiffusionParams(D=1e-9, N=1e5, T_int=0.2e-3, L=3)


@pytest.fixture(scope="session")
def paper_topology():
    return paired_grid(400e-9, 200e-9, M=2, rx_radius=50e-9)


@pytest.fixture(scope="session")
def nominal(paper_topology, paper_params):
    return build_cir(paper_topology, paper_params, NoiseModel("relative", 0.3))
