import pytest

from linkspy import _kernels
from linkspy.sim_core import LatencyModel, Simulator, build_topology

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session", autouse=True)
def _jit_warm():
    # compile once so timing assertions measure the experiments, not numba
    _kernels.warmup()


@pytest.fixture
def quiet_topology():
    return build_topology(latency_model=LatencyModel(noise_sigma_cycles=0.0))


@pytest.fixture
def quiet_sim(quiet_topology):
    return Simulator(quiet_topology)


@pytest.fixture
def record_acceptance():
    def record(label, ok, detail=""):
        ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] {label}  {detail}".rstrip())
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
