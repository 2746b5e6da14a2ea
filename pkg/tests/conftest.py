import numpy as np
import pytest

from expertgate import SgdConfig, compute_reference_stats, make_task_suite, train_gate


def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance suite's one-line verdicts past output capture."""
    import sys
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    verdicts = getattr(mod, "VERDICTS", None)
    if verdicts:
        terminalreporter.section("acceptance criteria")
        for line in verdicts:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def two_tasks():
    """Two tasks on orthogonal low-dim manifolds, small enough for fast training."""
    return make_task_suite(2, ambient_dim=32, intrinsic_dim=4, classes=3,
                           samples=600, noise=0.2, seed=1)


@pytest.fixture(scope="session")
def shared_stats(two_tasks):
    return compute_reference_stats(two_tasks[0].features, "ref:test")


@pytest.fixture(scope="session")
def trained_gates(two_tasks, shared_stats):
    gates = []
    for i, task in enumerate(two_tasks):
        gate, _ = train_gate(task.features, shared_stats, code_size=8,
                             cfg=SgdConfig(epochs=50, seed=10 + i),
                             task_name=task.task_name)
        gates.append(gate)
    return gates
