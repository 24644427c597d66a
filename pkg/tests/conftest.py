import numpy as np
import pytest

from limitfrac.config import build_config
from limitfrac.mesh import Mesh
from limitfrac.sim import run_quasi_static

ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int("".join(c for c in k if c.isdigit())), k)):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'} - {detail}")


@pytest.fixture
def record():
    """Store an acceptance outcome for the terminal summary and echo it."""

    def _record(key, ok, detail):
        ACCEPTANCE[key] = (bool(ok), detail)
        print(f"criterion {key}: {'PASS' if ok else 'FAIL'} - {detail}")
        return ok

    return _record


def two_triangle_square() -> Mesh:
    """Unit square split along the (0,0)-(1,1) diagonal."""
    v = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    return Mesh.from_arrays(v, [[0, 1, 2], [0, 2, 3]])


class ScaledRun:
    """Scaled edge-crack run with a per-step trace."""

    def __init__(self, driver, **overrides):
        values = dict(n_steps=24, dt=0.1, snapshot_every=0, driver=driver)
        values.update(overrides)
        self.cfg = build_config(values)
        self.steps = []  # (step, mesh, v values, cr nodes, warning, estimate)
        self.final = run_quasi_static(self.cfg, write=False, callback=self._collect)

    def _collect(self, state):
        self.steps.append(
            (state.step, state.mesh, state.v.values.copy(), state.cr_nodes.copy(), state.warning, state.estimate)
        )


@pytest.fixture(scope="session")
def run_I():
    return ScaledRun("I")


@pytest.fixture(scope="session")
def run_II():
    return ScaledRun("II")
