import numpy as np
import pytest

from stochmag.mesh import ElementGeometries, generate_reference_geometry


def grid_geometries(n_side, width=1.0, origin=(0.0, 0.0)):
    """Square cells of a uniform ``n_side`` x ``n_side`` grid as element geometry."""
    h = width / n_side
    i, j = np.meshgrid(np.arange(n_side), np.arange(n_side), indexing="ij")
    lo = np.column_stack([i.ravel() * h, j.ravel() * h]) + np.asarray(origin)
    return ElementGeometries(np.arange(n_side ** 2), np.full(n_side ** 2, h * h), lo + 0.5 * h, lo, lo + h)


@pytest.fixture(scope="session")
def reference_mesh():
    return generate_reference_geometry()


@pytest.fixture(scope="session")
def coarse_mesh():
    return generate_reference_geometry(h=0.004)


_results = {}


def record_acceptance(number, passed, detail=""):
    _results[number] = (passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_results):
        passed, detail = _results[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
