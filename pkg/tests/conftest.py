import os
import re

import numpy as np
import pytest

from willmore import generators as gen
from willmore.mesh import TriMesh


def pytest_collection_modifyitems(config, items):
    if os.environ.get("WILLMORE_EXTENDED") == "1":
        return
    skip = pytest.mark.skip(reason="extended run; set WILLMORE_EXTENDED=1")
    for item in items:
        if "extended" in item.keywords:
            item.add_marker(skip)


def pytest_terminal_summary(terminalreporter):
    """One line per acceptance criterion, recorded by tests/test_acceptance.py."""
    lines = []
    for key in ("passed", "failed"):
        for rep in terminalreporter.stats.get(key, []):
            if rep.when != "call":
                continue
            for name, value in rep.user_properties:
                if name == "criterion":
                    n, text = value
                    lines.append((n, f"criterion {n:2d}: {'PASS' if rep.passed else 'FAIL'}  {text}"))
    for rep in terminalreporter.stats.get("skipped", []):
        m = re.search(r"test_c(\d+)_", rep.nodeid)
        if m:
            n = int(m.group(1))
            lines.append((n, f"criterion {n:2d}: SKIP  {rep.longrepr[2]}"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)


def random_rotation(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def central_diff(f, x, idx, h):
    """Central differences of scalar f at the flat coordinates idx of x."""
    out = []
    for k in idx:
        xp, xm = x.copy(), x.copy()
        xp.flat[k] += h
        xm.flat[k] -= h
        out.append((f(xp) - f(xm)) / (2 * h))
    return np.array(out)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def cube():
    return gen.unit_cube()


@pytest.fixture(scope="session")
def tetra():
    return gen.tetrahedron()


@pytest.fixture(scope="session")
def octa():
    return gen.octahedron()


@pytest.fixture(scope="session")
def fine_sphere():
    return gen.sphere_mesh("icosahedron", 3, project=True)


@pytest.fixture(scope="session")
def bumpy_torus():
    return gen.perturb(gen.revolution_torus(8, 10, 2.0, 0.8), 0.03, seed=3)


@pytest.fixture(scope="session")
def bumpy_sphere():
    return gen.perturb(gen.sphere_mesh("octahedron", 1, project=True), 0.03, seed=4)


def hexagon_fan(r=1.0, z=0.0):
    """Planar regular hexagon 1-ring around vertex 0 (open surface)."""
    t = np.arange(6) * np.pi / 3
    x = np.vstack([[0.0, 0.0, z], np.c_[r * np.cos(t), r * np.sin(t), np.zeros(6)]])
    f = [(0, 1 + i, 1 + (i + 1) % 6) for i in range(6)]
    return TriMesh(x, np.array(f))
