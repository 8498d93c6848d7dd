import pathlib

import numpy as np
import pytest

from divfree_dg import PolyMesh, build_structured_mesh, load_mesh

DATA = pathlib.Path(__file__).resolve().parents[1] / "src" / "divfree_dg" / "data"
CYLINDER_MESH = DATA / "meshes" / "cylinder.json"


@pytest.fixture
def two_triangles():
    verts = [[0, 0], [1, 0], [1, 1], [0, 1]]
    return PolyMesh(np.array(verts, float), [[0, 1, 2], [0, 2, 3]])


@pytest.fixture(scope="session")
def tri8():
    return build_structured_mesh("tri", 8, 8)


@pytest.fixture(scope="session")
def quad8():
    return build_structured_mesh("quad", 8, 8)


@pytest.fixture(scope="session")
def cylinder_mesh():
    return load_mesh(CYLINDER_MESH)


@pytest.fixture(scope="session")
def test_meshes(tri8, quad8, cylinder_mesh):
    return {"tri": tri8, "quad": quad8, "poly": cylinder_mesh}


# -- acceptance reporting ----------------------------------------------------------

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion n")


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None or call.when != "call":
        return
    n, title = mark.args
    ok = call.excinfo is None
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    prev = _CRITERIA.get(n)
    _CRITERIA[n] = (title, (prev[1] if prev else True) and ok,
                    "; ".join(d for d in ((prev[2] if prev else ""), detail) if d))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, ok, detail = _CRITERIA[n]
        line = f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
