import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dita.env import GridRoom, ObjectInstance

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_room(rows: list[str], objects=(), preset="handmade", seed=0) -> GridRoom:
    """Room from an ASCII map ('#' blocked, '.' free) and (type_id, (x, y), size, band) tuples."""
    occ = np.array([[c == "#" for c in r] for r in rows], dtype=bool)
    objs = tuple(ObjectInstance(t, pos, size, band, i) for i, (t, pos, size, band) in enumerate(objects))
    return GridRoom(len(rows[0]), len(rows), occ, objs, preset, seed)


@pytest.fixture
def open_room():
    # 8x8 open room, one mid-band object of size 0.5 m at (4, 1)
    return make_room(["." * 8] * 8, [(0, (4, 1), 0.5, "mid"), (1, (1, 6), 0.3, "low")])


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(lines):
        terminalreporter.write_line(lines[n])
