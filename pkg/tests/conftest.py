import numpy as np
import pytest

from yieldnav.field import FieldParams, InflatedObstacle, Window, build_potential
from yieldnav.sim import StaticMap


def walled_room(w=6.0, h=6.0, res=0.1, t=0.5):
    return StaticMap.empty(w, h, res).with_rects(
        [(0, 0, w, t), (0, h - t, w, h), (0, 0, t, h), (w - t, 0, w, h)])


def pmap_from_cells(claimed, res=1.0, goal=None, params=FieldParams(alpha=0.0), dynamic=None):
    """Potential map over a bare window with the given cells claimed as static."""
    claimed = np.asarray(claimed, dtype=bool)
    win = Window((0.0, 0.0), claimed.shape, res)
    obs = [InflatedObstacle("static", claimed.copy(), "static")]
    if dynamic is not None:
        obs += dynamic
    g = goal if goal is not None else (res / 2, res / 2)
    return build_potential(None, obs, g, params, win)


@pytest.fixture
def room():
    return walled_room()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
