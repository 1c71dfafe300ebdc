import math

import numpy as np
import pytest
from hypothesis import strategies as st

from setpred3d.geom3d import Box3D

_ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture
def acceptance_log():
    """Record one acceptance line: ``(criterion, passed, detail)``."""
    def log(name: str, passed: bool, detail: str = "") -> None:
        _ACCEPTANCE.append((name, bool(passed), detail))
    return log


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in sorted(_ACCEPTANCE):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}  {detail}")


coords = st.floats(-5.0, 5.0, allow_nan=False)
dims = st.floats(0.1, 5.0, allow_nan=False)
angles = st.floats(-10.0, 10.0, allow_nan=False)


@st.composite
def boxes3d(draw):
    return Box3D(draw(coords), draw(coords), draw(coords), draw(dims), draw(dims), draw(dims), draw(angles))


def random_box(rng: np.random.Generator, near: Box3D | None = None) -> Box3D:
    """Random box; when ``near`` is given the two usually overlap."""
    w, l, h = rng.uniform(0.5, 4.0, 3)
    yaw = rng.uniform(-math.pi, math.pi)
    if near is None:
        cx, cy, cz = rng.uniform(-3, 3, 3)
    else:
        cx, cy, cz = np.array(near.center) + rng.normal(0, 0.8, 3)
    return Box3D(float(cx), float(cy), float(cz), float(w), float(l), float(h), float(yaw))


def rotate_about_origin(b: Box3D, angle: float, shift=(0.0, 0.0, 0.0)) -> Box3D:
    c, s = math.cos(angle), math.sin(angle)
    return Box3D(b.cx * c - b.cy * s + shift[0], b.cx * s + b.cy * c + shift[1], b.cz + shift[2],
                 b.w, b.l, b.h, b.yaw + angle)
