import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from quantgroup import groups as G

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ALL_GROUPS = [
    G.euclidean(1),
    G.euclidean(2),
    G.affine(),
    G.affine_line(),
    G.bianchi("IV"),
    G.bianchi("V"),
    G.bianchi("VI", 0.5),
    G.bianchi("VII", 1.0),
]


def group_points(g, count=None):
    """Strategy for valid chart points of ``g`` (arrays of shape (d,) or (count, d))."""
    coord = st.floats(-3.0, 3.0, allow_nan=False, allow_infinity=False)
    pos = st.floats(-2.0, 2.0, allow_nan=False, allow_infinity=False).map(np.exp)
    shape = (g.chart_dim,) if count is None else (count, g.chart_dim)

    def build(vals):
        arr = np.array(vals, dtype=float).reshape(shape)
        return arr

    per_point = [pos if (g.kind in ("affine", "affine_line") and k == 0) else coord
                 for k in range(g.chart_dim)]
    n = 1 if count is None else count
    return st.tuples(*(per_point * n)).map(build)


@pytest.fixture(params=ALL_GROUPS, ids=lambda g: g.label)
def any_group(request):
    return request.param


ACCEPTANCE_LINES = pytest.StashKey[list]()


@pytest.fixture
def line(request):
    """Record one summary line per acceptance criterion."""
    def emit(number, title, ok, detail):
        text = f"criterion {number} {title}: {'PASS' if ok else 'FAIL'} ({detail})"
        request.config.stash.setdefault(ACCEPTANCE_LINES, []).append((number, text))
        print(text)
    return emit


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, text in sorted(lines):
            terminalreporter.write_line(text)
