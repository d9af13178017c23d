import numpy as np
import pytest
from hypothesis import settings, strategies as st

from gsgq.graph import SocialGraph
from gsgq.workbench import synth_graph

# first calls pay for jit compilation
settings.register_profile("default", deadline=None)
settings.load_profile("default")


def synth(n, m, clusters=3, seed=0, **kw) -> SocialGraph:
    s = synth_graph(n, m, clusters, seed=seed, **kw)
    return SocialGraph(s.points, s.edges)


@st.composite
def small_graphs(draw, min_n=1, max_n=12, p_edge=None):
    n = draw(st.integers(min_n, max_n))
    coords = st.floats(0.0, 1.0, allow_nan=False, width=32)
    pts = draw(st.lists(st.tuples(coords, coords), min_size=n, max_size=n))
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n)]
    mask = draw(st.lists(st.booleans(), min_size=len(pairs), max_size=len(pairs)))
    return SocialGraph(np.array(pts, dtype=np.float64).reshape(-1, 2), [e for e, k in zip(pairs, mask) if k])


@pytest.fixture(scope="session")
def g400():
    return synth(400, 1800, 6, seed=5)


# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict[int, str] = {}


def record(num: int, name: str, ok: bool, detail: str) -> None:
    line = f"criterion {num:>2} {'PASS' if ok else 'FAIL'}  {name}: {detail}"
    ACCEPTANCE[num] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for num in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[num])
