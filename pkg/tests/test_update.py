import random

import numpy as np
import pytest

from gsgq.geometry import Point, Rect
from gsgq.graph import core_decompose
from gsgq.index.build import build
from gsgq.oracles import naive_peel, users_strictly_inside
from gsgq.query import QuerySpec, Range, RelaxedKnn, StrictKnn, run_query
from gsgq.update import (EdgeAdd, EdgeRemove, LocationMove, UpdateError, UpdateState, format_op,
                         memo_query, parse_ops, random_stream, rule1_flags, rule2_flags)

from conftest import synth


def test_parse_and_format_round_trip():
    ops = [LocationMove(3, Point(0.25, 0.5)), EdgeAdd(1, 2), EdgeRemove(4, 5),
           LocationMove(2, Point(0.1, 0.2), Point(0.3, 0.4))]
    assert parse_ops([format_op(o) for o in ops]) == ops


def test_parse_reports_line_number():
    with pytest.raises(UpdateError, match="line 3"):
        parse_ops(["# header", "E+ 1 2", "M 1 x 0.3"])


def test_rule1_needs_entry_from_outside():
    cbr = Rect(0.2, 0.2, 0.6, 0.6)
    core = [4, 4]
    assert rule1_flags(LocationMove(0, Point(0.4, 0.4), Point(0.9, 0.9)), cbr, 4, core)
    assert not rule1_flags(LocationMove(0, Point(0.4, 0.4), Point(0.3, 0.3)), cbr, 4, core)
    assert not rule1_flags(LocationMove(0, Point(0.4, 0.4), Point(0.9, 0.9)), cbr, 8, core)


def test_rule2_ignores_removals(g400):
    cbr = Rect(0.0, 0.0, 1.0, 1.0)
    core = core_decompose(g400).core_number
    assert not rule2_flags(EdgeRemove(0, 1), cbr, 1, core, g400)


def test_bad_updates_rejected(g400):
    st = UpdateState(build(g400.copy(), "sar", 512), 10)
    with pytest.raises(UpdateError):
        st.apply(LocationMove(g400.n + 5, Point(0.1, 0.1)))
    u, v = next(iter(st.g.edges()))
    with pytest.raises(UpdateError):
        st.apply(EdgeAdd(u, v))
    with pytest.raises(UpdateError):
        st.apply(LocationMove(0, Point(float("nan"), 0.1)))


def test_stream_is_seeded(g400):
    assert random_stream(g400, 200, seed=4) == random_stream(g400, 200, seed=4)
    ops = random_stream(g400, 2000, seed=5)
    social = sum(not isinstance(o, LocationMove) for o in ops)
    assert 40 <= social <= 170


def test_removals_and_moves_out_never_recompute():
    g = synth(120, 500, 3, seed=6)
    st = UpdateState(build(g, "sar", 512), 1000)
    rng = random.Random(0)
    for _ in range(30):
        u, v = rng.choice(list(st.g.edges()))
        st.apply(EdgeRemove(u, v))
    assert st.batch_refresh().recomputed == 0


def _valid(g, u, c, r):
    return u not in naive_peel(g, users_strictly_inside(g, r, u) + [u], c)


@pytest.mark.parametrize("kind", ["sar", "sarstar"])
def test_memo_answers_match_rebuild(kind):
    g0 = synth(150, 650, 4, seed=2)
    ops = random_stream(g0, 600, seed=9)
    rng = random.Random(3)
    for batch in (1, 50, 600):
        g = g0.copy()
        st = UpdateState(build(g, kind, 512), batch)
        for i, op in enumerate(ops):
            st.apply(op)
            if (i + 1) % 200:
                continue
            snap, mf = st.snapshot(), st.memo_filter()
            fresh = build(g.copy(), kind, 512).snapshot()
            for _ in range(5):
                v, c = rng.randrange(g.n), rng.randint(1, 4)
                p, h = g.point(v), rng.uniform(0.05, 0.3)
                rect = Rect(max(0, p[0] - h), max(0, p[1] - h), min(1, p[0] + h), min(1, p[1] + h))
                q = QuerySpec(v, Range(rect), c)
                assert memo_query(snap, g, mf, q).members == run_query(fresh, g, q).members
                for q in (QuerySpec(v, RelaxedKnn(rng.randint(1, 15)), c), QuerySpec(v, StrictKnn(rng.randint(1, 4)), c)):
                    assert memo_query(snap, g, mf, q).d_max == run_query(fresh, g, q).d_max
        st.batch_refresh()
        st.tree.check()
        for u in range(g.n):
            for lc, r in st.built.ladders[u].levels:
                assert _valid(g, u, lc, r)
