import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gsgq.geometry import Rect, contains_point, intersects
from gsgq.index.rtree import RTree, quadratic_split, Entry


def pt(p):
    return Rect(p[0], p[1], p[0], p[1])


@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=1, max_size=120),
       st.integers(4, 9))
@settings(max_examples=40)
def test_insert_then_search_finds_everything(pts, fanout):
    t = RTree(fanout)
    for i, p in enumerate(pts):
        t.insert(i, pt(p))
    t.check()
    assert sorted(t.search(Rect(0, 0, 1, 1))) == list(range(len(pts)))
    q = Rect(0.2, 0.3, 0.7, 0.9)
    assert sorted(t.search(q)) == [i for i, p in enumerate(pts) if contains_point(q, p)]


@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=2, max_size=80), st.data())
@settings(max_examples=40)
def test_delete_keeps_tree_valid(pts, data):
    t = RTree(5)
    for i, p in enumerate(pts):
        t.insert(i, pt(p))
    gone = data.draw(st.sets(st.integers(0, len(pts) - 1)))
    for i in gone:
        assert t.delete(i, pt(pts[i]))
    t.check()
    assert sorted(t.search(Rect(0, 0, 1, 1))) == sorted(set(range(len(pts))) - gone)
    assert not t.delete(next(iter(gone)), pt(pts[next(iter(gone))])) if gone else True


def test_single_user_is_a_root_leaf():
    t = RTree(8)
    t.insert(0, pt((0.5, 0.5)))
    assert t.root.leaf and len(t.root.entries) == 1


def test_quadratic_split_respects_min_fill():
    rng = np.random.default_rng(1)
    es = [Entry(pt(p), None, i) for i, p in enumerate(rng.random((11, 2)))]
    a, b = quadratic_split(es, 4)
    assert len(a) >= 4 and len(b) >= 4
    assert sorted(e.item for e in a + b) == list(range(11))


def test_bad_fanout_rejected():
    with pytest.raises(ValueError):
        RTree(1)
    with pytest.raises(ValueError):
        RTree(6, 4)


def test_mbrs_cover_children():
    rng = np.random.default_rng(3)
    t = RTree(6)
    for i, p in enumerate(rng.random((300, 2))):
        t.insert(i, pt(p))
    for nd in t.nodes():
        for e in nd.entries:
            if e.child is not None:
                for k in e.child.entries:
                    assert intersects(e.mbr, k.mbr) and e.mbr.x0 <= k.mbr.x0 and k.mbr.x1 <= e.mbr.x1
