"""Brute-force reference answers used to check the fast paths.

Everything here is deliberately naive: repeated full scans, subset
enumeration over bitmasks, and plain distance ordering.
"""
from __future__ import annotations

from itertools import combinations
from typing import Iterable, Optional

import numpy as np

from gsgq.geometry import Rect, contains_point, dist, strictly_inside
from gsgq.graph import SocialGraph


def naive_peel(g: SocialGraph, candidates: Iterable[int], c: int) -> set[int]:
    w = set(candidates)
    changed = True
    while changed:
        changed = False
        for v in sorted(w):
            if sum(1 for u in g.adj[v] if u in w) < c:
                w.discard(v)
                changed = True
    return w


def naive_core_numbers(g: SocialGraph) -> list[int]:
    out = [0] * g.n
    c = 1
    while True:
        core = naive_peel(g, range(g.n), c)
        if not core:
            return out
        for v in core:
            out[v] = c
        c += 1


def _adj_masks(g: SocialGraph, verts: list[int]) -> np.ndarray:
    idx = {v: i for i, v in enumerate(verts)}
    masks = np.zeros(len(verts), dtype=np.int64)
    for i, v in enumerate(verts):
        for u in g.adj[v]:
            j = idx.get(u)
            if j is not None:
                masks[i] |= 1 << j
    return masks


def _all_masks(k: int) -> np.ndarray:
    return np.arange(1 << k, dtype=np.int64)


def _min_degree_ok(masks: np.ndarray, adj: np.ndarray, need) -> np.ndarray:
    """For each subset mask, whether every member has at least ``need`` members as neighbors."""
    ok = np.ones(masks.shape, dtype=bool)
    for i, a in enumerate(adj):
        member = (masks >> i) & 1
        deg = np.bitwise_count(masks & a)
        ok &= (member == 0) | (deg >= need)
    return ok


def has_core_with(g: SocialGraph, owner: int, others: Iterable[int], c: int) -> bool:
    """Whether some subset of ``others`` plus ``owner`` is a c-core, by enumeration."""
    verts = [owner] + sorted(set(others) - {owner})
    if len(verts) > 22:
        raise ValueError("too many users for subset enumeration")
    adj = _adj_masks(g, verts)
    masks = _all_masks(len(verts))
    masks = masks[(masks & 1) == 1]
    return bool(np.any(_min_degree_ok(masks, adj, c)))


def users_strictly_inside(g: SocialGraph, r: Rect, exclude: int = -1) -> list[int]:
    return [u for u in range(g.n) if u != exclude and strictly_inside(g.point(u), r)]


def cbr_valid(g: SocialGraph, v: int, c: int, r: Rect) -> bool:
    """Def. of a user CBR: no c-core containing v among users strictly inside."""
    if not contains_point(r, g.point(v)):
        return False
    return not has_core_with(g, v, users_strictly_inside(g, r, v), c)


def entry_cbr_valid(g: SocialGraph, covered: Iterable[int], c: int, r: Rect, mbr: Rect) -> bool:
    """Entry CBR: touches the MBR and no c-core strictly inside contains a covered user."""
    if not (r.x0 <= mbr.x1 and mbr.x0 <= r.x1 and r.y0 <= mbr.y1 and mbr.y0 <= r.y1):
        return False
    inside = users_strictly_inside(g, r)
    for v in covered:
        if v in inside and has_core_with(g, v, inside, c):
            return False
    return True


def next_edge_positions(g: SocialGraph, v: int, r: Rect, domain: Rect) -> list[Optional[Rect]]:
    """The rect with each edge pushed to the next user beyond it (None when at the domain edge)."""
    out: list[Optional[Rect]] = []
    pts = g.points
    for edge in range(4):
        axis = edge % 2
        lo_o, hi_o = (r.y0, r.y1) if axis == 0 else (r.x0, r.x1)
        cur = r[edge]
        limit = domain[edge]
        if cur == limit:
            out.append(None)
            continue
        outward = -1.0 if edge < 2 else 1.0
        beyond = [pts[u, axis] for u in range(g.n)
                  if u != v and lo_o < pts[u, 1 - axis] < hi_o and outward * (pts[u, axis] - cur) > 0]
        if beyond:
            nxt = max(beyond) if edge < 2 else min(beyond)
        else:
            nxt = limit
        vals = list(r)
        vals[edge] = nxt
        out.append(Rect(*vals))
    return out


def cbr_maximal(g: SocialGraph, v: int, c: int, r: Rect, domain: Rect) -> bool:
    for grown in next_edge_positions(g, v, r, domain):
        if grown is not None and cbr_valid(g, v, c, grown):
            return False
    return True


def brute_range(g: SocialGraph, v: int, rng: Rect, c: int) -> set[int]:
    inside = [u for u in range(g.n) if contains_point(rng, g.point(u))]
    core = naive_peel(g, inside, c)
    if v not in core:
        return set()
    return core - {v}


def brute_rknn(g: SocialGraph, v: int, k: int, c: int) -> tuple[set[int], float]:
    """Grow by distance until the issuer sits in a c-core with at least k others."""
    pv = g.point(v)
    order = sorted(range(g.n), key=lambda u: (dist(pv, g.point(u)), u))
    taken: list[int] = []
    for u in order:
        taken.append(u)
        core = naive_peel(g, taken, c)
        if v in core and len(core) >= k + 1:
            w = core - {v}
            return w, max(dist(pv, g.point(x)) for x in w)
    return set(), float("inf")


def brute_knn(g: SocialGraph, v: int, k: int, c: int) -> tuple[set[int], float]:
    """Exact group of k others forming a c-core with v, minimising the farthest distance.

    Candidates are taken as the farthest member in distance order; the rest of
    the group is enumerated among nearer users.
    """
    if k < 1 or k + 1 > g.n:
        return set(), float("inf")
    pv = g.point(v)
    others = sorted((u for u in range(g.n) if u != v), key=lambda u: (dist(pv, g.point(u)), u))
    d = {u: dist(pv, g.point(u)) for u in others}
    for fi, f in enumerate(others):
        if fi < k - 1:
            continue
        pool = others[:fi]
        verts = [v, f] + pool
        adj = _adj_masks(g, verts)
        base = 0b11
        if k - 1 == 0:
            masks = np.array([base], dtype=np.int64)
        else:
            combos = np.array(list(combinations(range(2, len(verts)), k - 1)), dtype=np.int64)
            masks = np.bitwise_or.reduce(np.left_shift(1, combos), axis=1) | base
        ok = _min_degree_ok(masks, adj, c)
        if np.any(ok):
            m = int(masks[np.argmax(ok)])
            w = {verts[i] for i in range(1, len(verts)) if (m >> i) & 1}
            return w, d[f]
    return set(), float("inf")


def max_kplex_size(g: SocialGraph, cbar: int) -> int:
    verts = list(range(g.n))
    if not verts:
        return 0
    adj = _adj_masks(g, verts)
    masks = _all_masks(len(verts))[1:]
    size = np.bitwise_count(masks).astype(np.int64)
    ok = _min_degree_ok(masks, adj, size - cbar)
    return int(size[ok].max())


def spatial_knn(g: SocialGraph, v: int, k: int) -> set[int]:
    pv = g.point(v)
    order = sorted((u for u in range(g.n) if u != v), key=lambda u: (dist(pv, g.point(u)), u))
    return set(order[:k])


def min_internal_degree(g: SocialGraph, w: Iterable[int]) -> int:
    w = set(w)
    if not w:
        return 0
    return min(sum(1 for u in g.adj[x] if u in w) for x in w)
