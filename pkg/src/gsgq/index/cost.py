"""Spatial-social clustering cost and the insertion/split policy built on it.

The cost of a user group is the area of its MBR times, summed over CBR
levels, the area covered by some member's CBR but not by the group's
combined CBR. Low cost means members share their CBRs, so the combined
entry CBR stays large and prunes well.
"""
from __future__ import annotations

from functools import lru_cache
from itertools import combinations
from typing import Optional, Sequence

import numpy as np
from numba import njit

from gsgq._kernels import union_area
from gsgq.cbr import CbrLadder
from gsgq.index.rtree import Entry, Node, RTree, area, enlargement, pick_seeds
from gsgq.geometry import Rect, union_rect


class UserRects:
    """Per-user CBR at every level index, the top level standing in for missing ones.

    Users with core number 0 have no CBRs and take no part in the social term.
    """

    def __init__(self, ladders: Sequence[CbrLadder], points: np.ndarray):
        n = len(ladders)
        self.nlev = np.array([len(l) for l in ladders], dtype=np.int64)
        self.L = int(self.nlev.max()) if n else 0
        self.R = np.zeros((n, max(self.L, 1), 4))
        for u, lad in enumerate(ladders):
            if not lad.levels:
                continue
            rs = [r for _, r in lad.levels]
            for l in range(self.L):
                self.R[u, l] = rs[min(l, len(rs) - 1)]
        self.xs = np.ascontiguousarray(points[:, 0], dtype=np.float64)
        self.ys = np.ascontiguousarray(points[:, 1], dtype=np.float64)

    def set_ladder(self, u: int, lad: CbrLadder) -> None:
        rs = [r for _, r in lad.levels]
        if len(rs) > self.L:
            grown = np.zeros((self.R.shape[0], len(rs), 4))
            grown[:, : self.R.shape[1]] = self.R
            for l in range(self.R.shape[1], len(rs)):
                grown[:, l] = self.R[:, -1]
            self.R = grown
            self.L = len(rs)
        self.nlev[u] = len(rs)
        if rs:
            for l in range(self.R.shape[1]):
                self.R[u, l] = rs[min(l, len(rs) - 1)]

    def move(self, u: int, p) -> None:
        self.xs[u], self.ys[u] = p[0], p[1]


@njit(cache=True)
def _fold(rects, px, py):
    """Left fold of member CBRs; a member whose point misses the accumulator is skipped.

    Returns (x0, y0, x1, y1, dead).
    """
    x0, y0, x1, y1 = rects[0, 0], rects[0, 1], rects[0, 2], rects[0, 3]
    for i in range(1, rects.shape[0]):
        if not (x0 <= px[i] <= x1 and y0 <= py[i] <= y1):
            continue
        a = max(x0, rects[i, 0])
        b = max(y0, rects[i, 1])
        c = min(x1, rects[i, 2])
        d = min(y1, rects[i, 3])
        if a > c or b > d:
            return x0, y0, x1, y1, True
        x0, y0, x1, y1 = a, b, c, d
    return x0, y0, x1, y1, False


@njit(cache=True)
def _fold_step(acc, dead, r, px, py):
    if dead or not (acc[0] <= px <= acc[2] and acc[1] <= py <= acc[3]):
        return acc[0], acc[1], acc[2], acc[3], dead
    a = max(acc[0], r[0])
    b = max(acc[1], r[1])
    c = min(acc[2], r[2])
    d = min(acc[3], r[3])
    if a > c or b > d:
        return acc[0], acc[1], acc[2], acc[3], True
    return a, b, c, d, False


@njit(cache=True)
def _kept_area(x0, y0, x1, y1, dead, mx0, my0, mx1, my1):
    # a fold that stops touching the group MBR degenerates to a point
    if dead or x0 > mx1 or mx0 > x1 or y0 > my1 or my0 > y1:
        return 0.0
    return (x1 - x0) * (y1 - y0)


@njit(cache=True)
def covered_within(rects, m, r):
    """Area of r covered by the union of rects[:m]."""
    ra = (r[2] - r[0]) * (r[3] - r[1])
    if ra <= 0.0:
        return 0.0
    clipped = np.empty((m, 4))
    k = 0
    for i in range(m):
        a = max(rects[i, 0], r[0])
        b = max(rects[i, 1], r[1])
        c = min(rects[i, 2], r[2])
        d = min(rects[i, 3], r[3])
        if c > a and d > b:
            if a == r[0] and b == r[1] and c == r[2] and d == r[3]:
                return ra
            clipped[k, 0] = a
            clipped[k, 1] = b
            clipped[k, 2] = c
            clipped[k, 3] = d
            k += 1
    if k == 0:
        return 0.0
    return union_area(clipped[:k])


@njit(cache=True)
def group_cost(ids, R, nlev, xs, ys):
    m = ids.size
    if m == 0:
        return 0.0
    mx0 = mx1 = xs[ids[0]]
    my0 = my1 = ys[ids[0]]
    L = 0
    na = 0
    for i in range(m):
        u = ids[i]
        mx0 = min(mx0, xs[u])
        mx1 = max(mx1, xs[u])
        my0 = min(my0, ys[u])
        my1 = max(my1, ys[u])
        if nlev[u] > 0:
            na += 1
            L = max(L, nlev[u])
    box = (mx1 - mx0) * (my1 - my0)
    if na == 0 or box == 0.0:
        return 0.0
    act = np.empty(na, np.int64)
    j = 0
    for i in range(m):
        if nlev[ids[i]] > 0:
            act[j] = ids[i]
            j += 1
    px = xs[act]
    py = ys[act]
    total = 0.0
    rects = np.empty((na, 4))
    for l in range(L):
        for i in range(na):
            rects[i] = R[act[i], l]
        x0, y0, x1, y1, dead = _fold(rects, px, py)
        total += union_area(rects) - _kept_area(x0, y0, x1, y1, dead, mx0, my0, mx1, my1)
    return box * total


def clustering_cost(g, users, ladders: Sequence[CbrLadder]) -> float:
    """Clustering cost of ``users`` (in the given order) against their CBR ladders."""
    ids = np.fromiter(users, dtype=np.int64)
    ur = UserRects(ladders, g.points)
    return float(group_cost(ids, ur.R, ur.nlev, ur.xs, ur.ys))


class GroupStats:
    """Incrementally maintained cost terms for the users under one node."""

    def __init__(self, ur: UserRects, members: Sequence[int] = ()):
        self.ur = ur
        self.members: list[int] = []
        self.mbr: Optional[Rect] = None
        Lg = max(ur.R.shape[1], 1)
        self.cap = 8
        self.AR = np.empty((Lg, self.cap, 4))
        self.AP = np.empty((2, self.cap))
        self.m = 0
        self.L = 0
        self.U = np.zeros(Lg)
        self.acc = np.zeros((Lg, 4))
        self.dead = np.zeros(Lg, dtype=bool)
        for u in members:
            self.add(u)

    def _kept(self, l: int, acc, dead, mbr: Rect) -> float:
        return _kept_area(acc[0], acc[1], acc[2], acc[3], dead, *mbr)

    def waste(self, mbr: Optional[Rect] = None) -> float:
        mbr = self.mbr if mbr is None else mbr
        return float(sum(self.U[l] - self._kept(l, self.acc[l], self.dead[l], mbr) for l in range(self.L)))

    def cost(self) -> float:
        if self.mbr is None:
            return 0.0
        return area(self.mbr) * self.waste()

    def lower_bound(self, p) -> float:
        """Cost after adding a user at ``p`` is never below this."""
        if self.mbr is None:
            return 0.0
        grown = union_rect(self.mbr, Rect(p[0], p[1], p[0], p[1]))
        raw = sum(self.U[l] - (0.0 if self.dead[l] else area(Rect(*self.acc[l]))) for l in range(self.L))
        return area(grown) * max(raw, 0.0)

    def _grow(self) -> None:
        self.cap *= 2
        AR = np.empty((self.AR.shape[0], self.cap, 4))
        AR[:, : self.m] = self.AR[:, : self.m]
        AP = np.empty((2, self.cap))
        AP[:, : self.m] = self.AP[:, : self.m]
        self.AR, self.AP = AR, AP

    def _sync_levels(self) -> None:
        Lg = self.ur.R.shape[1]
        if Lg > self.AR.shape[0]:
            AR = np.empty((Lg, self.cap, 4))
            AR[: self.AR.shape[0]] = self.AR
            self.AR = AR
            U = np.zeros(Lg)
            U[: len(self.U)] = self.U
            acc = np.zeros((Lg, 4))
            acc[: len(self.acc)] = self.acc
            dead = np.zeros(Lg, dtype=bool)
            dead[: len(self.dead)] = self.dead
            self.U, self.acc, self.dead = U, acc, dead

    def _terms_with(self, u: int):
        """Union areas and folds per level after a hypothetical addition of u."""
        ur = self.ur
        nl = int(ur.nlev[u])
        px, py = ur.xs[u], ur.ys[u]
        L = max(self.L, nl)
        U = self.U[:L].copy()
        acc = self.acc[:L].copy()
        dead = self.dead[:L].copy()
        for l in range(L):
            r = ur.R[u, l]
            if l < self.L and self.m > 0:
                U[l] += (r[2] - r[0]) * (r[3] - r[1]) - covered_within(self.AR[l], self.m, r)
                a0, a1, a2, a3, dd = _fold_step(acc[l], dead[l], r, px, py)
                acc[l] = (a0, a1, a2, a3)
                dead[l] = dd
            else:
                rects = np.empty((self.m + 1, 4))
                rects[: self.m] = self.AR[l, : self.m]
                rects[self.m] = r
                pxs = np.append(self.AP[0, : self.m], px)
                pys = np.append(self.AP[1, : self.m], py)
                U[l] = union_area(rects)
                a0, a1, a2, a3, dd = _fold(rects, pxs, pys)
                acc[l] = (a0, a1, a2, a3)
                dead[l] = dd
        return L, U, acc, dead

    def cost_with(self, u: int) -> float:
        ur = self.ur
        p = (ur.xs[u], ur.ys[u])
        mbr = Rect(p[0], p[1], p[0], p[1]) if self.mbr is None else union_rect(self.mbr, Rect(p[0], p[1], p[0], p[1]))
        if ur.nlev[u] == 0:
            return area(mbr) * self.waste(mbr)
        L, U, acc, dead = self._terms_with(u)
        w = sum(U[l] - self._kept(l, acc[l], dead[l], mbr) for l in range(L))
        return area(mbr) * w

    def add(self, u: int) -> None:
        ur = self.ur
        p = Rect(ur.xs[u], ur.ys[u], ur.xs[u], ur.ys[u])
        self.members.append(u)
        self.mbr = p if self.mbr is None else union_rect(self.mbr, p)
        if ur.nlev[u] == 0:
            return
        self._sync_levels()
        L, U, acc, dead = self._terms_with(u)
        self.L = L
        self.U[:L], self.acc[:L], self.dead[:L] = U, acc, dead
        if self.m == self.cap:
            self._grow()
        self.AR[:, self.m] = ur.R[u, : self.AR.shape[0]]
        self.AP[0, self.m], self.AP[1, self.m] = ur.xs[u], ur.ys[u]
        self.m += 1


@lru_cache(maxsize=None)
def _bipartitions(n: int, s: int) -> np.ndarray:
    """Masks of the first group, entry 0 always in it so each bipartition appears once."""
    out = []
    for k in range(0, n - 1):
        for combo in combinations(range(1, n), k):
            if s <= k + 1 <= n - s:
                out.append(sum(1 << i for i in (0,) + combo))
    return np.array(out, dtype=np.int64)


@njit(cache=True)
def _best_bipartition(masks, flat, offs, n, R, nlev, xs, ys):
    """Index of the first mask with the least summed cost; members keep entry order."""
    b1 = np.empty(flat.size, np.int64)
    b2 = np.empty(flat.size, np.int64)
    best, best_cost = -1, 0.0
    for t in range(masks.size):
        m = masks[t]
        a = b = 0
        for i in range(n):
            first = (m >> i) & 1
            for j in range(offs[i], offs[i + 1]):
                if first:
                    b1[a] = flat[j]
                    a += 1
                else:
                    b2[b] = flat[j]
                    b += 1
        c = group_cost(b1[:a], R, nlev, xs, ys) + group_cost(b2[:b], R, nlev, xs, ys)
        if best < 0 or c < best_cost:
            best, best_cost = t, c
    return best


def _ids(users) -> np.ndarray:
    return np.fromiter(users, dtype=np.int64)


class SarStarPolicy:
    """Insertion and split driven by the clustering cost.

    choose_subtree picks the child whose group cost after adding the user is
    smallest. Exact costs are only computed for children whose lower bound
    can still win; ties fall back to least MBR enlargement, then area, then
    entry order.

    Node statistics only grow. Deleting or moving a user leaves them stale
    until the node is split; that can only cost clustering quality, never
    correctness, since queries read MBRs, cores and CBRs from the entries.
    """

    exhaustive_limit = 12

    def __init__(self, ur: UserRects):
        self.ur = ur

    def stats(self, tree: RTree, node: Node) -> GroupStats:
        if node.stats is None:
            node.stats = GroupStats(self.ur, tree.items_under(node))
        return node.stats

    def entry_users(self, tree: RTree, e: Entry) -> list[int]:
        return [e.item] if e.child is None else self.stats(tree, e.child).members

    def choose_subtree(self, tree: RTree, node: Node, entry: Entry) -> int:
        if entry.child is not None:
            users = tree.items_under(entry.child)
            best, best_key = 0, None
            for i, e in enumerate(node.entries):
                ids = _ids(self.stats(tree, e.child).members + users)
                c = float(group_cost(ids, self.ur.R, self.ur.nlev, self.ur.xs, self.ur.ys))
                key = (c, enlargement(e.mbr, entry.mbr), area(e.mbr), i)
                if best_key is None or key < best_key:
                    best, best_key = i, key
            return best
        u = entry.item
        p = (self.ur.xs[u], self.ur.ys[u])
        cands = []
        for i, e in enumerate(node.entries):
            st = self.stats(tree, e.child)
            cands.append((st.lower_bound(p), enlargement(e.mbr, entry.mbr), area(e.mbr), i, st))
        cands.sort(key=lambda t: t[:4])
        best_key = None
        for lb, enl, ar, i, st in cands:
            if best_key is not None and lb > best_key[0]:
                break
            key = (st.cost_with(u), enl, ar, i)
            if best_key is None or key < best_key:
                best_key = key
        return best_key[3]

    def inserted(self, tree: RTree, path: list[Node], entry: Entry) -> None:
        for nd in path:
            if nd.stats is None:
                continue
            if entry.child is None:
                nd.stats.add(entry.item)
            else:
                nd.stats = None

    def rebuilt(self, tree: RTree, node: Node) -> None:
        node.stats = None

    def group_cost(self, users) -> float:
        return float(group_cost(_ids(users), self.ur.R, self.ur.nlev, self.ur.xs, self.ur.ys))

    def split(self, tree: RTree, node: Node) -> tuple[list[Entry], list[Entry]]:
        entries = node.entries
        users = [self.entry_users(tree, e) for e in entries]
        s = tree.min_entries
        if len(entries) <= self.exhaustive_limit:
            return self._split_exhaustive(entries, users, s)
        return self._split_greedy(entries, users, s)

    def _split_exhaustive(self, entries, users, s):
        n = len(entries)
        masks = _bipartitions(n, s)
        flat = np.fromiter((u for us in users for u in us), dtype=np.int64)
        offs = np.cumsum([0] + [len(us) for us in users]).astype(np.int64)
        t = _best_bipartition(masks, flat, offs, n, self.ur.R, self.ur.nlev, self.ur.xs, self.ur.ys)
        m = int(masks[t])
        return ([entries[i] for i in range(n) if m >> i & 1],
                [entries[i] for i in range(n) if not m >> i & 1])

    def _split_greedy(self, entries, users, s):
        i, j = pick_seeds(entries)
        groups = [[i], [j]]
        gu = [list(users[i]), list(users[j])]
        boxes = [entries[i].mbr, entries[j].mbr]
        base = [self.group_cost(gu[0]), self.group_cost(gu[1])]
        rest = [k for k in range(len(entries)) if k not in (i, j)]
        pref = []
        for k in rest:
            d0 = self.group_cost(gu[0] + users[k]) - base[0]
            d1 = self.group_cost(gu[1] + users[k]) - base[1]
            pref.append((-abs(d0 - d1), k))
        pref.sort()
        order = [k for _, k in pref]
        for t, k in enumerate(order):
            left = len(order) - t
            if len(groups[0]) + left <= s:
                side = 0
                base[0] = self.group_cost(gu[0] + users[k])
            elif len(groups[1]) + left <= s:
                side = 1
                base[1] = self.group_cost(gu[1] + users[k])
            else:
                c0 = self.group_cost(gu[0] + users[k])
                c1 = self.group_cost(gu[1] + users[k])
                key0 = (c0 - base[0], enlargement(boxes[0], entries[k].mbr), len(groups[0]))
                key1 = (c1 - base[1], enlargement(boxes[1], entries[k].mbr), len(groups[1]))
                side = 0 if key0 <= key1 else 1
                base[side] = c0 if side == 0 else c1
            groups[side].append(k)
            gu[side].extend(users[k])
            boxes[side] = union_rect(boxes[side], entries[k].mbr)
        return [entries[k] for k in groups[0]], [entries[k] for k in groups[1]]
