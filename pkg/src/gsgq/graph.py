"""Location-based social network graph, core decomposition and k-plex tools."""
from __future__ import annotations

import math
from bisect import bisect_left, insort
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from gsgq._kernels import peel_subset
from gsgq.geometry import Point


class GraphError(ValueError):
    pass


class SocialGraph:
    """Undirected acquaintance graph with one 2-D location per user.

    Neighbor lists are kept sorted; membership tests use binary search.
    """

    def __init__(self, points, edges: Iterable[tuple[int, int]] = ()):
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        if not np.all(np.isfinite(pts)):
            raise GraphError("non-finite location")
        self.points = pts.copy()
        self.adj: list[list[int]] = [[] for _ in range(len(pts))]
        self.m = 0
        for u, v in edges:
            self.add_edge(int(u), int(v), strict=False)
        self._csr = None
        self._scratch = None

    @property
    def n(self) -> int:
        return len(self.adj)

    def point(self, v: int) -> Point:
        return Point(float(self.points[v, 0]), float(self.points[v, 1]))

    def neighbors(self, v: int) -> list[int]:
        return self.adj[v]

    def degree(self, v: int) -> int:
        return len(self.adj[v])

    def has_edge(self, u: int, v: int) -> bool:
        nb = self.adj[u]
        i = bisect_left(nb, v)
        return i < len(nb) and nb[i] == v

    def edges(self):
        for u, nb in enumerate(self.adj):
            for v in nb:
                if u < v:
                    yield u, v

    def _check_user(self, v: int) -> None:
        if not 0 <= v < self.n:
            raise GraphError(f"unknown user {v}")

    def add_edge(self, u: int, v: int, strict: bool = True) -> bool:
        self._check_user(u)
        self._check_user(v)
        if u == v:
            if strict:
                raise GraphError(f"self-loop on {u}")
            return False
        if self.has_edge(u, v):
            if strict:
                raise GraphError(f"duplicate edge {u}-{v}")
            return False
        insort(self.adj[u], v)
        insort(self.adj[v], u)
        self.m += 1
        self._csr = None
        return True

    def remove_edge(self, u: int, v: int) -> None:
        self._check_user(u)
        self._check_user(v)
        if not self.has_edge(u, v):
            raise GraphError(f"missing edge {u}-{v}")
        self.adj[u].pop(bisect_left(self.adj[u], v))
        self.adj[v].pop(bisect_left(self.adj[v], u))
        self.m -= 1
        self._csr = None

    def move(self, v: int, p) -> None:
        self._check_user(v)
        if not (math.isfinite(p[0]) and math.isfinite(p[1])):
            raise GraphError("non-finite location")
        self.points[v] = (p[0], p[1])

    def csr(self) -> tuple[np.ndarray, np.ndarray]:
        if self._csr is None:
            deg = np.fromiter((len(nb) for nb in self.adj), dtype=np.int64, count=self.n)
            indptr = np.zeros(self.n + 1, dtype=np.int64)
            np.cumsum(deg, out=indptr[1:])
            indices = np.fromiter((v for nb in self.adj for v in nb), dtype=np.int64, count=int(indptr[-1]))
            self._csr = (indptr, indices)
        return self._csr

    def scratch(self) -> np.ndarray:
        if self._scratch is None or len(self._scratch) != self.n:
            self._scratch = np.full(self.n, -1, dtype=np.int64)
        return self._scratch

    def copy(self) -> "SocialGraph":
        g = SocialGraph(self.points)
        g.adj = [list(nb) for nb in self.adj]
        g.m = self.m
        return g

    def validate(self) -> None:
        for u, nb in enumerate(self.adj):
            if any(a >= b for a, b in zip(nb, nb[1:])):
                raise GraphError(f"neighbor list of {u} not strictly sorted")
            for v in nb:
                if v == u:
                    raise GraphError(f"self-loop on {u}")
                if not self.has_edge(v, u):
                    raise GraphError(f"asymmetric edge {u}-{v}")


@dataclass
class CoreIndex:
    core_number: np.ndarray

    @property
    def c_G(self) -> int:
        return int(self.core_number.max()) if len(self.core_number) else 0

    def __getitem__(self, v: int) -> int:
        return int(self.core_number[v])

    def __len__(self) -> int:
        return len(self.core_number)


def core_decompose(g: SocialGraph) -> CoreIndex:
    """Core numbers by bucket-sorted degree peeling, linear in n + m."""
    n = g.n
    if n == 0:
        return CoreIndex(np.zeros(0, dtype=np.int64))
    deg = [len(nb) for nb in g.adj]
    md = max(deg)
    bins = [0] * (md + 1)
    for d in deg:
        bins[d] += 1
    start = 0
    for d in range(md + 1):
        bins[d], start = start, start + bins[d]
    pos = [0] * n
    vert = [0] * n
    for v in range(n):
        pos[v] = bins[deg[v]]
        vert[pos[v]] = v
        bins[deg[v]] += 1
    for d in range(md, 0, -1):
        bins[d] = bins[d - 1]
    bins[0] = 0
    for i in range(n):
        v = vert[i]
        for u in g.adj[v]:
            if deg[u] > deg[v]:
                du = deg[u]
                pu = pos[u]
                pw = bins[du]
                w = vert[pw]
                if u != w:
                    pos[u], pos[w] = pw, pu
                    vert[pu], vert[pw] = w, u
                bins[du] += 1
                deg[u] -= 1
    return CoreIndex(np.asarray(deg, dtype=np.int64))


def max_c_core(g: SocialGraph, candidates: Iterable[int], c: int) -> set[int]:
    """Largest subset of ``candidates`` whose induced subgraph has minimum degree >= c."""
    members = np.fromiter(set(candidates), dtype=np.int64)
    if members.size == 0:
        return set()
    if c <= 0:
        return set(members.tolist())
    indptr, indices = g.csr()
    alive = peel_subset(indptr, indices, members, g.scratch(), c)
    return set(members[alive].tolist())


def in_c_core(g: SocialGraph, v: int, members: np.ndarray, c: int) -> bool:
    """Whether ``v`` survives peeling of ``members`` (which must contain ``v`` once)."""
    indptr, indices = g.csr()
    alive = peel_subset(indptr, indices, members, g.scratch(), c)
    return bool(alive[np.flatnonzero(members == v)[0]])


def is_c_core(g: SocialGraph, w: Iterable[int], c: int) -> bool:
    w = set(w)
    if not w:
        return c <= 0
    return all(sum(1 for u in g.adj[v] if u in w) >= c for v in w)


def is_k_plex(g: SocialGraph, w: Iterable[int], cbar: int) -> bool:
    w = set(w)
    need = len(w) - cbar
    return all(sum(1 for u in g.adj[v] if u in w) >= need for v in w)


class IncrementalCore:
    """Maximum c-core of a growing vertex set.

    Adding a vertex can only revive previously peeled vertices connected to it
    through peeled vertices, so each addition re-peels that region alone.
    """

    def __init__(self, g: SocialGraph, c: int):
        self.g = g
        self.c = c
        self.members: set[int] = set()
        self.core: set[int] = set()

    def add(self, u: int) -> set[int]:
        if u in self.members:
            return self.core
        self.members.add(u)
        adj = self.g.adj
        region = {u}
        todo = [u]
        while todo:
            x = todo.pop()
            for y in adj[x]:
                if y in self.members and y not in self.core and y not in region:
                    region.add(y)
                    todo.append(y)
        deg = {x: sum(1 for y in adj[x] if y in region or y in self.core) for x in region}
        queue = [x for x, d in deg.items() if d < self.c]
        dead = set(queue)
        while queue:
            x = queue.pop()
            for y in adj[x]:
                if y in deg and y not in dead:
                    deg[y] -= 1
                    if deg[y] < self.c:
                        dead.add(y)
                        queue.append(y)
        self.core |= region - dead
        return self.core


# ---------------------------------------------------------------------------
# k-plex size bound


def _local_adjacency(g: SocialGraph, within: Optional[Iterable[int]]):
    if within is None:
        verts = list(range(g.n))
        return verts, {v: set(g.adj[v]) for v in verts}
    verts = sorted(set(within))
    vs = set(verts)
    return verts, {v: {u for u in g.adj[v] if u in vs} for v in verts}


def co_plex_cover(g: SocialGraph, cbar: int, i: int, within: Optional[Iterable[int]] = None) -> list[set[int]]:
    """Co-cbar-plexes covering every vertex exactly ``i`` times.

    One greedy pass per multiplicity: scan vertices by descending degree
    (rotated per pass) and place each into the first set that stays a
    co-cbar-plex, i.e. every member keeps at most cbar-1 neighbors inside.
    """
    if i < 1 or cbar < 1:
        raise ValueError("i and cbar must be >= 1")
    verts, nbrs = _local_adjacency(g, within)
    order = sorted(verts, key=lambda v: (-len(nbrs[v]), v))
    n = len(order)
    cover: list[set[int]] = []
    for t in range(i):
        shift = (t * n) // i if n else 0
        rotated = order[shift:] + order[:shift]
        sets: list[set[int]] = []
        inner: list[dict[int, int]] = []
        for v in rotated:
            for s, cnt in zip(sets, inner):
                hits = [u for u in nbrs[v] if u in s]
                if len(hits) <= cbar - 1 and all(cnt[u] + 1 <= cbar - 1 for u in hits):
                    s.add(v)
                    cnt[v] = len(hits)
                    for u in hits:
                        cnt[u] += 1
                    break
            else:
                sets.append({v})
                inner.append({v: 0})
        cover.extend(sets)
    return cover


def _degree_threshold(degrees: list[int], cbar: int) -> int:
    # largest n with at least cbar + n vertices of degree >= n
    ds = sorted(degrees, reverse=True)
    best = 0
    for n_ in range(1, len(ds) + 1):
        need = cbar + n_
        if need > len(ds) or ds[need - 1] < n_:
            break
        best = n_
    return best


def kplex_upper_bound(g: SocialGraph, cbar: int, p: int = 2, within: Optional[Iterable[int]] = None) -> int:
    """Upper bound on the largest cbar-plex, minimised over p co-plex covers."""
    if cbar < 1 or p < 1:
        raise ValueError("cbar and p must be >= 1")
    verts, nbrs = _local_adjacency(g, within)
    if not verts:
        return 0
    a = _degree_threshold([len(nbrs[v]) for v in verts], cbar)
    cap = 2 * cbar - 2 + cbar % 2
    best = math.inf
    for i in range(1, p + 1):
        total = 0
        for s in co_plex_cover(g, cbar, i, within=verts if within is not None else None):
            inner_max = max(sum(1 for u in nbrs[v] if u in s) for v in s)
            total += min(cap, cbar + a, inner_max + cbar, len(s))
        best = min(best, total / i)
    return int(math.floor(best))


def connected_to(g: SocialGraph, v: int, within: set[int]) -> set[int]:
    seen = {v}
    q = deque([v])
    while q:
        x = q.popleft()
        for y in g.adj[x]:
            if y in within and y not in seen:
                seen.add(y)
                q.append(y)
    return seen
