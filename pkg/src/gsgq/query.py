"""Geo-social group query processors over paged indexes.

Every processor reads the index through counted page accesses. The social
graph passed alongside supplies adjacency for core computations; each user
whose neighbor list is needed is also read once from the user pages so the
counts reflect the work a disk-resident run would do.
"""
from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field
from typing import Iterable, Optional, Union

import numpy as np

from gsgq.cbr import level_of
from gsgq.geometry import Rect, contains_point, d_in, dist, intersects, min_dist_point_rect, within_interior
from gsgq.graph import IncrementalCore, SocialGraph, is_c_core, is_k_plex, kplex_upper_bound, max_c_core
from gsgq.index.storage import IndexKind, NodeView, PageCounters, PagedIndex


class QueryError(ValueError):
    pass


@dataclass(frozen=True)
class Range:
    rect: Rect


@dataclass(frozen=True)
class RelaxedKnn:
    k: int


@dataclass(frozen=True)
class StrictKnn:
    k: int


Constraint = Union[Range, RelaxedKnn, StrictKnn]


@dataclass(frozen=True)
class QuerySpec:
    issuer: int
    constraint: Constraint
    c: int

    def __post_init__(self):
        if self.c < 1:
            raise QueryError("c must be >= 1")
        if isinstance(self.constraint, (RelaxedKnn, StrictKnn)) and self.constraint.k < 1:
            raise QueryError("k must be >= 1")

    @property
    def kind(self) -> str:
        return {Range: "range", RelaxedKnn: "rknn", StrictKnn: "knn"}[type(self.constraint)]


@dataclass
class GroupResult:
    members: set[int]
    d_max: float = math.inf
    counters: PageCounters = field(default_factory=PageCounters)
    cpu_time: float = 0.0
    wall_time: float = 0.0

    @property
    def found(self) -> bool:
        return bool(self.members)


class Trace:
    """Optional instrumentation of one query run.

    ``popped`` lists explored entries in order as ("n", child page) or
    ("u", user id); ``keys`` the matching priority keys; ``cbr_pruned`` the
    entries a range query discarded through a CBR test.
    """

    def __init__(self):
        self.popped: list[tuple[str, int]] = []
        self.keys: list[float] = []
        self.cbr_pruned: list[tuple[str, int]] = []


class _Run:
    def __init__(self, index: PagedIndex, g: SocialGraph, q: QuerySpec):
        if not 0 <= q.issuer < g.n or q.issuer >= index.n_users:
            raise QueryError(f"unknown issuer {q.issuer}")
        self.index = index
        self.g = g
        self.q = q
        self.ctr = PageCounters()
        self.t0 = time.process_time()
        self.w0 = time.perf_counter()
        self.pv = g.point(q.issuer)
        self.level = level_of(q.c).bit_length() - 1

    def done(self, members: Iterable[int] = (), d: Optional[float] = None) -> GroupResult:
        members = set(members)
        if d is None:
            d = max((dist(self.pv, self.g.point(u)) for u in members), default=math.inf)
        return GroupResult(members, d if members else math.inf, self.ctr,
                           time.process_time() - self.t0, time.perf_counter() - self.w0)

    def node(self, pid: int) -> NodeView:
        return self.index.read_node(pid, self.ctr)

    def user(self, u: int) -> None:
        self.index.read_user(u, self.ctr)


def locate_user(index: PagedIndex, v: int, p, ctr: Optional[PageCounters] = None) -> tuple[NodeView, int]:
    """Counted point-location descent to the leaf entry of user ``v``."""
    stack = [index.root]
    while stack:
        view = index.read_node(stack.pop(), ctr)
        m = view.mbr
        hit = np.flatnonzero((m[:, 0] <= p[0]) & (p[0] <= m[:, 2]) & (m[:, 1] <= p[1]) & (p[1] <= m[:, 3]))
        if view.leaf:
            for i in hit:
                if view.ids[i] == v:
                    return view, int(i)
        else:
            stack.extend(int(view.ids[i]) for i in hit[::-1])
    raise QueryError(f"user {v} is not in the index")


def _issuer_gate(run: _Run) -> tuple[int, Optional[Rect]]:
    view, i = locate_user(run.index, run.q.issuer, run.pv, run.ctr)
    cbr = None
    if run.index.kind.has_cbrs and view.nlev[i] > run.level:
        cbr = Rect(*map(float, view.level_rects(run.level)[i]))
    return int(view.core[i]), cbr


# ---------------------------------------------------------------------------
# range


def _range(index: PagedIndex, g: SocialGraph, q: QuerySpec, use_core: bool, use_cbr: bool,
           trace: Optional[Trace], memo=None) -> GroupResult:
    if not isinstance(q.constraint, Range):
        raise QueryError("range processor needs a Range constraint")
    run = _Run(index, g, q)
    rng = q.constraint.rect
    if not contains_point(rng, run.pv):
        raise QueryError("issuer lies outside the query range")
    c, t = q.c, run.level
    if use_core or use_cbr:
        cv, cbr = _issuer_gate(run)
        if use_core and cv < c:
            return run.done()
        if use_cbr and cbr is not None and within_interior(rng, cbr):
            return run.done()
    cand: list[int] = []
    stack = [index.root]
    while stack:
        pid = stack.pop()
        view = run.node(pid)
        m = view.mbr
        ok = (m[:, 0] <= rng.x1) & (rng.x0 <= m[:, 2]) & (m[:, 1] <= rng.y1) & (rng.y0 <= m[:, 3])
        if use_core:
            ok &= view.core >= c
        if use_cbr and ok.any():
            cb = view.level_rects(t)
            inside = (cb[:, 0] < rng.x0) & (rng.x1 < cb[:, 2]) & (cb[:, 1] < rng.y0) & (rng.y1 < cb[:, 3])
            pruned = ok & inside
            if trace is not None:
                tag = "u" if view.leaf else "n"
                trace.cbr_pruned.extend((tag, int(view.ids[i])) for i in np.flatnonzero(pruned))
            ok &= ~inside
        idx = np.flatnonzero(ok)
        if view.leaf and memo is not None and index.kind.has_cbrs and len(idx):
            idx = _memo_leaf_prune(view, idx, rng, t, q.c, memo, trace)
        if view.leaf:
            cand.extend(int(view.ids[i]) for i in idx)
        else:
            stack.extend(int(view.ids[i]) for i in idx[::-1])
        if trace is not None:
            tag = "u" if view.leaf else "n"
            trace.popped.extend((tag, int(view.ids[i])) for i in idx)
    for u in cand:
        run.user(u)
    core = max_c_core(g, cand, c)
    if q.issuer not in core:
        return run.done()
    return run.done(core - {q.issuer})


def gsgq_range(index: PagedIndex, g: SocialGraph, q: QuerySpec, trace: Optional[Trace] = None) -> GroupResult:
    return _range(index, g, q, index.kind.has_cores, index.kind.has_cbrs, trace)


def baseline_range(index: PagedIndex, g: SocialGraph, q: QuerySpec, trace: Optional[Trace] = None) -> GroupResult:
    """Filter users in range through the tree, then take the max c-core."""
    return _range(index, g, q, index.kind.has_cores, False, trace)


def _memo_leaf_prune(view: NodeView, idx: np.ndarray, rng: Rect, t: int, c: int, memo,
                     trace: Optional[Trace]) -> np.ndarray:
    # a user CBR still prunes unless an in-range pending update could have broken it
    cb = view.level_rects(t)
    keep = []
    for i in idx:
        r = cb[i]
        if r[0] < rng.x0 and rng.x1 < r[2] and r[1] < rng.y0 and rng.y1 < r[3] and \
                not len(memo.flaggers(r, 1 << t, within=rng)):
            if trace is not None:
                trace.cbr_pruned.append(("u", int(view.ids[i])))
            continue
        keep.append(i)
    return np.asarray(keep, dtype=np.int64)


# ---------------------------------------------------------------------------
# kNN forms


PLEX_BOUND_LIMIT = 64


def find_exact_knn(g: SocialGraph, U: Iterable[int], S: Iterable[int], c: int, k: int,
                   origin=None, stats: Optional[dict] = None) -> set[int]:
    """A c-core of exactly k+1 users containing S, drawn from S and U, or an empty set.

    Candidates are tried nearest to ``origin`` first (by id when no origin).
    Branches are cut by the max c-core of the remaining users and by an
    upper bound on the largest (k+1-c)-plex, which any such core must be.
    """
    S = set(S)
    U = set(U) - S
    if c > k or len(S) > k + 1:
        return set()
    cbar = k + 1 - c
    # being a cbar-plex is hereditary, so S and each added user must keep it one
    if not is_k_plex(g, S, cbar):
        return set()
    U = _plex_extensions(g, S, U, cbar)
    rank = _Rank(g, origin)
    return _exact(g, U, S, c, k, cbar, rank, stats if stats is not None else {})


def _plex_extensions(g: SocialGraph, S: set[int], U: Iterable[int], cbar: int) -> set[int]:
    """Users w of U with S + w a cbar-plex."""
    deg = {x: sum(1 for y in g.adj[x] if y in S) for x in S}
    need = len(S) + 1 - cbar
    if any(d < need - 1 for d in deg.values()):
        return set()
    # members already at their slack must be adjacent to w
    tight = [x for x, d in deg.items() if d < need]
    out = set(U)
    for x in tight:
        out.intersection_update(g.adj[x])
    if need <= 0 or not out:
        return out
    hits: dict[int, int] = {}
    for x in S:
        for y in g.adj[x]:
            if y in out:
                hits[y] = hits.get(y, 0) + 1
    return {w for w in out if hits.get(w, 0) >= need}


class _Rank(dict):
    """Sort keys computed on first use: distance to the origin, then id."""

    def __init__(self, g: SocialGraph, origin):
        super().__init__()
        self.g, self.origin = g, origin

    def __missing__(self, u: int):
        key = (u,) if self.origin is None else (dist(self.origin, self.g.point(u)), u)
        self[u] = key
        return key


def _exact(g, U: set[int], S: set[int], c: int, k: int, cbar: int, rank, stats) -> set[int]:
    stats["calls"] = stats.get("calls", 0) + 1
    slots = k + 1 - len(S)
    if slots == 0:
        return set(S) if is_c_core(g, S, c) else set()
    W = max_c_core(g, S | U, c)
    if len(W) < k + 1 or not S <= W:
        return set()
    if len(W) == k + 1:
        return W
    U = W - S
    # on large candidate sets the bound never cuts and only costs time
    if len(W) <= PLEX_BOUND_LIMIT and kplex_upper_bound(g, cbar, 2, within=W) < k + 1:
        stats["bound_cuts"] = stats.get("bound_cuts", 0) + 1
        return set()
    # a member short of c neighbours in S must gain one of its neighbours in U
    branch = None
    for x in S:
        short = c - sum(1 for y in g.adj[x] if y in S)
        if short <= 0:
            continue
        if short > slots:
            return set()
        opts = [y for y in g.adj[x] if y in U]
        if len(opts) < short:
            return set()
        if branch is None or len(opts) < len(branch):
            branch = opts
    if branch is None:
        branch = list(U)
    branch.sort(key=rank.__getitem__)
    for w in branch:
        S2 = S | {w}
        U.discard(w)
        got = _exact(g, _plex_extensions(g, S2, U, cbar), S2, c, k, cbar, rank, stats)
        if got:
            return got
    return set()


def _memo_leaf_din(view: NodeView, ok: np.ndarray, t: int, pv, g: SocialGraph, memo) -> np.ndarray:
    # a possibly broken CBR only vouches up to the nearest user that might have broken it
    cb = view.level_rects(t)
    out = np.zeros(len(view))
    for i in np.flatnonzero(ok):
        r = cb[i]
        if not (r[0] <= pv[0] <= r[2] and r[1] <= pv[1] <= r[3]):
            continue
        din = min(pv[0] - r[0], r[2] - pv[0], pv[1] - r[1], r[3] - pv[1])
        who = memo.flaggers(r, 1 << t)
        if len(who):
            pts = g.points[who]
            din = min(din, float(np.min(np.hypot(pts[:, 0] - pv[0], pts[:, 1] - pv[1]))))
        out[i] = din
    return out


def _knn(index: PagedIndex, g: SocialGraph, q: QuerySpec, use_core: bool, use_cbr: bool,
         trace: Optional[Trace], strict: bool, memo=None) -> GroupResult:
    if not isinstance(q.constraint, (RelaxedKnn, StrictKnn)):
        raise QueryError("kNN processor needs a kNN constraint")
    run = _Run(index, g, q)
    v, c, k, t = q.issuer, q.c, q.constraint.k, run.level
    if k + 1 > g.n or (strict and c > k):
        return run.done()
    if use_core or use_cbr:
        cv, _ = _issuer_gate(run)
        if cv < c:
            return run.done()
    pv = run.pv
    inc = IncrementalCore(g, c)
    run.user(v)
    inc.add(v)
    heap: list = []

    def push(view: NodeView, floor: float) -> None:
        m = view.mbr
        dx = np.maximum(np.maximum(m[:, 0] - pv[0], pv[0] - m[:, 2]), 0.0)
        dy = np.maximum(np.maximum(m[:, 1] - pv[1], pv[1] - m[:, 3]), 0.0)
        # scalar hypot, so a member's key matches the distance reported in d_max bit for bit
        key = np.array([math.hypot(a, b) for a, b in zip(dx.tolist(), dy.tolist())])
        ok = view.core >= c if use_core else np.ones(len(view), dtype=bool)
        if use_cbr and ok.any():
            cb = view.level_rects(t)
            inside = (cb[:, 0] <= pv[0]) & (pv[0] <= cb[:, 2]) & (cb[:, 1] <= pv[1]) & (pv[1] <= cb[:, 3])
            din = np.minimum(np.minimum(pv[0] - cb[:, 0], cb[:, 2] - pv[0]),
                             np.minimum(pv[1] - cb[:, 1], cb[:, 3] - pv[1]))
            key = np.maximum(key, np.where(inside, din, 0.0))
        elif memo is not None and view.leaf and index.kind.has_cbrs and ok.any():
            key = np.maximum(key, _memo_leaf_din(view, ok, t, pv, g, memo))
        key = np.maximum(key, floor)
        leaf = 1 if view.leaf else 0
        for i in np.flatnonzero(ok):
            heapq.heappush(heap, (float(key[i]), leaf, int(view.ids[i])))

    push(run.node(index.root), 0.0)
    while heap:
        key, leaf, ident = heapq.heappop(heap)
        if trace is not None:
            trace.popped.append(("u" if leaf else "n", ident))
            trace.keys.append(key)
        if not leaf:
            push(run.node(ident), key)
            continue
        u = ident
        if u == v or u in inc.members:
            continue
        run.user(u)
        core = inc.add(u)
        if v not in core or len(core) < k + 1:
            continue
        if not strict:
            return run.done(core - {v})
        if u not in core:
            continue
        got = find_exact_knn(g, core - {v, u}, {v, u}, c, k, origin=pv)
        if got:
            return run.done(got - {v})
    return run.done()


def gsgq_rknn(index: PagedIndex, g: SocialGraph, q: QuerySpec, trace: Optional[Trace] = None) -> GroupResult:
    return _knn(index, g, q, index.kind.has_cores, index.kind.has_cbrs, trace, strict=False)


def gsgq_knn(index: PagedIndex, g: SocialGraph, q: QuerySpec, trace: Optional[Trace] = None) -> GroupResult:
    return _knn(index, g, q, index.kind.has_cores, index.kind.has_cbrs, trace, strict=True)


def baseline_rknn(index: PagedIndex, g: SocialGraph, q: QuerySpec, trace: Optional[Trace] = None) -> GroupResult:
    """Best-first by MBR distance; core pruning only where the index stores cores."""
    return _knn(index, g, q, index.kind.has_cores, False, trace, strict=False)


def baseline_knn(index: PagedIndex, g: SocialGraph, q: QuerySpec, trace: Optional[Trace] = None) -> GroupResult:
    return _knn(index, g, q, index.kind.has_cores, False, trace, strict=True)


def run_query(index: PagedIndex, g: SocialGraph, q: QuerySpec, trace: Optional[Trace] = None) -> GroupResult:
    """Dispatch to the processor matching the constraint; CBR pruning wherever the index has CBRs."""
    if isinstance(q.constraint, Range):
        return gsgq_range(index, g, q, trace)
    if isinstance(q.constraint, RelaxedKnn):
        return gsgq_rknn(index, g, q, trace)
    return gsgq_knn(index, g, q, trace)


def entry_users(index: PagedIndex, ident: tuple[str, int]) -> set[int]:
    """Users covered by a traced entry (uncounted reads)."""
    tag, x = ident
    if tag == "u":
        return {x}
    out: set[int] = set()
    stack = [x]
    while stack:
        view = index.read_node(stack.pop())
        if view.leaf:
            out.update(int(u) for u in view.ids)
        else:
            stack.extend(int(p) for p in view.ids)
    return out
