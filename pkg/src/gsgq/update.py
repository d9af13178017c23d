"""Lazy index maintenance under location and friendship updates.

Updates change the graph, the spatial tree and the core numbers at once.
CBRs are only revisited in batches: every memo entry is matched against the
stored user CBRs it could break, and only those are checked and recomputed.
Until then, memo-aware queries stop trusting any CBR that a pending update
might have invalidated.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from gsgq.cbr import CbrContext, CbrLadder, ladder_levels
from gsgq.geometry import DOMAIN, Point, Rect, strictly_inside
from gsgq.graph import GraphError, core_decompose
from gsgq.index.build import BuiltIndex, fill_entries
from gsgq.index.cost import SarStarPolicy
from gsgq.index.rtree import Node, RTree
from gsgq.index.storage import PagedIndex
from gsgq import query as Q


class UpdateError(ValueError):
    pass


@dataclass(frozen=True)
class LocationMove:
    user: int
    new: Point
    old: Optional[Point] = None


@dataclass(frozen=True)
class EdgeAdd:
    u: int
    v: int


@dataclass(frozen=True)
class EdgeRemove:
    u: int
    v: int


Op = Union[LocationMove, EdgeAdd, EdgeRemove]


@dataclass(frozen=True)
class UserUpdate:
    seq: int
    op: Op

    @property
    def users(self) -> tuple[int, ...]:
        op = self.op
        return (op.user,) if isinstance(op, LocationMove) else (op.u, op.v)


def parse_ops(lines: Iterable[str]) -> list[Op]:
    """Parse ``M u x y [ox oy]`` / ``E+ u v`` / ``E- u v`` lines.

    A move may carry its old point (as pending memo files do). Blank lines
    and ``#`` comments are skipped.
    """
    ops: list[Op] = []
    for no, line in enumerate(lines, 1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        try:
            if parts[0] == "M" and len(parts) in (4, 6):
                old = Point(float(parts[4]), float(parts[5])) if len(parts) == 6 else None
                ops.append(LocationMove(int(parts[1]), Point(float(parts[2]), float(parts[3])), old))
            elif parts[0] in ("E+", "E-") and len(parts) == 3:
                cls = EdgeAdd if parts[0] == "E+" else EdgeRemove
                ops.append(cls(int(parts[1]), int(parts[2])))
            else:
                raise ValueError(f"unrecognised update {line.strip()!r}")
        except ValueError as e:
            raise UpdateError(f"line {no}: {e}") from None
    return ops


def format_op(op: Op) -> str:
    if isinstance(op, LocationMove):
        tail = f" {op.old[0]!r} {op.old[1]!r}" if op.old is not None else ""
        return f"M {op.user} {op.new[0]!r} {op.new[1]!r}{tail}"
    return f"{'E+' if isinstance(op, EdgeAdd) else 'E-'} {op.u} {op.v}"


class UpdateMemo:
    def __init__(self, threshold: int = 30000):
        if threshold < 1:
            raise ValueError("batch update size must be >= 1")
        self.threshold = threshold
        self.entries: list[UserUpdate] = []

    def __len__(self) -> int:
        return len(self.entries)

    def append(self, u: UserUpdate) -> None:
        self.entries.append(u)

    @property
    def full(self) -> bool:
        return len(self.entries) >= self.threshold

    def clear(self) -> None:
        self.entries.clear()


# ---------------------------------------------------------------------------
# rules


def rule1_flags(move: LocationMove, cbr: Rect, level: int, core) -> bool:
    """A user entering the rect can complete a core there only if its core number reaches the level."""
    if move.old is None:
        raise UpdateError("location move without its old point")
    return core[move.user] >= level and not strictly_inside(move.old, cbr) and strictly_inside(move.new, cbr)


def rule2_flags(op: Op, cbr: Rect, level: int, core, g) -> bool:
    """A new edge matters only when both ends sit in the rect with core numbers reaching the level."""
    if not isinstance(op, EdgeAdd):
        return False
    return (min(core[op.u], core[op.v]) >= level and strictly_inside(g.point(op.u), cbr)
            and strictly_inside(g.point(op.v), cbr))


class CbrRectIndex:
    """Containment index over every stored user CBR.

    Rects live in one (user, level, 4) array and a stab is a single
    vectorised scan, which at the sizes handled here beats walking a tree
    of Python objects by a wide margin.
    """

    def __init__(self, ladders: Sequence[CbrLadder]):
        n = len(ladders)
        L = max((len(l.levels) for l in ladders), default=0)
        self.R = np.full((n, max(L, 1), 4), np.nan)
        self.nlev = np.zeros(n, dtype=np.int64)
        for lad in ladders:
            self.set(lad.owner, lad)

    def set(self, owner: int, lad: CbrLadder) -> None:
        L = len(lad.levels)
        if L > self.R.shape[1]:
            grown = np.full((self.R.shape[0], L, 4), np.nan)
            grown[:, : self.R.shape[1]] = self.R
            self.R = grown
        self.R[owner] = np.nan
        for t, (_, r) in enumerate(lad.levels):
            self.R[owner, t] = r
        self.nlev[owner] = L

    def strict_mask(self, p) -> np.ndarray:
        R = self.R
        return (R[..., 0] < p[0]) & (p[0] < R[..., 2]) & (R[..., 1] < p[1]) & (p[1] < R[..., 3])

    def stab(self, p) -> list[tuple[int, int]]:
        """(owner, level index) of every rect containing ``p`` (closed)."""
        R = self.R
        m = (R[..., 0] <= p[0]) & (p[0] <= R[..., 2]) & (R[..., 1] <= p[1]) & (p[1] <= R[..., 3])
        return [(int(a), int(b)) for a, b in zip(*np.nonzero(m))]

    def __len__(self) -> int:
        return int(self.nlev.sum())


class MemoFilter:
    """Vectorised Rules 1-2 over the pending memo, evaluated on the current state."""

    def __init__(self, memo: UpdateMemo, g, core):
        mv = [e.op for e in memo.entries if isinstance(e.op, LocationMove)]
        ed = [e.op for e in memo.entries if isinstance(e.op, EdgeAdd)]
        cn = np.asarray(core.core_number)
        self.g = g
        self.mv_w = np.array([m.user for m in mv], dtype=np.int64)
        self.mv_old = np.array([m.old for m in mv], dtype=np.float64).reshape(-1, 2)
        self.mv_new = np.array([m.new for m in mv], dtype=np.float64).reshape(-1, 2)
        self.mv_core = cn[self.mv_w] if len(mv) else np.zeros(0, dtype=np.int64)
        self.mv_cur = g.points[self.mv_w] if len(mv) else np.zeros((0, 2))
        a = np.array([e.u for e in ed], dtype=np.int64)
        b = np.array([e.v for e in ed], dtype=np.int64)
        self.ed = np.stack([a, b], axis=1) if len(ed) else np.zeros((0, 2), dtype=np.int64)
        self.ed_core = np.minimum(cn[a], cn[b]) if len(ed) else np.zeros(0, dtype=np.int64)
        self.ed_pa = g.points[a] if len(ed) else np.zeros((0, 2))
        self.ed_pb = g.points[b] if len(ed) else np.zeros((0, 2))
        self.empty = not len(mv) and not len(ed)

    @staticmethod
    def _strict(p: np.ndarray, r) -> np.ndarray:
        return (r[0] < p[:, 0]) & (p[:, 0] < r[2]) & (r[1] < p[:, 1]) & (p[:, 1] < r[3])

    @staticmethod
    def _closed(p: np.ndarray, r) -> np.ndarray:
        return (r[0] <= p[:, 0]) & (p[:, 0] <= r[2]) & (r[1] <= p[:, 1]) & (p[:, 1] <= r[3])

    def flaggers(self, cbr, level: int, within=None) -> np.ndarray:
        """Users whose pending updates could have broken ``cbr`` at ``level``.

        With ``within``, only users currently inside that rect are reported.
        """
        if self.empty:
            return np.zeros(0, dtype=np.int64)
        m1 = (self.mv_core >= level) & ~self._strict(self.mv_old, cbr) & self._strict(self.mv_new, cbr)
        m2 = (self.ed_core >= level) & self._strict(self.ed_pa, cbr) & self._strict(self.ed_pb, cbr)
        if within is not None:
            m1 &= self._closed(self.mv_cur, within)
            m2 &= self._closed(self.ed_pa, within) | self._closed(self.ed_pb, within)
            ea = self.ed[m2, 0][self._closed(self.ed_pa[m2], within)]
            eb = self.ed[m2, 1][self._closed(self.ed_pb[m2], within)]
            return np.unique(np.concatenate([self.mv_w[m1], ea, eb]))
        return np.unique(np.concatenate([self.mv_w[m1], self.ed[m2].ravel()]))


# ---------------------------------------------------------------------------
# state


@dataclass
class RefreshReport:
    updates: int = 0
    checked: int = 0
    invalidated: int = 0
    recomputed: int = 0
    levels_added: int = 0
    levels_dropped: int = 0

    def merge(self, o: "RefreshReport") -> None:
        for f in ("updates", "checked", "invalidated", "recomputed", "levels_added", "levels_dropped"):
            setattr(self, f, getattr(self, f) + getattr(o, f))


class UpdateState:
    """A built index plus its memo; applies updates and refreshes CBRs in batches."""

    def __init__(self, built: BuiltIndex, threshold: int = 30000):
        self.built = built
        self.g = built.g
        self.memo = UpdateMemo(threshold)
        self.seq = 0
        self.totals = RefreshReport()
        self.has_cbrs = built.kind.has_cbrs
        self.cri = CbrRectIndex(built.ladders) if self.has_cbrs else None
        self._touched: dict[int, Node] = {}
        self._pending_nodes: list[Node] = []
        self._recored: set[int] = set()
        self._leaf: dict[int, Node] = {}
        for nd in built.tree.nodes():
            if nd.leaf:
                self._leaf.update((e.item, nd) for e in nd.entries)
        built.tree.on_change = lambda nd: self._touched.__setitem__(id(nd), nd)

    @property
    def core(self):
        return self.built.core

    @property
    def tree(self) -> RTree:
        return self.built.tree

    # -- applying ------------------------------------------------------

    def apply(self, op: Op) -> Optional[RefreshReport]:
        g = self.g
        if isinstance(op, LocationMove):
            u = op.user
            if not 0 <= u < g.n:
                raise UpdateError(f"unknown user {u}")
            if not all(math.isfinite(x) for x in op.new):
                raise UpdateError("location must be finite")
            old = g.point(u)
            op = LocationMove(u, Point(float(op.new[0]), float(op.new[1])), old)
            self._relocate(u, old, op.new)
        else:
            try:
                if isinstance(op, EdgeAdd):
                    g.add_edge(op.u, op.v, strict=True)
                else:
                    g.remove_edge(op.u, op.v)
            except GraphError as e:
                raise UpdateError(str(e)) from None
            self._recore()
        self.seq += 1
        self.memo.append(UserUpdate(self.seq, op))
        if self.memo.full:
            return self.batch_refresh()
        return None

    def apply_all(self, ops: Iterable[Op]) -> RefreshReport:
        for op in ops:
            self.apply(op)
        return self.totals

    def _relocate(self, u: int, old, new) -> None:
        tree = self.tree
        if not tree.delete(u, Rect(old[0], old[1], old[0], old[1])):
            raise AssertionError(f"user {u} missing from the tree")
        self.g.move(u, new)
        pol = tree.policy
        if isinstance(pol, SarStarPolicy):
            pol.ur.move(u, new)
        tree.insert(u, Rect(new[0], new[1], new[0], new[1]))
        self._sync_cores(self._drain_touched())

    def _drain_touched(self) -> list[Node]:
        nodes = list(self._touched.values())
        self._pending_nodes.extend(nodes)
        self._touched.clear()
        for nd in nodes:
            if nd.leaf:
                self._leaf.update((e.item, nd) for e in nd.entries)
        return nodes

    def _leaf_of(self, u: int) -> Node:
        nd = self._leaf[u]
        if not any(e.item == u for e in nd.entries):
            raise AssertionError(f"stale leaf map for user {u}")
        return nd

    def _recore(self) -> None:
        new = core_decompose(self.g)
        changed = np.flatnonzero(new.core_number != self.built.core.core_number)
        self.built.core = new
        self._recored.update(changed.tolist())
        self._sync_cores([self._leaf_of(u) for u in changed.tolist()])

    def _sync_cores(self, nodes: Sequence[Node]) -> None:
        """Entry core numbers (and leaf ladders) on the given nodes and every ancestor."""
        seen: dict[int, Node] = {}
        for nd in nodes:
            while nd is not None and id(nd) not in seen:
                seen[id(nd)] = nd
                nd = nd.parent
        core = self.built.core
        lads = self.built.ladders
        for nd in sorted(seen.values(), key=lambda n: n.level):
            for e in nd.entries:
                if nd.leaf:
                    e.core = int(core[e.item])
                    e.ladder = lads[e.item].levels if self.has_cbrs else []
                else:
                    e.core = max((k.core for k in e.child.entries), default=0)

    # -- batch refresh ---------------------------------------------------

    def batch_refresh(self) -> RefreshReport:
        rep = RefreshReport(updates=len(self.memo))
        g, core = self.g, self.built.core
        if self.has_cbrs:
            ctx = CbrContext(g, core, DOMAIN)
            lads = self.built.ladders
            suspects: set[tuple[int, int]] = set()
            # rect level index t stands for 2**t; its rule needs core >= 2**t
            top = np.floor(np.log2(np.maximum(core.core_number, 1))).astype(np.int64)
            top[core.core_number == 0] = -1
            tix = np.arange(self.cri.R.shape[1])
            for ent in self.memo.entries:
                op = ent.op
                if isinstance(op, LocationMove):
                    hit = self.cri.strict_mask(op.new) & ~self.cri.strict_mask(op.old)
                    hit &= (tix <= top[op.user])[None, :]
                elif isinstance(op, EdgeAdd):
                    hit = self.cri.strict_mask(g.point(op.u)) & self.cri.strict_mask(g.point(op.v))
                    hit &= (tix <= min(top[op.u], top[op.v]))[None, :]
                else:
                    continue
                suspects.update((int(a), int(b)) for a, b in zip(*np.nonzero(hit)))
            changed: set[int] = set()
            for owner, t in sorted(suspects):
                rep.checked += 1
                lad = lads[owner]
                if t >= len(lad.levels):
                    continue
                lc, r = lad.levels[t]
                if ctx.is_cbr(owner, lc, r):
                    continue
                rep.invalidated += 1
                start = lad.levels[t - 1][1] if t > 0 else None
                if start is not None and not strictly_inside(g.point(owner), start):
                    start = None
                new = ctx.comp_cbr(owner, lc, start)
                levels = list(lad.levels)
                levels[t] = (lc, new)
                lads[owner] = CbrLadder(owner, lad.owner_core, levels)
                rep.recomputed += 1
                changed.add(owner)
            # ladders follow the current core numbers
            for u in sorted(self._recored):
                want = ladder_levels(int(core[u]))
                lad = lads[u]
                have = len(lad.levels)
                if have == len(want) and lad.owner_core == int(core[u]):
                    continue
                levels = list(lad.levels[: len(want)])
                rep.levels_dropped += max(0, have - len(want))
                prev = levels[-1][1] if levels else None
                for lc in want[len(levels):]:
                    prev = ctx.comp_cbr(u, lc, prev)
                    levels.append((lc, prev))
                    rep.levels_added += 1
                lads[u] = CbrLadder(u, int(core[u]), levels)
                changed.add(u)
            pol = self.tree.policy
            leaves = []
            for u in sorted(changed):
                self.cri.set(u, lads[u])
                if isinstance(pol, SarStarPolicy):
                    pol.ur.set_ladder(u, lads[u])
                leaves.append(self._leaf_of(u))
            self._sync_cores(leaves)
            nodes = leaves + self._pending_nodes + list(self._touched.values())
            fill_entries(self.tree, core, lads, self.built.kind, nodes, DOMAIN)
        self._pending_nodes.clear()
        self._touched.clear()
        self._recored.clear()
        self.memo.clear()
        self.totals.merge(rep)
        return rep

    # -- queries -------------------------------------------------------

    def snapshot(self) -> PagedIndex:
        return self.built.snapshot()

    def memo_filter(self) -> MemoFilter:
        return MemoFilter(self.memo, self.g, self.built.core)


# ---------------------------------------------------------------------------
# memo-aware queries


def memo_range(index: PagedIndex, g, memo: MemoFilter, q: Q.QuerySpec, trace=None) -> Q.GroupResult:
    """Range query that trusts a user's CBR only when no in-range pending update could break it."""
    if memo.empty:
        return Q.gsgq_range(index, g, q, trace)
    return Q._range(index, g, q, index.kind.has_cores, False, trace, memo=memo)


def memo_rknn(index: PagedIndex, g, memo: MemoFilter, q: Q.QuerySpec, trace=None) -> Q.GroupResult:
    if memo.empty:
        return Q.gsgq_rknn(index, g, q, trace)
    return Q._knn(index, g, q, index.kind.has_cores, False, trace, strict=False, memo=memo)


def memo_knn(index: PagedIndex, g, memo: MemoFilter, q: Q.QuerySpec, trace=None) -> Q.GroupResult:
    if memo.empty:
        return Q.gsgq_knn(index, g, q, trace)
    return Q._knn(index, g, q, index.kind.has_cores, False, trace, strict=True, memo=memo)


def memo_query(index: PagedIndex, g, memo: MemoFilter, q: Q.QuerySpec, trace=None) -> Q.GroupResult:
    if isinstance(q.constraint, Q.Range):
        return memo_range(index, g, memo, q, trace)
    if isinstance(q.constraint, Q.RelaxedKnn):
        return memo_rknn(index, g, memo, q, trace)
    return memo_knn(index, g, memo, q, trace)


def random_stream(g, count: int, social: float = 0.05, seed: int = 0, step: float = 0.05) -> list[Op]:
    """Seeded update stream against a private copy of ``g``.

    Moves are Gaussian steps clipped to the domain. Social updates split
    evenly between adding an edge to one of the 10 nearest non-friends and
    removing a random existing edge.
    """
    rng = np.random.default_rng(seed)
    h = g.copy()
    ops: list[Op] = []
    while len(ops) < count:
        if rng.random() >= social:
            u = int(rng.integers(h.n))
            p = np.clip(h.points[u] + rng.normal(0.0, step, 2), 0.0, 1.0)
            op: Op = LocationMove(u, Point(float(p[0]), float(p[1])))
            h.move(u, op.new)
        elif rng.random() < 0.5 or h.m == 0:
            u = int(rng.integers(h.n))
            d = np.hypot(*(h.points - h.points[u]).T)
            near = [int(x) for x in np.argsort(d, kind="stable") if x != u and not h.has_edge(u, int(x))][:10]
            if not near:
                continue
            v = near[int(rng.integers(len(near)))]
            op = EdgeAdd(u, v)
            h.add_edge(u, v)
        else:
            u = int(rng.choice([x for x in range(h.n) if h.adj[x]]))
            v = int(rng.choice(h.adj[u]))
            op = EdgeRemove(u, v)
            h.remove_edge(u, v)
        ops.append(op)
    return ops
