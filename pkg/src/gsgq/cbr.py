"""Core bounding rectangles: per-user computation, ladders and entry combination."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from gsgq import _kernels as K
from gsgq.geometry import DOMAIN, Rect, intersects, rect_intersection, union_rect
from gsgq.graph import CoreIndex, SocialGraph, core_decompose


def ladder_levels(core: int) -> list[int]:
    """Minimum-degree levels 1, 2, 4, ... up to the owner's core number."""
    if core <= 0:
        return []
    return [1 << i for i in range(core.bit_length())]


def level_of(c: int) -> int:
    """The stored level that stands in for constraint ``c``."""
    return 1 << (int(c).bit_length() - 1)


@dataclass
class CbrLadder:
    owner: int
    owner_core: int
    levels: list[tuple[int, Rect]] = field(default_factory=list)

    def rect(self, level: int) -> Optional[Rect]:
        for lc, r in self.levels:
            if lc == level:
                return r
        return None

    def __len__(self) -> int:
        return len(self.levels)


def ladder_lookup(ladder: CbrLadder, c: int) -> Optional[Rect]:
    if c < 1:
        raise ValueError("c must be >= 1")
    return ladder.rect(level_of(c))


class CbrContext:
    """Arrays shared by many CBR computations over one graph state.

    Users whose core number is below c can never sit in a c-core, so every
    set at level c is restricted to the remaining (eligible) users.
    """

    def __init__(self, g: SocialGraph, core: Optional[CoreIndex] = None, domain: Rect = DOMAIN):
        self.g = g
        self.core = core if core is not None else core_decompose(g)
        self.domain = domain
        self.xs = np.ascontiguousarray(g.points[:, 0])
        self.ys = np.ascontiguousarray(g.points[:, 1])
        self.indptr, self.indices = g.csr()
        self.pos = np.full(g.n, -1, dtype=np.int64)
        self.buf = np.empty(max(g.n, 1), dtype=np.int64)
        self.dom = np.array(domain, dtype=np.float64)
        self._ids: dict[int, tuple] = {}

    def eligible(self, c: int) -> np.ndarray:
        return self._sorted(c)[0]

    def _sorted(self, c: int):
        got = self._ids.get(c)
        if got is None:
            ids = np.flatnonzero(self.core.core_number >= c).astype(np.int64)
            xo = ids[np.argsort(self.xs[ids], kind="stable")]
            yo = ids[np.argsort(self.ys[ids], kind="stable")]
            got = (ids, xo, self.xs[xo], yo, self.ys[yo])
            self._ids[c] = got
        return got

    def is_cbr(self, v: int, c: int, r: Rect) -> bool:
        if self.core[v] < c:
            return True
        return bool(K.rect_is_cbr(self.xs, self.ys, self.eligible(c), self.indptr, self.indices,
                                  self.pos, self.buf, v, c, r.x0, r.y0, r.x1, r.y1))

    def seed_square(self, v: int, c: int) -> Optional[Rect]:
        if self.core[v] < c:
            return None
        h = K.initial_square(self.xs, self.ys, self.eligible(c), self.indptr, self.indices,
                             self.pos, self.buf, v, c)
        if h < 0:
            return None
        x, y, d = self.xs[v], self.ys[v], self.domain
        return Rect(max(x - h, d.x0), max(y - h, d.y0), min(x + h, d.x1), min(y + h, d.y1))

    def expand(self, v: int, c: int, start: Rect) -> Rect:
        r = np.array(start, dtype=np.float64)
        _, xo, xv, yo, yv = self._sorted(c)
        K.expand_cbr(self.xs, self.ys, xo, xv, yo, yv, self.indptr, self.indices, self.pos,
                     self.buf, v, c, r, self.dom)
        return Rect(*map(float, r))

    def comp_cbr(self, v: int, c: int, start: Optional[Rect] = None) -> Rect:
        if c < 1:
            raise ValueError("c must be >= 1")
        seed = self.seed_square(v, c)
        if seed is None:
            return self.domain
        if start is not None:
            grown = union_rect(start, seed)
            seed = grown if self.is_cbr(v, c, grown) else start
        return self.expand(v, c, seed)

    def ladder(self, v: int, core: Optional[int] = None) -> CbrLadder:
        core = self.core[v] if core is None else core
        levels = []
        prev = None
        for lc in ladder_levels(core):
            prev = self.comp_cbr(v, lc, prev)
            levels.append((lc, prev))
        return CbrLadder(v, core, levels)


def comp_cbr(g: SocialGraph, v: int, c: int, domain: Rect = DOMAIN) -> Rect:
    """A maximal rectangle around ``v`` inside which no group containing ``v`` is a c-core."""
    return CbrContext(g, None, domain).comp_cbr(v, c)


def build_ladder(g: SocialGraph, core: CoreIndex, v: int, domain: Rect = DOMAIN) -> CbrLadder:
    return CbrContext(g, core, domain).ladder(v)


def build_all_ladders(g: SocialGraph, core: CoreIndex, domain: Rect = DOMAIN) -> list[CbrLadder]:
    ctx = CbrContext(g, core, domain)
    return [ctx.ladder(v) for v in range(g.n)]


def combine_entry_cbr(children: Sequence[tuple[Rect, Optional[Rect]]], c: int,
                      domain: Rect = DOMAIN) -> Rect:
    """Fold child CBRs at one level into the entry's CBR.

    A child without a rect at this level has no c-core anywhere and counts as
    the whole domain. If the fold no longer touches the entry MBR, a
    zero-area rect on the MBR is returned, which prunes nothing.
    """
    if not children:
        raise ValueError("combine_entry_cbr needs at least one child")
    acc = children[0][1] if children[0][1] is not None else domain
    mbr = children[0][0]
    dead = False
    for child_mbr, child_cbr in children[1:]:
        mbr = union_rect(mbr, child_mbr)
        if dead or not intersects(child_mbr, acc):
            continue
        nxt = rect_intersection(acc, child_cbr if child_cbr is not None else domain)
        if nxt is None:
            dead = True
            continue
        acc = nxt
    if dead or not intersects(acc, mbr):
        x = min(max(acc.center.x, mbr.x0), mbr.x1)
        y = min(max(acc.center.y, mbr.y0), mbr.y1)
        return Rect(x, y, x, y)
    return acc


def entry_ladder(owner: int, children: Sequence[tuple[Rect, int, CbrLadder]],
                 domain: Rect = DOMAIN) -> CbrLadder:
    """Entry ladder from (mbr, core, ladder) of each child."""
    ce = max(cc for _, cc, _ in children)
    levels = []
    for lc in ladder_levels(ce):
        rects = [(m, lad.rect(lc)) for m, _, lad in children]
        levels.append((lc, combine_entry_cbr(rects, lc, domain)))
    return CbrLadder(owner, ce, levels)


def cbr_count_bound(g: SocialGraph, core: CoreIndex, s: int) -> int:
    if s < 2:
        raise ValueError("minimum fanout must be >= 2")
    n = g.n
    cg = core.c_G
    if n == 0 or cg == 0:
        return 0
    mean = float(np.sum(core.core_number)) / n
    return int(math.floor(n * (math.floor(math.log2(mean)) + 2 * (math.floor(math.log2(cg)) + 1) / s + 1)))


def stored_cbr_count(ladders: Iterable[CbrLadder]) -> int:
    return sum(len(l) for l in ladders)
