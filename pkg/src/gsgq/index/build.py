"""Build the four index kinds and write them as paged directories."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from gsgq.cbr import CbrContext, CbrLadder, entry_ladder, stored_cbr_count
from gsgq.geometry import DOMAIN, Rect
from gsgq.graph import CoreIndex, SocialGraph, core_decompose
from gsgq.index.cost import SarStarPolicy, UserRects
from gsgq.index.rtree import Entry, Node, RTree
from gsgq.index.storage import (BuildError, IndexKind, NodeRecord, PagedIndex, encode_pages,
                                fanout_for, index_blobs, min_fill, write_index)


def graph_digest(g: SocialGraph) -> bytes:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(g.points, dtype="<f8").tobytes())
    for u in range(g.n):
        h.update(np.asarray(g.adj[u], dtype="<u4").tobytes())
        h.update(b"\xff\xff\xff\xff")
    return h.digest()


@dataclass
class BuiltIndex:
    kind: IndexKind
    tree: RTree
    g: SocialGraph
    core: CoreIndex
    ladders: list[CbrLadder]
    page_size: int
    digest: bytes = b""
    stats: dict = field(default_factory=dict)

    @property
    def fanout(self) -> int:
        return self.tree.max_entries

    def stored_cbrs(self) -> int:
        """Every CBR rect written to pages: user ladders plus internal entries."""
        if not self.kind.has_cbrs:
            return 0
        n = stored_cbr_count(self.ladders)
        for node in self.tree.nodes():
            if not node.leaf:
                n += sum(len(e.ladder) for e in node.entries)
        return n

    def refresh_entries(self, nodes: Optional[Sequence[Node]] = None) -> None:
        """Recompute entry cores and ladders bottom-up (all nodes, or the given ones and ancestors)."""
        fill_entries(self.tree, self.core, self.ladders, self.kind, nodes)

    def records(self) -> tuple[list[NodeRecord], int]:
        order = list(self.tree.nodes())
        for i, nd in enumerate(order):
            nd.page = i + 1
        recs = []
        for nd in order:
            ids, mbrs, cores, lads = [], [], [], []
            for e in nd.entries:
                ids.append(e.item if nd.leaf else e.child.page)
                mbrs.append(tuple(e.mbr))
                cores.append(e.core if self.kind.has_cores else 0)
                if self.kind.has_cbrs:
                    lads.append([(lc.bit_length() - 1, r) for lc, r in e.ladder])
                else:
                    lads.append([])
            recs.append(NodeRecord(nd.leaf, ids, mbrs, cores, lads))
        return recs, 1

    def _layout(self) -> dict:
        recs, root = self.records()
        return dict(kind=self.kind, page_size=self.page_size, fanout=self.tree.max_entries,
                    s=self.tree.min_entries, root=root, pages=encode_pages(recs, self.page_size),
                    points=self.g.points, adj=self.g.adj, digest=self.digest)

    def write(self, out_dir) -> PagedIndex:
        write_index(out_dir, **self._layout())
        return PagedIndex(out_dir)

    def snapshot(self) -> PagedIndex:
        """The paged form of the current state, kept in memory."""
        return PagedIndex(blobs=index_blobs(**self._layout()))


def fill_entries(tree: RTree, core: CoreIndex, ladders: Sequence[CbrLadder], kind: IndexKind,
                 nodes: Optional[Sequence[Node]] = None, domain: Rect = DOMAIN) -> None:
    """Entry cores and ladders bottom-up.

    With ``nodes``, only those nodes and their ancestors are refreshed, and an
    internal entry is recomputed only when its child was.
    """
    if nodes is None:
        todo = sorted(tree.nodes(), key=lambda nd: nd.level)
        dirty = None
    else:
        dirty = {}
        for nd in nodes:
            while nd is not None and id(nd) not in dirty:
                dirty[id(nd)] = nd
                nd = nd.parent
        todo = sorted(dirty.values(), key=lambda nd: nd.level)
    for nd in todo:
        for e in nd.entries:
            if nd.leaf:
                e.core = int(core[e.item])
                e.ladder = ladders[e.item].levels if kind.has_cbrs else []
                continue
            if dirty is not None and id(e.child) not in dirty:
                continue
            kids = e.child.entries
            e.core = max((k.core for k in kids), default=0)
            if kind.has_cbrs:
                lad = entry_ladder(-1, [(k.mbr, k.core, CbrLadder(-1, k.core, k.ladder)) for k in kids],
                                   domain)
                e.ladder = lad.levels
            else:
                e.ladder = []


def build(g: SocialGraph, kind, page_size: int = 4096, *, core: Optional[CoreIndex] = None,
          ladders: Optional[Sequence[CbrLadder]] = None, domain: Rect = DOMAIN,
          digest: Optional[bytes] = None) -> BuiltIndex:
    """Insert users in id order with the kind's policy and fill entry summaries."""
    kind = IndexKind.parse(kind)
    fanout = fanout_for(page_size)
    if fanout < 2:
        raise BuildError(f"page size {page_size} leaves room for {fanout} entries; need at least 2")
    core = core if core is not None else core_decompose(g)
    if ladders is None and kind.has_cbrs:
        ctx = CbrContext(g, core, domain)
        ladders = [ctx.ladder(v) for v in range(g.n)]
    ladders = list(ladders) if ladders is not None else [CbrLadder(v, int(core[v])) for v in range(g.n)]
    policy = SarStarPolicy(UserRects(ladders, g.points)) if kind is IndexKind.SARSTAR else None
    tree = RTree(fanout, min_fill(fanout), policy)
    for u in range(g.n):
        x, y = g.points[u]
        tree.insert(u, Rect(float(x), float(y), float(x), float(y)))
    fill_entries(tree, core, ladders, kind, None, domain)
    return BuiltIndex(kind, tree, g, core, ladders, page_size,
                      digest if digest is not None else graph_digest(g))


def build_to(out_dir, g: SocialGraph, kind, page_size: int = 4096, **kw) -> tuple[BuiltIndex, PagedIndex]:
    b = build(g, kind, page_size, **kw)
    return b, b.write(Path(out_dir))


def load_built(path) -> BuiltIndex:
    """Rebuild the in-memory tree, graph and ladders from an index directory."""
    px = PagedIndex(path)
    g = SocialGraph(px.points(), [(u, v) for u, a in enumerate(px.adjacency()) for v in a if u < v])
    core = core_decompose(g)
    ladders: list[Optional[CbrLadder]] = [None] * g.n
    tree = RTree(px.fanout, px.s, None)

    def load(pid: int) -> Node:
        view = px.read_node(pid)
        nlev = view.nlev
        T = int(nlev.max()) if len(view) else 0
        levels = [view.level_rects(t) for t in range(T)]
        kids = [None if view.leaf else load(int(c)) for c in view.ids]
        nd = Node(0 if view.leaf else kids[0].level + 1)
        for i in range(len(view)):
            e = Entry(Rect(*map(float, view.mbr[i])), kids[i], int(view.ids[i]) if view.leaf else -1)
            e.core = int(view.core[i])
            e.ladder = [(1 << t, Rect(*map(float, levels[t][i]))) for t in range(int(nlev[i]))]
            nd.add(e)
            if view.leaf:
                ladders[e.item] = CbrLadder(e.item, e.core, e.ladder)
        return nd

    tree.root = load(px.root)
    tree.size = g.n
    lads = [l if l is not None else CbrLadder(u, int(core[u])) for u, l in enumerate(ladders)]
    if px.kind is IndexKind.SARSTAR:
        tree.policy = SarStarPolicy(UserRects(lads, g.points))
    return BuiltIndex(px.kind, tree, g, core, lads, px.page_size, px.digest)
