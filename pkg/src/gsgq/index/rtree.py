"""In-memory R-tree shared by every index kind and by the CBR rectangle index.

Leaf entries hold a payload id (a user, or any caller-defined record) and a
rectangle; internal entries point to child nodes. Insertion and split
policies are pluggable so the social-aware variant can reuse the machinery.
"""
from __future__ import annotations

from typing import Callable, Iterator, Optional

from gsgq.geometry import Rect, contains_point, intersects, union_rect


class Entry:
    __slots__ = ("mbr", "child", "item", "core", "ladder")

    def __init__(self, mbr: Rect, child: "Optional[Node]" = None, item: int = -1):
        self.mbr = mbr
        self.child = child
        self.item = item
        self.core = 0
        self.ladder: list = []

    def __repr__(self) -> str:
        what = f"item={self.item}" if self.child is None else "node"
        return f"Entry({what}, {tuple(round(x, 4) for x in self.mbr)})"


class Node:
    __slots__ = ("level", "entries", "parent", "page", "stats", "dirty")

    def __init__(self, level: int, entries: Optional[list[Entry]] = None):
        self.level = level
        self.entries: list[Entry] = entries if entries is not None else []
        self.parent: Optional[Node] = None
        self.page = 0
        self.stats = None
        self.dirty = True
        for e in self.entries:
            if e.child is not None:
                e.child.parent = self

    @property
    def leaf(self) -> bool:
        return self.level == 0

    def mbr(self) -> Rect:
        it = iter(self.entries)
        r = next(it).mbr
        for e in it:
            r = union_rect(r, e.mbr)
        return r

    def add(self, e: Entry) -> None:
        self.entries.append(e)
        if e.child is not None:
            e.child.parent = self


def area(r: Rect) -> float:
    return (r.x1 - r.x0) * (r.y1 - r.y0)


def enlargement(r: Rect, add: Rect) -> float:
    return area(union_rect(r, add)) - area(r)


class GuttmanPolicy:
    """Least-enlargement descent and quadratic split on area."""

    def choose_subtree(self, tree: "RTree", node: Node, entry: Entry) -> int:
        best, best_key = 0, None
        for i, e in enumerate(node.entries):
            key = (enlargement(e.mbr, entry.mbr), area(e.mbr), i)
            if best_key is None or key < best_key:
                best, best_key = i, key
        return best

    def split(self, tree: "RTree", node: Node) -> tuple[list[Entry], list[Entry]]:
        return quadratic_split(node.entries, tree.min_entries)

    def inserted(self, tree: "RTree", path: list[Node], entry: Entry) -> None:
        pass

    def rebuilt(self, tree: "RTree", node: Node) -> None:
        pass


def pick_seeds(entries: list[Entry]) -> tuple[int, int]:
    worst, seeds = None, (0, 1)
    for i in range(len(entries)):
        ri = entries[i].mbr
        for j in range(i + 1, len(entries)):
            rj = entries[j].mbr
            d = area(union_rect(ri, rj)) - area(ri) - area(rj)
            if worst is None or d > worst:
                worst, seeds = d, (i, j)
    return seeds


def quadratic_split(entries: list[Entry], min_fill: int) -> tuple[list[Entry], list[Entry]]:
    i, j = pick_seeds(entries)
    g1, g2 = [entries[i]], [entries[j]]
    r1, r2 = entries[i].mbr, entries[j].mbr
    rest = [e for k, e in enumerate(entries) if k not in (i, j)]
    while rest:
        if len(g1) + len(rest) <= min_fill:
            g1.extend(rest)
            break
        if len(g2) + len(rest) <= min_fill:
            g2.extend(rest)
            break
        pick, pick_d = 0, -1.0
        for k, e in enumerate(rest):
            d = abs(enlargement(r1, e.mbr) - enlargement(r2, e.mbr))
            if d > pick_d:
                pick, pick_d = k, d
        e = rest.pop(pick)
        d1, d2 = enlargement(r1, e.mbr), enlargement(r2, e.mbr)
        key1 = (d1, area(r1), len(g1))
        key2 = (d2, area(r2), len(g2))
        if key1 <= key2:
            g1.append(e)
            r1 = union_rect(r1, e.mbr)
        else:
            g2.append(e)
            r2 = union_rect(r2, e.mbr)
    return g1, g2


class RTree:
    def __init__(self, max_entries: int, min_entries: Optional[int] = None, policy=None):
        if max_entries < 2:
            raise ValueError("fanout must be at least 2")
        self.max_entries = max_entries
        self.min_entries = min_entries if min_entries is not None else max(1, -(-2 * max_entries // 5))
        if not 1 <= self.min_entries <= max_entries // 2:
            raise ValueError("minimum fill must lie in [1, fanout/2]")
        self.policy = policy if policy is not None else GuttmanPolicy()
        self.root = Node(0)
        self.size = 0
        self.on_change: Optional[Callable[[Node], None]] = None

    # -- traversal -----------------------------------------------------

    def nodes(self) -> Iterator[Node]:
        """Depth-first preorder."""
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            if not node.leaf:
                stack.extend(e.child for e in reversed(node.entries))

    def leaf_entries(self) -> Iterator[Entry]:
        for node in self.nodes():
            if node.leaf:
                yield from node.entries

    def items_under(self, node: Node) -> list[int]:
        out = []
        stack = [node]
        while stack:
            nd = stack.pop()
            if nd.leaf:
                out.extend(e.item for e in nd.entries)
            else:
                stack.extend(e.child for e in nd.entries)
        return out

    def search(self, r: Rect) -> list[int]:
        out = []
        if not self.root.entries:
            return out
        stack = [self.root]
        while stack:
            nd = stack.pop()
            for e in nd.entries:
                if intersects(e.mbr, r):
                    if nd.leaf:
                        out.append(e.item)
                    else:
                        stack.append(e.child)
        return out

    def stab(self, p) -> list[int]:
        """Items whose rectangle contains point ``p`` (closed)."""
        out = []
        if not self.root.entries:
            return out
        stack = [self.root]
        while stack:
            nd = stack.pop()
            for e in nd.entries:
                if contains_point(e.mbr, p):
                    if nd.leaf:
                        out.append(e.item)
                    else:
                        stack.append(e.child)
        return out

    def find_leaf(self, item: int, hint: Rect) -> Optional[tuple[Node, int]]:
        stack = [self.root]
        while stack:
            nd = stack.pop()
            for i, e in enumerate(nd.entries):
                if nd.leaf:
                    if e.item == item:
                        return nd, i
                elif intersects(e.mbr, hint):
                    stack.append(e.child)
        return None

    def parent_entry(self, node: Node) -> Optional[Entry]:
        p = node.parent
        if p is None:
            return None
        for e in p.entries:
            if e.child is node:
                return e
        raise AssertionError("broken parent link")

    def _touch(self, node: Node) -> None:
        node.dirty = True
        if self.on_change is not None:
            self.on_change(node)

    # -- insertion -----------------------------------------------------

    def insert(self, item: int, rect: Rect) -> None:
        self._insert_entry(Entry(rect, None, item), 0)
        self.size += 1

    def _insert_entry(self, entry: Entry, level: int) -> None:
        node = self.root
        path = [node]
        while node.level > level:
            i = self.policy.choose_subtree(self, node, entry)
            node = node.entries[i].child
            path.append(node)
        node.add(entry)
        self.policy.inserted(self, path, entry)
        for nd in path:
            self._touch(nd)
        self._adjust(node)

    def _adjust(self, node: Node) -> None:
        while True:
            split = None
            if len(node.entries) > self.max_entries:
                split = self._split(node)
            parent = node.parent
            if parent is None:
                if split is not None:
                    new_root = Node(node.level + 1, [Entry(node.mbr(), node), Entry(split.mbr(), split)])
                    self.root = new_root
                    self.policy.rebuilt(self, new_root)
                    self._touch(new_root)
                return
            pe = self.parent_entry(node)
            pe.mbr = node.mbr()
            if split is not None:
                parent.add(Entry(split.mbr(), split))
                self._touch(parent)
            node = parent

    def _split(self, node: Node) -> Node:
        g1, g2 = self.policy.split(self, node)
        node.entries = []
        for e in g1:
            node.add(e)
        sibling = Node(node.level)
        for e in g2:
            sibling.add(e)
        self.policy.rebuilt(self, node)
        self.policy.rebuilt(self, sibling)
        self._touch(node)
        self._touch(sibling)
        return sibling

    # -- deletion ------------------------------------------------------

    def delete(self, item: int, hint: Rect) -> bool:
        found = self.find_leaf(item, hint)
        if found is None:
            return False
        leaf, i = found
        leaf.entries.pop(i)
        self.size -= 1
        orphans: list[tuple[Entry, int]] = []
        node = leaf
        while node.parent is not None:
            parent = node.parent
            if len(node.entries) < self.min_entries:
                pe = self.parent_entry(node)
                parent.entries.remove(pe)
                orphans.extend((e, node.level) for e in node.entries)
            else:
                self.parent_entry(node).mbr = node.mbr()
                self._touch(node)
            node = parent
        self._touch(self.root)
        while not self.root.leaf and len(self.root.entries) == 1:
            self.root = self.root.entries[0].child
            self.root.parent = None
        if not self.root.leaf and not self.root.entries:
            self.root = Node(0)
        for e, level in orphans:
            if level > self.root.level:
                # the tree shrank below this orphan's height; reinsert its items
                for sub in self._flatten(e):
                    self._insert_entry(sub, 0)
            else:
                self._insert_entry(e, level)
        return True

    def _flatten(self, e: Entry) -> list[Entry]:
        if e.child is None:
            return [e]
        out = []
        for sub in e.child.entries:
            out.extend(self._flatten(sub))
        return out

    # -- checks --------------------------------------------------------

    def check(self) -> None:
        """Raise AssertionError on a broken MBR, parent link, level or fill."""
        for node in self.nodes():
            if node is not self.root:
                assert self.min_entries <= len(node.entries) <= self.max_entries, "fill"
            else:
                assert len(node.entries) <= self.max_entries, "root fill"
            for e in node.entries:
                if node.leaf:
                    assert e.child is None
                else:
                    assert e.child.parent is node, "parent link"
                    assert e.child.level == node.level - 1, "level"
                    assert e.mbr == e.child.mbr(), "mbr"
