"""Paged on-disk layout for the index and its user records.

Directory contents (all integers little-endian):

``meta``
    magic ``GSGQIDX1``, page size, fanout, minimum fill, kind, root page,
    user count, page count and the dataset digest.
``pages.bin``
    fixed-size pages; page 0 is reserved. A node page holds a 16-byte
    header, the fixed-width entries, the start of the node's CBR stream and
    an 8-byte id of the next coupled page (0 = none). Coupled pages carry
    the rest of the stream and come after every node page.
``users.bin`` / ``adj.bin``
    per-user location and neighbor-list slice; neighbor ids as u32.

The CBR stream of a node is level-major: every entry's level-0 rect, then
every level-1 rect, and so on, so a query at one level touches only the
coupled pages that hold that level.
"""
from __future__ import annotations

import os
import struct
import zlib
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Optional

import numpy as np

MAGIC = b"GSGQIDX1"
META = struct.Struct("<8sIIIIQQQ32s")
HEADER = struct.Struct("<BBHIII")
TRAILER = 8
ENTRY_DTYPE = np.dtype([("flags", "u1"), ("id", "<u8"), ("x0", "<f8"), ("y0", "<f8"),
                        ("x1", "<f8"), ("y1", "<f8"), ("core", "<u4"), ("nlev", "<u2")])
LEVEL_DTYPE = np.dtype([("exp", "u1"), ("x0", "<f8"), ("y0", "<f8"), ("x1", "<f8"), ("y1", "<f8")])
USER_DTYPE = np.dtype([("x", "<f8"), ("y", "<f8"), ("off", "<u8"), ("len", "<u4")])
PAGE_NODE, PAGE_COUPLED = 1, 2
FLAG_LEAF = 1


class IndexKind(IntEnum):
    BR = 0
    CR = 1
    SAR = 2
    SARSTAR = 3

    @classmethod
    def parse(cls, s) -> "IndexKind":
        if isinstance(s, IndexKind):
            return s
        try:
            return cls[str(s).upper().replace("*", "STAR")]
        except KeyError:
            raise ValueError(f"unknown index kind {s!r}") from None

    @property
    def has_cbrs(self) -> bool:
        return self in (IndexKind.SAR, IndexKind.SARSTAR)

    @property
    def has_cores(self) -> bool:
        return self is not IndexKind.BR


class IndexError_(Exception):
    pass


class CorruptPageError(IndexError_):
    pass


class BuildError(IndexError_):
    pass


def fanout_for(page_size: int) -> int:
    return (page_size - HEADER.size - TRAILER) // ENTRY_DTYPE.itemsize


def min_fill(fanout: int) -> int:
    return max(1, -(-2 * fanout // 5))


@dataclass
class PageCounters:
    index_pages: int = 0
    coupled_pages: int = 0
    user_pages: int = 0

    @property
    def total(self) -> int:
        return self.index_pages + self.coupled_pages + self.user_pages

    def reset(self) -> None:
        self.index_pages = self.coupled_pages = self.user_pages = 0


# ---------------------------------------------------------------------------
# writing


@dataclass
class NodeRecord:
    leaf: bool
    ids: list[int]
    mbrs: list[tuple]
    cores: list[int]
    ladders: list[list[tuple]]  # per entry: [(level exponent, rect), ...]


def _crc(page: bytearray) -> int:
    saved = bytes(page[4:8])
    page[4:8] = b"\0\0\0\0"
    c = zlib.crc32(page)
    page[4:8] = saved
    return c


def _stream(rec: NodeRecord) -> bytes:
    nlev = [len(l) for l in rec.ladders]
    out = []
    for t in range(max(nlev, default=0)):
        rows = [(lad[t][0],) + tuple(lad[t][1]) for lad in rec.ladders if len(lad) > t]
        out.append(np.array(rows, dtype=LEVEL_DTYPE).tobytes())
    return b"".join(out)


def encode_pages(records: list[NodeRecord], page_size: int) -> list[bytes]:
    """Pages for the records in order: record i lands on page i + 1."""
    cap = fanout_for(page_size)
    head_room = page_size - HEADER.size - TRAILER
    coupled_room = head_room
    primary: list[bytearray] = []
    coupled: list[bytearray] = []
    first_coupled = len(records) + 1
    for rec in records:
        if len(rec.ids) > cap:
            raise BuildError(f"node with {len(rec.ids)} entries exceeds fanout {cap}")
        ents = np.zeros(len(rec.ids), dtype=ENTRY_DTYPE)
        ents["flags"] = FLAG_LEAF if rec.leaf else 0
        ents["id"] = rec.ids
        if rec.ids:
            m = np.asarray(rec.mbrs, dtype=np.float64).reshape(-1, 4)
            ents["x0"], ents["y0"], ents["x1"], ents["y1"] = m[:, 0], m[:, 1], m[:, 2], m[:, 3]
        ents["core"] = rec.cores
        ents["nlev"] = [len(l) for l in rec.ladders]
        stream = _stream(rec)
        body = ents.tobytes()
        room = head_room - len(body)
        head, tail = stream[:room], stream[room:]
        chunks = [tail[i:i + coupled_room] for i in range(0, len(tail), coupled_room)]
        ids = [first_coupled + len(coupled) + i for i in range(len(chunks))]
        page = bytearray(page_size)
        HEADER.pack_into(page, 0, PAGE_NODE, FLAG_LEAF if rec.leaf else 0, len(rec.ids), 0, len(stream), len(chunks))
        page[HEADER.size:HEADER.size + len(body)] = body
        page[HEADER.size + len(body):HEADER.size + len(body) + len(head)] = head
        struct.pack_into("<Q", page, page_size - TRAILER, ids[0] if ids else 0)
        primary.append(page)
        for k, chunk in enumerate(chunks):
            cp = bytearray(page_size)
            HEADER.pack_into(cp, 0, PAGE_COUPLED, 0, 0, 0, len(chunk), 0)
            cp[HEADER.size:HEADER.size + len(chunk)] = chunk
            struct.pack_into("<Q", cp, page_size - TRAILER, ids[k + 1] if k + 1 < len(ids) else 0)
            coupled.append(cp)
    pages = [bytearray(page_size)] + primary + coupled
    for p in pages[1:]:
        struct.pack_into("<I", p, 4, _crc(p))
    return [bytes(p) for p in pages]


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(data)
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp, path)


def index_blobs(*, kind: IndexKind, page_size: int, fanout: int, s: int, root: int, pages: list[bytes],
                points: np.ndarray, adj: list[list[int]], digest: bytes) -> dict:
    users = np.zeros(len(adj), dtype=USER_DTYPE)
    if len(adj):
        users["x"], users["y"] = points[:, 0], points[:, 1]
    lens = np.array([len(a) for a in adj], dtype=np.int64)
    offs = np.zeros(len(adj), dtype=np.int64)
    if len(adj):
        offs[1:] = np.cumsum(lens)[:-1]
    users["off"], users["len"] = offs, lens
    flat = np.fromiter((v for a in adj for v in a), dtype="<u4", count=int(lens.sum()))
    meta = META.pack(MAGIC, page_size, fanout, s, int(kind), root, len(adj), len(pages),
                     digest.ljust(32, b"\0")[:32])
    return {"meta": meta, "pages": b"".join(pages), "users": users.tobytes(), "adj": flat.tobytes()}


def write_index(out_dir, **kw) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    blobs = index_blobs(**kw)
    _atomic_write(out / "pages.bin", blobs["pages"])
    _atomic_write(out / "users.bin", blobs["users"])
    _atomic_write(out / "adj.bin", blobs["adj"])
    # meta last: a directory with a stale meta fails the length checks on open
    _atomic_write(out / "meta", blobs["meta"])


# ---------------------------------------------------------------------------
# reading


class _Decoded:
    __slots__ = ("leaf", "ids", "mbr", "core", "nlev", "stream", "head_len", "block_start",
                 "block_len", "coupled_ids", "levels")

    def __init__(self):
        self.levels: dict[int, np.ndarray] = {}


class NodeView:
    """One counted read of a node page; ladder levels are decoded on demand."""

    __slots__ = ("_d", "_ctr", "_touched", "page_size", "pid")

    def __init__(self, d: _Decoded, ctr: Optional[PageCounters], page_size: int, pid: int):
        self._d = d
        self._ctr = ctr
        self._touched: set[int] = set()
        self.page_size = page_size
        self.pid = pid

    @property
    def leaf(self) -> bool:
        return self._d.leaf

    @property
    def ids(self) -> np.ndarray:
        return self._d.ids

    @property
    def mbr(self) -> np.ndarray:
        return self._d.mbr

    @property
    def core(self) -> np.ndarray:
        return self._d.core

    @property
    def nlev(self) -> np.ndarray:
        return self._d.nlev

    def __len__(self) -> int:
        return len(self._d.ids)

    def level_rects(self, t: int) -> np.ndarray:
        """Rects at level index ``t`` (level 2**t), NaN rows for entries without one."""
        d = self._d
        if t >= len(d.block_start):
            return np.full((len(d.ids), 4), np.nan)
        self._count_block(t)
        got = d.levels.get(t)
        if got is None:
            start, ln = d.block_start[t], d.block_len[t]
            recs = np.frombuffer(d.stream[start:start + ln], dtype=LEVEL_DTYPE)
            got = np.full((len(d.ids), 4), np.nan)
            have = d.nlev > t
            got[have, 0], got[have, 1], got[have, 2], got[have, 3] = recs["x0"], recs["y0"], recs["x1"], recs["y1"]
            d.levels[t] = got
        return got

    def _count_block(self, t: int) -> None:
        if self._ctr is None:
            return
        d = self._d
        start, ln = d.block_start[t], d.block_len[t]
        if ln == 0 or start + ln <= d.head_len:
            return
        room = self.page_size - HEADER.size - TRAILER
        a = max(start, d.head_len) - d.head_len
        b = start + ln - d.head_len
        for k in range(a // room, (b - 1) // room + 1):
            if k not in self._touched:
                self._touched.add(k)
                self._ctr.coupled_pages += 1


class PagedIndex:
    """Read side of an index directory.

    Every ``read_node`` / ``read_user`` call is counted; decoded pages are
    kept in memory only to save CPU, never to skip a count.
    """

    def __init__(self, path=None, *, blobs: Optional[dict] = None):
        """Open a directory, or wrap in-memory ``blobs`` (meta, pages, users, adj)."""
        self.path = Path(path) if path is not None else None
        if blobs is None:
            if path is None:
                raise ValueError("need a path or blobs")
            blobs = {name: (self.path / f).read_bytes() for name, f in
                     (("meta", "meta"), ("pages", "pages.bin"), ("users", "users.bin"), ("adj", "adj.bin"))}
        raw = blobs["meta"]
        if len(raw) != META.size:
            raise CorruptPageError("meta has the wrong size")
        (magic, self.page_size, self.fanout, self.s, kind, self.root, self.n_users,
         self.page_count, digest) = META.unpack(raw)
        if magic != MAGIC:
            raise CorruptPageError("bad magic in meta")
        self.kind = IndexKind(kind)
        self.digest = digest
        self._pages = blobs["pages"]
        if len(self._pages) != self.page_count * self.page_size:
            raise CorruptPageError("pages.bin length disagrees with meta")
        self._users = np.frombuffer(blobs["users"], dtype=USER_DTYPE)
        self._adj = np.frombuffer(blobs["adj"], dtype="<u4")
        if len(self._users) != self.n_users:
            raise CorruptPageError("users.bin length disagrees with meta")
        self._cache: dict[int, _Decoded] = {}

    def _page(self, pid: int) -> memoryview:
        ps = self.page_size
        page = memoryview(self._pages)[pid * ps:(pid + 1) * ps]
        stored = struct.unpack_from("<I", page, 4)[0]
        if _crc(bytearray(page)) != stored:
            raise CorruptPageError(f"checksum mismatch on page {pid}")
        return page

    def _decode(self, pid: int) -> _Decoded:
        if not 1 <= pid < self.page_count:
            raise IndexError_(f"unknown page {pid}")
        page = self._page(pid)
        ptype, flags, count, _, stream_len, n_coupled = HEADER.unpack_from(page, 0)
        if ptype != PAGE_NODE:
            raise IndexError_(f"page {pid} is not a node page")
        d = _Decoded()
        d.leaf = bool(flags & FLAG_LEAF)
        body_end = HEADER.size + count * ENTRY_DTYPE.itemsize
        ents = np.frombuffer(page[HEADER.size:body_end], dtype=ENTRY_DTYPE)
        d.ids = ents["id"].astype(np.int64)
        d.mbr = np.stack([ents["x0"], ents["y0"], ents["x1"], ents["y1"]], axis=1)
        d.core = ents["core"].astype(np.int64)
        d.nlev = ents["nlev"].astype(np.int64)
        room = self.page_size - HEADER.size - TRAILER
        head_len = min(stream_len, self.page_size - TRAILER - body_end)
        parts = [bytes(page[body_end:body_end + head_len])]
        nxt = struct.unpack_from("<Q", page, self.page_size - TRAILER)[0]
        coupled = []
        while nxt:
            cp = self._page(nxt)
            ctype, _, _, _, clen, _ = HEADER.unpack_from(cp, 0)
            if ctype != PAGE_COUPLED:
                raise CorruptPageError(f"page {nxt} should be a coupled page")
            parts.append(bytes(cp[HEADER.size:HEADER.size + clen]))
            coupled.append(nxt)
            nxt = struct.unpack_from("<Q", cp, self.page_size - TRAILER)[0]
        if len(coupled) != n_coupled:
            raise CorruptPageError(f"coupled chain of page {pid} is broken")
        d.stream = b"".join(parts)
        if len(d.stream) != stream_len:
            raise CorruptPageError(f"stream of page {pid} is truncated")
        d.head_len = head_len
        d.coupled_ids = coupled
        T = int(d.nlev.max()) if count else 0
        counts = [int(np.sum(d.nlev > t)) for t in range(T)]
        d.block_len = [c * LEVEL_DTYPE.itemsize for c in counts]
        d.block_start = list(np.cumsum([0] + d.block_len[:-1])) if T else []
        del room
        return d

    def read_node(self, pid: int, ctr: Optional[PageCounters] = None) -> NodeView:
        d = self._cache.get(pid)
        if d is None:
            d = self._decode(pid)
            self._cache[pid] = d
        if ctr is not None:
            ctr.index_pages += 1
        return NodeView(d, ctr, self.page_size, pid)

    def read_user(self, uid: int, ctr: Optional[PageCounters] = None) -> tuple[tuple[float, float], np.ndarray]:
        if not 0 <= uid < self.n_users:
            raise IndexError_(f"unknown user {uid}")
        rec = self._users[uid]
        if ctr is not None:
            ctr.user_pages += 1
        off, ln = int(rec["off"]), int(rec["len"])
        return (float(rec["x"]), float(rec["y"])), self._adj[off:off + ln].astype(np.int64)

    def node_pages(self) -> int:
        """Number of node pages (ids 1..node_pages)."""
        n, pid = 0, 1
        while pid < self.page_count:
            if struct.unpack_from("<B", self._pages, pid * self.page_size)[0] != PAGE_NODE:
                break
            n += 1
            pid += 1
        return n

    def points(self) -> np.ndarray:
        return np.stack([self._users["x"], self._users["y"]], axis=1)

    def adjacency(self) -> list[list[int]]:
        return [self._adj[int(r["off"]):int(r["off"]) + int(r["len"])].astype(np.int64).tolist()
                for r in self._users]
