"""Datasets, workloads and benchmark runs."""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from gsgq.geometry import DOMAIN, Rect
from gsgq.graph import SocialGraph
from gsgq.index.build import graph_digest
from gsgq.index.storage import IndexKind, PagedIndex
from gsgq.oracles import min_internal_degree
from gsgq.query import QuerySpec, Range, RelaxedKnn, StrictKnn, run_query


class DatasetError(ValueError):
    pass


# ---------------------------------------------------------------------------
# synthetic data


@dataclass
class SynthResult:
    points: np.ndarray
    edges: list[tuple[int, int]]
    cluster: np.ndarray
    retries: int


def synth_graph(n: int, m: int, clusters: int = 10, seed: int = 0, homophily: float = 0.9,
                gamma: float = 2.5, spread: float = 0.6) -> SynthResult:
    """Power-law friendships over clustered locations.

    Expected degrees follow a Chung-Lu power law with exponent ``gamma``. Each
    edge picks its first endpoint by weight and, with probability
    ``homophily``, its second endpoint by weight inside the same cluster.
    Self-loops and repeats are rejected and counted as retries.
    """
    if n < 1 or m < 0 or clusters < 1:
        raise ValueError("need n >= 1, m >= 0, clusters >= 1")
    if m > n * (n - 1) // 2:
        raise ValueError(f"{m} edges do not fit in a simple graph on {n} users")
    rng = np.random.default_rng(seed)
    centers = 0.1 + 0.8 * rng.random((clusters, 2))
    label = rng.integers(0, clusters, n)
    sigma = spread / (2.0 * np.sqrt(clusters))
    pts = np.clip(centers[label] + rng.normal(0.0, sigma, (n, 2)), 0.0, 1.0)

    w = (np.arange(1, n + 1, dtype=np.float64)) ** (-1.0 / (gamma - 1.0))
    w = w[rng.permutation(n)]
    cum = np.cumsum(w)
    members = [np.flatnonzero(label == k) for k in range(clusters)]
    member_cum = [np.cumsum(w[ix]) for ix in members]

    edges: set[tuple[int, int]] = set()
    retries = 0
    budget = 50 * m + 1000
    while len(edges) < m:
        need = m - len(edges)
        us = np.searchsorted(cum, rng.random(need) * cum[-1], side="right")
        local = rng.random(need) < homophily
        draws = rng.random(need)
        for u, loc, r in zip(us.tolist(), local.tolist(), draws.tolist()):
            if loc:
                ix, mc = members[label[u]], member_cum[label[u]]
                v = int(ix[np.searchsorted(mc, r * mc[-1], side="right")])
            else:
                v = int(np.searchsorted(cum, r * cum[-1], side="right"))
            e = (u, v) if u < v else (v, u)
            if u == v or e in edges:
                retries += 1
                if retries > budget:
                    raise ValueError(f"could not place {m} edges after {retries} retries")
                continue
            edges.add(e)
            if len(edges) == m:
                break
    return SynthResult(pts, sorted(edges), label, retries)


# ---------------------------------------------------------------------------
# dataset directories


@dataclass
class DatasetManifest:
    source: dict
    users_before: int
    users_after: int
    edges: int
    transform: dict
    seed: int
    digest: str = ""
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


def _atomic_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def save_dataset(out_dir, g: SocialGraph, manifest: DatasetManifest) -> DatasetManifest:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest.digest = graph_digest(g).hex()
    manifest.users_after = g.n
    manifest.edges = g.m
    _atomic_text(out / "locations.tsv", "".join(f"{u}\t{x!r}\t{y!r}\n" for u, (x, y) in enumerate(g.points.tolist())))
    _atomic_text(out / "edges.tsv", "".join(f"{u}\t{v}\n" for u, v in g.edges()))
    _atomic_text(out / "manifest.json", manifest.to_json())
    return manifest


def load_dataset(data_dir) -> tuple[SocialGraph, DatasetManifest]:
    d = Path(data_dir)
    try:
        meta = json.loads((d / "manifest.json").read_text())
    except FileNotFoundError:
        raise DatasetError(f"{d} has no manifest.json") from None
    man = DatasetManifest(**meta)
    pts = []
    for no, line in enumerate((d / "locations.tsv").read_text().splitlines(), 1):
        parts = line.split("\t")
        if len(parts) != 3 or int(parts[0]) != len(pts):
            raise DatasetError(f"locations.tsv line {no}: expected '<id>\\t<x>\\t<y>' in id order")
        pts.append((float(parts[1]), float(parts[2])))
    edges = []
    for no, line in enumerate((d / "edges.tsv").read_text().splitlines(), 1):
        parts = line.split()
        if len(parts) != 2:
            raise DatasetError(f"edges.tsv line {no}: expected two user ids")
        edges.append((int(parts[0]), int(parts[1])))
    g = SocialGraph(np.array(pts, dtype=np.float64).reshape(-1, 2), edges)
    if graph_digest(g).hex() != man.digest:
        raise DatasetError("dataset files do not match the manifest digest")
    return g, man


def synth_dataset(n: int, m: int, clusters: int, seed: int, out_dir) -> DatasetManifest:
    s = synth_graph(n, m, clusters, seed)
    g = SocialGraph(s.points, s.edges)
    man = DatasetManifest(source={"generator": "synth", "n": n, "m": m, "clusters": clusters},
                          users_before=n, users_after=n, edges=m, transform={}, seed=seed,
                          extra={"retries": s.retries})
    return save_dataset(out_dir, g, man)


def ingest(edges_path, checkins_path, out_dir, seed: int = 0) -> DatasetManifest:
    """Gowalla-format check-ins and friendships to a normalised dataset.

    The first check-in of each user (file order) is the location; users
    without check-ins and their edges are dropped. Longitude maps to x and
    latitude to y, each by min-max scaling onto [0, 1].
    """
    first: dict[str, tuple[float, float]] = {}
    with open(checkins_path) as f:
        for no, line in enumerate(f, 1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) < 5:
                raise DatasetError(f"{checkins_path}:{no}: expected 5 tab-separated fields")
            try:
                lat, lon = float(parts[2]), float(parts[3])
            except ValueError:
                raise DatasetError(f"{checkins_path}:{no}: bad coordinates") from None
            if not (math.isfinite(lat) and math.isfinite(lon)):
                raise DatasetError(f"{checkins_path}:{no}: non-finite coordinates")
            first.setdefault(parts[0], (lon, lat))
    raw_edges: set[tuple[str, str]] = set()
    seen_users: set[str] = set(first)
    with open(edges_path) as f:
        for no, line in enumerate(f, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise DatasetError(f"{edges_path}:{no}: expected two user ids")
            a, b = parts
            seen_users.update(parts)
            if a != b:
                raw_edges.add((a, b) if a < b else (b, a))
    if not first:
        raise DatasetError("no user has a check-in; the graph would be empty")

    def sort_key(u: str):
        return (0, int(u), u) if u.lstrip("-").isdigit() else (1, 0, u)

    users = sorted(first, key=sort_key)
    ids = {u: i for i, u in enumerate(users)}
    raw = np.array([first[u] for u in users], dtype=np.float64)
    lo, hi = raw.min(axis=0), raw.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    pts = np.clip((raw - lo) / span, 0.0, 1.0)
    kept = sorted({(min(ids[a], ids[b]), max(ids[a], ids[b])) for a, b in raw_edges if a in ids and b in ids})
    g = SocialGraph(pts, kept)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _atomic_text(out / "users.tsv", "".join(f"{i}\t{u}\n" for i, u in enumerate(users)))
    man = DatasetManifest(
        source={"edges": str(edges_path), "checkins": str(checkins_path)},
        users_before=len(seen_users), users_after=g.n, edges=g.m,
        transform={"x": {"from": "longitude", "min": float(lo[0]), "max": float(hi[0])},
                   "y": {"from": "latitude", "min": float(lo[1]), "max": float(hi[1])}},
        seed=seed,
        extra={"pruned_users": len(seen_users) - g.n, "dropped_edges": len(raw_edges) - len(kept)})
    return save_dataset(out, g, man)


# ---------------------------------------------------------------------------
# workloads


def gen_workload(g: SocialGraph, digest: str, qtype: str, count: int = 1000, c: int = 4,
                 k: Optional[int] = None, r: Optional[float] = None, seed: int = 0) -> dict:
    """Issuers drawn uniformly with a seeded generator; ranges are squares of edge ``r`` on the issuer."""
    if qtype not in ("range", "rknn", "knn"):
        raise ValueError(f"unknown query type {qtype!r}")
    if g.n == 0:
        raise DatasetError("cannot draw issuers from an empty dataset")
    rng = np.random.default_rng(seed)
    issuers = rng.integers(0, g.n, count).tolist()
    qs = []
    for i, v in enumerate(issuers):
        q = {"id": i, "issuer": int(v), "c": int(c)}
        if qtype == "range":
            q["r"] = float(r if r is not None else 0.002)
        else:
            q["k"] = int(k if k is not None else 100)
        qs.append(q)
    return {"digest": digest, "type": qtype, "seed": seed, "count": count, "queries": qs}


def write_workload(path, wl: dict) -> None:
    _atomic_text(Path(path), json.dumps(wl, sort_keys=True, separators=(",", ":")) + "\n")


def read_workload(path) -> dict:
    return json.loads(Path(path).read_text())


def range_rect(p, r: float, domain: Rect = DOMAIN) -> Rect:
    h = r / 2.0
    return Rect(max(p[0] - h, domain.x0), max(p[1] - h, domain.y0), min(p[0] + h, domain.x1), min(p[1] + h, domain.y1))


def spec_of(g: SocialGraph, qtype: str, q: dict) -> QuerySpec:
    v = int(q["issuer"])
    if qtype == "range":
        return QuerySpec(v, Range(range_rect(g.point(v), float(q["r"]))), int(q["c"]))
    cls = RelaxedKnn if qtype == "rknn" else StrictKnn
    return QuerySpec(v, cls(int(q["k"])), int(q["c"]))


# ---------------------------------------------------------------------------
# bench

REPORT_COLUMNS = ["index", "kind", "query_id", "type", "issuer", "c", "k", "r", "size", "d_max",
                  "index_pages", "coupled_pages", "user_pages", "pages", "cpu_s", "latency_s", "min_degree_ok"]


def _fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".9g")
    return str(x)


def run_bench(index_dirs: Sequence, workload: dict, report_path, page_ms: float = 2.0,
              data: Optional[SocialGraph] = None) -> list[dict]:
    """Run every workload query on every index and write per-query and aggregate CSV rows.

    Latency is the query's CPU time plus all page reads times ``page_ms``.
    """
    rows: list[dict] = []
    qtype = workload["type"]
    for d in index_dirs:
        index = PagedIndex(d)
        if index.digest.hex() != workload["digest"]:
            raise DatasetError(f"index {d} was built from a different dataset than the workload")
        g = data if data is not None else _graph_of(index)
        name = Path(d).name or str(d)
        page_s = page_ms / 1000.0
        for q in workload["queries"]:
            spec = spec_of(g, qtype, q)
            res = run_query(index, g, spec)
            ctr = res.counters
            pages = ctr.index_pages + ctr.coupled_pages + ctr.user_pages
            ok = ""
            if res.members:
                ok = int(min_internal_degree(g, res.members | {spec.issuer}) >= spec.c)
            rows.append({
                "index": name, "kind": index.kind.name.lower(), "query_id": q["id"], "type": qtype,
                "issuer": q["issuer"], "c": q["c"], "k": q.get("k", ""), "r": q.get("r", ""),
                "size": len(res.members), "d_max": res.d_max if res.members else "",
                "index_pages": ctr.index_pages, "coupled_pages": ctr.coupled_pages, "user_pages": ctr.user_pages,
                "pages": pages, "cpu_s": res.cpu_time, "latency_s": res.cpu_time + pages * page_s,
                "min_degree_ok": ok,
            })
    _write_report(report_path, rows)
    return rows


def aggregate(rows: Iterable[dict]) -> list[dict]:
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        groups.setdefault((r["kind"], r["type"]), []).append(r)
    out = []
    for (kind, qtype), rs in sorted(groups.items()):
        out.append({"index": "", "kind": kind, "query_id": "mean", "type": qtype,
                    "pages": float(np.mean([r["pages"] for r in rs])),
                    "index_pages": float(np.mean([r["index_pages"] for r in rs])),
                    "coupled_pages": float(np.mean([r["coupled_pages"] for r in rs])),
                    "user_pages": float(np.mean([r["user_pages"] for r in rs])),
                    "cpu_s": float(np.mean([r["cpu_s"] for r in rs])),
                    "latency_s": float(np.mean([r["latency_s"] for r in rs]))})
    return out


def _write_report(path, rows: list[dict]) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(REPORT_COLUMNS)
        for r in rows + aggregate(rows):
            w.writerow([_fmt(r.get(c, "")) for c in REPORT_COLUMNS])
    os.replace(tmp, path)


def _graph_of(index: PagedIndex) -> SocialGraph:
    adj = index.adjacency()
    return SocialGraph(index.points(), [(u, v) for u, a in enumerate(adj) for v in a if u < v])
