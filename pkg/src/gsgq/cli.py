"""Command line workbench: ``gsgq <command> ...``."""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict
from pathlib import Path

from gsgq.graph import core_decompose
from gsgq.index.build import build, graph_digest, load_built
from gsgq.index.storage import IndexError_, IndexKind, PagedIndex
from gsgq.query import QueryError, run_query
from gsgq import update as U
from gsgq import workbench as W

MEMO_FILE = "memo.ops"


def _graph(index: PagedIndex):
    return W._graph_of(index)


def cmd_ingest(a) -> dict:
    return asdict(W.ingest(a.edges, a.checkins, a.out, a.seed))


def cmd_synth(a) -> dict:
    return asdict(W.synth_dataset(a.n, a.m, a.clusters, a.seed, a.out))


def cmd_build(a) -> dict:
    g, man = W.load_dataset(a.data)
    b = build(g, a.index, a.page_size, digest=bytes.fromhex(man.digest))
    px = b.write(Path(a.out))
    return {"kind": a.index, "pages": px.page_count, "fanout": px.fanout, "users": px.n_users,
            "stored_cbrs": b.stored_cbrs()}


def cmd_gen_workload(a) -> dict:
    g, man = W.load_dataset(a.data)
    wl = W.gen_workload(g, man.digest, a.type, a.count, a.c, a.k, a.r, a.seed)
    W.write_workload(a.out, wl)
    return {"queries": len(wl["queries"]), "out": str(a.out)}


def _spec(g, a):
    q = {"issuer": a.issuer, "c": a.c}
    if a.type == "range":
        q["r"] = a.r if a.r is not None else 0.002
    else:
        q["k"] = a.k if a.k is not None else 100
    return W.spec_of(g, a.type, q)


def cmd_query(a) -> dict:
    index = PagedIndex(a.index)
    g = _graph(index)
    if not 0 <= a.issuer < g.n:
        raise QueryError(f"unknown issuer {a.issuer}")
    spec = _spec(g, a)
    if a.memo:
        memo = U.UpdateMemo()
        for i, op in enumerate(U.parse_ops(Path(a.memo).read_text().splitlines())):
            if isinstance(op, U.LocationMove) and op.old is None:
                raise U.UpdateError("memo moves must record their old point")
            memo.append(U.UserUpdate(i + 1, op))
        res = U.memo_query(index, g, U.MemoFilter(memo, g, core_decompose(g)), spec)
    else:
        res = run_query(index, g, spec)
    ctr = res.counters
    return {"members": sorted(res.members), "size": len(res.members),
            "d_max": res.d_max if math.isfinite(res.d_max) else None,
            "index_pages": ctr.index_pages, "coupled_pages": ctr.coupled_pages,
            "user_pages": ctr.user_pages, "cpu_s": res.cpu_time}


def cmd_bench(a) -> dict:
    dirs = [d for d in a.indexes.split(",") if d]
    rows = W.run_bench(dirs, W.read_workload(a.workload), a.report, a.page_ms)
    return {"rows": len(rows), "report": str(a.report)}


def cmd_update(a) -> dict:
    """Apply an op file; updates short of a full batch stay pending in ``memo.ops`` next to the index."""
    built = load_built(a.index)
    state = U.UpdateState(built, a.batch_size)
    ops = U.parse_ops(Path(a.ops).read_text().splitlines())
    state.apply_all(ops)
    built.digest = graph_digest(built.g)
    built.write(Path(a.index))
    memo_path = Path(a.index) / MEMO_FILE
    memo_path.write_text("".join(U.format_op(e.op) + "\n" for e in state.memo.entries))
    out = asdict(state.totals)
    out.update(pending=len(state.memo), memo=str(memo_path))
    return out


def parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gsgq", description="Geo-social group query workbench")
    sub = p.add_subparsers(dest="cmd", required=True)

    s = sub.add_parser("ingest", help="normalise Gowalla-format check-ins and edges")
    s.add_argument("--edges", required=True)
    s.add_argument("--checkins", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(fn=cmd_ingest)

    s = sub.add_parser("synth", help="generate a clustered power-law dataset")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--m", type=int, required=True)
    s.add_argument("--clusters", type=int, default=10)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_synth)

    s = sub.add_parser("build", help="build a paged index")
    s.add_argument("--data", required=True)
    s.add_argument("--index", required=True, choices=[k.name.lower() for k in IndexKind])
    s.add_argument("--page-size", type=int, default=4096)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_build)

    s = sub.add_parser("gen-workload", help="draw a seeded query workload")
    s.add_argument("--data", required=True)
    s.add_argument("--type", required=True, choices=["range", "rknn", "knn"])
    s.add_argument("--count", type=int, default=1000)
    s.add_argument("--c", type=int, default=4)
    g = s.add_mutually_exclusive_group()
    g.add_argument("--k", type=int)
    g.add_argument("--r", type=float)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_gen_workload)

    s = sub.add_parser("query", help="run one query")
    s.add_argument("--index", required=True)
    s.add_argument("--type", required=True, choices=["range", "rknn", "knn"])
    s.add_argument("--issuer", type=int, required=True)
    s.add_argument("--c", type=int, required=True)
    g = s.add_mutually_exclusive_group()
    g.add_argument("--k", type=int)
    g.add_argument("--r", type=float)
    s.add_argument("--memo", help="pending update file written by the update command")
    s.set_defaults(fn=cmd_query)

    s = sub.add_parser("bench", help="run a workload against indexes and write a CSV report")
    s.add_argument("--indexes", required=True, help="comma-separated index directories")
    s.add_argument("--workload", required=True)
    s.add_argument("--report", required=True)
    s.add_argument("--page-ms", type=float, default=2.0)
    s.set_defaults(fn=cmd_bench)

    s = sub.add_parser("update", help="apply location and friendship updates to an index")
    s.add_argument("--index", required=True)
    s.add_argument("--ops", required=True)
    s.add_argument("--batch-size", type=int, default=30000)
    s.set_defaults(fn=cmd_update)
    return p


def main(argv=None) -> int:
    a = parser().parse_args(argv)
    try:
        out = a.fn(a)
    except (ValueError, OSError, IndexError_) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(json.dumps(out, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
