"""Acceptance suite. Each test prints one PASS/FAIL line and enforces its time budget."""
import math
import random
import time
from functools import lru_cache

import numpy as np

from gsgq.cbr import CbrContext, cbr_count_bound
from gsgq.geometry import DOMAIN, Rect, contains_point
from gsgq.graph import SocialGraph, core_decompose, is_c_core, kplex_upper_bound
from gsgq.index.build import build
from gsgq.oracles import (brute_knn, brute_range, cbr_maximal, cbr_valid, max_kplex_size,
                          min_internal_degree, spatial_knn, users_strictly_inside)
from gsgq.query import (QuerySpec, Range, RelaxedKnn, StrictKnn, Trace, baseline_rknn, gsgq_range,
                        gsgq_rknn, run_query)
from gsgq.update import UpdateState, memo_query, random_stream
from gsgq.workbench import range_rect

from conftest import record, synth

KINDS = ("br", "cr", "sar", "sarstar")
# every SaR / SaR* build made here, for the storage bound check
BUILT: list = []


def _build(g, kind, page_size=512, **kw):
    b = build(g, kind, page_size, **kw)
    if b.kind.has_cbrs:
        BUILT.append(b)
    return b


def _square(g, v, rng, lo=0.02, hi=0.3):
    return range_rect(g.point(v), rng.uniform(lo, hi), DOMAIN)


@lru_cache(maxsize=None)
def range_suite():
    """500 range queries over five graphs of 100..500 users, answered by all four index kinds."""
    out = []
    for gi, n in enumerate((100, 200, 300, 400, 500)):
        g = synth(n, int(4.5 * n), 3 + gi, seed=100 + gi)
        core = core_decompose(g)
        pxs = {kind: _build(g, kind, core=core).snapshot() for kind in KINDS}
        rng = random.Random(gi)
        qs = [QuerySpec(v, Range(_square(g, v, rng)), rng.randint(1, 5))
              for v in (rng.randrange(n) for _ in range(100))]
        out.append((g, pxs, qs))
    return out


@lru_cache(maxsize=None)
def rknn_suite():
    """500 rkNN queries over five 500-user graphs, on shared SaR and SaR* trees."""
    out = []
    for gi in range(5):
        g = synth(500, 2250, 4 + gi, seed=200 + gi)
        pxs = {kind: _build(g, kind).snapshot() for kind in ("sar", "sarstar")}
        rng = random.Random(50 + gi)
        qs = [QuerySpec(rng.randrange(g.n), RelaxedKnn(rng.randint(1, 60)), rng.randint(1, 5)) for _ in range(100)]
        out.append((g, pxs, qs))
    return out


def test_c1_min_degree_guarantee():
    t0 = time.perf_counter()
    g = synth(2000, 9000, 10, seed=1)
    px = _build(g, "sar", 4096).snapshot()
    rng = np.random.default_rng(1)
    # the range grid is scaled for density: 2k users instead of ~100k
    draws = {
        "range": lambda v: QuerySpec(v, Range(range_rect(g.point(v), float(rng.uniform(0.015, 0.075)))),
                                     int(rng.integers(1, 6))),
        "rknn": lambda v: QuerySpec(v, RelaxedKnn(int(rng.integers(20, 251))), int(rng.integers(1, 6))),
        "knn": lambda v: (lambda k: QuerySpec(v, StrictKnn(k), int(rng.integers(1, min(k, 4) + 1))))(
            int(rng.integers(3, 7))),
    }
    bad, nonempty, spent = 0, {}, {}
    for kind, draw in draws.items():
        nonempty[kind] = 0
        t1 = time.perf_counter()
        for _ in range(1000):
            v = int(rng.integers(g.n))
            q = draw(v)
            res = run_query(px, g, q)
            if res.members:
                nonempty[kind] += 1
                bad += min_internal_degree(g, res.members | {v}) < q.c
        spent[kind] = round(time.perf_counter() - t1, 1)
    control = [min_internal_degree(g, spatial_knn(g, int(v), 20) | {int(v)}) for v in rng.integers(0, g.n, 1000)]
    med = float(np.median(control))
    elapsed = time.perf_counter() - t0
    ok = bad == 0 and med == 0 and all(nonempty.values()) and elapsed < 120
    record(1, "min-degree guarantee", ok,
           f"violations={bad} nonempty={nonempty} control_median={med} per_type_s={spent} time={elapsed:.1f}s")
    assert bad == 0 and all(nonempty.values())
    assert med == 0
    assert elapsed < 120


def test_c2_range_oracle_equivalence():
    t0 = time.perf_counter()
    suite = range_suite()
    mism = total = nonempty = 0
    for g, pxs, qs in suite:
        for q in qs:
            want = brute_range(g, q.issuer, q.constraint.rect, q.c)
            nonempty += bool(want)
            for kind in KINDS:
                total += 1
                mism += run_query(pxs[kind], g, q).members != want
    elapsed = time.perf_counter() - t0
    ok = mism == 0 and elapsed < 60
    record(2, "range oracle equivalence", ok,
           f"queries={sum(len(s[2]) for s in suite)} answers={total} nonempty={nonempty} "
           f"mismatches={mism} time={elapsed:.1f}s")
    assert mism == 0
    assert elapsed < 60


def test_c3_rknn_matches_baseline():
    t0 = time.perf_counter()
    suite = rknn_suite()
    dviol = sviol = 0
    for g, pxs, qs in suite:
        for q in qs:
            for kind, px in pxs.items():
                tr, tb = Trace(), Trace()
                got = gsgq_rknn(px, g, q, tr)
                base = baseline_rknn(px, g, q, tb)
                same = (math.isinf(got.d_max) and math.isinf(base.d_max)) or abs(got.d_max - base.d_max) <= 1e-12
                dviol += not same
                sviol += not set(tr.popped) <= set(tb.popped)
    elapsed = time.perf_counter() - t0
    ok = dviol == sviol == 0 and elapsed < 120
    record(3, "rkNN optimality", ok,
           f"queries={sum(len(s[2]) for s in suite)} d_max_violations={dviol} "
           f"explored_violations={sviol} time={elapsed:.1f}s")
    assert dviol == 0 and sviol == 0
    assert elapsed < 120


def test_c4_strict_knn_exactness():
    t0 = time.perf_counter()
    rng = random.Random(4)
    mism = found = 0
    for i in range(200):
        n = rng.randint(8, 25)
        g = synth(n, min(rng.randint(2 * n, 4 * n), n * (n - 1) // 3), rng.randint(1, 3), seed=400 + i)
        px = _build(g, rng.choice(KINDS), 256).snapshot()
        v, k = rng.randrange(n), rng.randint(1, 6)
        c = rng.randint(1, min(k, 3))
        res = run_query(px, g, QuerySpec(v, StrictKnn(k), c))
        want, dm = brute_knn(g, v, k, c)
        if math.isinf(dm):
            mism += bool(res.members)
            continue
        found += 1
        w = res.members | {v}
        mism += not (len(res.members) == k and v not in res.members and is_c_core(g, w, c)
                     and abs(res.d_max - dm) <= 1e-12)
    elapsed = time.perf_counter() - t0
    ok = mism == 0 and elapsed < 180
    record(4, "strict kNN exactness", ok, f"queries=200 found={found} mismatches={mism} time={elapsed:.1f}s")
    assert mism == 0
    assert elapsed < 180


def test_c5_cbr_valid_and_maximal():
    t0 = time.perf_counter()
    rng = random.Random(5)
    fails = pairs = 0
    while pairs < 200:
        g = synth(60, 240, rng.randint(1, 4), seed=500 + pairs)
        core = core_decompose(g)
        ctx = CbrContext(g, core)
        for _ in range(10):
            v = rng.randrange(g.n)
            if core[v] < 1:
                continue
            c = rng.randint(1, core[v])
            r = ctx.comp_cbr(v, c)
            if len(users_strictly_inside(g, r, v)) > 14:
                continue
            pairs += 1
            fails += not (contains_point(r, g.point(v)) and cbr_valid(g, v, c, r) and cbr_maximal(g, v, c, r, DOMAIN))
            if pairs == 200:
                break
    elapsed = time.perf_counter() - t0
    ok = fails == 0 and elapsed < 120
    record(5, "CBR validity and maximality", ok, f"pairs={pairs} failures={fails} time={elapsed:.1f}s")
    assert fails == 0
    assert elapsed < 120


def _paths(px, members):
    """Traced idents of every entry on the root-to-leaf path of each member."""
    out, stack = {}, [(px.root, ())]
    while stack:
        pid, path = stack.pop()
        view = px.read_node(pid)
        for x in view.ids:
            x = int(x)
            if view.leaf:
                if x in members:
                    out[x] = path + (("u", x),)
            else:
                stack.append((x, path + (("n", x),)))
    return out


def test_c6_pruning_safety():
    viol = checked = 0
    for g, pxs, qs in range_suite():
        for q in qs:
            for kind in ("sar", "sarstar"):
                tr = Trace()
                res = gsgq_range(pxs[kind], g, q, tr)
                if not res.members:
                    continue
                checked += 1
                popped = set(tr.popped)
                for path in _paths(pxs[kind], res.members).values():
                    viol += any(e in tr.cbr_pruned or e not in popped for e in path)
    for g, pxs, qs in rknn_suite():
        for q in qs:
            for px in pxs.values():
                tr = Trace()
                res = gsgq_rknn(px, g, q, tr)
                if not res.members:
                    continue
                checked += 1
                key = {}
                for e, kv in zip(tr.popped, tr.keys):
                    key.setdefault(e, kv)
                for path in _paths(px, res.members).values():
                    viol += any(e not in key or key[e] > res.d_max for e in path)
    ok = viol == 0
    record(6, "pruning safety", ok, f"nonempty_runs={checked} violations={viol}")
    assert viol == 0


def test_c7_kplex_bound():
    t0 = time.perf_counter()
    rng = random.Random(7)
    viol = cases = 0
    for seed in range(200):
        n = rng.randint(1, 12)
        p_edge = rng.uniform(0.1, 0.9)
        pts = np.array([[rng.random(), rng.random()] for _ in range(n)]).reshape(-1, 2)
        g = SocialGraph(pts, [(u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < p_edge])
        for cbar in (1, 2, 3):
            best = max_kplex_size(g, cbar)
            for p in (1, 2):
                cases += 1
                viol += kplex_upper_bound(g, cbar, p) < best
    elapsed = time.perf_counter() - t0
    ok = viol == 0 and elapsed < 120
    record(7, "k-plex bound soundness", ok, f"cases={cases} violations={viol} time={elapsed:.1f}s")
    assert viol == 0
    assert elapsed < 120


def test_c8_lazy_updates():
    t0 = time.perf_counter()
    mism = trend_bad = 0
    rates = {1: 0, 100: 0, 5000: 0}
    for s in range(20):
        g0 = synth(100, 450, 5, seed=800 + s)
        ops = random_stream(g0, 5000, social=0.05, seed=s)
        kind = "sar" if s % 2 == 0 else "sarstar"
        rng = random.Random(s)
        per = {}
        for batch in (1, 100, 5000):
            g = g0.copy()
            st = UpdateState(_build(g, kind, 1024), batch)
            for i, op in enumerate(ops, 1):
                st.apply(op)
                if i % 1250 and i != 4999:
                    continue
                snap, mf = st.snapshot(), st.memo_filter()
                fresh = build(g.copy(), kind, 1024).snapshot()
                v, c = rng.randrange(g.n), rng.randint(1, 4)
                for q in (QuerySpec(v, Range(_square(g, v, rng, 0.05, 0.3)), c),
                          QuerySpec(v, RelaxedKnn(rng.randint(1, 20)), c),
                          QuerySpec(v, StrictKnn(rng.randint(c, 5)), c)):
                    a, b = memo_query(snap, g, mf, q), run_query(fresh, g, q)
                    mism += a.members != b.members if isinstance(q.constraint, Range) else a.d_max != b.d_max
            st.batch_refresh()
            per[batch] = st.totals.recomputed / len(ops)
            rates[batch] += st.totals.recomputed
        trend_bad += not per[1] >= per[100] >= per[5000]
    elapsed = time.perf_counter() - t0
    amort = {b: round(x / (20 * 5000), 4) for b, x in rates.items()}
    ok = mism == 0 and trend_bad == 0 and elapsed < 300
    record(8, "lazy-update correctness", ok,
           f"mismatches={mism} trend_violations={trend_bad} recomputes_per_update={amort} time={elapsed:.1f}s")
    assert mism == 0
    assert trend_bad == 0
    assert elapsed < 300


def test_c9_range_page_trend():
    t0 = time.perf_counter()
    # clustered profile: tight clusters with strong homophily, so range queries at c=4 are often nonempty
    g = synth(10000, 45000, 50, seed=1, spread=0.1, homophily=0.95)
    core = core_decompose(g)
    ctx = CbrContext(g, core)
    lads = [ctx.ladder(v) for v in range(g.n)]
    issuers = np.random.default_rng(9).integers(0, g.n, 300)
    mean = {}
    nonempty = 0
    for kind in KINDS:
        px = _build(g, kind, 4096, core=core, ladders=lads).snapshot()
        tot = []
        for v in issuers:
            res = run_query(px, g, QuerySpec(int(v), Range(range_rect(g.point(int(v)), 0.02)), 4))
            ctr = res.counters
            tot.append(ctr.index_pages + ctr.coupled_pages + ctr.user_pages)
            nonempty += kind == "br" and bool(res.members)
        mean[kind] = float(np.mean(tot))
    elapsed = time.perf_counter() - t0
    order = mean["sarstar"] < mean["sar"] < mean["cr"] < mean["br"]
    ratio = mean["sarstar"] <= 0.8 * mean["br"]
    ok = order and ratio and elapsed < 180
    record(9, "range page-access trend", ok,
           f"mean_pages={ {k: round(x, 2) for k, x in mean.items()} } nonempty={nonempty}/300 "
           f"order={order} sarstar<=0.8br={ratio} time={elapsed:.1f}s")
    assert elapsed < 180
    assert order and ratio


def test_c10_cbr_storage_bound():
    if not BUILT:
        range_suite()
        rknn_suite()
    viol = 0
    for b in BUILT:
        viol += b.stored_cbrs() > cbr_count_bound(b.g, b.core, b.tree.min_entries)
    ok = viol == 0
    record(10, "CBR storage bound", ok, f"indexes={len(BUILT)} violations={viol}")
    assert viol == 0
