import csv
import json
import math

import numpy as np
import pytest

from gsgq.graph import core_decompose
from gsgq.index.build import build_to
from gsgq.workbench import (REPORT_COLUMNS, DatasetError, gen_workload, ingest, load_dataset,
                            range_rect, run_bench, synth_dataset, synth_graph, write_workload)

CHECKINS = """\
10\t2010-10-19T23:55:27Z\t30.0\t-97.0\t1
10\t2010-10-18T22:17:43Z\t31.0\t-96.0\t2
20\t2010-10-17T23:42:03Z\t32.0\t-98.0\t3
30\t2010-10-17T19:26:05Z\t30.5\t-97.5\t4
10\t2010-10-16T18:50:42Z\t33.0\t-99.0\t5
"""
EDGES = "10 20\n20 10\n10 30\n30 40\n10 20\n"


@pytest.fixture
def raw(tmp_path):
    (tmp_path / "c.txt").write_text(CHECKINS)
    (tmp_path / "e.txt").write_text(EDGES)
    return tmp_path


def test_ingest_first_checkin_and_dedup(raw):
    man = ingest(raw / "e.txt", raw / "c.txt", raw / "out")
    g, again = load_dataset(raw / "out")
    assert again.digest == man.digest
    assert man.users_after == 3 and man.users_before == 4 and man.extra["pruned_users"] == 1
    assert g.m == 2
    # user 10 (id 0) keeps its first check-in: lon -97 on [-98, -97], lat 30 on [30, 32]
    assert tuple(g.point(0)) == (1.0, 0.0)
    assert np.all((g.points >= 0) & (g.points <= 1))


def test_ingest_normalisation_is_monotone(raw):
    ingest(raw / "e.txt", raw / "c.txt", raw / "out")
    g, _ = load_dataset(raw / "out")
    lons = [-97.0, -98.0, -97.5]
    order = np.argsort(lons)
    assert np.all(np.diff(g.points[order, 0]) >= 0)


def test_ingest_parse_error_has_line(tmp_path):
    (tmp_path / "c.txt").write_text("1\tt\t30\t-97\t1\n2\tt\tbad\t-97\t1\n")
    (tmp_path / "e.txt").write_text("1 2\n")
    with pytest.raises(DatasetError, match=":2:"):
        ingest(tmp_path / "e.txt", tmp_path / "c.txt", tmp_path / "o")


def test_ingest_all_pruned_is_an_error(tmp_path):
    (tmp_path / "c.txt").write_text("")
    (tmp_path / "e.txt").write_text("1 2\n")
    with pytest.raises(DatasetError):
        ingest(tmp_path / "e.txt", tmp_path / "c.txt", tmp_path / "o")


def test_synth_deterministic_and_edgeless(tmp_path):
    a = synth_dataset(50, 100, 3, 7, tmp_path / "a")
    b = synth_dataset(50, 100, 3, 7, tmp_path / "b")
    assert a.digest == b.digest
    synth_dataset(20, 0, 2, 1, tmp_path / "z")
    g, _ = load_dataset(tmp_path / "z")
    assert g.m == 0 and not core_decompose(g).core_number.any()


def test_synth_average_degree():
    s = synth_graph(2000, 9000, 10, seed=1)
    assert len(s.edges) == 9000 and math.isclose(2 * len(s.edges) / 2000, 9.0)
    with pytest.raises(ValueError):
        synth_graph(3, 4)


def test_tampered_dataset_rejected(tmp_path):
    synth_dataset(30, 60, 2, 1, tmp_path / "d")
    (tmp_path / "d" / "edges.tsv").write_text("0\t1\n")
    with pytest.raises(DatasetError):
        load_dataset(tmp_path / "d")


def test_workload_bytes_are_reproducible(tmp_path):
    synth_dataset(100, 300, 3, 2, tmp_path / "d")
    g, man = load_dataset(tmp_path / "d")
    wl = gen_workload(g, man.digest, "rknn", 1000, 4, seed=3)
    assert len(wl["queries"]) == 1000 and all(q["k"] == 100 and q["c"] == 4 for q in wl["queries"])
    write_workload(tmp_path / "a.json", gen_workload(g, man.digest, "range", 50, seed=5))
    write_workload(tmp_path / "b.json", gen_workload(g, man.digest, "range", 50, seed=5))
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    assert json.loads((tmp_path / "a.json").read_text())["queries"][0]["r"] == 0.002


def test_range_square_is_centred_and_clipped():
    r = range_rect((0.5, 0.5), 0.2)
    assert math.isclose(r.x1 - r.x0, 0.2) and math.isclose(r.y1 - r.y0, 0.2)
    assert range_rect((0.0, 0.99), 0.1)[:2] == (0.0, 0.94)


@pytest.fixture
def bench_env(tmp_path):
    synth_dataset(300, 1300, 4, 3, tmp_path / "d")
    g, man = load_dataset(tmp_path / "d")
    dirs = []
    for kind in ("br", "sarstar"):
        build_to(tmp_path / kind, g, kind, 512, digest=bytes.fromhex(man.digest))
        dirs.append(tmp_path / kind)
    return tmp_path, g, man, dirs


def test_bench_rows_and_latency(bench_env):
    tmp, g, man, dirs = bench_env
    wl = gen_workload(g, man.digest, "rknn", 20, 2, k=10, seed=1)
    rows = run_bench(dirs, wl, tmp / "rep.csv", page_ms=2.0)
    with open(tmp / "rep.csv") as f:
        table = list(csv.reader(f))
    assert table[0] == REPORT_COLUMNS
    per_query = [r for r in table[1:] if r[2] != "mean"]
    means = [r for r in table[1:] if r[2] == "mean"]
    assert len(per_query) == 40 and len(means) == 2
    for r in rows:
        assert r["latency_s"] == r["cpu_s"] + r["pages"] * (2.0 / 1000.0)
        assert r["min_degree_ok"] in ("", 1)
    by = {}
    for r in rows:
        by.setdefault(r["query_id"], set()).add(r["d_max"])
    assert all(len(v) == 1 for v in by.values())


def test_bench_empty_workload_and_digest_mismatch(bench_env):
    tmp, g, man, dirs = bench_env
    run_bench(dirs, gen_workload(g, man.digest, "range", 0), tmp / "empty.csv")
    assert (tmp / "empty.csv").read_text().strip() == ",".join(REPORT_COLUMNS)
    with pytest.raises(DatasetError):
        run_bench(dirs, gen_workload(g, "00" * 32, "range", 3), tmp / "x.csv")
