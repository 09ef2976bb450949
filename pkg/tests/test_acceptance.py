"""Acceptance criteria, each at its stated size and tolerance.

Every test records one PASS/FAIL line (printed again in the terminal
summary) before asserting.  The default sweep runs once per session through
the ``kbresize eval`` command; it takes a few minutes.
"""

import json
import os
import time

import numpy as np
import pytest

from kbresize import geometry
from kbresize.cli import main
from kbresize.codebook import EuclideanCodebook
from kbresize.codec import IndexGrid, bits_per_index, pack, unpack
from kbresize.geometry import distance_to_origin, exp_map, hyperbolic_distance, log_map
from kbresize.harness import DEFAULT_CHILD_SIZES, SweepConfig, read_records_csv, records_csv
from kbresize.ranking import compute_ranking, resize
from kbresize.tree import build_mst, prune_to_size

import oracles
from conftest import random_ball_points, record_criterion

pytestmark = pytest.mark.slow

PARENT_SIZE = 4096
N_SEEDS = 10


@pytest.fixture(scope="session")
def sweep(tmp_path_factory):
    out = tmp_path_factory.mktemp("sweep")
    t0 = time.perf_counter()
    assert main(["eval", "--out-dir", str(out)]) == 0
    elapsed = time.perf_counter() - t0
    records = read_records_csv((out / "records.csv").read_text())
    assert len(records) == N_SEEDS * len(DEFAULT_CHILD_SIZES) * 3
    return {"dir": out, "records": records, "elapsed": elapsed}


def _mse_table(records):
    return {(r.seed, r.method, r.kb_size): r.mse for r in records}


def _unit_directions(rng, n, dim):
    v = rng.normal(size=(n, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def test_criterion_1_round_trip():
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst = 0.0
    for dim in (1, 2, 16, 64, 512):
        v = _unit_directions(rng, 10_000, dim) * rng.uniform(0.0, 5.0, size=(10_000, 1))
        back = log_map(exp_map(v))
        worst = max(worst, float(np.max(np.abs(back - v) / np.abs(v))))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and elapsed < 10.0
    record_criterion(1, ok, f"max relative error {worst:.3g} (<= 1e-9), {elapsed:.2f}s (< 10s)")
    assert ok


def test_criterion_2_distance_identities():
    rng = np.random.default_rng(2)
    dim = 8
    p = _unit_directions(rng, 10_000, dim) * rng.uniform(0.0, 0.999, size=(10_000, 1))
    d0 = hyperbolic_distance(np.zeros_like(p), p)
    identity = float(np.max(np.abs(d0 - 2.0 * np.arctanh(np.linalg.norm(p, axis=1)))))
    identity = max(identity, float(np.max(np.abs(distance_to_origin(p) - d0))))

    def ball(n):
        return _unit_directions(rng, n, dim) * rng.uniform(0.0, 0.999, size=(n, 1))

    a, b, c = ball(10_000), ball(10_000), ball(10_000)
    symmetry = float(np.max(np.abs(hyperbolic_distance(a, b) - hyperbolic_distance(b, a))))
    excess = float(np.max(hyperbolic_distance(a, c) - hyperbolic_distance(a, b) - hyperbolic_distance(b, c)))
    ok = identity <= 1e-9 and symmetry <= 1e-9 and excess <= 1e-9
    record_criterion(2, ok, f"|d(0,p) - 2 artanh|p|| <= {identity:.3g}, asymmetry {symmetry:.3g}, "
                            f"triangle excess {excess:.3g} (all <= 1e-9)")
    assert ok


def test_criterion_3_mst_oracle():
    rng = np.random.default_rng(3)
    t0 = time.perf_counter()
    worst = 0.0
    for trial in range(500):
        n = 3 + trial % 5
        pts = random_ball_points(rng, n, int(rng.integers(1, 6)))
        brute = oracles.brute_force_mst_weight(oracles.distance_matrix(pts))
        worst = max(worst, abs(build_mst(pts).total_weight - brute))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and elapsed < 60.0
    record_criterion(3, ok, f"500 sets, max |weight - exhaustive| {worst:.3g} (<= 1e-9), {elapsed:.1f}s (< 60s)")
    assert ok


def test_criterion_4_nested_connected_prefix():
    rng = np.random.default_rng(4)
    failures = []
    for trial in range(200):
        size = int(rng.integers(2, 513))
        parent = EuclideanCodebook(rng.normal(scale=rng.uniform(0.2, 2.0), size=(size, int(rng.integers(1, 17)))))
        ranking = compute_ranking(parent)
        tree = build_mst(exp_map(parent.canonical_vectors))
        order = np.asarray(ranking.survival_order)
        removal = ranking.removal_order()
        pos = np.empty(size, dtype=np.int64)
        pos[order] = np.arange(size)
        # every prefix contains the root and each member's tree parent: connected, root-containing
        if order[0] != tree.root or np.any(pos[tree.parent[order[1:]]] >= np.arange(1, size)):
            failures.append(f"trial {trial}: disconnected prefix")
        prev = frozenset()
        full = resize(parent, ranking, size).vectors
        for k in range(1, size + 1):
            kept = prune_to_size(tree, removal, k)
            if not (prev < kept and kept == frozenset(order[:k].tolist())):
                failures.append(f"trial {trial}: K={k} not nested")
                break
            if not np.array_equal(resize(parent, ranking, k).vectors, full[:k]):
                failures.append(f"trial {trial}: K={k} resize is not a prefix")
                break
            prev = kept
    ok = not failures
    record_criterion(4, ok, f"200 parents (K <= 512): {len(failures)} violations" +
                     (f", first: {failures[0]}" if failures else ""))
    assert ok


def test_criterion_5_zero_shot_cost():
    rng = np.random.default_rng(5)
    parent = EuclideanCodebook(rng.normal(scale=0.5, size=(PARENT_SIZE, 16)))
    ranking = compute_ranking(parent)
    before = geometry.distance_evaluations()
    slowest, slowest_k = 0.0, None
    for k in range(1, PARENT_SIZE + 1):
        best = np.inf
        for _ in range(3):
            t0 = time.perf_counter()
            child = resize(parent, ranking, k)
            best = min(best, time.perf_counter() - t0)
        assert child.size == k
        if best > slowest:
            slowest, slowest_k = best, k
    evals = geometry.distance_evaluations() - before
    ok = evals == 0 and slowest < 0.010
    record_criterion(5, ok, f"{evals} distance evaluations during resize; slowest K={slowest_k} "
                            f"took {slowest * 1e3:.2f} ms (best of 3, < 10 ms)")
    assert ok


def _exhaustive_grids():
    """Every index value at every bit alignment, plus all short grids for tiny K."""
    import itertools

    for k in (1, 2, 3):
        for n in range(1, 9):
            for idx in itertools.product(range(k), repeat=n):
                yield 1, n, k, list(idx)
    for k in (256, 262144):
        for lead in range(8):
            idx = [0] * lead + list(range(k))
            yield 1, len(idx), k, idx


def test_criterion_6_codec_conformance():
    bad = []
    cases = 0
    for h, w, k, idx in _exhaustive_grids():
        g = IndexGrid(h, w, np.asarray(idx, dtype=np.int64), k)
        p = pack(g)
        cases += 1
        if unpack(p.to_bytes()) != g or p.bit_count != h * w * bits_per_index(k):
            bad.append(("exhaustive", k, len(idx)))
    rng = np.random.default_rng(6)
    for _ in range(10_000):
        k = int(rng.integers(1, 2**int(rng.integers(1, 40)) + 1))
        h, w = (int(v) for v in rng.integers(1, 17, size=2))
        idx = rng.integers(0, k, size=h * w)
        g = IndexGrid(h, w, idx, k)
        p = pack(g)
        cases += 1
        want_bits = h * w * (max(1, int(np.ceil(np.log2(k)))) if k > 1 else 1)
        if (unpack(p.to_bytes()) != g or p.bit_count != want_bits
                or p.to_bytes() != oracles.reference_payload(h, w, k, idx.tolist())):
            bad.append(("random", k, h, w))
    with open(os.path.join(os.path.dirname(__file__), "data", "codec_vectors.json")) as fh:
        vectors = json.load(fh)
    for v in vectors:
        g = IndexGrid(v["height"], v["width"], np.asarray(v["indices"], dtype=np.int64), v["kb_size"])
        raw = bytes.fromhex(v["payload_hex"])
        if pack(g).to_bytes() != raw or unpack(raw) != g:
            bad.append(("vector", v["name"]))
    ok = not bad
    record_criterion(6, ok, f"{cases} grids + {len(vectors)} shipped vectors, {len(bad)} mismatches "
                            "(K=1 packs at 1 bit per index)")
    assert ok


def test_criterion_7_distortion_monotone(sweep):
    mse = _mse_table(sweep["records"])
    problems = []
    for seed in range(N_SEEDS):
        zs = [mse[(seed, "zero-shot", k)] for k in DEFAULT_CHILD_SIZES]
        if any(a < b for a, b in zip(zs, zs[1:])):
            problems.append(f"seed {seed}: zero-shot MSE increases with K")
        parent = mse[(seed, "dedicated", PARENT_SIZE)]
        for (s, method, k), v in mse.items():
            if s != seed:
                continue
            # at K = parent size the child is the parent itself, up to exp/log rounding
            slack = 1e-12 * parent if k == PARENT_SIZE else 0.0
            if v < parent - slack:
                problems.append(f"seed {seed}: {method} K={k} beats the parent")
    ok = not problems
    record_criterion(7, ok, f"{N_SEEDS} seeds: {len(problems)} monotonicity violations" +
                     (f", first: {problems[0]}" if problems else ""))
    assert ok


def test_criterion_8_zero_shot_vs_random(sweep):
    mse = _mse_table(sweep["records"])
    small = [k for k in DEFAULT_CHILD_SIZES if k <= 256]
    wins = sum(mse[(s, "zero-shot", k)] <= mse[(s, "random-subset", k)] for s in range(N_SEEDS) for k in small)
    cells = N_SEEDS * len(small)
    lines = (sweep["dir"] / SweepConfig().summary_file).read_text().splitlines()
    header = lines[0].split(",")
    ratios = {}
    for line in lines[1:]:
        row = dict(zip(header, line.split(",")))
        if row["method"] == "zero-shot":
            ratios[int(row["K"])] = float(row["ratio_to_dedicated"])
    reported = sorted(ratios) == list(DEFAULT_CHILD_SIZES) and all(np.isfinite(list(ratios.values())))
    ratio_text = ", ".join(f"K={k}: {r:.3g}" for k, r in sorted(ratios.items()))
    record_criterion("8b", reported, f"zero-shot/dedicated mean-MSE ratio per K ({ratio_text})")
    ok = wins >= 0.8 * cells
    record_criterion("8a", ok, f"zero-shot <= random-subset in {wins}/{cells} cells with K <= 256 "
                               f"(need >= 80%); sweep took {sweep['elapsed']:.0f}s (target < 15 min)")
    assert reported
    assert ok


def test_criterion_9_determinism(tmp_path, sweep):
    rng = np.random.default_rng(9)
    d = tmp_path
    (d / "kb.kbf").write_bytes(EuclideanCodebook(rng.normal(scale=0.6, size=(300, 8))).to_bytes())
    from kbresize.codec import FeatureGrid

    (d / "x.kbx").write_bytes(FeatureGrid(12, 10, rng.normal(scale=0.6, size=(120, 8))).to_bytes())
    (d / "small.ini").write_text("[source]\ndim = 4\n[sweep]\nparent_size = 64\nchild_sizes = 8, 16, 64\n"
                                 "n_train = 1000\nn_test = 300\nseeds = 0, 1, 2\n")
    commands = [
        ("rank", "--input", "{in}/kb.kbf", "--output", "{out}/r.kbr"),
        ("resize", "--input", "{in}/kb.kbf", "--ranking", "{out}/r.kbr", "--size", "37", "--output", "{out}/c.kbf"),
        ("resize", "--input", "{in}/kb.kbf", "--ranking", "{out}/r.kbr", "--size", "5", "--output", "{out}/c.csv"),
        ("quantize", "--input", "{in}/x.kbx", "--kb", "{out}/c.kbf", "--output", "{out}/i.kbi"),
        ("dequantize", "--input", "{out}/i.kbi", "--kb", "{out}/c.kbf", "--output", "{out}/y.kbx"),
        ("pack", "--input", "{out}/i.kbi", "--output", "{out}/i.kbp"),
        ("unpack", "--input", "{out}/i.kbp", "--output", "{out}/j.kbi"),
        ("tree-export", "--input", "{in}/kb.kbf", "--output", "{out}/t.edges"),
        ("tree-export", "--input", "{in}/kb.kbf", "--output", "{out}/t.dot", "--format", "dot"),
        ("eval", "--config", "{in}/small.ini", "--out-dir", "{out}/eval"),
        ("eval", "--config", "{in}/small.ini", "--out-dir", "{out}/eval2", "--threads", "3"),
    ]
    snapshots = []
    for rep in range(2):
        out = d / f"run{rep}"
        out.mkdir()
        for cmd in commands:
            assert main([a.format(**{"in": d, "out": out}) for a in cmd]) == 0
        snapshots.append({str(p.relative_to(out)): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()})
    differing = sorted(k for k in snapshots[0] if snapshots[0][k] != snapshots[1].get(k))
    same_threads = (snapshots[0]["eval/records.csv"] == snapshots[0]["eval2/records.csv"])
    # one seed of the default sweep, re-run alone, reproduces its rows byte for byte
    seed0 = SweepConfig(seeds=(0,)).run()
    default_rows = [r for r in sweep["records"] if r.seed == 0]
    same_default = records_csv(seed0) == records_csv(default_rows)
    expected = {"r.kbr", "c.kbf", "c.csv", "i.kbi", "y.kbx", "i.kbp", "j.kbi", "t.edges", "t.dot",
                "eval/records.csv", "eval/summary.csv", "eval2/records.csv", "eval2/summary.csv"}
    complete = set(snapshots[0]) == expected == set(snapshots[1])
    ok = not differing and same_threads and same_default and complete
    record_criterion(9, ok, f"{len(snapshots[0])} output files over 2 runs, {len(differing)} differ; "
                            f"threaded eval identical: {same_threads}; default-sweep seed 0 re-run identical: "
                            f"{same_default}")
    assert ok
