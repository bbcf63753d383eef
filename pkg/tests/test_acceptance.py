"""Acceptance criteria 1-10.

Each test prints one ``criterion N PASS|FAIL|SKIP`` line and the conftest
summary repeats them at the end of the run.  Throughput numbers are medians of
repeated threaded runs; on machines with fewer cores than instances they say
more about scheduling overhead than about parallel speedup.
"""

import os
import random
import statistics
import time
import types

import numpy as np
import pytest

from speccep.events import EventStream, generate_random_stream
from speccep.oracle import run_sequential
from speccep.prediction import MarkovPredictor
from speccep.query import build_query
from speccep.runtime import Engine, EngineConfig, Instance, run, run_stepped, run_threaded
from speccep.scheduler import brute_force_top_k, find_top_k_versions
from speccep.tree import DependencyTree

from treegen import TreeDriver

CORES = os.cpu_count() or 1
KS = (1, 2, 4, 8)


def medians(stream, pattern, ks, reps, expect=None, **cfg):
    """Median throughput per k; every run is checked against ``expect``."""
    out = {}
    for k in ks:
        tps = []
        for _ in range(reps):
            e = Engine(stream, pattern, EngineConfig(instances=k, **cfg))
            st = run_threaded(e)
            if expect is not None:
                assert e.output == expect
            tps.append(st.throughput_eps)
        out[k] = statistics.median(tps)
    return out


def fmt(tp):
    return " ".join(f"k{k}={v / 1000:.0f}k" for k, v in tp.items())


# 1. exact output

C1_QUERIES = {
    "qe": ("qe", dict(ws=500)),
    "q1-q2": ("q1", dict(ws=400, q=2)),
    "q1-q5": ("q1", dict(ws=400, q=5)),
    "q1-q20": ("q1", dict(ws=400, q=20)),
    "q2-98-102": ("q2", dict(ws=1000, slide=250, lower=98, upper=102)),
    "q2-99-101": ("q2", dict(ws=1000, slide=250, lower=99, upper=101)),
    "q2-99.5-100.5": ("q2", dict(ws=1000, slide=250, lower=99.5, upper=100.5)),
    "q3-n2": ("q3", dict(ws=1000, slide=100, n=2)),
    "q3-n5": ("q3", dict(ws=1000, slide=100, n=5)),
}
C1_STREAMS = 20
C1_EVENTS = 100_000
C1_LOG = []


@pytest.fixture(scope="module")
def c1_streams():
    return [generate_random_stream(C1_EVENTS, 300, 1000 + i) for i in range(C1_STREAMS)]


@pytest.mark.parametrize("name", list(C1_QUERIES))
def test_c1_exact_output(c1_streams, name):
    kind, kw = C1_QUERIES[name]
    pattern = build_query(kind, **kw)
    t0 = time.perf_counter()
    bad = []
    runs = rollbacks = 0
    for i, s in enumerate(c1_streams):
        ref = run_sequential(s, pattern).output
        for k in KS:
            out, st, _ = run(s, pattern, EngineConfig(instances=k), "threaded")
            runs += 1
            rollbacks += st.rollbacks
            if out != ref:
                bad.append((i, k))
    C1_LOG.append((name, not bad, runs, rollbacks, time.perf_counter() - t0))
    assert not bad, f"{name}: outputs differ on (stream, k) {bad}"


def test_c1_summary(acceptance):
    if len(C1_LOG) != len(C1_QUERIES):
        pytest.skip("criterion 1 runs did not all execute")
    failed = [n for n, ok, *_ in C1_LOG if not ok]
    runs = sum(r for _, _, r, _, _ in C1_LOG)
    rb = sum(r for _, _, _, r, _ in C1_LOG)
    elapsed = sum(t for *_, t in C1_LOG)
    detail = (f"{len(C1_QUERIES)} queries x {C1_STREAMS} streams x k{KS}: {runs} runs, "
              f"{rb} rollbacks, {elapsed:.0f}s on {CORES} core(s)")
    if failed:
        detail += f"; mismatches in {failed}"
    acceptance(1, "FAIL" if failed else "PASS", detail)
    assert not failed


# 2. two A events then three B events

def test_c2_fixture(acceptance):
    s = EventStream.from_events([("A", 1, 1), ("A", 1, 1), ("B", 1, 1), ("B", 1, 1), ("B", 1, 1)])
    got = {}
    for policy, want in (("none", 5), ("selected_b", 3)):
        q = build_query("qe", ws=4, a="A", b="B", policy=policy)
        counts = {len(run_sequential(s, q).output)}
        for executor in ("stepped", "threaded"):
            for k in KS:
                counts.add(len(run(s, q, EngineConfig(instances=k), executor)[0]))
        got[policy] = (counts, want)
    ok = all(c == {w} for c, w in got.values())
    acceptance(2, "PASS" if ok else "FAIL",
               ", ".join(f"{p}: {sorted(c)} expected {w}" for p, (c, w) in got.items()))
    assert ok


# 3. scaling on the near-always-completing workload

@pytest.fixture(scope="module")
def q1_ratio_005():
    s = generate_random_stream(1_000_000, 3000, 2)
    q = build_query("q1", ws=8000, q=40)
    return s, q, run_sequential(s, q)


def test_c3_scaling(acceptance, q1_ratio_005):
    s, q, ref = q1_ratio_005
    tp = medians(s, q, (1, 4, 8), 5, ref.output)
    r4, r8 = tp[4] / tp[1], tp[8] / tp[1]
    detail = f"gt={ref.gt_completion_prob:.3f} {fmt(tp)} k4/k1={r4:.2f} k8/k1={r8:.2f}"
    if CORES < 8:
        acceptance(3, "SKIP", f"needs >= 8 cores, found {CORES}; measured {detail}")
        pytest.skip(f"precondition: {CORES} core(s) < 8")
    ok = r8 >= 3.0 and r4 >= 1.8
    acceptance(3, "PASS" if ok else "FAIL", detail)
    assert ok


# 4. throughput valley at ~50% completion

def test_c4_valley(acceptance):
    s = generate_random_stream(200_000, 3000, 1)
    q = build_query("q1", ws=400, q=196)
    ref = run_sequential(s, q)
    gt = ref.gt_completion_prob
    tp = medians(s, q, (1, 4, 8), 5, ref.output)
    g14, g48 = tp[4] - tp[1], tp[8] - tp[4]
    in_band = abs(gt - 0.5) <= 0.1
    ok = in_band and g48 < g14
    acceptance(4, "PASS" if ok else "FAIL",
               f"gt={gt:.3f} {fmt(tp)} gain1-4={g14 / 1000:+.1f}k gain4-8={g48 / 1000:+.1f}k "
               f"on {CORES} core(s)")
    assert in_band
    assert g48 < g14


# 5. predictor accuracy on a two-state chain

def exact_completion(p, n):
    t = np.array([[1.0, p], [0.0, 1.0 - p]])
    return float(np.linalg.matrix_power(t, n)[0, 1])


def learned_completion(p, n, seed, alpha, rho, ws=1000, transitions=10_000):
    m = MarkovPredictor(1, alpha=alpha, rho=rho, horizon=ws)
    for x in np.random.default_rng(seed).random(transitions):
        m.record_transition(1, 0 if x < p else 1)
    return m.completion_probability(1, n)


def test_c5_markov_accuracy(acceptance):
    ws, n = 1000, 500
    worst = {}
    for p in (0.01, 0.1, 0.5):
        exact = exact_completion(p, n)
        assert exact == pytest.approx(1 - (1 - p) ** n, abs=1e-12)
        errs = [abs(learned_completion(p, n, seed, 0.7, 2500, ws) - exact) for seed in range(20)]
        worst[p] = max(errs)
    ok = all(e <= 0.05 for e in worst.values())
    acceptance(5, "PASS" if ok else "FAIL",
               "alpha=0.7 rho=2500, 20 seeds, max |err| " +
               " ".join(f"p={p}:{e:.3f}" for p, e in worst.items()))
    assert ok


# 6. Markov model against fixed probabilities

def test_c6_markov_vs_fixed(acceptance, q1_ratio_005):
    s, q, ref = q1_ratio_005
    markov = medians(s, q, (8,), 5, ref.output)[8]
    fixed = {p: medians(s, q, (8,), 5, ref.output, fixed_probability=p)[8]
             for p in (0.0, 0.2, 0.5, 0.8, 1.0)}
    best_p = max(fixed, key=fixed.get)
    ratio = markov / fixed[best_p]
    ok = ratio >= 0.9
    acceptance(6, "PASS" if ok else "FAIL",
               f"markov={markov / 1000:.0f}k best fixed p={best_p} {fixed[best_p] / 1000:.0f}k "
               f"ratio={ratio:.2f}; fixed " + " ".join(f"{p}:{v / 1000:.0f}k" for p, v in fixed.items()))
    assert ok


# 7. top-k against brute force

def test_c7_topk_brute_force(acceptance):
    rng = random.Random(7)
    mismatches = 0
    largest = 0
    for seed in range(1000):
        d = TreeDriver(DependencyTree(), seed, grow_until=32)
        for _ in range(rng.randint(1, 40)):
            d.step()
        assert len(d.tree) <= 64
        largest = max(largest, len(d.tree))
        k = rng.randint(1, 70)
        elig = (lambda w: w.id % 3 != 0) if seed % 2 else None
        if find_top_k_versions(d.tree, k, d.prob, elig) != brute_force_top_k(d.tree, k, d.prob, elig):
            mismatches += 1
    acceptance(7, "PASS" if not mismatches else "FAIL",
               f"1000 trees up to {largest} versions, {mismatches} mismatches")
    assert not mismatches


# 8. tree invariants under random mutation

def test_c8_tree_invariants(acceptance):
    t0 = time.perf_counter()
    steps = 0
    for seed in range(10_000):
        d = TreeDriver(DependencyTree(), seed)
        for _ in range(30):
            d.step()
            steps += 1
    elapsed = time.perf_counter() - t0
    ok = elapsed < 60
    acceptance(8, "PASS" if ok else "FAIL",
               f"10000 sequences, {steps} mutations validated in {elapsed:.1f}s")
    assert ok


# 9. adversarial interleaving with rollbacks

def test_c9_rollback(acceptance, monkeypatch):
    s = generate_random_stream(100_000, 20, 9)
    q = build_query("q3", ws=120, slide=30, n=2)
    ref = run_sequential(s, q).output
    hashes = []
    original = Instance._rollback

    def checked(self, wv):
        original(self, wv)
        eng = self.engine
        shadow = types.SimpleNamespace(window=wv.window, suppressed=[])
        eng.init_version(shadow)
        hashes.append(eng.state_hash(wv) == eng.state_hash(shadow))

    monkeypatch.setattr(Instance, "_rollback", checked)
    e = Engine(s, q, EngineConfig(instances=4, check_freq=4))
    st = run_stepped(e, steps=3, seed=1, delay_prob=0.7)
    same = e.output == ref
    ok = st.rollbacks >= 1 and same and len(hashes) == st.rollbacks and all(hashes)
    acceptance(9, "PASS" if ok else "FAIL",
               f"{st.rollbacks} rollbacks, output equals oracle: {same}, "
               f"hash equal to fresh: {sum(hashes)}/{len(hashes)}")
    assert ok


# 10. splitter overhead and tree size

def test_c10_overhead(acceptance):
    s = generate_random_stream(200_000, 3000, 11)
    q = build_query("q1", ws=8000, q=80)
    ref = run_sequential(s, q).output
    cps, maxv = [], []
    for _ in range(3):
        e8 = Engine(s, q, EngineConfig(instances=8))
        cps.append(run_threaded(e8).cycles_per_s)
        assert e8.output == ref
        e1 = Engine(s, q, EngineConfig(instances=1))
        maxv.append(run_threaded(e1).max_tree_versions)
        assert e1.output == ref
    c, v = statistics.median(cps), max(maxv)
    ok = c >= 10_000 and v < 100
    acceptance(10, "PASS" if ok else "FAIL",
               f"cycles/s at k=8 median {c:.0f}, max versions at k=1 {v}")
    assert ok
