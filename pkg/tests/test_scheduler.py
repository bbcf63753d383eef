import random

import pytest
from hypothesis import given, settings, strategies as st

from speccep.scheduler import brute_force_top_k, find_top_k_versions, schedule
from speccep.tree import DependencyTree

from test_tree import three_windows
from treegen import TreeDriver


class Op:
    def __init__(self, i):
        self.id = i
        self.scheduled = None


def ids(wvs):
    return [w.id for w in wvs]


def three_window_probs():
    t, (cg1, cg2, cg3), _ = three_windows()
    p = {cg1.id: 0.9, cg2.id: 0.8, cg3.id: 0.5}
    return t, (lambda c: p[c.id])


def test_k1_is_root():
    t, prob = three_window_probs()
    assert ids(find_top_k_versions(t, 1, prob)) == [1]


def test_three_windows_top3_matches_brute_force():
    t, prob = three_window_probs()
    top = find_top_k_versions(t, 3, prob)
    assert top == brute_force_top_k(t, 3, prob)
    # completion of CG2 (0.8) then CG1 (0.9) on that side: WV5 has SP 0.72
    assert ids(top) == [1, 5, 10]
    sps = [t.survival_probability(w, prob) for w in find_top_k_versions(t, 10, prob)]
    assert sps == sorted(sps, reverse=True)


def test_k_larger_than_tree():
    t, prob = three_window_probs()
    assert len(find_top_k_versions(t, 100, prob)) == len(t)
    assert find_top_k_versions(t, 0, prob) == []


def test_ineligible_versions_are_skipped_but_expanded():
    t, prob = three_window_probs()
    top = find_top_k_versions(t, 2, prob, eligible=lambda w: w.id != 1)
    assert ids(top) == [5, 10]
    assert top == brute_force_top_k(t, 2, prob, eligible=lambda w: w.id != 1)


def test_ties_prefer_abandon_side():
    t, _ = three_window_probs()
    top = find_top_k_versions(t, 3, lambda c: 0.5)
    assert top == brute_force_top_k(t, 3, lambda c: 0.5)
    # equal SP for WV2..WV5: earlier window first, abandon edges before completion edges
    assert ids(top) == [1, 2, 3]


def test_forest_roots_all_have_sp_one():
    from speccep.splitter import Window
    t = DependencyTree()
    t.new_window(Window(0, 0, 10))
    t.new_window(Window(1, 20, 30))
    assert ids(find_top_k_versions(t, 2, lambda c: 0.5)) == [1, 2]


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), steps=st.integers(1, 40), k=st.integers(1, 70))
def test_random_trees_match_brute_force(seed, steps, k):
    d = TreeDriver(DependencyTree(), seed)
    for _ in range(steps):
        d.step()
    elig = (lambda w: w.id % 3 != 0) if seed % 2 else None
    assert find_top_k_versions(d.tree, k, d.prob, elig) == brute_force_top_k(d.tree, k, d.prob, elig)


# assignment

def test_schedule_fill_keep_and_idle():
    t, prob = three_window_probs()
    ops = [Op(i) for i in range(4)]
    top = find_top_k_versions(t, 3, prob)
    a = schedule(ops, top)
    assert a.by_instance == {0: 1, 1: 5, 2: 10, 3: None}
    assert a.reassigned == 3
    again = schedule(ops, top)
    assert again.by_instance == a.by_instance and again.reassigned == 0


def test_schedule_one_change_one_reassignment():
    t, prob = three_window_probs()
    ops = [Op(i) for i in range(3)]
    schedule(ops, [t.versions[1], t.versions[5], t.versions[10]])
    a = schedule(ops, [t.versions[1], t.versions[10], t.versions[4]])
    assert a.reassigned == 1
    assert a.by_instance == {0: 1, 1: 4, 2: 10}
    assert t.versions[5].instance is None


def test_schedule_surplus_instances_idle():
    t, prob = three_window_probs()
    ops = [Op(i) for i in range(8)]
    schedule(ops, [t.versions[2], t.versions[3]])
    a = schedule(ops, [t.versions[3]])
    assert a.by_instance == {0: None, 1: 3, **{i: None for i in range(2, 8)}}
    assert a[1] == 3


def test_schedule_injective_under_random_churn():
    t, prob = three_window_probs()
    rng = random.Random(1)
    ops = [Op(i) for i in range(4)]
    pool = list(t.versions.values())
    for _ in range(200):
        top = rng.sample(pool, rng.randint(0, 4))
        a = schedule(ops, top)
        got = [v for v in a.by_instance.values() if v is not None]
        assert sorted(got) == sorted(w.id for w in top)
        for op in ops:
            if op.scheduled is not None:
                assert op.scheduled.instance is op
        with pytest.raises(KeyError):
            a[99]
