from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_array_equal

from rcfdml.folds import (
    Direction,
    FoldError,
    FoldPlan,
    Scheme,
    make_plan,
    nlo_plan,
    partition,
    rcf_plan,
    sample_usage,
)

F, R, B = Direction.FORWARD, Direction.REVERSED, Direction.BOTH


def blocks_in(plan, k):
    """1-based block numbers covered by fold k's auxiliary set (singleton-free check via starts)."""
    starts = {a: i + 1 for i, (a, _) in enumerate(partition(plan.T, plan.K).blocks)}
    out = []
    for a, b in plan.folds[k].auxiliary:
        out += [starts[s] for s in starts if a <= s < b]
    return sorted(out)


def test_partition_examples():
    assert partition(10, 5).sizes() == (2, 2, 2, 2, 2)
    assert partition(11, 5).sizes() == (3, 2, 2, 2, 2)
    assert partition(5, 5).sizes() == (1,) * 5


@pytest.mark.parametrize("T,K", [(5, 1), (3, 4), (10, 0)])
def test_partition_errors(T, K):
    with pytest.raises(FoldError):
        partition(T, K)


@given(st.integers(2, 500), st.integers(2, 50))
def test_partition_invariants(T, K):
    if K > T:
        return
    p = partition(T, K)
    assert p.blocks[0][0] == 0 and p.blocks[-1][1] == T
    assert all(p.blocks[i][1] == p.blocks[i + 1][0] for i in range(K - 1))
    assert max(p.sizes()) - min(p.sizes()) <= 1


def test_rcf_k5():
    plan = rcf_plan(partition(5, 5))
    assert [blocks_in(plan, k) for k in range(5)] == [[2, 3, 4, 5], [3, 4, 5], [1, 2, 4, 5], [1, 2, 3], [1, 2, 3, 4]]
    assert [f.direction for f in plan.folds] == [R, R, B, F, F]


def test_rcf_k4_equal_blocks():
    plan = rcf_plan(partition(8, 4))
    assert blocks_in(plan, 1) == [3, 4]
    assert blocks_in(plan, 2) == [1, 2]


def test_rcf_k2():
    plan = rcf_plan(partition(10, 2))
    assert plan.folds[0].auxiliary == ((5, 10),) and plan.folds[0].direction is R
    assert plan.folds[1].auxiliary == ((0, 5),) and plan.folds[1].direction is F


def test_reversed_aux_index_is_time_reversed():
    plan = rcf_plan(partition(10, 5))
    assert_array_equal(plan.folds[0].aux_index(), np.arange(9, 1, -1))
    assert_array_equal(plan.folds[4].aux_index(), np.arange(0, 8))


def test_nlo_examples():
    plan = nlo_plan(partition(5, 5))
    assert blocks_in(plan, 2) == [1, 5]
    assert blocks_in(plan, 0) == [3, 4, 5]
    assert all(f.direction is B for f in plan.folds)
    assert sample_usage(nlo_plan(partition(10, 10))) == Fraction(72, 100)


def test_nlo_k3_errors():
    with pytest.raises(FoldError):
        nlo_plan(partition(9, 3))


def test_sample_usage_examples():
    assert sample_usage(rcf_plan(partition(5, 5))) == Fraction(18, 25)
    assert sample_usage(make_plan(11, 11, Scheme.RCF)) == Fraction(90, 121)
    assert sample_usage(make_plan(11, 11, Scheme.NLO)) == Fraction(90, 121)
    assert sample_usage(make_plan(12, 12, "rcf")) < sample_usage(make_plan(12, 12, "nlo"))


@pytest.mark.parametrize("K", range(3, 30))
def test_sample_usage_closed_forms(K):
    rcf = sample_usage(make_plan(K, K, Scheme.RCF))
    # independent oracle: larger side keeps max(k-1, K-k) singletons, ties keep K-1
    oracle = Fraction(sum(max(k - 1, K - k) if k - 1 != K - k else K - 1 for k in range(1, K + 1)), K * K)
    assert rcf == oracle
    if K >= 4:
        assert sample_usage(make_plan(K, K, Scheme.NLO)) == Fraction((K - 2) * (K - 1), K * K)


@given(st.integers(4, 300), st.integers(4, 25), st.sampled_from(list(Scheme)))
def test_plan_invariants(T, K, scheme):
    if K > T:
        return
    plan = make_plan(T, K, scheme)
    covered = np.zeros(T, dtype=int)
    for f in plan.folds:
        main = set(range(*f.main))
        aux = set(f.aux_index().tolist())
        assert not main & aux
        assert len(aux) == f.n_aux
        covered[f.main[0]:f.main[1]] += 1
        if scheme is Scheme.RCF:
            assert len(f.auxiliary) in (1, 2)
            left = all(b <= f.main[0] for _, b in f.auxiliary)
            right = all(a >= f.main[1] for a, _ in f.auxiliary)
            assert f.direction is (F if left and not right else R if right and not left else B)
    assert np.all(covered == 1)
    assert np.all(np.diff(plan.fold_of_t()) >= 0)


@given(st.integers(4, 200), st.integers(2, 20))
def test_rcf_mirror_symmetry(T, K):
    if K > T:
        return
    plan = rcf_plan(partition(T, K))
    sizes = partition(T, K).sizes()
    mirrored = rcf_plan(partition(T, K).__class__(T, K, _mirror_blocks(T, sizes[::-1])))
    swap = {F: R, R: F, B: B}
    for k in range(K):
        a, b = plan.folds[k], mirrored.folds[K - 1 - k]
        assert b.direction is swap[a.direction]
        assert a.n_aux == b.n_aux


def _mirror_blocks(T, sizes):
    out, s = [], 0
    for n in sizes:
        out.append((s, s + n))
        s += n
    return tuple(out)


def test_plan_json_roundtrip():
    plan = make_plan(23, 5, Scheme.NLO)
    assert FoldPlan.from_dict(plan.to_dict()) == plan
    assert '"direction": "both"' in plan.to_json()
