"""Cluster-formation tests: the threshold rule against an exhaustive
subset oracle, plus its boundary and ordering contracts."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfran.channel import RsrpReport
from cfran.xapp import AllZeroRsrp, ClusterPolicy, form_all_clusters, form_cluster


def exhaustive_cluster(p, delta):
    """Independent oracle: enumerate all nonempty subsets, keep those whose
    power share reaches delta, pick minimal cardinality, then maximal
    power, then the lexicographically smallest index tuple."""
    p = np.asarray(p, dtype=float)
    n = p.size
    total = p.sum()
    thr = delta * total
    best = None
    for mask in range(1, 1 << n):
        members = tuple(i for i in range(n) if mask >> i & 1)
        s = p[list(members)].sum()
        if s >= thr or len(members) == n:
            key = (len(members), -s, members)
            if best is None or key < best[0]:
                best = (key, members)
    return best[1]


def sorted_by_rsrp(members, p):
    return tuple(sorted(members, key=lambda i: (-p[i], i)))


class TestFormCluster:
    def test_prefix_example(self):
        # 0.5 < 0.7 <= 0.8 so two strongest radio units are needed
        got = form_cluster([0.5, 0.3, 0.2], ClusterPolicy(delta=0.7))
        assert got.oru_ids == (0, 1)
        assert not got.capped

    def test_tie_broken_by_index(self):
        got = form_cluster([0.4, 0.4, 0.2], ClusterPolicy(delta=0.5))
        assert got.oru_ids == (0, 1)

    def test_delta_zero_returns_strongest(self):
        got = form_cluster([1.0, 5.0, 3.0], ClusterPolicy(delta=0.0))
        assert got.oru_ids == (1,)

    def test_delta_one_returns_all_positive(self):
        got = form_cluster([1.0, 0.0, 3.0, 2.0], ClusterPolicy(delta=1.0))
        assert set(got.oru_ids) == {0, 2, 3}
        assert got.oru_ids == (2, 3, 0)  # descending power order

    def test_all_zero_raises(self):
        with pytest.raises(AllZeroRsrp):
            form_cluster([0.0, 0.0], ClusterPolicy(delta=0.5))

    def test_invalid_rows_rejected(self):
        with pytest.raises(ValueError):
            form_cluster([1.0, -0.1], ClusterPolicy(delta=0.5))
        with pytest.raises(ValueError):
            form_cluster([1.0, np.nan], ClusterPolicy(delta=0.5))
        with pytest.raises(ValueError):
            form_cluster([], ClusterPolicy(delta=0.5))

    def test_cap_flags_and_truncates(self):
        got = form_cluster([4.0, 3.0, 2.0, 1.0], ClusterPolicy(delta=1.0, max_cluster_size=2))
        assert got.oru_ids == (0, 1)
        assert got.capped

    def test_policy_validation(self):
        with pytest.raises(ValueError):
            ClusterPolicy(delta=1.5)
        with pytest.raises(ValueError):
            ClusterPolicy(delta=0.5, max_cluster_size=0)

    def test_matches_exhaustive_oracle(self):
        rng = np.random.Generator(np.random.PCG64(42))
        deltas = [i / 10 for i in range(11)]
        for _ in range(200):
            n = int(rng.integers(1, 9))
            # integer-valued rows keep all subset sums exact, so the oracle
            # and the implementation face identical comparisons
            p = rng.integers(0, 1000, size=n).astype(float)
            if p.sum() == 0:
                p[int(rng.integers(0, n))] = 1.0
            for delta in deltas:
                got = form_cluster(p, ClusterPolicy(delta=delta))
                want = exhaustive_cluster(p, delta)
                assert set(got.oru_ids) == set(want), (p, delta, got, want)
                assert got.oru_ids == sorted_by_rsrp(want, p)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.integers(min_value=0, max_value=10**6), min_size=1, max_size=8).filter(
        lambda v: sum(v) > 0
    ),
    st.sampled_from([i / 20 for i in range(21)]),
)
def test_monotone_in_delta(values, delta):
    p = np.array(values, dtype=float)
    lo = form_cluster(p, ClusterPolicy(delta=max(0.0, delta - 0.05))).oru_ids
    hi = form_cluster(p, ClusterPolicy(delta=delta)).oru_ids
    assert set(lo) <= set(hi)
    assert hi[: len(lo)] == lo  # prefixes of one fixed ordering


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.integers(min_value=0, max_value=10**6), min_size=1, max_size=8).filter(
        lambda v: sum(v) > 0
    ),
    st.sampled_from([0.0, 0.3, 0.5, 0.8, 0.95, 1.0]),
    st.sampled_from([0.25, 0.5, 2.0, 1024.0]),
)
def test_scale_invariant(values, delta, c):
    # power-of-two scaling is exact in binary floating point
    p = np.array(values, dtype=float)
    assert (
        form_cluster(p, ClusterPolicy(delta=delta)).oru_ids
        == form_cluster(c * p, ClusterPolicy(delta=delta)).oru_ids
    )


@settings(max_examples=150, deadline=None)
@given(
    st.lists(st.floats(min_value=1e-12, max_value=1e3), min_size=1, max_size=10),
    st.floats(min_value=0.0, max_value=1.0),
)
def test_prefix_of_descending_order(values, delta):
    p = np.array(values)
    got = form_cluster(p, ClusterPolicy(delta=delta)).oru_ids
    order = sorted(range(p.size), key=lambda i: (-p[i], i))
    assert list(got) == order[: len(got)]


class TestFormAllClusters:
    def test_single_user_reduces_to_form_cluster(self):
        report = RsrpReport(p_mw=np.array([[0.5, 0.3, 0.2]]), measurement_slot=4)
        cmap = form_all_clusters(report, ClusterPolicy(delta=0.7), decided_at_slot=4)
        assert cmap.members(0) == form_cluster([0.5, 0.3, 0.2], ClusterPolicy(delta=0.7)).oru_ids
        assert cmap.decided_at_slot == 4
        assert cmap.policy_used.delta == 0.7

    def test_network_centric_boundary(self):
        p = np.abs(np.random.default_rng(3).normal(size=(7, 4))) + 1e-6
        cmap = form_all_clusters(RsrpReport(p_mw=p, measurement_slot=0), ClusterPolicy(delta=0.0))
        for k in range(7):
            assert cmap.members(k) == (int(np.argmax(p[k])),)

    def test_canonical_boundary(self):
        p = np.abs(np.random.default_rng(4).normal(size=(5, 6))) + 1e-6
        cmap = form_all_clusters(RsrpReport(p_mw=p, measurement_slot=0), ClusterPolicy(delta=1.0))
        for k in range(5):
            assert len(cmap.members(k)) == 6

    def test_error_carries_user_id(self):
        p = np.array([[1.0, 2.0], [0.0, 0.0]])
        with pytest.raises(AllZeroRsrp) as err:
            form_all_clusters(RsrpReport(p_mw=p, measurement_slot=0), ClusterPolicy(delta=0.5))
        assert err.value.user_id == 1

    def test_serves_is_inverse_of_members(self):
        p = np.abs(np.random.default_rng(5).normal(size=(6, 3))) + 1e-6
        cmap = form_all_clusters(RsrpReport(p_mw=p, measurement_slot=0), ClusterPolicy(delta=0.9))
        for l in range(3):
            assert cmap.serves(l) == [k for k in range(6) if l in cmap.members(k)]
