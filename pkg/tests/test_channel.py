"""Channel tests: path-loss arithmetic against hand-computed values,
fading statistics, RSRP derivation and determinism."""

import math

import numpy as np
import pytest

from cfran.channel import (
    FadingProcess,
    generate_fading,
    generate_large_scale,
    link_distances,
    measure_rsrp,
    noise_power_per_rb_mw,
    realize,
)
from cfran.model import ChannelConfig, OruConfig, OruKind, Topology, UserConfig


def flat_topology(user_xs, oru_specs, num_rbs=4, carrier=3.6e9):
    """Ground-level radios so horizontal distance equals 3D distance."""
    orus = tuple(
        OruConfig(
            id=i,
            position=(x, 0.0),
            antenna_height=h,
            tx_power_dbm=p,
            num_antennas=a,
            kind=kind,
        )
        for i, (x, h, p, a, kind) in enumerate(oru_specs)
    )
    users = tuple(UserConfig(id=k, position=(x, 0.0)) for k, x in enumerate(user_xs))
    return Topology(orus=orus, users=users, num_rbs=num_rbs, carrier_freq_hz=carrier)


def no_shadow(**kw):
    return ChannelConfig(shadowing_sigma_db=0.0, **kw)


def rng(seed=0):
    return np.random.Generator(np.random.PCG64(seed))


class TestLargeScale:
    def test_reference_distance_gain(self):
        # at d = 1 m the loss is the frequency anchor alone
        topo = flat_topology([1.0], [(0.0, 0.0, 46.0, 4, OruKind.MACRO)])
        gain = generate_large_scale(topo, no_shadow(), rng())
        want_db = -(32.4 + 20.0 * math.log10(3.6))
        assert 10.0 * math.log10(gain[0, 0]) == pytest.approx(want_db, abs=1e-9)

    def test_doubling_distance_macro_exponent(self):
        topo = flat_topology([10.0, 20.0], [(0.0, 0.0, 46.0, 4, OruKind.MACRO)])
        gain = generate_large_scale(topo, no_shadow(), rng())
        drop_db = 10.0 * math.log10(gain[0, 0] / gain[1, 0])
        assert drop_db == pytest.approx(10.0 * 3.2 * math.log10(2.0), abs=1e-9)

    def test_kind_selects_exponent(self):
        topo = flat_topology(
            [10.0],
            [(0.0, 0.0, 46.0, 4, OruKind.MACRO), (20.0, 0.0, 30.0, 4, OruKind.MICRO)],
        )
        cfg = no_shadow(pathloss_exponent_macro=3.2, pathloss_exponent_micro=3.8)
        gain = generate_large_scale(topo, cfg, rng())
        ref = 32.4 + 20.0 * math.log10(3.6)
        assert 10 * math.log10(gain[0, 0]) == pytest.approx(-(ref + 32.0), abs=1e-9)
        assert 10 * math.log10(gain[0, 1]) == pytest.approx(-(ref + 38.0), abs=1e-9)

    def test_equal_distances_equal_gains(self):
        topo = flat_topology(
            [0.0],
            [(-50.0, 0.0, 30.0, 4, OruKind.MICRO), (50.0, 0.0, 30.0, 4, OruKind.MICRO)],
        )
        gain = generate_large_scale(topo, no_shadow(), rng())
        assert gain[0, 0] == gain[0, 1]

    def test_antenna_height_in_distance(self):
        topo = flat_topology([30.0], [(0.0, 40.0, 46.0, 4, OruKind.MACRO)])
        assert link_distances(topo)[0, 0] == pytest.approx(50.0)

    def test_coincident_user_clamped_with_warning(self):
        topo = flat_topology([0.0], [(0.0, 0.0, 46.0, 4, OruKind.MACRO)])
        with pytest.warns(UserWarning):
            gain = generate_large_scale(topo, no_shadow(), rng())
        want_db = -(32.4 + 20.0 * math.log10(3.6))  # clamped to 1 m
        assert 10 * math.log10(gain[0, 0]) == pytest.approx(want_db, abs=1e-9)

    def test_shadowing_changes_with_seed_only(self):
        topo = flat_topology([10.0, 55.0], [(0.0, 10.0, 46.0, 4, OruKind.MACRO)])
        cfg = ChannelConfig(shadowing_sigma_db=6.0)
        a = generate_large_scale(topo, cfg, rng(1))
        b = generate_large_scale(topo, cfg, rng(1))
        c = generate_large_scale(topo, cfg, rng(2))
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_rsrp_monotone_in_distance_without_shadowing(self):
        xs = [5.0, 25.0, 80.0, 200.0, 410.0]
        topo = flat_topology(xs, [(0.0, 20.0, 46.0, 4, OruKind.MACRO)])
        gain = generate_large_scale(topo, no_shadow(), rng())
        report = measure_rsrp(realize(topo, no_shadow(), gain, (), 0), topo)
        p = report.p_mw[:, 0]
        assert np.all(np.diff(p) < 0)


class TestRsrp:
    def test_dbm_to_linear_arithmetic(self):
        topo = flat_topology([1.0], [(0.0, 0.0, 46.0, 4, OruKind.MACRO)])
        gain = np.array([[1e-10]])
        report = measure_rsrp(realize(topo, no_shadow(), gain, (), 0), topo, measurement_slot=3)
        assert report.p_mw[0, 0] == pytest.approx(3.98107e-6, rel=1e-5)
        assert report.measurement_slot == 3

    def test_equal_power_equal_gain_equal_rsrp(self):
        topo = flat_topology(
            [0.0],
            [(-10.0, 0.0, 30.0, 4, OruKind.MICRO), (10.0, 0.0, 30.0, 4, OruKind.MICRO)],
        )
        gain = np.array([[2e-9, 2e-9]])
        report = measure_rsrp(realize(topo, no_shadow(), gain, (), 0), topo)
        assert report.p_mw[0, 0] == report.p_mw[0, 1]


class TestFading:
    def test_none_is_all_ones(self):
        topo = flat_topology([5.0], [(0.0, 0.0, 46.0, 3, OruKind.MACRO)])
        h = generate_fading(topo, no_shadow(fading="none"), 7, rng())
        assert np.all(h[0] == 1.0 + 0.0j)

    def test_same_seed_same_slot_identical(self):
        topo = flat_topology([5.0, 9.0], [(0.0, 0.0, 46.0, 8, OruKind.MACRO)])
        cfg = ChannelConfig(coherence_slots=10)
        a = generate_fading(topo, cfg, 23, rng(5))
        b = generate_fading(topo, cfg, 23, rng(5))
        assert np.array_equal(a[0], b[0])

    def test_block_fading_redraw_boundaries(self):
        topo = flat_topology([5.0], [(0.0, 0.0, 46.0, 8, OruKind.MACRO)])
        proc = FadingProcess(topo, ChannelConfig(coherence_slots=10), rng(5))
        h0 = proc.at_slot(0)[0].copy()
        assert np.array_equal(proc.at_slot(9)[0], h0)
        h1 = proc.at_slot(10)[0]
        assert not np.array_equal(h1, h0)

    def test_unit_power_and_rayleigh_shape(self):
        topo = flat_topology(
            list(np.linspace(5, 400, 30)), [(0.0, 0.0, 46.0, 64, OruKind.MACRO)], num_rbs=69
        )
        proc = FadingProcess(topo, ChannelConfig(coherence_slots=1), rng(9))
        samples = np.concatenate(
            [proc.at_slot(s)[0].ravel() for s in range(3)]
        )
        assert samples.size >= 1e5
        mean_power = np.mean(np.abs(samples) ** 2)
        assert 0.98 <= mean_power <= 1.02
        q1, q2, q3 = np.quantile(np.abs(samples), [0.25, 0.5, 0.75])
        sigma = math.sqrt(0.5)
        want = [sigma * math.sqrt(2 * math.log(4 / 3)), sigma * math.sqrt(2 * math.log(2)),
                sigma * math.sqrt(2 * math.log(4))]
        assert q1 / q2 == pytest.approx(want[0] / want[1], rel=0.05)
        assert q3 / q2 == pytest.approx(want[2] / want[1], rel=0.05)

    def test_full_tap_count_gives_iid_rbs(self):
        topo = flat_topology([5.0], [(0.0, 0.0, 46.0, 2, OruKind.MACRO)], num_rbs=16)
        cfg = ChannelConfig(delay_taps=16)
        h = generate_fading(topo, cfg, 0, rng(3))[0]
        corr = np.corrcoef(h[:, 0, 0].real, h[:, 0, 1].real)[0, 1]
        assert abs(corr) < 1.0  # smoke: shape (R, K, A) and finite
        assert h.shape == (16, 1, 2)

    def test_negative_slot_rejected(self):
        topo = flat_topology([5.0], [(0.0, 0.0, 46.0, 2, OruKind.MACRO)])
        proc = FadingProcess(topo, ChannelConfig(), rng())
        with pytest.raises(ValueError):
            proc.at_slot(-1)


def test_noise_power_formula():
    topo = flat_topology([5.0], [(0.0, 0.0, 46.0, 2, OruKind.MACRO)])
    topo_noise = noise_power_per_rb_mw(topo, ChannelConfig(noise_figure_db=9.0))
    want_dbm = -174.0 + 10.0 * math.log10(360e3) + 9.0
    assert topo_noise == pytest.approx(10 ** (want_dbm / 10.0), rel=1e-12)
