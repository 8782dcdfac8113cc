"""Radio channel generation: log-distance path loss with log-normal
shadowing for the large scale, block Rayleigh fading for the small scale,
and RSRP derived from the large scale only.

This is the stochastic stand-in for the ray-traced channels the reference
experiments used; absolute throughput numbers are therefore trend-level.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .model import ChannelConfig, OruKind, Topology

THERMAL_NOISE_DBM_PER_HZ = -174.0
MIN_DISTANCE_M = 1.0


@dataclass(frozen=True)
class ChannelRealization:
    """Per-link channel state: (K, L) linear power gains and, per radio
    unit, the per-(user, RB) fading vectors stored RB-major as a
    (num_rbs, K, num_antennas) tensor with unit average element power."""

    large_scale_gain: np.ndarray
    small_scale: tuple[np.ndarray, ...]
    valid_from_slot: int


@dataclass(frozen=True)
class RsrpReport:
    """Wideband reference-signal power p[k, l] in linear mW."""

    p_mw: np.ndarray  # (K, L)
    measurement_slot: int


def link_distances(topology: Topology) -> np.ndarray:
    """3D user-to-O-RU distances (K, L), antenna height included, clamped
    to 1 m so the reference-distance model stays valid."""
    users = topology.user_positions()  # (K, 2)
    orus = topology.oru_positions()  # (L, 2)
    heights = np.array([o.antenna_height for o in topology.orus])
    d2 = np.sum((users[:, None, :] - orus[None, :, :]) ** 2, axis=-1)
    d3d = np.sqrt(d2 + heights[None, :] ** 2)
    if np.any(d3d < MIN_DISTANCE_M):
        warnings.warn("user within 1 m of a radio unit; distance clamped to 1 m", stacklevel=2)
        d3d = np.maximum(d3d, MIN_DISTANCE_M)
    return d3d


def generate_large_scale(
    topology: Topology, config: ChannelConfig, rng: np.random.Generator
) -> np.ndarray:
    """Linear power gains (K, L): log-distance path loss with the
    kind-specific exponent plus N(0, sigma^2) shadowing in dB."""
    d = link_distances(topology)
    ref_db = config.resolved_reference_loss_db(topology.carrier_freq_hz)
    exponents = np.array(
        [
            config.pathloss_exponent_macro if o.kind == OruKind.MACRO else config.pathloss_exponent_micro
            for o in topology.orus
        ]
    )
    loss_db = ref_db + 10.0 * exponents[None, :] * np.log10(d)
    if config.shadowing_sigma_db > 0:
        loss_db = loss_db + rng.normal(
            0.0, config.shadowing_sigma_db, size=(topology.num_users, topology.num_orus)
        )
    return 10.0 ** (-loss_db / 10.0)


def _antenna_groups(topology: Topology) -> list[tuple[int, list[int]]]:
    """Radio units grouped by antenna count, first-seen order."""
    groups: dict[int, list[int]] = {}
    for l, oru in enumerate(topology.orus):
        groups.setdefault(oru.num_antennas, []).append(l)
    return list(groups.items())


@dataclass(frozen=True)
class FadingBlock:
    """One coherence block: per-radio-unit views plus, per antenna count,
    the contiguous (G, num_rbs, K, A) parent buffer they slice."""

    per_oru: tuple[np.ndarray, ...]
    stacked: dict[int, tuple[tuple[int, ...], np.ndarray]]


def _draw_small_scale(
    topology: Topology, config: ChannelConfig, rng: np.random.Generator
) -> FadingBlock:
    """One realization per radio unit, shaped (num_rbs, K, num_antennas).

    Rayleigh fading is drawn in the delay domain: `delay_taps` i.i.d.
    CN(0, 1/T) taps per (user, antenna), transformed across RBs with a DFT.
    Every element is exactly CN(0, 1); RBs are correlated over roughly
    num_rbs/delay_taps neighbours (a frequency-selective channel), and
    delay_taps >= num_rbs recovers fully independent RBs.

    Same-antenna-count radio units are drawn into one contiguous buffer
    (group order by first appearance) so the PHY can batch across them.
    """
    num_rbs = topology.num_rbs
    k_users = topology.num_users
    taps = min(config.delay_taps, num_rbs)
    if config.fading != "none" and taps < num_rbs:
        dft = np.exp(-2j * np.pi * np.outer(np.arange(num_rbs), np.arange(taps)) / num_rbs)
    per_oru: dict[int, np.ndarray] = {}
    stacked: dict[int, tuple[tuple[int, ...], np.ndarray]] = {}
    for num_ant, ids in _antenna_groups(topology):
        g_count = len(ids)
        if config.fading == "none":
            parent = np.ones((g_count, num_rbs, k_users, num_ant), dtype=complex)
        elif taps >= num_rbs:
            buf = rng.standard_normal((g_count, num_rbs, k_users, num_ant, 2))
            parent = buf.view(np.complex128)[..., 0] * np.sqrt(0.5)
        else:
            buf = rng.standard_normal((g_count, taps, k_users, num_ant, 2))
            taps_c = buf.view(np.complex128)[..., 0] * np.sqrt(0.5 / taps)
            flat = taps_c.reshape(g_count, taps, k_users * num_ant)
            parent = (dft @ flat).reshape(g_count, num_rbs, k_users, num_ant)
        stacked[num_ant] = (tuple(ids), parent)
        for g, l in enumerate(ids):
            per_oru[l] = parent[g]
    return FadingBlock(
        per_oru=tuple(per_oru[l] for l in range(topology.num_orus)), stacked=stacked
    )


class FadingProcess:
    """Block-fading small-scale process: a fresh circularly-symmetric
    Gaussian draw at every slot that starts a coherence block, the cached
    realization in between.

    Slots must be visited in nondecreasing order; the draws then depend
    only on the generator's seed, which makes runs bit-reproducible.
    """

    def __init__(self, topology: Topology, config: ChannelConfig, rng: np.random.Generator):
        self._topology = topology
        self._config = config
        self._rng = rng
        self._block: int | None = None
        self._current: FadingBlock | None = None

    def block_at_slot(self, slot: int) -> FadingBlock:
        if slot < 0:
            raise ValueError(f"slot must be >= 0, got {slot}")
        if self._config.fading == "none":
            if self._current is None:
                self._current = _draw_small_scale(self._topology, self._config, self._rng)
            return self._current
        block = slot // self._config.coherence_slots
        if block != self._block:
            self._current = _draw_small_scale(self._topology, self._config, self._rng)
            self._block = block
        return self._current

    def at_slot(self, slot: int) -> tuple[np.ndarray, ...]:
        return self.block_at_slot(slot).per_oru


def generate_fading(
    topology: Topology, config: ChannelConfig, slot: int, rng: np.random.Generator
) -> tuple[np.ndarray, ...]:
    """One-shot small-scale draw for the coherence block containing `slot`.

    Stateless convenience over FadingProcess: the same seed and slot give
    the same tensor because the generator is only consumed for the blocks
    up to and including the requested one.
    """
    proc = FadingProcess(topology, config, rng)
    realization = proc.at_slot(0)
    step = config.coherence_slots
    for s in range(step, slot + 1, step):
        realization = proc.at_slot(s)
    return realization


def realize(
    topology: Topology,
    config: ChannelConfig,
    large_scale: np.ndarray,
    fading: tuple[np.ndarray, ...],
    slot: int,
) -> ChannelRealization:
    return ChannelRealization(large_scale_gain=large_scale, small_scale=fading, valid_from_slot=slot)


def measure_rsrp(
    channel: ChannelRealization, topology: Topology, measurement_slot: int = 0
) -> RsrpReport:
    """RSRP from transmit power and large-scale gain only (fading-averaged,
    as a real wideband reference-signal measurement would be)."""
    p = topology.tx_power_mw()[None, :] * channel.large_scale_gain
    return RsrpReport(p_mw=p, measurement_slot=measurement_slot)


def noise_power_per_rb_mw(topology: Topology, config: ChannelConfig) -> float:
    """Thermal noise over one resource block plus the receiver noise figure,
    in linear mW."""
    noise_dbm = (
        THERMAL_NOISE_DBM_PER_HZ + 10.0 * np.log10(topology.rb_bandwidth_hz) + config.noise_figure_db
    )
    return float(10.0 ** (noise_dbm / 10.0))
