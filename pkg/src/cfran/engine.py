"""Run orchestration: the per-slot PHY loop, the per-epoch xApp/rApp
control cycle over the in-process RIC bus, baseline modes, batch runs and
the spatial cluster map.

One run is strictly single-threaded and bit-reproducible for a given
config; RNG streams are split per purpose (user placement, shadowing,
fading) so toggling one feature never shifts another's draws.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rapp
from .channel import (
    ChannelRealization,
    FadingProcess,
    _antenna_groups,
    generate_large_scale,
    measure_rsrp,
    noise_power_per_rb_mw,
)
from .model import Mode, SimConfig, Topology, validate, with_seed
from .phy import (
    McsTable,
    OruContribution,
    assemble_sinr,
    contribution_block,
    oru_contribution,
    schedule,
    slot_throughput,
)
from .ric import (
    A1Policy,
    ClusterControl,
    KpiWindow,
    QuantileReport,
    RicBus,
    RsrpIndication,
    aggregate_window,
    quantiles,
)
from .xapp import ClusterPolicy, ServingClusterMap, form_all_clusters, form_cluster


@dataclass(frozen=True)
class RunResult:
    mode: Mode
    seed: int
    quantile_reports: tuple[QuantileReport, ...]
    chosen_deltas: tuple[float, ...]
    bandit: rapp.BanditState | None
    per_user_mean_throughput_bps: np.ndarray
    epochs: int


@dataclass(frozen=True)
class BatchResult:
    runs: tuple[RunResult, ...]
    averaged_q50: tuple[float, ...]  # per-epoch mean of q50 across runs
    pooled_q10: float
    pooled_q50: float
    pooled_q90: float


class _XApp:
    """Cluster-forming endpoint: remembers the last policy, answers RSRP
    indications with a cluster control action."""

    def __init__(self, bus: RicBus):
        self.bus = bus
        self.delta: float | None = None
        self.slot = 0

    def handle(self, message) -> None:
        if isinstance(message, A1Policy):
            self.delta = message.delta
        elif isinstance(message, RsrpIndication):
            clusters = form_all_clusters(
                message.report, ClusterPolicy(delta=self.delta), decided_at_slot=self.slot
            )
            self.bus.deliver(ClusterControl(clusters), "e2node", now_slot=self.slot)
        else:
            raise TypeError(f"xapp cannot handle {type(message).__name__}")


class _E2Node:
    def __init__(self):
        self.clusters: ServingClusterMap | None = None

    def handle(self, message) -> None:
        if isinstance(message, ClusterControl):
            self.clusters = message.cluster_map
        else:
            raise TypeError(f"e2 node cannot handle {type(message).__name__}")


class _RApp:
    """KPI-consuming endpoint: turns the epoch window into the bandit
    reward (median per-user throughput)."""

    def __init__(self, bandit: rapp.BanditState | None):
        self.bandit = bandit
        self.last_reward: float | None = None

    def handle(self, message) -> None:
        if isinstance(message, KpiWindow):
            self.last_reward = rapp.compute_reward(message.user_throughput_bps)
            if self.bandit is not None:
                rapp.update(self.bandit, self.last_reward)
        else:
            raise TypeError(f"rapp cannot handle {type(message).__name__}")


def _pinned_delta(config: SimConfig) -> float | None:
    if config.mode == Mode.NETWORK_CENTRIC:
        return 0.0
    if config.mode == Mode.CANONICAL:
        return 1.0
    if config.mode == Mode.FIXED_DELTA:
        return config.fixed_delta
    return None


def _wrap_slice(pieces: tuple, g_idx: int, num_rbs: int) -> OruContribution:
    """Cut one radio unit's rows out of a (possibly stacked) block result."""
    own, total, sched, own_amp, asg, act = pieces
    sl = slice(g_idx * num_rbs, (g_idx + 1) * num_rbs)
    return OruContribution(
        own=own[sl].T,
        total=total[sl].T,
        scheduled=sched[sl].T,
        own_amp=None if own_amp is None else own_amp[sl].T,
        assignment=asg[sl],
        active=act[sl],
    )


def run(config: SimConfig, mcs_table: McsTable | None = None) -> RunResult:
    """Simulate one seeded run of `config.num_epochs` complete epochs.

    Per epoch: policy delivery (A1), RSRP indication and cluster control
    (E2), then the slot loop (fading refresh, schedule, precode, SINR,
    link adaptation); the epoch's KPI window (O1) feeds the bandit in
    ADAPTIVE mode.  Trailing slots that do not fill an epoch are dropped.
    """
    validate(config)
    topo = config.topology
    streams = np.random.SeedSequence(config.seed).spawn(3)
    # streams[0] belongs to user placement (already consumed by the config
    # builder); shadowing and fading get their own independent streams.
    shadow_rng = np.random.Generator(np.random.PCG64(streams[1]))
    fading_rng = np.random.Generator(np.random.PCG64(streams[2]))

    gains = generate_large_scale(topo, config.channel, shadow_rng)
    noise_mw = noise_power_per_rb_mw(topo, config.channel)
    fading = FadingProcess(topo, config.channel, fading_rng)
    table = mcs_table if mcs_table is not None else McsTable.default()
    tx_mw = topo.tx_power_mw()
    cap = config.scheduler.max_users_per_rb

    bus = RicBus()
    xapp = _XApp(bus)
    e2node = _E2Node()
    bandit = rapp.new_state(config.bandit) if config.mode == Mode.ADAPTIVE else None
    rapp_ep = _RApp(bandit)
    bus.register("xapp", xapp.handle)
    bus.register("e2node", e2node.handle)
    bus.register("rapp", rapp_ep.handle)

    epochs = config.num_epochs
    reports: list[QuantileReport] = []
    chosen: list[float] = []
    throughput_sum = np.zeros(topo.num_users)
    pinned = _pinned_delta(config)

    # Same-antenna-count radio units can run as one stacked batch; their
    # per-row gain and power-budget tables are static for the whole run.
    groups = _antenna_groups(topo)
    group_gain_rows = {
        num_ant: np.repeat(gains[:, ids].T, topo.num_rbs, axis=0)
        for num_ant, ids in groups
        if len(ids) >= 2
    }
    group_tx_rows = {
        num_ant: np.repeat(tx_mw[ids] / topo.num_rbs, topo.num_rbs)
        for num_ant, ids in groups
        if len(ids) >= 2
    }

    for epoch in range(epochs):
        start = epoch * config.epoch_slots
        end = start + config.epoch_slots - 1
        xapp.slot = start

        if config.mode == Mode.ADAPTIVE:
            arm = rapp.select_action(bandit)
            delta = config.bandit.arms[arm]
            chosen.append(delta)
        else:
            delta = pinned
            if config.mode == Mode.FIXED_DELTA:
                chosen.append(delta)
        bus.deliver(A1Policy(delta=delta, issued_epoch=epoch), "xapp", now_slot=start)

        realization = ChannelRealization(
            large_scale_gain=gains, small_scale=fading.at_slot(start), valid_from_slot=start
        )
        report = measure_rsrp(realization, topo, measurement_slot=start)
        bus.deliver(RsrpIndication(report), "xapp", now_slot=start)
        clusters = e2node.clusters

        served_counts = [len(clusters.serves(l)) for l in range(topo.num_orus)]
        cacheable = [0 < n <= cap for n in served_counts]
        block_cache: dict = {}
        slot_results = []

        coherent = config.coherent_combining
        chunk_start = start
        while chunk_start <= end:
            block = chunk_start // config.channel.coherence_slots
            if config.channel.fading == "none":
                chunk_end = end
            else:
                chunk_end = min(end, (block + 1) * config.channel.coherence_slots - 1)
            chunk = range(chunk_start, chunk_end + 1)
            t_slots = len(chunk)
            fading_block = fading.block_at_slot(chunk_start)
            small_scale = fading_block.per_oru
            grids = [schedule(clusters, topo, config.scheduler, s) for s in chunk]
            contribs: list[list] = [[None] * topo.num_orus for _ in chunk]

            for num_ant, ids in groups:
                stackable = [
                    l for l in ids if grids[0].assignments[l].shape[1] > 0 and not cacheable[l]
                ]
                if len(ids) >= 2 and len(stackable) == len(ids):
                    # Overloaded same-antenna-count radio units share u and
                    # batch into one ZF + coupling pass over the whole block.
                    parent = fading_block.stacked[num_ant][1]
                    raw = contribution_block(
                        parent.reshape(-1, topo.num_users, num_ant),
                        group_gain_rows[num_ant],
                        group_tx_rows[num_ant],
                        np.stack([np.concatenate([g.assignments[l] for l in ids]) for g in grids]),
                        np.stack([np.concatenate([g.active[l] for l in ids]) for g in grids]),
                        coherent=coherent,
                    )
                    for t, pieces in enumerate(raw):
                        for g_idx, l in enumerate(ids):
                            contribs[t][l] = _wrap_slice(pieces, g_idx, topo.num_rbs)
                    continue
                for l in ids:
                    if grids[0].assignments[l].shape[1] == 0:
                        continue
                    if cacheable[l]:
                        # Under-loaded radio units schedule the same user
                        # set on every RB each slot; their contribution only
                        # changes with the fading block.
                        key = (l, block)
                        contrib = block_cache.get(key)
                        if contrib is None:
                            contrib = oru_contribution(
                                small_scale[l],
                                gains[:, l],
                                float(tx_mw[l]),
                                grids[0].assignments[l],
                                grids[0].active[l],
                                coherent=coherent,
                            )
                            block_cache[key] = contrib
                        for t in range(t_slots):
                            contribs[t][l] = contrib
                    else:
                        raw = contribution_block(
                            small_scale[l],
                            np.broadcast_to(gains[:, l], (topo.num_rbs, topo.num_users)),
                            np.full(topo.num_rbs, float(tx_mw[l]) / topo.num_rbs),
                            np.stack([g.assignments[l] for g in grids]),
                            np.stack([g.active[l] for g in grids]),
                            coherent=coherent,
                        )
                        for t, pieces in enumerate(raw):
                            contribs[t][l] = _wrap_slice(pieces, 0, topo.num_rbs)

            for t, slot in enumerate(chunk):
                slot_res = assemble_sinr(
                    contribs[t],
                    grids[t],
                    noise_mw,
                    (topo.num_users, topo.num_rbs),
                    coherent=coherent,
                )
                result = slot_throughput(slot_res.grid, slot_res.sinr, table, topo)
                slot_results.append(result)
                throughput_sum += result.throughput_bps
            chunk_start = chunk_end + 1

        window = aggregate_window(slot_results, epoch, start, end)
        bus.deliver(window, "rapp", now_slot=end)
        reports.append(quantiles(window))

    simulated_slots = epochs * config.epoch_slots
    return RunResult(
        mode=config.mode,
        seed=config.seed,
        quantile_reports=tuple(reports),
        chosen_deltas=tuple(chosen),
        bandit=bandit,
        per_user_mean_throughput_bps=throughput_sum / simulated_slots,
        epochs=epochs,
    )


def run_batch(
    config: SimConfig,
    num_runs: int,
    base_seed: int | None = None,
    mcs_table: McsTable | None = None,
) -> BatchResult:
    """`num_runs` independent runs on seeds base_seed..base_seed+n-1, each
    with a fresh user-placement draw; the learning curve is the per-epoch
    mean of q50 across runs and the pooled quantiles are taken over the
    union of all runs' per-user mean throughputs."""
    if num_runs < 1:
        raise ValueError(f"num_runs must be >= 1, got {num_runs}")
    if base_seed is None:
        base_seed = config.seed
    table = mcs_table if mcs_table is not None else McsTable.default()
    results = tuple(run(with_seed(config, base_seed + i), mcs_table=table) for i in range(num_runs))
    q50_matrix = np.array([[qr.q50 for qr in r.quantile_reports] for r in results])
    averaged = tuple(float(v) for v in q50_matrix.mean(axis=0))
    pooled = np.concatenate([r.per_user_mean_throughput_bps for r in results])
    q10, q50, q90 = np.quantile(pooled, [0.1, 0.5, 0.9], method="linear")
    return BatchResult(
        runs=results,
        averaged_q50=averaged,
        pooled_q10=float(q10),
        pooled_q50=float(q50),
        pooled_q90=float(q90),
    )


@dataclass(frozen=True)
class ClusterGrid:
    """Spatial partition of the area into serving-cluster regions."""

    x: np.ndarray  # (N,)
    y: np.ndarray  # (N,)
    cluster_id: np.ndarray  # (N,) int
    id_to_cluster: tuple[tuple[int, ...], ...]


def cluster_map_grid(config: SimConfig, delta: float, grid_resolution_m: float) -> ClusterGrid:
    """Evaluate the cluster rule on a regular grid of probe points using
    shadowing-free large-scale gains; each distinct cluster set gets a
    stable id in scan order (y rows outer, x fastest)."""
    if not 0.0 <= delta <= 1.0:
        raise ValueError(f"delta must be in [0, 1], got {delta}")
    topo = config.topology
    width, height = topo.area_m
    xs = np.arange(grid_resolution_m / 2.0, width, grid_resolution_m)
    ys = np.arange(grid_resolution_m / 2.0, height, grid_resolution_m)
    gx, gy = np.meshgrid(xs, ys)
    points = np.column_stack([gx.ravel(), gy.ravel()])

    orus = topo.oru_positions()
    heights = np.array([o.antenna_height for o in topo.orus])
    d3d = np.sqrt(
        np.sum((points[:, None, :] - orus[None, :, :]) ** 2, axis=-1) + heights[None, :] ** 2
    )
    d3d = np.maximum(d3d, 1.0)
    ref_db = config.channel.resolved_reference_loss_db(topo.carrier_freq_hz)
    exponents = np.array(
        [
            config.channel.pathloss_exponent_macro
            if o.kind.value == "macro"
            else config.channel.pathloss_exponent_micro
            for o in topo.orus
        ]
    )
    gains = 10.0 ** (-(ref_db + 10.0 * exponents[None, :] * np.log10(d3d)) / 10.0)
    rsrp = topo.tx_power_mw()[None, :] * gains

    policy = ClusterPolicy(delta=delta)
    ids = np.empty(points.shape[0], dtype=int)
    mapping: dict[tuple[int, ...], int] = {}
    for i in range(points.shape[0]):
        members = form_cluster(rsrp[i], policy).oru_ids
        if members not in mapping:
            mapping[members] = len(mapping)
        ids[i] = mapping[members]
    id_to_cluster = tuple(sorted(mapping, key=mapping.get))
    return ClusterGrid(
        x=points[:, 0], y=points[:, 1], cluster_id=ids, id_to_cluster=id_to_cluster
    )
