"""Per-slot physical layer: round-robin OFDMA scheduling with spatial
multiplexing, per-radio-unit zero-forcing precoding, equal power split
within each resource block, cluster-wide SINR and wideband link adaptation
over a 15-step MCS ladder.

Convention: the channel tensors store the raw downlink vector h per
(user, RB, antenna); the precoder operates on rows h^H, so matrices handed
to `zf_weights` are already conjugated.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

import numpy as np

from .channel import ChannelRealization
from .model import SchedulerConfig, Topology
from .xapp import ServingClusterMap

COND_LIMIT = 1e12
NUM_MCS_LEVELS = 15


class RankDeficient(np.linalg.LinAlgError):
    """Co-scheduled channel rows are (numerically) linearly dependent."""


@dataclass(frozen=True)
class McsTable:
    """Ascending ladder of (minimum SINR, spectral efficiency) pairs."""

    min_sinr_db: tuple[float, ...]
    efficiency: tuple[float, ...]

    def __post_init__(self):
        if len(self.min_sinr_db) != NUM_MCS_LEVELS or len(self.efficiency) != NUM_MCS_LEVELS:
            raise ValueError(f"MCS table must have exactly {NUM_MCS_LEVELS} entries")
        if any(a >= b for a, b in zip(self.min_sinr_db, self.min_sinr_db[1:])):
            raise ValueError("MCS thresholds must be strictly increasing")
        if any(a >= b for a, b in zip(self.efficiency, self.efficiency[1:])):
            raise ValueError("MCS efficiencies must be strictly increasing")

    @classmethod
    def _from_text(cls, text: str) -> "McsTable":
        rows = []
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            t, e = line.split()
            rows.append((float(t), float(e)))
        thresholds, effs = zip(*rows) if rows else ((), ())
        return cls(min_sinr_db=tuple(thresholds), efficiency=tuple(effs))

    @classmethod
    def from_file(cls, path) -> "McsTable":
        with open(path, encoding="utf-8") as fh:
            return cls._from_text(fh.read())

    @classmethod
    def default(cls) -> "McsTable":
        text = resources.files("cfran").joinpath("data/mcs_table.txt").read_text(encoding="utf-8")
        return cls._from_text(text)


@dataclass(frozen=True)
class ScheduleGrid:
    """Per radio unit: a (num_rbs, u_l) array of user ids plus an equally
    shaped activity mask (False where a user was dropped on that RB by the
    rank-deficiency fallback)."""

    assignments: tuple[np.ndarray, ...]
    active: tuple[np.ndarray, ...]
    num_rbs: int

    def users_on(self, oru_id: int, rb: int) -> tuple[int, ...]:
        a = self.assignments[oru_id]
        if a.shape[1] == 0:
            return ()
        m = self.active[oru_id][rb]
        return tuple(int(u) for u in a[rb][m])

    def load(self, oru_id: int) -> np.ndarray:
        """Scheduled-user count per RB for one radio unit."""
        if self.assignments[oru_id].shape[1] == 0:
            return np.zeros(self.num_rbs, dtype=int)
        return self.active[oru_id].sum(axis=1)


def schedule(
    clusters: ServingClusterMap,
    topology: Topology,
    scheduler_config: SchedulerConfig,
    slot: int,
) -> ScheduleGrid:
    """Deterministic round robin: each radio unit walks its served users in
    id order, offset by the slot index, packing up to `max_users_per_rb`
    consecutive users into each RB."""
    cap = scheduler_config.max_users_per_rb
    num_rbs = topology.num_rbs
    assignments = []
    active = []
    for oru in topology.orus:
        served = np.asarray(clusters.serves(oru.id), dtype=int)
        n = served.size
        if n == 0:
            assignments.append(np.empty((num_rbs, 0), dtype=int))
            active.append(np.empty((num_rbs, 0), dtype=bool))
            continue
        u = min(cap, n)
        pos = (slot + np.arange(num_rbs)[:, None] * u + np.arange(u)[None, :]) % n
        assignments.append(served[pos])
        active.append(np.ones((num_rbs, u), dtype=bool))
    return ScheduleGrid(assignments=tuple(assignments), active=tuple(active), num_rbs=num_rbs)


def zf_weights(channel_matrix: np.ndarray) -> np.ndarray:
    """Zero-forcing precoder for one radio unit and one RB.

    `channel_matrix` holds h^H of one co-scheduled user per row (U x A);
    the result is A x U with unit-norm columns and h_j^H w_i = 0 for i != j.
    """
    h = np.asarray(channel_matrix, dtype=complex)
    if h.ndim != 2:
        raise ValueError("channel matrix must be 2-D (users x antennas)")
    nu, na = h.shape
    if nu > na:
        raise ValueError(f"cannot co-schedule {nu} users on {na} antennas")
    gram = h @ h.conj().T
    eig = np.linalg.eigvalsh(gram)
    if eig[0] <= 0 or eig[-1] > COND_LIMIT * eig[0]:
        raise RankDeficient(f"row-Gram condition number beyond {COND_LIMIT:.0e}")
    w = np.linalg.solve(gram, h).conj().T  # H^H (H H^H)^-1
    return w / np.linalg.norm(w, axis=0, keepdims=True)


def _inv_hermitian_2x2(g: np.ndarray) -> np.ndarray:
    a = g[..., 0, 0].real
    d = g[..., 1, 1].real
    b = g[..., 0, 1]
    det = a * d - (b.real**2 + b.imag**2)
    inv = np.empty_like(g)
    inv[..., 0, 0] = d / det
    inv[..., 1, 1] = a / det
    inv[..., 0, 1] = -b / det
    inv[..., 1, 0] = np.conj(inv[..., 0, 1])
    return inv


def _inv_hermitian_small(gram: np.ndarray) -> np.ndarray:
    """Closed-form batched inverse of Hermitian positive-definite matrices
    of size 1..4 (adjugate for 3, block Schur complement for 4); falls back
    to LAPACK above that.  Callers must have screened conditioning."""
    u = gram.shape[-1]
    if u == 1:
        return 1.0 / gram
    if u == 2:
        return _inv_hermitian_2x2(gram)
    if u == 4:
        a = gram[..., :2, :2]
        b = gram[..., :2, 2:]
        ainv = _inv_hermitian_2x2(a)
        ainv_b = ainv @ b
        schur = gram[..., 2:, 2:] - b.conj().swapaxes(-1, -2) @ ainv_b
        sinv = _inv_hermitian_2x2(schur)
        top_right = -ainv_b @ sinv
        inv = np.empty_like(gram)
        inv[..., :2, :2] = ainv + ainv_b @ sinv @ ainv_b.conj().swapaxes(-1, -2)
        inv[..., :2, 2:] = top_right
        inv[..., 2:, :2] = top_right.conj().swapaxes(-1, -2)
        inv[..., 2:, 2:] = sinv
        return inv
    if u == 3:
        inv = np.empty_like(gram)
        a, b, c = gram[..., 0, 0].real, gram[..., 0, 1], gram[..., 0, 2]
        d, e, f = gram[..., 1, 1].real, gram[..., 1, 2], gram[..., 2, 2].real
        c00 = d * f - (e.real**2 + e.imag**2)
        c01 = np.conj(c) * e - np.conj(b) * f
        c02 = np.conj(b) * np.conj(e) - np.conj(c) * d
        det = a * c00 + (b * c01 + c * c02).real
        inv[..., 0, 0] = c00 / det
        inv[..., 1, 0] = c01 / det
        inv[..., 2, 0] = c02 / det
        inv[..., 0, 1] = np.conj(inv[..., 1, 0])
        inv[..., 0, 2] = np.conj(inv[..., 2, 0])
        inv[..., 1, 1] = (a * f - (c.real**2 + c.imag**2)) / det
        inv[..., 1, 2] = (c * np.conj(b) - a * e) / det
        inv[..., 2, 1] = np.conj(inv[..., 1, 2])
        inv[..., 2, 2] = (a * d - (b.real**2 + b.imag**2)) / det
        return inv
    return np.linalg.inv(gram)


def _zf_rows_batched(h_conj: np.ndarray, h_raw: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batched ZF over stacked (S, U, A) row matrices.

    `h_conj` rows are h^H, `h_raw` the unconjugated gathers (so the Gram
    H H^H = h_conj @ h_raw^T costs no extra conjugation pass).  Returns
    (rows, bad): `rows[s, i, :]` is w_i^H with unit norm; `bad[s]` flags
    stacks whose row Gram fails the conditioning test (their rows are
    garbage and must be re-solved after dropping a user).
    """
    gram = h_conj @ h_raw.swapaxes(-1, -2)
    # Gershgorin screen: lo <= every eigenvalue <= hi, so a comfortable
    # lo/hi ratio proves good conditioning without an eigendecomposition;
    # only inconclusive stacks pay for exact eigenvalues.  |re| + |im|
    # upper-bounds the modulus, keeping the screen rigorous and cheap.
    absg = np.abs(gram.real) + np.abs(gram.imag)
    diag = gram.diagonal(axis1=-2, axis2=-1).real
    offsum = absg.sum(axis=-1) - np.abs(diag)
    lo = (diag - offsum).min(axis=-1)
    hi = (diag + offsum).max(axis=-1)
    unsure = (lo <= 0) | (hi > COND_LIMIT * lo)
    bad = np.zeros(gram.shape[0], dtype=bool)
    if unsure.any():
        eig = np.linalg.eigvalsh(gram[unsure])
        bad[unsure] = (eig[:, 0] <= 0) | (eig[:, -1] > COND_LIMIT * eig[:, 0])
    if bad.any():
        gram = np.where(bad[:, None, None], np.eye(gram.shape[-1])[None], gram)
    inv = _inv_hermitian_small(gram)
    rows = inv @ h_conj
    # ||w_i||^2 = (G^-1 G G^-1)_ii = (G^-1)_ii for Hermitian G: the norms
    # come free from the inverse diagonal.
    norms = np.sqrt(inv.diagonal(axis1=-2, axis2=-1).real)[..., None]
    norms[norms == 0] = 1.0
    rows *= 1.0 / norms
    return rows, bad


def _solve_rb_with_drops(
    h_rows: np.ndarray, act_row: np.ndarray, gains_row: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """ZF for one RB, dropping the weakest active user until the row Gram
    is well conditioned.  Returns (rows (u, A), updated activity mask)."""
    act_row = act_row.copy()
    rows = np.zeros_like(h_rows)
    while True:
        live = np.flatnonzero(act_row)
        h_live = h_rows[live]
        if live.size == 1:
            norm = np.linalg.norm(h_live[0])
            if norm > 0:
                rows[live[0]] = h_live[0] / norm
            return rows, act_row
        gram = h_live @ h_live.conj().T
        eig = np.linalg.eigvalsh(gram)
        if eig[0] > 0 and eig[-1] <= COND_LIMIT * eig[0]:
            solved = np.linalg.solve(gram, h_live)
            solved /= np.linalg.norm(solved, axis=1, keepdims=True)
            rows[live] = solved
            return rows, act_row
        act_row[live[np.argmin(gains_row[live])]] = False


@dataclass(frozen=True)
class OruContribution:
    """One radio unit's power footprint on every (user, RB) pair.

    `own` is beam power delivered to the user the beam serves, `total` the
    power this radio unit lands on each user from all its beams; the
    difference is the interference it causes.
    """

    own: np.ndarray  # (K, R)
    total: np.ndarray  # (K, R)
    scheduled: np.ndarray  # (K, R) bool
    own_amp: np.ndarray | None  # (K, R) complex, only when coherent
    assignment: np.ndarray  # (R, u) canonicalized user ids
    active: np.ndarray  # (R, u) post-fallback mask


def _canonical_assignment(assignment: np.ndarray, active: np.ndarray) -> np.ndarray:
    """Sort each RB's user list when every RB carries the same full set
    (the under-loaded case), making results independent of the round-robin
    rotation so per-block caching and the direct path agree exactly."""
    if assignment.shape[1] == 0 or not active.all():
        return assignment
    s = np.sort(assignment, axis=1)
    if (s == s[0]).all():
        return s
    return assignment


def _beam_rows(
    h_raw: np.ndarray,
    active: np.ndarray,
    drop_gains: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, bool]:
    """ZF rows (w_i^H, unit norm) for stacked (S, u, A) gathers, applying
    the drop-weakest fallback per flagged row.  `drop_gains[s, i]` orders
    users for dropping.  Returns (beams, active', clean)."""
    h_rows = h_raw.conj()
    new_active = active
    fully = active.all(axis=1)
    if fully.all():
        beams, bad = _zf_rows_batched(h_rows, h_raw)
        special = list(np.flatnonzero(bad))
        if special:
            new_active = active.copy()
    else:
        beams = np.zeros_like(h_rows)
        new_active = active.copy()
        special = list(np.flatnonzero(~fully))
        if fully.any():
            rows, bad = _zf_rows_batched(h_rows[fully], h_raw[fully])
            fully_idx = np.flatnonzero(fully)
            beams[fully_idx[~bad]] = rows[~bad]
            special.extend(fully_idx[bad])
    for s in special:
        beams[s], new_active[s] = _solve_rb_with_drops(h_rows[s], active[s], drop_gains[s])
    return beams, new_active, new_active is active


def contribution_block(
    h_slabs: np.ndarray,
    gain_rows: np.ndarray,
    tx_per_slab: np.ndarray,
    assignments: np.ndarray,
    actives: np.ndarray,
    coherent: bool = False,
) -> list[tuple]:
    """ZF + power accounting for T slots against M fixed channel slabs.

    `h_slabs[m]` is the (K, A) channel of one (radio unit, RB) pair for the
    current fading block, `gain_rows[m, k]` the large-scale gain toward user
    k and `tx_per_slab[m]` that radio unit's per-RB power budget.
    `assignments`/`actives` are (T, M, u): the schedule of each slot.

    Batching the T slots lets the beam-to-user couplings run as one matmul
    per block instead of one per slot.  Returns, per slot, the tuple
    (own (M, K), total (M, K), sched (M, K), own_amp or None,
    assignment (M, u), active (M, u)).
    """
    t_slots, num_slabs, u = assignments.shape
    num_users = h_slabs.shape[1]

    asg_flat = assignments.reshape(t_slots * num_slabs, u)
    act_flat = actives.reshape(t_slots * num_slabs, u)
    slab_of_row = np.tile(np.arange(num_slabs), t_slots)
    h_raw = h_slabs[slab_of_row[:, None], asg_flat, :]  # (T*M, u, A)
    drop_gains = gain_rows[slab_of_row[:, None], asg_flat]
    beams, act_new, clean = _beam_rows(h_raw, act_flat, drop_gains)

    counts = act_new.sum(axis=1)
    p_share_flat = np.zeros(t_slots * num_slabs)
    nonempty = counts > 0
    p_share_flat[nonempty] = np.tile(tx_per_slab, t_slots)[nonempty] / counts[nonempty]
    p_share_mt = p_share_flat.reshape(t_slots, num_slabs).T  # (M, T)

    # amp[m, k, t, i] = h_k . (w_i^H row of slot t); conj(amp) = h_k^H w_i.
    beams_m = beams.reshape(t_slots, num_slabs, u, -1).transpose(1, 0, 2, 3)
    beams_m = beams_m.reshape(num_slabs, t_slots * u, -1)
    amp = (h_slabs @ beams_m.transpose(0, 2, 1)).reshape(num_slabs, num_users, t_slots, u)
    pow_mktu = np.square(amp.real)
    pow_mktu += np.square(amp.imag)
    pow_mktu *= gain_rows[:, :, None, None] * p_share_mt[:, None, :, None]

    # Block-wide gather/scatter of the served-beam powers, sliced per slot.
    t_col = np.arange(t_slots)[:, None, None]
    slab_mid = np.arange(num_slabs)[None, :, None]
    lane = np.arange(u)[None, None, :]
    own_pick = pow_mktu[slab_mid, assignments, t_col, lane]  # (T, M, u)
    act_tmu = act_new.reshape(t_slots, num_slabs, u)
    if not clean:
        own_pick = np.where(act_tmu, own_pick, 0.0)
    own_all = np.zeros((t_slots, num_slabs, num_users))
    own_all[t_col, slab_mid, assignments] = own_pick
    total_all = pow_mktu.sum(axis=3).transpose(2, 0, 1)  # (T, M, K)
    sched_all = np.zeros((t_slots, num_slabs, num_users), dtype=bool)
    sched_all[t_col, slab_mid, assignments] = act_tmu

    own_amp_all = None
    if coherent:
        coupling = np.conj(amp[slab_mid, assignments, t_col, lane])
        amp_scale = np.sqrt(
            gain_rows[slab_mid, assignments] * p_share_mt.T[:, :, None]
        )
        pick = coupling * amp_scale
        if not clean:
            pick = np.where(act_tmu, pick, 0.0)
        own_amp_all = np.zeros((t_slots, num_slabs, num_users), dtype=complex)
        own_amp_all[t_col, slab_mid, assignments] = pick

    return [
        (
            own_all[t],
            total_all[t],
            sched_all[t],
            None if own_amp_all is None else own_amp_all[t],
            assignments[t],
            act_tmu[t],
        )
        for t in range(t_slots)
    ]


def oru_contribution(
    h_oru: np.ndarray,
    gains_col: np.ndarray,
    tx_power_mw: float,
    assignment: np.ndarray,
    active: np.ndarray,
    coherent: bool = False,
) -> OruContribution:
    """Beam powers of one radio unit toward every user on every RB under
    the given per-RB user assignment (equal power split per RB).

    `h_oru` is RB-major: (num_rbs, K, A).
    """
    num_rbs = h_oru.shape[0]
    assignment = _canonical_assignment(assignment, active)
    gain_rows = np.broadcast_to(gains_col, (num_rbs, gains_col.size))
    tx_per_row = np.full(num_rbs, tx_power_mw / num_rbs)
    [(own, total, sched, own_amp, assignment, new_active)] = contribution_block(
        h_oru, gain_rows, tx_per_row, assignment[None], active[None], coherent=coherent
    )
    return OruContribution(
        own=own.T,
        total=total.T,
        scheduled=sched.T,
        own_amp=None if own_amp is None else own_amp.T,
        assignment=assignment,
        active=new_active,
    )


@dataclass(frozen=True)
class SlotSinr:
    """SINR map plus the post-fallback schedule it was computed under."""

    sinr: np.ndarray  # (K, num_rbs), NaN where the user is idle
    grid: ScheduleGrid


def assemble_sinr(
    contributions: list[OruContribution | None],
    grid: ScheduleGrid,
    noise_mw: float,
    shape: tuple[int, int],
    coherent: bool = False,
) -> SlotSinr:
    """Combine per-radio-unit contributions into the SINR map."""
    signal = np.zeros(shape)
    interference = np.zeros(shape)
    scheduled = np.zeros(shape, dtype=bool)
    own_amp = np.zeros(shape, dtype=complex) if coherent else None
    assignments = []
    new_active = []
    for l, contrib in enumerate(contributions):
        if contrib is None:
            assignments.append(grid.assignments[l])
            new_active.append(grid.active[l])
            continue
        signal += contrib.own
        interference += contrib.total - contrib.own
        scheduled |= contrib.scheduled
        if coherent:
            own_amp += contrib.own_amp
        assignments.append(contrib.assignment)
        new_active.append(contrib.active)
    if coherent:
        signal = np.where(scheduled, np.abs(own_amp) ** 2, signal)
    with np.errstate(invalid="ignore"):
        sinr = np.where(scheduled, signal / (interference + noise_mw), np.nan)
    effective = ScheduleGrid(
        assignments=tuple(assignments), active=tuple(new_active), num_rbs=grid.num_rbs
    )
    return SlotSinr(sinr=sinr, grid=effective)


def slot_sinr(
    grid: ScheduleGrid,
    channel: ChannelRealization,
    clusters: ServingClusterMap,
    topology: Topology,
    noise_mw: float,
    coherent_combining: bool = False,
) -> SlotSinr:
    """Per (user, RB) SINR under the given schedule.

    Per RB each radio unit splits P_l/num_rbs equally over its scheduled
    users; a user's signal is the power sum (or coherent amplitude sum when
    enabled) of the beams serving it across its cluster, everything else
    radiated on that RB is interference.

    `clusters` defines the schedule's provenance; the grid built from it
    already restricts each radio unit to its served users.
    """
    tx_mw = topology.tx_power_mw()
    contributions: list[OruContribution | None] = []
    for l in range(len(topology.orus)):
        if grid.assignments[l].shape[1] == 0:
            contributions.append(None)
            continue
        contributions.append(
            oru_contribution(
                channel.small_scale[l],
                channel.large_scale_gain[:, l],
                float(tx_mw[l]),
                grid.assignments[l],
                grid.active[l],
                coherent=coherent_combining,
            )
        )
    return assemble_sinr(
        contributions,
        grid,
        noise_mw,
        (topology.num_users, topology.num_rbs),
        coherent=coherent_combining,
    )


def select_mcs(sinr_linear: float, table: McsTable) -> float:
    """Spectral efficiency of the highest MCS whose threshold the SINR
    meets; 0 below the ladder (outage), the top entry above it."""
    if sinr_linear < 0:
        raise ValueError(f"SINR must be >= 0, got {sinr_linear}")
    if sinr_linear == 0:
        return 0.0
    sinr_db = 10.0 * np.log10(sinr_linear)
    idx = int(np.searchsorted(table.min_sinr_db, sinr_db, side="right")) - 1
    return 0.0 if idx < 0 else table.efficiency[idx]


def select_mcs_array(sinr_linear: np.ndarray, table: McsTable) -> np.ndarray:
    """Vectorized `select_mcs` over an array of SINR values."""
    sinr = np.asarray(sinr_linear, dtype=float)
    with np.errstate(divide="ignore"):
        sinr_db = np.where(sinr > 0, 10.0 * np.log10(np.where(sinr > 0, sinr, 1.0)), -np.inf)
    idx = np.searchsorted(table.min_sinr_db, sinr_db, side="right") - 1
    effs = np.concatenate(([0.0], table.efficiency))
    return effs[idx + 1]


@dataclass(frozen=True)
class SlotResult:
    throughput_bps: np.ndarray  # (K,)
    sinr: np.ndarray  # (K, num_rbs), NaN where idle
    radiated_mw: np.ndarray  # (L, num_rbs)


def slot_throughput(
    grid: ScheduleGrid, sinr: np.ndarray, table: McsTable, topology: Topology
) -> SlotResult:
    """Wideband link adaptation and rate accounting.

    Each user's MCS comes from the geometric mean of its scheduled-RB
    SINRs; its rate is (scheduled RB count) x RB bandwidth x efficiency,
    each spatial layer carrying its own full stream.
    """
    scheduled = ~np.isnan(sinr)
    rb_counts = scheduled.sum(axis=1)
    positive = scheduled & (sinr > 0)
    logs = np.where(positive, np.log(np.where(positive, sinr, 1.0)), 0.0)
    outage = (scheduled & ~positive).any(axis=1)  # a zero-SINR RB floors the geo-mean
    geo = np.exp(logs.sum(axis=1) / np.maximum(rb_counts, 1))
    geo = np.where((rb_counts == 0) | outage, 0.0, geo)
    eff = select_mcs_array(geo, table)
    throughput = rb_counts * topology.rb_bandwidth_hz * eff

    tx_mw = topology.tx_power_mw()
    radiated = np.zeros((len(topology.orus), topology.num_rbs))
    for l in range(len(topology.orus)):
        counts = grid.load(l)
        radiated[l, counts > 0] = tx_mw[l] / topology.num_rbs
    return SlotResult(throughput_bps=throughput, sinr=sinr, radiated_mw=radiated)
