"""Domain types for the physical scene and the simulation configuration.

Everything here is plain data: radio-unit and user geometry, OFDMA numerics
and the knobs of the control loop.  Construction is cheap and unvalidated;
`validate` collects every invariant violation at once so a broken config
file reports all its problems in one pass.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np
import yaml

MACRO_TX_POWER_DBM = 46.0
MICRO_TX_POWER_DBM = 30.0


class OruKind(str, enum.Enum):
    MACRO = "macro"
    MICRO = "micro"


class Mode(str, enum.Enum):
    """Cluster-formation policy driving a run.

    ADAPTIVE lets the rApp bandit pick the threshold each epoch.
    NETWORK_CENTRIC pins threshold 0 (single strongest radio unit per user),
    CANONICAL pins threshold 1 (every radio unit serves every user) and
    FIXED_DELTA pins the value given in ``SimConfig.fixed_delta``.
    """

    ADAPTIVE = "adaptive"
    NETWORK_CENTRIC = "network_centric"
    CANONICAL = "canonical"
    FIXED_DELTA = "fixed_delta"


@dataclass(frozen=True)
class OruConfig:
    id: int
    position: tuple[float, float]  # meters
    antenna_height: float  # meters
    tx_power_dbm: float
    num_antennas: int
    kind: OruKind = OruKind.MACRO


@dataclass(frozen=True)
class UserConfig:
    id: int
    position: tuple[float, float]  # meters


@dataclass(frozen=True)
class Topology:
    orus: tuple[OruConfig, ...]
    users: tuple[UserConfig, ...]
    num_rbs: int = 69
    rb_bandwidth_hz: float = 360e3  # 12 subcarriers x 30 kHz
    slot_duration_s: float = 0.0005  # 700 ms / 1400 slots
    carrier_freq_hz: float = 3.6e9
    area_m: tuple[float, float] = (500.0, 500.0)

    @property
    def num_orus(self) -> int:
        return len(self.orus)

    @property
    def num_users(self) -> int:
        return len(self.users)

    def oru_positions(self) -> np.ndarray:
        return np.array([o.position for o in self.orus], dtype=float)

    def user_positions(self) -> np.ndarray:
        return np.array([u.position for u in self.users], dtype=float)

    def tx_power_mw(self) -> np.ndarray:
        return np.array([10 ** (o.tx_power_dbm / 10.0) for o in self.orus])


@dataclass(frozen=True)
class ChannelConfig:
    """Stochastic substitute for a ray-traced channel.

    ``reference_loss_db`` of None means "derive from the carrier frequency"
    (32.4 + 20*log10(f_GHz), the 1 m free-space anchor).
    """

    pathloss_exponent_macro: float = 3.2
    pathloss_exponent_micro: float = 3.8
    reference_loss_db: float | None = None
    shadowing_sigma_db: float = 6.0
    noise_figure_db: float = 9.0
    fading: str = "rayleigh"  # "rayleigh" | "none"
    coherence_slots: int = 10
    delay_taps: int = 8  # frequency selectivity; >= num_rbs gives i.i.d. RBs

    def resolved_reference_loss_db(self, carrier_freq_hz: float) -> float:
        if self.reference_loss_db is not None:
            return self.reference_loss_db
        return 32.4 + 20.0 * math.log10(carrier_freq_hz / 1e9)


@dataclass(frozen=True)
class BanditConfig:
    arms: tuple[float, ...] = (0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
    alpha: float = 0.1
    optimistic_init: float = 0.0


@dataclass(frozen=True)
class SchedulerConfig:
    max_users_per_rb: int = 4
    discipline: str = "round_robin"


@dataclass(frozen=True)
class SimConfig:
    topology: Topology
    mode: Mode = Mode.ADAPTIVE
    fixed_delta: float | None = None  # required when mode == FIXED_DELTA
    epoch_slots: int = 50  # 25 ms at 0.5 ms slots
    total_slots: int = 1400
    seed: int = 1
    bandit: BanditConfig = field(default_factory=BanditConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)
    coherent_combining: bool = False

    @property
    def num_epochs(self) -> int:
        return self.total_slots // self.epoch_slots


class ConfigError(ValueError):
    """Raised by `validate`; carries every violated invariant."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("; ".join(violations))


def _check_topology(topo: Topology, out: list[str]) -> None:
    if not topo.orus:
        out.append("topology.orus: at least one radio unit required")
    ids = [o.id for o in topo.orus]
    if sorted(ids) != list(range(len(ids))):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        if dupes:
            out.append(f"topology.orus: duplicate ids {dupes}")
        else:
            out.append(f"topology.orus: ids must be dense 0..{len(ids) - 1}, got {sorted(ids)}")
    for o in topo.orus:
        where = f"topology.orus[{o.id}]"
        if o.num_antennas < 1:
            out.append(f"{where}.num_antennas: must be >= 1 (got {o.num_antennas})")
        if not math.isfinite(o.tx_power_dbm):
            out.append(f"{where}.tx_power_dbm: must be finite")
        if o.antenna_height < 0:
            out.append(f"{where}.antenna_height: must be >= 0 (got {o.antenna_height})")
    if not topo.users:
        out.append("topology.users: at least one user required")
    uids = [u.id for u in topo.users]
    if sorted(uids) != list(range(len(uids))):
        dupes = sorted({i for i in uids if uids.count(i) > 1})
        if dupes:
            out.append(f"topology.users: duplicate ids {dupes}")
        else:
            out.append(f"topology.users: ids must be dense 0..{len(uids) - 1}, got {sorted(uids)}")
    if topo.num_rbs < 1:
        out.append(f"topology.num_rbs: must be >= 1 (got {topo.num_rbs})")
    if not topo.rb_bandwidth_hz > 0:
        out.append(f"topology.rb_bandwidth_hz: must be > 0 (got {topo.rb_bandwidth_hz})")
    if not topo.slot_duration_s > 0:
        out.append(f"topology.slot_duration_s: must be > 0 (got {topo.slot_duration_s})")
    if not topo.carrier_freq_hz > 0:
        out.append(f"topology.carrier_freq_hz: must be > 0 (got {topo.carrier_freq_hz})")
    if topo.area_m[0] <= 0 or topo.area_m[1] <= 0:
        out.append(f"topology.area_m: must be positive (got {topo.area_m})")


def _check_channel(ch: ChannelConfig, out: list[str]) -> None:
    for name, exp in (
        ("pathloss_exponent_macro", ch.pathloss_exponent_macro),
        ("pathloss_exponent_micro", ch.pathloss_exponent_micro),
    ):
        if not 2.0 <= exp <= 6.0:
            out.append(f"channel.{name}: must be in [2, 6] (got {exp})")
    if ch.shadowing_sigma_db < 0:
        out.append(f"channel.shadowing_sigma_db: must be >= 0 (got {ch.shadowing_sigma_db})")
    if ch.fading not in ("rayleigh", "none"):
        out.append(f"channel.fading: must be 'rayleigh' or 'none' (got {ch.fading!r})")
    if ch.coherence_slots < 1:
        out.append(f"channel.coherence_slots: must be >= 1 (got {ch.coherence_slots})")
    if ch.delay_taps < 1:
        out.append(f"channel.delay_taps: must be >= 1 (got {ch.delay_taps})")


def _check_bandit(b: BanditConfig, out: list[str]) -> None:
    if not b.arms:
        out.append("bandit.arms: must be nonempty")
    else:
        if any(not 0.0 <= a <= 1.0 for a in b.arms):
            out.append(f"bandit.arms: every arm must be in [0, 1] (got {list(b.arms)})")
        if any(b.arms[i] >= b.arms[i + 1] for i in range(len(b.arms) - 1)):
            out.append(f"bandit.arms: must be strictly increasing (got {list(b.arms)})")
    if not 0.0 < b.alpha < 1.0:
        out.append(f"bandit.alpha: must be in (0, 1) (got {b.alpha})")


def check(config: SimConfig) -> list[str]:
    """Return every violated invariant, empty list when the config is valid."""
    out: list[str] = []
    _check_topology(config.topology, out)
    _check_channel(config.channel, out)
    _check_bandit(config.bandit, out)
    sched = config.scheduler
    if sched.max_users_per_rb < 1:
        out.append(f"scheduler.max_users_per_rb: must be >= 1 (got {sched.max_users_per_rb})")
    elif config.topology.orus:
        min_ant = min(o.num_antennas for o in config.topology.orus)
        if sched.max_users_per_rb > min_ant:
            out.append(
                "scheduler.max_users_per_rb: must not exceed the smallest antenna count "
                f"({min_ant}), got {sched.max_users_per_rb}"
            )
    if sched.discipline != "round_robin":
        out.append(f"scheduler.discipline: only 'round_robin' is supported (got {sched.discipline!r})")
    if config.epoch_slots < 1:
        out.append(f"epoch_slots: must be >= 1 (got {config.epoch_slots})")
    if config.total_slots < 1:
        out.append(f"total_slots: must be >= 1 (got {config.total_slots})")
    if config.epoch_slots >= 1 and config.total_slots < config.epoch_slots:
        out.append(
            f"total_slots: must cover at least one epoch of {config.epoch_slots} slots "
            f"(got {config.total_slots})"
        )
    if not 0 <= config.seed < 2**64:
        out.append(f"seed: must fit in 64 bits (got {config.seed})")
    if config.mode == Mode.FIXED_DELTA:
        if config.fixed_delta is None:
            out.append("fixed_delta: required when mode is 'fixed_delta'")
        elif not 0.0 <= config.fixed_delta <= 1.0:
            out.append(f"fixed_delta: must be in [0, 1] (got {config.fixed_delta})")
    elif config.fixed_delta is not None:
        out.append(f"fixed_delta: only meaningful in mode 'fixed_delta' (mode is {config.mode.value!r})")
    return out


def validate(config: SimConfig) -> SimConfig:
    """Return the config unchanged if valid, else raise ConfigError listing
    every violation."""
    violations = check(config)
    if violations:
        raise ConfigError(violations)
    return config


# --- default scenario -------------------------------------------------------

MICRO_RING_RADIUS_M = 150.0
MICRO_RING_ANGLES_DEG = (0.0, 72.0, 144.0, 216.0, 288.0)
DEFAULT_AREA_M = (500.0, 500.0)
DEFAULT_NUM_USERS = 40


def _position_rng(seed: int) -> np.random.Generator:
    # Stream 0 of the run seed is reserved for user placement so that
    # redrawing positions never perturbs shadowing or fading draws.
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed).spawn(3)[0]))


def draw_users(num_users: int, area_m: tuple[float, float], seed: int) -> tuple[UserConfig, ...]:
    rng = _position_rng(seed)
    pos = rng.uniform((0.0, 0.0), area_m, size=(num_users, 2))
    return tuple(UserConfig(id=k, position=(float(x), float(y))) for k, (x, y) in enumerate(pos))


def default_orus(area_m: tuple[float, float] = DEFAULT_AREA_M) -> tuple[OruConfig, ...]:
    """One macro at the area center, five micros on a 150 m ring around it."""
    cx, cy = area_m[0] / 2.0, area_m[1] / 2.0
    orus = [
        OruConfig(
            id=0,
            position=(cx, cy),
            antenna_height=45.0,
            tx_power_dbm=MACRO_TX_POWER_DBM,
            num_antennas=128,
            kind=OruKind.MACRO,
        )
    ]
    for i, ang in enumerate(MICRO_RING_ANGLES_DEG):
        rad = math.radians(ang)
        orus.append(
            OruConfig(
                id=i + 1,
                position=(
                    cx + MICRO_RING_RADIUS_M * math.cos(rad),
                    cy + MICRO_RING_RADIUS_M * math.sin(rad),
                ),
                antenna_height=6.0,
                tx_power_dbm=MICRO_TX_POWER_DBM,
                num_antennas=32,
                kind=OruKind.MICRO,
            )
        )
    return tuple(orus)


def default_scenario(seed: int = 1, mode: Mode = Mode.ADAPTIVE) -> SimConfig:
    """The reference experiment: 1 macro + 5 micro radio units in a
    500 m x 500 m area, 40 seed-placed users, 69 RBs, 1400 slots in
    epochs of 50."""
    topo = Topology(
        orus=default_orus(),
        users=draw_users(DEFAULT_NUM_USERS, DEFAULT_AREA_M, seed),
        area_m=DEFAULT_AREA_M,
    )
    return SimConfig(topology=topo, mode=mode, seed=seed)


def with_seed(config: SimConfig, seed: int) -> SimConfig:
    """Same scenario, new seed: user positions are redrawn from the new
    seed's placement stream, everything else is kept."""
    users = draw_users(config.topology.num_users, config.topology.area_m, seed)
    return replace(config, seed=seed, topology=replace(config.topology, users=users))


def with_mode(config: SimConfig, mode: Mode, fixed_delta: float | None = None) -> SimConfig:
    return replace(config, mode=mode, fixed_delta=fixed_delta)


# --- config file I/O --------------------------------------------------------


def to_dict(config: SimConfig) -> dict:
    return {
        "mode": config.mode.value,
        "fixed_delta": config.fixed_delta,
        "epoch_slots": config.epoch_slots,
        "total_slots": config.total_slots,
        "seed": config.seed,
        "coherent_combining": config.coherent_combining,
        "topology": {
            "num_rbs": config.topology.num_rbs,
            "rb_bandwidth_hz": config.topology.rb_bandwidth_hz,
            "slot_duration_s": config.topology.slot_duration_s,
            "carrier_freq_hz": config.topology.carrier_freq_hz,
            "area_m": list(config.topology.area_m),
            "orus": [
                {
                    "id": o.id,
                    "position": list(o.position),
                    "antenna_height": o.antenna_height,
                    "tx_power_dbm": o.tx_power_dbm,
                    "num_antennas": o.num_antennas,
                    "kind": o.kind.value,
                }
                for o in config.topology.orus
            ],
            "users": [{"id": u.id, "position": list(u.position)} for u in config.topology.users],
        },
        "channel": {
            "pathloss_exponent_macro": config.channel.pathloss_exponent_macro,
            "pathloss_exponent_micro": config.channel.pathloss_exponent_micro,
            "reference_loss_db": config.channel.reference_loss_db,
            "shadowing_sigma_db": config.channel.shadowing_sigma_db,
            "noise_figure_db": config.channel.noise_figure_db,
            "fading": config.channel.fading,
            "coherence_slots": config.channel.coherence_slots,
            "delay_taps": config.channel.delay_taps,
        },
        "bandit": {
            "arms": list(config.bandit.arms),
            "alpha": config.bandit.alpha,
            "optimistic_init": config.bandit.optimistic_init,
        },
        "scheduler": {
            "max_users_per_rb": config.scheduler.max_users_per_rb,
            "discipline": config.scheduler.discipline,
        },
    }


def _take(d: dict, key: str, where: str, errors: list[str]):
    if key not in d:
        errors.append(f"{where}.{key}: missing")
        return None
    return d.pop(key)


def _reject_unknown(d: dict, where: str, errors: list[str]) -> None:
    for key in d:
        errors.append(f"{where}.{key}: unknown key")


def from_dict(data: dict) -> SimConfig:
    """Strict inverse of `to_dict`: every key required, unknown keys are errors."""
    errors: list[str] = []
    d = dict(data)

    topo_d = dict(_take(d, "topology", "config", errors) or {})
    orus = []
    for i, od in enumerate(topo_d.pop("orus", []) or []):
        od = dict(od)
        orus.append(
            OruConfig(
                id=int(_take(od, "id", f"orus[{i}]", errors) or 0),
                position=tuple(_take(od, "position", f"orus[{i}]", errors) or (0.0, 0.0)),
                antenna_height=float(_take(od, "antenna_height", f"orus[{i}]", errors) or 0.0),
                tx_power_dbm=float(_take(od, "tx_power_dbm", f"orus[{i}]", errors) or 0.0),
                num_antennas=int(_take(od, "num_antennas", f"orus[{i}]", errors) or 0),
                kind=OruKind(_take(od, "kind", f"orus[{i}]", errors) or "macro"),
            )
        )
        _reject_unknown(od, f"orus[{i}]", errors)
    users = []
    for i, ud in enumerate(topo_d.pop("users", []) or []):
        ud = dict(ud)
        users.append(
            UserConfig(
                id=int(_take(ud, "id", f"users[{i}]", errors) or 0),
                position=tuple(_take(ud, "position", f"users[{i}]", errors) or (0.0, 0.0)),
            )
        )
        _reject_unknown(ud, f"users[{i}]", errors)
    area = _take(topo_d, "area_m", "topology", errors) or (500.0, 500.0)
    topology = Topology(
        orus=tuple(orus),
        users=tuple(users),
        num_rbs=int(_take(topo_d, "num_rbs", "topology", errors) or 1),
        rb_bandwidth_hz=float(_take(topo_d, "rb_bandwidth_hz", "topology", errors) or 1.0),
        slot_duration_s=float(_take(topo_d, "slot_duration_s", "topology", errors) or 1.0),
        carrier_freq_hz=float(_take(topo_d, "carrier_freq_hz", "topology", errors) or 1.0),
        area_m=(float(area[0]), float(area[1])),
    )
    _reject_unknown(topo_d, "topology", errors)

    ch_d = dict(_take(d, "channel", "config", errors) or {})
    ref_loss = _take(ch_d, "reference_loss_db", "channel", errors)
    channel = ChannelConfig(
        pathloss_exponent_macro=float(_take(ch_d, "pathloss_exponent_macro", "channel", errors) or 2.0),
        pathloss_exponent_micro=float(_take(ch_d, "pathloss_exponent_micro", "channel", errors) or 2.0),
        reference_loss_db=None if ref_loss is None else float(ref_loss),
        shadowing_sigma_db=float(_take(ch_d, "shadowing_sigma_db", "channel", errors) or 0.0),
        noise_figure_db=float(_take(ch_d, "noise_figure_db", "channel", errors) or 0.0),
        fading=str(_take(ch_d, "fading", "channel", errors) or "none"),
        coherence_slots=int(_take(ch_d, "coherence_slots", "channel", errors) or 1),
        delay_taps=int(_take(ch_d, "delay_taps", "channel", errors) or 1),
    )
    _reject_unknown(ch_d, "channel", errors)

    b_d = dict(_take(d, "bandit", "config", errors) or {})
    bandit = BanditConfig(
        arms=tuple(float(a) for a in (_take(b_d, "arms", "bandit", errors) or ())),
        alpha=float(_take(b_d, "alpha", "bandit", errors) or 0.5),
        optimistic_init=float(_take(b_d, "optimistic_init", "bandit", errors) or 0.0),
    )
    _reject_unknown(b_d, "bandit", errors)

    s_d = dict(_take(d, "scheduler", "config", errors) or {})
    scheduler = SchedulerConfig(
        max_users_per_rb=int(_take(s_d, "max_users_per_rb", "scheduler", errors) or 1),
        discipline=str(_take(s_d, "discipline", "scheduler", errors) or "round_robin"),
    )
    _reject_unknown(s_d, "scheduler", errors)

    fixed_delta = _take(d, "fixed_delta", "config", errors)
    config = SimConfig(
        topology=topology,
        mode=Mode(_take(d, "mode", "config", errors) or "adaptive"),
        fixed_delta=None if fixed_delta is None else float(fixed_delta),
        epoch_slots=int(_take(d, "epoch_slots", "config", errors) or 1),
        total_slots=int(_take(d, "total_slots", "config", errors) or 1),
        seed=int(_take(d, "seed", "config", errors) or 0),
        bandit=bandit,
        channel=channel,
        scheduler=scheduler,
        coherent_combining=bool(_take(d, "coherent_combining", "config", errors)),
    )
    _reject_unknown(d, "config", errors)
    if errors:
        raise ConfigError(errors)
    return config


def save_config(config: SimConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(to_dict(config), fh, sort_keys=False)


def load_config(path) -> SimConfig:
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ConfigError(["config file must contain a mapping at the top level"])
    return from_dict(data)
