"""Deterministic simulator of a user-centric cell-free massive MIMO
downlink steered by a two-tier control loop: threshold-based serving
clusters (xApp) tuned by a greedy bandit on median throughput (rApp)."""

__version__ = "0.1.0"

from .engine import BatchResult, ClusterGrid, RunResult, cluster_map_grid, run, run_batch
from .model import (
    BanditConfig,
    ChannelConfig,
    ConfigError,
    Mode,
    OruConfig,
    OruKind,
    SchedulerConfig,
    SimConfig,
    Topology,
    UserConfig,
    default_scenario,
    load_config,
    save_config,
    validate,
    with_mode,
    with_seed,
)

__all__ = [
    "BanditConfig",
    "BatchResult",
    "ChannelConfig",
    "ClusterGrid",
    "ConfigError",
    "Mode",
    "OruConfig",
    "OruKind",
    "RunResult",
    "SchedulerConfig",
    "SimConfig",
    "Topology",
    "UserConfig",
    "cluster_map_grid",
    "default_scenario",
    "load_config",
    "run",
    "run_batch",
    "save_config",
    "validate",
    "with_mode",
    "with_seed",
    "__version__",
]
