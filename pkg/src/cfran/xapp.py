"""Serving-cluster formation: the xApp side of the control loop.

Each user's cluster is the shortest descending-RSRP prefix of radio units
whose power sum reaches the fraction `delta` of the user's total received
power.  `delta` itself arrives from the rApp as policy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import RsrpReport


class AllZeroRsrp(ValueError):
    """Every RSRP entry is zero: a measurement fault upstream."""

    def __init__(self, user_id: int | None = None):
        self.user_id = user_id
        who = "row" if user_id is None else f"user {user_id}"
        super().__init__(f"all-zero RSRP {who}")


@dataclass(frozen=True)
class ClusterPolicy:
    delta: float
    max_cluster_size: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError(f"delta must be in [0, 1], got {self.delta}")
        if self.max_cluster_size is not None and self.max_cluster_size < 1:
            raise ValueError(f"max_cluster_size must be >= 1, got {self.max_cluster_size}")


@dataclass(frozen=True)
class UserCluster:
    """One user's serving set, strongest radio unit first."""

    oru_ids: tuple[int, ...]
    capped: bool = False


@dataclass(frozen=True)
class ServingClusterMap:
    clusters: tuple[UserCluster, ...]
    policy_used: ClusterPolicy
    decided_at_slot: int

    def members(self, user_id: int) -> tuple[int, ...]:
        return self.clusters[user_id].oru_ids

    def serves(self, oru_id: int) -> list[int]:
        """Users with this radio unit in their cluster, ascending id."""
        return [k for k, c in enumerate(self.clusters) if oru_id in c.oru_ids]


def form_cluster(rsrp_row, policy: ClusterPolicy) -> UserCluster:
    """Minimal descending-RSRP prefix capturing at least the `delta`
    fraction of the row's total power; never empty; RSRP ties broken by
    ascending radio-unit index."""
    p = np.asarray(rsrp_row, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("rsrp_row must be a nonempty 1-D array")
    if np.any(~np.isfinite(p)) or np.any(p < 0):
        raise ValueError("rsrp_row entries must be finite and nonnegative")
    order = np.lexsort((np.arange(p.size), -p))
    csum = np.cumsum(p[order])
    total = csum[-1]
    if total == 0.0:
        raise AllZeroRsrp()
    # First prefix length whose cumulative share reaches delta; length >= 1
    # always (delta 0 would otherwise admit the empty set).
    n = int(np.searchsorted(csum, policy.delta * total, side="left")) + 1
    n = min(n, p.size)
    capped = False
    if policy.max_cluster_size is not None and n > policy.max_cluster_size:
        n = policy.max_cluster_size
        capped = True
    return UserCluster(oru_ids=tuple(int(i) for i in order[:n]), capped=capped)


def form_all_clusters(
    report: RsrpReport, policy: ClusterPolicy, decided_at_slot: int = 0
) -> ServingClusterMap:
    """Apply `form_cluster` independently per user and stamp the result."""
    clusters = []
    for k in range(report.p_mw.shape[0]):
        try:
            clusters.append(form_cluster(report.p_mw[k], policy))
        except AllZeroRsrp as exc:
            raise AllZeroRsrp(user_id=k) from exc
    return ServingClusterMap(
        clusters=tuple(clusters), policy_used=policy, decided_at_slot=decided_at_slot
    )
