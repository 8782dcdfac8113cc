"""In-process analogues of the RAN-controller interfaces: measurement and
control messages (E2), threshold policies (A1), KPI windows and quantile
reports (O1).

The bus dispatches typed messages between registered endpoints at
deterministic slot boundaries; real wire encodings are out of scope.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .channel import RsrpReport
from .phy import SlotResult
from .xapp import ServingClusterMap


class UnknownDestination(KeyError):
    pass


class WindowLengthMismatch(ValueError):
    pass


@dataclass(frozen=True)
class RsrpIndication:
    """E2 report: per-user per-radio-unit received reference power."""

    report: RsrpReport


@dataclass(frozen=True)
class ClusterControl:
    """E2 control action: the serving-cluster map to apply."""

    cluster_map: ServingClusterMap


@dataclass(frozen=True)
class A1Policy:
    """Non-real-time guidance: the cluster threshold the xApp must use."""

    delta: float
    issued_epoch: int

    def __post_init__(self):
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError(f"delta must be in [0, 1], got {self.delta}")


@dataclass(frozen=True)
class KpiWindow:
    """O1 report: per-user mean throughput over one decision epoch."""

    epoch: int
    user_throughput_bps: tuple[float, ...]
    start_slot: int
    end_slot: int


@dataclass(frozen=True)
class QuantileReport:
    epoch: int
    q10: float
    q50: float
    q90: float


def aggregate_window(
    slot_results: list[SlotResult], epoch: int, start_slot: int, end_slot: int
) -> KpiWindow:
    """Per-user mean of per-slot throughput across the epoch; idle slots
    count as zero."""
    expected = end_slot - start_slot + 1
    if len(slot_results) != expected:
        raise WindowLengthMismatch(
            f"epoch spans {expected} slots but {len(slot_results)} results were given"
        )
    stack = np.stack([r.throughput_bps for r in slot_results])
    means = stack.mean(axis=0)
    return KpiWindow(
        epoch=epoch,
        user_throughput_bps=tuple(float(v) for v in means),
        start_slot=start_slot,
        end_slot=end_slot,
    )


def quantiles(window: KpiWindow) -> QuantileReport:
    """Empirical 10/50/90 quantiles by linear interpolation between order
    statistics (the common plotting convention), so q50 coincides with the
    bandit's median reward on the same window."""
    vals = np.asarray(window.user_throughput_bps, dtype=float)
    if vals.size == 0:
        raise ValueError("window has no users")
    q10, q50, q90 = np.quantile(vals, [0.1, 0.5, 0.9], method="linear")
    return QuantileReport(epoch=window.epoch, q10=float(q10), q50=float(q50), q90=float(q90))


@dataclass(frozen=True)
class DeliveryReceipt:
    seq: int
    destination: str
    due_slot: int


class RicBus:
    """Typed point-to-point dispatch with optional slot latency.

    Zero-latency messages run their handler synchronously inside
    `deliver`; delayed ones are released in FIFO order by `tick`.
    """

    def __init__(self):
        self._handlers: dict[str, Callable] = {}
        self._queue: list[tuple[int, int, str, object]] = []
        self._seq = 0

    def register(self, destination: str, handler: Callable) -> None:
        self._handlers[destination] = handler

    def deliver(
        self, message, destination: str, now_slot: int = 0, latency_slots: int = 0
    ) -> DeliveryReceipt:
        if destination not in self._handlers:
            raise UnknownDestination(destination)
        self._seq += 1
        receipt = DeliveryReceipt(
            seq=self._seq, destination=destination, due_slot=now_slot + latency_slots
        )
        if latency_slots == 0:
            self._handlers[destination](message)
        else:
            heapq.heappush(self._queue, (receipt.due_slot, receipt.seq, destination, message))
        return receipt

    def tick(self, slot: int) -> int:
        """Dispatch every queued message due at or before `slot`; returns
        the number dispatched."""
        n = 0
        while self._queue and self._queue[0][0] <= slot:
            _, _, destination, message = heapq.heappop(self._queue)
            self._handlers[destination](message)
            n += 1
        return n
