"""Banked memory timing model and the fabric link model.

One :class:`MemModule` instance models either a fabric-attached pool (NVM
timings, admission limit) or a node's local DRAM (no admission limit by
default). Requests are serviced by banks selected from address bits above
the 64-byte block offset; a bank serves one request at a time, and a
module-wide in-flight cap applies backpressure by queueing requests at
admission rather than dropping them.

Completion callbacks take the scheduled time plus an optional opaque
argument; ``extra_ns`` lets a caller fold a fixed return latency into the
callback time without an intermediate event.
"""

from __future__ import annotations

import enum
import heapq
from collections import deque


class RequestClass(enum.Enum):
    DEMAND = "demand"
    AT_WALK = "at_walk"
    AT_ACM = "at_acm"
    AT_BITMAP = "at_bitmap"


def classify_address(layout, fam_addr: int, is_table_read: bool) -> RequestClass:
    """Classification cross-check: what the target address implies.

    The engine tags requests at issue; tests use this to confirm the tags
    agree with the region the address falls in.
    """
    rel = fam_addr - layout.pool_base
    if rel < layout.acm_region_bytes:
        return RequestClass.AT_ACM
    if rel < layout.acm_region_bytes + layout.bitmap_region_bytes:
        return RequestClass.AT_BITMAP
    return RequestClass.AT_WALK if is_table_read else RequestClass.DEMAND


class MemModule:
    """Fixed-latency banked memory with an optional in-flight cap."""

    __slots__ = (
        "name",
        "engine",
        "banks",
        "read_ns",
        "write_ns",
        "limit",
        "_bank_free",
        "_inflight",
        "_pending",
        "_wake_at",
        "admitted",
        "completed",
        "served_reads",
        "served_writes",
        "peak_inflight",
    )

    def __init__(self, name, engine, banks, read_ns, write_ns, max_outstanding=0):
        self.name = name
        self.engine = engine
        self.banks = banks
        self.read_ns = read_ns
        self.write_ns = write_ns
        self.limit = max_outstanding  # 0 means unlimited
        self._bank_free = [0.0] * banks
        self._inflight = []  # completion-time heap (limited modules only)
        self._pending = deque()
        self._wake_at = None
        self.admitted = 0
        self.completed = 0
        self.served_reads = 0
        self.served_writes = 0
        self.peak_inflight = 0

    def request(self, t, is_write, addr, fn=None, arg=None, extra_ns=0.0):
        """Admit (or queue) one access arriving at ``t``.

        ``fn(t_complete + extra_ns, arg)`` is scheduled for the completion;
        ``t`` may lie in the caller's future (a fixed-latency hop away), as
        long as successive calls carry non-decreasing arrival times, which
        time-ordered event processing plus constant hop latencies guarantee.
        """
        if not self.limit:
            self._admit(t, is_write, addr, fn, arg, extra_ns)
            return
        inflight = self._inflight
        while inflight and inflight[0] <= t:
            heapq.heappop(inflight)
            self.completed += 1
        if self._pending or len(inflight) >= self.limit:
            self._pending.append((t, is_write, addr, fn, arg, extra_ns))
            self._ensure_wakeup()
            return
        self._admit(t, is_write, addr, fn, arg, extra_ns)

    def _admit(self, t, is_write, addr, fn, arg, extra_ns):
        bank_free = self._bank_free
        bank = (addr >> 6) % self.banks
        start = bank_free[bank]
        if start < t:
            start = t
        if is_write:
            done = start + self.write_ns
            self.served_writes += 1
        else:
            done = start + self.read_ns
            self.served_reads += 1
        bank_free[bank] = done
        self.admitted += 1
        if self.limit:
            heapq.heappush(self._inflight, done)
            n = len(self._inflight)
            if n > self.peak_inflight:
                self.peak_inflight = n
        if fn is not None:
            self.engine.schedule(done + extra_ns, fn, arg)

    def _ensure_wakeup(self):
        t = self._inflight[0]
        if self._wake_at is None or t < self._wake_at:
            self._wake_at = t
            self.engine.schedule(t, self._wake)

    def _wake(self, t):
        self._wake_at = None
        inflight = self._inflight
        while inflight and inflight[0] <= t:
            heapq.heappop(inflight)
            self.completed += 1
        while self._pending and len(inflight) < self.limit:
            arrival, is_write, addr, fn, arg, extra = self._pending.popleft()
            self._admit(arrival if arrival > t else t, is_write, addr, fn, arg, extra)
        if self._pending:
            self._ensure_wakeup()

    @property
    def in_flight(self) -> int:
        return len(self._inflight)

    @property
    def queued(self) -> int:
        return len(self._pending)

    @property
    def served(self) -> int:
        return self.served_reads + self.served_writes


class FabricLink:
    """One direction of a pool's shared fabric connection.

    Messages depart in call order; with a nonzero per-message serialization
    cost, concurrent senders queue behind each other before paying the base
    latency, which is how contention grows with the number of nodes.
    """

    __slots__ = ("engine", "base_ns", "ser_ns", "_busy", "messages")

    def __init__(self, engine, base_ns, ser_ns=0.0):
        self.engine = engine
        self.base_ns = base_ns
        self.ser_ns = ser_ns
        self._busy = 0.0
        self.messages = 0

    def transit(self, t, fn, arg=None):
        self.messages += 1
        if self.ser_ns:
            start = self._busy if self._busy > t else t
            sent = start + self.ser_ns
            self._busy = sent
            self.engine.schedule(sent + self.base_ns, fn, arg)
        else:
            self.engine.schedule(t + self.base_ns, fn, arg)
