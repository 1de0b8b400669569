"""Deterministic discrete-event core and full-system assembly.

Events are (time, sequence, callback, argument) tuples processed in time
order with insertion order breaking ties, so a run is a pure function of
its configuration, seed, and traces. The simulation wires one set of
units per node (cores, local DRAM, translator, system translation unit)
to one fabric pool per node, with all nodes sharing each pool's two
directed links.

Demand-path latency decomposes into the modeled segments only: core issue
overhead, walk reads, translator DRAM reads, verification fetches, fabric
transits, and bank service. Audit mode records per-request checkpoints
and asserts that decomposition. When the fabric has no per-message
serialization cost the return transit is folded into the bank-completion
event (the return link is stateless then); with serialization enabled the
response takes a real link event so queueing applies in arrival order.
"""

from __future__ import annotations

import heapq

from .broker import Broker
from .config import ExperimentConfig
from .errors import ConfigError, SimulationProtocolError
from .fammem import FabricLink, MemModule, RequestClass
from .frontend import CoreFrontend
from .request import DELIVER_DIRECT, DELIVER_TRANSLATOR, DemandAccess
from .stats import SimStats
from .stu import SystemTranslationUnit
from .translator import FamTranslator
from .workload import generate


class EventQueue:
    """Global clock in nanoseconds plus the (time, seq)-ordered event heap."""

    __slots__ = ("_q", "_seq", "now")

    def __init__(self):
        self._q = []
        self._seq = 0
        self.now = 0.0

    def schedule(self, t, fn, arg=None):
        heapq.heappush(self._q, (t, self._seq, fn, arg))
        self._seq += 1

    def run(self):
        q = self._q
        pop = heapq.heappop
        while q:
            t, _, fn, arg = pop(q)
            self.now = t
            if arg is None:
                fn(t)
            else:
                fn(t, arg)

    def __len__(self):
        return len(self._q)


_DENIAL_FIELD = {
    "not_owner": "denials_not_owner",
    "not_in_bitmap": "denials_not_in_bitmap",
    "insufficient_perm": "denials_insufficient_perm",
    "unallocated": "denials_unallocated",
}


class Simulation:
    """One experiment instance: build, run once, read the stats."""

    def __init__(self, cfg: ExperimentConfig, traces=None):
        cfg.validate()
        self.cfg = cfg
        self.engine = EventQueue()
        self.stats = SimStats(cfg.scheme, cfg.nodes)
        self.broker = Broker(cfg, on_acm_write=self._acm_write_traffic)

        self.pools = [
            MemModule(
                f"fam{p}", self.engine, cfg.fam_banks, cfg.fam_read_ns,
                cfg.fam_write_ns, cfg.fam_max_outstanding,
            )
            for p in range(cfg.nodes)
        ]
        self.links_out = [
            FabricLink(self.engine, cfg.fabric_latency_ns, cfg.fabric_serialization_ns)
            for _ in range(cfg.nodes)
        ]
        self.links_back = [
            FabricLink(self.engine, cfg.fabric_latency_ns, cfg.fabric_serialization_ns)
            for _ in range(cfg.nodes)
        ]
        self.local = [
            MemModule(f"dram{n}", self.engine, cfg.local_banks, cfg.local_read_ns, cfg.local_write_ns)
            for n in range(cfg.nodes)
        ]
        self._fold_response = cfg.fabric_serialization_ns == 0
        self._back_ns = cfg.fabric_latency_ns
        self._pool_bytes = cfg.fam_capacity

        deact = cfg.scheme in ("deact-w", "deact-n")
        self.translators = [FamTranslator(self, n) if deact else None for n in range(cfg.nodes)]
        self.stus = [
            SystemTranslationUnit(self, n) if cfg.scheme != "efam" else None
            for n in range(cfg.nodes)
        ]
        if deact:
            for n in range(cfg.nodes):
                self.translators[n]._stu = self.stus[n]

        total_cores = cfg.nodes * cfg.cores_per_node
        if traces is None:
            base = cfg.workload_spec()
            traces = [generate(base.with_seed(base.seed + i)) for i in range(total_cores)]
        elif len(traces) == 1 and total_cores > 1:
            traces = list(traces) * total_cores
        elif len(traces) not in (0, total_cores):
            raise ConfigError(
                [f"traces: expected 0, 1, or {total_cores} traces, got {len(traces)}"]
            )
        self.frontends = [
            CoreFrontend(self, i // cfg.cores_per_node, i, traces[i])
            for i in range(len(traces))
        ]
        self._retired_total = 0
        self._ran = False

    # -- traffic helpers ----------------------------------------------------
    def fam_access(self, t, node, addr, is_write, cls, fn=None, arg=None, respond=True):
        """Issue one fabric-memory access; ``fn(t, arg)`` fires at the node edge.

        With ``respond`` the completion is delivered after the return
        transit; without it the callback (if any) fires at bank completion.
        """
        stats = self.stats.per_node[node]
        if cls is RequestClass.DEMAND:
            if is_write:
                stats.fam_writes_demand += 1
            else:
                stats.fam_reads_demand += 1
        elif cls is RequestClass.AT_WALK:
            stats.fam_reads_walk += 1
        elif cls is RequestClass.AT_ACM:
            if is_write:
                stats.fam_writes_acm += 1
            else:
                stats.fam_reads_acm += 1
        else:
            stats.fam_reads_bitmap += 1
        pool = addr // self._pool_bytes
        mem = self.pools[pool]
        if fn is None or not respond:
            stats.fabric_messages += 1
            if self._fold_response:
                mem.request(t + self._back_ns, is_write, addr, fn, arg)
            else:
                self.links_out[pool].transit(
                    t, self._fam_arrive_quiet, (mem, is_write, addr, fn, arg)
                )
            return
        stats.fabric_messages += 2  # request out, response back
        if self._fold_response:
            # Stateless links: arrival and return are constant shifts, so the
            # whole hop chain collapses into one completion event.
            mem.request(t + self._back_ns, is_write, addr, fn, arg, extra_ns=self._back_ns)
        else:
            self.links_out[pool].transit(
                t, self._fam_arrive_slow, (mem, pool, is_write, addr, fn, arg)
            )

    def _fam_arrive_quiet(self, t, p):
        mem, is_write, addr, fn, arg = p
        mem.request(t, is_write, addr, fn, arg)

    def _fam_arrive_slow(self, t, p):
        mem, pool, is_write, addr, fn, arg = p
        mem.request(t, is_write, addr, self._fam_served, (pool, fn, arg))

    def _fam_served(self, t, p):
        pool, fn, arg = p
        self.links_back[pool].transit(t, fn, arg)

    def local_access(self, t, node, addr, is_write, cls, fn=None, arg=None):
        """Counted local-DRAM access (used by tests and slow paths)."""
        stats = self.stats.per_node[node]
        if cls == "demand":
            if is_write:
                stats.local_writes_demand += 1
            else:
                stats.local_reads_demand += 1
        elif cls == "walk":
            stats.local_reads_walk += 1
        elif is_write:
            stats.local_writes_translator += 1
        else:
            stats.local_reads_translator += 1
        self.local[node].request(t, is_write, addr, fn, arg)

    def forward_demand(self, t, req: DemandAccess):
        """Demand access leaves verification and goes to the fabric pool."""
        self.fam_access(
            t, req.node, req.fam_addr, req.is_write, RequestClass.DEMAND, self._deliver, req
        )

    def _deliver(self, t, req: DemandAccess):
        if req.is_write or req.deliver == DELIVER_DIRECT:
            self.finish_request(t, req, None)
        elif req.deliver == DELIVER_TRANSLATOR:
            self.translators[req.node].deliver_response(t, req)
        else:
            self.stus[req.node].deliver_ifam(t, req)

    def finish_request(self, t, req: DemandAccess, reason):
        if req.complete is not None:
            req.complete(t, reason)
        else:
            req.core.complete_fam(t, req, reason)

    def count_denial(self, node: int, reason: str):
        c = self.stats.per_node[node]
        setattr(c, _DENIAL_FIELD[reason], getattr(c, _DENIAL_FIELD[reason]) + 1)

    def _acm_write_traffic(self, node: int, block_addr: int):
        self.fam_access(
            self.engine.now, node, block_addr, True, RequestClass.AT_ACM, None, respond=False
        )

    def note_retired(self, count: int):
        self._retired_total += count
        if (
            self.cfg.warmup_events
            and not self.stats.warmed_up
            and self._retired_total >= self.cfg.warmup_events
        ):
            self.stats.mark_warmup()

    # -- run -----------------------------------------------------------------
    def run(self) -> SimStats:
        if self._ran:
            raise SimulationProtocolError("a Simulation instance runs once")
        self._ran = True
        for fe in self.frontends:
            fe.start()
        self.engine.run()
        self._finalize()
        return self.stats

    def _finalize(self):
        self.stats.total_ns = max((fe.last_retire_ns for fe in self.frontends), default=0.0)
        self.stats.broker_counters.update(self.broker.counters)
        for n in range(self.cfg.nodes):
            c = self.stats.per_node[n]
            if self.translators[n] is not None:
                c.oml_stalls += self.translators[n].oml.stalls
            if self.stus[n] is not None and self.stus[n].oml is not None:
                c.oml_stalls += self.stus[n].oml.stalls
        for mem in self.pools + self.local:
            if mem.queued:
                raise SimulationProtocolError(f"{mem.name}: requests stranded at admission")
            if mem.admitted != mem.served:
                raise SimulationProtocolError(f"{mem.name}: admission/service mismatch")
        for fe in self.frontends:
            if fe._retire_ptr != len(fe.trace):
                raise SimulationProtocolError(
                    f"core {fe.core_index}: {len(fe.trace) - fe._retire_ptr} events never retired"
                )

    # -- results -----------------------------------------------------------
    def audit_records(self):
        """Per-core (status, final address) pairs; audit mode only."""
        return [fe.audit for fe in self.frontends]


def run_experiment(cfg: ExperimentConfig, traces=None) -> Simulation:
    sim = Simulation(cfg, traces)
    sim.run()
    return sim
