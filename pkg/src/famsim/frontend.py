"""Per-core front end: TLBs, node-table walks, and request pacing.

Each core replays its trace in order, keeping up to a configurable window
of accesses in flight and retiring them in order. A TLB miss walks the
node's four-level table; a walker cache holding intermediate entries
shortens the walk, so between one and four table reads are issued. Where
those reads go depends on the scheme: pinned-local tables keep every walk
read in node DRAM, while exposed-mode tables follow the data-placement
split and may read fabric memory.
"""

from __future__ import annotations

from .addressing import PAGE_SHIFT
from .caches import LruCache, TlbHierarchy
from .fammem import RequestClass
from .request import DELIVER_STU, DELIVER_TRANSLATOR, DemandAccess

STATUS_DENY = {
    "not_owner": "N",
    "not_in_bitmap": "B",
    "insufficient_perm": "P",
    "unallocated": "U",
}

# Walker-cache keys pack (prefix, level) into one int; levels 0..2 cache
# the three intermediate table entries.
_PTW_LEVELS = ((27, 0), (18, 1), (9, 2))


class CoreFrontend:
    __slots__ = (
        "sim",
        "node",
        "core_index",
        "trace",
        "tlb",
        "ptw",
        "stats",
        "scheme",
        "is_efam",
        "local_pages",
        "gap_ns",
        "overhead_ns",
        "fault_ns",
        "window",
        "_vaddrs",
        "_kinds",
        "_gaps",
        "_next_idx",
        "_inflight",
        "_next_candidate",
        "_issue_pending",
        "_done",
        "_retire_ptr",
        "last_retire_ns",
        "audit",
        "audit_segments",
        "_local_mem",
        "_deliver_kind",
        "_l1",
        "_free_reqs",
        "_flat_map",
        "_n",
    )

    def __init__(self, sim, node: int, core_index: int, trace):
        cfg = sim.cfg
        self.sim = sim
        self.node = node
        self.core_index = core_index
        self.trace = trace
        self.tlb = TlbHierarchy(cfg.tlb_l1_entries, cfg.tlb_l2_entries, cfg.tlb_l2_ways)
        self.ptw = LruCache(cfg.ptw_cache_entries)
        self.stats = sim.stats.per_node[node]
        self.scheme = cfg.scheme
        self.is_efam = cfg.scheme == "efam"
        self.local_pages = cfg.local_bytes >> PAGE_SHIFT
        self.gap_ns = cfg.gap_ns_per_cycle
        self.overhead_ns = cfg.core_overhead_ns
        self.fault_ns = cfg.minor_fault_ns
        self.window = cfg.core_window
        self._vaddrs = [e.vaddr for e in trace]
        self._kinds = [int(e.kind) for e in trace]
        self._gaps = [e.gap_cycles for e in trace]
        self._next_idx = 0
        self._inflight = 0
        self._next_candidate = 0.0
        self._issue_pending = False
        self._done = bytearray(len(trace))
        self._retire_ptr = 0
        self.last_retire_ns = 0.0
        self.audit = [None] * len(trace) if cfg.audit else None
        self.audit_segments = cfg.audit_segments
        self._local_mem = sim.local[node]
        self._deliver_kind = DELIVER_STU if cfg.scheme == "ifam" else DELIVER_TRANSLATOR
        self._l1 = self.tlb.l1._d  # the L1 dict, inlined on the hit path
        self._free_reqs = []
        self._flat_map = sim.broker.node_table(node)._flat
        self._n = len(trace)

    # -- pacing --------------------------------------------------------------
    def start(self):
        if self.trace:
            self._next_candidate = self.trace[0].gap_cycles * self.gap_ns
            self._schedule_issue(0.0)

    def _schedule_issue(self, t):
        if (
            self._issue_pending
            or self._next_idx >= self._n
            or self._inflight >= self.window
        ):
            return
        self._issue_pending = True
        at = self._next_candidate if self._next_candidate > t else t
        self.sim.engine.schedule(at, self._issue)

    def _issue(self, t):
        self._issue_pending = False
        idx = self._next_idx
        if self._inflight >= self.window or idx >= self._n:
            return
        vaddr = self._vaddrs[idx]
        pos = idx
        idx += 1
        self._next_idx = idx
        if idx < self._n:
            self._next_candidate = t + self._gaps[idx] * self.gap_ns
        self._inflight += 1
        # Inlined first-level TLB probe; everything else is the slow path.
        vpage = vaddr >> PAGE_SHIFT
        l1 = self._l1
        value = l1.get(vpage)
        if value is not None:
            del l1[vpage]
            l1[vpage] = value
            self.stats.tlb_l1_hits += 1
            self._route(t + self.overhead_ns, vaddr, pos, value)
        else:
            self._process(t, vaddr, pos, vpage)
        self._schedule_issue(t)

    # -- translation -----------------------------------------------------------
    def _process(self, t, vaddr, pos, vpage):
        stats = self.stats
        value = self.tlb.l2.lookup(vpage % self.tlb.l2_sets, vpage)
        if value is not None:
            self.tlb.l1.insert(vpage, value)
            stats.tlb_l2_hits += 1
            self._route(t + self.overhead_ns, vaddr, pos, value)
            return
        stats.tlb_misses += 1
        t += self.overhead_ns

        value = self._flat_map.get(vpage)
        if value is None:
            value = self.sim.broker.allocate_page(self.node, vpage)
            stats.minor_faults += 1
            t += self.fault_ns
        table = self.sim.broker.node_table(self.node)
        steps = table.walk_path(vpage)
        # Deepest cached intermediate entry decides where the walk starts.
        ptw = self.ptw
        first = 0
        for shift, lvl in ((9, 2), (18, 1), (27, 0)):
            if ptw.lookup((vpage >> shift) * 4 + lvl) is not None:
                first = lvl + 1
                break
        for shift, lvl in _PTW_LEVELS:
            if lvl >= first:
                ptw.insert((vpage >> shift) * 4 + lvl, True)
        self.tlb.fill(vpage, value)
        if first == 3:
            # Only the last-level entry is read.
            self._one_walk_read(t, steps[3], (vaddr, pos, value))
            return
        self._walk_step(t, [steps, first, vaddr, pos, value])

    def _one_walk_read(self, t, step, arg):
        if step.is_fam:
            self.stats.walk_reads_fam += 1
            self.sim.fam_access(
                t, self.node, step.entry_addr, False, RequestClass.AT_WALK,
                self._walk_done, arg,
            )
        else:
            self.stats.walk_reads_local += 1
            self._local_mem.request(t, False, step.entry_addr, self._walk_done, arg)
            self.stats.local_reads_walk += 1

    def _walk_done(self, t, arg):
        vaddr, pos, value = arg
        self._route(t, vaddr, pos, value)

    def _walk_step(self, t, st):
        steps, idx, vaddr, pos, value = st
        if idx == 4:
            self._route(t, vaddr, pos, value)
            return
        st[1] = idx + 1
        step = steps[idx]
        if step.is_fam:
            self.stats.walk_reads_fam += 1
            self.sim.fam_access(
                t, self.node, step.entry_addr, False, RequestClass.AT_WALK,
                self._walk_step, st,
            )
        else:
            self.stats.walk_reads_local += 1
            self.stats.local_reads_walk += 1
            self._local_mem.request(t, False, step.entry_addr, self._walk_step, st)

    # -- demand routing -----------------------------------------------------------
    def _route(self, t, vaddr, pos, value):
        offset = vaddr & 0xFFF
        kind = self._kinds[pos]
        is_write = kind == 2  # AccessKind.WRITE
        stats = self.stats
        if self.is_efam:
            addr = (value.base_addr << PAGE_SHIFT) | offset
            if value.is_fam:
                self.sim.fam_access(
                    t, self.node, addr, is_write, RequestClass.DEMAND,
                    self._complete_plain, (pos, "F", addr),
                )
            else:
                if is_write:
                    stats.local_writes_demand += 1
                else:
                    stats.local_reads_demand += 1
                self._local_mem.request(t, is_write, addr, self._complete_plain, (pos, "L", addr))
            return
        node_page = value
        addr = (node_page << PAGE_SHIFT) | offset
        if node_page < self.local_pages:
            if is_write:
                stats.local_writes_demand += 1
            else:
                stats.local_reads_demand += 1
            self._local_mem.request(t, is_write, addr, self._complete_plain, (pos, "L", addr))
            return
        free = self._free_reqs
        if free:
            req = free.pop()
            req.seq = pos
            req.kind = kind
            req.offset = offset
            req.node_addr = addr
            req.fam_addr = None
            req.v_flag = False
            req.is_write = is_write
            req.expects_response = not is_write
            req.oml = None
        else:
            req = DemandAccess(self.node, pos, kind, addr, is_write, self._deliver_kind, None)
            req.core = self
        if self.audit_segments:
            req.audit = [("issue", t)]
        if self._deliver_kind == DELIVER_STU:
            self.sim.stus[self.node].handle_ifam(t, req)
        else:
            self.sim.translators[self.node].handle_request(t, req)

    # -- completion -----------------------------------------------------------
    def _complete_plain(self, t, arg):
        pos, status, addr = arg
        if self.audit is not None:
            self.audit[pos] = (status, addr)
        self._retire(t, pos)

    def complete_fam(self, t, req: DemandAccess, reason):
        if req.audit is not None:
            req.audit.append(("complete", t))
            times = [ts for _, ts in req.audit]
            assert times == sorted(times), "latency segments must be contiguous"
            req.audit = None
        if reason is not None:
            self.stats.denied_events += 1
            status = STATUS_DENY[reason]
        else:
            status = "F"
        if self.audit is not None:
            addr = req.fam_addr if req.fam_addr is not None else req.node_addr
            self.audit[req.seq] = (status, addr)
        pos = req.seq
        self._free_reqs.append(req)
        self._retire(t, pos)

    def _retire(self, t, pos):
        done = self._done
        done[pos] = 1
        ptr = self._retire_ptr
        n = len(done)
        retired = 0
        while ptr < n and done[ptr]:
            ptr += 1
            retired += 1
        if retired:
            self._retire_ptr = ptr
            self._inflight -= retired
            self.stats.retired_events += retired
            if t > self.last_retire_ns:
                self.last_retire_ns = t
            self.sim.note_retired(retired)
            self._schedule_issue(t)
