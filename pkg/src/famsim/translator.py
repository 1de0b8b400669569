"""Node-side fabric translator: unverified translation caching in DRAM.

The translator lives in the node's memory controller. It maps node
addresses to fabric addresses by probing a translation cache that resides
in a reserved slice of local DRAM: one 64-byte set holds four (node page,
fabric page) entries, indexed by node page number modulo the set count.
A hit rewrites the request to the fabric address and sets its verification
flag; a miss forwards the request unmodified for the system unit to walk.
Because responses come back tagged with fabric addresses, every request
expecting one holds a slot in the outstanding mapping list so the response
can be re-addressed into node space.
"""

from __future__ import annotations

import random

from .addressing import PAGE_SHIFT
from .errors import SimulationProtocolError
from .request import DENY_UNALLOCATED, DemandAccess

TC_WAYS = 4


class OutstandingMappings:
    """Bounded (fabric page -> node page) table for in-flight responses.

    Requests acquire a slot before leaving the node and release it when
    their response is delivered; acquisition stalls when all slots are
    held. Slots for still-untranslated requests are reserved first and
    filled once the mapping response arrives.
    """

    __slots__ = ("capacity", "entries", "waiters", "stalls")

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.entries = {}  # request -> (fam_page, node_page) or None while reserved
        self.waiters = []
        self.stalls = 0

    def acquire(self, t, req: DemandAccess, cont):
        """Run ``cont(t)`` once a slot is held (immediately if one is free)."""
        if len(self.entries) < self.capacity:
            self.entries[req] = None
            req.oml = self
            cont(t)
        else:
            self.stalls += 1
            self.waiters.append((req, cont))

    def fill(self, req: DemandAccess, fam_page: int, node_page: int):
        if req not in self.entries:
            raise SimulationProtocolError("mapping fill without a reserved slot")
        self.entries[req] = (fam_page, node_page)

    def release(self, t, req: DemandAccess):
        """Free the slot on response delivery; wakes one stalled request."""
        entry = self.entries.pop(req, _MISSING)
        if entry is _MISSING:
            raise SimulationProtocolError(
                f"response for node {req.node} seq {req.seq} without outstanding mapping"
            )
        req.oml = None
        if self.waiters:
            next_req, cont = self.waiters.pop(0)
            self.entries[next_req] = None
            next_req.oml = self
            cont(t)
        return entry

    def release_if_held(self, t, req: DemandAccess):
        if req in self.entries:
            self.release(t, req)

    def __len__(self):
        return len(self.entries)


_MISSING = object()


class FamTranslator:
    """Per-node translation front end for the decoupled schemes."""

    __slots__ = (
        "sim",
        "node",
        "sets",
        "base_addr",
        "_sets",
        "_pending",
        "_rng",
        "oml",
        "stats",
        "_stu",
    )

    def __init__(self, sim, node: int):
        cfg = sim.cfg
        self.sim = sim
        self.node = node
        self.sets = cfg.tc_sets
        self.base_addr = cfg.local_bytes - cfg.translation_cache_bytes
        self._sets = {}  # set index -> list of [tag, value]
        self._pending = {}  # node page -> requests waiting for its mapping
        self._rng = random.Random((cfg.seed << 16) ^ 0x5EED ^ node)
        self.oml = OutstandingMappings(cfg.oml_entries)
        self.stats = sim.stats.per_node[node]
        self._stu = None  # bound by the simulation after both units exist

    # -- lookup ------------------------------------------------------------
    def handle_request(self, t, req: DemandAccess, replay: bool = False):
        """Translate one fabric-zone access; one 64-byte set read either way."""
        node_page = req.node_addr >> PAGE_SHIFT
        set_idx = node_page % self.sets
        set_addr = self.base_addr + set_idx * 64
        stats = self.stats
        stats.local_reads_translator += 1
        local = self.sim.local[self.node]

        fam_page = None
        ways = self._sets.get(set_idx)
        if ways:
            for way in ways:
                if way[0] == node_page:
                    fam_page = way[1]
                    break

        if fam_page is not None:
            if replay:
                stats.translator_replays += 1
            else:
                stats.translator_hits += 1
            req.v_flag = True
            req.fam_addr = (fam_page << PAGE_SHIFT) | req.offset
            if req.expects_response:
                oml = self.oml
                if len(oml.entries) < oml.capacity:
                    oml.entries[req] = (fam_page, node_page)
                    req.oml = oml
                    local.request(t, False, set_addr, self._stu.handle_deact, req)
                else:
                    oml.stalls += 1
                    oml.waiters.append(
                        (req, lambda t2, r=req: self._hit_after_stall(t2, r))
                    )
                    local.request(t, False, set_addr)
            else:
                local.request(t, False, set_addr, self._stu.handle_deact, req)
            return

        if replay:
            raise SimulationProtocolError("replayed translation missed after update")
        stats.translator_misses += 1
        req.v_flag = False
        req.fam_addr = None
        pending = self._pending.get(node_page)
        if pending is not None:
            # A walk for this page is already in flight; wait for it.
            stats.translator_pended += 1
            pending.append(req)
            local.request(t, False, set_addr)
            return
        self._pending[node_page] = []
        local.request(t, False, set_addr, self._dispatch_miss, req)

    def _hit_after_stall(self, t, req: DemandAccess):
        self.oml.fill(req, req.fam_addr >> PAGE_SHIFT, req.node_addr >> PAGE_SHIFT)
        self._stu.handle_deact(t, req)

    def _dispatch_miss(self, t, req: DemandAccess):
        if req.audit is not None:
            req.audit.append(("miss_forwarded", t))
        if req.expects_response:
            # Reserve the response slot now; the mapping fills it later.
            self.oml.acquire(t, req, lambda t2, r=req: self._stu.handle_deact(t2, r))
        else:
            self._stu.handle_deact(t, req)

    # -- updates -------------------------------------------------------------
    def _install(self, node_page: int, fam_page: int):
        set_idx = node_page % self.sets
        ways = self._sets.get(set_idx)
        if ways is None:
            self._sets[set_idx] = [[node_page, fam_page]]
            return
        for way in ways:
            if way[0] == node_page:
                way[1] = fam_page
                return
        if len(ways) < TC_WAYS:
            ways.append([node_page, fam_page])
        else:
            ways[self._rng.randrange(TC_WAYS)] = [node_page, fam_page]

    def handle_mapping_response(self, t, node_page: int, fam_page, first_req=None):
        """Install a walked mapping and replay the requests parked on it.

        ``fam_page`` of None signals a failed walk (nothing to back the
        page); parked requests are then denied instead of replayed.
        """
        self.stats.fabric_messages += 1  # mapping response message
        pending = self._pending.pop(node_page, ())
        if fam_page is None:
            for req in pending:
                self.oml.release_if_held(t, req)
                self.sim.count_denial(self.node, DENY_UNALLOCATED)
                self.sim.finish_request(t, req, DENY_UNALLOCATED)
            return
        if first_req is not None and first_req.expects_response:
            self.oml.fill(first_req, fam_page, node_page)
        self._install(node_page, fam_page)
        # Read-modify-write of the 64-byte set in local DRAM.
        stats = self.stats
        stats.local_reads_translator += 1
        set_addr = self.base_addr + (node_page % self.sets) * 64
        self.sim.local[self.node].request(t, False, set_addr, self._rmw_write, set_addr)
        for req in pending:
            self.handle_request(t, req, replay=True)

    def _rmw_write(self, t, set_addr):
        self.stats.local_writes_translator += 1
        self.sim.local[self.node].request(t, True, set_addr)

    # -- responses -------------------------------------------------------------
    def deliver_response(self, t, req: DemandAccess):
        """Re-address a fabric response into node space and hand it to the core."""
        self.oml.release(t, req)
        self.sim.finish_request(t, req, None)
