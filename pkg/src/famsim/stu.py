"""System translation unit: access vetting and fabric-table walks.

One STU sits at each node's first router. Under the indirect scheme it is
the whole translation path: a combined cache maps node pages to fabric
pages with their access metadata, and misses walk the fabric-resident
table (four serial reads). Under the decoupled schemes the node already
supplies fabric addresses for verified-flag requests, and the STU only
checks access-control metadata, fetching the 64-byte metadata block on a
cache miss; unverified requests still walk here on the node's behalf.

Cache organizations (ways per set fixed by configuration):

* combined (indirect): tagged by node page, one entry per way;
* way-contiguous: tagged by an aligned group of fabric pages, one way
  caches the whole group's metadata (4 pages at 16-bit entries);
* non-contiguous: each way is split into independent (tag, metadata)
  sub-ways, so unrelated fabric pages can share a way.

Cached entries record presence (plus the fabric page for the combined
organization); permission checks always decode the current authoritative
metadata, which models a metadata cache kept coherent with the memory it
mirrors. A denial is terminal: the request is dropped and a fault is
delivered to the node.
"""

from __future__ import annotations

from collections import deque

from .addressing import PAGE_SHIFT
from .fammem import RequestClass
from .request import (
    DENY_INSUFFICIENT_PERM,
    DENY_NOT_IN_BITMAP,
    DENY_NOT_OWNER,
    DENY_UNALLOCATED,
    DemandAccess,
)
from .translator import OutstandingMappings

MASK_44 = (1 << 44) - 1


class SystemTranslationUnit:
    __slots__ = (
        "sim",
        "node",
        "scheme",
        "sets",
        "slots",
        "group_pages",
        "_cache",
        "_walks",
        "_walk_queue",
        "max_walks",
        "oml",
        "stats",
        "broker",
        "_owner_mask",
        "_meta_end_rel",
        "_pool_bytes",
        "_contig",
        "_pages_per_block",
    )

    def __init__(self, sim, node: int):
        cfg = sim.cfg
        self.sim = sim
        self.node = node
        self.scheme = cfg.scheme
        self.sets = cfg.stu_sets
        self.group_pages = cfg.deact_w_group_pages
        self.slots = cfg.stu_ways * (cfg.pairs_per_way if cfg.scheme == "deact-n" else 1)
        self._cache = [dict() for _ in range(self.sets)]
        self._walks = {}  # node page -> requests attached to the walk
        self._walk_queue = deque()
        self.max_walks = cfg.stu_max_walks
        self.oml = OutstandingMappings(cfg.oml_entries) if cfg.scheme == "ifam" else None
        self.stats = sim.stats.per_node[node]
        self.broker = sim.broker
        self._owner_mask = (1 << cfg.effective_node_id_bits) - 1
        layout = sim.broker.layouts[0]
        self._meta_end_rel = layout.alloc_base - layout.pool_base
        self._pool_bytes = cfg.fam_capacity
        self._contig = cfg.scheme == "deact-w"
        self._pages_per_block = (64 * 8) // cfg.acm_bits

    # ------------------------------------------------------------------
    # cache primitives (per-set dicts in LRU order)
    # ------------------------------------------------------------------
    def _lookup(self, set_idx, tag):
        d = self._cache[set_idx]
        v = d.get(tag)
        if v is not None:
            del d[tag]
            d[tag] = v
        return v

    def _insert(self, set_idx, tag, value):
        d = self._cache[set_idx]
        if tag in d:
            del d[tag]
        elif len(d) >= self.slots:
            del d[next(iter(d))]
        d[tag] = value

    # ------------------------------------------------------------------
    # decoupled schemes
    # ------------------------------------------------------------------
    def handle_deact(self, t, req: DemandAccess):
        if req.v_flag:
            self._verify(t, req)
        else:
            self._enter_walk(t, req)

    def _verify(self, t, req: DemandAccess, then=None):
        """Check metadata for a translated request, fetching it on a miss."""
        if req.audit is not None:
            req.audit.append(("verify", t))
        fam_addr = req.fam_addr
        pool, rel = divmod(fam_addr, self._pool_bytes)
        if fam_addr < 0 or pool >= len(self.broker.acm) or rel < self._meta_end_rel:
            # Out of range, or inside the metadata regions nodes may never touch.
            self._deny(t, req, DENY_UNALLOCATED, then)
            return
        fam_page = fam_addr >> PAGE_SHIFT
        if self._contig:
            tag = fam_page // self.group_pages
        else:
            tag = fam_page & MASK_44
        set_idx = tag % self.sets
        d = self._cache[set_idx]
        if tag in d:
            # Refresh recency, then decide; owned pages resolve inline.
            del d[tag]
            d[tag] = True
            self.stats.stu_acm_hits += 1
            raw = self.broker.acm[pool][rel >> PAGE_SHIFT]
            perm = raw & 0x3
            if perm:
                owner = (raw >> 2) & self._owner_mask
                if owner != self._owner_mask:
                    if owner != req.node:
                        self._deny(t, req, DENY_NOT_OWNER, then)
                    elif perm < req.kind:
                        self._deny(t, req, DENY_INSUFFICIENT_PERM, then)
                    else:
                        self._allow(t, req, then)
                    return
                self._check_shared(t, req, pool, perm, then)
            else:
                self._deny(t, req, DENY_UNALLOCATED, then)
        else:
            self.stats.stu_acm_misses += 1
            block = pool * self._pool_bytes + ((rel >> PAGE_SHIFT) // self._pages_per_block) * 64
            self.sim.fam_access(
                t, self.node, block, False, RequestClass.AT_ACM,
                self._acm_filled, (req, set_idx, tag, then),
            )

    def _acm_filled(self, t, a):
        req, set_idx, tag, then = a
        self._insert(set_idx, tag, True)
        self._check(t, req, then)

    def _check(self, t, req: DemandAccess, then):
        """Decode current metadata and decide; shared pages read the bitmap."""
        fam_addr = req.fam_addr
        pool, rel = divmod(fam_addr, self._pool_bytes)
        raw = self.broker.acm[pool][rel >> PAGE_SHIFT]
        perm = raw & 0x3
        if perm == 0:
            self._deny(t, req, DENY_UNALLOCATED, then)
            return
        owner = (raw >> 2) & self._owner_mask
        if owner != self._owner_mask:
            if owner != req.node:
                self._deny(t, req, DENY_NOT_OWNER, then)
            elif perm < req.kind:
                self._deny(t, req, DENY_INSUFFICIENT_PERM, then)
            else:
                self._allow(t, req, then)
            return
        self._check_shared(t, req, pool, perm, then)

    def _check_shared(self, t, req: DemandAccess, pool, perm, then):
        # Shared page: membership lives in the region's 8KB bitmap.
        self.stats.bitmap_checks += 1
        probe = self.broker.layouts[pool].bitmap_probe_of(req.fam_addr, req.node)
        self.sim.fam_access(
            t, self.node, probe.block_addr, False, RequestClass.AT_BITMAP,
            self._bitmap_checked, (req, perm, then),
        )

    def _bitmap_checked(self, t, a):
        req, perm, then = a
        if not self.broker.bitmap_bit(req.fam_addr, req.node):
            self._deny(t, req, DENY_NOT_IN_BITMAP, then)
        elif perm < req.kind:
            self._deny(t, req, DENY_INSUFFICIENT_PERM, then)
        else:
            self._allow(t, req, then)

    def _allow(self, t, req: DemandAccess, then=None):
        if req.audit is not None:
            req.audit.append(("forward", t))
        if self.oml is not None and req.expects_response:
            self.oml.acquire(t, req, lambda t2, r=req: self._forward_registered(t2, r))
        else:
            sim = self.sim
            sim.fam_access(
                t, req.node, req.fam_addr, req.is_write, RequestClass.DEMAND, sim._deliver, req
            )
        if then is not None:
            then(t)

    def _forward_registered(self, t, req: DemandAccess):
        self.oml.fill(req, req.fam_addr >> PAGE_SHIFT, req.node_addr >> PAGE_SHIFT)
        self.sim.forward_demand(t, req)

    def _deny(self, t, req: DemandAccess, reason: str, then=None):
        if req.oml is not None:
            req.oml.release_if_held(t, req)
        self.sim.count_denial(self.node, reason)
        self.sim.finish_request(t, req, reason)
        if then is not None:
            then(t)

    # ------------------------------------------------------------------
    # walks (shared by both decoupled and indirect paths)
    # ------------------------------------------------------------------
    def _enter_walk(self, t, req: DemandAccess):
        node_page = req.node_addr >> PAGE_SHIFT
        attached = self._walks.get(node_page)
        if attached is not None:
            self.stats.stu_walk_coalesced += 1
            attached.append(req)
            return
        if len(self._walks) >= self.max_walks:
            self.stats.stu_walk_stalls += 1
            self._walk_queue.append(req)
            return
        self._walks[node_page] = [req]
        self._start_walk(t, node_page)

    def _start_walk(self, t, node_page: int):
        self.stats.stu_walks += 1
        table = self.broker.fam_table(self.node)
        fam_page = table.lookup(node_page)
        if fam_page is None:
            # System table never saw this page; populate it on first touch.
            fam_page = self.broker.allocate_fam_backing(self.node, node_page)
            if fam_page is None:
                self._finish_walk(t, node_page, None)
                return
        steps = table.walk_path(node_page)
        self._walk_step(t, [steps, 0, node_page, fam_page])

    def _walk_step(self, t, st):
        steps, idx, node_page, fam_page = st
        if idx == len(steps):
            self._finish_walk(t, node_page, fam_page)
            return
        st[1] = idx + 1
        self.sim.fam_access(
            t, self.node, steps[idx].entry_addr, False, RequestClass.AT_WALK,
            self._walk_step, st,
        )

    def _finish_walk(self, t, node_page: int, fam_page):
        attached = self._walks.pop(node_page)
        if self.scheme != "ifam":
            first = attached[0]
            self.sim.translators[self.node].handle_mapping_response(
                t, node_page, fam_page, first_req=first
            )
        if fam_page is None:
            for req in attached:
                self._deny(t, req, DENY_UNALLOCATED)
            self._next_queued_walk(t)
            return
        if self.scheme == "ifam":
            # One metadata block read completes the combined fill.
            fam_addr = fam_page << PAGE_SHIFT
            pool, rel = divmod(fam_addr, self._pool_bytes)
            block = pool * self._pool_bytes + ((rel >> PAGE_SHIFT) // self._pages_per_block) * 64
            self.sim.fam_access(
                t, self.node, block, False, RequestClass.AT_ACM,
                self._ifam_filled, (node_page, fam_page, attached),
            )
        else:
            for req in attached:
                req.fam_addr = (fam_page << PAGE_SHIFT) | req.offset
            self._run_serially(t, attached, self._verify)
        self._next_queued_walk(t)

    def _next_queued_walk(self, t):
        while self._walk_queue and len(self._walks) < self.max_walks:
            req = self._walk_queue.popleft()
            node_page = req.node_addr >> PAGE_SHIFT
            attached = self._walks.get(node_page)
            if attached is not None:
                attached.append(req)
                continue
            self._walks[node_page] = [req]
            self._start_walk(t, node_page)
            return

    def _run_serially(self, t, reqs, fn):
        """Process attached requests one after another (the unit is serial)."""
        if len(reqs) == 1:
            fn(t, reqs[0])
            return

        def step(t2, idx=0):
            if idx < len(reqs):
                fn(t2, reqs[idx], then=lambda t3, i=idx: step(t3, i + 1))

        step(t)

    # ------------------------------------------------------------------
    # indirect scheme: combined translation + metadata path
    # ------------------------------------------------------------------
    def handle_ifam(self, t, req: DemandAccess):
        node_page = req.node_addr >> PAGE_SHIFT
        fam_page = self._lookup(node_page % self.sets, node_page)
        if fam_page is not None:
            self.stats.combined_hits += 1
            req.fam_addr = (fam_page << PAGE_SHIFT) | req.offset
            req.v_flag = True
            self._check_meta_range(t, req, None)
        else:
            self.stats.combined_misses += 1
            self._enter_walk(t, req)

    def _ifam_filled(self, t, a):
        node_page, fam_page, attached = a
        self._insert(node_page % self.sets, node_page, fam_page)
        for req in attached:
            req.fam_addr = (fam_page << PAGE_SHIFT) | req.offset
            req.v_flag = True
        self._run_serially(t, attached, self._check_meta_range)

    def _check_meta_range(self, t, req: DemandAccess, then=None):
        rel = req.fam_addr % self._pool_bytes
        if rel < self._meta_end_rel:
            self._deny(t, req, DENY_UNALLOCATED, then)
        else:
            self._check(t, req, then)

    def deliver_ifam(self, t, req: DemandAccess):
        """Re-address a fabric response into node space for the core."""
        self.oml.release(t, req)
        self.sim.finish_request(t, req, None)
