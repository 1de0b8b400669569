"""System-level memory broker: page allocation, metadata, shared regions.

The broker plays the role of the centralized manager node: it hands out
node-physical and fabric-memory pages on first touch, builds both page
tables, initializes access-control metadata, and owns the shared-region
bitmaps. All decisions are deterministic functions of the configuration
seed and the per-node allocation history, so two runs (or a run and its
functional reference) that touch pages in the same per-node order get
identical placements.

Fabric-page placement inside a node's partition is deliberately scattered
(a seeded multiplicative permutation of the partition) rather than
sequential: pages that are contiguous in fabric memory then almost never
belong to the same job, which is the allocation behavior of a pool shared
by many tenants.
"""

from __future__ import annotations

import heapq
import math
from array import array
from dataclasses import dataclass, field

from .addressing import (
    PAGE_SHIFT,
    RegionLayout,
    encode_owned,
    encode_shared,
    PERM_RWX,
)
from .config import ExperimentConfig
from .errors import AddressFault, BrokerError, ConfigError, OutOfMemory
from .pagetable import Location, RadixPageTable

_ACM_TYPECODE = {8: "B", 16: "H", 32: "I"}
_BITMAP_BYTES = 8192


def _dither_hit(count: int, fraction: float) -> bool:
    """True when allocation ``count`` (1-based) falls on the fraction grid.

    With fraction 0.2 this routes every 5th allocation, giving the exact
    ratio at any scale instead of a probabilistic approximation.
    """
    return math.floor(count * fraction) > math.floor((count - 1) * fraction)


def _scatter_stride(size: int, seed: int) -> int:
    """Pick a stride defining a full-cycle permutation i -> i*stride % size.

    Both the stride and its inverse are kept away from the ends of the
    range so neither fabric-page neighbors nor allocation-order neighbors
    stay adjacent.
    """
    if size <= 4:
        return 1
    lo = max(2, size // 16)
    stride = (seed * 2654435761 + 0x9E3779B9) % size
    for _ in range(size):
        stride = stride % size
        if stride < 2:
            stride += lo
            continue
        if math.gcd(stride, size) == 1:
            inv = pow(stride, -1, size)
            if lo < stride < size - lo and lo < inv < size - lo:
                return stride
        stride += 1
    return 1  # tiny or degenerate sizes


class _Partition:
    """One node's slice of one pool's allocatable pages, scattered order."""

    __slots__ = ("start", "size", "stride", "next_idx", "free")

    def __init__(self, start: int, size: int, seed: int):
        self.start = start
        self.size = size
        self.stride = _scatter_stride(size, seed)
        self.next_idx = 0
        self.free = []  # released pages, reused first-fit

    def alloc(self):
        if self.free:
            return heapq.heappop(self.free)
        if self.next_idx >= self.size:
            return None
        page = self.start + (self.next_idx * self.stride) % self.size
        self.next_idx += 1
        return page

    def release(self, page: int):
        heapq.heappush(self.free, page)


class _LocalAllocator:
    __slots__ = ("limit", "frontier", "free")

    def __init__(self, limit_pages: int):
        self.limit = limit_pages
        self.frontier = 0
        self.free = []

    def alloc(self):
        if self.free:
            return heapq.heappop(self.free)
        if self.frontier >= self.limit:
            return None
        page = self.frontier
        self.frontier += 1
        return page


@dataclass
class SharedRegion:
    index: int
    pool: int
    base_addr: int  # global fabric byte address, region-aligned
    pages: int
    perm: int
    members: frozenset
    windows: dict = field(default_factory=dict)  # node -> vpage base

    @property
    def base_page(self) -> int:
        return self.base_addr >> PAGE_SHIFT


class _NodeState:
    __slots__ = (
        "data_count",
        "pt_count",
        "local",
        "famzone_next",
        "partitions",
        "pool_rr",
        "node_table",
        "fam_table",
        "windows",
    )

    def __init__(self):
        self.data_count = 0
        self.pt_count = 0
        self.local = None
        self.famzone_next = 0
        self.partitions = []
        self.pool_rr = 0
        self.node_table = None
        self.fam_table = None
        self.windows = []  # (vpage_base, vpage_end, region)


class Broker:
    """Centralized allocator and metadata authority for one simulation."""

    def __init__(self, cfg: ExperimentConfig, on_acm_write=None):
        self.cfg = cfg
        self.on_acm_write = on_acm_write  # callable(node, block_addr) or None
        self.pools = cfg.nodes
        self.node_id_bits = cfg.effective_node_id_bits
        self.local_pages = cfg.local_bytes >> PAGE_SHIFT
        self.fam_view_pages = cfg.fam_capacity >> PAGE_SHIFT
        self.layouts = [
            RegionLayout(
                pool_base=p * cfg.fam_capacity,
                capacity=cfg.fam_capacity,
                acm_bits=cfg.acm_bits,
                region_bytes=cfg.shared_region_bytes,
            )
            for p in range(self.pools)
        ]
        code = _ACM_TYPECODE[cfg.acm_bits]
        self.acm = [array(code, (0,)) * layout.total_pages for layout in self.layouts]
        regions_per_pool = cfg.fam_capacity // cfg.shared_region_bytes
        self.bitmaps = [
            bytearray(max(regions_per_pool, 1) * _BITMAP_BYTES) for _ in range(self.pools)
        ]
        self.shared_regions: list[SharedRegion] = []
        self._reserved_extents = self._reserve_shared_extents(regions_per_pool)
        self.counters = {
            "alloc_local_pages": 0,
            "alloc_fam_pages": 0,
            "alloc_fallbacks": 0,
            "alloc_pt_pages": 0,
        }
        self.allocation_log = []
        self.log_allocations = False
        self._nodes = [self._build_node(n) for n in range(cfg.nodes)]
        # Table roots allocate pages through the callbacks above, so they
        # are created only after every node's allocators exist.
        for node, st in enumerate(self._nodes):
            st.node_table = RadixPageTable(lambda n=node: self._alloc_node_pt_page(n))
            if cfg.scheme != "efam":
                st.fam_table = RadixPageTable(lambda n=node: self._alloc_fam_pt_page(n))

    # -- construction ---------------------------------------------------
    def _reserve_shared_extents(self, regions_per_pool: int):
        cfg = self.cfg
        extents = []
        if cfg.shared_region_count == 0:
            self._reserved_tail_pages = [0] * self.pools
            return extents
        if regions_per_pool == 0:
            raise ConfigError(
                ["shared_region_count: no region-aligned extent fits in fam_capacity"]
            )
        region_pages = cfg.shared_region_bytes >> PAGE_SHIFT
        per_pool = [0] * self.pools
        for k in range(cfg.shared_region_count):
            pool = k % self.pools
            idx_from_end = per_pool[pool]
            per_pool[pool] += 1
            region_idx = regions_per_pool - 1 - idx_from_end
            offset = region_idx * cfg.shared_region_bytes
            layout = self.layouts[pool]
            if offset < layout.alloc_base - layout.pool_base:
                raise ConfigError(
                    ["shared_region_count: reserved extents collide with metadata region"]
                )
            extents.append((pool, layout.pool_base + offset))
        self._reserved_tail_pages = [n * region_pages for n in per_pool]
        return extents

    def _build_node(self, node: int) -> _NodeState:
        cfg = self.cfg
        st = _NodeState()
        reserved_local = cfg.translation_cache_bytes >> PAGE_SHIFT
        st.local = _LocalAllocator(self.local_pages - reserved_local)
        st.famzone_next = self.local_pages
        for pool, layout in enumerate(self.layouts):
            span_start = layout.first_alloc_page + (layout.pool_base >> PAGE_SHIFT)
            span_end = (layout.end >> PAGE_SHIFT) - self._reserved_tail_pages[pool]
            span = span_end - span_start
            chunk = span // cfg.nodes
            start = span_start + node * chunk
            seed = (cfg.seed * 1000003 + node * 7919 + pool * 104729) & 0x7FFFFFFF
            st.partitions.append(_Partition(start, chunk, seed))
        return st

    # -- page-table page placement ---------------------------------------
    def _alloc_node_pt_page(self, node: int) -> Location:
        st = self._nodes[node]
        split = self.cfg.scheme == "efam" or self.cfg.node_pt_follows_data
        self.counters["alloc_pt_pages"] += 1
        if split:
            st.pt_count += 1
            if not _dither_hit(st.pt_count, self.cfg.local_fraction):
                page = self._partition_alloc(node)
                if page is not None:
                    return Location(True, page << PAGE_SHIFT)
        page = st.local.alloc()
        if page is None:
            fam_page = self._partition_alloc(node)
            if fam_page is None:
                raise OutOfMemory(f"node {node}: no pages left for page tables")
            self.counters["alloc_fallbacks"] += 1
            return Location(True, fam_page << PAGE_SHIFT)
        return Location(False, page << PAGE_SHIFT)

    def _alloc_fam_pt_page(self, node: int) -> Location:
        page = self._partition_alloc(node)
        if page is None:
            raise OutOfMemory(f"node {node}: fabric partition exhausted (page tables)")
        self.counters["alloc_pt_pages"] += 1
        return Location(True, page << PAGE_SHIFT)

    def _partition_alloc(self, node: int):
        """Next scattered fabric page for ``node``, striping across pools."""
        st = self._nodes[node]
        for _ in range(self.pools):
            part = st.partitions[st.pool_rr % self.pools]
            st.pool_rr += 1
            page = part.alloc()
            if page is not None:
                return page
        return None

    # -- public allocation API -------------------------------------------
    def node_table(self, node: int) -> RadixPageTable:
        return self._nodes[node].node_table

    def fam_table(self, node: int) -> RadixPageTable:
        return self._nodes[node].fam_table

    def ensure_mapped(self, node: int, vpage: int):
        """Return (pte_value, faulted): allocate on first touch."""
        value = self._nodes[node].node_table.lookup(vpage)
        if value is not None:
            return value, False
        return self.allocate_page(node, vpage), True

    def _shared_backing(self, node: int, vpage: int):
        for base, end, region in self._nodes[node].windows:
            if base <= vpage < end:
                return region.base_page + (vpage - base)
        return None

    def allocate_page(self, node: int, vpage: int):
        """First-touch allocation of ``vpage``; returns the new PTE value.

        Every fifth data allocation (at the default local fraction) is
        served from local DRAM; the rest come from the node's fabric
        partition, get a table entry, and have their metadata written as
        owned read/write/execute (one fabric write).
        """
        st = self._nodes[node]
        existing = st.node_table.lookup(vpage)
        if existing is not None:
            return existing

        shared_page = self._shared_backing(node, vpage)
        if shared_page is not None:
            value = self._famzone_value(node, shared_page, acm=False)
            st.node_table.insert(vpage, value)
            self._log(node, vpage, value, "shared")
            return value

        st.data_count += 1
        want_local = _dither_hit(st.data_count, self.cfg.local_fraction)
        value = None
        if want_local:
            page = st.local.alloc()
            if page is not None:
                value = page if self.cfg.scheme != "efam" else Location(False, page)
                self.counters["alloc_local_pages"] += 1
            else:
                self.counters["alloc_fallbacks"] += 1
        if value is None:
            fam_page = self._partition_alloc(node)
            if fam_page is None:
                if want_local:
                    raise OutOfMemory(f"node {node}: both zones exhausted")
                page = st.local.alloc()
                if page is None:
                    raise OutOfMemory(f"node {node}: both zones exhausted")
                self.counters["alloc_fallbacks"] += 1
                self.counters["alloc_local_pages"] += 1
                value = page if self.cfg.scheme != "efam" else Location(False, page)
            else:
                value = self._famzone_value(node, fam_page, acm=True)
                self.counters["alloc_fam_pages"] += 1
        st.node_table.insert(vpage, value)
        self._log(node, vpage, value, "data")
        return value

    def _famzone_value(self, node: int, fam_page: int, acm: bool):
        """Bind a fabric page into the node's address space."""
        if acm and self.cfg.scheme != "efam":
            # Exposed mode has no system-level vetting, hence no metadata.
            self._write_acm(node, fam_page, encode_owned(node, PERM_RWX))
        if self.cfg.scheme == "efam":
            return Location(True, fam_page)
        st = self._nodes[node]
        node_page = st.famzone_next
        if node_page >= self.local_pages + self.fam_view_pages:
            raise OutOfMemory(f"node {node}: fabric view exhausted")
        st.famzone_next += 1
        st.fam_table.insert(node_page, fam_page)
        return node_page

    def allocate_fam_backing(self, node: int, node_page: int):
        """On-demand system-level mapping for a walked-but-unmapped page.

        Used when the translation walk finds no entry (a node touching
        fabric addresses its OS never faulted in). Returns the fabric page,
        or None when the partition is exhausted; the caller treats None as
        an access fault rather than ending the run.
        """
        if self.cfg.scheme == "efam":
            raise BrokerError("no system-level table under efam")
        st = self._nodes[node]
        existing = st.fam_table.lookup(node_page)
        if existing is not None:
            return existing
        fam_page = self._partition_alloc(node)
        if fam_page is None:
            return None
        self._write_acm(node, fam_page, encode_owned(node, PERM_RWX))
        st.fam_table.insert(node_page, fam_page)
        self.counters["alloc_fam_pages"] += 1
        self._log(node, node_page, fam_page, "on-demand")
        return fam_page

    def release_page(self, node: int, node_page: int):
        """Return a private fabric page to the free list and clear metadata.

        Stale cached translations are deliberately left in place; later use
        of one is caught by verification against the zeroed metadata.
        """
        st = self._nodes[node]
        fam_page = st.fam_table.lookup(node_page)
        if fam_page is None:
            raise BrokerError(f"node {node}: release of unowned page {node_page:#x}")
        marker = (1 << self.node_id_bits) - 1
        raw = self.acm_raw(fam_page << PAGE_SHIFT)
        if raw & 0x3 and ((raw >> 2) & marker) == marker:
            raise BrokerError(f"node {node}: cannot release shared page {fam_page:#x}")
        self._set_acm_raw(fam_page, 0)
        st.fam_table.remove(node_page)
        for part in st.partitions:
            if part.start <= fam_page < part.start + part.size:
                part.release(fam_page)
                break
        else:
            raise BrokerError(f"page {fam_page:#x} not in node {node}'s partitions")

    # -- shared regions ----------------------------------------------------
    def create_shared_region(self, members, perm: int) -> SharedRegion:
        """Mark one reserved region-aligned extent as shared by ``members``."""
        idx = len(self.shared_regions)
        if idx >= len(self._reserved_extents):
            raise BrokerError("no reserved shared extent left (raise shared_region_count)")
        members = frozenset(int(m) for m in members)
        max_node = (1 << self.node_id_bits) - 1
        for m in members:
            if not 0 <= m < max_node:
                raise BrokerError(f"node id {m} not representable in metadata")
        pool, base_addr = self._reserved_extents[idx]
        layout = self.layouts[pool]
        pages = self.cfg.shared_region_bytes >> PAGE_SHIFT
        start = (base_addr - layout.pool_base) >> PAGE_SHIFT
        marker = encode_shared(perm, self.node_id_bits)
        self.acm[pool][start : start + pages] = array(self.acm[pool].typecode, (marker,)) * pages
        region_idx = (base_addr - layout.pool_base) // self.cfg.shared_region_bytes
        for m in members:
            self.bitmaps[pool][region_idx * _BITMAP_BYTES + m // 8] |= 1 << (m % 8)
        region = SharedRegion(idx, pool, base_addr, pages, perm, members)
        self.shared_regions.append(region)
        return region

    def attach_shared_window(self, region: SharedRegion, node: int, vpage_base: int):
        """Map the region into a node's virtual space, lazily on first touch."""
        st = self._nodes[node]
        end = vpage_base + region.pages
        for base, stop, _ in st.windows:
            if base < end and vpage_base < stop:
                raise BrokerError(f"node {node}: overlapping shared window at {vpage_base:#x}")
        st.windows.append((vpage_base, end, region))
        region.windows[node] = vpage_base

    # -- metadata access (authoritative simulated memory) ------------------
    def layout_for(self, fam_addr: int):
        pool = fam_addr // self.cfg.fam_capacity
        if not 0 <= pool < self.pools:
            raise AddressFault(f"fabric address {fam_addr:#x} outside pools")
        return pool, self.layouts[pool]

    def in_metadata(self, fam_addr: int) -> bool:
        pool, layout = self.layout_for(fam_addr)
        return layout.in_metadata(fam_addr)

    def acm_raw(self, fam_addr: int) -> int:
        pool, layout = self.layout_for(fam_addr)
        return self.acm[pool][(fam_addr - layout.pool_base) >> PAGE_SHIFT]

    def _set_acm_raw(self, fam_page: int, raw: int):
        pool, layout = self.layout_for(fam_page << PAGE_SHIFT)
        self.acm[pool][fam_page - (layout.pool_base >> PAGE_SHIFT)] = raw

    def poke_acm(self, fam_page: int, raw: int):
        """Test hook: directly set one metadata entry."""
        self._set_acm_raw(fam_page, raw)

    def _write_acm(self, node: int, fam_page: int, raw: int):
        self._set_acm_raw(fam_page, raw)
        if self.on_acm_write is not None:
            pool, layout = self.layout_for(fam_page << PAGE_SHIFT)
            self.on_acm_write(node, layout.acm_block_of(fam_page << PAGE_SHIFT))

    def bitmap_bit(self, fam_addr: int, node: int) -> bool:
        pool, layout = self.layout_for(fam_addr)
        region_idx = (fam_addr - layout.pool_base) // self.cfg.shared_region_bytes
        return bool(self.bitmaps[pool][region_idx * _BITMAP_BYTES + node // 8] >> (node % 8) & 1)

    # -- debugging ----------------------------------------------------------
    def _log(self, node: int, key: int, value, purpose: str):
        if self.log_allocations:
            self.allocation_log.append((len(self.allocation_log), node, key, value, purpose))

    def allocation_log_rows(self):
        yield ("order", "node", "page", "value", "purpose")
        for row in self.allocation_log:
            yield row
