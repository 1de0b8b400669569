"""Address spaces, page arithmetic, and access-control metadata encoding.

Three distinct 64-bit byte-address spaces flow through the simulator and
are never interchangeable:

* virtual addresses, private to a job running on a node,
* node-physical addresses, the flat space a node's OS manages, split into
  a low local-DRAM zone and a high fabric-memory zone,
* fabric-memory (FAM) addresses, the real addresses of the shared pool.

Functions here are pure and safe to call from anywhere; they validate the
ranges of their inputs so that a value from the wrong space is rejected
whenever it falls outside the target space.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

from .errors import AddressFault

PAGE_SHIFT = 12
PAGE_SIZE = 1 << PAGE_SHIFT
PAGE_OFFSET_MASK = PAGE_SIZE - 1

BLOCK_SIZE = 64  # memory access granularity in bytes

GIB = 1 << 30
SHARED_REGION_BYTES = GIB  # default granularity of shared extents
BITMAP_BYTES_PER_REGION = 8192  # 64K node bits per shared region


class Zone(enum.Enum):
    LOCAL = "local"
    FAM = "fam"


class AccessKind(enum.IntEnum):
    """Access types, ordered so the permission check is one comparison."""

    READ = 1
    WRITE = 2
    EXECUTE = 3


# Permission code points (low 2 bits of an ACM entry): a monotone ladder,
# so kind k is allowed iff perm >= k.
PERM_NONE = 0
PERM_R = 1
PERM_RW = 2
PERM_RWX = 3


class AcmStatus(enum.IntEnum):
    UNALLOCATED = 0
    OWNED = 1
    SHARED = 2


class AcmDecoded(NamedTuple):
    status: AcmStatus
    owner: int  # node id; meaningless unless status is OWNED
    perm: int


def shared_marker(node_id_bits: int) -> int:
    """All-ones owner field, reserved to mark a shared page."""
    return (1 << node_id_bits) - 1


def decode_acm(raw: int, acm_bits: int = 16, node_id_bits: int | None = None) -> AcmDecoded:
    """Decode one access-control metadata entry.

    Layout: low 2 bits are the permission ladder, the next ``node_id_bits``
    bits are the owner field. An all-ones owner field marks a shared page.
    Permission 0 means unallocated regardless of the owner bits.
    """
    if node_id_bits is None:
        node_id_bits = acm_bits - 2
    perm = raw & 0x3
    if perm == PERM_NONE:
        return AcmDecoded(AcmStatus.UNALLOCATED, 0, 0)
    owner = (raw >> 2) & shared_marker(node_id_bits)
    if owner == shared_marker(node_id_bits):
        return AcmDecoded(AcmStatus.SHARED, 0, perm)
    return AcmDecoded(AcmStatus.OWNED, owner, perm)


def encode_acm(decoded: AcmDecoded, acm_bits: int = 16, node_id_bits: int | None = None) -> int:
    """Inverse of :func:`decode_acm` for well-formed entries."""
    if node_id_bits is None:
        node_id_bits = acm_bits - 2
    if decoded.status is AcmStatus.UNALLOCATED:
        return 0
    if decoded.status is AcmStatus.SHARED:
        return (shared_marker(node_id_bits) << 2) | decoded.perm
    return (decoded.owner << 2) | decoded.perm


def encode_owned(node: int, perm: int) -> int:
    return (node << 2) | perm


def encode_shared(perm: int, node_id_bits: int) -> int:
    return (shared_marker(node_id_bits) << 2) | perm


def perm_allows(perm: int, kind: AccessKind) -> bool:
    return perm >= int(kind)


def decompose_node_address(addr: int, local_size: int, fam_view_size: int):
    """Split a node-physical address into (zone, page number, page offset).

    Raises :class:`AddressFault` for addresses beyond the node's configured
    view; callers model that as a faulting request, not a crash.
    """
    if addr < 0 or addr >= local_size + fam_view_size:
        raise AddressFault(
            f"node address {addr:#x} outside view of {local_size + fam_view_size:#x} bytes"
        )
    zone = Zone.LOCAL if addr < local_size else Zone.FAM
    return zone, addr >> PAGE_SHIFT, addr & PAGE_OFFSET_MASK


def acm_pages_per_block(acm_bits: int = 16) -> int:
    """Number of 4KB pages whose metadata shares one 64-byte block."""
    return (BLOCK_SIZE * 8) // acm_bits


def acm_block_address(mt_base: int, x: int, acm_bits: int = 16) -> int:
    """Byte address of the 64-byte metadata block covering FAM address ``x``.

    The metadata region holds one entry per 4KB page, packed so that one
    block covers 32 consecutive pages at the default 16-bit entry width.
    """
    per_block = acm_pages_per_block(acm_bits)
    return mt_base + ((x >> PAGE_SHIFT) // per_block) * BLOCK_SIZE


def acm_entry_offset(x: int, acm_bits: int = 16) -> int:
    """Byte offset of FAM address ``x``'s entry inside its metadata block."""
    per_block = acm_pages_per_block(acm_bits)
    return ((x >> PAGE_SHIFT) % per_block) * (acm_bits // 8)


class BitmapProbe(NamedTuple):
    block_addr: int
    byte_in_block: int
    bit_index: int


def bitmap_probe(
    bitmap_base: int, x: int, node: int, region_bytes: int = SHARED_REGION_BYTES
) -> BitmapProbe:
    """Locate the membership bit for ``node`` in the shared-region bitmap.

    Each region of ``region_bytes`` has an 8KB bitmap (one bit per node id);
    the probe returns the 64-byte block containing the bit plus the byte and
    bit offsets within it.
    """
    if node < 0 or node >= BITMAP_BYTES_PER_REGION * 8:
        raise AddressFault(f"node id {node} outside bitmap range")
    region = x // region_bytes
    byte_addr = bitmap_base + region * BITMAP_BYTES_PER_REGION + node // 8
    return BitmapProbe(byte_addr & ~(BLOCK_SIZE - 1), byte_addr % BLOCK_SIZE, node % 8)


def _round_up_page(n: int) -> int:
    return (n + PAGE_SIZE - 1) & ~PAGE_OFFSET_MASK


@dataclass(frozen=True)
class RegionLayout:
    """Placement of the metadata regions within one FAM pool.

    The pool starts with the access-control metadata region, followed by the
    shared-region bitmaps; everything after that is allocatable. The three
    parts partition the pool with no overlap.
    """

    pool_base: int
    capacity: int
    acm_bits: int = 16
    region_bytes: int = SHARED_REGION_BYTES

    @property
    def mt_base(self) -> int:
        return self.pool_base

    @cached_property
    def acm_region_bytes(self) -> int:
        return _round_up_page((self.capacity // PAGE_SIZE) * (self.acm_bits // 8))

    @cached_property
    def bitmap_base(self) -> int:
        return self.pool_base + self.acm_region_bytes

    @cached_property
    def bitmap_region_bytes(self) -> int:
        regions = -(-self.capacity // self.region_bytes)
        return _round_up_page(regions * BITMAP_BYTES_PER_REGION)

    @cached_property
    def alloc_base(self) -> int:
        return self.bitmap_base + self.bitmap_region_bytes

    @cached_property
    def first_alloc_page(self) -> int:
        return self.alloc_base >> PAGE_SHIFT

    @cached_property
    def end(self) -> int:
        return self.pool_base + self.capacity

    @cached_property
    def total_pages(self) -> int:
        return self.capacity >> PAGE_SHIFT

    def in_metadata(self, fam_addr: int) -> bool:
        return self.pool_base <= fam_addr < self.alloc_base

    def acm_block_of(self, fam_addr: int) -> int:
        return acm_block_address(self.mt_base, fam_addr - self.pool_base, self.acm_bits)

    def bitmap_probe_of(self, fam_addr: int, node: int) -> BitmapProbe:
        return bitmap_probe(self.bitmap_base, fam_addr - self.pool_base, node, self.region_bytes)
