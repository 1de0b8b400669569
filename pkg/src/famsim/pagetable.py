"""Four-level radix page tables with simulated table-page placement.

Both the per-node virtual-to-node table and the per-node fabric-side table
use the same structure: 9 index bits per level over a 12-bit page offset,
so a full walk touches exactly four entries (one per level). Table pages
occupy simulated memory; each walk step therefore has a concrete byte
address, which is what the timing model charges.
"""

from __future__ import annotations

from typing import Callable, NamedTuple

LEVELS = 4
BITS_PER_LEVEL = 9
ENTRIES_PER_NODE = 1 << BITS_PER_LEVEL
ENTRY_BYTES = 8

# Shift of each level's index field within the virtual page number,
# root level first.
LEVEL_SHIFTS = tuple(BITS_PER_LEVEL * (LEVELS - 1 - i) for i in range(LEVELS))


class Location(NamedTuple):
    """Physical placement of one table page."""

    is_fam: bool
    base_addr: int


class WalkStep(NamedTuple):
    level: int  # 0 = root
    entry_addr: int
    is_fam: bool


class _TableNode:
    __slots__ = ("location", "children")

    def __init__(self, location: Location):
        self.location = location
        self.children = {}


class RadixPageTable:
    """Sparse 4-level table mapping page numbers to scheme-defined values.

    ``page_alloc`` is called once per new table page and must return the
    :class:`Location` backing it; the same callable decides local-vs-remote
    placement policy.
    """

    def __init__(self, page_alloc: Callable[[], Location]):
        self._page_alloc = page_alloc
        self._root = _TableNode(page_alloc())
        self._flat = {}
        self._path_cache = {}

    @property
    def root_location(self) -> Location:
        return self._root.location

    def lookup(self, page: int):
        """Authoritative mapping lookup, no walk modeling."""
        return self._flat.get(page)

    def __len__(self):
        return len(self._flat)

    def items(self):
        return self._flat.items()

    def insert(self, page: int, value) -> None:
        node = self._root
        for shift in LEVEL_SHIFTS[:-1]:
            idx = (page >> shift) & (ENTRIES_PER_NODE - 1)
            child = node.children.get(idx)
            if child is None:
                child = _TableNode(self._page_alloc())
                node.children[idx] = child
            node = child
        node.children[(page >> LEVEL_SHIFTS[-1]) & (ENTRIES_PER_NODE - 1)] = value
        self._flat[page] = value

    def remove(self, page: int) -> None:
        if page not in self._flat:
            raise KeyError(page)
        del self._flat[page]
        self._path_cache.pop(page, None)
        node = self._root
        for shift in LEVEL_SHIFTS[:-1]:
            node = node.children[(page >> shift) & (ENTRIES_PER_NODE - 1)]
        del node.children[(page >> LEVEL_SHIFTS[-1]) & (ENTRIES_PER_NODE - 1)]

    def walk_path(self, page: int) -> tuple[WalkStep, ...]:
        """Entry addresses a full walk of ``page`` reads, root level first.

        The page must be mapped; walkers consult their caches to decide how
        many of these steps they actually issue. Paths are cached: table
        pages never move once created.
        """
        cached = self._path_cache.get(page)
        if cached is not None:
            return cached
        steps = []
        node = self._root
        for level, shift in enumerate(LEVEL_SHIFTS):
            idx = (page >> shift) & (ENTRIES_PER_NODE - 1)
            loc = node.location
            steps.append(WalkStep(level, loc.base_addr + idx * ENTRY_BYTES, loc.is_fam))
            if level < LEVELS - 1:
                node = node.children[idx]
        steps = tuple(steps)
        self._path_cache[page] = steps
        return steps

    def intermediate_prefixes(self, page: int):
        """(level, prefix) keys for the three intermediate levels of ``page``.

        Level i's entry is identified by the page-number prefix above that
        level's index field, which is what walker caches key on.
        """
        return tuple((level, page >> LEVEL_SHIFTS[level]) for level in range(LEVELS - 1))
