"""Small LRU cache structures used by TLBs, walker caches, and the STU.

Python dicts preserve insertion order, which makes them a compact LRU:
re-inserting a key moves it to the back, and ``next(iter(d))`` is the
least recently used entry. The hot paths below rely on that.
"""

from __future__ import annotations


class LruCache:
    """Fully associative LRU cache with a fixed capacity."""

    __slots__ = ("capacity", "_d")

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._d = {}

    def lookup(self, key):
        """Return the cached value and refresh recency, or None."""
        d = self._d
        v = d.get(key)
        if v is not None:
            del d[key]
            d[key] = v
        return v

    def peek(self, key):
        return self._d.get(key)

    def insert(self, key, value):
        d = self._d
        if key in d:
            del d[key]
        elif len(d) >= self.capacity:
            del d[next(iter(d))]
        d[key] = value

    def invalidate(self, key):
        self._d.pop(key, None)

    def __len__(self):
        return len(self._d)

    def __contains__(self, key):
        return key in self._d


class SetAssocLru:
    """Set-associative cache with per-set LRU replacement.

    The caller supplies the set index on every call so each user can apply
    its own indexing function; tags are compared exactly.
    """

    __slots__ = ("sets", "ways", "_sets")

    def __init__(self, sets: int, ways: int):
        if sets < 1 or ways < 1:
            raise ValueError("sets and ways must be >= 1")
        self.sets = sets
        self.ways = ways
        self._sets = [dict() for _ in range(sets)]

    def lookup(self, set_idx: int, tag):
        d = self._sets[set_idx]
        v = d.get(tag)
        if v is not None:
            del d[tag]
            d[tag] = v
        return v

    def peek(self, set_idx: int, tag):
        return self._sets[set_idx].get(tag)

    def insert(self, set_idx: int, tag, value):
        d = self._sets[set_idx]
        if tag in d:
            del d[tag]
        elif len(d) >= self.ways:
            del d[next(iter(d))]
        d[tag] = value

    def occupancy(self, set_idx: int) -> int:
        return len(self._sets[set_idx])


class TlbHierarchy:
    """Two-level TLB: small fully associative L1 over a set-associative L2.

    Not inclusive; an L1 entry was filled either from L2 or from a completed
    walk, and L1 evictions are dropped silently (the entry usually still
    lives in L2).
    """

    __slots__ = ("l1", "l2", "l2_sets")

    def __init__(self, l1_entries: int = 32, l2_entries: int = 256, l2_ways: int = 4):
        self.l1 = LruCache(l1_entries)
        self.l2_sets = max(1, l2_entries // l2_ways)
        self.l2 = SetAssocLru(self.l2_sets, l2_ways)

    def lookup(self, vpage: int):
        """Return (level, value): level 1 or 2 on a hit, (0, None) on a miss."""
        v = self.l1.lookup(vpage)
        if v is not None:
            return 1, v
        v = self.l2.lookup(vpage % self.l2_sets, vpage)
        if v is not None:
            self.l1.insert(vpage, v)
            return 2, v
        return 0, None

    def fill(self, vpage: int, value):
        """Install a completed walk's translation in both levels."""
        self.l1.insert(vpage, value)
        self.l2.insert(vpage % self.l2_sets, vpage, value)
