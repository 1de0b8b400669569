"""Run statistics: raw counters only, rates derived on demand.

Counters are kept per node and summed for the run; every reported rate is
computed from its numerator and denominator at read time, so nothing is
stored that cannot be audited. A snapshot taken at the warmup boundary
lets steady-state rates be computed as deltas.
"""

from __future__ import annotations

COUNTER_FIELDS = (
    # front end
    "retired_events",
    "denied_events",
    "dropped_out_of_range",
    "tlb_l1_hits",
    "tlb_l2_hits",
    "tlb_misses",
    "minor_faults",
    "walk_reads_local",
    "walk_reads_fam",
    # node-side translator
    "translator_hits",
    "translator_misses",
    "translator_pended",
    "translator_replays",
    "oml_stalls",
    # system translation unit
    "combined_hits",
    "combined_misses",
    "stu_acm_hits",
    "stu_acm_misses",
    "stu_walks",
    "stu_walk_coalesced",
    "stu_walk_stalls",
    "bitmap_checks",
    "denials_not_owner",
    "denials_not_in_bitmap",
    "denials_insufficient_perm",
    "denials_unallocated",
    # fabric-attached memory requests, by class
    "fam_reads_demand",
    "fam_writes_demand",
    "fam_reads_walk",
    "fam_reads_acm",
    "fam_writes_acm",
    "fam_reads_bitmap",
    # local DRAM requests
    "local_reads_demand",
    "local_writes_demand",
    "local_reads_walk",
    "local_reads_translator",
    "local_writes_translator",
    # fabric
    "fabric_messages",
)

BROKER_FIELDS = ("alloc_local_pages", "alloc_fam_pages", "alloc_fallbacks", "alloc_pt_pages")


class Counters:
    """One node's raw event counters."""

    __slots__ = COUNTER_FIELDS

    def __init__(self):
        for name in COUNTER_FIELDS:
            setattr(self, name, 0)

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in COUNTER_FIELDS}


def _rate(num, den):
    return num / den if den else None


class SimStats:
    """Aggregated results of one run."""

    def __init__(self, scheme: str, nodes: int):
        self.scheme = scheme
        self.per_node = [Counters() for _ in range(nodes)]
        self.total_ns = 0.0
        self.broker_counters = {name: 0 for name in BROKER_FIELDS}
        self._warmup_snapshot = None

    # -- totals -----------------------------------------------------------
    def totals(self) -> dict:
        out = {name: 0 for name in COUNTER_FIELDS}
        for node in self.per_node:
            for name in COUNTER_FIELDS:
                out[name] += getattr(node, name)
        out.update(self.broker_counters)
        return out

    def mark_warmup(self):
        self._warmup_snapshot = self.totals()

    @property
    def warmed_up(self) -> bool:
        return self._warmup_snapshot is not None

    def steady(self) -> dict:
        """Counters since the warmup mark (totals if no mark was taken)."""
        tot = self.totals()
        if self._warmup_snapshot is None:
            return tot
        return {k: tot[k] - self._warmup_snapshot.get(k, 0) for k in tot}

    # -- derived rates ------------------------------------------------------
    @staticmethod
    def fam_requests(c: dict) -> int:
        return (
            c["fam_reads_demand"]
            + c["fam_writes_demand"]
            + c["fam_reads_walk"]
            + c["fam_reads_acm"]
            + c["fam_writes_acm"]
            + c["fam_reads_bitmap"]
        )

    @staticmethod
    def fam_at_requests(c: dict) -> int:
        return c["fam_reads_walk"] + c["fam_reads_acm"] + c["fam_writes_acm"] + c["fam_reads_bitmap"]

    def at_fraction(self, steady: bool = True) -> float | None:
        c = self.steady() if steady else self.totals()
        return _rate(self.fam_at_requests(c), self.fam_requests(c))

    def translation_hit_rate(self, steady: bool = True) -> float | None:
        """Fabric-mapping hit rate of the scheme's translation structure."""
        c = self.steady() if steady else self.totals()
        if self.scheme == "ifam":
            return _rate(c["combined_hits"], c["combined_hits"] + c["combined_misses"])
        if self.scheme in ("deact-w", "deact-n"):
            return _rate(c["translator_hits"], c["translator_hits"] + c["translator_misses"])
        return None

    def acm_hit_rate(self, steady: bool = True) -> float | None:
        c = self.steady() if steady else self.totals()
        if self.scheme == "ifam":
            return _rate(c["combined_hits"], c["combined_hits"] + c["combined_misses"])
        if self.scheme in ("deact-w", "deact-n"):
            return _rate(c["stu_acm_hits"], c["stu_acm_hits"] + c["stu_acm_misses"])
        return None

    def tlb_hit_rate(self, steady: bool = True) -> float | None:
        c = self.steady() if steady else self.totals()
        hits = c["tlb_l1_hits"] + c["tlb_l2_hits"]
        return _rate(hits, hits + c["tlb_misses"])

    def denials(self, steady: bool = False) -> int:
        c = self.steady() if steady else self.totals()
        return (
            c["denials_not_owner"]
            + c["denials_not_in_bitmap"]
            + c["denials_insufficient_perm"]
            + c["denials_unallocated"]
        )

    def summary_dict(self) -> dict:
        """Everything a results row needs; raw totals plus derived rates."""
        out = {"scheme": self.scheme, "total_ns": self.total_ns}
        out.update(self.totals())
        out["fam_requests"] = self.fam_requests(self.totals())
        out["at_fraction"] = self.at_fraction()
        out["translation_hit_rate"] = self.translation_hit_rate()
        out["acm_hit_rate"] = self.acm_hit_rate()
        out["tlb_hit_rate"] = self.tlb_hit_rate()
        out["denials"] = self.denials()
        return out
