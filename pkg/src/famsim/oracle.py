"""Zero-latency functional reference model.

Replays traces against plain associative maps (the broker's authoritative
tables) with direct metadata checks and no caches, producing the final
address and allow/deny verdict per access. The event simulator must agree
with this model exactly; any divergence means the caching, walking, or
verification machinery changed an outcome rather than just its timing.

The reference allocates pages with the same broker policy as the timed
run. First-touch order is the per-trace order, so equality with the timed
simulator is guaranteed for one core per node (the timed interleaving of
multiple cores on one node can legally reorder first touches). For
multi-core runs, :func:`outcomes_against_state` checks a completed run
against its own final tables, which is order-insensitive because mappings
are immutable once created and exist before any access that uses them.
"""

from __future__ import annotations

from .addressing import PAGE_SHIFT, AcmStatus, decode_acm
from .broker import Broker
from .config import ExperimentConfig
from .errors import AddressFault
from .pagetable import Location

_DENY_STATUS = {
    "not_owner": "N",
    "not_in_bitmap": "B",
    "insufficient_perm": "P",
    "unallocated": "U",
}


def check_access(broker: Broker, node: int, fam_addr: int, kind: int):
    """Direct access-control decision for one fabric address.

    Returns None when the access is permitted, else the denial reason.
    """
    try:
        pool, layout = broker.layout_for(fam_addr)
    except AddressFault:
        return "unallocated"
    if layout.in_metadata(fam_addr):
        return "unallocated"
    decoded = decode_acm(broker.acm_raw(fam_addr), node_id_bits=broker.node_id_bits)
    if decoded.status is AcmStatus.UNALLOCATED:
        return "unallocated"
    if decoded.status is AcmStatus.OWNED:
        if decoded.owner != node:
            return "not_owner"
        if decoded.perm < kind:
            return "insufficient_perm"
        return None
    if not broker.bitmap_bit(fam_addr, node):
        return "not_in_bitmap"
    if decoded.perm < kind:
        return "insufficient_perm"
    return None


def _event_outcome(broker: Broker, cfg: ExperimentConfig, node: int, ev, allocate: bool):
    vpage = ev.vaddr >> PAGE_SHIFT
    if allocate:
        value, _ = broker.ensure_mapped(node, vpage)
    else:
        value = broker.node_table(node).lookup(vpage)
        if value is None:
            raise AssertionError(f"page {vpage:#x} unmapped in final state")
    offset = ev.vaddr & 0xFFF
    if cfg.scheme == "efam":
        assert isinstance(value, Location)
        addr = value.base_addr << PAGE_SHIFT | offset
        return ("F" if value.is_fam else "L", addr)
    node_page = value
    addr = node_page << PAGE_SHIFT | offset
    if node_page < cfg.local_bytes >> PAGE_SHIFT:
        return ("L", addr)
    fam_page = broker.fam_table(node).lookup(node_page)
    assert fam_page is not None, "mapped fabric-zone page missing a backing entry"
    fam_addr = fam_page << PAGE_SHIFT | offset
    reason = check_access(broker, node, fam_addr, int(ev.kind))
    if reason is None:
        return ("F", fam_addr)
    return (_DENY_STATUS[reason], fam_addr)


def _replicate_setup(cfg: ExperimentConfig, setup_broker: Broker | None) -> Broker:
    broker = Broker(cfg)
    if setup_broker is not None:
        for region in setup_broker.shared_regions:
            replica = broker.create_shared_region(region.members, region.perm)
            for node, vbase in region.windows.items():
                broker.attach_shared_window(replica, node, vbase)
    return broker


def reference_outcomes(cfg: ExperimentConfig, traces, setup_broker: Broker | None = None):
    """Independent replay: fresh broker, per-trace first-touch order.

    ``setup_broker`` replays shared-region creation done before the timed
    run (regions and window attachments), not any allocations.
    """
    broker = _replicate_setup(cfg, setup_broker)
    out = []
    for i, trace in enumerate(traces):
        node = i // cfg.cores_per_node
        out.append([_event_outcome(broker, cfg, node, ev, allocate=True) for ev in trace])
    return out


def outcomes_against_state(broker: Broker, cfg: ExperimentConfig, traces):
    """Replay against a completed run's final tables (no allocation)."""
    out = []
    for i, trace in enumerate(traces):
        node = i // cfg.cores_per_node
        out.append([_event_outcome(broker, cfg, node, ev, allocate=False) for ev in trace])
    return out
