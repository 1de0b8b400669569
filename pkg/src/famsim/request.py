"""The request record that flows node -> translator -> STU -> memory."""

from __future__ import annotations

DELIVER_DIRECT = 0  # response completes the request as-is (tests, harnesses)
DELIVER_TRANSLATOR = 1  # response re-addressed by the node's translator
DELIVER_STU = 2  # response re-addressed by the STU (indirect scheme)

DENY_NOT_OWNER = "not_owner"
DENY_NOT_IN_BITMAP = "not_in_bitmap"
DENY_INSUFFICIENT_PERM = "insufficient_perm"
DENY_UNALLOCATED = "unallocated"

DENY_REASONS = (
    DENY_NOT_OWNER,
    DENY_NOT_IN_BITMAP,
    DENY_INSUFFICIENT_PERM,
    DENY_UNALLOCATED,
)


class DemandAccess:
    """One memory access on the fabric path.

    ``node_addr`` is the node-physical address the core produced;
    ``fam_addr`` is filled once a translation is known. The verification
    flag says whether the address was already translated (and so only needs
    vetting) or still needs the system-level walk.
    """

    __slots__ = (
        "node",
        "seq",
        "kind",
        "offset",
        "node_addr",
        "fam_addr",
        "v_flag",
        "is_write",
        "expects_response",
        "deliver",
        "complete",
        "core",
        "oml",
        "audit",
    )

    def __init__(self, node, seq, kind, node_addr, is_write, deliver, complete):
        self.node = node
        self.seq = seq
        self.kind = kind
        self.offset = node_addr & 0xFFF
        self.node_addr = node_addr
        self.fam_addr = None
        self.v_flag = False
        self.is_write = is_write
        self.expects_response = not is_write
        self.deliver = deliver
        self.complete = complete  # callable(t, deny_reason or None), or None
        self.core = None  # issuing front end when complete is None
        self.oml = None  # set while holding an outstanding-mapping slot
        self.audit = None
