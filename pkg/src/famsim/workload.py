"""Deterministic synthetic memory traces and the text trace format.

Traces model the stream of last-level-cache misses a core produces: each
event is an access kind, a virtual address, and the number of non-memory
cycles preceding it. Generators are pure functions of their spec, so one
seed yields bitwise-identical traces on every run and platform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from .addressing import PAGE_SIZE, AccessKind
from .errors import ConfigError, TraceFormatError

GENERATORS = ("uniform", "zipf", "stream", "pointer_chase")

_KIND_LETTER = {AccessKind.READ: "R", AccessKind.WRITE: "W", AccessKind.EXECUTE: "X"}
_LETTER_KIND = {v: k for k, v in _KIND_LETTER.items()}


class TraceEvent(NamedTuple):
    seq: int
    kind: AccessKind
    vaddr: int
    gap_cycles: int


class Trace:
    """Column layout of one trace: parallel lists of address, kind, gap.

    Behaves like a sequence of :class:`TraceEvent` but avoids materializing
    one tuple per event, which matters for long generated traces.
    """

    __slots__ = ("vaddrs", "kinds", "gaps")

    def __init__(self, vaddrs, kinds, gaps):
        self.vaddrs = vaddrs
        self.kinds = kinds
        self.gaps = gaps

    def __len__(self):
        return len(self.vaddrs)

    def __iter__(self):
        for i, (k, v, g) in enumerate(zip(self.kinds, self.vaddrs, self.gaps)):
            yield TraceEvent(i, AccessKind(k), v, g)

    def __getitem__(self, i):
        return TraceEvent(i, AccessKind(self.kinds[i]), self.vaddrs[i], self.gaps[i])


def as_columns(trace):
    """(vaddrs, kinds, gaps) lists for either trace representation."""
    if isinstance(trace, Trace):
        return trace.vaddrs, trace.kinds, trace.gaps
    return (
        [e.vaddr for e in trace],
        [int(e.kind) for e in trace],
        [e.gap_cycles for e in trace],
    )


@dataclass
class WorkloadSpec:
    """Parameters of one synthetic trace.

    ``rw_ratio`` is the fraction of reads; ``mpki`` calibrates the mean gap
    so the trace approximates that many accesses per thousand instructions.
    """

    generator: str = "uniform"
    footprint: int = 64 << 20
    length: int = 100_000
    rw_ratio: float = 1.0
    mpki: float = 57.0
    seed: int = 1
    zipf_skew: float = 0.8
    stream_stride: int = 64
    chase_chain: int = 0  # 0 means the whole footprint

    def validate(self) -> None:
        problems = []
        if self.generator not in GENERATORS:
            problems.append(f"generator: unknown {self.generator!r}, allowed {GENERATORS}")
        if self.footprint < PAGE_SIZE:
            problems.append(f"footprint: must be >= {PAGE_SIZE} bytes")
        if self.length < 1:
            problems.append("length: must be >= 1")
        if not 0.0 <= self.rw_ratio <= 1.0:
            problems.append("rw_ratio: must be in [0, 1]")
        if self.mpki <= 0:
            problems.append("mpki: must be > 0")
        if self.zipf_skew < 0:
            problems.append("zipf_skew: must be >= 0")
        if self.stream_stride < 1:
            problems.append("stream_stride: must be >= 1")
        if self.chase_chain < 0:
            problems.append("chase_chain: must be >= 0")
        if problems:
            raise ConfigError(problems)

    def with_seed(self, seed: int) -> "WorkloadSpec":
        return WorkloadSpec(**{**self.__dict__, "seed": seed})


def _gap_cycles(length: int, mpki: float) -> np.ndarray:
    # Evenly dithered integer gaps whose running mean tracks 1000/mpki.
    g = 1000.0 / mpki
    marks = np.floor(np.arange(length + 1, dtype=np.float64) * g)
    return np.diff(marks).astype(np.int64)


def _page_sequence(spec: WorkloadSpec, rng: np.random.Generator) -> np.ndarray:
    pages = spec.footprint // PAGE_SIZE
    n = spec.length
    if spec.generator == "uniform":
        return rng.integers(0, pages, size=n)
    if spec.generator == "zipf":
        if spec.zipf_skew == 0.0:
            return rng.integers(0, pages, size=n)
        weights = 1.0 / np.power(np.arange(1, pages + 1, dtype=np.float64), spec.zipf_skew)
        cdf = np.cumsum(weights)
        cdf /= cdf[-1]
        return np.searchsorted(cdf, rng.random(n), side="right")
    if spec.generator == "pointer_chase":
        chain = spec.chase_chain or pages
        chain = min(chain, pages)
        perm = rng.permutation(chain)
        return perm[np.arange(n) % chain]
    raise AssertionError(spec.generator)


def generate_trace(spec: WorkloadSpec) -> Trace:
    """Materialize the trace for ``spec`` (deterministic in the seed)."""
    spec.validate()
    n = spec.length
    rng = np.random.default_rng(np.random.PCG64(spec.seed))

    if spec.generator == "stream":
        vaddrs = (np.arange(n, dtype=np.int64) * spec.stream_stride) % spec.footprint
    else:
        pages = _page_sequence(spec, rng)
        if spec.generator == "pointer_chase":
            offsets = np.zeros(n, dtype=np.int64)
        else:
            offsets = rng.integers(0, PAGE_SIZE // 64, size=n) * 64
        vaddrs = pages.astype(np.int64) * PAGE_SIZE + offsets

    kinds = np.where(rng.random(n) < spec.rw_ratio, int(AccessKind.READ), int(AccessKind.WRITE))
    gaps = _gap_cycles(n, spec.mpki)
    return Trace(vaddrs.tolist(), kinds.tolist(), gaps.tolist())


def generate(spec: WorkloadSpec) -> list[TraceEvent]:
    """Like :func:`generate_trace` but as a list of events."""
    return list(generate_trace(spec))


def save_trace(events: Iterable[TraceEvent], path) -> None:
    with open(path, "w") as fh:
        for ev in events:
            fh.write(f"{ev.seq} {_KIND_LETTER[ev.kind]} {ev.vaddr:#x} {ev.gap_cycles}\n")


def load_trace(path) -> list[TraceEvent]:
    """Parse a text trace, validating format and sequence monotonicity."""
    events = []
    last_seq = -1
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 4:
                raise TraceFormatError(
                    f"expected 'seq kind vaddr gap', got {line!r}", line=lineno
                )
            seq_s, kind_s, vaddr_s, gap_s = parts
            try:
                seq = int(seq_s)
                vaddr = int(vaddr_s, 16)
                gap = int(gap_s)
            except ValueError as exc:
                raise TraceFormatError(str(exc), line=lineno) from None
            kind = _LETTER_KIND.get(kind_s.upper())
            if kind is None:
                raise TraceFormatError(f"unknown access kind {kind_s!r}", line=lineno)
            if seq <= last_seq:
                raise TraceFormatError("non-monotone sequence", line=lineno)
            if vaddr < 0 or gap < 0:
                raise TraceFormatError("negative address or gap", line=lineno)
            last_seq = seq
            events.append(TraceEvent(seq, kind, vaddr, gap))
    if not events:
        raise ConfigError(f"trace {path}: empty trace file")
    return events
