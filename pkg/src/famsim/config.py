"""Experiment configuration: defaults, parsing, and validation.

Configs are flat ``key = value`` text files (``#`` comments allowed).
Every knob has a default matching the reference system configuration, so
an empty file is a valid single-node experiment. Unknown keys and invalid
values are rejected with one message per offending field.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

from .addressing import GIB, PAGE_SIZE
from .errors import ConfigError
from .workload import GENERATORS, WorkloadSpec

SCHEMES = ("efam", "ifam", "deact-w", "deact-n")
SWEEP_AXES = (
    "stu_entries",
    "stu_ways",
    "acm_bits",
    "pairs_per_way",
    "fabric_latency_ns",
    "nodes",
    "translation_cache_bytes",
)

KIB = 1 << 10
MIB = 1 << 20

_SIZE_SUFFIXES = {"": 1, "b": 1, "kb": KIB, "k": KIB, "mb": MIB, "m": MIB, "gb": GIB, "g": GIB}


def parse_size(text: str) -> int:
    s = str(text).strip().lower().replace("_", "")
    num = s
    mult = 1
    for suffix in sorted(_SIZE_SUFFIXES, key=len, reverse=True):
        if suffix and s.endswith(suffix):
            num, mult = s[: -len(suffix)], _SIZE_SUFFIXES[suffix]
            break
    value = float(num) * mult
    if value != int(value):
        raise ValueError(f"size {text!r} is not a whole number of bytes")
    return int(value)


def _parse_bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


@dataclass
class ExperimentConfig:
    """Full parameterization of one simulation run."""

    scheme: str = "deact-n"
    seed: int = 1
    nodes: int = 1
    cores_per_node: int = 4

    # Core front end
    cpu_freq_ghz: float = 2.0
    core_window: int = 32
    core_overhead_ns: float = 0.5
    tlb_l1_entries: int = 32
    tlb_l2_entries: int = 256
    tlb_l2_ways: int = 4
    ptw_cache_entries: int = 32
    minor_fault_ns: float = 2000.0

    # Local DRAM (per node)
    local_bytes: int = 1 * GIB
    local_banks: int = 8
    local_read_ns: float = 50.0
    local_write_ns: float = 50.0

    # Fabric-attached memory (per pool; one pool per node)
    fam_capacity: int = 16 * GIB
    fam_banks: int = 32
    fam_read_ns: float = 60.0
    fam_write_ns: float = 150.0
    fam_max_outstanding: int = 128

    # Fabric network
    fabric_latency_ns: float = 500.0
    fabric_serialization_ns: float = 0.0

    # System translation unit
    stu_entries: int = 1024
    stu_ways: int = 8
    acm_bits: int = 16
    node_id_bits: int = 0  # 0 derives acm_bits - 2
    pairs_per_way: int = 2
    stu_max_walks: int = 8

    # Node-side translation
    translation_cache_bytes: int = 1 * MIB
    oml_entries: int = 128

    # Allocation policy
    local_fraction: float = 0.2
    shared_region_bytes: int = GIB
    shared_region_count: int = 0
    shared_region_perm: int = 1
    node_pt_follows_data: bool = False  # pin node tables local unless set

    # Run control
    warmup_events: int = 0
    audit: bool = False  # record per-access final address and verdict
    audit_segments: bool = False  # also checkpoint per-request latency segments

    # Workload
    workload_generator: str = "uniform"
    workload_footprint: int = 64 * MIB
    workload_length: int = 100_000
    workload_rw_ratio: float = 1.0
    workload_mpki: float = 57.0
    workload_seed: int = 0  # 0 follows the run seed
    zipf_skew: float = 0.8
    stream_stride: int = 64
    chase_chain: int = 0

    # ------------------------------------------------------------------
    @property
    def effective_node_id_bits(self) -> int:
        return self.node_id_bits if self.node_id_bits else self.acm_bits - 2

    @property
    def tc_sets(self) -> int:
        return self.translation_cache_bytes // 64

    @property
    def tc_ways(self) -> int:
        return 4

    @property
    def tc_reach_pages(self) -> int:
        return self.tc_sets * self.tc_ways

    @property
    def stu_sets(self) -> int:
        return self.stu_entries // self.stu_ways

    @property
    def deact_w_group_pages(self) -> int:
        # Pages whose metadata fits in the way payload freed by decoupling.
        return 64 // self.acm_bits

    @property
    def gap_ns_per_cycle(self) -> float:
        return 1.0 / self.cpu_freq_ghz

    def workload_spec(self) -> WorkloadSpec:
        return WorkloadSpec(
            generator=self.workload_generator,
            footprint=self.workload_footprint,
            length=self.workload_length,
            rw_ratio=self.workload_rw_ratio,
            mpki=self.workload_mpki,
            seed=self.workload_seed or self.seed,
            zipf_skew=self.zipf_skew,
            stream_stride=self.stream_stride,
            chase_chain=self.chase_chain,
        )

    def validate(self) -> "ExperimentConfig":
        problems = []
        if self.scheme not in SCHEMES:
            problems.append(f"scheme: unknown {self.scheme!r}, allowed {SCHEMES}")
        if self.nodes < 1:
            problems.append("nodes: must be >= 1")
        if self.cores_per_node < 1:
            problems.append("cores_per_node: must be >= 1")
        if self.cpu_freq_ghz <= 0:
            problems.append("cpu_freq_ghz: must be > 0")
        if self.core_window < 1:
            problems.append("core_window: must be >= 1")
        if self.tlb_l1_entries < 1 or self.tlb_l2_entries < 1:
            problems.append("tlb entries: must be >= 1")
        if self.tlb_l2_ways < 1 or self.tlb_l2_entries % self.tlb_l2_ways:
            problems.append("tlb_l2_ways: must divide tlb_l2_entries")
        if self.ptw_cache_entries < 1:
            problems.append("ptw_cache_entries: must be >= 1")
        if self.local_bytes < PAGE_SIZE or self.local_bytes % PAGE_SIZE:
            problems.append("local_bytes: must be a positive multiple of 4096")
        if self.fam_capacity < PAGE_SIZE or self.fam_capacity % PAGE_SIZE:
            problems.append("fam_capacity: must be a positive multiple of 4096")
        if self.local_banks < 1 or self.fam_banks < 1:
            problems.append("bank counts: must be >= 1")
        if self.fam_max_outstanding < 1:
            problems.append("fam_max_outstanding: must be >= 1")
        if self.fabric_latency_ns < 0 or self.fabric_serialization_ns < 0:
            problems.append("fabric latencies: must be >= 0")
        if self.stu_entries < 1:
            problems.append("stu_entries: must be >= 1")
        if self.stu_ways < 1 or self.stu_entries % self.stu_ways:
            problems.append("stu_ways: must divide stu_entries")
        if self.acm_bits not in (8, 16, 32):
            problems.append(f"acm_bits: {self.acm_bits} rejected, allowed {{8, 16, 32}}")
        elif self.node_id_bits and not 1 <= self.node_id_bits <= self.acm_bits - 2:
            problems.append("node_id_bits: must be in [1, acm_bits - 2]")
        if self.pairs_per_way not in (1, 2, 3):
            problems.append("pairs_per_way: allowed {1, 2, 3}")
        if self.stu_max_walks < 1:
            problems.append("stu_max_walks: must be >= 1")
        if self.translation_cache_bytes < 64 or self.translation_cache_bytes % 64:
            problems.append("translation_cache_bytes: must be a positive multiple of 64")
        if self.translation_cache_bytes >= self.local_bytes:
            problems.append("translation_cache_bytes: must be smaller than local_bytes")
        if self.oml_entries < 1:
            problems.append("oml_entries: must be >= 1")
        if not 0.0 <= self.local_fraction <= 1.0:
            problems.append("local_fraction: must be in [0, 1]")
        if self.shared_region_bytes < PAGE_SIZE or self.shared_region_bytes % PAGE_SIZE:
            problems.append("shared_region_bytes: must be a positive multiple of 4096")
        if self.shared_region_count < 0:
            problems.append("shared_region_count: must be >= 0")
        if not 0 <= self.shared_region_perm <= 3:
            problems.append("shared_region_perm: must be in [0, 3]")
        if self.warmup_events < 0:
            problems.append("warmup_events: must be >= 0")
        if self.acm_bits in (8, 16, 32):
            max_nodes = (1 << self.effective_node_id_bits) - 1
            if self.nodes >= max_nodes:
                problems.append(f"nodes: at most {max_nodes - 1} with {self.acm_bits}-bit metadata")
        # DeACT-N tags are confined to 44 bits of page number.
        if self.nodes * self.fam_capacity > (1 << 56):
            problems.append("fam_capacity: total capacity must fit in 44 + 12 address bits")
        try:
            self.workload_spec().validate()
        except ConfigError as exc:
            problems.extend(f"workload_{p}" if not p.startswith(("workload", "zipf", "stream", "chase")) else p for p in exc.problems)
        if problems:
            raise ConfigError(problems)
        return self


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}
_SIZE_FIELDS = {
    "local_bytes",
    "fam_capacity",
    "translation_cache_bytes",
    "shared_region_bytes",
    "workload_footprint",
}


def _convert(key: str, raw: str):
    ftype = _FIELD_TYPES[key]
    if key in _SIZE_FIELDS:
        return parse_size(raw)
    if ftype == "bool":
        return _parse_bool(raw)
    if ftype == "int":
        return int(str(raw).strip().replace("_", ""), 0)
    if ftype == "float":
        return float(raw)
    return str(raw).strip()


def parse_config(text: str, overrides: dict | None = None) -> ExperimentConfig:
    """Parse ``key = value`` text into a validated config.

    ``overrides`` (e.g. from command-line flags) are applied after the file
    and validated together with it.
    """
    values = {}
    problems = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            problems.append(f"line {lineno}: expected 'key = value', got {stripped!r}")
            continue
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in _FIELD_TYPES:
            problems.append(f"line {lineno}: unknown key {key!r}")
            continue
        try:
            values[key] = _convert(key, raw)
        except (ValueError, TypeError) as exc:
            problems.append(f"{key}: {exc}")
    for key, raw in (overrides or {}).items():
        if key not in _FIELD_TYPES:
            problems.append(f"unknown key {key!r}")
            continue
        try:
            values[key] = raw if not isinstance(raw, str) else _convert(key, raw)
        except (ValueError, TypeError) as exc:
            problems.append(f"{key}: {exc}")
    if problems:
        raise ConfigError(problems)
    return ExperimentConfig(**values).validate()


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read(), overrides)


def with_values(cfg: ExperimentConfig, **changes) -> ExperimentConfig:
    return replace(cfg, **changes).validate()
