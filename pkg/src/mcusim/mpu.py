"""Eight-region MPU model: descriptor legality, overlap precedence, access checks.

Semantics follow the PMSAv7 scheme the simulator targets: when enabled
regions overlap, the highest region number wins; the background mapping
serves privileged code only; system-partition addresses require privilege
no matter what the regions say.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

from .memmap import (
    AddressRange,
    ADDRESS_LIMIT,
    CODE_PARTITION,
    MemoryProfile,
    SchemaError,
)

MIN_REGION_SIZE = 32
REGION_SLOTS = 8


class SizeError(ValueError):
    """Region size is not a power of two >= 32."""


class AlignmentError(ValueError):
    """Region base is not naturally aligned to its size."""


class Access(str, enum.Enum):
    NONE = "none"
    RO = "ro"
    RW = "rw"


class AccessKind(str, enum.Enum):
    READ = "read"
    WRITE = "write"
    EXECUTE = "execute"


class CheckResult(str, enum.Enum):
    ALLOW = "allow"
    FAULT = "fault"


@dataclass(frozen=True)
class Permission:
    """Per-region access rights for each execution level."""

    privileged_access: Access = Access.NONE
    unprivileged_access: Access = Access.NONE
    execute_never: bool = True

    _RANK = {Access.NONE: 0, Access.RO: 1, Access.RW: 2}

    def __post_init__(self):
        # Unprivileged rights may never exceed privileged rights.
        if self._RANK[self.unprivileged_access] > self._RANK[self.privileged_access]:
            raise SchemaError(
                f"unprivileged {self.unprivileged_access.value} exceeds "
                f"privileged {self.privileged_access.value}"
            )

    def level(self, privileged: bool) -> Access:
        return self.privileged_access if privileged else self.unprivileged_access


@dataclass(frozen=True)
class MpuRegionDescriptor:
    number: int
    range: AddressRange
    permission: Permission
    enabled: bool = True

    def __post_init__(self):
        if not 0 <= self.number < REGION_SLOTS:
            raise SizeError(f"region number {self.number} outside 0..7")
        validate_descriptor_fields(self.range)


def validate_descriptor_fields(rng: AddressRange) -> None:
    """Raise SizeError/AlignmentError unless rng is a legal MPU region."""
    size = rng.size
    if size < MIN_REGION_SIZE or size & (size - 1) != 0:
        raise SizeError(f"region size {size} is not a power of two >= {MIN_REGION_SIZE}")
    if rng.base % size != 0:
        raise AlignmentError(
            f"region base 0x{rng.base:08x} not aligned to size {size}"
        )


def validate_descriptor(d: MpuRegionDescriptor) -> None:
    validate_descriptor_fields(d.range)


@dataclass(frozen=True)
class MpuConfiguration:
    """The 8 numbered slots plus the background enable bit.

    Slot i, when present, must hold a descriptor whose number is i.
    """

    regions: tuple[Optional[MpuRegionDescriptor], ...]
    background_enabled: bool = True

    def __post_init__(self):
        if len(self.regions) != REGION_SLOTS:
            raise ValueError(f"expected {REGION_SLOTS} slots, got {len(self.regions)}")
        for i, d in enumerate(self.regions):
            if d is not None and d.number != i:
                raise ValueError(f"slot {i} holds descriptor numbered {d.number}")

    def enabled_regions(self) -> list[MpuRegionDescriptor]:
        return [d for d in self.regions if d is not None and d.enabled]


def configuration_from(descriptors, background_enabled: bool = True) -> MpuConfiguration:
    slots: list[Optional[MpuRegionDescriptor]] = [None] * REGION_SLOTS
    for d in descriptors:
        if slots[d.number] is not None:
            raise ValueError(f"slot {d.number} assigned twice")
        slots[d.number] = d
    return MpuConfiguration(regions=tuple(slots), background_enabled=background_enabled)


@dataclass(frozen=True)
class AccessQuery:
    addr: int
    width: int
    kind: AccessKind
    privileged: bool

    def __post_init__(self):
        if self.width <= 0:
            raise ValueError("access width must be positive")
        if self.addr < 0 or self.addr + self.width > ADDRESS_LIMIT:
            raise ValueError("access span leaves the 32-bit address space")


def _permission_allows(perm: Permission, kind: AccessKind, privileged: bool) -> bool:
    level = perm.level(privileged)
    if kind == AccessKind.READ:
        return level in (Access.RO, Access.RW)
    if kind == AccessKind.WRITE:
        return level == Access.RW
    # EXECUTE needs read permission at the current level and no XN bit.
    return level in (Access.RO, Access.RW) and not perm.execute_never


def _background_allows(q: AccessQuery, cfg: MpuConfiguration, lo: int) -> bool:
    if not (q.privileged and cfg.background_enabled):
        return False
    if q.kind == AccessKind.EXECUTE:
        return CODE_PARTITION.contains_addr(lo)
    return True


def check_access(
    cfg: MpuConfiguration, q: AccessQuery, profile: MemoryProfile
) -> CheckResult:
    """ALLOW iff every byte of the query span is permitted.

    Works over the maximal sub-spans on which the winning region is constant
    rather than byte-by-byte; the brute_force_check oracle below is the
    per-byte reference.
    """
    span_lo, span_hi = q.addr, q.addr + q.width
    regions = cfg.enabled_regions()

    cuts = {span_lo, span_hi}
    for d in regions:
        if d.range.base > span_lo and d.range.base < span_hi:
            cuts.add(d.range.base)
        if d.range.end > span_lo and d.range.end < span_hi:
            cuts.add(d.range.end)
    sys_part = profile.system_partition
    for edge in (sys_part.base, sys_part.end):
        if span_lo < edge < span_hi:
            cuts.add(edge)
    code_edge = CODE_PARTITION.end
    if span_lo < code_edge < span_hi:
        cuts.add(code_edge)

    points = sorted(cuts)
    for lo, hi in zip(points, points[1:]):
        if not q.privileged and sys_part.base <= lo < sys_part.end:
            return CheckResult.FAULT
        winner = None
        for d in regions:
            if d.range.base <= lo and hi <= d.range.end:
                if winner is None or d.number > winner.number:
                    winner = d
        if winner is not None:
            if not _permission_allows(winner.permission, q.kind, q.privileged):
                return CheckResult.FAULT
        elif not _background_allows(q, cfg, lo):
            return CheckResult.FAULT
    return CheckResult.ALLOW


def brute_force_check(
    cfg: MpuConfiguration, q: AccessQuery, profile: MemoryProfile
) -> CheckResult:
    """Per-byte reference implementation of check_access; test oracle only.

    Scans all eight slots for every byte with no early exits or interval
    tricks, so it stays independent of the production path.
    """
    for addr in range(q.addr, q.addr + q.width):
        matches = []
        for slot in range(REGION_SLOTS):
            d = cfg.regions[slot]
            if d is None or not d.enabled:
                continue
            if d.range.base <= addr < d.range.base + d.range.size:
                matches.append(d)
        allowed = False
        if matches:
            best = matches[0]
            for d in matches:
                if d.number > best.number:
                    best = d
            level = (
                best.permission.privileged_access
                if q.privileged
                else best.permission.unprivileged_access
            )
            if q.kind == AccessKind.READ:
                allowed = level in (Access.RO, Access.RW)
            elif q.kind == AccessKind.WRITE:
                allowed = level == Access.RW
            else:
                allowed = level in (Access.RO, Access.RW) and not best.permission.execute_never
        else:
            if q.privileged and cfg.background_enabled:
                if q.kind == AccessKind.EXECUTE:
                    allowed = CODE_PARTITION.contains_addr(addr)
                else:
                    allowed = True
        if not q.privileged and profile.system_partition.contains_addr(addr):
            allowed = False
        if not allowed:
            return CheckResult.FAULT
    return CheckResult.ALLOW
