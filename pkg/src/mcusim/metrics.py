"""Security metrics: per-task memory exposure ratios and cost-counter fits.

Exposure is the share of each memory area an unprivileged task can read
or write under its MPU window, computed analytically over intervals.
The worst-case variant swaps the task's declared user regions for the
largest synthesized ones the active mode permits.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from .kernel import (
    KernelLayout,
    Mode,
    TaskRecord,
    build_mpu_configuration,
    hardening_violations,
)
from .memmap import (
    AddressRange,
    CODE_PARTITION,
    PERIPHERAL_PARTITION,
    MemoryProfile,
    SRAM_PARTITION,
    intersect,
    subtract,
)
from .mpu import Access, MpuConfiguration, Permission


class DegenerateInputError(ValueError):
    """A linear fit needs at least two distinct abscissae."""


AREA_NAMES = (
    "flash-kernel",
    "flash-syscalls",
    "flash-user",
    "ram-kernel",
    "ram-user",
    "periph-system",
    "periph-standard",
)


def area_intervals(profile: MemoryProfile, layout: KernelLayout) -> dict:
    """The concrete byte ranges making up each reported memory area."""
    flash_user = subtract(
        profile.flash, [layout.kernel_code_region, layout.syscalls_region]
    )
    ram_user = subtract(profile.ram, [layout.kernel_data_region])
    return {
        "flash-kernel": [layout.kernel_code_region],
        "flash-syscalls": [layout.syscalls_region],
        "flash-user": flash_user,
        "ram-kernel": [layout.kernel_data_region],
        "ram-user": ram_user,
        "periph-system": [p.range for p in profile.system_peripherals()],
        "periph-standard": [p.range for p in profile.standard_peripherals()],
    }


def unprivileged_rw_intervals(
    cfg: MpuConfiguration, profile: MemoryProfile
) -> list[AddressRange]:
    """Maximal intervals where unprivileged code can read or write.

    Winner-takes-all over region numbers within each elementary interval;
    the background never serves unprivileged code, and the system partition
    is excluded outright.
    """
    regions = cfg.enabled_regions()
    if not regions:
        return []
    cuts = set()
    for d in regions:
        cuts.add(d.range.base)
        cuts.add(d.range.end)
    points = sorted(cuts)

    allowed: list[AddressRange] = []
    for lo, hi in zip(points, points[1:]):
        winner = None
        for d in regions:
            if d.range.base <= lo and hi <= d.range.end:
                if winner is None or d.number > winner.number:
                    winner = d
        if winner is None:
            continue
        if winner.permission.unprivileged_access == Access.NONE:
            continue
        piece = AddressRange(lo, hi - lo)
        for clipped in subtract(piece, [profile.system_partition]):
            allowed.append(clipped)

    allowed.sort(key=lambda r: r.base)
    merged: list[AddressRange] = []
    for r in allowed:
        if merged and merged[-1].end == r.base:
            merged[-1] = AddressRange(merged[-1].base, merged[-1].size + r.size)
        else:
            merged.append(r)
    return merged


def _covered_bytes(area: list[AddressRange], allowed: list[AddressRange]) -> int:
    total = 0
    for piece in area:
        for window in allowed:
            cut = intersect(piece, window)
            if cut is not None:
                total += cut.size
    return total


def unprivileged_exec_bytes(cfg: MpuConfiguration, profile: MemoryProfile) -> int:
    """Flash bytes an unprivileged task could execute; code-reuse proxy only."""
    regions = cfg.enabled_regions()
    cuts = set()
    for d in regions:
        cuts.add(d.range.base)
        cuts.add(d.range.end)
    total = 0
    points = sorted(cuts)
    for lo, hi in zip(points, points[1:]):
        winner = None
        for d in regions:
            if d.range.base <= lo and hi <= d.range.end:
                if winner is None or d.number > winner.number:
                    winner = d
        if winner is None or winner.permission.execute_never:
            continue
        if winner.permission.unprivileged_access == Access.NONE:
            continue
        flash_cut = intersect(AddressRange(lo, hi - lo), profile.flash)
        if flash_cut is not None:
            total += flash_cut.size
    return total


@dataclass(frozen=True)
class AreaExposure:
    exposed_bytes: int
    total_bytes: int

    @property
    def ratio_percent(self) -> float:
        if self.total_bytes == 0:
            return 0.0
        return self.exposed_bytes * 100.0 / self.total_bytes


@dataclass
class ExposureRow:
    task_id: int
    task_name: str
    variant: str  # "standard" | "worst_case"
    areas: dict
    dma_controller_exposed: bool
    exec_exposed_bytes: int

    def as_document(self) -> dict:
        return {
            "task": self.task_id,
            "name": self.task_name,
            "variant": self.variant,
            "areas": {
                name: {
                    "exposed_bytes": ae.exposed_bytes,
                    "total_bytes": ae.total_bytes,
                    "ratio_percent": round(ae.ratio_percent, 2),
                }
                for name, ae in self.areas.items()
            },
            "dma_controller_exposed": self.dma_controller_exposed,
            "exec_exposed_bytes": self.exec_exposed_bytes,
        }


def exposure(
    task: TaskRecord,
    cfg: MpuConfiguration,
    profile: MemoryProfile,
    layout: KernelLayout,
    variant: str = "standard",
) -> ExposureRow:
    """Exposure of every reported area under one task's MPU window."""
    allowed = unprivileged_rw_intervals(cfg, profile)
    areas = {}
    for name, pieces in area_intervals(profile, layout).items():
        total = sum(p.size for p in pieces)
        areas[name] = AreaExposure(
            exposed_bytes=_covered_bytes(pieces, allowed), total_bytes=total
        )
    dma_exposed = any(
        _covered_bytes([ctrl.range], allowed) > 0 for ctrl in profile.dma_controllers()
    )
    return ExposureRow(
        task_id=task.id,
        task_name=task.name,
        variant=variant,
        areas=areas,
        dma_controller_exposed=dma_exposed,
        exec_exposed_bytes=unprivileged_exec_bytes(cfg, profile),
    )


_MAX_EXPOSURE = Permission(Access.RW, Access.RW, execute_never=False)


def _dyadic_clean_blocks(block: AddressRange, forbidden: list[AddressRange]) -> list:
    """Aligned power-of-two blocks inside block avoiding every forbidden range."""
    if not any(block.intersects(f) for f in forbidden):
        return [block]
    if block.size < 64:
        return []
    half = block.size // 2
    left = AddressRange(block.base, half)
    right = AddressRange(block.base + half, half)
    return _dyadic_clean_blocks(left, forbidden) + _dyadic_clean_blocks(right, forbidden)


def synthesize_worst_case_regions(
    task: TaskRecord,
    others: list[TaskRecord],
    profile: MemoryProfile,
    layout: KernelLayout,
) -> list:
    """Largest user regions a task could legally hold, one per partition.

    Compat mode has no creation rules, so the whole primary partitions go
    in.  Hardened mode picks, per partition, the legal aligned block that
    covers the most profile-declared bytes while avoiding the DMA
    controllers, kernel regions, the descriptor arena, and foreign stacks.
    """
    if layout.mode == Mode.FMPU_COMPAT:
        return [
            (CODE_PARTITION, _MAX_EXPOSURE),
            (SRAM_PARTITION, _MAX_EXPOSURE),
            (PERIPHERAL_PARTITION, _MAX_EXPOSURE),
        ]

    forbidden = [ctrl.range for ctrl in profile.dma_controllers()]
    forbidden += [layout.kernel_code_region, layout.kernel_data_region]
    if layout.descriptor_arena is not None:
        forbidden.append(layout.descriptor_arena)
    forbidden += [t.stack_region for t in others if t.id != task.id]

    interesting = {
        CODE_PARTITION: [profile.flash],
        SRAM_PARTITION: [profile.ram],
        PERIPHERAL_PARTITION: [p.range for p in profile.standard_peripherals()],
    }
    regions = []
    for partition, targets in interesting.items():
        best = None
        best_cover = 0
        for block in _dyadic_clean_blocks(partition, forbidden):
            cover = _covered_bytes(targets, [block])
            if cover == 0:
                continue
            if best is None or cover > best_cover:
                best, best_cover = block, cover
        if best is not None:
            regions.append((best, _MAX_EXPOSURE))
    # The synthesized set must itself pass the hardening rules.
    leftover = hardening_violations(
        [r for r, _ in regions], [t for t in others if t.id != task.id], profile, layout
    )
    assert not leftover, f"synthesized worst case violates rules: {leftover}"
    return regions[:3]


def worst_case_exposure(
    task: TaskRecord,
    others: list[TaskRecord],
    profile: MemoryProfile,
    layout: KernelLayout,
) -> ExposureRow:
    shadow = TaskRecord(
        id=task.id,
        name=task.name,
        privileged=task.privileged,
        code_region=task.code_region,
        stack_region=task.stack_region,
        user_regions=synthesize_worst_case_regions(task, others, profile, layout),
    )
    cfg = build_mpu_configuration(shadow, layout)
    return exposure(shadow, cfg, profile, layout, variant="worst_case")


def fit_linear(counts: list) -> tuple[float, float, bool]:
    """Fit checks = a + b * n; exact=True when every residual is zero.

    Uses rational arithmetic for the exactness decision and falls back to a
    closed-form least-squares line otherwise.
    """
    if len(counts) < 3:
        raise DegenerateInputError("need at least 3 points")
    xs = [Fraction(n) for n, _ in counts]
    ys = [Fraction(c) for _, c in counts]
    if len(set(xs)) == 1:
        raise DegenerateInputError("all abscissae equal")

    x0, y0 = xs[0], ys[0]
    x1, y1 = next((x, y) for x, y in zip(xs, ys) if x != x0)
    b = (y1 - y0) / (x1 - x0)
    a = y0 - b * x0
    if all(a + b * x == y for x, y in zip(xs, ys)):
        return float(a), float(b), True

    n = len(xs)
    sx = sum(xs)
    sy = sum(ys)
    sxx = sum(x * x for x in xs)
    sxy = sum(x * y for x, y in zip(xs, ys))
    denom = n * sxx - sx * sx
    b_ls = (n * sxy - sx * sy) / denom
    a_ls = (sy - b_ls * sx) / n
    return float(a_ls), float(b_ls), False
