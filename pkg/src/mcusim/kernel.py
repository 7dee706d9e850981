"""Microkernel model: task records, creation hardening, region schema, scheduler.

Two protection modes are supported.  The hardened mode places kernel
regions in the highest-priority MPU slots and rejects task layouts that
reach the DMA controller, kernel memory, or other stacks.  The compat
mode reproduces the permissive stock layout where user regions sit in
the top slots and can shadow everything below them.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from .memmap import (
    AddressRange,
    MemoryProfile,
    PERIPHERAL_PARTITION,
    contains,
)
from .mpu import (
    Access,
    MpuConfiguration,
    MpuRegionDescriptor,
    Permission,
    configuration_from,
    validate_descriptor_fields,
)


class Mode(str, enum.Enum):
    DBOX = "dbox"
    FMPU_COMPAT = "fmpu_compat"


class TaskState(str, enum.Enum):
    READY = "ready"
    RUNNING = "running"
    BLOCKED_ON_NOTIFY = "blocked_on_notify"
    STOPPED = "stopped"
    VOIDED = "voided"


class FaultKind(str, enum.Enum):
    MPU_VIOLATION = "mpu_violation"
    DMA_REQUEST_REJECTED = "dma_request_rejected"
    REGION_REDEFINITION_REJECTED = "region_redefinition_rejected"
    TASK_CREATION_VOIDED = "task_creation_voided"


@dataclass(frozen=True)
class FaultEvent:
    tick: int
    task_id: int
    kind: FaultKind
    detail: str


class ConfigError(ValueError):
    """build_mpu_configuration produced an illegal descriptor."""


class IdleError(RuntimeError):
    """No task can ever run again."""


@dataclass(frozen=True)
class KernelLayout:
    syscalls_region: AddressRange
    kernel_code_region: AddressRange
    kernel_data_region: AddressRange
    mode: Mode = Mode.DBOX
    descriptor_arena: Optional[AddressRange] = None

    def validate(self, profile: MemoryProfile) -> None:
        if not contains(profile.flash, self.syscalls_region):
            raise ConfigError("syscalls region outside flash")
        if not contains(profile.flash, self.kernel_code_region):
            raise ConfigError("kernel code region outside flash")
        if not contains(profile.ram, self.kernel_data_region):
            raise ConfigError("kernel data region outside ram")


@dataclass
class TaskRecord:
    id: int
    name: str
    privileged: bool
    code_region: AddressRange
    stack_region: AddressRange
    user_regions: list = field(default_factory=list)  # (AddressRange, Permission)
    capabilities: tuple = ()
    behavior: list = field(default_factory=list)
    state: TaskState = TaskState.READY
    notification_box: deque = field(default_factory=deque)
    pc: int = 0
    repeat: int = 1
    iterations_done: int = 0

    def runnable(self) -> bool:
        return self.state in (TaskState.READY, TaskState.RUNNING) and not self.done()

    def done(self) -> bool:
        if not self.behavior:
            return True
        return self.iterations_done >= self.repeat


@dataclass(frozen=True)
class TaskSpec:
    """Creation-time description, before hardening validation."""

    id: int
    name: str
    privileged: bool
    code_region: AddressRange
    stack_region: AddressRange
    user_regions: tuple = ()
    capabilities: tuple = ()
    behavior: tuple = ()
    repeat: int = 1


# Stable identifiers for the creation-time hardening rules, used by the linter.
RULE_DMA_CONTROLLER = "dma-controller-overlap"
RULE_KERNEL_SPACE = "kernel-space-overlap"
RULE_OTHER_STACKS = "foreign-stack-overlap"
RULE_DESCRIPTOR_ARENA = "descriptor-arena-overlap"


def hardening_violations(
    candidate_ranges: list[AddressRange],
    existing: list[TaskRecord],
    profile: MemoryProfile,
    layout: KernelLayout,
    counter: Optional[list] = None,
) -> list[str]:
    """Apply the DMA protection rules to a task's stack and user regions.

    Every range/target intersection test is counted (when a counter list is
    supplied) and no check is skipped on first failure, so the check count
    depends only on the shapes involved, never on the outcome.
    """

    def checked_intersects(a: AddressRange, b: AddressRange) -> bool:
        if counter is not None:
            counter.append(1)
        return a.intersects(b)

    violations = []
    controllers = profile.dma_controllers()
    for rng in candidate_ranges:
        for ctrl in controllers:
            if checked_intersects(rng, ctrl.range):
                violations.append(f"{RULE_DMA_CONTROLLER}: {rng} overlaps {ctrl.id}")
        if checked_intersects(rng, layout.kernel_code_region):
            violations.append(f"{RULE_KERNEL_SPACE}: {rng} overlaps kernel code")
        if checked_intersects(rng, layout.kernel_data_region):
            violations.append(f"{RULE_KERNEL_SPACE}: {rng} overlaps kernel data")
        if layout.descriptor_arena is not None:
            if checked_intersects(rng, layout.descriptor_arena):
                violations.append(f"{RULE_DESCRIPTOR_ARENA}: {rng} overlaps arena")
        for other in existing:
            if checked_intersects(rng, other.stack_region):
                violations.append(
                    f"{RULE_OTHER_STACKS}: {rng} overlaps stack of task {other.id}"
                )
    return violations


@dataclass
class CreationOutcome:
    task: Optional[TaskRecord]
    violations: list
    intersection_checks: int


def create_task(
    spec: TaskSpec,
    existing: list[TaskRecord],
    profile: MemoryProfile,
    layout: KernelLayout,
) -> CreationOutcome:
    """Validate and instantiate a task; hardening failures void the creation.

    Descriptor legality of the stack, code, and user regions is a
    precondition and raises; rule violations return a VOIDED record instead,
    mirroring a kernel that clears the task from the scheduler.
    """
    validate_descriptor_fields(spec.stack_region)
    validate_descriptor_fields(spec.code_region)
    for rng, _perm in spec.user_regions:
        validate_descriptor_fields(rng)
    if len(spec.user_regions) > 3:
        raise ConfigError(f"task {spec.name}: more than 3 user regions")

    checks: list = []
    violations: list[str] = []
    if layout.mode == Mode.DBOX:
        candidate = [spec.stack_region] + [rng for rng, _ in spec.user_regions]
        violations = hardening_violations(candidate, existing, profile, layout, checks)

    task = TaskRecord(
        id=spec.id,
        name=spec.name,
        privileged=spec.privileged,
        code_region=spec.code_region,
        stack_region=spec.stack_region,
        user_regions=list(spec.user_regions),
        capabilities=tuple(spec.capabilities),
        behavior=list(spec.behavior),
        repeat=spec.repeat,
        state=TaskState.VOIDED if violations else TaskState.READY,
    )
    return CreationOutcome(
        task=task, violations=violations, intersection_checks=len(checks)
    )


_UNPRIV_RO_EXEC = Permission(Access.RW, Access.RO, execute_never=False)
_UNPRIV_RO_EXEC_FLASH = Permission(Access.RO, Access.RO, execute_never=False)
_UNPRIV_RW_XN = Permission(Access.RW, Access.RW, execute_never=True)
_PRIV_RO_EXEC = Permission(Access.RO, Access.NONE, execute_never=False)
_PRIV_RW_XN = Permission(Access.RW, Access.NONE, execute_never=True)


def _descriptor(number: int, rng: AddressRange, perm: Permission) -> MpuRegionDescriptor:
    try:
        return MpuRegionDescriptor(number=number, range=rng, permission=perm)
    except ValueError as exc:
        raise ConfigError(f"slot {number}: {exc}") from None


# Dynamic slots rewritten on every context switch, per mode.  The remaining
# slots hold kernel-owned regions configured once at boot.
DYNAMIC_SLOTS = {Mode.DBOX: (1, 2, 3, 4, 5), Mode.FMPU_COMPAT: (4, 5, 6, 7)}


def build_mpu_configuration(task: TaskRecord, layout: KernelLayout) -> MpuConfiguration:
    """Assemble the task's active MPU window for the current mode.

    Hardened layout: syscalls at 0, task code 1, stack 2 (never executable),
    user regions 3..5, kernel code 6, kernel data 7.  Compat layout: merged
    unprivileged flash at 0, kernel code 1, kernel data 2, the whole
    peripheral partition at 3, stack 4, user regions 5..7, so user regions
    outrank the kernel.
    """
    descriptors = []
    if layout.mode == Mode.DBOX:
        descriptors.append(_descriptor(0, layout.syscalls_region, _UNPRIV_RO_EXEC_FLASH))
        descriptors.append(_descriptor(1, task.code_region, _UNPRIV_RO_EXEC_FLASH))
        descriptors.append(_descriptor(2, task.stack_region, _UNPRIV_RW_XN))
        for i, (rng, perm) in enumerate(task.user_regions[:3]):
            descriptors.append(_descriptor(3 + i, rng, perm))
        descriptors.append(_descriptor(6, layout.kernel_code_region, _PRIV_RO_EXEC))
        descriptors.append(_descriptor(7, layout.kernel_data_region, _PRIV_RW_XN))
    else:
        flash_span = _enclosing_pow2(task.code_region, layout)
        descriptors.append(_descriptor(0, flash_span, _UNPRIV_RO_EXEC_FLASH))
        descriptors.append(_descriptor(1, layout.kernel_code_region, _PRIV_RO_EXEC))
        descriptors.append(_descriptor(2, layout.kernel_data_region, _PRIV_RW_XN))
        descriptors.append(_descriptor(3, PERIPHERAL_PARTITION, _UNPRIV_RW_XN))
        descriptors.append(_descriptor(4, task.stack_region, _UNPRIV_RW_XN))
        for i, (rng, perm) in enumerate(task.user_regions[:3]):
            descriptors.append(_descriptor(5 + i, rng, perm))
    return configuration_from(descriptors, background_enabled=True)


def _enclosing_pow2(code: AddressRange, layout: KernelLayout) -> AddressRange:
    """Smallest legal region covering both syscalls and the task code.

    Models the compat mode's single merged unprivileged-flash window.
    """
    lo = min(code.base, layout.syscalls_region.base)
    hi = max(code.end, layout.syscalls_region.end)
    size = 32
    while True:
        base = lo - (lo % size)
        if base + size >= hi:
            return AddressRange(base, size)
        size *= 2


@dataclass
class SwitchCounters:
    context_switches: int = 0
    dynamic_regions_written: int = 0


def context_switch(
    from_task: Optional[TaskRecord],
    to_task: TaskRecord,
    layout: KernelLayout,
    counters: Optional[SwitchCounters] = None,
) -> MpuConfiguration:
    """Reprogram the MPU for the incoming task.

    The per-task slots are always rewritten, even when the scheduler picks
    the same task again; nothing is cached.
    """
    cfg = build_mpu_configuration(to_task, layout)
    if counters is not None:
        counters.context_switches += 1
        counters.dynamic_regions_written += len(DYNAMIC_SLOTS[layout.mode])
    return cfg


def schedule_tick(
    tasks: list[TaskRecord],
    current: Optional[TaskRecord],
    can_unblock: bool = False,
) -> Optional[TaskRecord]:
    """Round-robin with a one-tick slice, ordered by ascending task id.

    Blocked and finished tasks are skipped.  Returns None when nothing is
    runnable but a pending event may still wake a blocked task; raises
    IdleError when nothing ever will.
    """
    order = sorted(tasks, key=lambda t: t.id)
    runnable = [t for t in order if t.runnable()]
    if not runnable:
        blocked = [t for t in order if t.state == TaskState.BLOCKED_ON_NOTIFY]
        if blocked and can_unblock:
            return None
        raise IdleError("no task can ever run again")
    if current is None:
        return runnable[0]
    for t in runnable:
        if t.id > current.id:
            return t
    return runnable[0]


def handle_mpu_violation(
    task: TaskRecord, tick: int, detail: str, faults: list
) -> None:
    """Stop the offending task and record the event; other tasks keep running."""
    task.state = TaskState.STOPPED
    faults.append(
        FaultEvent(tick=tick, task_id=task.id, kind=FaultKind.MPU_VIOLATION, detail=detail)
    )


def redefine_user_regions(
    task: TaskRecord,
    new_regions: list,
    existing: list[TaskRecord],
    profile: MemoryProfile,
    layout: KernelLayout,
    tick: int,
    faults: list,
) -> bool:
    """Replace a running task's user regions, subject to the hardening rules.

    A rejected request leaves the task running with its old regions; the
    replacement takes effect at the next context switch either way.
    """
    for rng, _perm in new_regions:
        validate_descriptor_fields(rng)
    if len(new_regions) > 3:
        raise ConfigError(f"task {task.name}: more than 3 user regions")
    if layout.mode == Mode.DBOX:
        others = [t for t in existing if t.id != task.id]
        ranges = [rng for rng, _ in new_regions]
        violations = hardening_violations(ranges, others, profile, layout)
        if violations:
            faults.append(
                FaultEvent(
                    tick=tick,
                    task_id=task.id,
                    kind=FaultKind.REGION_REDEFINITION_REJECTED,
                    detail="; ".join(violations),
                )
            )
            return False
    task.user_regions = list(new_regions)
    return True
