"""Capability-based DMA security policy with extensible access rights.

A capability pairs an on-chip peripheral with granted rights and,
for bus peripherals, the off-chip addressing values a task may use
(I2C slave address, SPI slave select, ADC channel mask).  Buffers are
never part of a capability: ownership is established against the
requesting task's stack and user-defined regions.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional, Union

from .memmap import AddressRange, EarKind, MemoryProfile, PeripheralKind, contains
from .mpu import Access

if TYPE_CHECKING:
    from .kernel import TaskRecord


class Right(str, enum.Enum):
    READ = "read"
    WRITE = "write"
    FULL_DUPLEX = "full_duplex"


DUPLEX_KINDS = (PeripheralKind.SPI, PeripheralKind.I2C)


@dataclass(frozen=True)
class EarValue:
    """One extensible-access-rights value, tagged with its addressing kind."""

    kind: EarKind = EarKind.NONE
    value: Union[int, str, frozenset, None] = None

    def __post_init__(self):
        if self.kind == EarKind.NONE and self.value is not None:
            raise ValueError("ear kind none carries no value")
        if self.kind == EarKind.I2C_SLAVE_ADDRESS:
            if not isinstance(self.value, int) or not 0 <= self.value < 128:
                raise ValueError("i2c slave address must be a 7-bit integer")
        if self.kind == EarKind.SPI_SLAVE_SELECT and not isinstance(self.value, str):
            raise ValueError("spi slave select must be an identifier")
        if self.kind == EarKind.ADC_CHANNEL_MASK and not isinstance(self.value, frozenset):
            raise ValueError("adc channel mask must be a frozenset of channels")


EAR_NONE = EarValue()


def ear_grants(granted: EarValue, requested: EarValue) -> bool:
    """Subset semantics for masks, equality for scalar addresses."""
    if granted.kind != requested.kind:
        return False
    if granted.kind == EarKind.NONE:
        return True
    if granted.kind == EarKind.ADC_CHANNEL_MASK:
        return requested.value <= granted.value
    return requested.value == granted.value


@dataclass(frozen=True)
class DmaCapability:
    peripheral_id: str
    rights: frozenset
    ear: EarValue = EAR_NONE

    def __post_init__(self):
        if not self.rights:
            raise ValueError("capability rights must be nonempty")
        for r in self.rights:
            if not isinstance(r, Right):
                raise ValueError(f"unknown right {r!r}")


@dataclass(frozen=True)
class DmaRequest:
    requester: int
    peripheral_id: str
    operation: Right
    buffer: Optional[AddressRange] = None
    tx_buffer: Optional[AddressRange] = None
    rx_buffer: Optional[AddressRange] = None
    ear_params: EarValue = EAR_NONE

    def __post_init__(self):
        if self.operation == Right.FULL_DUPLEX:
            if self.tx_buffer is None or self.rx_buffer is None:
                raise ValueError("full-duplex request needs tx_buffer and rx_buffer")
            if self.tx_buffer.size != self.rx_buffer.size:
                raise ValueError("full-duplex buffers must have equal length")
        elif self.buffer is None:
            raise ValueError(f"{self.operation.value} request needs a buffer")


class Reason(str, enum.Enum):
    OK = "ok"
    NO_CAPABILITY = "no_capability"
    RIGHT_MISSING = "right_missing"
    BUFFER_NOT_OWNED = "buffer_not_owned"
    EAR_DENIED = "ear_denied"
    PERIPHERAL_UNKNOWN = "peripheral_unknown"
    NOT_DMA_CAPABLE = "not_dma_capable"


class Decision(str, enum.Enum):
    ACCEPT = "accept"
    REJECT = "reject"


@dataclass(frozen=True)
class Verdict:
    decision: Decision
    reason: Reason

    def __post_init__(self):
        if self.decision == Decision.ACCEPT and self.reason != Reason.OK:
            raise ValueError("ACCEPT verdicts carry reason OK")


ACCEPT = Verdict(Decision.ACCEPT, Reason.OK)


def _reject(reason: Reason) -> Verdict:
    return Verdict(Decision.REJECT, reason)


class CheckCounter:
    """Counts elementary policy checks so runs can report validation cost."""

    def __init__(self):
        self.count = 0

    def bump(self, n: int = 1) -> None:
        self.count += n


def _readable(access: Access) -> bool:
    return access in (Access.RO, Access.RW)


def _writable(access: Access) -> bool:
    return access == Access.RW


def _buffer_owned(
    buffer: AddressRange,
    task: "TaskRecord",
    need_write: bool,
    counter: Optional[CheckCounter],
) -> bool:
    """Containment must hold within a single region, stack or user-defined.

    The stack is readable and writable by its owner; user regions must carry
    the needed unprivileged permission.  A DMA read lands in the buffer, so
    it needs write permission; a DMA write sources from it, so read suffices.
    """
    if counter:
        counter.bump()
    if contains(task.stack_region, buffer):
        return True
    for region, perm in task.user_regions:
        if counter:
            counter.bump()
        if not contains(region, buffer):
            continue
        access = perm.unprivileged_access
        if need_write and _writable(access):
            return True
        if not need_write and _readable(access):
            return True
    return False


def validate_request(
    req: DmaRequest,
    task: "TaskRecord",
    profile: MemoryProfile,
    counter: Optional[CheckCounter] = None,
) -> Verdict:
    """Decide a DMA request against the requester's capabilities and regions.

    Check order is part of the contract (the oracle mirrors it):
    peripheral exists, DMA-capable, capability held, right granted, EAR
    granted, buffer owned.
    """
    peripheral = profile.peripheral(req.peripheral_id)
    if counter:
        counter.bump()
    if peripheral is None:
        return _reject(Reason.PERIPHERAL_UNKNOWN)
    if not peripheral.dma_capable:
        return _reject(Reason.NOT_DMA_CAPABLE)

    caps = [c for c in task.capabilities if c.peripheral_id == req.peripheral_id]
    if counter:
        counter.bump(len(task.capabilities))
    if not caps:
        return _reject(Reason.NO_CAPABILITY)

    righted = [c for c in caps if req.operation in c.rights]
    if counter:
        counter.bump(len(caps))
    if not righted:
        return _reject(Reason.RIGHT_MISSING)

    # Any single capability granting both the right and the EAR suffices.
    if counter:
        counter.bump(len(righted))
    if not any(ear_grants(c.ear, req.ear_params) for c in righted):
        return _reject(Reason.EAR_DENIED)

    if req.operation == Right.WRITE:
        owned = _buffer_owned(req.buffer, task, need_write=False, counter=counter)
    elif req.operation == Right.READ:
        owned = _buffer_owned(req.buffer, task, need_write=True, counter=counter)
    else:
        owned = _buffer_owned(
            req.tx_buffer, task, need_write=False, counter=counter
        ) and _buffer_owned(req.rx_buffer, task, need_write=True, counter=counter)
    if not owned:
        return _reject(Reason.BUFFER_NOT_OWNED)
    return ACCEPT


def brute_force_validate(
    req: DmaRequest, task: "TaskRecord", profile: MemoryProfile
) -> Verdict:
    """Exhaustive-enumeration twin of validate_request; test oracle only.

    Ownership is established by scanning every buffer byte against every
    candidate region, EAR masks by walking each requested element.
    """

    def owned_by_byte_scan(buffer, need_write):
        candidates = [("stack", task.stack_region, None)]
        for region, perm in task.user_regions:
            candidates.append(("user", region, perm))
        for name, region, perm in candidates:
            every_byte_in = True
            for addr in range(buffer.base, buffer.base + buffer.size):
                if not (region.base <= addr < region.base + region.size):
                    every_byte_in = False
            if not every_byte_in:
                continue
            if name == "stack":
                return True
            if need_write and perm.unprivileged_access == Access.RW:
                return True
            if not need_write and perm.unprivileged_access in (Access.RO, Access.RW):
                return True
        return False

    def ear_ok(granted, requested):
        if granted.kind != requested.kind:
            return False
        if granted.kind == EarKind.NONE:
            return True
        if granted.kind == EarKind.ADC_CHANNEL_MASK:
            for channel in requested.value:
                found = False
                for allowed in granted.value:
                    if channel == allowed:
                        found = True
                if not found:
                    return False
            return True
        return requested.value == granted.value

    peripheral = None
    for p in profile.peripherals:
        if p.id == req.peripheral_id:
            peripheral = p
    if peripheral is None:
        return _reject(Reason.PERIPHERAL_UNKNOWN)
    if not peripheral.dma_capable:
        return _reject(Reason.NOT_DMA_CAPABLE)

    holding = [c for c in task.capabilities if c.peripheral_id == req.peripheral_id]
    if len(holding) == 0:
        return _reject(Reason.NO_CAPABILITY)

    with_right = []
    for c in holding:
        for r in c.rights:
            if r == req.operation and c not in with_right:
                with_right.append(c)
    if len(with_right) == 0:
        return _reject(Reason.RIGHT_MISSING)

    granted = False
    for c in with_right:
        if ear_ok(c.ear, req.ear_params):
            granted = True
    if not granted:
        return _reject(Reason.EAR_DENIED)

    if req.operation == Right.WRITE:
        owned = owned_by_byte_scan(req.buffer, need_write=False)
    elif req.operation == Right.READ:
        owned = owned_by_byte_scan(req.buffer, need_write=True)
    else:
        owned = owned_by_byte_scan(req.tx_buffer, need_write=False) and owned_by_byte_scan(
            req.rx_buffer, need_write=True
        )
    if not owned:
        return _reject(Reason.BUFFER_NOT_OWNED)
    return ACCEPT


def validate_capability(cap: DmaCapability, profile: MemoryProfile) -> None:
    """Creation-time checks tying a capability to the profile's inventory."""
    peripheral = profile.peripheral(cap.peripheral_id)
    if peripheral is None:
        raise ValueError(f"capability references unknown peripheral {cap.peripheral_id!r}")
    if cap.ear.kind != peripheral.ear_kind:
        raise ValueError(
            f"capability ear kind {cap.ear.kind.value} does not match "
            f"{cap.peripheral_id} ({peripheral.ear_kind.value})"
        )
    if Right.FULL_DUPLEX in cap.rights and peripheral.kind not in DUPLEX_KINDS:
        raise ValueError(
            f"full-duplex right on {cap.peripheral_id} ({peripheral.kind.value}): "
            "only SPI and I2C support duplex"
        )
    if not profile.dma_controllers():
        raise ValueError("profile declares capabilities but no DMA controller")
