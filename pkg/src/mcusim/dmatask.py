"""Trusted privileged DMA service: request queue, validation, channel registry, ISR.

The service is the only path from unprivileged tasks to the DMA engine.
It validates each request against the requester's capabilities, programs
the controller on a free channel, registers the requester for exactly one
notification, and converts completion interrupts into notifications.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .dma import (
    Completion,
    ConfigureResult,
    Direction,
    DmaEngineState,
    TransferDescriptor,
    configure_channel,
)
from .kernel import FaultEvent, FaultKind, TaskRecord, TaskState
from .memmap import AddressRange, EarKind, MemoryProfile
from .policy import (
    CheckCounter,
    Decision,
    DmaRequest,
    Right,
    validate_request,
)

DATA_REGISTER_BYTES = 4

STATUS_OK = "ok"
STATUS_REJECTED = "rejected"
REASON_QUEUE_FULL = "queue_full"


@dataclass(frozen=True)
class DmaNotification:
    channel: Optional[int]
    status: str
    reason: str
    request: DmaRequest


@dataclass
class DmaServiceState:
    capacity: int
    channel_count: int
    request_queue: list = field(default_factory=list)  # [req, retries]
    channel_registry: list = field(default_factory=list)
    peripheral_state: dict = field(default_factory=dict)
    transfers: list = field(default_factory=list)

    def __post_init__(self):
        if not self.channel_registry:
            self.channel_registry = [None] * self.channel_count

    def registered_channels(self) -> int:
        return sum(1 for entry in self.channel_registry if entry is not None)


def service_from_profile(profile: MemoryProfile) -> DmaServiceState:
    # Queue sized one entry per channel, mirroring the per-channel budget
    # of the reference request queue.
    return DmaServiceState(capacity=profile.dma_channels, channel_count=profile.dma_channels)


def _notify(
    task: TaskRecord,
    notification: DmaNotification,
    tick: int,
    log: list,
) -> None:
    task.notification_box.append(notification)
    if task.state == TaskState.BLOCKED_ON_NOTIFY:
        task.state = TaskState.READY
    log.append(
        {
            "tick": tick,
            "task": task.id,
            "channel": notification.channel,
            "status": notification.status,
            "reason": notification.reason,
            "peripheral": notification.request.peripheral_id,
            "operation": notification.request.operation.value,
        }
    )


def submit_request(
    state: DmaServiceState,
    req: DmaRequest,
    requester: TaskRecord,
    tick: int,
    notifications_log: list,
) -> str:
    """Queue a request, or reject immediately when the queue is full."""
    if requester.state in (TaskState.STOPPED, TaskState.VOIDED):
        return "dropped"
    if len(state.request_queue) >= state.capacity:
        _notify(
            requester,
            DmaNotification(None, STATUS_REJECTED, REASON_QUEUE_FULL, req),
            tick,
            notifications_log,
        )
        return "queue_full"
    state.request_queue.append([req, 0])
    return "queued"


def _data_register(profile: MemoryProfile, peripheral_id: str) -> AddressRange:
    p = profile.peripheral(peripheral_id)
    return AddressRange(p.range.base, min(DATA_REGISTER_BYTES, p.range.size))


def _apply_ear(state: DmaServiceState, req: DmaRequest) -> None:
    """Program the peripheral's addressing fields from the granted EAR."""
    ear = req.ear_params
    if ear.kind == EarKind.NONE:
        return
    slot = state.peripheral_state.setdefault(req.peripheral_id, {})
    if ear.kind == EarKind.I2C_SLAVE_ADDRESS:
        slot["i2c_slave_address"] = ear.value
    elif ear.kind == EarKind.SPI_SLAVE_SELECT:
        slot["spi_slave_select"] = ear.value
    elif ear.kind == EarKind.ADC_CHANNEL_MASK:
        slot["adc_channels"] = sorted(ear.value)


def _build_descriptor(
    req: DmaRequest, channel: int, profile: MemoryProfile
) -> TransferDescriptor:
    dr = _data_register(profile, req.peripheral_id)
    if req.operation == Right.WRITE:
        return TransferDescriptor(
            channel=channel,
            source=req.buffer,
            destination=dr,
            length=req.buffer.size,
            direction=Direction.MEM_TO_PERIPH,
            owner_task=req.requester,
        )
    if req.operation == Right.READ:
        return TransferDescriptor(
            channel=channel,
            source=dr,
            destination=req.buffer,
            length=req.buffer.size,
            direction=Direction.PERIPH_TO_MEM,
            owner_task=req.requester,
        )
    return TransferDescriptor(
        channel=channel,
        source=req.tx_buffer,
        destination=dr,
        length=req.tx_buffer.size,
        direction=Direction.FULL_DUPLEX,
        owner_task=req.requester,
        rx_source=dr,
        rx_destination=req.rx_buffer,
    )


def service_step(
    state: DmaServiceState,
    tasks_by_id: dict,
    engine: DmaEngineState,
    profile: MemoryProfile,
    tick: int,
    faults: list,
    notifications_log: list,
    validation_counts: Optional[list] = None,
    trace: Optional[list] = None,
) -> None:
    """Process the head request: validate, then program a channel or reject."""
    if not state.request_queue:
        return
    entry = state.request_queue.pop(0)
    req, retries = entry
    requester = tasks_by_id.get(req.requester)
    if requester is None or requester.state in (TaskState.STOPPED, TaskState.VOIDED):
        if trace is not None:
            trace.append((tick, "DMA", "drop_orphan_request", req.requester, req.peripheral_id))
        return

    counter = CheckCounter()
    verdict = validate_request(req, requester, profile, counter)
    if validation_counts is not None:
        validation_counts.append(counter.count)

    if verdict.decision == Decision.REJECT:
        faults.append(
            FaultEvent(
                tick=tick,
                task_id=requester.id,
                kind=FaultKind.DMA_REQUEST_REJECTED,
                detail=f"{req.peripheral_id} {req.operation.value}: {verdict.reason.value}",
            )
        )
        _notify(
            requester,
            DmaNotification(None, STATUS_REJECTED, verdict.reason.value, req),
            tick,
            notifications_log,
        )
        if trace is not None:
            trace.append((tick, "POL", f"reject_{verdict.reason.value}", requester.id, req.peripheral_id))
        return

    free = engine.free_channels()
    if not free:
        entry[1] = retries + 1
        if entry[1] > state.channel_count:
            _notify(
                requester,
                DmaNotification(None, STATUS_REJECTED, REASON_QUEUE_FULL, req),
                tick,
                notifications_log,
            )
            return
        state.request_queue.insert(0, entry)
        return

    channel = free[0]
    descriptor = _build_descriptor(req, channel, profile)
    _apply_ear(state, req)
    result = configure_channel(engine, descriptor)
    assert result == ConfigureResult.OK
    state.channel_registry[channel] = (requester.id, req)
    state.transfers.append(
        {
            "tick": tick,
            "channel": channel,
            "task": requester.id,
            "peripheral": req.peripheral_id,
            "operation": req.operation.value,
            "buffers": _owned_ranges(req),
        }
    )
    if trace is not None:
        trace.append((tick, "POL", "accept", requester.id, f"{req.peripheral_id} ch{channel}"))


def _owned_ranges(req: DmaRequest) -> list:
    if req.operation == Right.FULL_DUPLEX:
        return [
            {"base": req.tx_buffer.base, "size": req.tx_buffer.size},
            {"base": req.rx_buffer.base, "size": req.rx_buffer.size},
        ]
    return [{"base": req.buffer.base, "size": req.buffer.size}]


def isr_deliver(
    state: DmaServiceState,
    tasks_by_id: dict,
    completions: list[Completion],
    tick: int,
    notifications_log: list,
    trace: Optional[list] = None,
) -> int:
    """Turn engine completions into exactly-once notifications.

    Completions land in channel order.  Channels with no registered owner
    (raw-configured) or a stopped owner are freed and logged as orphans.
    Returns the number of SVC-level deliveries performed.
    """
    delivered = 0
    for completion in completions:
        entry = state.channel_registry[completion.channel]
        state.channel_registry[completion.channel] = None
        if entry is None:
            if trace is not None:
                trace.append((tick, "ISR", "orphan_completion", completion.owner_task, f"ch{completion.channel}"))
            continue
        task_id, req = entry
        task = tasks_by_id.get(task_id)
        if task is None or task.state in (TaskState.STOPPED, TaskState.VOIDED):
            if trace is not None:
                trace.append((tick, "ISR", "orphan_completion", task_id, f"ch{completion.channel}"))
            continue
        _notify(
            task,
            DmaNotification(completion.channel, STATUS_OK, "ok", req),
            tick,
            notifications_log,
        )
        delivered += 1
        if trace is not None:
            trace.append((tick, "ISR", "notify_ok", task_id, f"ch{completion.channel}"))
    return delivered
