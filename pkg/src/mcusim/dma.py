"""Bus-master DMA controller model: channels, descriptors, MPU bypass.

The engine moves bytes between address ranges with no access checks at
all; that bypass is the property the rest of the system defends against.
Descriptors follow a three-step life: configure, transfer over one or
more ticks, then invalidate and signal completion.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

from .memmap import AddressRange, DescriptorHome, MemoryProfile
from .mpu import AccessKind, AccessQuery, CheckResult, MpuConfiguration, check_access


class Direction(str, enum.Enum):
    PERIPH_TO_MEM = "periph_to_mem"
    MEM_TO_PERIPH = "mem_to_periph"
    FULL_DUPLEX = "full_duplex"


class ByteStore:
    """Sparse simulated memory; unwritten bytes read as zero."""

    def __init__(self):
        self._bytes: dict[int, int] = {}

    def read(self, addr: int) -> int:
        return self._bytes.get(addr, 0)

    def write(self, addr: int, value: int) -> None:
        self._bytes[addr] = value & 0xFF

    def write_span(self, addr: int, values) -> None:
        for i, v in enumerate(values):
            self.write(addr + i, v)

    def read_span(self, addr: int, length: int) -> list[int]:
        return [self.read(addr + i) for i in range(length)]


@dataclass
class TransferDescriptor:
    """One programmed channel: legs of (source, destination) moved in step.

    A leg's range smaller than the transfer length is treated as a fixed
    data register and wraps; buffer-sized ranges advance byte by byte.
    Plain transfers have one leg; full-duplex has two of equal length.
    """

    channel: int
    source: AddressRange
    destination: AddressRange
    length: int
    direction: Direction
    owner_task: int
    ticks_remaining: int = 0
    rx_source: Optional[AddressRange] = None
    rx_destination: Optional[AddressRange] = None
    moved: int = 0

    def __post_init__(self):
        if self.length <= 0:
            raise ValueError("transfer length must be positive")
        if self.direction == Direction.FULL_DUPLEX:
            if self.rx_source is None or self.rx_destination is None:
                raise ValueError("full-duplex descriptor needs both legs")

    def legs(self) -> list[tuple[AddressRange, AddressRange]]:
        legs = [(self.source, self.destination)]
        if self.direction == Direction.FULL_DUPLEX:
            legs.append((self.rx_source, self.rx_destination))
        return legs


@dataclass(frozen=True)
class Completion:
    channel: int
    owner_task: int
    status: str = "ok"


@dataclass
class DmaEngineState:
    channel_count: int
    transfer_rate: int = 4
    channels: list = field(default_factory=list)
    completed: list = field(default_factory=list)

    def __post_init__(self):
        if not self.channels:
            self.channels = [None] * self.channel_count

    def free_channels(self) -> list[int]:
        return [i for i, d in enumerate(self.channels) if d is None]


class ConfigureResult(str, enum.Enum):
    OK = "ok"
    BUSY = "busy"


def engine_from_profile(profile: MemoryProfile) -> DmaEngineState:
    return DmaEngineState(
        channel_count=profile.dma_channels, transfer_rate=profile.transfer_rate
    )


def configure_channel(state: DmaEngineState, d: TransferDescriptor) -> ConfigureResult:
    """Install a descriptor on its channel unless one is already active."""
    if not 0 <= d.channel < state.channel_count:
        raise IndexError(f"channel {d.channel} outside 0..{state.channel_count - 1}")
    if state.channels[d.channel] is not None:
        return ConfigureResult.BUSY
    d.ticks_remaining = -(-d.length // state.transfer_rate)
    d.moved = 0
    state.channels[d.channel] = d
    return ConfigureResult.OK


def _move(memory: ByteStore, src: AddressRange, dst: AddressRange, offset: int, count: int, total: int):
    for i in range(offset, offset + count):
        src_addr = src.base + (i if src.size >= total else i % src.size)
        dst_addr = dst.base + (i if dst.size >= total else i % dst.size)
        memory.write(dst_addr, memory.read(src_addr))


def engine_tick(state: DmaEngineState, memory: ByteStore) -> list[Completion]:
    """Advance every active channel by one tick's worth of bytes.

    Byte movement never consults the MPU; completions come back in channel
    order so runs stay deterministic.
    """
    finished: list[Completion] = []
    for channel in range(state.channel_count):
        d = state.channels[channel]
        if d is None:
            continue
        step = min(state.transfer_rate, d.length - d.moved)
        for src, dst in d.legs():
            _move(memory, src, dst, d.moved, step, d.length)
        d.moved += step
        d.ticks_remaining = max(d.ticks_remaining - 1, 0)
        if d.moved >= d.length:
            state.channels[channel] = None
            completion = Completion(channel=channel, owner_task=d.owner_task)
            state.completed.append(completion)
            finished.append(completion)
    return finished


def descriptor_target(profile: MemoryProfile, arena: Optional[AddressRange]) -> AddressRange:
    """Where descriptor words live: controller MMIO or the kernel RAM arena."""
    if profile.dma_descriptor_home == DescriptorHome.KERNEL_RAM and arena is not None:
        return arena
    controllers = profile.dma_controllers()
    if not controllers:
        raise ValueError("profile declares no DMA controller")
    return controllers[0].range


DESCRIPTOR_WORDS = 16  # bytes a raw configuration writes into the target


def raw_dma_config_attempt(
    state: DmaEngineState,
    descriptor: TransferDescriptor,
    mpu_cfg: MpuConfiguration,
    privileged: bool,
    profile: MemoryProfile,
    arena: Optional[AddressRange] = None,
) -> tuple[CheckResult, Optional[ConfigureResult]]:
    """A task writing descriptor fields straight into the controller.

    The write lands only if the MPU allows the task to reach the location
    holding the descriptors; on success the channel is programmed exactly
    as if the trusted path had configured it.
    """
    target = descriptor_target(profile, arena)
    q = AccessQuery(
        addr=target.base,
        width=min(DESCRIPTOR_WORDS, target.size),
        kind=AccessKind.WRITE,
        privileged=privileged,
    )
    verdict = check_access(mpu_cfg, q, profile)
    if verdict == CheckResult.FAULT:
        return CheckResult.FAULT, None
    return CheckResult.ALLOW, configure_channel(state, descriptor)
