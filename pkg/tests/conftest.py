"""Shared fixtures: a small profile/layout pair sized for exhaustive checks."""

import pytest

from mcusim.kernel import KernelLayout, Mode, TaskRecord
from mcusim.memmap import (
    AddressRange,
    DescriptorHome,
    EarKind,
    MemoryProfile,
    PeripheralKind,
    PeripheralRecord,
)
from mcusim.mpu import Access, Permission
from mcusim.policy import DmaCapability, EarValue, Right


def make_toy_profile(**overrides) -> MemoryProfile:
    fields = dict(
        flash=AddressRange(0x0800_0000, 0x8000),
        ram=AddressRange(0x2000_0000, 0x4000),
        peripherals=(
            PeripheralRecord(
                "SPI1",
                AddressRange(0x4000_0000, 0x400),
                PeripheralKind.SPI,
                dma_capable=True,
                ear_kind=EarKind.SPI_SLAVE_SELECT,
            ),
            PeripheralRecord(
                "ADC1",
                AddressRange(0x4000_0400, 0x400),
                PeripheralKind.ADC,
                dma_capable=True,
                ear_kind=EarKind.ADC_CHANNEL_MASK,
            ),
            PeripheralRecord(
                "USART1",
                AddressRange(0x4000_0800, 0x400),
                PeripheralKind.USART,
                dma_capable=True,
            ),
            PeripheralRecord(
                "DMA1",
                AddressRange(0x4000_1000, 0x400),
                PeripheralKind.DMA_CONTROLLER,
            ),
            PeripheralRecord(
                "SCS",
                AddressRange(0xE000_E000, 0x1000),
                PeripheralKind.SYSTEM,
            ),
        ),
        dma_channels=2,
        dma_descriptor_home=DescriptorHome.MMIO,
        transfer_rate=4,
    )
    fields.update(overrides)
    return MemoryProfile(**fields)


def make_toy_layout(mode=Mode.DBOX, arena=None) -> KernelLayout:
    return KernelLayout(
        syscalls_region=AddressRange(0x0800_0000, 0x100),
        kernel_code_region=AddressRange(0x0800_1000, 0x1000),
        kernel_data_region=AddressRange(0x2000_0000, 0x400),
        mode=mode,
        descriptor_arena=arena,
    )


RW = Permission(Access.RW, Access.RW, execute_never=True)
RO = Permission(Access.RW, Access.RO, execute_never=True)


def make_task_a() -> TaskRecord:
    return TaskRecord(
        id=1,
        name="alpha",
        privileged=False,
        code_region=AddressRange(0x0800_2000, 0x400),
        stack_region=AddressRange(0x2000_0400, 0x100),
        user_regions=[
            (AddressRange(0x2000_0800, 0x100), RW),
            (AddressRange(0x2000_0C00, 0x100), RO),
        ],
        capabilities=(
            DmaCapability(
                "SPI1",
                frozenset({Right.READ, Right.WRITE, Right.FULL_DUPLEX}),
                EarValue(EarKind.SPI_SLAVE_SELECT, "SS_X"),
            ),
            DmaCapability(
                "ADC1",
                frozenset({Right.READ}),
                EarValue(EarKind.ADC_CHANNEL_MASK, frozenset({0, 4})),
            ),
        ),
    )


def make_task_b() -> TaskRecord:
    return TaskRecord(
        id=2,
        name="beta",
        privileged=False,
        code_region=AddressRange(0x0800_2400, 0x400),
        stack_region=AddressRange(0x2000_0500, 0x100),
        capabilities=(
            DmaCapability("USART1", frozenset({Right.READ, Right.WRITE})),
        ),
    )


@pytest.fixture
def toy_profile():
    return make_toy_profile()


@pytest.fixture
def toy_layout():
    return make_toy_layout()


@pytest.fixture
def task_a():
    return make_task_a()


@pytest.fixture
def task_b():
    return make_task_b()
