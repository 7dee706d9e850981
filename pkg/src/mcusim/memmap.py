"""Simulated MCU address space: fixed partitions, peripherals, range arithmetic.

The 32-bit map follows the ARMv7-M convention of eight 0.5 GB primary
partitions; only the four the simulator cares about are named here.  All
ranges are half-open [base, base + size).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Optional

ADDRESS_LIMIT = 1 << 32
PARTITION_SIZE = 0x2000_0000


class SchemaError(ValueError):
    """Scenario document is malformed or violates a type invariant."""


class OverlapError(ValueError):
    """Two peripheral ranges intersect."""


class PartitionError(ValueError):
    """A declared range lies outside its required partition."""


@dataclass(frozen=True)
class AddressRange:
    """Half-open byte range [base, base+size) inside the 32-bit map."""

    base: int
    size: int

    def __post_init__(self):
        if not 0 <= self.base < ADDRESS_LIMIT:
            raise SchemaError(f"base 0x{self.base:x} outside 32-bit space")
        if self.size <= 0:
            raise SchemaError(f"size must be positive, got {self.size}")
        if self.base + self.size > ADDRESS_LIMIT:
            raise SchemaError(
                f"range [0x{self.base:x}, +{self.size}) overflows 32 bits"
            )

    @property
    def end(self) -> int:
        return self.base + self.size

    def contains_addr(self, addr: int) -> bool:
        return self.base <= addr < self.end

    def intersects(self, other: "AddressRange") -> bool:
        return self.base < other.end and other.base < self.end

    def __str__(self) -> str:
        return f"[0x{self.base:08x}, 0x{self.end:08x})"


CODE_PARTITION = AddressRange(0x0000_0000, PARTITION_SIZE)
SRAM_PARTITION = AddressRange(0x2000_0000, PARTITION_SIZE)
PERIPHERAL_PARTITION = AddressRange(0x4000_0000, PARTITION_SIZE)
SYSTEM_PARTITION = AddressRange(0xE000_0000, PARTITION_SIZE)


def contains(outer: AddressRange, inner: AddressRange) -> bool:
    """True iff inner lies wholly within outer."""
    return inner.base >= outer.base and inner.end <= outer.end


def intersect(a: AddressRange, b: AddressRange) -> Optional[AddressRange]:
    """Intersection of two ranges, or None when disjoint."""
    lo = max(a.base, b.base)
    hi = min(a.end, b.end)
    if lo >= hi:
        return None
    return AddressRange(lo, hi - lo)


def subtract(outer: AddressRange, holes: Iterable[AddressRange]) -> list[AddressRange]:
    """Pieces of outer not covered by any hole, in ascending order."""
    pieces = [outer]
    for hole in holes:
        next_pieces = []
        for piece in pieces:
            cut = intersect(piece, hole)
            if cut is None:
                next_pieces.append(piece)
                continue
            if piece.base < cut.base:
                next_pieces.append(AddressRange(piece.base, cut.base - piece.base))
            if cut.end < piece.end:
                next_pieces.append(AddressRange(cut.end, piece.end - cut.end))
        pieces = next_pieces
    return sorted(pieces, key=lambda r: r.base)


class PeripheralKind(str, enum.Enum):
    USART = "usart"
    SPI = "spi"
    I2C = "i2c"
    ADC = "adc"
    GPIO = "gpio"
    TIMER = "timer"
    DMA_CONTROLLER = "dma_controller"
    SYSTEM = "system"
    OTHER = "other"


class EarKind(str, enum.Enum):
    NONE = "none"
    I2C_SLAVE_ADDRESS = "i2c_slave_address"
    SPI_SLAVE_SELECT = "spi_slave_select"
    ADC_CHANNEL_MASK = "adc_channel_mask"


class DescriptorHome(str, enum.Enum):
    """Where the DMA controller keeps its transfer descriptors."""

    MMIO = "mmio"
    KERNEL_RAM = "kernel_ram"


@dataclass(frozen=True)
class PeripheralRecord:
    id: str
    range: AddressRange
    kind: PeripheralKind = PeripheralKind.OTHER
    dma_capable: bool = False
    ear_kind: EarKind = EarKind.NONE


@dataclass(frozen=True)
class MemoryProfile:
    flash: AddressRange
    ram: AddressRange
    peripherals: tuple[PeripheralRecord, ...]
    dma_channels: int
    dma_descriptor_home: DescriptorHome = DescriptorHome.MMIO
    transfer_rate: int = 4
    peripheral_partition: AddressRange = field(default=PERIPHERAL_PARTITION)
    system_partition: AddressRange = field(default=SYSTEM_PARTITION)

    def dma_controllers(self) -> list[PeripheralRecord]:
        return [p for p in self.peripherals if p.kind == PeripheralKind.DMA_CONTROLLER]

    def standard_peripherals(self) -> list[PeripheralRecord]:
        return [p for p in self.peripherals if p.kind != PeripheralKind.SYSTEM]

    def system_peripherals(self) -> list[PeripheralRecord]:
        return [p for p in self.peripherals if p.kind == PeripheralKind.SYSTEM]

    def peripheral(self, peripheral_id: str) -> Optional[PeripheralRecord]:
        for p in self.peripherals:
            if p.id == peripheral_id:
                return p
        return None


def to_int(value) -> int:
    """Accept a plain int or a hex/decimal string ("0x40000000")."""
    if isinstance(value, bool):
        raise SchemaError(f"expected integer, got boolean {value}")
    if isinstance(value, int):
        return value
    if isinstance(value, str):
        try:
            return int(value, 0)
        except ValueError:
            raise SchemaError(f"not an integer: {value!r}") from None
    raise SchemaError(f"expected integer, got {type(value).__name__}")


def range_from_document(obj, where: str = "range") -> AddressRange:
    if not isinstance(obj, dict) or "base" not in obj or "size" not in obj:
        raise SchemaError(f"{where}: expected an object with base and size")
    try:
        return AddressRange(to_int(obj["base"]), to_int(obj["size"]))
    except SchemaError as exc:
        raise SchemaError(f"{where}: {exc}") from None


def range_to_document(r: AddressRange) -> dict:
    return {"base": f"0x{r.base:08x}", "size": r.size}


def _parse_enum(enum_cls, value, where: str):
    try:
        return enum_cls(value)
    except ValueError:
        allowed = ", ".join(m.value for m in enum_cls)
        raise SchemaError(f"{where}: {value!r} not one of {allowed}") from None


def load_profile(document: dict) -> MemoryProfile:
    """Build and validate a MemoryProfile from a scenario document.

    Accepts either the whole scenario document (uses its "mcu" object) or
    the mcu object itself.
    """
    if not isinstance(document, dict):
        raise SchemaError("profile document must be an object")
    mcu = document.get("mcu", document)
    if mcu == "default":
        mcu = default_profile_document()
    if not isinstance(mcu, dict):
        raise SchemaError("mcu section must be an object")

    for key in ("flash", "ram", "peripherals"):
        if key not in mcu:
            raise SchemaError(f"mcu section missing {key!r}")

    flash = range_from_document(mcu["flash"], "mcu.flash")
    ram = range_from_document(mcu["ram"], "mcu.ram")

    peripherals = []
    if not isinstance(mcu["peripherals"], list):
        raise SchemaError("mcu.peripherals must be an array")
    for i, entry in enumerate(mcu["peripherals"]):
        where = f"mcu.peripherals[{i}]"
        if not isinstance(entry, dict) or "id" not in entry:
            raise SchemaError(f"{where}: expected an object with an id")
        rng = range_from_document(entry, where)
        kind = _parse_enum(PeripheralKind, entry.get("kind", "other"), where)
        ear = _parse_enum(EarKind, entry.get("ear_kind", "none"), where)
        peripherals.append(
            PeripheralRecord(
                id=str(entry["id"]),
                range=rng,
                kind=kind,
                dma_capable=bool(entry.get("dma_capable", False)),
                ear_kind=ear,
            )
        )

    dma_channels = to_int(mcu.get("dma_channels", 1))
    if dma_channels < 1:
        raise SchemaError("mcu.dma_channels must be >= 1")
    transfer_rate = to_int(mcu.get("transfer_rate", 4))
    if transfer_rate < 1:
        raise SchemaError("mcu.transfer_rate must be >= 1")
    home = _parse_enum(
        DescriptorHome, mcu.get("dma_descriptor_home", "mmio"), "mcu.dma_descriptor_home"
    )

    profile = MemoryProfile(
        flash=flash,
        ram=ram,
        peripherals=tuple(peripherals),
        dma_channels=dma_channels,
        dma_descriptor_home=home,
        transfer_rate=transfer_rate,
    )
    _validate_profile(profile)
    return profile


def _validate_profile(profile: MemoryProfile) -> None:
    if not contains(CODE_PARTITION, profile.flash):
        raise PartitionError(f"flash {profile.flash} outside code partition")
    if not contains(SRAM_PARTITION, profile.ram):
        raise PartitionError(f"ram {profile.ram} outside SRAM partition")

    seen_ids = set()
    for p in profile.peripherals:
        if p.id in seen_ids:
            raise SchemaError(f"duplicate peripheral id {p.id!r}")
        seen_ids.add(p.id)
        if p.kind == PeripheralKind.SYSTEM:
            if not contains(SYSTEM_PARTITION, p.range):
                raise PartitionError(
                    f"system peripheral {p.id} {p.range} outside system partition"
                )
        else:
            if not contains(PERIPHERAL_PARTITION, p.range):
                raise PartitionError(
                    f"peripheral {p.id} {p.range} outside peripheral partition"
                )

    ordered = sorted(profile.peripherals, key=lambda p: p.range.base)
    for a, b in zip(ordered, ordered[1:]):
        if a.range.intersects(b.range):
            raise OverlapError(f"peripherals {a.id} and {b.id} overlap")


def emit_profile(profile: MemoryProfile) -> dict:
    """Serialize a profile back to its scenario-document form."""
    return {
        "flash": range_to_document(profile.flash),
        "ram": range_to_document(profile.ram),
        "dma_channels": profile.dma_channels,
        "dma_descriptor_home": profile.dma_descriptor_home.value,
        "transfer_rate": profile.transfer_rate,
        "peripherals": [
            {
                "id": p.id,
                "base": f"0x{p.range.base:08x}",
                "size": p.range.size,
                "kind": p.kind.value,
                "dma_capable": p.dma_capable,
                "ear_kind": p.ear_kind.value,
            }
            for p in profile.peripherals
        ],
    }


def peripheral_at(profile: MemoryProfile, addr: int) -> Optional[PeripheralRecord]:
    """The unique peripheral whose range contains addr, if any."""
    for p in profile.peripherals:
        if p.range.contains_addr(addr):
            return p
    return None


def default_profile_document() -> dict:
    """STM32L152RE-like inventory: 512 KiB flash, 80 KiB RAM, 154 KiB MMIO.

    The standard-peripheral ranges (DMA controllers included) sum to exactly
    157696 bytes; the catch-all MMIO_EXT block stands in for the bus segments
    this model does not name individually.
    """
    kb = 1024
    periphs = [
        ("TIM2", 0x4000_0000, "timer", False, "none"),
        ("TIM3", 0x4000_0400, "timer", False, "none"),
        ("TIM4", 0x4000_0800, "timer", False, "none"),
        ("TIM5", 0x4000_0C00, "timer", False, "none"),
        ("RTC", 0x4000_2800, "other", False, "none"),
        ("WWDG", 0x4000_2C00, "other", False, "none"),
        ("IWDG", 0x4000_3000, "other", False, "none"),
        ("SPI2", 0x4000_3800, "spi", True, "spi_slave_select"),
        ("USART2", 0x4000_4400, "usart", True, "none"),
        ("USART3", 0x4000_4800, "usart", True, "none"),
        ("I2C1", 0x4000_5400, "i2c", True, "i2c_slave_address"),
        ("I2C2", 0x4000_5800, "i2c", True, "i2c_slave_address"),
        ("PWR", 0x4000_7000, "other", False, "none"),
        ("DAC", 0x4000_7400, "other", True, "none"),
        ("SYSCFG", 0x4001_0000, "other", False, "none"),
        ("EXTI", 0x4001_0400, "other", False, "none"),
        ("ADC1", 0x4001_2400, "adc", True, "adc_channel_mask"),
        ("SPI1", 0x4001_3000, "spi", True, "spi_slave_select"),
        ("USART1", 0x4001_3800, "usart", True, "none"),
        ("GPIOA", 0x4002_0000, "gpio", True, "none"),
        ("GPIOB", 0x4002_0400, "gpio", True, "none"),
        ("GPIOC", 0x4002_0800, "gpio", True, "none"),
        ("GPIOD", 0x4002_0C00, "gpio", True, "none"),
        ("GPIOE", 0x4002_1000, "gpio", True, "none"),
        ("CRC", 0x4002_3000, "other", False, "none"),
        ("DMA1", 0x4002_6000, "dma_controller", False, "none"),
        ("DMA2", 0x4002_6400, "dma_controller", False, "none"),
    ]
    entries = [
        {
            "id": name,
            "base": f"0x{base:08x}",
            "size": kb,
            "kind": kind,
            "dma_capable": capable,
            "ear_kind": ear,
        }
        for name, base, kind, capable, ear in periphs
    ]
    entries.append(
        {
            "id": "MMIO_EXT",
            "base": "0x48000000",
            "size": 154 * kb - len(periphs) * kb,
            "kind": "other",
            "dma_capable": False,
            "ear_kind": "none",
        }
    )
    entries.append(
        {
            "id": "SCS",
            "base": "0xe000e000",
            "size": 4 * kb,
            "kind": "system",
            "dma_capable": False,
            "ear_kind": "none",
        }
    )
    return {
        "flash": {"base": "0x08000000", "size": 512 * kb},
        "ram": {"base": "0x20000000", "size": 80 * kb},
        "dma_channels": 4,
        "dma_descriptor_home": "mmio",
        "transfer_rate": 4,
        "peripherals": entries,
    }
