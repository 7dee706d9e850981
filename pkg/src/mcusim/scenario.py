"""Scenario documents: the JSON-shaped input describing one simulated system.

Top-level keys: "mcu", "mode", "kernel", "tasks", "ticks", "attack_toggles",
plus optional "memory_init", "memory_probes", "name", "description".
Addresses may be written as hex strings.  Actions tagged with "when" are
kept only while their toggle is on, so one file can carry both the benign
and the attacked variant of a behavior.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

from .kernel import KernelLayout, Mode, TaskSpec
from .memmap import (
    AddressRange,
    EarKind,
    MemoryProfile,
    SchemaError,
    load_profile,
    range_from_document,
    to_int,
)
from .mpu import Access, Permission, validate_descriptor_fields
from .policy import (
    DmaCapability,
    DmaRequest,
    EarValue,
    Right,
    validate_capability,
)


class ActionKind(str, enum.Enum):
    MEM_READ = "mem_read"
    MEM_WRITE = "mem_write"
    EXEC = "exec"
    SYSCALL = "syscall"
    DMA_REQUEST = "dma_request"
    RAW_DMA_CONFIG = "raw_dma_config"
    REDEFINE_REGIONS = "redefine_regions"
    WAIT_NOTIFY = "wait_notify"
    NOP = "nop"


# Action kinds that enter the kernel and must pass the syscall gate.
GATED_KINDS = (
    ActionKind.SYSCALL,
    ActionKind.DMA_REQUEST,
    ActionKind.REDEFINE_REGIONS,
    ActionKind.WAIT_NOTIFY,
)


@dataclass(frozen=True)
class Action:
    kind: ActionKind
    at: Optional[int] = None
    params: dict = field(default_factory=dict)
    when: Optional[str] = None


@dataclass
class Scenario:
    name: str
    mode: Mode
    profile: MemoryProfile
    layout: KernelLayout
    task_specs: list
    tick_limit: int
    attack_toggles: dict
    memory_init: list
    memory_probes: list
    dma_task_stack: AddressRange
    description: list
    mcu_document: dict


_ACCESS = {"none": Access.NONE, "ro": Access.RO, "rw": Access.RW}


def _parse_permission(obj: dict, where: str) -> Permission:
    unpriv = obj.get("access", "rw")
    if unpriv not in _ACCESS:
        raise SchemaError(f"{where}: access must be none|ro|rw")
    priv = obj.get("privileged_access", unpriv)
    if priv not in _ACCESS:
        raise SchemaError(f"{where}: privileged_access must be none|ro|rw")
    try:
        return Permission(
            privileged_access=_ACCESS[priv],
            unprivileged_access=_ACCESS[unpriv],
            execute_never=bool(obj.get("xn", True)),
        )
    except SchemaError as exc:
        raise SchemaError(f"{where}: {exc}") from None


def _parse_user_regions(entries, where: str) -> tuple:
    regions = []
    if not isinstance(entries, list):
        raise SchemaError(f"{where}: user_regions must be an array")
    if len(entries) > 3:
        raise SchemaError(f"{where}: at most 3 user regions")
    for i, entry in enumerate(entries):
        spot = f"{where}.user_regions[{i}]"
        rng = range_from_document(entry, spot)
        _require_legal_region(rng, spot)
        regions.append((rng, _parse_permission(entry, spot)))
    return tuple(regions)


def _require_legal_region(rng: AddressRange, where: str) -> None:
    try:
        validate_descriptor_fields(rng)
    except ValueError as exc:
        raise SchemaError(f"{where}: {exc}") from None


def _parse_ear(value, kind: EarKind, where: str) -> EarValue:
    try:
        if value is None:
            return EarValue()
        if kind == EarKind.I2C_SLAVE_ADDRESS:
            return EarValue(kind, to_int(value))
        if kind == EarKind.SPI_SLAVE_SELECT:
            if not isinstance(value, str):
                raise SchemaError("spi slave select must be a string")
            return EarValue(kind, value)
        if kind == EarKind.ADC_CHANNEL_MASK:
            if not isinstance(value, list):
                raise SchemaError("adc channel mask must be an array")
            return EarValue(kind, frozenset(to_int(v) for v in value))
        raise SchemaError(f"peripheral takes no ear value, got {value!r}")
    except (ValueError, SchemaError) as exc:
        raise SchemaError(f"{where}: {exc}") from None


def _parse_capabilities(entries, profile: MemoryProfile, where: str) -> tuple:
    if not isinstance(entries, list):
        raise SchemaError(f"{where}: capabilities must be an array")
    caps = []
    for i, entry in enumerate(entries):
        spot = f"{where}.capabilities[{i}]"
        if not isinstance(entry, dict) or "peripheral" not in entry:
            raise SchemaError(f"{spot}: expected an object with a peripheral")
        rights = entry.get("rights", [])
        if not isinstance(rights, list) or not rights:
            raise SchemaError(f"{spot}: rights must be a nonempty array")
        try:
            right_set = frozenset(Right(r) for r in rights)
        except ValueError:
            raise SchemaError(f"{spot}: rights are read|write|full_duplex") from None
        peripheral_id = str(entry["peripheral"])
        peripheral = profile.peripheral(peripheral_id)
        if peripheral is None:
            raise SchemaError(f"{spot}: unknown peripheral {peripheral_id!r}")
        ear = _parse_ear(entry.get("ear"), peripheral.ear_kind, spot)
        cap = DmaCapability(peripheral_id=peripheral_id, rights=right_set, ear=ear)
        try:
            validate_capability(cap, profile)
        except ValueError as exc:
            raise SchemaError(f"{spot}: {exc}") from None
        caps.append(cap)
    return tuple(caps)


def parse_request(
    obj: dict, requester: int, profile: MemoryProfile, where: str
) -> DmaRequest:
    if "peripheral" not in obj or "op" not in obj:
        raise SchemaError(f"{where}: dma request needs peripheral and op")
    try:
        op = Right(obj["op"])
    except ValueError:
        raise SchemaError(f"{where}: op is read|write|full_duplex") from None
    peripheral_id = str(obj["peripheral"])
    peripheral = profile.peripheral(peripheral_id)
    ear_kind = peripheral.ear_kind if peripheral is not None else EarKind.NONE
    ear = _parse_ear(obj.get("ear"), ear_kind, where)
    try:
        if op == Right.FULL_DUPLEX:
            return DmaRequest(
                requester=requester,
                peripheral_id=peripheral_id,
                operation=op,
                tx_buffer=range_from_document(obj["tx_buffer"], f"{where}.tx_buffer"),
                rx_buffer=range_from_document(obj["rx_buffer"], f"{where}.rx_buffer"),
                ear_params=ear,
            )
        return DmaRequest(
            requester=requester,
            peripheral_id=peripheral_id,
            operation=op,
            buffer=range_from_document(obj["buffer"], f"{where}.buffer"),
            ear_params=ear,
        )
    except KeyError as exc:
        raise SchemaError(f"{where}: missing {exc.args[0]}") from None
    except ValueError as exc:
        raise SchemaError(f"{where}: {exc}") from None


def _parse_action(obj: dict, where: str) -> Action:
    if not isinstance(obj, dict) or "kind" not in obj:
        raise SchemaError(f"{where}: expected an object with a kind")
    try:
        kind = ActionKind(obj["kind"])
    except ValueError:
        raise SchemaError(f"{where}: unknown action kind {obj['kind']!r}") from None

    at = to_int(obj["at"]) if "at" in obj else None
    params = {k: v for k, v in obj.items() if k not in ("kind", "at", "when")}
    when = obj.get("when")

    if kind in (ActionKind.MEM_READ, ActionKind.MEM_WRITE, ActionKind.EXEC):
        if "addr" not in params:
            raise SchemaError(f"{where}: {kind.value} needs addr")
        params["addr"] = to_int(params["addr"])
        params["length"] = to_int(params.get("length", 1))
        if params["length"] <= 0:
            raise SchemaError(f"{where}: length must be positive")
        if kind == ActionKind.MEM_WRITE:
            params["value"] = to_int(params.get("value", 0))
    elif kind == ActionKind.DMA_REQUEST:
        if "peripheral" not in params or "op" not in params:
            raise SchemaError(f"{where}: dma_request needs peripheral and op")
    elif kind == ActionKind.RAW_DMA_CONFIG:
        for key in ("source", "destination", "length"):
            if key not in params:
                raise SchemaError(f"{where}: raw_dma_config needs {key}")
        params["source"] = range_from_document(params["source"], f"{where}.source")
        params["destination"] = range_from_document(
            params["destination"], f"{where}.destination"
        )
        params["length"] = to_int(params["length"])
        params["channel"] = to_int(params.get("channel", 0))
    elif kind == ActionKind.REDEFINE_REGIONS:
        if "regions" not in params:
            raise SchemaError(f"{where}: redefine_regions needs regions")
        params["regions"] = list(
            _parse_user_regions(params["regions"], where)
        )
    return Action(kind=kind, at=at, params=params, when=when)


def _parse_task(obj: dict, profile: MemoryProfile, index: int) -> TaskSpec:
    where = f"tasks[{index}]"
    for key in ("id", "name", "code", "stack"):
        if key not in obj:
            raise SchemaError(f"{where}: missing {key!r}")
    task_id = to_int(obj["id"])
    actions = []
    for i, a in enumerate(obj.get("behavior", [])):
        spot = f"{where}.behavior[{i}]"
        action = _parse_action(a, spot)
        if action.kind == ActionKind.DMA_REQUEST:
            action.params["request"] = parse_request(action.params, task_id, profile, spot)
        actions.append(action)
    behavior = tuple(actions)
    repeat = to_int(obj.get("repeat", 1))
    if repeat < 1:
        raise SchemaError(f"{where}: repeat must be >= 1")
    code_region = range_from_document(obj["code"], f"{where}.code")
    stack_region = range_from_document(obj["stack"], f"{where}.stack")
    _require_legal_region(code_region, f"{where}.code")
    _require_legal_region(stack_region, f"{where}.stack")
    return TaskSpec(
        id=task_id,
        name=str(obj["name"]),
        privileged=bool(obj.get("privileged", False)),
        code_region=code_region,
        stack_region=stack_region,
        user_regions=_parse_user_regions(obj.get("user_regions", []), where),
        capabilities=_parse_capabilities(obj.get("capabilities", []), profile, where),
        behavior=behavior,
        repeat=repeat,
    )


DMA_TASK_STACK_BYTES = 1024


def _default_dma_task_stack(layout_doc: dict, kernel_data: AddressRange) -> AddressRange:
    if "dma_task_stack" in layout_doc:
        return range_from_document(layout_doc["dma_task_stack"], "kernel.dma_task_stack")
    # Last naturally aligned kilobyte of kernel data.
    base = kernel_data.end - DMA_TASK_STACK_BYTES
    return AddressRange(base - base % DMA_TASK_STACK_BYTES, DMA_TASK_STACK_BYTES)


def load_scenario(
    document: dict,
    mode_override: Optional[str] = None,
    toggle_overrides: Optional[dict] = None,
) -> Scenario:
    if not isinstance(document, dict):
        raise SchemaError("scenario document must be an object")
    for key in ("mcu", "kernel", "tasks"):
        if key not in document:
            raise SchemaError(f"scenario missing {key!r}")

    profile = load_profile(document)
    mcu_document = document["mcu"]
    if mcu_document == "default":
        from .memmap import default_profile_document

        mcu_document = default_profile_document()

    mode_value = mode_override or document.get("mode", "dbox")
    try:
        mode = Mode(mode_value)
    except ValueError:
        raise SchemaError(f"mode must be dbox|fmpu_compat, got {mode_value!r}") from None

    kernel_doc = document["kernel"]
    if not isinstance(kernel_doc, dict):
        raise SchemaError("kernel section must be an object")
    for key in ("syscalls", "kernel_code", "kernel_data"):
        if key not in kernel_doc:
            raise SchemaError(f"kernel section missing {key!r}")
    arena = None
    if "descriptor_arena" in kernel_doc:
        arena = range_from_document(kernel_doc["descriptor_arena"], "kernel.descriptor_arena")
    layout = KernelLayout(
        syscalls_region=range_from_document(kernel_doc["syscalls"], "kernel.syscalls"),
        kernel_code_region=range_from_document(kernel_doc["kernel_code"], "kernel.kernel_code"),
        kernel_data_region=range_from_document(kernel_doc["kernel_data"], "kernel.kernel_data"),
        mode=mode,
        descriptor_arena=arena,
    )
    layout.validate(profile)

    toggles = dict(document.get("attack_toggles", {}))
    for name, value in (toggle_overrides or {}).items():
        toggles[name] = value

    task_specs = []
    seen_ids = {0}  # 0 is reserved for the DMA service task
    if not isinstance(document["tasks"], list):
        raise SchemaError("tasks must be an array")
    for i, obj in enumerate(document["tasks"]):
        spec = _parse_task(obj, profile, i)
        if spec.id in seen_ids:
            raise SchemaError(f"tasks[{i}]: duplicate or reserved id {spec.id}")
        seen_ids.add(spec.id)
        task_specs.append(spec)

    memory_init = []
    for i, entry in enumerate(document.get("memory_init", [])):
        if not isinstance(entry, dict) or "addr" not in entry:
            raise SchemaError(f"memory_init[{i}]: expected an object with addr")
        addr = to_int(entry["addr"])
        if "bytes" in entry:
            values = [to_int(v) for v in entry["bytes"]]
        else:
            values = [to_int(entry.get("value", 0))]
        memory_init.append((addr, values))

    memory_probes = []
    for i, entry in enumerate(document.get("memory_probes", [])):
        if not isinstance(entry, dict) or "addr" not in entry or "name" not in entry:
            raise SchemaError(f"memory_probes[{i}]: expected name and addr")
        memory_probes.append(
            (str(entry["name"]), to_int(entry["addr"]), to_int(entry.get("length", 1)))
        )

    return Scenario(
        name=str(document.get("name", "scenario")),
        mode=mode,
        profile=profile,
        layout=layout,
        task_specs=task_specs,
        tick_limit=to_int(document.get("ticks", 10000)),
        attack_toggles=toggles,
        memory_init=memory_init,
        memory_probes=memory_probes,
        dma_task_stack=_default_dma_task_stack(kernel_doc, layout.kernel_data_region),
        description=list(document.get("description", [])),
        mcu_document=mcu_document,
    )


def load_scenario_file(
    path,
    mode_override: Optional[str] = None,
    toggle_overrides: Optional[dict] = None,
) -> Scenario:
    """Load a scenario from a path, falling back to the packaged scenarios."""
    document = read_scenario_document(path)
    return load_scenario(document, mode_override, toggle_overrides)


def read_scenario_document(path) -> dict:
    p = Path(path)
    if p.exists():
        text = p.read_text(encoding="utf-8")
    else:
        name = p.name if p.name.endswith(".json") else f"{p.name}.json"
        packaged = resources.files("mcusim").joinpath("scenarios", name)
        if not packaged.is_file():
            raise SchemaError(f"scenario not found: {path}")
        text = packaged.read_text(encoding="utf-8")
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc}") from None
    if not isinstance(document, dict):
        raise SchemaError("scenario document must be a JSON object")
    return document


def packaged_scenario_names() -> list[str]:
    folder = resources.files("mcusim").joinpath("scenarios")
    return sorted(p.name[:-5] for p in folder.iterdir() if p.name.endswith(".json"))
