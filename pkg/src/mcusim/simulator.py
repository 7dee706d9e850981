"""Scripted-behavior execution loop and report assembly.

One tick runs one task slot (or one DMA-service step), then advances the
DMA engine and delivers its completion interrupts.  The trusted service
holds rotation position zero so a queued request is handled within one
full round of the scheduler.  Everything is deterministic: identical
scenario, mode, and toggles produce byte-identical reports.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

from . import kernel as krn
from .dma import (
    ByteStore,
    ConfigureResult,
    Direction,
    TransferDescriptor,
    engine_from_profile,
    engine_tick,
    raw_dma_config_attempt,
)
from .dmatask import isr_deliver, service_from_profile, service_step, submit_request
from .kernel import (
    FaultKind,
    TaskRecord,
    TaskState,
    create_task,
    context_switch,
)
from .memmap import AddressRange, contains, emit_profile
from .metrics import exposure, worst_case_exposure
from .mpu import AccessKind, AccessQuery, CheckResult, check_access
from .scenario import Action, ActionKind, GATED_KINDS, Scenario

DMA_SERVICE_ID = 0


class Termination(str, enum.Enum):
    COMPLETED = "completed"
    IDLE = "idle"
    TICK_LIMIT = "tick_limit"


def mode_note(mode: krn.Mode) -> str:
    """Report annotation documenting the active region layout."""
    if mode == krn.Mode.FMPU_COMPAT:
        return (
            "approximation of the permissive baseline: merged unprivileged "
            "flash at slot 0, kernel at 1-2, peripheral partition at 3, "
            "stack at 4, user regions at 5-7 (they outrank the kernel)"
        )
    return (
        "hardened layout: syscalls at slot 0, task code 1, stack 2, user "
        "regions 3-5, kernel at 6-7 (kernel outranks user regions)"
    )


@dataclass
class Counters:
    switch: krn.SwitchCounters = field(default_factory=krn.SwitchCounters)
    creation_intersection_checks: list = field(default_factory=list)
    validation_checks: list = field(default_factory=list)
    svc_events: int = 0

    def as_document(self) -> dict:
        return {
            "context_switches": self.switch.context_switches,
            "dynamic_regions_written": self.switch.dynamic_regions_written,
            "creation_intersection_checks": list(self.creation_intersection_checks),
            "validation_checks": list(self.validation_checks),
            "svc_events": self.svc_events,
        }


class Simulation:
    """Holds all mutable run state; build one per invocation."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.profile = scenario.profile
        self.layout = scenario.layout
        self.memory = ByteStore()
        self.engine = engine_from_profile(self.profile)
        self.service = service_from_profile(self.profile)
        self.counters = Counters()
        self.faults: list = []
        self.notifications: list = []
        self.trace: list = []
        self.tick = 0
        self.idle_error: Optional[str] = None
        self.last_scheduled: Optional[int] = None

        for addr, values in scenario.memory_init:
            self.memory.write_span(addr, values)

        # The trusted service is kernel-provided, not subject to the public
        # creation path, so its shape never skews the creation counters.
        self.service_task = TaskRecord(
            id=DMA_SERVICE_ID,
            name="dma_service",
            privileged=True,
            code_region=scenario.layout.kernel_code_region,
            stack_region=scenario.dma_task_stack,
        )
        self.tasks: list[TaskRecord] = []
        self._create_tasks()

    # -- setup -------------------------------------------------------

    def _create_tasks(self):
        toggles = self.scenario.attack_toggles
        for spec in self.scenario.task_specs:
            outcome = create_task(
                spec, [self.service_task] + self.tasks, self.profile, self.layout
            )
            self.counters.creation_intersection_checks.append(outcome.intersection_checks)
            task = outcome.task
            task.behavior = [
                a for a in task.behavior if a.when is None or toggles.get(a.when, False)
            ]
            if outcome.violations:
                self.faults.append(
                    krn.FaultEvent(
                        tick=self.tick,
                        task_id=task.id,
                        kind=FaultKind.TASK_CREATION_VOIDED,
                        detail="; ".join(outcome.violations),
                    )
                )
                self._trace("KRN", "task_voided", task.id, outcome.violations[0])
            else:
                self._trace("KRN", "task_created", task.id, task.name)
            self.tasks.append(task)

    # -- helpers -----------------------------------------------------

    def _trace(self, subsystem: str, event: str, task_id, detail: str = ""):
        self.trace.append((self.tick, subsystem, event, task_id, detail))

    def tasks_by_id(self) -> dict:
        table = {t.id: t for t in self.tasks}
        table[self.service_task.id] = self.service_task
        return table

    def _live_tasks(self) -> list[TaskRecord]:
        return [t for t in self.tasks if t.state != TaskState.VOIDED]

    def _unfinished(self) -> list[TaskRecord]:
        return [
            t
            for t in self._live_tasks()
            if t.state != TaskState.STOPPED and not t.done()
        ]

    def _engine_active(self) -> bool:
        return any(d is not None for d in self.engine.channels)

    def _pick_next(self) -> Optional[TaskRecord]:
        candidates = []
        if self.service.request_queue:
            candidates.append(self.service_task)
        candidates += [t for t in self.tasks if t.runnable()]
        if not candidates:
            return None
        candidates.sort(key=lambda t: t.id)
        if self.last_scheduled is not None:
            for t in candidates:
                if t.id > self.last_scheduled:
                    return t
        return candidates[0]

    # -- main loop ---------------------------------------------------

    def run(self) -> dict:
        termination = self._loop()
        return self._report(termination)

    def _loop(self) -> Termination:
        while True:
            if self.tick >= self.scenario.tick_limit:
                return Termination.TICK_LIMIT
            if (
                not self._unfinished()
                and not self.service.request_queue
                and not self._engine_active()
            ):
                live = self._live_tasks()
                finished_cleanly = [t for t in live if t.done() and t.state != TaskState.STOPPED]
                if live and not finished_cleanly:
                    self.idle_error = "all tasks stopped"
                    return Termination.IDLE
                return Termination.COMPLETED

            chosen = self._pick_next()
            if chosen is None:
                if not self._engine_active():
                    self.idle_error = "blocked tasks with no pending transfer"
                    self._trace("KRN", "idle_deadlock", -1, self.idle_error)
                    return Termination.IDLE
                # Bus still mastered by the DMA controller; let it drain.
            else:
                cfg = context_switch(None, chosen, self.layout, self.counters.switch)
                self.last_scheduled = chosen.id
                chosen.state = TaskState.RUNNING
                if chosen is self.service_task:
                    service_step(
                        self.service,
                        self.tasks_by_id(),
                        self.engine,
                        self.profile,
                        self.tick,
                        self.faults,
                        self.notifications,
                        self.counters.validation_checks,
                        self.trace,
                    )
                else:
                    self._execute_action(chosen, cfg)
                if chosen.state == TaskState.RUNNING:
                    chosen.state = TaskState.READY

            completions = engine_tick(self.engine, self.memory)
            if completions:
                self.counters.svc_events += isr_deliver(
                    self.service,
                    self.tasks_by_id(),
                    completions,
                    self.tick,
                    self.notifications,
                    self.trace,
                )
            self._audit_channels()
            self.tick += 1

    def _advance(self, task: TaskRecord):
        task.pc += 1
        if task.pc >= len(task.behavior):
            task.pc = 0
            task.iterations_done += 1

    def _execute_action(self, task: TaskRecord, cfg):
        action: Action = task.behavior[task.pc]

        if action.kind in GATED_KINDS:
            gate = self.layout.syscalls_region
            if not task.privileged and (
                action.at is None or not gate.contains_addr(action.at)
            ):
                krn.handle_mpu_violation(
                    task, self.tick, "syscall entry outside syscalls region", self.faults
                )
                self._trace("MPU", "syscall_gate_fault", task.id, action.kind.value)
                return
            self.counters.svc_events += 1

        if action.kind in (ActionKind.MEM_READ, ActionKind.MEM_WRITE, ActionKind.EXEC):
            kind = {
                ActionKind.MEM_READ: AccessKind.READ,
                ActionKind.MEM_WRITE: AccessKind.WRITE,
                ActionKind.EXEC: AccessKind.EXECUTE,
            }[action.kind]
            q = AccessQuery(
                addr=action.params["addr"],
                width=action.params["length"],
                kind=kind,
                privileged=task.privileged,
            )
            if check_access(cfg, q, self.profile) == CheckResult.FAULT:
                krn.handle_mpu_violation(
                    task,
                    self.tick,
                    f"{kind.value} 0x{q.addr:08x}+{q.width}",
                    self.faults,
                )
                self._trace("MPU", "access_fault", task.id, f"{kind.value} 0x{q.addr:08x}")
                return
            if action.kind == ActionKind.MEM_WRITE:
                self.memory.write_span(
                    q.addr, [action.params["value"]] * q.width
                )
            self._trace("MPU", "access_ok", task.id, f"{kind.value} 0x{q.addr:08x}")

        elif action.kind == ActionKind.SYSCALL:
            self._trace("KRN", "syscall", task.id, "")

        elif action.kind == ActionKind.DMA_REQUEST:
            req = action.params["request"]
            outcome = submit_request(
                self.service, req, task, self.tick, self.notifications
            )
            self._trace("DMA", f"submit_{outcome}", task.id, req.peripheral_id)

        elif action.kind == ActionKind.RAW_DMA_CONFIG:
            descriptor = TransferDescriptor(
                channel=action.params["channel"],
                source=action.params["source"],
                destination=action.params["destination"],
                length=action.params["length"],
                direction=Direction(action.params.get("direction", "mem_to_periph")),
                owner_task=task.id,
            )
            verdict, configured = raw_dma_config_attempt(
                self.engine,
                descriptor,
                cfg,
                task.privileged,
                self.profile,
                self.layout.descriptor_arena,
            )
            if verdict == CheckResult.FAULT:
                krn.handle_mpu_violation(
                    task, self.tick, "raw descriptor write blocked", self.faults
                )
                self._trace("MPU", "raw_dma_config_fault", task.id, "")
                return
            detail = "installed" if configured == ConfigureResult.OK else "busy"
            self._trace("DMA", f"raw_dma_config_{detail}", task.id, f"ch{descriptor.channel}")

        elif action.kind == ActionKind.REDEFINE_REGIONS:
            accepted = krn.redefine_user_regions(
                task,
                action.params["regions"],
                [self.service_task] + self.tasks,
                self.profile,
                self.layout,
                self.tick,
                self.faults,
            )
            self._trace(
                "KRN",
                "redefine_ok" if accepted else "redefine_rejected",
                task.id,
                "",
            )

        elif action.kind == ActionKind.WAIT_NOTIFY:
            if task.notification_box:
                note = task.notification_box.popleft()
                self._trace("KRN", "notify_consumed", task.id, note.status)
            else:
                task.state = TaskState.BLOCKED_ON_NOTIFY
                self._trace("KRN", "wait_notify_blocked", task.id, "")
                return  # pc stays; the action completes after wake-up

        self._advance(task)

    def _audit_channels(self):
        # Registered channels must match live engine descriptors and owners.
        for channel, entry in enumerate(self.service.channel_registry):
            if entry is None:
                continue
            descriptor = self.engine.channels[channel]
            assert descriptor is not None, f"registry holds freed channel {channel}"
            assert descriptor.owner_task == entry[0]

    # -- report ------------------------------------------------------

    def _audit_transfers(self) -> dict:
        """Post-hoc confused-deputy check over every accepted transfer."""
        table = self.tasks_by_id()
        contained = 0
        for record in self.service.transfers:
            task = table[record["task"]]
            regions = [task.stack_region] + [r for r, _ in task.user_regions]
            ok = all(
                any(contains(region, AddressRange(b["base"], b["size"])) for region in regions)
                for b in record["buffers"]
            )
            if ok:
                contained += 1
        return {"accepted_transfers": len(self.service.transfers), "buffers_contained": contained}

    def _report(self, termination: Termination) -> dict:
        violations = sum(1 for f in self.faults if f.kind == FaultKind.MPU_VIOLATION)
        probes = {}
        for name, addr, length in self.scenario.memory_probes:
            values = self.memory.read_span(addr, length)
            probes[name] = values[0] if length == 1 else values

        exposure_rows = []
        for task in self.tasks:
            if task.privileged or task.state == TaskState.VOIDED:
                continue
            cfg = krn.build_mpu_configuration(task, self.layout)
            exposure_rows.append(
                exposure(task, cfg, self.profile, self.layout).as_document()
            )

        report = {
            "scenario": self.scenario.name,
            "mode": self.scenario.mode.value,
            "mode_note": mode_note(self.scenario.mode),
            "termination": termination.value,
            "ticks_executed": self.tick,
            "mpu_violations": violations,
            "idle_error": self.idle_error,
            "tasks": [
                {
                    "id": t.id,
                    "name": t.name,
                    "state": t.state.value,
                    "privileged": t.privileged,
                    "cycles_completed": t.iterations_done,
                    "pending_notifications": len(t.notification_box),
                }
                for t in [self.service_task] + self.tasks
            ],
            "faults": [
                {
                    "tick": f.tick,
                    "task": f.task_id,
                    "kind": f.kind.value,
                    "detail": f.detail,
                }
                for f in self.faults
            ],
            "notifications": list(self.notifications),
            "exposure": exposure_rows,
            "counters": self.counters.as_document(),
            "policy_audit": self._audit_transfers(),
            "probes": probes,
            "attack_toggles": dict(sorted(self.scenario.attack_toggles.items())),
            "mcu": emit_profile(self.profile),
        }
        return report


def run_scenario(scenario: Scenario, with_trace: bool = False) -> dict:
    sim = Simulation(scenario)
    report = sim.run()
    if with_trace:
        report["trace"] = [
            "\t".join(str(part) for part in line) for line in sim.trace
        ]
    return report


def exit_code_for_run(report: dict) -> int:
    return 3 if report["mpu_violations"] > 0 else 0


def check_scenario(scenario: Scenario) -> dict:
    """Static lint: creation-time validation only, no simulation."""
    findings = []
    created: list[TaskRecord] = []
    service_stub = TaskRecord(
        id=DMA_SERVICE_ID,
        name="dma_service",
        privileged=True,
        code_region=scenario.layout.kernel_code_region,
        stack_region=scenario.dma_task_stack,
    )
    voided = 0
    warnings = 0
    for spec in scenario.task_specs:
        outcome = create_task(
            spec, [service_stub] + created, scenario.profile, scenario.layout
        )
        entry = {
            "task": spec.id,
            "name": spec.name,
            "verdict": "voided" if outcome.violations else "ok",
            "violations": outcome.violations,
        }
        if scenario.mode == krn.Mode.FMPU_COMPAT:
            # Compat mode skips the rules; surface what they would have said.
            would_be = krn.hardening_violations(
                [spec.stack_region] + [r for r, _ in spec.user_regions],
                [service_stub] + created,
                scenario.profile,
                scenario.layout,
            )
            entry["verdict"] = "ok"
            entry["violations"] = []
            entry["warnings"] = would_be
            warnings += len(would_be)
        elif outcome.violations:
            voided += 1
        findings.append(entry)
        created.append(outcome.task)
    return {
        "scenario": scenario.name,
        "mode": scenario.mode.value,
        "tasks": findings,
        "voided": voided,
        "warnings": warnings,
    }


def exit_code_for_check(report: dict) -> int:
    return 2 if report["voided"] > 0 else 0


def metrics_scenario(scenario: Scenario) -> dict:
    """Standard and worst-case exposure per unprivileged task."""
    created: list[TaskRecord] = []
    for spec in scenario.task_specs:
        outcome = create_task(spec, created, scenario.profile, scenario.layout)
        created.append(outcome.task)
    rows = []
    for task in created:
        if task.privileged or task.state == TaskState.VOIDED:
            continue
        cfg = krn.build_mpu_configuration(task, scenario.layout)
        rows.append(exposure(task, cfg, scenario.profile, scenario.layout).as_document())
        rows.append(
            worst_case_exposure(
                task, [t for t in created if t is not task], scenario.profile, scenario.layout
            ).as_document()
        )
    return {
        "scenario": scenario.name,
        "mode": scenario.mode.value,
        "mode_note": mode_note(scenario.mode),
        "assumptions": list(scenario.description),
        "exposure": rows,
        "mcu": emit_profile(scenario.profile),
    }
