"""Capability policy: verdict semantics, EAR rules, and the exhaustive oracle."""

import itertools

import pytest
from hypothesis import given, settings, strategies as st

from mcusim.memmap import AddressRange, EarKind
from mcusim.policy import (
    Decision,
    DmaCapability,
    DmaRequest,
    EarValue,
    Reason,
    Right,
    brute_force_validate,
    ear_grants,
    validate_capability,
    validate_request,
)

from conftest import make_task_a, make_task_b, make_toy_profile

SS_X = EarValue(EarKind.SPI_SLAVE_SELECT, "SS_X")
SS_Y = EarValue(EarKind.SPI_SLAVE_SELECT, "SS_Y")


def spi_write_request(buffer, ear=SS_X, requester=1):
    return DmaRequest(
        requester=requester,
        peripheral_id="SPI1",
        operation=Right.WRITE,
        buffer=buffer,
        ear_params=ear,
    )


class TestVerdicts:
    def setup_method(self):
        self.profile = make_toy_profile()
        self.task = make_task_a()

    def test_write_inside_own_stack_accepted(self):
        # Capability row: SPI1 with read|write|full_duplex and a slave select.
        req = spi_write_request(AddressRange(0x2000_0410, 0x20))
        verdict = validate_request(req, self.task, self.profile)
        assert verdict.decision == Decision.ACCEPT
        assert verdict.reason == Reason.OK

    def test_adc_mask_subset_denied(self):
        # Granted channels {0,4}; requesting channel 2 falls outside.
        req = DmaRequest(
            requester=1,
            peripheral_id="ADC1",
            operation=Right.READ,
            buffer=AddressRange(0x2000_0410, 0x10),
            ear_params=EarValue(EarKind.ADC_CHANNEL_MASK, frozenset({2})),
        )
        verdict = validate_request(req, self.task, self.profile)
        assert verdict.decision == Decision.REJECT
        assert verdict.reason == Reason.EAR_DENIED

    def test_adc_mask_subset_accepted(self):
        req = DmaRequest(
            requester=1,
            peripheral_id="ADC1",
            operation=Right.READ,
            buffer=AddressRange(0x2000_0410, 0x10),
            ear_params=EarValue(EarKind.ADC_CHANNEL_MASK, frozenset({0, 4})),
        )
        assert validate_request(req, self.task, self.profile).decision == Decision.ACCEPT

    def test_buffer_in_foreign_stack_rejected(self):
        other_stack = make_task_b().stack_region
        req = DmaRequest(
            requester=1,
            peripheral_id="SPI1",
            operation=Right.READ,
            buffer=AddressRange(other_stack.base + 8, 0x10),
            ear_params=SS_X,
        )
        verdict = validate_request(req, self.task, self.profile)
        assert verdict.reason == Reason.BUFFER_NOT_OWNED

    def test_no_capability(self):
        req = DmaRequest(
            requester=2,
            peripheral_id="SPI1",
            operation=Right.READ,
            buffer=AddressRange(0x2000_0510, 0x10),
            ear_params=SS_X,
        )
        verdict = validate_request(req, make_task_b(), self.profile)
        assert verdict.reason == Reason.NO_CAPABILITY

    def test_unknown_peripheral(self):
        req = DmaRequest(
            requester=1,
            peripheral_id="NOPE",
            operation=Right.READ,
            buffer=AddressRange(0x2000_0410, 0x10),
        )
        assert validate_request(req, self.task, self.profile).reason == Reason.PERIPHERAL_UNKNOWN

    def test_controller_itself_not_dma_capable(self):
        req = DmaRequest(
            requester=1,
            peripheral_id="DMA1",
            operation=Right.READ,
            buffer=AddressRange(0x2000_0410, 0x10),
        )
        assert validate_request(req, self.task, self.profile).reason == Reason.NOT_DMA_CAPABLE

    def test_gpio_without_capability(self):
        # GPIO ports are legitimate DMA endpoints; lacking the capability is
        # what rejects the request, not the peripheral class.
        from mcusim.memmap import load_profile

        profile = load_profile({"mcu": "default"})
        assert profile.peripheral("GPIOA").dma_capable
        req = DmaRequest(
            requester=1,
            peripheral_id="GPIOA",
            operation=Right.WRITE,
            buffer=AddressRange(0x2000_0410, 0x10),
        )
        assert validate_request(req, self.task, profile).reason == Reason.NO_CAPABILITY

    def test_right_missing(self):
        # ADC capability grants read only.
        req = DmaRequest(
            requester=1,
            peripheral_id="ADC1",
            operation=Right.WRITE,
            buffer=AddressRange(0x2000_0410, 0x10),
            ear_params=EarValue(EarKind.ADC_CHANNEL_MASK, frozenset({0})),
        )
        assert validate_request(req, self.task, self.profile).reason == Reason.RIGHT_MISSING

    def test_buffer_equal_to_stack_accepted(self):
        req = spi_write_request(self.task.stack_region)
        assert validate_request(req, self.task, self.profile).decision == Decision.ACCEPT

    def test_read_needs_writable_region(self):
        # Read lands in the buffer: the RO user region cannot take it,
        # but sourcing a write from it is fine.
        ro_buffer = AddressRange(0x2000_0C10, 0x10)
        read = DmaRequest(
            requester=1, peripheral_id="SPI1", operation=Right.READ,
            buffer=ro_buffer, ear_params=SS_X,
        )
        write = spi_write_request(ro_buffer)
        assert validate_request(read, self.task, self.profile).reason == Reason.BUFFER_NOT_OWNED
        assert validate_request(write, self.task, self.profile).decision == Decision.ACCEPT

    def test_buffer_split_across_regions_rejected(self):
        # Stack [0x400,0x500) and task B's stack [0x500,0x600) are adjacent;
        # containment must hold within a single region.
        req = spi_write_request(AddressRange(0x2000_04C0, 0x80))
        assert validate_request(req, self.task, self.profile).reason == Reason.BUFFER_NOT_OWNED

    def test_full_duplex_needs_flag_and_both_buffers(self):
        req = DmaRequest(
            requester=1,
            peripheral_id="SPI1",
            operation=Right.FULL_DUPLEX,
            tx_buffer=AddressRange(0x2000_0410, 0x10),
            rx_buffer=AddressRange(0x2000_0430, 0x10),
            ear_params=SS_X,
        )
        assert validate_request(req, self.task, self.profile).decision == Decision.ACCEPT
        usart_duplex = DmaRequest(
            requester=2,
            peripheral_id="USART1",
            operation=Right.FULL_DUPLEX,
            tx_buffer=AddressRange(0x2000_0510, 0x10),
            rx_buffer=AddressRange(0x2000_0530, 0x10),
        )
        assert (
            validate_request(usart_duplex, make_task_b(), self.profile).reason
            == Reason.RIGHT_MISSING
        )

    def test_wrong_slave_select_denied(self):
        req = spi_write_request(AddressRange(0x2000_0410, 0x10), ear=SS_Y)
        assert validate_request(req, self.task, self.profile).reason == Reason.EAR_DENIED


class TestEarGrants:
    def test_scalar_equality(self):
        assert ear_grants(SS_X, SS_X)
        assert not ear_grants(SS_X, SS_Y)

    def test_mask_subset(self):
        granted = EarValue(EarKind.ADC_CHANNEL_MASK, frozenset({0, 4}))
        assert ear_grants(granted, EarValue(EarKind.ADC_CHANNEL_MASK, frozenset({0})))
        assert ear_grants(granted, EarValue(EarKind.ADC_CHANNEL_MASK, frozenset()))
        assert not ear_grants(granted, EarValue(EarKind.ADC_CHANNEL_MASK, frozenset({0, 2})))

    def test_kind_mismatch(self):
        assert not ear_grants(SS_X, EarValue())
        assert not ear_grants(EarValue(), SS_X)

    def test_none_vacuous(self):
        assert ear_grants(EarValue(), EarValue())


class TestCapabilityValidation:
    def test_ear_kind_must_match_peripheral(self):
        cap = DmaCapability("SPI1", frozenset({Right.READ}), EarValue())
        with pytest.raises(ValueError):
            validate_capability(cap, make_toy_profile())

    def test_duplex_only_on_bus_peripherals(self):
        cap = DmaCapability("USART1", frozenset({Right.FULL_DUPLEX}))
        with pytest.raises(ValueError):
            validate_capability(cap, make_toy_profile())

    def test_empty_rights_rejected(self):
        with pytest.raises(ValueError):
            DmaCapability("SPI1", frozenset())

    def test_capability_is_immutable(self):
        cap = DmaCapability("SPI1", frozenset({Right.READ}), SS_X)
        with pytest.raises(AttributeError):
            cap.rights = frozenset({Right.WRITE})


def _buffers():
    a = make_task_a()
    b = make_task_b()
    return [
        AddressRange(a.stack_region.base + 0x10, 0x20),   # inside own stack
        a.stack_region,                                   # equal to stack
        AddressRange(a.stack_region.base + 0xC0, 0x80),   # spans stack end
        AddressRange(0x2000_0810, 0x20),                  # inside RW user region
        AddressRange(0x2000_0C10, 0x20),                  # inside RO user region
        AddressRange(b.stack_region.base + 0x10, 0x20),   # foreign stack
        AddressRange(0x2000_0000, 0x20),                  # kernel data
        AddressRange(0x0800_2000, 0x20),                  # flash
        AddressRange(a.stack_region.base, 1),             # single byte
        AddressRange(0x2000_0BF0, 0x20),                  # straddles into RO region
        AddressRange(0x2000_0800, 0x100),                 # RW user region exactly
        AddressRange(0x2000_0820, 0x20),                  # deeper in RW region
        AddressRange(0x4000_0010, 0x20),                  # peripheral MMIO
        AddressRange(0x2000_0CF0, 0x20),                  # crosses RO region end
    ]


def _ears():
    return [
        EarValue(),
        SS_X,
        SS_Y,
        EarValue(EarKind.ADC_CHANNEL_MASK, frozenset({0})),
        EarValue(EarKind.ADC_CHANNEL_MASK, frozenset({0, 2})),
    ]


def exhaustive_cases(min_count=0):
    tasks = {1: make_task_a(), 2: make_task_b()}
    peripherals = ["SPI1", "ADC1", "USART1", "DMA1", "NOPE"]
    buffers = _buffers()
    ears = _ears()
    cases = []
    for requester, pid, op, buf, ear in itertools.product(
        tasks, peripherals, (Right.READ, Right.WRITE), buffers, ears
    ):
        cases.append(
            (
                tasks[requester],
                DmaRequest(
                    requester=requester, peripheral_id=pid, operation=op,
                    buffer=buf, ear_params=ear,
                ),
            )
        )
    for requester, pid, (tx, rx), ear in itertools.product(
        tasks, peripherals, itertools.product(buffers, buffers), ears
    ):
        if tx.size != rx.size:
            continue
        cases.append(
            (
                tasks[requester],
                DmaRequest(
                    requester=requester, peripheral_id=pid,
                    operation=Right.FULL_DUPLEX,
                    tx_buffer=tx, rx_buffer=rx, ear_params=ear,
                ),
            )
        )
    assert len(cases) >= min_count
    return cases


class TestOracleEquivalence:
    def test_exhaustive_cross_product(self):
        profile = make_toy_profile()
        cases = exhaustive_cases()
        for task, req in cases:
            fast = validate_request(req, task, profile)
            slow = brute_force_validate(req, task, profile)
            assert fast == slow, (req, fast, slow)

    def test_empty_capability_list_rejects_everything(self):
        profile = make_toy_profile()
        task = make_task_b()
        task.capabilities = ()
        for pid in ("SPI1", "ADC1", "USART1"):
            req = DmaRequest(
                requester=2, peripheral_id=pid, operation=Right.READ,
                buffer=AddressRange(task.stack_region.base, 0x20),
            )
            assert validate_request(req, task, profile).decision == Decision.REJECT
            assert brute_force_validate(req, task, profile).decision == Decision.REJECT


class TestProperties:
    def test_role_separation_ignores_dma_task_regions(self, toy_profile):
        # Verdicts depend only on the requester; a service task's own
        # regions never enter the signature, so permute them and compare.
        task = make_task_a()
        req = spi_write_request(AddressRange(0x2000_0410, 0x20))
        before = validate_request(req, task, toy_profile)
        service = make_task_b()
        service.user_regions = [(AddressRange(0x2000_2000, 0x1000), task.user_regions[0][1])]
        after = validate_request(req, task, toy_profile)
        assert before == after

    @given(st.data())
    @settings(max_examples=150, deadline=None)
    def test_adding_capability_never_revokes(self, data):
        profile = make_toy_profile()
        task = make_task_a()
        cases = exhaustive_cases()
        idx = data.draw(st.integers(0, len(cases) - 1))
        _task, req = cases[idx]
        before = validate_request(req, task, profile)
        extra_rights = data.draw(
            st.sets(st.sampled_from([Right.READ, Right.WRITE]), min_size=1)
        )
        pid = data.draw(st.sampled_from(["SPI1", "ADC1", "USART1"]))
        kind = profile.peripheral(pid).ear_kind
        if kind == EarKind.SPI_SLAVE_SELECT:
            ear = EarValue(kind, data.draw(st.sampled_from(["SS_X", "SS_Y"])))
        elif kind == EarKind.ADC_CHANNEL_MASK:
            ear = EarValue(kind, frozenset(data.draw(st.sets(st.integers(0, 7)))))
        else:
            ear = EarValue()
        task.capabilities = task.capabilities + (
            DmaCapability(pid, frozenset(extra_rights), ear),
        )
        after = validate_request(req, task, profile)
        if before.decision == Decision.ACCEPT:
            assert after.decision == Decision.ACCEPT

    @given(shrink=st.integers(1, 0x1F))
    @settings(max_examples=50, deadline=None)
    def test_shrinking_buffer_never_revokes(self, shrink):
        profile = make_toy_profile()
        task = make_task_a()
        buffer = AddressRange(task.stack_region.base + 0x10, 0x20)
        req = spi_write_request(buffer)
        assert validate_request(req, task, profile).decision == Decision.ACCEPT
        smaller = AddressRange(buffer.base, max(1, buffer.size - shrink))
        shrunk = spi_write_request(smaller)
        assert validate_request(shrunk, task, profile).decision == Decision.ACCEPT
