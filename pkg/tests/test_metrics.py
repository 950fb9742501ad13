from nemosim.engine import MS, SEC
from nemosim.experiment import generate_cbr
from nemosim.metrics import (MACRO, MICRO, Delivery, MetricsCollector,
                             compute_handover_latency, compute_loss)
from nemosim.packets import DATA, Address, Packet
from nemosim.scenario import CbrConfig

CN = Address(0, 0, 0)
MNN = Address(1, 1, 2)
BS_TO_MAP = {"bs1": "map1", "bs2": "map1", "bs3": "map2", "bs4": "map2"}


def test_cbr_interval_is_eighty_ms():
    assert CbrConfig().interval_us == 80 * MS


def test_cbr_schedule_count_over_default_window():
    schedule = generate_cbr(CbrConfig())
    assert len(schedule) == 2250
    assert schedule[0] == (20 * SEC, 0)
    assert schedule[-1][0] < 200 * SEC


def test_cbr_starts_nothing_before_start():
    schedule = generate_cbr(CbrConfig())
    assert all(t >= 20 * SEC for t, _ in schedule)


def delivery(seq, t_us, bs):
    return Delivery(seq=seq, created_at=0, delivered_at=t_us, serving_bs=bs,
                    src=CN, dst=MNN, path=())


def test_handover_latency_from_constructed_trace():
    deliveries = [delivery(0, 30_920_000, "bs1"),
                  delivery(1, 31_000_000, "bs1"),
                  delivery(2, 31_900_000, "bs2"),
                  delivery(3, 31_980_000, "bs2")]
    gaps = compute_handover_latency(deliveries, BS_TO_MAP)
    assert gaps == [(900_000, MICRO)]


def test_handover_latency_classifies_macro():
    deliveries = [delivery(0, 10 * SEC, "bs2"), delivery(1, 11 * SEC, "bs3")]
    gaps = compute_handover_latency(deliveries, BS_TO_MAP)
    assert gaps == [(1 * SEC, MACRO)]


def test_stationary_run_has_no_handovers():
    deliveries = [delivery(i, i * SEC, "bs1") for i in range(5)]
    assert compute_handover_latency(deliveries, BS_TO_MAP) == []


def test_loss_percentage_arithmetic():
    m = MetricsCollector()
    m.sent = 2250
    for i in range(225):
        m.drops.append(None)
    assert compute_loss(m) == 10.0


def test_conservation_recounted_from_records():
    m = MetricsCollector()
    pkt = Packet(src=CN, dst=MNN, size_bytes=1000, kind=DATA, flow="cbr",
                 path_log=["cn"])
    for seq in range(10):
        p = Packet(src=CN, dst=MNN, size_bytes=1000, kind=DATA, flow="cbr",
                   seq=seq, path_log=["cn"])
        m.record_sent(p)
        if seq < 6:
            m.record_delivery(p, t=seq)
        elif seq < 9:
            m.record_drop(p, t=seq, where="test")
    assert m.sent == 10
    assert m.sent == m.delivered + m.dropped + 1   # one still in flight


def test_signal_and_background_drops_not_counted_as_loss():
    m = MetricsCollector()
    m.sent = 10
    sig = Packet(src=CN, dst=MNN, size_bytes=64, kind="signal")
    bg = Packet(src=CN, dst=MNN, size_bytes=1000, kind=DATA, flow="bg")
    m.record_drop(sig, 0, "x")
    m.record_drop(bg, 0, "x")
    assert m.dropped == 0
    assert m.signal_drops == 1 and m.bg_drops == 1
