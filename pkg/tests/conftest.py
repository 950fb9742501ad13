"""Shared fixtures: a recording stand-in for the simulation facade."""

import pytest

from nemosim.metrics import MetricsCollector
from nemosim.packets import SignalKind, encapsulate, make_signal
from nemosim.scenario import ScenarioConfig, default_topology


class FakeSim:
    """Captures everything a protocol agent asks the simulation to do."""

    def __init__(self, config=None):
        self.config = config or ScenarioConfig()
        self.topo = default_topology(self.config)
        self.metrics = MetricsCollector()
        self.now = 0
        self.sent_signals = []      # (origin, kind, src, dst, info, encap_to)
        self.forwarded = []         # (origin, packet)
        self.timers = []            # (node, delay, token)
        self.mnn_inbox = []
        self.dmr_outbox = []
        self.dropped = []           # (packet, where)
        self.dmr_attached = None

    def timer(self, node_id, delay, token):
        self.timers.append((node_id, delay, token))

    def send_signal(self, origin, kind, src, dst, info=None, high_priority=False,
                    encap_to=None, encap_src=None):
        self.sent_signals.append((origin, kind, src, dst, info, encap_to))

    def make_signal(self, kind, src, dst, info=None, high_priority=False):
        return make_signal(kind, src, dst, self.now, info=info)

    def send_signal_packet(self, origin, pkt):
        self.sent_signals.append((origin, pkt.signal, pkt.src, pkt.dst, pkt.info, None))

    def forward(self, origin, pkt):
        self.forwarded.append((origin, pkt))

    def send_via(self, origin, neighbor, pkt):
        self.forwarded.append((origin, pkt))

    def dmr_send(self, pkt):
        self.dmr_outbox.append(pkt)

    def send_to_mnn(self, pkt):
        self.mnn_inbox.append(pkt)

    def drop(self, pkt, where):
        self.dropped.append((pkt, where))

    def condition_data(self, node_id, pkt):
        pass

    def condition_signal(self, node_id, pkt):
        pass

    def dad_collides(self, handover, attempt):
        return False

    def fna_collides(self, handover, attempt):
        return False

    def signals_of(self, kind):
        return [s for s in self.sent_signals if s[1] == kind]


@pytest.fixture
def fake_sim():
    return FakeSim()
