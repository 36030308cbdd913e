"""Topology construction, addressing, and path forwarding."""

from votetrace.config import Config
from votetrace.engine import NS_PER_MS, Simulator
from votetrace.topology import (
    Network,
    Topology,
    link_latency_ns,
)


def small_cfg(seed=1):
    cfg = Config()
    cfg.scenario.seed = seed
    t = cfg.topology
    t.relays, t.directories, t.clients = 6, 2, 12
    t.bulk_clients, t.file_servers, t.web_servers = 3, 2, 2
    t.ballot_boxes, t.voters, t.visible_clients = 2, 5, 6
    return cfg


def test_counts_and_unique_addresses():
    topo = Topology(small_cfg())
    assert len(topo.relays) == 6
    assert len(topo.clients) == 12
    assert len(topo.boxes) == 2
    addrs = [n.addr for n in topo.all_nodes]
    assert len(set(addrs)) == len(addrs)
    assert all(a.count(".") == 3 for a in addrs)
    assert topo.relays[0].addr.startswith("10.1.")
    assert topo.clients[0].addr.startswith("10.3.")
    assert topo.boxes[0].addr.startswith("10.7.")


def test_capture_ids_follow_address_sort_order():
    topo = Topology(small_cfg())
    assert topo.addrs == sorted(topo.addrs)
    for n in topo.all_nodes:
        assert topo.addrs[n.aid] == n.addr


def test_voter_and_visible_draws():
    topo = Topology(small_cfg())
    client_set = set(n.addr for n in topo.clients)
    assert len(topo.voters) == 5
    assert len(topo.visible) == 6
    assert all(n.addr in client_set for n in topo.voters)
    assert all(n.addr in client_set for n in topo.visible)
    # deterministic per seed, different across seeds, independent draws
    again = Topology(small_cfg())
    assert [n.addr for n in again.voters] == [n.addr for n in topo.voters]
    other = Topology(small_cfg(seed=2))
    assert [n.addr for n in other.voters] != [n.addr for n in topo.voters]


def test_selection_spreads_over_clients():
    seen = set()
    for seed in range(30):
        topo = Topology(small_cfg(seed=seed))
        seen.update(n.addr for n in topo.voters)
    assert len(seen) == 12  # every client is a voter under some seed


def test_latency_classes():
    topo = Topology(small_cfg())
    lc = topo.cfg.links
    ms = lambda n: n * NS_PER_MS
    assert link_latency_ns(lc, topo.clients[0], topo.relays[0]) == ms(20)
    assert link_latency_ns(lc, topo.relays[0], topo.relays[1]) == ms(25)
    assert link_latency_ns(lc, topo.relays[0], topo.boxes[0]) == ms(15)
    assert link_latency_ns(lc, topo.relays[0], topo.file_servers[0]) == ms(15)
    assert link_latency_ns(lc, topo.clients[0], topo.directories[0]) == ms(20)


def test_three_hop_path_latency_zero_jitter():
    cfg = small_cfg()
    cfg.links.jitter_ms = 0.0
    topo = Topology(cfg)
    sim = Simulator()
    net = Network(sim, capture=None, topo=topo)
    path = [topo.clients[0], topo.relays[0], topo.relays[1], topo.relays[2], topo.boxes[0]]
    got = []
    sim.schedule(0, net.send_path, path, lambda: got.append(sim.now))
    sim.run(until=NS_PER_MS * 1000)
    # 20 + 25 + 25 + 15 ms end to end
    assert got == [85 * NS_PER_MS]


def test_link_objects_are_shared_between_directions():
    topo = Topology(small_cfg())
    sim = Simulator()
    net = Network(sim, capture=None, topo=topo)
    l1 = net.link(topo.clients[0], topo.relays[0])
    l2 = net.link(topo.relays[0], topo.clients[0])
    assert l1 is l2


def test_jitter_streams_do_not_depend_on_creation_order():
    cfg = small_cfg()
    topo = Topology(cfg)

    def arrivals(order):
        sim = Simulator()
        net = Network(sim, capture=None, topo=topo)
        for i in order:
            net.link(topo.clients[i], topo.relays[0])
        got = []
        sim.schedule(0, net.send_path, [topo.clients[0], topo.relays[0]], lambda: got.append(sim.now))
        sim.run(until=NS_PER_MS * 1000)
        return got

    assert arrivals([0, 1, 2]) == arrivals([2, 1, 0])
