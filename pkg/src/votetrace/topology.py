"""Network topology: node roles, addressing, latency classes, and the
link fabric cells travel over."""

from __future__ import annotations

from .config import Config
from .engine import NS_PER_MS, SimulationError, TruncatedNormal, substream

# role numbers double as the second address octet
ROLE_RELAY = 1
ROLE_DIRECTORY = 2
ROLE_CLIENT = 3
ROLE_BULK = 4
ROLE_FILE_SERVER = 5
ROLE_WEB_SERVER = 6
ROLE_BALLOT_BOX = 7

_CLIENT_ROLES = (ROLE_CLIENT, ROLE_BULK)


def role_addr(role: int, idx: int) -> str:
    return f"10.{role}.{idx // 250}.{idx % 250 + 1}"


class Node:
    __slots__ = ("role", "addr", "aid")

    def __init__(self, role, addr):
        self.role = role
        self.addr = addr
        self.aid = -1  # assigned once all nodes exist

    def __repr__(self):
        return f"<Node {self.addr}>"


class Topology:
    """All simulated nodes plus the voter and visible-client draws.

    Voters and the monitored (visible) set are each chosen uniformly at
    random from the regular clients, on independent named streams, so the
    overlap between them is whatever chance gives.
    """

    def __init__(self, cfg: Config):
        t = cfg.topology
        self.cfg = cfg
        self.relays = [Node(ROLE_RELAY, role_addr(ROLE_RELAY, i)) for i in range(t.relays)]
        self.directories = [
            Node(ROLE_DIRECTORY, role_addr(ROLE_DIRECTORY, i)) for i in range(t.directories)
        ]
        self.clients = [Node(ROLE_CLIENT, role_addr(ROLE_CLIENT, i)) for i in range(t.clients)]
        self.bulk = [Node(ROLE_BULK, role_addr(ROLE_BULK, i)) for i in range(t.bulk_clients)]
        self.file_servers = [
            Node(ROLE_FILE_SERVER, role_addr(ROLE_FILE_SERVER, i)) for i in range(t.file_servers)
        ]
        self.web_servers = [
            Node(ROLE_WEB_SERVER, role_addr(ROLE_WEB_SERVER, i)) for i in range(t.web_servers)
        ]
        self.boxes = [
            Node(ROLE_BALLOT_BOX, role_addr(ROLE_BALLOT_BOX, i)) for i in range(t.ballot_boxes)
        ]

        self.all_nodes = (
            self.relays
            + self.directories
            + self.clients
            + self.bulk
            + self.file_servers
            + self.web_servers
            + self.boxes
        )
        self.by_addr = {n.addr: n for n in self.all_nodes}
        if len(self.by_addr) != len(self.all_nodes):
            raise SimulationError("address collision in topology")

        # capture ids in lexicographic address order; record sorting and
        # address sorting then agree by construction
        for aid, addr in enumerate(sorted(self.by_addr)):
            self.by_addr[addr].aid = aid
        self.addrs = sorted(self.by_addr)

        seed = cfg.scenario.seed
        vote_rng = substream(seed, "voter-selection")
        self.voters = _draw(vote_rng, self.clients, t.voters)
        vis_rng = substream(seed, "visible-selection")
        self.visible = _draw(vis_rng, self.clients, t.visible_clients)

    @property
    def visible_addrs(self):
        return [n.addr for n in self.visible]

    @property
    def box_addrs(self):
        return [n.addr for n in self.boxes]


def _draw(rng, pool, k):
    idx = sorted(rng.choice(len(pool), size=k, replace=False).tolist())
    return [pool[i] for i in idx]


def link_latency_ns(links_cfg, a: Node, b: Node) -> int:
    """Latency class by endpoint roles: client edges are the slowest,
    relay-relay middling, relay-to-service fastest."""
    if a.role in _CLIENT_ROLES or b.role in _CLIENT_ROLES:
        ms = links_cfg.client_relay_ms
    elif a.role == ROLE_RELAY and b.role == ROLE_RELAY:
        ms = links_cfg.relay_relay_ms
    else:
        ms = links_cfg.relay_server_ms
    return int(round(ms * NS_PER_MS))


class Network:
    """Lazy link fabric over a topology.

    Links are created on first use, but their jitter streams are keyed by
    the directed endpoint addresses, so creation order cannot change any
    draw. send_path() forwards one cell hop by hop; each hop's arrival
    schedules the next hop at that instant, and the optional final callback
    runs at the last arrival.
    """

    def __init__(self, sim, capture, topo: Topology):
        self.sim = sim
        self.capture = capture
        self.topo = topo
        self.cfg = topo.cfg
        self._links = {}

    def link(self, a: Node, b: Node):
        key = (a.aid, b.aid) if a.aid < b.aid else (b.aid, a.aid)
        lk = self._links.get(key)
        if lk is None:
            lk = self._make_link(a, b)
            self._links[key] = lk
        return lk

    def _make_link(self, a, b):
        from .engine import Link

        lc = self.cfg.links
        sigma = lc.jitter_ms * NS_PER_MS
        clip = sigma * lc.jitter_clip_sigma
        seed = self.cfg.scenario.seed
        jit_ab = TruncatedNormal(substream(seed, f"jitter:{a.addr}>{b.addr}"), sigma, clip)
        jit_ba = TruncatedNormal(substream(seed, f"jitter:{b.addr}>{a.addr}"), sigma, clip)
        pps = 0.0
        if a.role == ROLE_RELAY and b.role == ROLE_RELAY:
            pps = lc.relay_bandwidth_pps
        return Link(
            self.sim,
            self.capture,
            a.aid,
            b.aid,
            link_latency_ns(lc, a, b),
            jit_ab,
            jit_ba,
            bandwidth_pps=pps,
        )

    def send_cell(self, src: Node, dst: Node, deliver=None) -> int:
        return self.link(src, dst).send(src.aid, dst.aid, deliver)

    def send_path(self, nodes, final=None) -> None:
        """Send one cell now along nodes[0] -> ... -> nodes[-1]."""
        if len(nodes) < 2:
            raise SimulationError("path needs at least two nodes")

        def hop(i):
            if i + 2 < len(nodes):
                self.send_cell(nodes[i], nodes[i + 1], deliver=lambda: hop(i + 1))
            else:
                self.send_cell(nodes[i], nodes[i + 1], deliver=final)

        hop(0)
