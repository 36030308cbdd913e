"""Traffic behavior: background clients, servers, ballot boxes, and the
paced vote exchange.

Timing model in one place, all through onion circuits of `hops` relays:

* Every cell a voting client emits sits on a strict cell-clock grid
  (`cell_spacing_ms` apart). One vote is a single uninterrupted train:
  claim padding, circuit setup (`setup_cells_per_hop` per hop, each
  answered by the reached relay), the application exchange, claim padding
  again, and the circuit teardown cell last. While the train runs, the
  claim suspends the client's own background traffic, starting
  `claim_lead_ms` early so in-flight downloads drain out first.
* File transfers: request cell up, sized response down (leading burst,
  paced body, closing burst), cumulative client ack every `ack_every`-th
  cell, server window of `flow_window` unacked cells.
* Browser pages: per object one request cell up and a burst down, objects
  separated by short gaps, pages by think time.
* Bulk clients: continuous chunked downloads; never visible, never voters.
"""

from __future__ import annotations

from .capture import Capture
from .config import Config
from .engine import NS_PER_MS, NS_PER_S, SimulationError, Simulator, substream
from .topology import Network, Topology


def _exp_ns(rng, mean_s):
    return int(rng.exponential(mean_s) * NS_PER_S)


def draw_vote_start(cfg: Config, addr: str, span_ns: int) -> int:
    """Uniform train-start time inside the voting window.

    The window runs from warm-up end to `vote_margin_s` before the end,
    shrunk so the whole train fits. Each client draws on its own named
    stream, so who else votes cannot move anyone's time.
    """
    sc = cfg.scenario
    lo = int(sc.warmup_s * NS_PER_S)
    hi = int((sc.duration_s - sc.vote_margin_s) * NS_PER_S) - span_ns
    if hi <= lo:
        raise SimulationError("voting window is empty; shorten the train or margins")
    rng = substream(sc.seed, f"vote-time:{addr}")
    return lo + int(rng.integers(0, hi - lo))


class ClientActor:
    """Base client: owns the per-client random stream and claim state.

    A plain instance generates no traffic at all, which is exactly the
    vote-only model: its access link carries circuit setup and the vote
    exchange, nothing else.
    """

    def __init__(self, world: "World", node):
        self.world = world
        self.node = node
        self.rng = substream(world.cfg.scenario.seed, f"client:{node.addr}")
        self.suspended = False
        self._resume_hooks = []

    def start(self):
        pass

    def on_resume(self, fn):
        if self.suspended:
            self._resume_hooks.append(fn)
        else:
            fn()

    def claim_begin(self):
        self.suspended = True

    def claim_end(self):
        self.suspended = False
        hooks, self._resume_hooks = self._resume_hooks, []
        for fn in hooks:
            fn()

    # -- shared behaviors ------------------------------------------------

    def _stagger_ns(self):
        lim = min(30.0, self.world.cfg.scenario.warmup_s)
        return int(self.rng.uniform(0.0, lim) * NS_PER_S)

    def _directory_fetch(self, done):
        w = self.world
        directory = w.topo.directories[int(self.rng.integers(len(w.topo.directories)))]
        spacing = w.cell_spacing_ns

        def reply():
            w.net.send_cell(directory, self.node)

        for k in range(2):
            w.sim.schedule(
                w.sim.now + k * spacing, w.net.send_cell, self.node, directory, reply
            )
        w.sim.schedule(w.sim.now + 2 * spacing, done)

    def _build_circuit(self, done):
        """Pick relays and run the paced setup handshake; `done` fires one
        cell slot after the last reply would be on its way."""
        w = self.world
        cc = w.cfg.circuit
        picks = self.rng.choice(len(w.topo.relays), size=cc.hops, replace=False)
        self.circuit = [w.topo.relays[int(i)] for i in picks]
        spacing = w.cell_spacing_ns
        total = cc.hops * cc.setup_cells_per_hop
        for k in range(total):
            hop = k // cc.setup_cells_per_hop
            w.sim.schedule(w.sim.now + k * spacing, self._setup_cell, hop)
        w.sim.schedule(w.sim.now + total * spacing, done)

    def _setup_cell(self, hop):
        w = self.world
        out = [self.node] + self.circuit[: hop + 1]
        w.net.send_path(out, final=lambda: w.net.send_path(out[::-1]))


class FileClient(ClientActor):
    def start(self):
        self.world.sim.schedule(self.world.sim.now + self._stagger_ns(), self._boot)

    def _boot(self):
        self._directory_fetch(lambda: self._build_circuit(self._schedule_transfer))

    def _schedule_transfer(self):
        delay = _exp_ns(self.rng, self.world.cfg.file_model.idle_mean_s)
        self.world.sim.schedule(self.world.sim.now + delay, self._begin_transfer)

    def _begin_transfer(self):
        if self.suspended:
            self.on_resume(self._begin_transfer)
            return
        w = self.world
        fm = w.cfg.file_model
        server = w.topo.file_servers[int(self.rng.integers(len(w.topo.file_servers)))]
        size = int(self.rng.integers(fm.size_cells_min, fm.size_cells_max + 1))
        rate = int(self.rng.integers(fm.rate_min_cps, fm.rate_max_cps + 1))
        FileTransfer(self, server, size, rate).begin()

    def transfer_done(self):
        self._schedule_transfer()


class FileTransfer:
    """One download: the server paces cells toward the client under a
    cumulative-ack flow window."""

    def __init__(self, client: FileClient, server, size_cells, rate_cps):
        self.client = client
        self.world = client.world
        self.fm = self.world.cfg.file_model
        self.size = size_cells
        self.up = [client.node] + client.circuit + [server]
        self.down = self.up[::-1]
        self.body_gap = round(NS_PER_S / rate_cps)
        self.burst_gap = int(self.fm.burst_gap_ms * NS_PER_MS)
        self.sent = 0
        self.acked = 0
        self.recv = 0
        self.waiting = False
        self._ack_deferred = False

    def begin(self):
        self.world.net.send_path(self.up, final=self._emit)

    def _gap_after(self, i):
        b = self.fm.burst_cells
        if i < b or i >= self.size - b:
            return self.burst_gap
        return self.body_gap

    def _emit(self):
        if self.sent >= self.size:
            return
        if self.sent >= self.acked + self.fm.flow_window:
            self.waiting = True
            return
        self.world.net.send_path(self.down, final=self._cell_arrived)
        self.sent += 1
        if self.sent < self.size:
            self.world.sim.schedule(
                self.world.sim.now + self._gap_after(self.sent), self._emit
            )

    def _cell_arrived(self):
        self.recv += 1
        if self.recv % self.fm.ack_every == 0:
            if self.client.suspended:
                if not self._ack_deferred:
                    self._ack_deferred = True
                    self.client.on_resume(self._deferred_ack)
            else:
                self._send_ack()
        if self.recv >= self.size:
            self.client.transfer_done()

    def _deferred_ack(self):
        self._ack_deferred = False
        self._send_ack()

    def _send_ack(self):
        n = self.recv
        self.world.net.send_path(self.up, final=lambda: self._ack_in(n))

    def _ack_in(self, n):
        if n > self.acked:
            self.acked = n
        if self.waiting:
            self.waiting = False
            self._emit()


class BrowserClient(ClientActor):
    def start(self):
        self.world.sim.schedule(self.world.sim.now + self._stagger_ns(), self._boot)

    def _boot(self):
        self._directory_fetch(lambda: self._build_circuit(self._schedule_page))

    def _schedule_page(self):
        delay = _exp_ns(self.rng, self.world.cfg.browser_model.think_mean_s)
        self.world.sim.schedule(self.world.sim.now + delay, self._begin_page)

    def _begin_page(self):
        if self.suspended:
            self.on_resume(self._begin_page)
            return
        w = self.world
        bm = w.cfg.browser_model
        server = w.topo.web_servers[int(self.rng.integers(len(w.topo.web_servers)))]
        objects = int(self.rng.integers(bm.objects_min, bm.objects_max + 1))
        PageLoad(self, server, objects).next_object()

    def page_done(self):
        self._schedule_page()


class PageLoad:
    def __init__(self, client: BrowserClient, server, objects):
        self.client = client
        self.world = client.world
        self.bm = self.world.cfg.browser_model
        self.up = [client.node] + client.circuit + [server]
        self.down = self.up[::-1]
        self.remaining = objects
        self._want = 0
        self._got = 0

    def next_object(self):
        if self.client.suspended:
            self.client.on_resume(self.next_object)
            return
        if self.remaining == 0:
            self.client.page_done()
            return
        self.remaining -= 1
        rng = self.client.rng
        self._want = int(rng.integers(self.bm.object_cells_min, self.bm.object_cells_max + 1))
        self._got = 0
        self.world.net.send_path(self.up, final=self._serve)

    def _serve(self):
        gap = int(self.bm.burst_gap_ms * NS_PER_MS)
        for k in range(self._want):
            self.world.sim.schedule(
                self.world.sim.now + k * gap,
                self.world.net.send_path,
                self.down,
                self._cell_arrived,
            )

    def _cell_arrived(self):
        self._got += 1
        if self._got < self._want:
            return
        rng = self.client.rng
        gap_ms = rng.uniform(self.bm.object_gap_ms_min, self.bm.object_gap_ms_max)
        self.world.sim.schedule(
            self.world.sim.now + int(gap_ms * NS_PER_MS), self.next_object
        )


class BulkClient(ClientActor):
    """Steady relay load: chunked downloads with short pauses, forever."""

    def start(self):
        self.world.sim.schedule(self.world.sim.now + self._stagger_ns(), self._boot)

    def _boot(self):
        self._build_circuit(self._next_chunk)

    def _next_chunk(self):
        w = self.world
        server = w.topo.file_servers[int(self.rng.integers(len(w.topo.file_servers)))]
        up = [self.node] + self.circuit + [server]
        down = up[::-1]
        bm = w.cfg.bulk_model
        gap = int(bm.cell_gap_ms * NS_PER_MS)
        got = [0]

        def arrived():
            got[0] += 1
            if got[0] == bm.chunk_cells:
                w.sim.schedule(w.sim.now + int(bm.pause_s * NS_PER_S), self._next_chunk)

        def serve():
            for k in range(bm.chunk_cells):
                w.sim.schedule(w.sim.now + k * gap, w.net.send_path, down, arrived)

        w.net.send_path(up, final=serve)


class BallotBox:
    """Accepts exchanges and answers per the configured protocol shape."""

    def __init__(self, world: "World", node):
        self.world = world
        self.node = node
        self.think_ns = int(world.cfg.vote.box_think_ms * NS_PER_MS)

    def on_app(self, session: "VoteSession", kind):
        proto = self.world.cfg.protocol
        if kind == "open":
            session.opens_seen += 1
            if session.opens_seen == proto.handshake_client:
                self._reply(session, proto.handshake_server)
        elif kind == "payload":
            session.payloads_seen += 1
            if proto.ack_per_payload and session.payloads_seen <= proto.payload_acks:
                self._reply(session, 1)
            if session.payloads_seen == proto.payload_packets:
                self._reply(session, proto.confirmation_packets)
        # close: nothing, the box goes quiet

    def _reply(self, session, n_cells):
        w = self.world
        back = session.reverse_path
        for j in range(n_cells):
            w.sim.schedule(w.sim.now + (j + 1) * self.think_ns, w.net.send_path, back)


class VoteSession:
    """One vote: the full cell train on the client's cell clock."""

    def __init__(self, world: "World", client: ClientActor, box: BallotBox,
                 relays, start_ns):
        self.world = world
        self.client = client
        self.box = box
        self.relays = relays
        proto = world.cfg.protocol
        cc = world.cfg.circuit
        pads = world.cfg.vote.claim_pad_cells

        slots = [("pad",)] * pads
        for h in range(cc.hops):
            slots += [("setup", h)] * cc.setup_cells_per_hop
        slots += [("open",)] * proto.handshake_client
        slots += [("payload", i) for i in range(proto.payload_packets)]
        slots += [("close",)] * proto.teardown_packets
        slots += [("pad",)] * pads
        slots.append(("destroy",))
        self.slots = slots

        self.opens_seen = 0
        self.payloads_seen = 0
        self.truth_written = False
        self.reverse_path = [box.node] + relays[::-1] + [client.node]

        sim = world.sim
        spacing = world.cell_spacing_ns
        lead = int(world.cfg.vote.claim_lead_ms * NS_PER_MS)
        sim.schedule(max(start_ns - lead, sim.now), client.claim_begin)
        for k in range(len(slots)):
            sim.schedule(start_ns + k * spacing, self._emit, k)
        sim.schedule(start_ns + len(slots) * spacing, client.claim_end)

    @classmethod
    def span_cells(cls, cfg: Config) -> int:
        proto, cc = cfg.protocol, cfg.circuit
        return (
            2 * cfg.vote.claim_pad_cells
            + cc.hops * cc.setup_cells_per_hop
            + proto.handshake_client
            + proto.payload_packets
            + proto.teardown_packets
            + 1
        )

    def _emit(self, k):
        w = self.world
        slot = self.slots[k]
        kind = slot[0]
        c = self.client.node
        if kind == "pad":
            # link padding, absorbed by the entry relay
            w.net.send_cell(c, self.relays[0])
        elif kind == "setup":
            out = [c] + self.relays[: slot[1] + 1]
            w.net.send_path(out, final=lambda: w.net.send_path(out[::-1]))
        elif kind == "destroy":
            w.net.send_path([c] + self.relays)
        else:
            if kind == "payload" and slot[1] == 0:
                self._write_truth()
            elif kind == "open" and not self.truth_written and not any(
                s[0] == "payload" for s in self.slots
            ):
                self._write_truth()
            path = [c] + self.relays + [self.box.node]
            w.net.send_path(path, final=lambda: self.box.on_app(self, kind))

    def _write_truth(self):
        if not self.truth_written:
            self.truth_written = True
            self.world.truth.append(
                (self.client.node.addr, self.world.sim.now, self.box.node.addr)
            )


_CLIENT_KINDS = {
    "file": FileClient,
    "browser": BrowserClient,
    "vote-only": ClientActor,
}


class World:
    """One configured run: topology, link fabric, actors, capture."""

    def __init__(self, cfg: Config):
        self.cfg = cfg
        self.sim = Simulator()
        self.topo = Topology(cfg)
        self.cell_spacing_ns = int(round(cfg.circuit.cell_spacing_ms * NS_PER_MS))
        discard = (
            int(cfg.scenario.warmup_s * NS_PER_S) if cfg.capture.discard_warmup else 0
        )
        self.capture = Capture(discard_before=discard)
        self.net = Network(self.sim, self.capture, self.topo)
        self.truth = []

        kind = _CLIENT_KINDS[cfg.scenario.traffic]
        self.clients = {n.addr: kind(self, n) for n in self.topo.clients}
        self.bulk = [BulkClient(self, n) for n in self.topo.bulk]
        self.boxes = {n.addr: BallotBox(self, n) for n in self.topo.boxes}
        self.log = None

    def _schedule_votes(self):
        cfg = self.cfg
        span_ns = VoteSession.span_cells(cfg) * self.cell_spacing_ns
        for node in self.topo.voters:
            start = draw_vote_start(cfg, node.addr, span_ns)
            rng = substream(cfg.scenario.seed, f"vote-setup:{node.addr}")
            picks = rng.choice(len(self.topo.relays), size=cfg.circuit.hops, replace=False)
            relays = [self.topo.relays[int(i)] for i in picks]
            box_node = self.topo.boxes[int(rng.integers(len(self.topo.boxes)))]
            client = self.clients[node.addr]
            VoteSession(self, client, self.boxes[box_node.addr], relays, start)

    def run(self) -> "World":
        for actor in self.clients.values():
            actor.start()
        for actor in self.bulk:
            actor.start()
        self._schedule_votes()
        self.sim.run(until=int(self.cfg.scenario.duration_s * NS_PER_S))
        # packets still in flight at the horizon are neither delivered nor
        # dropped; conservation is injected == delivered + dropped + in_flight
        self.in_flight = self.sim.injected - self.sim.delivered - self.sim.dropped
        if self.in_flight < 0:
            raise SimulationError("delivered more packets than were injected")
        self.log = self.capture.freeze(self.topo.addrs)
        self.truth.sort(key=lambda r: r[1])
        return self

    def manifest(self) -> dict:
        from . import __version__

        return {
            "scenario": self.cfg.scenario.name,
            "seed": self.cfg.scenario.seed,
            "config_sha256": self.cfg.digest(),
            "version": __version__,
            "events": self.sim.events_processed,
            "records": len(self.log) if self.log is not None else 0,
            "votes": len(self.truth),
        }
