"""Discrete-event core: integer-nanosecond clock, scheduler, seeded
random streams, and point-to-point links with latency, jitter, FIFO
ordering and optional bandwidth caps."""

from __future__ import annotations

import hashlib
import heapq
import itertools

import numpy as np

NS_PER_MS = 1_000_000
NS_PER_S = 1_000_000_000


class SimulationError(RuntimeError):
    """Scheduling violation or malformed run."""


def substream(master_seed: int, name: str) -> np.random.Generator:
    """Independent generator derived from (master_seed, name).

    Streams are keyed by a hash of the name, so what other streams a run
    creates, and in which order, cannot perturb this one. Essential for
    reproducibility: topology changes must not reshuffle unrelated draws.
    """
    key = int.from_bytes(hashlib.sha256(name.encode()).digest()[:8], "big")
    seq = np.random.SeedSequence([int(master_seed), key])
    return np.random.Generator(np.random.PCG64(seq))


class TruncatedNormal:
    """Zero-mean normal sampler clipped to [-clip, +clip], drawn in blocks.

    sigma == 0 degenerates to a constant zero source.
    """

    __slots__ = ("_rng", "_sigma", "_clip", "_buf", "_pos")

    _BLOCK = 4096

    def __init__(self, rng: np.random.Generator, sigma: float, clip: float):
        if sigma < 0 or clip < 0:
            raise ValueError("sigma and clip must be non-negative")
        self._rng = rng
        self._sigma = float(sigma)
        self._clip = float(clip)
        self._buf = None
        self._pos = 0

    def draw(self) -> float:
        if self._sigma == 0.0:
            return 0.0
        if self._buf is None or self._pos >= len(self._buf):
            raw = self._rng.normal(0.0, self._sigma, size=self._BLOCK)
            self._buf = np.clip(raw, -self._clip, self._clip)
            self._pos = 0
        v = self._buf[self._pos]
        self._pos += 1
        return float(v)


class Simulator:
    """Heap-based event loop.

    Events are (fire_time, seq, callback, args); seq breaks time ties in
    insertion order. Scheduling into the past is a hard error. run(until)
    processes every event with fire_time <= until (including ones scheduled
    while running), leaves the clock at `until`, and returns the number of
    events processed by this call.
    """

    def __init__(self):
        self.now = 0
        self.events_processed = 0
        self.injected = 0
        self.delivered = 0
        self.dropped = 0
        self._heap = []
        self._seq = itertools.count()

    def schedule(self, at: int, fn, *args) -> None:
        if at < self.now:
            raise SimulationError(
                f"schedule into the past: t={at} but clock is {self.now}"
            )
        heapq.heappush(self._heap, (at, next(self._seq), fn, args))

    def run(self, until: int) -> int:
        heap = self._heap
        processed = 0
        while heap and heap[0][0] <= until:
            at, _, fn, args = heapq.heappop(heap)
            self.now = at
            fn(*args)
            processed += 1
        self.now = until
        self.events_processed += processed
        return processed


class _Direction:
    __slots__ = ("jitter", "last_departure", "last_arrival")

    def __init__(self, jitter):
        self.jitter = jitter
        self.last_departure = None
        self.last_arrival = 0


class Link:
    """Bidirectional pipe between two capture endpoints.

    Fixed propagation latency plus per-direction jitter; packets never
    overtake each other within a direction (arrivals are clamped to be
    non-decreasing). An optional bandwidth cap in packets per second
    serializes departures store-and-forward style: each packet departs one
    full interval after the later of its send time and the previous
    departure, so a burst drains at exactly the capped rate and is delayed,
    never dropped.

    Endpoints a/b are opaque capture ids. Every arrival is appended to the
    capture tap (when one is attached) as (arrival_time, src, dst).
    """

    __slots__ = ("sim", "capture", "a", "b", "latency_ns", "_interval", "_dirs")

    def __init__(self, sim, capture, a, b, latency_ns, jitter_ab, jitter_ba,
                 bandwidth_pps=0.0):
        self.sim = sim
        self.capture = capture
        self.a = a
        self.b = b
        self.latency_ns = int(latency_ns)
        self._interval = round(NS_PER_S / bandwidth_pps) if bandwidth_pps else 0
        self._dirs = {
            (a, b): _Direction(jitter_ab),
            (b, a): _Direction(jitter_ba),
        }

    def send(self, src, dst, deliver=None) -> int:
        """Inject one packet now; returns its scheduled arrival time."""
        d = self._dirs[(src, dst)]
        t = self.sim.now
        if self._interval:
            dep = t if d.last_departure is None else max(t, d.last_departure)
            dep += self._interval
            d.last_departure = dep
        else:
            dep = t
        arrival = dep + self.latency_ns + int(round(d.jitter.draw()))
        if arrival < d.last_arrival:
            arrival = d.last_arrival
        d.last_arrival = arrival
        self.sim.injected += 1
        self.sim.schedule(arrival, self._arrive, src, dst, deliver)
        return arrival

    def _arrive(self, src, dst, deliver):
        self.sim.delivered += 1
        if self.capture is not None:
            self.capture.append(self.sim.now, src, dst)
        if deliver is not None:
            deliver()
