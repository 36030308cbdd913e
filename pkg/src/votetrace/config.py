"""Scenario configuration: INI loading, validation, derived protocol values.

Config files are sectioned key=value text. Every key has a default; unknown
sections or keys are hard errors so typos cannot silently change a run.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field, fields

from .engine import NS_PER_MS


class ConfigError(ValueError):
    """Malformed scenario configuration."""


# pattern step kinds, shared vocabulary for extraction and matching
CLIENT_OUT = "client out"
CLIENT_IN = "client in"
SERVER_IN = "server in"
SERVER_OUT = "server out"
STEP_KINDS = (CLIENT_OUT, CLIENT_IN, SERVER_IN, SERVER_OUT)


@dataclass
class Scenario:
    name: str = "unnamed"
    seed: int = 1
    duration_s: float = 600.0
    warmup_s: float = 120.0
    traffic: str = "file"  # file | browser | vote-only
    vote_margin_s: float = 60.0


@dataclass
class TopologySpec:
    relays: int = 20
    directories: int = 3
    clients: int = 54
    bulk_clients: int = 21
    file_servers: int = 10
    web_servers: int = 21
    ballot_boxes: int = 3
    voters: int = 20
    visible_clients: int = 20


@dataclass
class LinkSpec:
    client_relay_ms: float = 20.0
    relay_relay_ms: float = 25.0
    relay_server_ms: float = 15.0
    jitter_ms: float = 2.0
    jitter_clip_sigma: float = 3.0
    relay_bandwidth_pps: float = 0.0  # 0 disables the cap


@dataclass
class CircuitSpec:
    hops: int = 3
    cell_bytes: int = 16384
    cell_spacing_ms: float = 155.0
    setup_cells_per_hop: int = 2


@dataclass
class VoteSpec:
    claim_pad_cells: int = 7
    claim_lead_ms: float = 1300.0
    box_think_ms: float = 1.0


@dataclass
class Protocol:
    """Shape of one ballot exchange, in whole packets.

    The client opens with `handshake_client` packets, the server admits with
    `handshake_server`, the ballot itself is `payload_packets`, the server
    confirms receipt with `confirmation_packets`, and the client closes with
    `teardown_packets`. With `ack_per_payload` the server additionally acks
    each payload packet except the last, whose receipt the confirmation
    covers.
    """

    handshake_client: int = 1
    handshake_server: int = 1
    payload_packets: int = 1
    confirmation_packets: int = 1
    ack_per_payload: bool = False
    teardown_packets: int = 1

    @property
    def payload_acks(self) -> int:
        if not self.ack_per_payload:
            return 0
        return max(self.payload_packets - 1, 0)

    def packet_count(self) -> int:
        """Application packets on the wire for one complete exchange."""
        return (
            self.handshake_client
            + self.handshake_server
            + self.payload_packets
            + self.payload_acks
            + self.confirmation_packets
            + self.teardown_packets
        )

    def pattern_length(self) -> int:
        return (
            2 * (self.handshake_client + self.handshake_server)
            + self.payload_packets
            + self.payload_acks
            + max(self.confirmation_packets - 1, 0)
        )

    def step_caps(self) -> dict:
        """Per-kind record budget for pattern extraction.

        Each saturates once the protocol has no further packets of that
        kind; repeats beyond the cap are trimmed.
        """
        return {
            CLIENT_OUT: self.handshake_client + self.payload_packets,
            SERVER_IN: self.handshake_client,
            SERVER_OUT: self.handshake_server
            + self.payload_acks
            + max(self.confirmation_packets - 1, 0),
            CLIENT_IN: self.handshake_server,
        }


@dataclass
class FileModel:
    size_cells_min: int = 64
    size_cells_max: int = 320
    rate_min_cps: int = 8
    rate_max_cps: int = 11
    burst_cells: int = 8
    burst_gap_ms: float = 10.0
    ack_every: int = 8
    flow_window: int = 16
    idle_mean_s: float = 24.0


@dataclass
class BrowserModel:
    objects_min: int = 2
    objects_max: int = 8
    object_cells_min: int = 8
    object_cells_max: int = 24
    object_gap_ms_min: float = 50.0
    object_gap_ms_max: float = 200.0
    burst_gap_ms: float = 10.0
    think_mean_s: float = 20.0


@dataclass
class BulkModel:
    chunk_cells: int = 32
    cell_gap_ms: float = 50.0
    pause_s: float = 2.0


@dataclass
class CaptureSpec:
    discard_warmup: bool = False


@dataclass
class SweepSpec:
    """Analysis plan: a block-size sweep at a fixed delay, plus a delay
    sweep at a fixed block size."""

    x_values: tuple = tuple(range(3, 16))
    x_sweep_d_ns: int = 1_000_000_000
    d_values_ns: tuple = (
        10 * NS_PER_MS,
        50 * NS_PER_MS,
        100 * NS_PER_MS,
        250 * NS_PER_MS,
        500 * NS_PER_MS,
        1_000 * NS_PER_MS,
        2_000 * NS_PER_MS,
        4_000 * NS_PER_MS,
    )
    d_sweep_x: int = 7
    t_ns: int = 1_085 * NS_PER_MS


@dataclass
class Config:
    scenario: Scenario = field(default_factory=Scenario)
    topology: TopologySpec = field(default_factory=TopologySpec)
    links: LinkSpec = field(default_factory=LinkSpec)
    circuit: CircuitSpec = field(default_factory=CircuitSpec)
    vote: VoteSpec = field(default_factory=VoteSpec)
    protocol: Protocol = field(default_factory=Protocol)
    file_model: FileModel = field(default_factory=FileModel)
    browser_model: BrowserModel = field(default_factory=BrowserModel)
    bulk_model: BulkModel = field(default_factory=BulkModel)
    capture: CaptureSpec = field(default_factory=CaptureSpec)
    sweep: SweepSpec = field(default_factory=SweepSpec)

    def canonical_lines(self):
        out = []
        for f in fields(self):
            section = getattr(self, f.name)
            for sf in fields(section):
                out.append(f"{f.name}.{sf.name}={getattr(section, sf.name)}")
        return sorted(out)

    def digest(self) -> str:
        body = "\n".join(self.canonical_lines()).encode()
        return hashlib.sha256(body).hexdigest()


def _parse_bool(raw, where):
    v = raw.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{where}: expected a boolean, got {raw!r}")


def _parse_int_tuple(raw, where):
    # accepts "3-15" ranges and comma lists, mixed
    vals = []
    for part in raw.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            vals.extend(range(int(lo), int(hi) + 1))
        else:
            vals.append(int(part))
    if not vals:
        raise ConfigError(f"{where}: empty list")
    return tuple(vals)


def _convert(raw, template_value, where):
    try:
        if isinstance(template_value, bool):
            return _parse_bool(raw, where)
        if isinstance(template_value, int):
            return int(raw)
        if isinstance(template_value, float):
            return float(raw)
        if isinstance(template_value, tuple):
            return _parse_int_tuple(raw, where)
        return raw.strip()
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def load_config(path) -> Config:
    parser = configparser.ConfigParser(interpolation=None)
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file: {path}")
    cfg = Config()
    known_sections = {f.name: getattr(cfg, f.name) for f in fields(cfg)}
    for section in parser.sections():
        if section not in known_sections:
            raise ConfigError(f"unknown section [{section}]")
        target = known_sections[section]
        known_keys = {f.name for f in fields(target)}
        for key, raw in parser.items(section):
            if key not in known_keys:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            where = f"[{section}] {key}"
            setattr(target, key, _convert(raw, getattr(target, key), where))
    validate(cfg)
    return cfg


def validate(cfg: Config) -> None:
    sc, topo = cfg.scenario, cfg.topology
    if sc.traffic not in ("file", "browser", "vote-only"):
        raise ConfigError(f"unknown traffic model {sc.traffic!r}")
    if sc.warmup_s >= sc.duration_s:
        raise ConfigError("warmup_s must be shorter than duration_s")
    if sc.duration_s - sc.warmup_s <= sc.vote_margin_s:
        raise ConfigError("no room for the vote window before the end margin")
    if topo.voters > topo.clients:
        raise ConfigError("more voters than clients")
    if topo.visible_clients > topo.clients:
        raise ConfigError("more visible clients than clients")
    if topo.relays < cfg.circuit.hops:
        raise ConfigError("not enough relays for a circuit")
    for name in ("relays", "directories", "clients", "ballot_boxes"):
        if getattr(topo, name) < 1:
            raise ConfigError(f"topology.{name} must be at least 1")
    if cfg.scenario.traffic == "file" and topo.file_servers < 1:
        raise ConfigError("file traffic needs at least one file server")
    if cfg.scenario.traffic == "browser" and topo.web_servers < 1:
        raise ConfigError("browser traffic needs at least one web server")
