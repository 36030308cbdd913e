"""Shared scenario builders for the test suite."""

from votetrace.actors import World
from votetrace.config import Config


def toy_cfg(traffic="vote-only", seed=1):
    cfg = Config()
    cfg.scenario.name = "toy"
    cfg.scenario.seed = seed
    cfg.scenario.traffic = traffic
    cfg.scenario.duration_s = 60.0
    cfg.scenario.warmup_s = 10.0
    cfg.scenario.vote_margin_s = 10.0
    t = cfg.topology
    t.relays, t.directories, t.clients = 3, 1, 1
    t.bulk_clients, t.file_servers, t.web_servers = 0, 1, 1
    t.ballot_boxes, t.voters, t.visible_clients = 1, 1, 1
    cfg.links.jitter_ms = 0.0
    return cfg


def run_toy(cfg):
    return World(cfg).run()
