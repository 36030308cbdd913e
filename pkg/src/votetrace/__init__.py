"""Discrete-event simulation of onion-routed voting traffic plus a
timing-pattern traffic-correlation analyzer for it."""

__version__ = "0.1.0"
