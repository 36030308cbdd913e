"""Attack-side analysis: pattern extraction, noise filtering, matching.

The analyzer never sees simulator internals, only an AttackerView: sorted
(time, src, dst) records plus which addresses are watched clients and which
are ballot boxes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .capture import AttackerView
from .config import CLIENT_IN, CLIENT_OUT, SERVER_IN, SERVER_OUT, STEP_KINDS, Protocol
from .engine import NS_PER_S


class AnalysisError(RuntimeError):
    """The view cannot support the requested analysis."""


_CODE = {CLIENT_OUT: 0, SERVER_IN: 1, SERVER_OUT: 2, CLIENT_IN: 3}
_KIND = {v: k for k, v in _CODE.items()}


@dataclass(frozen=True)
class Pattern:
    """Ordered step kinds one complete exchange shows from the wire."""

    steps: tuple

    def __post_init__(self):
        if not self.steps:
            raise AnalysisError("empty pattern")
        bad = [s for s in self.steps if s not in STEP_KINDS]
        if bad:
            raise AnalysisError(f"unknown pattern step {bad[0]!r}")
        if self.steps[0] != CLIENT_OUT:
            raise AnalysisError("a pattern must begin with a client-output step")

    def __len__(self):
        return len(self.steps)

    def codes(self):
        return np.array([_CODE[s] for s in self.steps], dtype=np.int64)

    def format(self) -> str:
        return "".join(s + "\n" for s in self.steps)

    @classmethod
    def parse(cls, text: str) -> "Pattern":
        steps = tuple(line.strip() for line in text.splitlines() if line.strip())
        return cls(steps)


@dataclass(frozen=True)
class MatchResult:
    client: str
    box: str
    vote_time_ns: int
    record_indices: tuple


def _pair_kinds(src, dst, c_id, b_id):
    return np.where(
        src == c_id,
        _CODE[CLIENT_OUT],
        np.where(
            dst == c_id,
            _CODE[CLIENT_IN],
            np.where(dst == b_id, _CODE[SERVER_IN], _CODE[SERVER_OUT]),
        ),
    ).astype(np.int64)


def extract_pattern(view: AttackerView, protocol: Protocol,
                    quiet_gap_ns: int = NS_PER_S) -> Pattern:
    """Read one exchange's step sequence off a single-client view.

    The observation window opens at the last client-output record at or
    before the server's first inbound record, and runs past the server's
    last inbound record for as long as consecutive records stay within
    `quiet_gap_ns` of each other. Within the window, each step kind keeps
    only its protocol-saturated budget of earliest records; the pattern is
    the kept records' kind sequence in time order.
    """
    if len(view.visible) != 1:
        raise AnalysisError("pattern extraction needs exactly one watched client")
    log = view.log
    c_id = log.aid(view.visible[0])

    box_in_counts = {
        b: int(((log.dst == log.aid(b)) & (log.src != c_id)).sum()) for b in view.boxes
    }
    active = [b for b, n in box_in_counts.items() if n > 0]
    if not active:
        raise AnalysisError("no server-inbound records; nothing to extract")
    if len(active) > 1:
        raise AnalysisError("multiple servers saw traffic; ambiguous exchange")
    b_id = log.aid(active[0])

    mask = (log.src == c_id) | (log.dst == c_id) | (log.src == b_id) | (log.dst == b_id)
    idx = np.flatnonzero(mask)
    t = log.t[idx]
    kinds = _pair_kinds(log.src[idx], log.dst[idx], c_id, b_id)

    server_in = np.flatnonzero(kinds == _CODE[SERVER_IN])
    first_in_t = t[server_in[0]]
    opener = np.flatnonzero((kinds == _CODE[CLIENT_OUT]) & (t <= first_in_t))
    if len(opener) == 0:
        raise AnalysisError("no client-output record precedes the server's first inbound")
    start_t = t[opener[-1]]

    end_t = t[server_in[-1]]
    later = np.flatnonzero(t > end_t)
    for i in later:
        if t[i] - end_t > quiet_gap_ns:
            break
        end_t = t[i]

    in_win = (t >= start_t) & (t <= end_t)
    caps = protocol.step_caps()
    budget = {_CODE[k]: caps[k] for k in caps}
    kept = []
    for i in np.flatnonzero(in_win):
        k = int(kinds[i])
        if budget[k] > 0:
            budget[k] -= 1
            kept.append(_KIND[k])
    return Pattern(tuple(kept))


def noise_reduce(view: AttackerView, x, t_ns: int) -> AttackerView:
    """Drop every record inside an over-full window.

    Windows of width t_ns tumble from the view's first record. Streams are
    per endpoint per direction, for watched clients and boxes alike. x=None
    switches the filter off; x=0 deletes every tracked record.
    """
    if x is None:
        return view
    if t_ns <= 0:
        raise AnalysisError("window width must be positive")
    if int(x) < 0:
        raise AnalysisError("block size must be non-negative")
    log = view.log
    if len(log) == 0:
        return view
    tracked = np.zeros(len(log.addrs), dtype=bool)
    for a in list(view.visible) + list(view.boxes):
        i = log.aid(a)
        if i >= 0:
            tracked[i] = True
    keep = _kernels.window_keep(
        log.t, log.src, log.dst, tracked, int(x), int(t_ns), int(log.t.min())
    )
    return AttackerView(log.subset(keep), view.visible, view.boxes)


def match(view: AttackerView, pattern: Pattern, d_ns: int) -> list:
    """Greedy per-pair pattern matching over the view.

    Every (watched client, box) pair is scanned independently; the first
    candidate binding that completes yields that pair's match, timed at its
    first bound record. Results come back sorted by (client, box).
    """
    if d_ns <= 0:
        raise AnalysisError("maximum step delay must be positive")
    log = view.log
    steps = pattern.codes()
    results = []
    if len(log) == 0:
        return results
    touch_cache = {}

    def touching(addr):
        if addr not in touch_cache:
            i = log.aid(addr)
            touch_cache[addr] = (
                np.flatnonzero((log.src == i) | (log.dst == i)) if i >= 0 else np.empty(0, np.int64)
            )
        return touch_cache[addr]

    for c in view.visible:
        c_id = log.aid(c)
        if c_id < 0:
            continue
        for b in view.boxes:
            b_id = log.aid(b)
            if b_id < 0:
                continue
            idx = np.union1d(touching(c), touching(b))
            if len(idx) == 0:
                continue
            kinds = _pair_kinds(log.src[idx], log.dst[idx], c_id, b_id)
            bound = _kernels.match_pair(log.t[idx], kinds, steps, int(d_ns))
            if len(bound):
                g = idx[bound]
                results.append(
                    MatchResult(c, b, int(log.t[g[0]]), tuple(int(v) for v in g))
                )
    return results


def analyze(view: AttackerView, pattern: Pattern, x, t_ns: int, d_ns: int) -> list:
    return match(noise_reduce(view, x, t_ns), pattern, d_ns)
