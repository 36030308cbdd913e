"""Naive reference implementations used as oracles by the test suite.

Everything here is written for transparency, not speed: plain lists, linear
scans, no numpy, no shared code with the package beyond public data shapes.
Records are (time_ns, src_addr, dst_addr) tuples throughout.
"""

from collections import Counter


class NaiveScheduler:
    """Sorted-list event loop with the same contract as the real simulator.

    Used to cross-check event ordering and counts: pending events are kept in
    a plain list and the next one is found with min() on (time, insertion
    seq) every iteration.
    """

    def __init__(self):
        self.now = 0
        self._pending = []
        self._next_seq = 0
        self.trace = []

    def schedule(self, at, fn, *args):
        if at < self.now:
            raise ValueError("schedule into the past")
        self._pending.append((at, self._next_seq, fn, args))
        self._next_seq += 1

    def run(self, until):
        processed = 0
        while True:
            eligible = [e for e in self._pending if e[0] <= until]
            if not eligible:
                break
            ev = min(eligible, key=lambda e: (e[0], e[1]))
            self._pending.remove(ev)
            at, seq, fn, args = ev
            self.now = at
            self.trace.append((at, seq))
            fn(*args)
            processed += 1
        self.now = until
        return processed


def queue_replay(send_times_ns, pps, latency_ns):
    """Store-and-forward arrival times for a capped link, zero jitter.

    Each packet is serialized for one full interval after the later of its
    send time and the previous packet's departure.
    """
    interval = round(1e9 / pps)
    arrivals = []
    last_dep = None
    for s in send_times_ns:
        dep = s if last_dep is None else max(s, last_dep)
        dep += interval
        arrivals.append(dep + latency_ns)
        last_dep = dep
    return arrivals


def window_filter(records, tracked, x, t_ns):
    """Delete whole over-full windows per tracked endpoint and direction.

    Windows tumble with width t_ns, anchored at the earliest record time in
    the input. A record dies if any tracked stream it belongs to has more
    than x records in that record's window. x=None disables the filter.
    """
    if x is None or not records:
        return list(records)
    t0 = min(t for t, _, _ in records)
    counts = Counter()
    for t, s, d in records:
        w = (t - t0) // t_ns
        if s in tracked:
            counts[(s, 0, w)] += 1
        if d in tracked:
            counts[(d, 1, w)] += 1
    kept = []
    for t, s, d in records:
        w = (t - t0) // t_ns
        if s in tracked and counts[(s, 0, w)] > x:
            continue
        if d in tracked and counts[(d, 1, w)] > x:
            continue
        kept.append((t, s, d))
    return kept


def classify(rec, client, box):
    """Map a record to a pattern step kind for one (client, box) pair.

    Returns one of "client out", "client in", "server in", "server out",
    or None when the record touches neither endpoint.
    """
    t, s, d = rec
    if s == client:
        return "client out"
    if d == client:
        return "client in"
    if d == box:
        return "server in"
    if s == box:
        return "server out"
    return None


def find_matches(records, clients, boxes, pattern, d_ns):
    """Greedy earliest-binding matcher, directly transcribed.

    For each (client, box) pair: candidate bindings start at every record of
    the first pattern step kind, in time order. Each later step binds the
    earliest record of the required kind that is strictly later than the
    previously bound record and at most d_ns after it. No backtracking. The
    first candidate that completes wins the pair; its first bound record's
    time is the reported vote time. Records must arrive sorted by
    (time, src, dst).

    Returns [(client, box, vote_time_ns, bound_record_tuples)] sorted by
    (client, box).
    """
    out = []
    for c in sorted(clients):
        for b in sorted(boxes):
            sub = [r for r in records if classify(r, c, b) is not None]
            kinds = [classify(r, c, b) for r in sub]
            best = None
            for i in range(len(sub)):
                if kinds[i] != pattern[0]:
                    continue
                bound = [i]
                prev_t = sub[i][0]
                ok = True
                for step in pattern[1:]:
                    nxt = None
                    for j in range(bound[-1] + 1, len(sub)):
                        tj = sub[j][0]
                        if tj <= prev_t:
                            continue
                        if tj - prev_t > d_ns:
                            break
                        if kinds[j] == step:
                            nxt = j
                            break
                    if nxt is None:
                        ok = False
                        break
                    bound.append(nxt)
                    prev_t = sub[nxt][0]
                if ok:
                    best = (c, b, sub[bound[0]][0], [sub[j] for j in bound])
                    break
            if best is not None:
                out.append(best)
    return out


def visible_subset(records, visible, boxes):
    """Records touching a visible client or a ballot box, order preserved."""
    keep = set(visible) | set(boxes)
    return [r for r in records if r[1] in keep or r[2] in keep]
