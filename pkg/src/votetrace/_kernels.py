"""Hot loops behind the analyzer, in two interchangeable flavors.

The jitted variants carry the load; the pure-numpy variants are the
fallback and the cross-check. Selection: VOTETRACE_KERNELS=numba|numpy in
the environment, defaulting to numba when it imports. Both flavors must
produce bit-identical results; the test suite holds them to that.
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - depends on environment
    numba = None
    _HAVE_NUMBA = False


def _pick_backend():
    want = os.environ.get("VOTETRACE_KERNELS", "").strip().lower()
    if want == "numpy":
        return "numpy"
    if want == "numba":
        if not _HAVE_NUMBA:
            raise RuntimeError("VOTETRACE_KERNELS=numba but numba is not importable")
        return "numba"
    if want:
        raise RuntimeError(f"VOTETRACE_KERNELS must be 'numba' or 'numpy', not {want!r}")
    return "numba" if _HAVE_NUMBA else "numpy"


BACKEND = _pick_backend()


# --- window filtering ---------------------------------------------------
#
# Tumbling windows of width t_ns anchored at t0. Per tracked endpoint and
# direction, a window holding more than x records condemns every record in
# it; a record dies if any stream it belongs to condemns it.

def window_keep_numpy(t, src, dst, tracked, x, t_ns, t0):
    n_addr = len(tracked)
    win = (t - t0) // t_ns
    n_win = int(win.max()) + 1 if len(win) else 1
    src_combo = (src * 2) * n_win + win
    dst_combo = (dst * 2 + 1) * n_win + win
    m_src = tracked[src]
    m_dst = tracked[dst]
    counts = np.bincount(
        np.concatenate([src_combo[m_src], dst_combo[m_dst]]),
        minlength=2 * n_addr * n_win,
    )
    kill = (m_src & (counts[src_combo] > x)) | (m_dst & (counts[dst_combo] > x))
    return ~kill


if _HAVE_NUMBA:

    @numba.njit(cache=True)
    def _window_keep_nb(t, src, dst, tracked, x, t_ns, t0, n_win):
        n = len(t)
        counts = np.zeros(2 * len(tracked) * n_win, dtype=np.int64)
        for i in range(n):
            w = (t[i] - t0) // t_ns
            if tracked[src[i]]:
                counts[(src[i] * 2) * n_win + w] += 1
            if tracked[dst[i]]:
                counts[(dst[i] * 2 + 1) * n_win + w] += 1
        keep = np.empty(n, dtype=np.bool_)
        for i in range(n):
            w = (t[i] - t0) // t_ns
            dead = False
            if tracked[src[i]] and counts[(src[i] * 2) * n_win + w] > x:
                dead = True
            if tracked[dst[i]] and counts[(dst[i] * 2 + 1) * n_win + w] > x:
                dead = True
            keep[i] = not dead
        return keep

    def window_keep_numba(t, src, dst, tracked, x, t_ns, t0):
        n_win = int(((t - t0) // t_ns).max()) + 1 if len(t) else 1
        return _window_keep_nb(t, src, dst, tracked, x, t_ns, t0, n_win)

else:  # pragma: no cover

    def window_keep_numba(*args):
        raise RuntimeError("numba backend unavailable")


# --- pattern matching ---------------------------------------------------
#
# One (client, box) pair at a time: times and step kinds of the pair's
# records, sorted by time. Candidates start at each record matching step 0;
# each later step binds the earliest record of the required kind strictly
# later than the previous binding and at most d_ns after it. The first
# candidate to complete wins. Returns the bound indices or an empty array.

def match_pair_numpy(times, kinds, steps, d_ns):
    n = len(times)
    if n == 0:
        return np.empty(0, dtype=np.int64)
    starts = np.flatnonzero(kinds == steps[0])
    if len(starts) == 0:
        return np.empty(0, dtype=np.int64)
    by_kind = {int(k): np.flatnonzero(kinds == k) for k in np.unique(steps)}
    prev_t = times[starts]
    alive = np.ones(len(starts), dtype=bool)
    for s in steps[1:]:
        pos = by_kind[int(s)]
        kt = times[pos]
        nxt = np.searchsorted(kt, prev_t, side="right")
        hit = nxt < len(pos)
        cand_t = np.where(hit, kt[np.minimum(nxt, len(pos) - 1)], np.iinfo(np.int64).max)
        alive &= hit & (cand_t - prev_t <= d_ns)
        prev_t = cand_t
    winners = np.flatnonzero(alive)
    if len(winners) == 0:
        return np.empty(0, dtype=np.int64)
    start = int(starts[winners[0]])
    return _rebind(times, kinds, steps, d_ns, start)


def _rebind(times, kinds, steps, d_ns, start):
    bound = [start]
    prev_t = int(times[start])
    j = start + 1
    n = len(times)
    for s in steps[1:]:
        while j < n:
            tj = int(times[j])
            if tj > prev_t + d_ns:
                return np.empty(0, dtype=np.int64)  # cannot happen for a winner
            if tj > prev_t and kinds[j] == s:
                break
            j += 1
        else:
            return np.empty(0, dtype=np.int64)
        bound.append(j)
        prev_t = int(times[j])
        j += 1
    return np.array(bound, dtype=np.int64)


if _HAVE_NUMBA:

    @numba.njit(cache=True)
    def _match_pair_nb(times, kinds, steps, d_ns):
        n = len(times)
        n_steps = len(steps)
        out = np.empty(n_steps, dtype=np.int64)
        for i in range(n):
            if kinds[i] != steps[0]:
                continue
            out[0] = i
            prev_t = times[i]
            j = i + 1
            ok = True
            for si in range(1, n_steps):
                want = steps[si]
                found = -1
                while j < n:
                    tj = times[j]
                    if tj > prev_t + d_ns:
                        break
                    if tj > prev_t and kinds[j] == want:
                        found = j
                        break
                    j += 1
                if found < 0:
                    ok = False
                    break
                out[si] = found
                prev_t = times[found]
                j = found + 1
            if ok:
                return out
        return np.empty(0, dtype=np.int64)

    def match_pair_numba(times, kinds, steps, d_ns):
        return _match_pair_nb(times, kinds, steps, d_ns)

else:  # pragma: no cover

    def match_pair_numba(*args):
        raise RuntimeError("numba backend unavailable")


def window_keep(t, src, dst, tracked, x, t_ns, t0):
    if BACKEND == "numba":
        return window_keep_numba(t, src, dst, tracked, x, t_ns, t0)
    return window_keep_numpy(t, src, dst, tracked, x, t_ns, t0)


def match_pair(times, kinds, steps, d_ns):
    if BACKEND == "numba":
        return match_pair_numba(times, kinds, steps, d_ns)
    return match_pair_numpy(times, kinds, steps, d_ns)
