"""Packet-record capture and interchange.

A capture is a flat sequence of (arrival_time_ns, src, dst) records taken at
link taps. In memory, addresses are interned to integer ids that follow
lexicographic address order, so sorting by (time, src_id, dst_id) and the
on-disk contract of sorting by (time, src, dst) as text agree.

On disk, the native format is one record per line: time, src, dst separated
by single spaces, strictly sorted. Classic packet-capture files (both the
microsecond and nanosecond flavors, either byte order, Ethernet or raw-IP
link type) can be ingested too, keeping only time/src/dst of IPv4 packets.
"""

from __future__ import annotations

import json
import struct
from array import array

import numpy as np


class IngestError(RuntimeError):
    """Malformed trace input."""


class Capture:
    """Append-only tap shared by every link in a run."""

    __slots__ = ("_t", "_src", "_dst", "discard_before")

    def __init__(self, discard_before=0):
        self._t = array("q")
        self._src = array("q")
        self._dst = array("q")
        self.discard_before = discard_before

    def append(self, t, src, dst):
        if t < self.discard_before:
            return
        self._t.append(t)
        self._src.append(src)
        self._dst.append(dst)

    def __len__(self):
        return len(self._t)

    def freeze(self, addrs) -> "RecordLog":
        t = np.asarray(self._t, dtype=np.int64)
        src = np.asarray(self._src, dtype=np.int64)
        dst = np.asarray(self._dst, dtype=np.int64)
        return RecordLog(t, src, dst, tuple(addrs), presorted=False)


class RecordLog:
    """Immutable sorted packet records plus their address table.

    Address ids equal the address's rank in the sorted table, which makes
    (time, src, dst) integer sorting equivalent to the textual contract.
    """

    __slots__ = ("t", "src", "dst", "addrs")

    def __init__(self, t, src, dst, addrs, presorted=False):
        addrs = tuple(addrs)
        if list(addrs) != sorted(addrs):
            # renumber ids into lexicographic rank order
            order = sorted(range(len(addrs)), key=lambda i: addrs[i])
            rank = np.empty(len(addrs), dtype=np.int64)
            for new, old in enumerate(order):
                rank[old] = new
            src = rank[src]
            dst = rank[dst]
            addrs = tuple(addrs[i] for i in order)
            presorted = False
        if not presorted:
            idx = np.lexsort((dst, src, t))
            t, src, dst = t[idx], src[idx], dst[idx]
        self.t = t
        self.src = src
        self.dst = dst
        self.addrs = addrs

    def __len__(self):
        return len(self.t)

    def aid(self, addr) -> int:
        """Id for an address, or -1 when it never appears in the table."""
        i = np.searchsorted(self.addrs, addr)
        if i < len(self.addrs) and self.addrs[i] == addr:
            return int(i)
        return -1

    def tuples(self):
        a = self.addrs
        return [
            (int(t), a[s], a[d])
            for t, s, d in zip(self.t.tolist(), self.src.tolist(), self.dst.tolist())
        ]

    def subset(self, mask) -> "RecordLog":
        return RecordLog(self.t[mask], self.src[mask], self.dst[mask], self.addrs,
                         presorted=True)

    def shifted(self, delta_ns) -> "RecordLog":
        return RecordLog(self.t + delta_ns, self.src, self.dst, self.addrs,
                         presorted=True)

    def between(self, a_addr, b_addr) -> "RecordLog":
        """Records of one link, both directions."""
        a, b = self.aid(a_addr), self.aid(b_addr)
        mask = ((self.src == a) & (self.dst == b)) | ((self.src == b) & (self.dst == a))
        return self.subset(mask)

    def touching(self, addr) -> "RecordLog":
        a = self.aid(addr)
        return self.subset((self.src == a) | (self.dst == a))

    def write_native(self, path):
        a = self.addrs
        with open(path, "w") as fh:
            for t, s, d in zip(self.t.tolist(), self.src.tolist(), self.dst.tolist()):
                fh.write(f"{t} {a[s]} {a[d]}\n")

    @classmethod
    def from_tuples(cls, rows) -> "RecordLog":
        addrs = sorted({r[1] for r in rows} | {r[2] for r in rows})
        index = {a: i for i, a in enumerate(addrs)}
        t = np.fromiter((r[0] for r in rows), dtype=np.int64, count=len(rows))
        src = np.fromiter((index[r[1]] for r in rows), dtype=np.int64, count=len(rows))
        dst = np.fromiter((index[r[2]] for r in rows), dtype=np.int64, count=len(rows))
        return cls(t, src, dst, tuple(addrs), presorted=False)


def read_native(path) -> RecordLog:
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(" ")
            if len(parts) != 3:
                raise IngestError(f"{path}:{lineno}: expected 'time src dst', got {line!r}")
            try:
                t = int(parts[0])
            except ValueError:
                raise IngestError(f"{path}:{lineno}: bad timestamp {parts[0]!r}") from None
            rows.append((t, parts[1], parts[2]))
    return RecordLog.from_tuples(rows)


_PCAP_MAGICS = {
    0xA1B2C3D4: ("<", 1_000),  # little endian, microsecond fractions
    0xD4C3B2A1: (">", 1_000),
    0xA1B23C4D: ("<", 1),  # nanosecond flavor
    0x4D3CB2A1: (">", 1),
}
_LINKTYPE_ETHERNET = 1
_LINKTYPE_RAW_IP = 101


def _ipv4_addrs(payload):
    if len(payload) < 20 or payload[0] >> 4 != 4:
        return None
    src = ".".join(str(b) for b in payload[12:16])
    dst = ".".join(str(b) for b in payload[16:20])
    return src, dst


def read_pcap(path) -> RecordLog:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 24:
        raise IngestError(f"{path}: truncated global header ({len(blob)} bytes)")
    magic = struct.unpack("<I", blob[:4])[0]
    if magic not in _PCAP_MAGICS:
        magic = struct.unpack(">I", blob[:4])[0]
    if magic not in _PCAP_MAGICS:
        raise IngestError(f"{path}: not a packet-capture file (magic {blob[:4]!r})")
    endian, frac_to_ns = _PCAP_MAGICS[magic]
    linktype = struct.unpack(endian + "I", blob[20:24])[0]
    if linktype not in (_LINKTYPE_ETHERNET, _LINKTYPE_RAW_IP):
        raise IngestError(f"{path}: unsupported link type {linktype}")
    rows = []
    off = 24
    while off < len(blob):
        if off + 16 > len(blob):
            raise IngestError(f"{path}: truncated packet header at byte {off}")
        sec, frac, incl, _orig = struct.unpack(endian + "IIII", blob[off : off + 16])
        off += 16
        if off + incl > len(blob):
            raise IngestError(f"{path}: truncated packet body at byte {off}")
        data = blob[off : off + incl]
        off += incl
        if linktype == _LINKTYPE_ETHERNET:
            if len(data) < 14 or data[12:14] != b"\x08\x00":
                continue  # not IPv4, skip
            data = data[14:]
        got = _ipv4_addrs(data)
        if got is None:
            continue
        t = sec * 1_000_000_000 + frac * frac_to_ns
        rows.append((t, got[0], got[1]))
    return RecordLog.from_tuples(rows)


def import_trace(path, fmt="native") -> RecordLog:
    if fmt == "native":
        return read_native(path)
    if fmt == "pcap":
        return read_pcap(path)
    raise IngestError(f"unknown trace format {fmt!r}")


class AttackerView:
    """A record log restricted to what the monitoring vantage sees, plus
    which endpoints play which part: watched client addresses and ballot-box
    addresses."""

    __slots__ = ("log", "visible", "boxes")

    def __init__(self, log: RecordLog, visible, boxes):
        self.log = log
        self.visible = tuple(sorted(visible))
        self.boxes = tuple(sorted(boxes))

    def __len__(self):
        return len(self.log)


def filter_visible(log: RecordLog, visible, boxes) -> AttackerView:
    """Keep records touching a watched client or a ballot box."""
    ids = [log.aid(a) for a in list(visible) + list(boxes)]
    ids = np.array([i for i in ids if i >= 0], dtype=np.int64)
    if len(ids):
        mask = np.isin(log.src, ids) | np.isin(log.dst, ids)
    else:
        mask = np.zeros(len(log), dtype=bool)
    return AttackerView(log.subset(mask), visible, boxes)


def _appearance_order(src, dst):
    both = np.empty(len(src) * 2, dtype=np.int64)
    both[0::2] = src
    both[1::2] = dst
    uniq, first = np.unique(both, return_index=True)
    return uniq[np.argsort(first)]


FOREIGN_PREFIX = "198.51"
FOREIGN_NODE_ADDR = "198.51.255.254"


def splice(foreign: RecordLog, box_view: AttackerView, node_addr=None) -> AttackerView:
    """Merge a foreign capture with simulated ballot-box streams.

    The foreign capture is assumed to be taken at one network node; that
    node is either named or inferred as the most frequent address. Every
    other foreign address becomes a candidate client, remapped into the
    198.51.0.0/16 range (in order of first appearance) so the two address
    spaces cannot collide. Both inputs are shifted to start at time zero.
    """
    if len(foreign) == 0:
        raise IngestError("foreign capture is empty")
    if node_addr is None:
        counts = np.bincount(
            np.concatenate([foreign.src, foreign.dst]), minlength=len(foreign.addrs)
        )
        node_id = int(np.argmax(counts))
    else:
        node_id = foreign.aid(node_addr)
        if node_id < 0:
            raise IngestError(f"node address {node_addr!r} not present in foreign capture")

    keep = (foreign.src == node_id) | (foreign.dst == node_id)
    f = foreign.subset(keep)
    if len(f) == 0:
        raise IngestError("foreign capture has no records touching the node")

    remap = {}
    for aid in _appearance_order(f.src, f.dst):
        aid = int(aid)
        if aid == node_id:
            remap[aid] = FOREIGN_NODE_ADDR
        else:
            i = len(remap) - (1 if node_id in remap else 0)
            remap[aid] = f"{FOREIGN_PREFIX}.{i // 250}.{i % 250 + 1}"
    candidates = sorted(a for k, a in remap.items() if k != node_id)

    f_t = f.t - f.t.min()
    box_log = box_view.log
    b_t = box_log.t - (box_log.t.min() if len(box_log) else 0)

    addrs = sorted(set(remap.values()) | set(box_log.addrs))
    index = {a: i for i, a in enumerate(addrs)}
    # map foreign ids through remap, box ids through the shared table
    fsrc = np.fromiter((index[remap[int(v)]] for v in f.src), dtype=np.int64, count=len(f))
    fdst = np.fromiter((index[remap[int(v)]] for v in f.dst), dtype=np.int64, count=len(f))
    bsrc = np.fromiter((index[box_log.addrs[int(v)]] for v in box_log.src),
                       dtype=np.int64, count=len(box_log))
    bdst = np.fromiter((index[box_log.addrs[int(v)]] for v in box_log.dst),
                       dtype=np.int64, count=len(box_log))

    merged = RecordLog(
        np.concatenate([f_t, b_t]),
        np.concatenate([fsrc, bsrc]),
        np.concatenate([fdst, bdst]),
        tuple(addrs),
        presorted=False,
    )
    assert len(merged) == len(f) + len(box_log)
    return AttackerView(merged, candidates, box_view.boxes)


def write_truth(path, rows):
    """Ground truth: client, vote time, box, tab separated, sorted by time."""
    with open(path, "w") as fh:
        for client, t, box in sorted(rows, key=lambda r: (r[1], r[0], r[2])):
            fh.write(f"{client}\t{t}\t{box}\n")


def read_truth(path):
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise IngestError(f"{path}:{lineno}: expected 'client<TAB>time<TAB>box'")
            rows.append((parts[0], int(parts[1]), parts[2]))
    return rows


def write_manifest(path, payload: dict):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_manifest(path) -> dict:
    with open(path) as fh:
        return json.load(fh)
