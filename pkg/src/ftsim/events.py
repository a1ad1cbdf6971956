"""Event queue for the compiled kernel.

Events are totally ordered by ``(time, seq)``. Events with a variable delay
(injections, arbitration epochs, metric ticks, audits) live in a binary
heap. Link arrivals and credit returns always travel with a fixed delay, so
they are already in ``(time, seq)`` order when scheduled and sit in FIFO
lanes; ``pop`` merges the three sources.
"""

from typing import NamedTuple

import numpy as np
from numba import njit

ARBITRATE = 0
LINK_ARRIVAL = 1
CREDIT_RETURN = 2
INJECTION = 3
METRICS_TICK = 4
AUDIT = 5

KIND_NAMES = ("arbitrate", "link-arrival", "credit-return", "injection", "metrics-tick", "audit")

# lane ids returned by next_source
SRC_NONE, SRC_HEAP, SRC_ARRIVAL, SRC_CREDIT = -1, 0, 1, 2


class Heap(NamedTuple):
    time: np.ndarray
    seq: np.ndarray
    kind: np.ndarray
    arg: np.ndarray
    size: np.ndarray  # [1]


class Lane(NamedTuple):
    """Ring buffer of ``(time, seq, a, b)`` in scheduling order."""

    time: np.ndarray
    seq: np.ndarray
    a: np.ndarray
    b: np.ndarray
    ends: np.ndarray  # [head, tail], monotone counters


def make_heap(capacity: int) -> Heap:
    return Heap(
        np.zeros(capacity, np.int64),
        np.zeros(capacity, np.int64),
        np.zeros(capacity, np.int64),
        np.zeros(capacity, np.int64),
        np.zeros(1, np.int64),
    )


def make_lane(capacity: int) -> Lane:
    cap = 1 << max(4, int(capacity - 1).bit_length())
    return Lane(
        np.zeros(cap, np.int64),
        np.zeros(cap, np.int64),
        np.zeros(cap, np.int64),
        np.zeros(cap, np.int64),
        np.zeros(2, np.int64),
    )


@njit(cache=True)
def _before(h, i, j):
    ti = h.time[i]
    tj = h.time[j]
    return ti < tj or (ti == tj and h.seq[i] < h.seq[j])


@njit(cache=True, inline="always")
def _swap(h, i, j):
    h.time[i], h.time[j] = h.time[j], h.time[i]
    h.seq[i], h.seq[j] = h.seq[j], h.seq[i]
    h.kind[i], h.kind[j] = h.kind[j], h.kind[i]
    h.arg[i], h.arg[j] = h.arg[j], h.arg[i]


@njit(cache=True, inline="always")
def heap_push(h, time, seq, kind, arg):
    """Insert an event; returns False when the heap is full."""
    n = h.size[0]
    if n >= h.time.shape[0]:
        return False
    h.time[n] = time
    h.seq[n] = seq
    h.kind[n] = kind
    h.arg[n] = arg
    h.size[0] = n + 1
    i = n
    while i > 0:
        parent = (i - 1) >> 1
        if _before(h, i, parent):
            _swap(h, i, parent)
            i = parent
        else:
            break
    return True


@njit(cache=True, inline="always")
def heap_pop(h):
    """Remove the earliest event and return ``(time, seq, kind, arg)``."""
    time, seq, kind, arg = h.time[0], h.seq[0], h.kind[0], h.arg[0]
    n = h.size[0] - 1
    h.size[0] = n
    if n > 0:
        h.time[0] = h.time[n]
        h.seq[0] = h.seq[n]
        h.kind[0] = h.kind[n]
        h.arg[0] = h.arg[n]
        i = 0
        while True:
            left = 2 * i + 1
            if left >= n:
                break
            child = left
            if left + 1 < n and _before(h, left + 1, left):
                child = left + 1
            if _before(h, child, i):
                _swap(h, i, child)
                i = child
            else:
                break
    return time, seq, kind, arg


@njit(cache=True, inline="always")
def lane_push(lane, time, seq, a, b):
    head, tail = lane.ends[0], lane.ends[1]
    cap = lane.time.shape[0]
    if tail - head >= cap:
        return False
    slot = tail & (cap - 1)
    lane.time[slot] = time
    lane.seq[slot] = seq
    lane.a[slot] = a
    lane.b[slot] = b
    lane.ends[1] = tail + 1
    return True


@njit(cache=True, inline="always")
def lane_size(lane):
    return lane.ends[1] - lane.ends[0]


@njit(cache=True, inline="always")
def lane_pop(lane):
    slot = lane.ends[0] & (lane.time.shape[0] - 1)
    lane.ends[0] += 1
    return lane.time[slot], lane.seq[slot], lane.a[slot], lane.b[slot]


@njit(cache=True)
def lane_entry(lane, k):
    """The ``k``-th pending entry, oldest first."""
    slot = (lane.ends[0] + k) & (lane.time.shape[0] - 1)
    return lane.time[slot], lane.seq[slot], lane.a[slot], lane.b[slot]


@njit(cache=True, inline="always")
def next_source(heap, arrivals, credits):
    """Which queue holds the globally earliest event."""
    best = SRC_NONE
    bt = 0
    bs = 0
    if heap.size[0] > 0:
        best, bt, bs = SRC_HEAP, heap.time[0], heap.seq[0]
    if lane_size(arrivals) > 0:
        slot = arrivals.ends[0] & (arrivals.time.shape[0] - 1)
        t, s = arrivals.time[slot], arrivals.seq[slot]
        if best == SRC_NONE or t < bt or (t == bt and s < bs):
            best, bt, bs = SRC_ARRIVAL, t, s
    if lane_size(credits) > 0:
        slot = credits.ends[0] & (credits.time.shape[0] - 1)
        t, s = credits.time[slot], credits.seq[slot]
        if best == SRC_NONE or t < bt or (t == bt and s < bs):
            best = SRC_CREDIT
    return best


@njit(cache=True, inline="always")
def source_time(heap, arrivals, credits, src):
    if src == SRC_HEAP:
        return heap.time[0]
    lane = arrivals if src == SRC_ARRIVAL else credits
    return lane.time[lane.ends[0] & (lane.time.shape[0] - 1)]


class EventQueue:
    """Python-side view of the heap, used by tests and small tools."""

    def __init__(self, capacity: int = 1024):
        self.heap = make_heap(capacity)
        self._seq = 0

    def __len__(self):
        return int(self.heap.size[0])

    def push(self, time: int, kind: int, arg: int = 0) -> int:
        seq = self._seq
        if not heap_push(self.heap, time, seq, kind, arg):
            raise OverflowError("event heap is full")
        self._seq += 1
        return seq

    def pop(self):
        if not len(self):
            raise IndexError("pop from an empty event queue")
        return tuple(int(x) for x in heap_pop(self.heap))
