"""Deterministic event queue ordered by ``(time, sequence)``."""

import heapq

from ..errors import OrderingError

INJECT = 0
CHUNK_ARRIVE = 1
CHUNK_DEPART = 2

KIND_NAMES = {INJECT: "inject", CHUNK_ARRIVE: "chunk-arrive", CHUNK_DEPART: "chunk-depart"}


class EventQueue:
    """Binary heap of ``(time, seq, kind, a, b)`` tuples.

    ``seq`` is a per-queue counter, so events at equal times run in the
    order they were scheduled.
    """

    __slots__ = ("_heap", "_seq", "now", "executed")

    def __init__(self):
        self._heap = []
        self._seq = 0
        self.now = 0
        self.executed = 0

    def __len__(self):
        return len(self._heap)

    def schedule(self, time, kind, a=0, b=None):
        if time < self.now:
            raise OrderingError(
                f"event {KIND_NAMES.get(kind, kind)} scheduled at t={time} before now={self.now}"
            )
        heapq.heappush(self._heap, (time, self._seq, kind, a, b))
        self._seq += 1

    def peek_time(self):
        return self._heap[0][0] if self._heap else None

    def pop(self):
        ev = heapq.heappop(self._heap)
        self.now = ev[0]
        self.executed += 1
        return ev

    def run_until(self, handler, limit=None):
        """Pop and dispatch events with ``time <= limit`` (all of them if ``None``).

        Returns the number of events executed by this call.
        """
        heap = self._heap
        n = 0
        while heap and (limit is None or heap[0][0] <= limit):
            handler(self.pop())
            n += 1
        return n
