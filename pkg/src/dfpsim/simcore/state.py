"""Router, terminal and chunk state plus the link timing model."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction

from ..errors import ArgumentError
from ..routing import MINIMAL, VL0

NUM_VLS = 2


def transmit_time(size, bandwidth):
    """Nanoseconds to serialize ``size`` bytes at ``bandwidth`` bytes/s, rounded up."""
    if bandwidth <= 0:
        raise ArgumentError(f"bandwidth must be positive, got {bandwidth}")
    if size < 0:
        raise ArgumentError(f"size must be >= 0, got {size}")
    bw = Fraction(bandwidth)
    return math.ceil(Fraction(size * 10**9) / bw)


@dataclass(slots=True)
class Chunk:
    message_id: int  # global message index inside the engine
    chunk_index: int
    size: int
    src_terminal: int
    dst_terminal: int
    current_vl: int = VL0
    path_class: str = MINIMAL
    hop_trace: list = field(default_factory=list)
    # where the chunk's input-buffer credit must be returned: (router, port, vl),
    # or (-1 - terminal, 0, VL0) while it sits in the injection buffer
    in_router: int = -1
    in_port: int = 0
    in_vl: int = VL0


class RouterState:
    """Per-port, per-VL output queues of one router.

    ``occupancy[port][vl]`` counts bytes admitted to the output queue,
    including the chunk on the wire.  ``credit[port][vl]`` counts bytes
    reserved in the downstream router's input buffer.
    """

    __slots__ = ("router_id", "capacity", "occupancy", "credit", "queues", "waiting", "busy", "next_vl")

    def __init__(self, router_id, num_ports, capacity):
        self.router_id = router_id
        self.capacity = capacity
        self.occupancy = [[0] * NUM_VLS for _ in range(num_ports)]
        self.credit = [[0] * NUM_VLS for _ in range(num_ports)]
        self.queues = [[deque() for _ in range(NUM_VLS)] for _ in range(num_ports)]
        # chunks routed to (port, vl) still holding their input buffer
        self.waiting = [[deque() for _ in range(NUM_VLS)] for _ in range(num_ports)]
        self.busy = [False] * num_ports
        self.next_vl = [0] * num_ports

    @property
    def num_ports(self):
        return len(self.occupancy)


class TerminalState:
    __slots__ = ("terminal_id", "fifo", "sent", "busy", "credit")

    def __init__(self, terminal_id):
        self.terminal_id = terminal_id
        self.fifo = deque()  # message indices awaiting injection
        self.sent = 0  # bytes of fifo[0] already injected
        self.busy = False
        self.credit = 0  # bytes held in the leaf's injection buffer


def port_score(router, port, vl):
    """Output-queue occupancy of ``(port, vl)`` normalized by its capacity."""
    if not 0 <= port < len(router.occupancy):
        raise ArgumentError(f"router {router.router_id} has no port {port}")
    if not 0 <= vl < NUM_VLS:
        raise ArgumentError(f"no virtual lane {vl}")
    return router.occupancy[port][vl] / router.capacity


def split_bytes(size, start, end, width):
    """Spread ``size`` bytes received over ``[start, end)`` across windows of ``width`` ns.

    Returns ``[(window_index, bytes), ...]``; bytes are apportioned by time
    overlap with integer arithmetic, so the parts always sum to ``size``.
    """
    if end <= start:
        return [(end // width, size)]
    span = end - start
    out = []
    k = start // width
    lo = start
    done = 0
    while lo < end:
        hi = min(end, (k + 1) * width)
        upto = size * (hi - start) // span
        if upto > done:
            out.append((k, upto - done))
        done = upto
        lo = hi
        k += 1
    return out
