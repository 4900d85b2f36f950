"""Reference (pure Python) router/link engine.

Timing model: virtual cut-through at chunk granularity.  A chunk is
serialized onto a link in ``transmit_time(size, bw)``; the downstream router
routes it ``router_delay_ns`` after the last byte lands.  Every router output
``(port, vl)`` and every input buffer holds at most ``buffer_bytes``; a chunk
starts crossing a link only when the downstream input buffer has room, and
is moved from its input buffer to the chosen output queue only when that
queue has room.  Credits return with zero latency.

The compiled engine in ``_engine_cy.pyx`` repeats every step below in the
same order, so both produce identical event sequences.
"""

from __future__ import annotations

from collections import defaultdict

from ..errors import AccountingError, InvariantError
from ..routing import RoutingConfig, choose_port, classify_path, enumerate_candidates, vl_transition
from .events import CHUNK_ARRIVE, CHUNK_DEPART, INJECT, EventQueue
from .plan import EngineConfig, EngineResult, SimulationReport
from .state import Chunk, RouterState, TerminalState, port_score, split_bytes, transmit_time

TERMINAL = "terminal"


class Engine:
    backend = "python"

    def __init__(self, topology, plan, config=None, routing=None):
        plan.check()
        self.topology = topology
        self.plan = plan
        self.config = config or EngineConfig()
        self.routing = routing or RoutingConfig()
        cap = self.config.buffer_bytes
        self.capacity = cap
        self.routers = [RouterState(r, topology.num_ports(r), cap) for r in topology.routers()]
        self.terminals = [TerminalState(t) for t in range(topology.num_terminals)]
        self.events = EventQueue()
        self._ports = [topology.ports(r) for r in topology.routers()]
        self._bw = {
            "terminal": topology.params.bw_terminal,
            "local": topology.params.bw_local,
            "global": topology.params.bw_global,
        }
        self._tx_cache = {}

        n = plan.num_messages
        chunk = self.config.chunk_bytes
        self.issue_time = [-1] * n
        self.delivery_time = [-1] * n
        self.hops = [-1] * n
        self.path_class = [""] * n
        self.vl = [-1] * n
        self._chunks_left = [-(-size // chunk) for size in plan.msg_size]
        self._msg_batch = [0] * n
        for b, msgs in enumerate(plan.batch_msgs):
            for m in msgs:
                self._msg_batch[m] = b
        self._batch_left = [len(msgs) for msgs in plan.batch_msgs]
        self._gated = defaultdict(list)
        for b, gate in enumerate(plan.batch_gate):
            if gate >= 0:
                self._gated[gate].append(b)
        self._src_group = [topology.terminal_group(t) for t in plan.msg_src]
        self._dst_group = [topology.terminal_group(t) for t in plan.msg_dst]
        self.arrivals = {}
        self.injected_chunks = 0
        self.delivered_chunks = 0
        self._seeded = False

    # --- public ----------------------------------------------------------

    def run_until(self, limit=None):
        """Run until the queue drains or the next event lies beyond ``limit`` ns."""
        if not self._seeded:
            self._seeded = True
            for b, gate in enumerate(self.plan.batch_gate):
                if gate < 0:
                    self.events.schedule(self.plan.batch_time[b], INJECT, b)
        self.events.run_until(self._dispatch, limit)
        return self.report()

    def report(self):
        return SimulationReport(
            events=self.events.executed,
            final_time=self.events.now,
            undelivered=sum(1 for t in self.delivery_time if t < 0),
            injected_chunks=self.injected_chunks,
            delivered_chunks=self.delivered_chunks,
            backend=self.backend,
        )

    def result(self):
        return EngineResult(
            issue_time=list(self.issue_time),
            delivery_time=list(self.delivery_time),
            hops=list(self.hops),
            path_class=list(self.path_class),
            vl=list(self.vl),
            arrivals=dict(self.arrivals),
            report=self.report(),
        )

    def queued_chunks(self):
        """Chunks sitting in router output queues or waiting for admission."""
        n = 0
        for rs in self.routers:
            for port in range(rs.num_ports):
                for vl in (0, 1):
                    n += len(rs.queues[port][vl]) + len(rs.waiting[port][vl])
        return n

    def pending_chunks(self):
        """Chunks on a link or inside a router pipeline (scheduled events)."""
        return sum(1 for ev in self.events._heap if ev[4] is not None)

    def max_occupancy(self):
        """Largest output-queue occupancy and largest downstream reservation, in bytes."""
        occ = max((o for rs in self.routers for row in rs.occupancy for o in row), default=0)
        cred = max((c for rs in self.routers for row in rs.credit for c in row), default=0)
        cred = max([cred] + [ts.credit for ts in self.terminals])
        return occ, cred

    # --- handlers ----------------------------------------------------------

    def _tx(self, kind, size):
        key = (kind, size)
        ns = self._tx_cache.get(key)
        if ns is None:
            ns = self._tx_cache[key] = transmit_time(size, self._bw[kind])
        return ns

    def _dispatch(self, ev):
        _, _, kind, a, chunk = ev
        if kind == CHUNK_ARRIVE:
            self._arrive(a, chunk)
        elif kind == CHUNK_DEPART:
            self._depart(chunk)
        else:
            self._inject(a)

    def _inject(self, batch):
        now = self.events.now
        srcs = []
        for m in self.plan.batch_msgs[batch]:
            self.issue_time[m] = now
            t = self.plan.msg_src[m]
            self.terminals[t].fifo.append(m)
            if t not in srcs:
                srcs.append(t)
        for t in srcs:
            self._try_inject(t)

    def _try_inject(self, t):
        ts = self.terminals[t]
        if ts.busy or not ts.fifo:
            return
        m = ts.fifo[0]
        msize = self.plan.msg_size[m]
        size = min(self.config.chunk_bytes, msize - ts.sent)
        if ts.credit + size > self.capacity:
            return
        index = ts.sent // self.config.chunk_bytes
        ts.sent += size
        if ts.sent == msize:
            ts.fifo.popleft()
            ts.sent = 0
        chunk = Chunk(m, index, size, t, self.plan.msg_dst[m], in_router=-1 - t)
        ts.credit += size
        ts.busy = True
        self.injected_chunks += 1
        self.events.schedule(self.events.now + self._tx(TERMINAL, size), CHUNK_DEPART, 0, chunk)

    def _try_start(self, r, port):
        rs = self.routers[r]
        if rs.busy[port]:
            return
        kind = self._ports[r][port][0]
        first = rs.next_vl[port]
        for vl in (first, 1 - first):
            q = rs.queues[port][vl]
            if not q:
                continue
            chunk = q[0]
            if kind != TERMINAL and rs.credit[port][vl] + chunk.size > self.capacity:
                continue
            q.popleft()
            rs.busy[port] = True
            rs.next_vl[port] = 1 - vl
            if kind != TERMINAL:
                rs.credit[port][vl] += chunk.size
            self.events.schedule(self.events.now + self._tx(kind, chunk.size), CHUNK_DEPART, 0, chunk)
            return

    def _depart(self, chunk):
        now = self.events.now
        r = chunk.in_router
        if r < 0:
            t = -1 - r
            self.terminals[t].busy = False
            leaf = self.topology.terminal_leaf(t)
            self.events.schedule(now + self.config.router_delay_ns, CHUNK_ARRIVE, leaf, chunk)
            self._try_inject(t)
            return
        port, vl = chunk.in_port, chunk.in_vl
        rs = self.routers[r]
        rs.busy[port] = False
        rs.occupancy[port][vl] -= chunk.size
        kind, peer = self._ports[r][port]
        if kind == TERMINAL:
            self._deliver(chunk)
        else:
            m = chunk.message_id
            if self.topology.is_spine(peer) and self._src_group[m] != self._dst_group[m]:
                job, g = self.plan.msg_job[m], self.topology.group_of(peer)
                start = now - self._tx(kind, chunk.size)
                for w, nbytes in split_bytes(chunk.size, start, now, self.config.sample_interval_ns):
                    self.arrivals[job, g, w] = self.arrivals.get((job, g, w), 0) + nbytes
            self.events.schedule(now + self.config.router_delay_ns, CHUNK_ARRIVE, peer, chunk)
        waiting = rs.waiting[port][vl]
        while waiting and rs.occupancy[port][vl] + waiting[0].size <= self.capacity:
            self._admit(r, port, vl, waiting.popleft())
        self._try_start(r, port)

    def _arrive(self, r, chunk):
        chunk.hop_trace.append(r)
        rs = self.routers[r]
        cands = enumerate_candidates(self.topology, r, chunk, self.routing.allow_spine_divert)
        scored = [c._replace(score=port_score(rs, c.out_port, c.vl_after)) for c in cands]
        chosen = choose_port(scored, self.routing)
        vl = vl_transition(chunk, chosen)
        chunk.current_vl = vl
        chunk.path_class = chosen.path_class
        port = chosen.out_port
        waiting = rs.waiting[port][vl]
        if not waiting and rs.occupancy[port][vl] + chunk.size <= self.capacity:
            self._admit(r, port, vl, chunk)
        else:
            waiting.append(chunk)

    def _admit(self, r, port, vl, chunk):
        rs = self.routers[r]
        rs.occupancy[port][vl] += chunk.size
        rs.queues[port][vl].append(chunk)
        up, up_port, up_vl = chunk.in_router, chunk.in_port, chunk.in_vl
        chunk.in_router, chunk.in_port, chunk.in_vl = r, port, vl
        if up < 0:
            t = -1 - up
            self.terminals[t].credit -= chunk.size
            self._try_inject(t)
        else:
            self.routers[up].credit[up_port][up_vl] -= chunk.size
            self._try_start(up, up_port)
        self._try_start(r, port)

    def _deliver(self, chunk):
        m = chunk.message_id
        trace = chunk.hop_trace
        if self.config.check_paths:
            cls = classify_path(self.topology, trace, chunk.src_terminal, chunk.dst_terminal)
            if cls != chunk.path_class:
                raise InvariantError(
                    f"message {m} chunk {chunk.chunk_index} labelled {chunk.path_class} "
                    f"but travelled a {cls} path {trace}"
                )
        self.delivered_chunks += 1
        left = self._chunks_left[m] - 1
        if left < 0:
            raise AccountingError(f"message {m} delivered more chunks than it has")
        self._chunks_left[m] = left
        if left:
            return
        now = self.events.now
        self.delivery_time[m] = now
        self.hops[m] = len(trace) - 1
        self.path_class[m] = chunk.path_class
        self.vl[m] = chunk.current_vl
        b = self._msg_batch[m]
        self._batch_left[b] -= 1
        if self._batch_left[b] == 0:
            for nb in self._gated.get(b, ()):
                self.events.schedule(max(self.plan.batch_time[nb], now), INJECT, nb)
