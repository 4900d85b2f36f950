# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled router/link engine.

Same model and the same step order as ``_engine_py``; state lives in flat
per-channel C arrays (channel = router port) and events in a C binary heap
keyed by ``(time, seq)``.  Route selection is inlined here; the reference
engine calls :mod:`dfpsim.routing` instead, and the test suite checks the
two backends produce identical results.
"""

from collections import deque

from cpython.mem cimport PyMem_Free, PyMem_Malloc, PyMem_Realloc
from libc.string cimport memset

from ..errors import AccountingError, InvariantError, OrderingError, RoutingError
from ..routing import (
    INTERMEDIATE_LEAF,
    INTERMEDIATE_SPINE,
    MINIMAL,
    MINIMAL_ONLY,
    RoutingConfig,
    classify_path,
)
from .plan import EngineConfig, EngineResult, SimulationReport
from .state import transmit_time

ctypedef long long i64

cdef enum:
    EV_INJECT = 0
    EV_ARRIVE = 1
    EV_DEPART = 2

cdef enum:
    K_TERMINAL = 0
    K_LOCAL = 1
    K_GLOBAL = 2

cdef enum:
    C_MINIMAL = 0
    C_ISPINE = 1
    C_ILEAF = 2

CLASS_NAMES = (MINIMAL, INTERMEDIATE_SPINE, INTERMEDIATE_LEAF)

cdef struct Event:
    i64 time
    i64 seq
    int kind
    int a
    int obj


cdef class CChunk:
    cdef public int msg, index, size, src, dst, vl, cls, in_ch, in_vl
    cdef public list trace


cdef class Engine:
    cdef readonly object topology, plan, config, routing
    cdef readonly str backend
    # dimensions
    cdef int G, L, S, P, rpg, R, T, NC, chunk_bytes, max_cands
    cdef i64 cap, delay, sample
    cdef double threshold
    cdef bint minimal_only, divert, check_paths
    # topology tables
    cdef int *port_base
    cdef int *ch_kind
    cdef int *ch_peer
    cdef int *ch_router
    cdef int *ch_port
    cdef int *gp_off
    cdef int *gp_cnt
    cdef int *gp_ports
    cdef int *lk_off
    cdef int *lk_cnt
    cdef int *lk_spines
    cdef i64 tx_full[3]
    cdef dict tx_cache
    # channel state, indexed ch * 2 + vl (busy / next_vl by ch)
    cdef i64 *occ
    cdef i64 *credit
    cdef char *busy
    cdef char *next_vl
    cdef list queues
    cdef list waiting
    # terminal state
    cdef char *t_busy
    cdef i64 *t_credit
    cdef i64 *t_sent
    cdef list fifo
    # candidate scratch
    cdef int *c_port
    cdef int *c_hops
    cdef int *c_vl
    cdef int *c_cls
    cdef int *c_ch
    # events
    cdef Event *heap
    cdef i64 heap_n, heap_cap, seq
    cdef readonly i64 now, executed
    cdef bint seeded
    # live chunks referenced from the heap
    cdef list live
    cdef list free_slots
    # messages
    cdef list msg_src, msg_dst, msg_size, msg_job, batch_msgs, batch_time, batch_gate
    cdef list issue_time, delivery_time, hops, path_cls, vl_out
    cdef list chunks_left, msg_batch, batch_left, gated, src_group, dst_group
    cdef readonly dict arrivals
    cdef readonly i64 injected_chunks, delivered_chunks

    def __init__(self, topology, plan, config=None, routing=None):
        plan.check()
        self.topology = topology
        self.plan = plan
        self.config = config or EngineConfig()
        self.routing = routing or RoutingConfig()
        self.backend = "compiled"
        p = topology.params
        self.G = p.num_groups
        self.L = p.leaves_per_group
        self.S = p.spines_per_group
        self.P = p.terminals_per_leaf
        self.rpg = self.L + self.S
        self.R = topology.num_routers
        self.T = topology.num_terminals
        self.cap = self.config.buffer_bytes
        self.delay = self.config.router_delay_ns
        self.sample = self.config.sample_interval_ns
        self.chunk_bytes = self.config.chunk_bytes
        self.check_paths = self.config.check_paths
        self.threshold = self.routing.threshold_T
        self.minimal_only = self.routing.mode == MINIMAL_ONLY
        self.divert = self.routing.allow_spine_divert
        self._build_tables()
        self._alloc_state()
        self._load_plan()
        self.heap_cap = 1024
        self.heap = <Event *> PyMem_Malloc(self.heap_cap * sizeof(Event))
        if self.heap == NULL:
            raise MemoryError()
        self.heap_n = 0
        self.seq = 0
        self.now = 0
        self.executed = 0
        self.seeded = False
        self.live = []
        self.free_slots = []
        self.arrivals = {}
        self.injected_chunks = 0
        self.delivered_chunks = 0

    def __dealloc__(self):
        PyMem_Free(self.port_base)
        PyMem_Free(self.ch_kind)
        PyMem_Free(self.ch_peer)
        PyMem_Free(self.ch_router)
        PyMem_Free(self.ch_port)
        PyMem_Free(self.gp_off)
        PyMem_Free(self.gp_cnt)
        PyMem_Free(self.gp_ports)
        PyMem_Free(self.lk_off)
        PyMem_Free(self.lk_cnt)
        PyMem_Free(self.lk_spines)
        PyMem_Free(self.occ)
        PyMem_Free(self.credit)
        PyMem_Free(self.busy)
        PyMem_Free(self.next_vl)
        PyMem_Free(self.t_busy)
        PyMem_Free(self.t_credit)
        PyMem_Free(self.t_sent)
        PyMem_Free(self.c_port)
        PyMem_Free(self.c_hops)
        PyMem_Free(self.c_vl)
        PyMem_Free(self.c_cls)
        PyMem_Free(self.c_ch)
        PyMem_Free(self.heap)

    # --- setup -----------------------------------------------------------

    cdef void *_alloc(self, Py_ssize_t nbytes) except NULL:
        cdef void *ptr = PyMem_Malloc(nbytes if nbytes > 0 else 1)
        if ptr == NULL:
            raise MemoryError()
        memset(ptr, 0, nbytes if nbytes > 0 else 1)
        return ptr

    cdef _build_tables(self):
        topo = self.topology
        cdef int r, port, c, n, max_ports = 0, kind
        self.port_base = <int *> self._alloc((self.R + 1) * sizeof(int))
        n = 0
        for r in range(self.R):
            self.port_base[r] = n
            n += topo.num_ports(r)
            if topo.num_ports(r) > max_ports:
                max_ports = topo.num_ports(r)
        self.port_base[self.R] = n
        self.NC = n
        self.ch_kind = <int *> self._alloc(n * sizeof(int))
        self.ch_peer = <int *> self._alloc(n * sizeof(int))
        self.ch_router = <int *> self._alloc(n * sizeof(int))
        self.ch_port = <int *> self._alloc(n * sizeof(int))
        kinds = {"terminal": K_TERMINAL, "local": K_LOCAL, "global": K_GLOBAL}
        for r in range(self.R):
            for port, (kname, peer) in enumerate(topo.ports(r)):
                c = self.port_base[r] + port
                self.ch_kind[c] = kinds[kname]
                self.ch_peer[c] = peer
                self.ch_router[c] = r
                self.ch_port[c] = port
        cdef int G = self.G, D, total, g, i
        self.gp_off = <int *> self._alloc(self.R * G * sizeof(int))
        self.gp_cnt = <int *> self._alloc(self.R * G * sizeof(int))
        total = 0
        for r in range(self.R):
            for D in range(G):
                total += len(topo.global_ports_to(r, D))
        self.gp_ports = <int *> self._alloc(total * sizeof(int))
        total = 0
        for r in range(self.R):
            for D in range(G):
                ports = topo.global_ports_to(r, D)
                self.gp_off[r * G + D] = total
                self.gp_cnt[r * G + D] = len(ports)
                for port in ports:
                    self.gp_ports[total] = port
                    total += 1
        self.lk_off = <int *> self._alloc(G * G * sizeof(int))
        self.lk_cnt = <int *> self._alloc(G * G * sizeof(int))
        total = 0
        for g in range(G):
            for D in range(G):
                total += len(topo.spines_linked_to(g, D))
        self.lk_spines = <int *> self._alloc(total * sizeof(int))
        total = 0
        for g in range(G):
            for D in range(G):
                spines = topo.spines_linked_to(g, D)
                self.lk_off[g * G + D] = total
                self.lk_cnt[g * G + D] = len(spines)
                for i in spines:
                    self.lk_spines[total] = i
                    total += 1
        self.max_cands = max_ports + 1
        self.c_port = <int *> self._alloc(self.max_cands * sizeof(int))
        self.c_hops = <int *> self._alloc(self.max_cands * sizeof(int))
        self.c_vl = <int *> self._alloc(self.max_cands * sizeof(int))
        self.c_cls = <int *> self._alloc(self.max_cands * sizeof(int))
        self.c_ch = <int *> self._alloc(self.max_cands * sizeof(int))
        p = topo.params
        self.tx_cache = {}
        bws = (p.bw_terminal, p.bw_local, p.bw_global)
        for kind in range(3):
            self.tx_full[kind] = transmit_time(self.chunk_bytes, bws[kind])

    cdef _alloc_state(self):
        cdef int n = self.NC
        self.occ = <i64 *> self._alloc(2 * n * sizeof(i64))
        self.credit = <i64 *> self._alloc(2 * n * sizeof(i64))
        self.busy = <char *> self._alloc(n * sizeof(char))
        self.next_vl = <char *> self._alloc(n * sizeof(char))
        self.queues = [deque() for _ in range(2 * n)]
        self.waiting = [deque() for _ in range(2 * n)]
        self.t_busy = <char *> self._alloc(self.T * sizeof(char))
        self.t_credit = <i64 *> self._alloc(self.T * sizeof(i64))
        self.t_sent = <i64 *> self._alloc(self.T * sizeof(i64))
        self.fifo = [deque() for _ in range(self.T)]

    cdef _load_plan(self):
        plan = self.plan
        topo = self.topology
        n = plan.num_messages
        chunk = self.chunk_bytes
        self.msg_src = list(plan.msg_src)
        self.msg_dst = list(plan.msg_dst)
        self.msg_size = list(plan.msg_size)
        self.msg_job = list(plan.msg_job)
        self.batch_msgs = list(plan.batch_msgs)
        self.batch_time = list(plan.batch_time)
        self.batch_gate = list(plan.batch_gate)
        self.issue_time = [-1] * n
        self.delivery_time = [-1] * n
        self.hops = [-1] * n
        self.path_cls = [-1] * n
        self.vl_out = [-1] * n
        self.chunks_left = [-(-size // chunk) for size in plan.msg_size]
        self.msg_batch = [0] * n
        for b, msgs in enumerate(plan.batch_msgs):
            for m in msgs:
                self.msg_batch[m] = b
        self.batch_left = [len(msgs) for msgs in plan.batch_msgs]
        self.gated = [[] for _ in range(len(plan.batch_msgs))]
        for b, gate in enumerate(plan.batch_gate):
            if gate >= 0:
                self.gated[gate].append(b)
        self.src_group = [topo.terminal_group(t) for t in plan.msg_src]
        self.dst_group = [topo.terminal_group(t) for t in plan.msg_dst]

    # --- event heap --------------------------------------------------------

    cdef inline bint _less(self, Event *x, Event *y):
        return x.time < y.time or (x.time == y.time and x.seq < y.seq)

    cdef int _schedule(self, i64 time, int kind, int a, int obj) except -1:
        cdef Event *grown
        cdef Event ev
        cdef i64 i, parent
        if time < self.now:
            raise OrderingError(f"event kind {kind} scheduled at t={time} before now={self.now}")
        if self.heap_n == self.heap_cap:
            grown = <Event *> PyMem_Realloc(self.heap, 2 * self.heap_cap * sizeof(Event))
            if grown == NULL:
                raise MemoryError()
            self.heap = grown
            self.heap_cap *= 2
        ev.time = time
        ev.seq = self.seq
        ev.kind = kind
        ev.a = a
        ev.obj = obj
        self.seq += 1
        i = self.heap_n
        self.heap_n += 1
        while i > 0:
            parent = (i - 1) >> 1
            if self._less(&ev, &self.heap[parent]):
                self.heap[i] = self.heap[parent]
                i = parent
            else:
                break
        self.heap[i] = ev
        return 0

    cdef Event _pop(self):
        cdef Event top = self.heap[0]
        cdef Event last
        cdef i64 i, child, n
        self.heap_n -= 1
        n = self.heap_n
        if n > 0:
            last = self.heap[n]
            i = 0
            while True:
                child = 2 * i + 1
                if child >= n:
                    break
                if child + 1 < n and self._less(&self.heap[child + 1], &self.heap[child]):
                    child += 1
                if self._less(&self.heap[child], &last):
                    self.heap[i] = self.heap[child]
                    i = child
                else:
                    break
            self.heap[i] = last
        return top

    cdef int _hold(self, CChunk chunk):
        cdef int slot
        if self.free_slots:
            slot = self.free_slots.pop()
            self.live[slot] = chunk
        else:
            slot = len(self.live)
            self.live.append(chunk)
        return slot

    cdef CChunk _release(self, int slot):
        cdef CChunk chunk = <CChunk> self.live[slot]
        self.live[slot] = None
        self.free_slots.append(slot)
        return chunk

    # --- public ----------------------------------------------------------

    def schedule(self, i64 time, int kind, int a=0):
        """Schedule a raw inject event for batch ``a`` (testing hook)."""
        self._schedule(time, kind, a, -1)

    def run_until(self, limit=None):
        cdef i64 lim = -1
        cdef bint bounded = limit is not None
        cdef Event ev
        cdef int b
        if bounded:
            lim = limit
        if not self.seeded:
            self.seeded = True
            for b in range(len(self.batch_gate)):
                if self.batch_gate[b] < 0:
                    self._schedule(self.batch_time[b], EV_INJECT, b, -1)
        while self.heap_n > 0:
            if bounded and self.heap[0].time > lim:
                break
            ev = self._pop()
            self.now = ev.time
            self.executed += 1
            if ev.kind == EV_ARRIVE:
                self._arrive(ev.a, self._release(ev.obj))
            elif ev.kind == EV_DEPART:
                self._depart(self._release(ev.obj))
            else:
                self._inject(ev.a)
        return self.report()

    def report(self):
        return SimulationReport(
            events=self.executed,
            final_time=self.now,
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
            path_class=[CLASS_NAMES[c] if c >= 0 else "" for c in self.path_cls],
            vl=list(self.vl_out),
            arrivals=dict(self.arrivals),
            report=self.report(),
        )

    def queued_chunks(self):
        cdef Py_ssize_t n = 0
        for q in self.queues:
            n += len(q)
        for q in self.waiting:
            n += len(q)
        return n

    def pending_chunks(self):
        cdef i64 i, n = 0
        for i in range(self.heap_n):
            if self.heap[i].obj >= 0:
                n += 1
        return n

    def max_occupancy(self):
        cdef i64 i, occ = 0, cred = 0
        for i in range(2 * self.NC):
            occ = max(occ, self.occ[i])
            cred = max(cred, self.credit[i])
        for i in range(self.T):
            cred = max(cred, self.t_credit[i])
        return occ, cred

    def occupancy(self, int router, int port, int vl):
        return self.occ[(self.port_base[router] + port) * 2 + vl]

    # --- handlers ----------------------------------------------------------

    cdef i64 _tx(self, int kind, int size):
        if size == self.chunk_bytes:
            return self.tx_full[kind]
        key = (kind, size)
        ns = self.tx_cache.get(key)
        if ns is None:
            p = self.topology.params
            bw = (p.bw_terminal, p.bw_local, p.bw_global)[kind]
            ns = transmit_time(size, bw)
            self.tx_cache[key] = ns
        return ns

    cdef _inject(self, int batch):
        cdef int t, m
        srcs = []
        for m in self.batch_msgs[batch]:
            self.issue_time[m] = self.now
            t = self.msg_src[m]
            (<object> self.fifo[t]).append(m)
            if t not in srcs:
                srcs.append(t)
        for t in srcs:
            self._try_inject(t)

    cdef _try_inject(self, int t):
        cdef int m, size
        cdef i64 msize
        cdef CChunk chunk
        if self.t_busy[t]:
            return
        q = self.fifo[t]
        if not q:
            return
        m = q[0]
        msize = self.msg_size[m]
        size = <int> min(<i64> self.chunk_bytes, msize - self.t_sent[t])
        if self.t_credit[t] + size > self.cap:
            return
        chunk = CChunk.__new__(CChunk)
        chunk.msg = m
        chunk.index = <int> (self.t_sent[t] // self.chunk_bytes)
        chunk.size = size
        chunk.src = t
        chunk.dst = self.msg_dst[m]
        chunk.vl = 0
        chunk.cls = C_MINIMAL
        chunk.trace = []
        chunk.in_ch = -1 - t
        chunk.in_vl = 0
        self.t_sent[t] += size
        if self.t_sent[t] == msize:
            q.popleft()
            self.t_sent[t] = 0
        self.t_credit[t] += size
        self.t_busy[t] = 1
        self.injected_chunks += 1
        self._schedule(self.now + self._tx(K_TERMINAL, size), EV_DEPART, 0, self._hold(chunk))

    cdef _try_start(self, int c):
        cdef int first, vl, k, kind
        cdef CChunk chunk
        if self.busy[c]:
            return
        kind = self.ch_kind[c]
        first = self.next_vl[c]
        for k in range(2):
            vl = first if k == 0 else 1 - first
            q = self.queues[2 * c + vl]
            if not q:
                continue
            chunk = <CChunk> q[0]
            if kind != K_TERMINAL and self.credit[2 * c + vl] + chunk.size > self.cap:
                continue
            q.popleft()
            self.busy[c] = 1
            self.next_vl[c] = 1 - vl
            if kind != K_TERMINAL:
                self.credit[2 * c + vl] += chunk.size
            self._schedule(self.now + self._tx(kind, chunk.size), EV_DEPART, 0, self._hold(chunk))
            return

    cdef _depart(self, CChunk chunk):
        cdef int c, vl, t, peer, leaf, m
        if chunk.in_ch < 0:
            t = -1 - chunk.in_ch
            self.t_busy[t] = 0
            leaf = t // self.P
            leaf = (leaf // self.L) * self.rpg + leaf % self.L
            self._schedule(self.now + self.delay, EV_ARRIVE, leaf, self._hold(chunk))
            self._try_inject(t)
            return
        c = chunk.in_ch
        vl = chunk.in_vl
        self.busy[c] = 0
        self.occ[2 * c + vl] -= chunk.size
        peer = self.ch_peer[c]
        if self.ch_kind[c] == K_TERMINAL:
            self._deliver(chunk)
        else:
            m = chunk.msg
            if peer % self.rpg >= self.L and self.src_group[m] != self.dst_group[m]:
                self._bin(self.msg_job[m], peer // self.rpg, chunk.size,
                          self.now - self._tx(self.ch_kind[c], chunk.size))
            self._schedule(self.now + self.delay, EV_ARRIVE, peer, self._hold(chunk))
        w = self.waiting[2 * c + vl]
        while w and self.occ[2 * c + vl] + (<CChunk> w[0]).size <= self.cap:
            self._admit(c, vl, <CChunk> w.popleft())
        self._try_start(c)

    cdef _bin(self, int job, int g, i64 size, i64 start):
        """Apportion bytes received over ``[start, now)`` to sample windows."""
        cdef i64 end = self.now, span = end - start, k, lo, hi, upto, done = 0
        if span <= 0:
            key = (job, g, end // self.sample)
            self.arrivals[key] = self.arrivals.get(key, 0) + size
            return
        k = start // self.sample
        lo = start
        while lo < end:
            hi = min(end, (k + 1) * self.sample)
            upto = size * (hi - start) // span
            if upto > done:
                key = (job, g, k)
                self.arrivals[key] = self.arrivals.get(key, 0) + (upto - done)
            done = upto
            lo = hi
            k += 1

    cdef int _route(self, int r, CChunk chunk, int *out_vl, int *out_cls) except -1:
        """Pick the output port for ``chunk`` at router ``r``; mirrors dfpsim.routing."""
        cdef int G = self.G, L = self.L, S = self.S, P = self.P, rpg = self.rpg
        cdef int g = r // rpg, x = r % rpg, n = 0, i, s, port, off, cnt, pg
        cdef int dst = chunk.dst, vl = chunk.vl
        cdef int dst_group = dst // (L * P)
        cdef int dst_leaf = dst // P
        cdef int src_group = chunk.src // (L * P)
        cdef int base = self.port_base[r]
        cdef bint direct, has_other
        dst_leaf = (dst_leaf // L) * rpg + dst_leaf % L

        if x < L:  # leaf
            if r == dst_leaf:
                self.c_port[0] = dst % P
                self.c_hops[0] = 0
                self.c_vl[0] = vl
                self.c_cls[0] = chunk.cls
                n = 1
            elif g == src_group:
                if vl != 0:
                    raise RoutingError(f"chunk on VL{vl} at its source leaf {r}")
                off = self.lk_off[g * G + dst_group]
                cnt = self.lk_cnt[g * G + dst_group]
                for s in range(S):
                    self.c_port[n] = P + s
                    self.c_vl[n] = 0
                    if g == dst_group:
                        self.c_hops[n] = 2
                        self.c_cls[n] = C_MINIMAL
                    else:
                        direct = False
                        for i in range(cnt):
                            if self.lk_spines[off + i] == g * rpg + L + s:
                                direct = True
                                break
                        self.c_hops[n] = 3 if direct else 4
                        self.c_cls[n] = C_MINIMAL if direct else C_ISPINE
                    n += 1
            elif g == dst_group:
                raise RoutingError(f"chunk reached non-destination leaf {r} of its destination group")
            else:
                off = self.lk_off[g * G + dst_group]
                cnt = self.lk_cnt[g * G + dst_group]
                for i in range(cnt):
                    s = self.lk_spines[off + i]
                    if s in chunk.trace:
                        continue
                    self.c_port[n] = P + (s % rpg - L)
                    self.c_hops[n] = 3
                    self.c_vl[n] = 1
                    self.c_cls[n] = C_ILEAF
                    n += 1
                if n == 0:
                    raise RoutingError(f"no spine of group {g} reaches group {dst_group} from leaf {r}")
        elif g == dst_group:
            self.c_port[0] = dst_leaf % rpg
            self.c_hops[0] = 1
            self.c_vl[0] = vl
            self.c_cls[0] = chunk.cls
            n = 1
        else:
            off = self.gp_off[r * G + dst_group]
            cnt = self.gp_cnt[r * G + dst_group]
            if g == src_group:
                if vl != 0:
                    raise RoutingError(f"chunk on VL{vl} at its source spine {r}")
                for i in range(cnt):
                    self.c_port[n] = self.gp_ports[off + i]
                    self.c_hops[n] = 2
                    self.c_vl[n] = 0
                    self.c_cls[n] = C_MINIMAL
                    n += 1
                if cnt == 0 or self.divert:
                    for port in range(L, self.port_base[r + 1] - base):
                        pg = self.ch_peer[base + port] // rpg
                        if pg != dst_group:
                            self.c_port[n] = port
                            self.c_hops[n] = 3
                            self.c_vl[n] = 0
                            self.c_cls[n] = C_ISPINE
                            n += 1
                if n == 0:
                    raise RoutingError(f"spine {r} has no global links")
            elif vl == 1:
                if cnt == 0:
                    raise RoutingError(f"VL1 chunk at spine {r} without a link to group {dst_group}")
                for i in range(cnt):
                    self.c_port[n] = self.gp_ports[off + i]
                    self.c_hops[n] = 2
                    self.c_vl[n] = 1
                    self.c_cls[n] = chunk.cls
                    n += 1
            else:
                for i in range(cnt):
                    self.c_port[n] = self.gp_ports[off + i]
                    self.c_hops[n] = 2
                    self.c_vl[n] = 1
                    self.c_cls[n] = C_ISPINE
                    n += 1
                has_other = False
                off = self.lk_off[g * G + dst_group]
                for i in range(self.lk_cnt[g * G + dst_group]):
                    if self.lk_spines[off + i] != r:
                        has_other = True
                        break
                if has_other:
                    for i in range(L):
                        self.c_port[n] = i
                        self.c_hops[n] = 4
                        self.c_vl[n] = 0
                        self.c_cls[n] = C_ILEAF
                        n += 1
                if n == 0:
                    raise RoutingError(f"no route toward group {dst_group} from spine {r}")

        # threshold selection, ties to the lowest port
        cdef int best_hops = self.c_hops[0], pick = -1, phase
        cdef double score, best_score = 0.0
        for i in range(1, n):
            if self.c_hops[i] < best_hops:
                best_hops = self.c_hops[i]
        for phase in range(3):
            if phase > 0 and self.minimal_only:
                break
            for i in range(n):
                if phase == 0 or phase == 2:
                    if self.c_hops[i] != best_hops:
                        continue
                elif self.c_hops[i] == best_hops:
                    continue
                score = <double> self.occ[2 * (base + self.c_port[i]) + self.c_vl[i]] / <double> self.cap
                if phase < 2 and not self.minimal_only and score > self.threshold:
                    continue
                if pick < 0 or score < best_score or (score == best_score and self.c_port[i] < self.c_port[pick]):
                    pick = i
                    best_score = score
            if pick >= 0:
                break
        if chunk.vl == 1 and self.c_vl[pick] != 1:
            raise InvariantError(
                f"message {chunk.msg} chunk {chunk.index} would move from VL1 back to VL0"
            )
        out_vl[0] = self.c_vl[pick]
        out_cls[0] = self.c_cls[pick]
        return self.c_port[pick]

    cdef _arrive(self, int r, CChunk chunk):
        cdef int port, vl = 0, cls = 0, c
        chunk.trace.append(r)
        port = self._route(r, chunk, &vl, &cls)
        chunk.vl = vl
        chunk.cls = cls
        c = self.port_base[r] + port
        w = self.waiting[2 * c + vl]
        if not w and self.occ[2 * c + vl] + chunk.size <= self.cap:
            self._admit(c, vl, chunk)
        else:
            w.append(chunk)

    cdef _admit(self, int c, int vl, CChunk chunk):
        cdef int up = chunk.in_ch, up_vl = chunk.in_vl, t
        self.occ[2 * c + vl] += chunk.size
        (<object> self.queues[2 * c + vl]).append(chunk)
        chunk.in_ch = c
        chunk.in_vl = vl
        if up < 0:
            t = -1 - up
            self.t_credit[t] -= chunk.size
            self._try_inject(t)
        else:
            self.credit[2 * up + up_vl] -= chunk.size
            self._try_start(up)
        self._try_start(c)

    cdef _deliver(self, CChunk chunk):
        cdef int m = chunk.msg, left, b
        if self.check_paths:
            cls = classify_path(self.topology, chunk.trace, chunk.src, chunk.dst)
            if cls != CLASS_NAMES[chunk.cls]:
                raise InvariantError(
                    f"message {m} chunk {chunk.index} labelled {CLASS_NAMES[chunk.cls]} "
                    f"but travelled a {cls} path {chunk.trace}"
                )
        self.delivered_chunks += 1
        left = self.chunks_left[m] - 1
        if left < 0:
            raise AccountingError(f"message {m} delivered more chunks than it has")
        self.chunks_left[m] = left
        if left:
            return
        self.delivery_time[m] = self.now
        self.hops[m] = len(chunk.trace) - 1
        self.path_cls[m] = chunk.cls
        self.vl_out[m] = chunk.vl
        b = self.msg_batch[m]
        self.batch_left[b] -= 1
        if self.batch_left[b] == 0:
            for nb in self.gated[b]:
                self._schedule(max(<i64> self.batch_time[nb], self.now), EV_INJECT, nb, -1)
