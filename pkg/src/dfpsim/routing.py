"""Fully progressive adaptive routing (FPAR) over two virtual lanes.

A chunk may take one of three path shapes:

* minimal: source leaf, source spine, destination spine, destination leaf
  (leaf, spine, leaf inside one group);
* intermediate-spine: the source spine hands the chunk to a spine of a third
  group, which forwards it straight to the destination group;
* intermediate-leaf: the intermediate spine drops the chunk to one of its
  leaves, which sends it back up to a spine holding a link to the
  destination group.

Every hop after the chunk commits to its minimal remainder inside the
intermediate group travels on VL1; everything else stays on VL0.
"""

from __future__ import annotations

from dataclasses import dataclass
from graphlib import CycleError, TopologicalSorter
from typing import NamedTuple

from .errors import ConfigError, InvariantError, RoutingError

MINIMAL = "minimal"
INTERMEDIATE_SPINE = "intermediate-spine"
INTERMEDIATE_LEAF = "intermediate-leaf"
PATH_CLASSES = (MINIMAL, INTERMEDIATE_SPINE, INTERMEDIATE_LEAF)

VL0 = 0
VL1 = 1

FPAR = "fpar"
MINIMAL_ONLY = "minimal"


class RouteCandidate(NamedTuple):
    out_port: int
    path_class: str
    hop_count_remaining: int
    score: float
    vl_after: int


@dataclass(frozen=True)
class RoutingConfig:
    threshold_T: float = 0.5
    mode: str = FPAR
    allow_spine_divert: bool = True

    def __post_init__(self):
        if self.mode not in (FPAR, MINIMAL_ONLY):
            raise ConfigError(f"routing mode must be 'fpar' or 'minimal', got {self.mode!r}")
        if self.mode == FPAR and not 0.0 < self.threshold_T < 1.0:
            raise ConfigError(f"threshold_T must lie in (0, 1) for fpar, got {self.threshold_T}")


def _cand(port, cls, hops, vl):
    return RouteCandidate(port, cls, hops, 0.0, vl)


def enumerate_candidates(topology, router, chunk, allow_spine_divert=True):
    """Legal next hops for ``chunk`` sitting at ``router``; scores are left at 0.

    ``chunk`` needs ``src_terminal``, ``dst_terminal``, ``current_vl``,
    ``path_class`` and ``hop_trace`` (routers visited so far, the current one
    included or not).
    """
    topo = topology
    dst = chunk.dst_terminal
    dst_leaf = topo.terminal_leaf(dst)
    dst_group = topo.terminal_group(dst)
    src_group = topo.terminal_group(chunk.src_terminal)
    g = topo.group_of(router)
    vl = chunk.current_vl

    if not topo.is_spine(router):
        if router == dst_leaf:
            return [_cand(topo.terminal_port(dst), chunk.path_class, 0, vl)]
        if g == src_group:
            if vl != VL0:
                raise RoutingError(f"chunk on VL{vl} at its source leaf {router}")
            if g == dst_group:
                return [_cand(topo.up_port(router, s), MINIMAL, 2, VL0) for s in topo.spines(g)]
            direct = set(topo.spines_linked_to(g, dst_group))
            return [
                _cand(topo.up_port(router, s), MINIMAL, 3, VL0)
                if s in direct
                else _cand(topo.up_port(router, s), INTERMEDIATE_SPINE, 4, VL0)
                for s in topo.spines(g)
            ]
        if g == dst_group:
            raise RoutingError(f"chunk reached non-destination leaf {router} of its destination group")
        # intermediate leaf: back up to a fresh spine that reaches the destination group
        visited = set(chunk.hop_trace)
        out = [
            _cand(topo.up_port(router, s), INTERMEDIATE_LEAF, 3, VL1)
            for s in topo.spines_linked_to(g, dst_group)
            if s not in visited
        ]
        if not out:
            raise RoutingError(f"no spine of group {g} reaches group {dst_group} from leaf {router}")
        return out

    if g == dst_group:
        return [_cand(topo.down_port(router, dst_leaf), chunk.path_class, 1, vl)]

    direct = topo.global_ports_to(router, dst_group)
    if g == src_group:
        if vl != VL0:
            raise RoutingError(f"chunk on VL{vl} at its source spine {router}")
        out = [_cand(port, MINIMAL, 2, VL0) for port in direct]
        if not direct or allow_spine_divert:
            for port, (kind, peer) in enumerate(topo.ports(router)):
                if kind == "global" and topo.group_of(peer) != dst_group:
                    out.append(_cand(port, INTERMEDIATE_SPINE, 3, VL0))
        if not out:
            raise RoutingError(f"spine {router} has no global links")
        return out

    # intermediate group
    if vl == VL1:
        if not direct:
            raise RoutingError(f"VL1 chunk at spine {router} without a link to group {dst_group}")
        return [_cand(port, chunk.path_class, 2, VL1) for port in direct]
    out = [_cand(port, INTERMEDIATE_SPINE, 2, VL1) for port in direct]
    if any(s != router for s in topo.spines_linked_to(g, dst_group)):
        out.extend(
            _cand(topo.down_port(router, leaf), INTERMEDIATE_LEAF, 4, VL0)
            for leaf in topo.leaves(g)
        )
    if not out:
        raise RoutingError(f"no route toward group {dst_group} from spine {router}")
    return out


def _pick(cands):
    return min(cands, key=lambda c: (c.score, c.out_port))


def choose_port(candidates, config):
    """Apply the FPAR threshold rule to scored candidates.

    A shorter path at or under the threshold always wins; a longer one is
    taken only when every shorter path is above it; with everything above
    the threshold the least-loaded shorter path is used.  Equal scores go to
    the lowest port.
    """
    if not candidates:
        raise RoutingError("no route candidates")
    best = min(c.hop_count_remaining for c in candidates)
    shorter = [c for c in candidates if c.hop_count_remaining == best]
    if config.mode == MINIMAL_ONLY:
        return _pick(shorter)
    T = config.threshold_T
    ok = [c for c in shorter if c.score <= T]
    if ok:
        return _pick(ok)
    ok = [c for c in candidates if c.hop_count_remaining != best and c.score <= T]
    if ok:
        return _pick(ok)
    return _pick(shorter)


def vl_transition(chunk, chosen):
    if chunk.current_vl == VL1 and chosen.vl_after != VL1:
        raise InvariantError(
            f"message {chunk.message_id} chunk {chunk.chunk_index} would move from VL1 back to VL0"
        )
    return chosen.vl_after


def classify_path(topology, trace, src_terminal, dst_terminal):
    """Return the path class of a delivered chunk's router trace.

    Raises :class:`InvariantError` if the trace is not one of the legal
    shapes.
    """
    topo = topology
    n = len(trace)

    def fail(why):
        raise InvariantError(f"illegal path {list(trace)} ({why})")

    if len(set(trace)) != n:
        fail("router revisited")
    if n == 0 or trace[0] != topo.terminal_leaf(src_terminal):
        fail("does not start at the source leaf")
    if trace[-1] != topo.terminal_leaf(dst_terminal):
        fail("does not end at the destination leaf")
    for a, b in zip(trace, trace[1:]):
        if b not in {peer for kind, peer in topo.ports(a) if kind != "terminal"}:
            fail(f"routers {a} and {b} are not adjacent")
    roles = "".join("S" if topo.is_spine(r) else "L" for r in trace)
    groups = [topo.group_of(r) for r in trace]
    src_g, dst_g = groups[0], groups[-1]
    if roles == "L" or (roles == "LSL" and src_g == dst_g):
        return MINIMAL
    if src_g == dst_g:
        fail("intra-group traffic left the minimal path")
    if roles == "LSSL" and groups == [src_g, src_g, dst_g, dst_g]:
        return MINIMAL
    mid = groups[2]
    if mid in (src_g, dst_g):
        fail("intermediate group equals source or destination group")
    if roles == "LSSSL" and groups == [src_g, src_g, mid, dst_g, dst_g]:
        return INTERMEDIATE_SPINE
    if roles == "LSSLSSL" and groups == [src_g, src_g, mid, mid, mid, dst_g, dst_g]:
        return INTERMEDIATE_LEAF
    fail(f"shape {roles} over groups {groups}")


class _Probe:
    """Minimal chunk stand-in used while walking all legal routes."""

    __slots__ = ("src_terminal", "dst_terminal", "current_vl", "path_class", "hop_trace", "message_id", "chunk_index")

    def __init__(self, src, dst, vl, cls, trace):
        self.src_terminal = src
        self.dst_terminal = dst
        self.current_vl = vl
        self.path_class = cls
        self.hop_trace = trace
        self.message_id = -1
        self.chunk_index = -1


def channel_dependency_graph(topology, config=RoutingConfig()):
    """Map each ``(router, port, vl)`` channel to the channels it may wait on.

    Built by walking every legal route between every pair of leaves (one
    representative terminal per leaf), so it covers every dependency the
    routing function can create.
    """
    topo = topology
    deps = {}
    reps = [topo.leaf_terminals(leaf)[0] for leaf in topo.routers() if not topo.is_spine(leaf)]
    minimal_only = config.mode == MINIMAL_ONLY

    def walk(router, probe, in_channel):
        probe.hop_trace.append(router)
        cands = enumerate_candidates(topo, router, probe, config.allow_spine_divert)
        if minimal_only:
            best = min(c.hop_count_remaining for c in cands)
            cands = [c for c in cands if c.hop_count_remaining == best]
        for c in cands:
            ch = (router, c.out_port, c.vl_after)
            if in_channel is not None:
                deps.setdefault(in_channel, set()).add(ch)
            deps.setdefault(ch, set())
            kind, peer = topo.port_peer(router, c.out_port)
            if kind == "terminal":
                continue
            nxt = _Probe(probe.src_terminal, probe.dst_terminal, c.vl_after, c.path_class, list(probe.hop_trace))
            walk(peer, nxt, ch)

    for src in reps:
        for dst in reps:
            walk(topo.terminal_leaf(src), _Probe(src, dst, VL0, MINIMAL, []), None)
    return deps


def find_dependency_cycle(deps):
    """Return a cycle (list of channels) in a dependency graph, or ``None``."""
    try:
        tuple(TopologicalSorter(deps).static_order())
    except CycleError as exc:
        return exc.args[1]
    return None
