"""Dragonfly+ topology construction and validation.

Routers are numbered group-major; inside a group the leaves come first
(local index 0..L-1) followed by the spines (L..L+S-1).  Terminals are
numbered group-major, then leaf-major, then by leaf port.

Port layout:

* leaf: ports ``0..P-1`` face terminals, port ``P + s`` faces spine ``s``.
* spine: port ``x`` faces leaf ``x``, ports ``L..`` carry global links in
  link-index order.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations

from .errors import ArgumentError, ConfigError

GIB = 2**30

LEAF = "leaf"
SPINE = "spine"


@dataclass(frozen=True)
class TopologyParams:
    num_groups: int
    spines_per_group: int
    leaves_per_group: int
    terminals_per_leaf: int
    global_links_per_spine: int
    bw_global: float = 4.37 * GIB
    bw_local: float = 5.25 * GIB
    bw_terminal: float = 16.0 * GIB

    def check(self):
        if self.num_groups < 2:
            raise ConfigError(f"num_groups must be >= 2, got {self.num_groups}")
        if self.spines_per_group < 1:
            raise ConfigError(f"spines_per_group must be >= 1, got {self.spines_per_group}")
        if self.leaves_per_group < 1:
            raise ConfigError(f"leaves_per_group must be >= 1, got {self.leaves_per_group}")
        if self.terminals_per_leaf < 1:
            raise ConfigError(f"terminals_per_leaf must be >= 1, got {self.terminals_per_leaf}")
        if self.global_links_per_spine < 1:
            raise ConfigError(
                f"global_links_per_spine must be >= 1, got {self.global_links_per_spine}"
            )
        ports = self.spines_per_group * self.global_links_per_spine
        if ports % (self.num_groups - 1):
            raise ConfigError(
                f"spines_per_group * global_links_per_spine = "
                f"{self.spines_per_group} * {self.global_links_per_spine} = {ports} "
                f"is not divisible by num_groups - 1 = {self.num_groups - 1}"
            )
        for name in ("bw_global", "bw_local", "bw_terminal"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")

    @property
    def links_per_group_pair(self):
        return self.spines_per_group * self.global_links_per_spine // (self.num_groups - 1)

    @property
    def routers_per_group(self):
        return self.spines_per_group + self.leaves_per_group

    @property
    def terminals_per_group(self):
        return self.leaves_per_group * self.terminals_per_leaf

    @property
    def num_terminals(self):
        return self.num_groups * self.terminals_per_group


FULL_PARAMS = TopologyParams(
    num_groups=9,
    spines_per_group=24,
    leaves_per_group=24,
    terminals_per_leaf=16,
    global_links_per_spine=16,
)

MINI_PARAMS = TopologyParams(
    num_groups=9,
    spines_per_group=4,
    leaves_per_group=4,
    terminals_per_leaf=4,
    global_links_per_spine=2,
)


@dataclass(frozen=True)
class GlobalLink:
    index: int
    a: int  # spine router id
    b: int  # spine router id


@dataclass(frozen=True, eq=False)
class Topology:
    """Immutable Dragonfly+ graph.

    ``local_links`` holds ``(leaf, spine)`` router-id pairs and
    ``global_links`` the inter-group spine pairs.  Lookup tables used by the
    router model are derived once at construction.
    """

    params: TopologyParams
    local_links: tuple
    global_links: tuple
    _ports: dict = field(init=False, repr=False)
    _global_ports: dict = field(init=False, repr=False)
    _linked_spines: dict = field(init=False, repr=False)

    def __post_init__(self):
        p = self.params
        ports = defaultdict(list)  # router -> [(kind, peer, ...)] in port order
        for leaf in range(p.num_groups * p.routers_per_group):
            if not self.is_spine(leaf):
                ports[leaf].extend(("terminal", t) for t in self.leaf_terminals(leaf))
        by_router = defaultdict(list)
        for a, b in self.local_links:
            by_router[a].append(b)
            by_router[b].append(a)
        for r in sorted(by_router):
            ports[r].extend(("local", peer) for peer in sorted(by_router[r]))
        global_ports = defaultdict(list)
        linked = defaultdict(set)
        for link in sorted(self.global_links, key=lambda gl: gl.index):
            for me, peer in ((link.a, link.b), (link.b, link.a)):
                port = len(ports[me])
                ports[me].append(("global", peer))
                global_ports[me, self.group_of(peer)].append(port)
                linked[self.group_of(me), self.group_of(peer)].add(me)
        object.__setattr__(self, "_ports", {r: tuple(v) for r, v in ports.items()})
        object.__setattr__(
            self, "_global_ports", {k: tuple(v) for k, v in global_ports.items()}
        )
        object.__setattr__(
            self, "_linked_spines", {k: tuple(sorted(v)) for k, v in linked.items()}
        )

    # --- id arithmetic -------------------------------------------------

    @property
    def num_routers(self):
        return self.params.num_groups * self.params.routers_per_group

    @property
    def num_terminals(self):
        return self.params.num_terminals

    def group_of(self, router):
        return router // self.params.routers_per_group

    def is_spine(self, router):
        return router % self.params.routers_per_group >= self.params.leaves_per_group

    def role(self, router):
        return SPINE if self.is_spine(router) else LEAF

    def local_index(self, router):
        """Index of a router among the routers of the same role in its group."""
        x = router % self.params.routers_per_group
        return x - self.params.leaves_per_group if x >= self.params.leaves_per_group else x

    def leaf_id(self, group, x):
        return group * self.params.routers_per_group + x

    def spine_id(self, group, s):
        return group * self.params.routers_per_group + self.params.leaves_per_group + s

    def leaves(self, group):
        return [self.leaf_id(group, x) for x in range(self.params.leaves_per_group)]

    def spines(self, group):
        return [self.spine_id(group, s) for s in range(self.params.spines_per_group)]

    def routers(self):
        return range(self.num_routers)

    def terminal_id(self, group, leaf_x, port):
        p = self.params
        return (group * p.leaves_per_group + leaf_x) * p.terminals_per_leaf + port

    def terminal_leaf(self, terminal):
        p = self.params
        leaf_global = terminal // p.terminals_per_leaf
        return self.leaf_id(leaf_global // p.leaves_per_group, leaf_global % p.leaves_per_group)

    def terminal_port(self, terminal):
        return terminal % self.params.terminals_per_leaf

    def terminal_group(self, terminal):
        return terminal // self.params.terminals_per_group

    def terminal_local_id(self, terminal):
        """Position of the terminal inside its group (same for every group)."""
        return terminal % self.params.terminals_per_group

    def group_terminals(self, group):
        n = self.params.terminals_per_group
        return range(group * n, (group + 1) * n)

    def leaf_terminals(self, leaf):
        g = self.group_of(leaf)
        x = self.local_index(leaf)
        return [self.terminal_id(g, x, q) for q in range(self.params.terminals_per_leaf)]

    # --- ports -----------------------------------------------------------

    def ports(self, router):
        """``(kind, peer)`` per port, in port order."""
        return self._ports.get(router, ())

    def num_ports(self, router):
        return len(self._ports.get(router, ()))

    def port_peer(self, router, port):
        try:
            return self._ports[router][port]
        except (KeyError, IndexError):
            raise ArgumentError(f"router {router} has no port {port}") from None

    def up_port(self, leaf, spine):
        """Port on ``leaf`` that faces ``spine`` (same group)."""
        return self.params.terminals_per_leaf + self.local_index(spine)

    def down_port(self, spine, leaf):
        return self.local_index(leaf)

    def global_ports_to(self, spine, group):
        return self._global_ports.get((spine, group), ())

    def spines_linked_to(self, group, dst_group):
        """Spines in ``group`` holding at least one global link to ``dst_group``."""
        return self._linked_spines.get((group, dst_group), ())

    def link_bandwidth(self, kind):
        p = self.params
        return {"terminal": p.bw_terminal, "local": p.bw_local, "global": p.bw_global}[kind]


# --- construction ------------------------------------------------------


def global_link_peer(k, l, num_spine):
    """Spine index in the higher-numbered group reached by slot ``l`` of spine ``k``."""
    if num_spine < 1:
        raise ArgumentError(f"num_spine must be >= 1, got {num_spine}")
    if not 0 <= k < num_spine:
        raise ArgumentError(f"spine index {k} out of range 0..{num_spine - 1}")
    if l < 0:
        raise ArgumentError(f"link slot must be >= 0, got {l}")
    return (k + l) % num_spine


def _global_wiring(params):
    """Yield ``(group_a, spine_a, group_b, spine_b)`` for every global link.

    When each spine has a whole number ``m`` of links toward every other
    group, spine ``k`` of group ``i`` connects to spines ``(k + l) mod S``
    of group ``j > i`` for ``l = 0..m-1``.  Otherwise the group's ``S*H``
    global ports are dealt round-robin over relative group offsets, which
    keeps per-pair counts equal and every spine at exactly ``H`` links.
    """
    G = params.num_groups
    S = params.spines_per_group
    H = params.global_links_per_spine
    if H % (G - 1) == 0:
        m = H // (G - 1)
        for i, j in combinations(range(G), 2):
            for k in range(S):
                for l in range(m):
                    yield i, k, j, global_link_peer(k, l, S)
    else:
        n_pair = S * H // (G - 1)
        for i, j in combinations(range(G), 2):
            d = (j - i) % G
            for c in range(n_pair):
                port_i = (d - 1) + (G - 1) * c
                port_j = (G - d - 1) + (G - 1) * c
                yield i, port_i // H, j, port_j // H


def build_topology(params):
    params.check()
    L, S = params.leaves_per_group, params.spines_per_group
    stride = L + S
    local = [
        (g * stride + x, g * stride + L + s)
        for g in range(params.num_groups)
        for x in range(L)
        for s in range(S)
    ]
    glinks = [
        GlobalLink(index, i * stride + L + k, j * stride + L + k2)
        for index, (i, k, j, k2) in enumerate(_global_wiring(params))
    ]
    return Topology(params, tuple(local), tuple(glinks))


# --- size formulas -----------------------------------------------------


def max_system_size_dfp(r):
    """Largest Dragonfly+ built from radix-``r`` routers (r/2 spines and leaves)."""
    if r < 2 or r % 2:
        raise ArgumentError(f"router radix must be even and >= 2, got {r}")
    h = r // 2
    return h * h * (h * h + 1)


def max_system_size_1d(r):
    """Largest 1D Dragonfly from radix-``r`` routers."""
    if r < 4 or r % 4:
        raise ArgumentError(f"router radix must be a positive multiple of 4, got {r}")
    a = (r // 4) * (r // 2 + 1)
    return a * (a + 1)


def size_ratio(r):
    return Fraction(max_system_size_dfp(r), max_system_size_1d(r))


# --- validation --------------------------------------------------------


def validate(topology):
    """Return a list of human-readable invariant violations (empty if valid)."""
    p = topology.params
    report = []
    nr = topology.num_routers
    bad_endpoint = False
    seen = Counter()
    for a, b in topology.local_links:
        if not (0 <= a < nr and 0 <= b < nr):
            report.append(f"local link ({a}, {b}) references an unknown router")
            bad_endpoint = True
            continue
        if topology.is_spine(a) == topology.is_spine(b):
            kind = "spine-spine" if topology.is_spine(a) else "leaf-leaf"
            report.append(
                f"non-bipartite intra-group wiring: {kind} local link ({a}, {b})"
            )
            continue
        if topology.group_of(a) != topology.group_of(b):
            report.append(f"local link ({a}, {b}) crosses groups")
            continue
        leaf, spine = (b, a) if topology.is_spine(a) else (a, b)
        seen[leaf, spine] += 1
    for g in range(p.num_groups):
        for leaf in topology.leaves(g):
            for spine in topology.spines(g):
                n = seen[leaf, spine]
                if n != 1:
                    report.append(
                        f"incomplete bipartite wiring in group {g}: leaf {leaf} and "
                        f"spine {spine} share {n} local links (expected 1)"
                    )

    pair_counts = Counter()
    indices = Counter(gl.index for gl in topology.global_links)
    for idx, n in sorted(indices.items()):
        if n > 1:
            report.append(f"global link index {idx} used {n} times")
    for gl in topology.global_links:
        if not (0 <= gl.a < nr and 0 <= gl.b < nr):
            report.append(f"global link {gl.index} references an unknown router")
            bad_endpoint = True
            continue
        if not (topology.is_spine(gl.a) and topology.is_spine(gl.b)):
            report.append(f"global link {gl.index} has a non-spine endpoint")
            continue
        ga, gb = topology.group_of(gl.a), topology.group_of(gl.b)
        if ga == gb:
            report.append(f"global link {gl.index} joins spines of the same group {ga}")
            continue
        pair_counts[min(ga, gb), max(ga, gb)] += 1
    expected = p.links_per_group_pair
    for i, j in combinations(range(p.num_groups), 2):
        n = pair_counts[i, j]
        if n != expected:
            report.append(
                f"unequal group-pair link counts: groups {i} and {j} share {n} "
                f"global links (expected {expected})"
            )

    if not bad_endpoint:
        owners = Counter()
        for leaf in range(nr):
            if topology.is_spine(leaf):
                continue
            terms = [peer for kind, peer in topology.ports(leaf) if kind == "terminal"]
            if len(terms) != p.terminals_per_leaf:
                report.append(
                    f"leaf {leaf} hosts {len(terms)} terminals (expected {p.terminals_per_leaf})"
                )
            owners.update(terms)
        for t in range(p.num_terminals):
            if owners[t] != 1:
                report.append(f"terminal {t} attaches to {owners[t]} leaves (expected 1)")
    return report
