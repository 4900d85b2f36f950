"""Synthetic MPI-style traffic: target patterns, structured background, TGLL sizing.

Ranks of a job are mapped to terminals by an allocation (see
:mod:`dfpsim.placement`).  Every pattern except broadcast is open-loop: rank
``r`` issues its ``i``-th iteration at ``i * interval`` whatever the network
does.  Broadcast iterations are closed-loop: iteration ``i`` starts at the
later of ``i * interval`` and the delivery of every message of iteration
``i - 1``.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, ConfigError
from .simcore.plan import EnginePlan

UNIFORM_RANDOM = "uniform-random"
STENCIL3D = "stencil3d"
TORNADO = "tornado"
BROADCAST = "broadcast"
BACKGROUND = "background"
PATTERNS = (UNIFORM_RANDOM, STENCIL3D, TORNADO, BROADCAST, BACKGROUND)

SEED_ENV = "DFPSIM_SEED"
DEFAULT_SEED = 0


@dataclass(frozen=True)
class JobSpec:
    """One synthetic job.

    ``args`` depends on the pattern: stencil ``(x, y, z)``, tornado
    ``(offset,)``, broadcast ``(root,)``, background the sorted group tuple.
    Uniform-random takes none.  ``seed`` may be ``None`` until
    :func:`resolve_seeds` fills it in.
    """

    job_id: int
    pattern: str
    nprocs: int
    msg_size: int
    interval: int
    msg_count: int
    seed: int | None = None
    args: tuple = ()

    def __post_init__(self):
        if self.pattern not in PATTERNS:
            raise ConfigError(f"unknown pattern {self.pattern!r}; expected one of {', '.join(PATTERNS)}")
        if self.job_id < 0:
            raise ConfigError(f"job_id must be >= 0, got {self.job_id}")
        if self.nprocs < 2:
            raise ConfigError(f"nprocs must be >= 2, got {self.nprocs}")
        if self.msg_size < 1:
            raise ConfigError(f"msg_size must be >= 1, got {self.msg_size}")
        if self.interval < 0:
            raise ConfigError(f"interval must be >= 0, got {self.interval}")
        if self.msg_count < 0:
            raise ConfigError(f"msg_count must be >= 0, got {self.msg_count}")
        if self.seed is not None and not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        a = self.args
        if self.pattern == UNIFORM_RANDOM and a:
            raise ConfigError("uniform-random takes no pattern arguments")
        if self.pattern == STENCIL3D:
            if len(a) != 3 or any(d < 1 for d in a):
                raise ConfigError(f"stencil3d needs three positive dims, got {a}")
            if a[0] * a[1] * a[2] != self.nprocs:
                raise ConfigError(f"stencil dims {a[0]}x{a[1]}x{a[2]} do not multiply to nprocs={self.nprocs}")
        if self.pattern == TORNADO:
            if len(a) != 1:
                raise ConfigError(f"tornado needs one offset, got {a}")
            if not 1 <= a[0] < self.nprocs:
                raise ConfigError(f"tornado offset must lie in 1..{self.nprocs - 1}, got {a[0]}")
        if self.pattern == BROADCAST:
            if len(a) != 1 or not 0 <= a[0] < self.nprocs:
                raise ConfigError(f"broadcast root must lie in 0..{self.nprocs - 1}, got {a}")
        if self.pattern == BACKGROUND:
            if len(a) < 2 or len(set(a)) != len(a) or any(g < 0 for g in a):
                raise ConfigError(f"background needs at least two distinct groups, got {a}")
            if self.nprocs % len(a):
                raise ConfigError(
                    f"background nprocs={self.nprocs} is not a multiple of its {len(a)} groups"
                )

    @property
    def closed_loop(self):
        return self.pattern == BROADCAST

    @property
    def bg_per_group(self):
        return self.nprocs // len(self.args)


# --- TGLL -------------------------------------------------------------------


def tgll(msg_size, interval, bw_global):
    """Offered per-process load over one global link: ``(msg_size / interval) / bw_global``.

    ``interval`` is in ns and ``bw_global`` in bytes/s.
    """
    if interval <= 0:
        raise ArgumentError(f"interval must be positive, got {interval}")
    if bw_global <= 0:
        raise ArgumentError(f"bw_global must be positive, got {bw_global}")
    return msg_size / (interval * 1e-9) / bw_global


def msg_size_for_tgll(target, interval, bw_global):
    """Message size in bytes that yields load ``target`` at ``interval`` ns."""
    if target <= 0:
        raise ArgumentError(f"target load must be positive, got {target}")
    if interval <= 0:
        raise ArgumentError(f"interval must be positive, got {interval}")
    if bw_global <= 0:
        raise ArgumentError(f"bw_global must be positive, got {bw_global}")
    return max(1, round(target * interval * 1e-9 * bw_global))


# --- destination rules --------------------------------------------------------


def rank_rng(seed, rank):
    """Independent generator for ``rank`` of a job seeded with ``seed``."""
    return np.random.default_rng([seed, rank])


def ur_dest(rank, nprocs, rng):
    """Uniform destination over every rank but ``rank``."""
    if nprocs < 2:
        raise ArgumentError(f"nprocs must be >= 2, got {nprocs}")
    d = int(rng.integers(nprocs - 1))
    return d + (d >= rank)


def ur_dests(rank, nprocs, rng, count):
    """``count`` uniform destinations for ``rank`` drawn in one call."""
    if nprocs < 2:
        raise ArgumentError(f"nprocs must be >= 2, got {nprocs}")
    d = rng.integers(nprocs - 1, size=count)
    return d + (d >= rank)


def default_stencil_dims(nprocs):
    """Most cube-like ``(x, y, z)`` with ``x <= y <= z`` and ``x*y*z == nprocs``.

    Minimizes the face area ``xy + yz + zx``.
    """
    best = None
    for x in range(1, round(nprocs ** (1 / 3)) + 2):
        if nprocs % x:
            continue
        rest = nprocs // x
        for y in range(x, math.isqrt(rest) + 1):
            if rest % y:
                continue
            z = rest // y
            key = (x * y + y * z + z * x, z - x)
            if best is None or key < best[0]:
                best = (key, (x, y, z))
    return best[1]


def stencil_neighbors(rank, dims):
    """Six periodic neighbors of ``rank`` on an x-fastest 3D grid.

    Order: ``+x, -x, +y, -y, +z, -z``.  Dimensions shorter than 3 yield
    repeated ranks or ``rank`` itself (see :func:`stencil_is_degenerate`).
    """
    x, y, z = dims
    if x < 1 or y < 1 or z < 1:
        raise ConfigError(f"stencil dims must be positive, got {dims}")
    n = x * y * z
    if not 0 <= rank < n:
        raise ConfigError(f"rank {rank} outside a {x}x{y}x{z} grid")
    i, j, k = rank % x, (rank // x) % y, rank // (x * y)

    def at(a, b, c):
        return a % x + x * (b % y + y * (c % z))

    return [at(i + 1, j, k), at(i - 1, j, k), at(i, j + 1, k), at(i, j - 1, k), at(i, j, k + 1), at(i, j, k - 1)]


def stencil_is_degenerate(dims):
    return min(dims) < 3


def tornado_dest(rank, offset, nprocs):
    if not 1 <= offset < nprocs:
        raise ConfigError(f"tornado offset must lie in 1..{nprocs - 1}, got {offset}")
    return (rank + offset) % nprocs


def broadcast_targets(root, nprocs):
    if not 0 <= root < max(nprocs, 1):
        raise ConfigError(f"broadcast root {root} outside 0..{nprocs - 1}")
    return [r for r in range(nprocs) if r != root]


def background_peers(topology, node_local_id, my_group, bg_groups):
    """Terminals with local id ``node_local_id`` in every other background group."""
    if my_group not in bg_groups:
        raise ConfigError(f"group {my_group} is not a background group {sorted(bg_groups)}")
    per_group = topology.params.terminals_per_group
    if not 0 <= node_local_id < per_group:
        raise ConfigError(f"local id {node_local_id} does not exist in a {per_group}-terminal group")
    peers = []
    for g in sorted(bg_groups):
        if g == my_group:
            continue
        if not 0 <= g < topology.params.num_groups:
            raise ConfigError(f"background group {g} does not exist")
        peers.append(topology.group_terminals(g)[node_local_id])
    return peers


def background_local_ids(topology, per_group):
    """Local node ids used by ``per_group`` background processes in one group.

    Spread round-robin over leaves: process ``q`` sits on leaf ``q mod L``,
    port ``q // L``.
    """
    p = topology.params
    if not 1 <= per_group <= p.terminals_per_group:
        raise ConfigError(f"cannot place {per_group} background processes in a {p.terminals_per_group}-terminal group")
    L, P = p.leaves_per_group, p.terminals_per_leaf
    return [(q % L) * P + q // L for q in range(per_group)]


# --- schedules and plans ----------------------------------------------------------


def resolve_seeds(jobs, env=None):
    """Fill unset seeds from ``DFPSIM_SEED`` (default 0) plus the job id."""
    env = os.environ if env is None else env
    raw = env.get(SEED_ENV)
    base = DEFAULT_SEED
    if raw not in (None, ""):
        try:
            base = int(raw)
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {raw!r}") from None
    out = []
    for job in jobs:
        if job.seed is None:
            job = JobSpec(job.job_id, job.pattern, job.nprocs, job.msg_size, job.interval,
                          job.msg_count, (base + job.job_id) % 2**64, job.args)
        out.append(job)
    return out


def _dest_table(job, topology=None, allocation=None):
    """Per-rank destination ranks for every iteration: ``table[r][i]`` is a list."""
    n, count, a = job.nprocs, job.msg_count, job.args
    if job.pattern == UNIFORM_RANDOM:
        if job.seed is None:
            raise ConfigError(f"job {job.job_id} has no seed")
        return [[[int(d)] for d in ur_dests(r, n, rank_rng(job.seed, r), count)] for r in range(n)]
    if job.pattern == STENCIL3D:
        return [[stencil_neighbors(r, a)] * count for r in range(n)]
    if job.pattern == TORNADO:
        return [[[tornado_dest(r, a[0], n)]] * count for r in range(n)]
    if job.pattern == BROADCAST:
        targets = broadcast_targets(a[0], n)
        return [[targets if r == a[0] else []] * count for r in range(n)]
    # background: rank = group_index * per_group + q
    per = job.bg_per_group
    groups = list(a)
    table = []
    for r in range(n):
        gi, q = divmod(r, per)
        table.append([[gj * per + q for gj in range(len(groups)) if gj != gi]] * count)
    return table


def traffic_plan(job):
    """Per-rank ``[(issue_time_ns, dst_rank), ...]`` with nominal issue times."""
    table = _dest_table(job)
    return [
        [(i * job.interval, d) for i, dsts in enumerate(row) for d in dsts]
        for row in table
    ]


def build_engine_plan(jobs, allocations):
    """Flatten jobs into an :class:`EnginePlan`.

    ``allocations`` maps job id to an object with a ``terminals`` sequence.
    Returns ``(plan, message_ids)`` where ``message_ids[m]`` is the per-job
    message number of engine message ``m``.  Inside a job, messages are
    numbered iteration-major, then rank, then destination order.
    """
    plan = EnginePlan(num_jobs=len(jobs))
    message_ids = []
    pending = []  # (time, job_index, iteration, msgs, gated)
    for jx, job in enumerate(jobs):
        if job.seed is None:
            raise ConfigError(f"job {job.job_id} has no seed; call resolve_seeds first")
        alloc = allocations[job.job_id]
        terms = alloc.terminals
        if len(terms) != job.nprocs:
            raise ConfigError(
                f"job {job.job_id} has {job.nprocs} ranks but its allocation lists {len(terms)} terminals"
            )
        table = _dest_table(job)
        nid = 0
        for i in range(job.msg_count):
            msgs = []
            for r in range(job.nprocs):
                for d in table[r][i]:
                    msgs.append(plan.add_message(job.job_id, terms[r], terms[d], job.msg_size))
                    message_ids.append(nid)
                    nid += 1
            if msgs:
                pending.append((i * job.interval, jx, i, msgs, job.closed_loop))

    # open-loop batches first in time order, so equal-time batches keep job order
    last_gate = {}
    for time, jx, i, msgs, gated in sorted(pending, key=lambda p: (p[0], p[1], p[2])):
        gate = last_gate.get(jx, -1) if gated else -1
        b = plan.add_batch(time, msgs, gate)
        if gated:
            last_gate[jx] = b
    plan.check()
    return plan, message_ids


# --- workload files -----------------------------------------------------------------


def _parse_args(pattern, tokens, path, lineno):
    try:
        if pattern == BACKGROUND:
            if len(tokens) != 1:
                raise ValueError
            return tuple(int(g) for g in tokens[0].split(","))
        return tuple(int(t) for t in tokens)
    except ValueError:
        raise ConfigError(f"bad pattern arguments {' '.join(tokens)!r} for {pattern}", path, lineno) from None


def parse_workload(text, path="<workload>"):
    """Parse a workload file: one job per line.

    ``job_id pattern nprocs msg_size_bytes interval_ns msg_count seed [args...]``;
    ``seed`` may be ``-`` to defer to ``DFPSIM_SEED``.  Stencil args default
    to the most cube-like factorization of ``nprocs``.
    """
    jobs = []
    seen = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        if len(tok) < 7:
            raise ConfigError(
                "expected 'job_id pattern nprocs msg_size_bytes interval_ns msg_count seed [args]', "
                f"got {len(tok)} fields", path, lineno)
        try:
            job_id, nprocs, size, interval, count = (int(tok[i]) for i in (0, 2, 3, 4, 5))
        except ValueError:
            raise ConfigError("job_id, nprocs, msg_size_bytes, interval_ns and msg_count must be integers",
                              path, lineno) from None
        if tok[6] == "-":
            seed = None
        else:
            try:
                seed = int(tok[6])
            except ValueError:
                raise ConfigError(f"seed must be an integer or '-', got {tok[6]!r}", path, lineno) from None
        pattern = tok[1]
        args = _parse_args(pattern, tok[7:], path, lineno)
        if pattern == STENCIL3D and not args and nprocs >= 1:
            args = default_stencil_dims(nprocs)
        if job_id in seen:
            raise ConfigError(f"duplicate job_id {job_id} (first on line {seen[job_id]})", path, lineno)
        try:
            jobs.append(JobSpec(job_id, pattern, nprocs, size, interval, count, seed, args))
        except ConfigError as exc:
            raise ConfigError(exc.message, path, lineno) from None
        seen[job_id] = lineno
    return jobs


def load_workload(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read workload file: {exc.strerror}", str(path)) from None
    return parse_workload(text, str(path))


def format_workload(jobs):
    lines = []
    for j in jobs:
        fields = [j.job_id, j.pattern, j.nprocs, j.msg_size, j.interval, j.msg_count,
                  "-" if j.seed is None else j.seed]
        if j.pattern == BACKGROUND:
            fields.append(",".join(str(g) for g in j.args))
        else:
            fields.extend(j.args)
        lines.append(" ".join(str(f) for f in fields))
    return "\n".join(lines) + "\n"
