"""Rank-to-terminal allocation: contiguous, seeded random, background layout, files."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AllocationError, ConfigError
from .workload import background_local_ids

ROOT_IN_BG = "root-in-bg-groups"
ROOT_OUTSIDE_BG = "root-outside-bg-groups"


@dataclass(frozen=True)
class Allocation:
    job_id: int
    terminals: tuple  # index = rank

    def __post_init__(self):
        object.__setattr__(self, "terminals", tuple(int(t) for t in self.terminals))
        if len(set(self.terminals)) != len(self.terminals):
            raise AllocationError(f"job {self.job_id} uses a terminal twice")

    @property
    def nprocs(self):
        return len(self.terminals)

    def groups(self, topology):
        return [topology.terminal_group(t) for t in self.terminals]


def contiguous_alloc(nprocs, topology, start_group=0, job_id=0):
    """Ranks fill ascending terminal ids from the first terminal of ``start_group``."""
    p = topology.params
    if not 0 <= start_group < p.num_groups:
        raise AllocationError(f"start group {start_group} does not exist")
    first = start_group * p.terminals_per_group
    if nprocs < 1 or first + nprocs > topology.num_terminals:
        raise AllocationError(
            f"{nprocs} ranks do not fit from group {start_group}: "
            f"only {topology.num_terminals - first} terminals remain"
        )
    return Allocation(job_id, range(first, first + nprocs))


def random_alloc(nprocs, topology, seed, excluded=(), job_id=0):
    """Seeded shuffle of the non-excluded terminals; ranks take the first ``nprocs``."""
    excluded = set(excluded)
    eligible = [t for t in range(topology.num_terminals) if t not in excluded]
    if nprocs < 1 or nprocs > len(eligible):
        raise AllocationError(f"{nprocs} ranks requested but only {len(eligible)} terminals are free")
    order = np.random.default_rng(seed).permutation(len(eligible))
    return Allocation(job_id, [eligible[i] for i in order[:nprocs]])


def background_alloc(topology, bg_groups, per_group, job_id=0):
    """Structured background layout: same local ids in every background group.

    Rank ``gi * per_group + q`` runs on local id ``background_local_ids()[q]``
    of the ``gi``-th listed group.
    """
    local = background_local_ids(topology, per_group)
    terms = []
    for g in bg_groups:
        if not 0 <= g < topology.params.num_groups:
            raise AllocationError(f"background group {g} does not exist")
        members = topology.group_terminals(g)
        terms.extend(members[x] for x in local)
    return Allocation(job_id, terms)


def place_broadcast_root(allocation, topology, constraint, bg_groups):
    """Lowest rank whose terminal is inside (or outside) the background groups."""
    if constraint not in (ROOT_IN_BG, ROOT_OUTSIDE_BG):
        raise AllocationError(f"unknown root constraint {constraint!r}")
    bg = set(bg_groups)
    want_in = constraint == ROOT_IN_BG
    for rank, t in enumerate(allocation.terminals):
        if (topology.terminal_group(t) in bg) == want_in:
            return rank
    side = "inside" if want_in else "outside"
    raise AllocationError(f"job {allocation.job_id} has no terminal {side} groups {sorted(bg)}")


def fraction_in_groups(allocation, topology, groups):
    groups = set(groups)
    hits = sum(1 for t in allocation.terminals if topology.terminal_group(t) in groups)
    return hits / allocation.nprocs


def check_disjoint(allocations, topology=None):
    """Raise :class:`AllocationError` if two jobs share a terminal or one does not exist."""
    owner = {}
    for alloc in allocations:
        for t in alloc.terminals:
            if topology is not None and not 0 <= t < topology.num_terminals:
                raise AllocationError(f"job {alloc.job_id} uses terminal {t}, which does not exist")
            if t in owner:
                raise AllocationError(f"terminal {t} is allocated to both job {owner[t]} and job {alloc.job_id}")
            owner[t] = alloc.job_id


def format_allocations(allocations):
    return "".join(
        f"{a.job_id} {' '.join(str(t) for t in a.terminals)}\n"
        for a in sorted(allocations, key=lambda a: a.job_id)
    )


def parse_allocations(text, path="<alloc>"):
    """Parse ``job_id t0 t1 ...`` lines into ``{job_id: Allocation}``."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            nums = [int(tok) for tok in line.split()]
        except ValueError:
            raise ConfigError("allocation lines hold integers only", path, lineno) from None
        if len(nums) < 2:
            raise ConfigError("expected 'job_id t0 t1 ...'", path, lineno)
        job_id, terms = nums[0], nums[1:]
        if job_id in out:
            raise ConfigError(f"duplicate allocation for job {job_id}", path, lineno)
        if min(terms) < 0:
            raise ConfigError("terminal ids must be >= 0", path, lineno)
        try:
            out[job_id] = Allocation(job_id, terms)
        except AllocationError as exc:
            raise ConfigError(str(exc), path, lineno) from None
    return out


def load_allocations(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read allocation file: {exc.strerror}", str(path)) from None
    return parse_allocations(text, str(path))
