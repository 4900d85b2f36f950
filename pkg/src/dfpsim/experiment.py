"""Experiment runs, replay manifests, the reference scenarios and sweep grids."""

from __future__ import annotations

import itertools
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

from .config import MINI_NETWORK, FULL_NETWORK, NetworkConfig, format_network, parse_network
from .errors import (
    AllocationError,
    ConfigError,
    DfpsimError,
    InvariantError,
    OrderingError,
    RoutingError,
)
from .metrics import (
    LatencyCollector,
    arrival_csv,
    arrival_rate_series,
    records_csv,
    summarize,
    summary_csv,
    summary_row,
    SUMMARY_HEADER,
)
from .placement import (
    ROOT_IN_BG,
    ROOT_OUTSIDE_BG,
    Allocation,
    background_alloc,
    check_disjoint,
    contiguous_alloc,
    format_allocations,
    parse_allocations,
    place_broadcast_root,
    random_alloc,
)
from .simcore import get_engine
from .simcore.state import transmit_time
from .topology import build_topology
from .workload import (
    BACKGROUND,
    BROADCAST,
    STENCIL3D,
    TORNADO,
    UNIFORM_RANDOM,
    JobSpec,
    build_engine_plan,
    default_stencil_dims,
    format_workload,
    msg_size_for_tgll,
    parse_workload,
    resolve_seeds,
)

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_UNDELIVERED = 3
EXIT_INVARIANT = 4


# --- single runs ---------------------------------------------------------------


@dataclass
class ExperimentSpec:
    network: NetworkConfig
    jobs: list
    allocations: dict = field(default_factory=dict)  # job_id -> Allocation
    placements: dict = field(default_factory=dict)  # job_id -> "contiguous@G" | "random@SEED"
    until: int | None = None
    label: str = "run"
    backend: str | None = None


@dataclass
class RunOutcome:
    spec: ExperimentSpec  # fully resolved: seeds set, every job has an allocation
    topology: object
    collector: LatencyCollector
    report: object
    arrivals: dict

    @property
    def status(self):
        return EXIT_UNDELIVERED if self.report.undelivered else EXIT_OK


def parse_placement(text):
    """``contiguous@G`` or ``random@SEED`` -> ``(kind, int)``."""
    kind, sep, arg = text.partition("@")
    if kind not in ("contiguous", "random") or not sep:
        raise ConfigError(f"placement must be contiguous@GROUP or random@SEED, got {text!r}")
    try:
        return kind, int(arg)
    except ValueError:
        raise ConfigError(f"placement argument must be an integer, got {arg!r}") from None


def resolve_allocations(jobs, topology, explicit, placements):
    """One Allocation per job.

    Explicit allocations and background layouts are fixed first, then
    contiguous directives, then random ones, each drawn from terminals no
    earlier job holds.  A job with neither gets ``contiguous@0``.
    """
    ids = {j.job_id for j in jobs}
    for job_id in list(explicit) + list(placements):
        if job_id not in ids:
            raise ConfigError(f"allocation or placement given for unknown job {job_id}")
    both = set(explicit) & set(placements)
    if both:
        raise ConfigError(f"job {min(both)} has both an allocation file entry and a placement directive")
    out = {}
    order = sorted(jobs, key=lambda j: (j.job_id not in explicit and j.pattern != BACKGROUND, j.job_id))
    deferred = []
    for job in order:
        if job.job_id in explicit:
            out[job.job_id] = explicit[job.job_id]
        elif job.pattern == BACKGROUND and job.job_id not in placements:
            out[job.job_id] = background_alloc(topology, job.args, job.bg_per_group, job.job_id)
        else:
            kind, arg = parse_placement(placements.get(job.job_id, "contiguous@0"))
            deferred.append((kind != "contiguous", job, kind, arg))
    for _, job, kind, arg in sorted(deferred, key=lambda d: (d[0], d[1].job_id)):
        taken = {t for a in out.values() for t in a.terminals}
        if kind == "contiguous":
            out[job.job_id] = contiguous_alloc(job.nprocs, topology, arg, job.job_id)
        else:
            out[job.job_id] = random_alloc(job.nprocs, topology, arg, taken, job.job_id)
    for job in jobs:
        if out[job.job_id].nprocs != job.nprocs:
            raise ConfigError(
                f"job {job.job_id} has {job.nprocs} ranks but its allocation lists {out[job.job_id].nprocs}"
            )
    check_disjoint(out.values(), topology)
    return out


def simulate(spec, topology=None):
    """Resolve seeds and placements, run the engine, collect records."""
    net = spec.network
    topology = topology or build_topology(net.topology)
    jobs = resolve_seeds(spec.jobs)
    allocs = resolve_allocations(jobs, topology, spec.allocations, spec.placements)
    resolved = replace(spec, jobs=jobs, allocations=allocs, placements={})
    plan, message_ids = build_engine_plan(jobs, allocs)
    engine = get_engine(spec.backend)(topology, plan, net.engine, net.routing)
    report = engine.run_until(spec.until)
    res = engine.result()
    collector = LatencyCollector()
    for m in range(plan.num_messages):
        if res.delivery_time[m] < 0:
            continue
        collector.record_delivery(
            plan.msg_job[m], message_ids[m], plan.msg_src[m], plan.msg_dst[m], plan.msg_size[m],
            res.issue_time[m], res.delivery_time[m], res.hops[m], res.path_class[m], res.vl[m],
        )
    return RunOutcome(resolved, topology, collector, report, res.arrivals)


def format_manifest(spec, report=None):
    lines = [
        "# dfpsim run manifest: replay with `dfpsim --manifest <this file>`",
        f"label = {spec.label}",
        f"until = {'none' if spec.until is None else spec.until}",
    ]
    if report is not None:
        lines += [
            f"# events = {report.events}",
            f"# final_time_ns = {report.final_time}",
            f"# undelivered = {report.undelivered}",
            f"# backend = {report.backend}",
        ]
    lines.append("[network]")
    lines.append(format_network(spec.network).rstrip("\n"))
    lines.append("[workload]")
    lines.append(format_workload(spec.jobs).rstrip("\n"))
    lines.append("[alloc]")
    lines.append(format_allocations(spec.allocations.values()).rstrip("\n"))
    return "\n".join(lines) + "\n"


def parse_manifest(text, path="<manifest>"):
    header, sections, current = [], {}, None
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if stripped in ("[network]", "[workload]", "[alloc]"):
            current = stripped[1:-1]
            sections[current] = (lineno, [])
            continue
        if current is None:
            header.append((lineno, line))
        else:
            sections[current][1].append(line)
    for name in ("network", "workload", "alloc"):
        if name not in sections:
            raise ConfigError(f"manifest has no [{name}] section", path)

    def body(name):
        start, lines = sections[name]
        return "\n" * start + "\n".join(lines)  # keep file line numbers in diagnostics

    label, until = "run", None
    for lineno, line in header:
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (p.strip() for p in line.partition("="))
        if not sep:
            raise ConfigError(f"expected 'key = value', got {line!r}", path, lineno)
        if key == "label":
            label = value
        elif key == "until":
            try:
                until = None if value == "none" else int(value)
            except ValueError:
                raise ConfigError(f"until must be an integer or 'none', got {value!r}", path, lineno) from None
        else:
            raise ConfigError(f"unknown manifest key {key!r}", path, lineno)
    network = parse_network(body("network"), path)
    jobs = parse_workload(body("workload"), path)
    allocs = parse_allocations(body("alloc"), path)
    return ExperimentSpec(network, jobs, allocs, {}, until, label)


def write_outputs(outcome, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    spec = outcome.spec
    recs = outcome.collector.records()
    rows = []
    for job in sorted(spec.jobs, key=lambda j: j.job_id):
        job_recs = [r for r in recs if r.job_id == job.job_id]
        if job_recs:
            rows.append((job.job_id, summarize(job_recs)))
    cfg = spec.network.engine
    end = outcome.report.final_time
    arrivals = []
    for job in sorted(spec.jobs, key=lambda j: j.job_id):
        for g in range(spec.network.topology.num_groups):
            for s in arrival_rate_series(outcome.arrivals, job.job_id, g, cfg.sample_interval_ns,
                                         cfg.sample_interval_ns, end, spec.network.topology.num_groups):
                arrivals.append((job.job_id, s))
    files = {
        "records.csv": records_csv(recs),
        "summary.csv": summary_csv(rows),
        "arrival_rates.csv": arrival_csv(arrivals),
        "manifest.txt": format_manifest(spec, outcome.report),
    }
    for name, text in files.items():
        with open(os.path.join(out_dir, name), "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return rows


def run_experiment(spec, out_dir, stderr=None):
    """Run ``spec`` and write its outputs into ``out_dir``; returns an exit status."""
    stderr = stderr or sys.stderr
    try:
        outcome = simulate(spec)
    except (ConfigError, AllocationError) as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_PARSE
    except (InvariantError, RoutingError, OrderingError) as exc:
        print(f"invariant violation: {exc}", file=stderr)
        return EXIT_INVARIANT
    write_outputs(outcome, out_dir)
    if outcome.report.undelivered:
        print(
            f"{outcome.report.undelivered} messages undelivered at t={outcome.report.final_time} ns",
            file=stderr,
        )
    return outcome.status


# --- reference scenarios --------------------------------------------------------------

UNDERUTILIZED = "underutilized"
NEAR_SATURATED = "near-saturated"
OVERLOADED = "overloaded"
INTENSITIES = (UNDERUTILIZED, NEAR_SATURATED, OVERLOADED)

# target message intervals (ns) by message size and intensity
TARGET_INTERVALS = {
    4096: (3_000, 1_000, 500),
    524_288: (450_000, 150_000, 100_000),
    4_194_304: (4_000_000, 1_000_000, 700_000),
}
BG_INTERVALS = (1_000, 10_000, 100_000)
BG_LOADS = (50, 90, 130)
BG_EXTENDED_LOADS = (260, 390, 520)
BG_BASE_LOAD = 130  # each extra background process runs the overloaded schedule

CONTIGUOUS = "contiguous"
RANDOM = "random"
RANDOM_ROOT_OUTSIDE = "random-root-outside"
RANDOM_ROOT_INSIDE = "random-root-inside"
PLACEMENTS = (CONTIGUOUS, RANDOM, RANDOM_ROOT_OUTSIDE, RANDOM_ROOT_INSIDE)

TARGET_JOB = 0
BACKGROUND_JOB = 1


@dataclass(frozen=True)
class Profile:
    """Reference scenario scaled onto a topology.

    The target job fills every group from ``target_start_group`` on; the
    background uses ``bg_groups`` with one process per group-pair link.
    Target message sizes are multiplied by ``size_scale`` so the offered
    load per global link matches the full-scale system.
    """

    name: str
    network: NetworkConfig
    bg_groups: tuple = (0, 1, 2)
    target_start_group: int = 3
    bg_interval: int = 10_000
    layout_seed: int = 2022
    msg_counts: tuple = ((4096, 100), (524_288, 10), (4_194_304, 3))
    broadcast_count: int = 10

    @property
    def params(self):
        return self.network.topology

    @property
    def target_nprocs(self):
        p = self.params
        return (p.num_groups - self.target_start_group) * p.terminals_per_group

    @property
    def size_scale(self):
        p, q = self.params, FULL_NETWORK.topology
        return (p.links_per_group_pair * q.terminals_per_group) / (q.links_per_group_pair * p.terminals_per_group)

    @property
    def bg_base_per_group(self):
        return self.params.links_per_group_pair

    def target_size(self, nominal_size):
        return max(1, round(nominal_size * self.size_scale))

    def msg_count(self, nominal_size):
        return dict(self.msg_counts).get(nominal_size, 10)


PROFILES = {
    "mini": Profile("mini", MINI_NETWORK),
    "full": Profile("full", FULL_NETWORK, msg_counts=((4096, 20), (524_288, 3), (4_194_304, 1)),
                     broadcast_count=3),
}


def target_interval(nominal_size, intensity):
    try:
        return TARGET_INTERVALS[nominal_size][INTENSITIES.index(intensity)]
    except (KeyError, ValueError):
        raise ConfigError(f"no target interval for size {nominal_size} at intensity {intensity!r}") from None


def broadcast_interval(profile, size):
    """An interval long enough for one broadcast to drain through the root's terminal link."""
    per = transmit_time(size, profile.params.bw_terminal)
    return 1_000 * math.ceil(2 * (profile.target_nprocs - 1) * per / 1_000)


def background_job(profile, load, duration, seed=0):
    """Background job at ``load`` percent TGLL covering ``duration`` ns.

    Loads up to 130% use one process per group-pair link; higher loads add
    whole copies of that layout, each running the 130% schedule.
    """
    if load <= BG_BASE_LOAD:
        per_link, pct = 1, load
    else:
        if load % BG_BASE_LOAD:
            raise ConfigError(f"background load {load}% above {BG_BASE_LOAD}% must be a multiple of it")
        per_link, pct = load // BG_BASE_LOAD, BG_BASE_LOAD
    size = msg_size_for_tgll(pct / 100, profile.bg_interval, profile.params.bw_global)
    per_group = per_link * profile.bg_base_per_group
    count = max(1, math.ceil(duration / profile.bg_interval))
    groups = tuple(profile.bg_groups)
    return JobSpec(BACKGROUND_JOB, BACKGROUND, per_group * len(groups), size, profile.bg_interval,
                   count, seed, groups)


def max_background_terminals(profile, topology, max_load=max(BG_EXTENDED_LOADS)):
    per_group = (max_load // BG_BASE_LOAD) * profile.bg_base_per_group
    return background_alloc(topology, profile.bg_groups, per_group).terminals


def scenario(profile, pattern, nominal_size, intensity, load, placement, seed=1, topology=None,
             msg_count=None):
    """Jobs and explicit allocations for one cell of the reference grids.

    The random layout excludes the terminals the largest background would
    use, so every cell of a sweep shares one target layout.
    """
    topology = topology or build_topology(profile.params)
    n = profile.target_nprocs
    size = profile.target_size(nominal_size)
    count = msg_count if msg_count is not None else (
        profile.broadcast_count if pattern == BROADCAST else profile.msg_count(nominal_size))

    if placement == CONTIGUOUS:
        alloc = contiguous_alloc(n, topology, profile.target_start_group, TARGET_JOB)
    elif placement in (RANDOM, RANDOM_ROOT_OUTSIDE, RANDOM_ROOT_INSIDE):
        reserved = max_background_terminals(profile, topology)
        alloc = random_alloc(n, topology, profile.layout_seed, reserved, TARGET_JOB)
    else:
        raise ConfigError(f"unknown placement {placement!r}")

    if pattern == BROADCAST:
        if placement == RANDOM_ROOT_INSIDE:
            root = place_broadcast_root(alloc, topology, ROOT_IN_BG, profile.bg_groups)
        elif placement == RANDOM_ROOT_OUTSIDE:
            root = place_broadcast_root(alloc, topology, ROOT_OUTSIDE_BG, profile.bg_groups)
        else:
            root = 0
        interval = broadcast_interval(profile, size)
        args = (root,)
    else:
        if placement not in (CONTIGUOUS, RANDOM):
            raise ConfigError(f"placement {placement!r} applies to broadcast only")
        interval = target_interval(nominal_size, intensity)
        if pattern == STENCIL3D:
            args = default_stencil_dims(n)
        elif pattern == TORNADO:
            args = (profile.params.terminals_per_group,)
        elif pattern == UNIFORM_RANDOM:
            args = ()
        else:
            raise ConfigError(f"unknown target pattern {pattern!r}")
    target = JobSpec(TARGET_JOB, pattern, n, size, interval, count, seed, args)
    jobs, allocs = [target], {TARGET_JOB: alloc}
    if load:
        duration = 2 * count * interval
        bg = background_job(profile, load, duration, seed + 1)
        jobs.append(bg)
        allocs[BACKGROUND_JOB] = background_alloc(topology, bg.args, bg.bg_per_group, BACKGROUND_JOB)
    return jobs, allocs


def scenario_spec(profile, pattern, nominal_size, intensity, load, placement, seed=1, topology=None,
                  msg_count=None, label=None, backend=None):
    jobs, allocs = scenario(profile, pattern, nominal_size, intensity, load, placement, seed, topology,
                            msg_count)
    label = label or cell_label(pattern, nominal_size, intensity, load, placement)
    return ExperimentSpec(profile.network, jobs, allocs, {}, None, label, backend)


def cell_label(pattern, nominal_size, intensity, load, placement):
    parts = [pattern, f"s{nominal_size}"]
    if pattern != BROADCAST:
        parts.append(intensity)
    parts += [f"bg{load}", placement]
    return "_".join(parts)


# --- sweeps -------------------------------------------------------------------------

SWEEP_KEYS = ("profile", "pattern", "sizes", "intensities", "loads", "placements", "seed",
              "msg_count", "workers", "backend")


@dataclass(frozen=True)
class SweepSpec:
    profile: Profile
    pattern: str
    sizes: tuple
    intensities: tuple
    loads: tuple
    placements: tuple
    seed: int = 1
    msg_count: int | None = None
    workers: int = 1
    backend: str | None = None

    def cells(self):
        intensities = (None,) if self.pattern == BROADCAST else self.intensities
        if self.pattern == BROADCAST and not self.intensities:
            intensities = ()
        return [
            (size, intensity, load, placement)
            for size, intensity, load, placement in itertools.product(
                self.sizes, intensities, self.loads, self.placements)
        ]


def parse_sweep(text, path="<sweep>"):
    """Parse a sweep grid: ``key = value`` lines, list values space-separated.

    For broadcast the ``intensities`` axis is ignored unless it is empty.
    """
    values, where = {}, {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (p.strip() for p in line.partition("="))
        if not sep:
            raise ConfigError(f"expected 'key = value', got {line!r}", path, lineno)
        if key not in SWEEP_KEYS:
            raise ConfigError(f"unknown sweep key {key!r}", path, lineno)
        if key in values:
            raise ConfigError(f"duplicate sweep key {key!r}", path, lineno)
        values[key], where[key] = value, lineno

    def ints(key, default):
        if key not in values:
            return default
        try:
            return tuple(int(v) for v in values[key].split())
        except ValueError:
            raise ConfigError(f"{key} must list integers", path, where[key]) from None

    def words(key, default, allowed):
        if key not in values:
            return default
        out = tuple(values[key].split())
        bad = [w for w in out if w not in allowed]
        if bad:
            raise ConfigError(f"{key}: unknown value {bad[0]!r}", path, where[key])
        return out

    name = values.get("profile", "mini")
    if name not in PROFILES:
        raise ConfigError(f"unknown profile {name!r}; expected one of {', '.join(PROFILES)}",
                          path, where.get("profile"))
    pattern = values.get("pattern", UNIFORM_RANDOM)
    if pattern not in (UNIFORM_RANDOM, STENCIL3D, TORNADO, BROADCAST):
        raise ConfigError(f"unknown target pattern {pattern!r}", path, where.get("pattern"))
    sizes = ints("sizes", (min(TARGET_INTERVALS),) if pattern == BROADCAST else tuple(TARGET_INTERVALS))
    for s in sizes:
        if s not in TARGET_INTERVALS:
            raise ConfigError(f"size {s} is not one of {sorted(TARGET_INTERVALS)}", path, where["sizes"])
    default_loads = (0,) + (BG_LOADS[-1:] + BG_EXTENDED_LOADS if pattern == BROADCAST else BG_LOADS)
    loads = ints("loads", default_loads)
    for load in loads:
        if load < 0 or (load > BG_BASE_LOAD and load % BG_BASE_LOAD):
            raise ConfigError(f"bad background load {load}", path, where["loads"])
    default_pl = (CONTIGUOUS, RANDOM_ROOT_OUTSIDE, RANDOM_ROOT_INSIDE) if pattern == BROADCAST else (CONTIGUOUS, RANDOM)
    placements = words("placements", default_pl, PLACEMENTS)
    intensities = words("intensities", INTENSITIES, INTENSITIES)
    (seed,) = ints("seed", (1,))
    msg_count = ints("msg_count", (None,))[0]
    (workers,) = ints("workers", (1,))
    backend = values.get("backend")
    return SweepSpec(PROFILES[name], pattern, sizes, intensities, loads, placements, seed, msg_count,
                     max(1, workers), backend)


SWEEP_HEADER = "cell,pattern,msg_size_bytes,interval_ns,bg_load_pct,placement,status," + SUMMARY_HEADER


def _run_cell(args):
    sweep, cell, out_root = args
    size, intensity, load, placement = cell
    label = cell_label(sweep.pattern, size, intensity, load, placement)
    try:
        spec = scenario_spec(sweep.profile, sweep.pattern, size, intensity, load, placement, sweep.seed,
                             msg_count=sweep.msg_count, label=label, backend=sweep.backend)
    except DfpsimError as exc:
        return label, None, EXIT_PARSE, [], str(exc)
    out_dir = os.path.join(out_root, label)
    try:
        outcome = simulate(spec)
    except (ConfigError, AllocationError) as exc:
        return label, spec, EXIT_PARSE, [], str(exc)
    except (InvariantError, RoutingError, OrderingError) as exc:
        return label, spec, EXIT_INVARIANT, [], str(exc)
    rows = write_outputs(outcome, out_dir)
    return label, spec, outcome.status, rows, ""


def run_sweep(sweep, out_root, stderr=None):
    """Run every cell; returns the worst exit status (0 when all cells pass)."""
    stderr = stderr or sys.stderr
    os.makedirs(out_root, exist_ok=True)
    cells = sweep.cells()
    tasks = [(sweep, cell, out_root) for cell in cells]
    if sweep.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=sweep.workers) as pool:
            results = list(pool.map(_run_cell, tasks))
    else:
        results = [_run_cell(t) for t in tasks]
    lines = [SWEEP_HEADER]
    worst = EXIT_OK
    for (size, intensity, load, placement), (label, spec, status, rows, err) in zip(cells, results):
        if status:
            worst = max(worst, status)
            print(f"cell {label} failed with status {status}: {err}", file=stderr)
        interval = ""
        if spec is not None:
            interval = str(spec.jobs[0].interval)
        head = f"{label},{sweep.pattern},{size},{interval},{load},{placement},{status}"
        if rows:
            for job_id, stats in rows:
                lines.append(head + "," + ",".join(str(v) for v in summary_row(job_id, stats)))
        else:
            lines.append(head + "," * (SUMMARY_HEADER.count(",") + 1))
    with open(os.path.join(out_root, "sweep_summary.csv"), "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
    return worst
