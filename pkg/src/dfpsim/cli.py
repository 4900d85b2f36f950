"""``dfpsim`` command line."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .config import load_network
from .errors import ConfigError
from .experiment import (
    EXIT_PARSE,
    PROFILES,
    ExperimentSpec,
    parse_manifest,
    parse_sweep,
    run_experiment,
    run_sweep,
)
from .placement import load_allocations
from .routing import FPAR, MINIMAL_ONLY
from .simcore import BACKENDS
from .workload import load_workload


def build_parser():
    p = argparse.ArgumentParser(
        prog="dfpsim",
        description="Deterministic discrete-event Dragonfly+ network simulator.",
    )
    p.add_argument("--network", metavar="FILE",
                   help=f"network config file, or a built-in profile: {', '.join(PROFILES)}")
    p.add_argument("--workload", metavar="FILE", help="workload file, one job per line")
    p.add_argument("--alloc", metavar="FILE", help="allocation file: 'job_id t0 t1 ...' per line")
    p.add_argument("--place", metavar="JOB=DIRECTIVE", action="append", default=[],
                   help="placement for one job: JOB=contiguous@GROUP or JOB=random@SEED (repeatable)")
    p.add_argument("--routing", choices=(FPAR, MINIMAL_ONLY), help="override the routing mode")
    p.add_argument("--threshold", type=float, metavar="T", help="override the FPAR threshold")
    p.add_argument("--until", type=int, metavar="NS", help="stop the simulation at this time")
    p.add_argument("--out", metavar="DIR", default="dfpsim-out", help="output directory")
    p.add_argument("--sweep", metavar="FILE", help="run every cell of a sweep grid file")
    p.add_argument("--manifest", metavar="FILE", help="replay a run from its manifest.txt")
    p.add_argument("--label", default="run", help="run label recorded in the manifest")
    p.add_argument("--backend", choices=sorted(BACKENDS), help="engine backend (default: fastest available)")
    return p


def _read(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read file: {exc.strerror}", path) from None


def _spec_from_args(args):
    if args.manifest:
        spec = parse_manifest(_read(args.manifest), args.manifest)
        if args.backend:
            spec = replace(spec, backend=args.backend)
        return spec
    if not args.network or not args.workload:
        raise ConfigError("--network and --workload are required (or use --sweep / --manifest)")
    if args.network in PROFILES:
        network = PROFILES[args.network].network
    else:
        network = load_network(args.network)
    routing = network.routing
    if args.routing is not None:
        routing = replace(routing, mode=args.routing)
    if args.threshold is not None:
        routing = replace(routing, threshold_T=args.threshold)
    network = replace(network, routing=routing)
    jobs = load_workload(args.workload)
    allocs = load_allocations(args.alloc) if args.alloc else {}
    placements = {}
    for item in args.place:
        job, sep, directive = item.partition("=")
        try:
            job_id = int(job)
        except ValueError:
            raise ConfigError(f"--place expects JOB=DIRECTIVE, got {item!r}") from None
        if not sep:
            raise ConfigError(f"--place expects JOB=DIRECTIVE, got {item!r}")
        if job_id in placements:
            raise ConfigError(f"--place given twice for job {job_id}")
        placements[job_id] = directive
    return ExperimentSpec(network, jobs, allocs, placements, args.until, args.label, args.backend)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.sweep:
            sweep = parse_sweep(_read(args.sweep), args.sweep)
            if args.backend:
                sweep = replace(sweep, backend=args.backend)
            return run_sweep(sweep, args.out)
        spec = _spec_from_args(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    return run_experiment(spec, args.out)


if __name__ == "__main__":
    sys.exit(main())
