"""Time the pure-Python and compiled engines on the same mini workload.

    python benchmarks/bench_engine.py [--count N] [--repeat R]
"""

import argparse
import time

from dfpsim.experiment import PROFILES, OVERLOADED, UNIFORM_RANDOM, scenario
from dfpsim.simcore import BACKENDS
from dfpsim.topology import build_topology
from dfpsim.workload import build_engine_plan, resolve_seeds


def run(cls, topo, plan, net):
    t0 = time.perf_counter()
    eng = cls(topo, plan, net.engine, net.routing)
    report = eng.run_until()
    return time.perf_counter() - t0, report, eng.result()


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--count", type=int, default=40, help="target iterations")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    prof = PROFILES["mini"]
    topo = build_topology(prof.params)
    jobs, allocs = scenario(prof, UNIFORM_RANDOM, 4096, OVERLOADED, 130, "random", topology=topo,
                            msg_count=args.count)
    plan, _ = build_engine_plan(resolve_seeds(jobs), allocs)
    print(f"{plan.num_messages} messages, backends: {', '.join(BACKENDS)}")

    best, outputs = {}, {}
    for name, cls in BACKENDS.items():
        times = []
        for _ in range(args.repeat):
            elapsed, report, result = run(cls, topo, plan, prof.network)
            times.append(elapsed)
        best[name] = min(times)
        outputs[name] = (report.events, result.delivery_time)
        print(f"{name:9s} {best[name]:8.3f} s  {report.events / best[name]:12,.0f} events/s")
    if len(best) == 2:
        same = outputs["python"] == outputs["compiled"]
        print(f"speedup {best['python'] / best['compiled']:.1f}x, identical results: {same}")


if __name__ == "__main__":
    main()
