"""Compiled vs interpreted detection kernels.

Times the sequential oracle (pure detector work) and a k=1 engine run for each
query with both kernel sets, checks that they agree, and prints a table.

    python3 benchmarks/bench_kernels.py --events 100000 --repeat 3
"""

import argparse
import statistics
import time

from speccep import kernels
from speccep.events import generate_random_stream
from speccep.oracle import run_sequential
from speccep.query import build_query
from speccep.runtime import Engine, EngineConfig, run_stepped

QUERIES = {
    "qe": dict(kind="qe", ws=500),
    "q1": dict(kind="q1", ws=2000, q=20),
    "q2": dict(kind="q2", ws=1000, slide=250, lower=98, upper=102),
    "q3": dict(kind="q3", ws=1000, slide=100, n=5),
}


def best_of(fn, repeat):
    times = []
    res = None
    for _ in range(repeat):
        t = time.perf_counter()
        res = fn()
        times.append(time.perf_counter() - t)
    return res, min(times), statistics.median(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--events", type=int, default=100_000)
    ap.add_argument("--symbols", type=int, default=300)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--queries", default="qe,q1,q2,q3")
    args = ap.parse_args(argv)

    if not kernels.COMPILED:
        print("compiled kernels unavailable; build the extension first (pip install -e .)")
        return 1
    stream = generate_random_stream(args.events, args.symbols, args.seed)
    print(f"{args.events} events, {args.symbols} symbols, best of {args.repeat}")
    print(f"{'query':6} {'stage':7} {'pure s':>9} {'compiled s':>11} {'speedup':>8}")
    for name in args.queries.split(","):
        spec = dict(QUERIES[name])
        pattern = build_query(spec.pop("kind"), **spec)
        timings = {}
        outputs = {}
        for compiled in (False, True):
            res, best, _ = best_of(lambda: run_sequential(stream, pattern, compiled), args.repeat)
            outputs[("oracle", compiled)] = res.output
            timings[("oracle", compiled)] = best

            def engine_run():
                e = Engine(stream, pattern, EngineConfig(instances=1, compiled=compiled))
                run_stepped(e)
                return e.output

            out, best, _ = best_of(engine_run, args.repeat)
            outputs[("engine", compiled)] = out
            timings[("engine", compiled)] = best
        ref = outputs[("oracle", False)]
        if any(o != ref for o in outputs.values()):
            raise SystemExit(f"{name}: kernel outputs disagree")
        for stage in ("oracle", "engine"):
            p, c = timings[(stage, False)], timings[(stage, True)]
            print(f"{name:6} {stage:7} {p:9.3f} {c:11.3f} {p / c:7.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
