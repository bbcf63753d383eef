"""``speccep`` command line.

Exit codes: 0 ok, 2 output mismatch against the sequential oracle, 3 bad
configuration or input.
"""

from __future__ import annotations

import argparse
import sys

from .bench import RunConfig, VerificationError, run_benchmark, write_output_csv
from .events import StreamFormatError
from .oracle import run_sequential
from .query import QUERY_KINDS, QueryConfigError

EXIT_OK = 0
EXIT_MISMATCH = 2
EXIT_CONFIG = 3


class ConfigError(ValueError):
    pass


def _pairs(text: str, what: str) -> dict:
    out = {}
    for part in text.split(","):
        if not part:
            continue
        key, sep, value = part.partition("=")
        if not sep or not key:
            raise ConfigError(f"{what}: expected key=value, got {part!r}")
        out[key.strip()] = value.strip()
    return out


def parse_generate(text: str) -> dict:
    raw = _pairs(text, "--generate")
    unknown = set(raw) - {"n", "symbols", "seed"}
    if unknown or "n" not in raw:
        raise ConfigError("--generate takes n=<N>[,symbols=<K>][,seed=<S>]")
    try:
        return {k: int(v) for k, v in raw.items()}
    except ValueError:
        raise ConfigError("--generate values must be integers") from None


def parse_params(items) -> dict:
    params = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"--param: expected k=v, got {item!r}")
        params[key] = value
    return params


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="speccep",
                                description="Speculative window-parallel pattern detection.")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", metavar="PATH", help="CSV stream (symbol,open,close)")
    src.add_argument("--generate", metavar="SPEC", help="n=<N>,symbols=<K>,seed=<S>")

    q = p.add_argument_group("query")
    q.add_argument("--query", choices=QUERY_KINDS, default="q1")
    q.add_argument("--param", action="append", metavar="K=V", help="query parameter (repeatable)")
    q.add_argument("--ws", type=int, help="window size (events)")
    q.add_argument("--slide", type=int, help="slide for count windows")
    q.add_argument("--max-cg-per-version", type=int, default=1, dest="max_cg",
                   help="open partial matches tracked per window version")

    r = p.add_argument_group("runtime")
    r.add_argument("--instances", "-k", type=int, default=1)
    r.add_argument("--batch", type=int, default=64, help="events ingested per splitter cycle")
    r.add_argument("--check-freq", type=int, default=16)
    r.add_argument("--executor", choices=("threaded", "stepped"), default="threaded")
    r.add_argument("--seed", type=int, help="interleaving seed for the stepped executor")
    r.add_argument("--delay-prob", type=float, default=0.0,
                   help="stepped executor: chance of withholding a partial-match update")
    r.add_argument("--pure", action="store_true", help="use the interpreted detection kernels")

    m = p.add_argument_group("prediction")
    m.add_argument("--alpha", type=float, default=0.7)
    m.add_argument("--ell", type=int, default=10)
    m.add_argument("--rho", type=int, default=100)
    m.add_argument("--fixed-probability", type=float, metavar="P")

    o = p.add_argument_group("output")
    o.add_argument("--output", metavar="PATH", help="confirmed complex events as CSV")
    o.add_argument("--metrics", metavar="PATH", help="metrics CSV")
    o.add_argument("--repeat", type=int, default=10)
    o.add_argument("--warmup", type=float, default=0.1)
    o.add_argument("--no-verify", action="store_true", help="skip the oracle comparison")
    o.add_argument("--oracle", action="store_true", help="run only the sequential oracle")
    o.add_argument("--trace-schedule", action="store_true",
                   help="print the instance assignment whenever it changes")
    o.add_argument("--dump-tree", metavar="PATH",
                   help="write the largest dependency tree seen during the last run")
    return p


def config_from_args(args) -> RunConfig:
    return RunConfig(
        query=args.query,
        params=parse_params(args.param),
        input=args.input,
        generate=parse_generate(args.generate) if args.generate else None,
        instances=args.instances,
        ws=args.ws,
        slide=args.slide,
        alpha=args.alpha,
        ell=args.ell,
        rho=args.rho,
        check_freq=args.check_freq,
        batch=args.batch,
        max_cg=args.max_cg,
        fixed_probability=args.fixed_probability,
        seed=args.seed,
        executor=args.executor,
        delay_prob=args.delay_prob,
        repeat=args.repeat,
        verify=not args.no_verify,
        warmup=args.warmup,
        compiled=False if args.pure else None,
        output=args.output,
        metrics=args.metrics,
    )


class _TreeSnapshot:
    """Keeps a dump of the largest tree seen."""

    def __init__(self):
        self.size = -1
        self.text = ""

    def attach(self, engine):
        self.size = -1

        def hook(eng):
            n = len(eng.tree)
            if n > self.size:
                self.size = n
                self.text = eng.tree.dump(eng.prob)

        engine.on_cycle = hook


def _trace(out):
    def hook(cycle, assignment):
        parts = [f"{i}:{'-' if v is None else v}" for i, v in sorted(assignment.by_instance.items())]
        print(f"cycle {cycle} " + " ".join(parts), file=out)
    return hook


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
        pattern = cfg.pattern()
        if cfg.instances < 1 or cfg.repeat < 1:
            raise ConfigError("instances and repeat must be positive")
        cfg.engine_config().validate()
        stream = cfg.load_stream()
        pattern.bind(stream)
    except (ConfigError, QueryConfigError, StreamFormatError, ValueError, OSError) as exc:
        print(f"speccep: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.oracle:
        res = run_sequential(stream, pattern, cfg.compiled)
        if cfg.output:
            write_output_csv(res.output, cfg.output)
        print(f"oracle: {len(res.output)} complex events, {res.windows} windows, "
              f"completion {res.gt_completion_prob:.4f}")
        return EXIT_OK

    snap = _TreeSnapshot() if args.dump_tree else None

    def on_engine(engine):
        if args.trace_schedule:
            engine.trace = _trace(sys.stdout)
        if snap is not None:
            snap.attach(engine)

    try:
        result = run_benchmark(cfg, stream, on_engine)
    except VerificationError as exc:
        print(f"speccep: run {exc.run} differs from the oracle\n{exc.report}", file=sys.stderr)
        return EXIT_MISMATCH
    finally:
        if snap is not None:
            with open(args.dump_tree, "w", encoding="utf-8") as fh:
                fh.write(snap.text)

    tp = result.percentiles("throughput_eps")
    print(f"{cfg.query} k={cfg.instances} runs={len(result.runs)} "
          f"output={len(result.output)} verified={cfg.verify} "
          f"gt={result.gt_completion_prob:.4f}")
    print("throughput eps  " + "  ".join(f"p{p}={v:,.0f}" for p, v in tp.items()))
    print(f"cycles/s median {result.median('cycles_per_s'):,.0f}  "
          f"max versions median {result.median('max_tree_versions'):.0f}  "
          f"rollbacks median {result.median('rollbacks'):.0f}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
