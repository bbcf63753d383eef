"""Benchmark orchestration: load a stream, run the engine r times, verify, report."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .events import EventStream, generate_random_stream, read_stream_csv
from .oracle import run_sequential
from .query import PatternDefinition, build_query
from .runtime import Engine, EngineConfig, run_stepped, run_threaded

METRICS_HEADER = ("run", "k", "throughput_eps", "cycles_per_s", "max_tree_versions",
                  "rollbacks", "dropped_versions", "gt_completion_prob")
PERCENTILES = (0, 25, 50, 75, 100)


class VerificationError(RuntimeError):
    """Runtime output differs from the sequential oracle."""

    def __init__(self, report: str, run: int):
        super().__init__(report)
        self.report = report
        self.run = run


@dataclass
class RunConfig:
    """Everything needed to reproduce a benchmark run (given the same input file)."""

    query: str = "q1"
    params: dict = field(default_factory=dict)
    input: str | None = None
    generate: dict | None = None
    instances: int = 1
    ws: int | None = None
    slide: int | None = None
    alpha: float = 0.7
    ell: int = 10
    rho: int = 100
    check_freq: int = 16
    batch: int = 64
    max_cg: int = 1
    fixed_probability: float | None = None
    seed: int | None = None
    executor: str = "threaded"
    delay_prob: float = 0.0
    repeat: int = 10
    verify: bool = True
    warmup: float = 0.1
    compiled: bool | None = None
    output: str | None = None
    metrics: str | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        raw = json.loads(text)
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in raw.items() if k in known})

    def pattern(self) -> PatternDefinition:
        return build_query(self.query, ws=self.ws, slide=self.slide, max_cg=self.max_cg,
                           **self.params)

    def engine_config(self) -> EngineConfig:
        return EngineConfig(instances=self.instances, batch=self.batch,
                            check_freq=self.check_freq, alpha=self.alpha, ell=self.ell,
                            rho=self.rho, fixed_probability=self.fixed_probability,
                            compiled=self.compiled, warmup=self.warmup)

    def load_stream(self) -> EventStream:
        if (self.input is None) == (self.generate is None):
            raise ValueError("exactly one of input and generate is required")
        if self.input is not None:
            return read_stream_csv(self.input)
        g = self.generate
        return generate_random_stream(int(g["n"]), int(g.get("symbols", 3000)),
                                      int(g.get("seed", 0)))


@dataclass
class Metrics:
    run: int
    k: int
    throughput_eps: float
    cycles_per_s: float
    max_tree_versions: int
    rollbacks: int
    dropped_versions: int
    gt_completion_prob: float
    elapsed: float = 0.0
    splitter_cpu_s: float = 0.0

    def row(self):
        return [getattr(self, name) for name in METRICS_HEADER]


@dataclass
class BenchmarkResult:
    config: RunConfig
    runs: list
    output: list
    oracle_output: list | None
    gt_completion_prob: float

    def percentiles(self, name: str) -> dict:
        values = np.array([getattr(m, name) for m in self.runs], dtype=float)
        return {p: float(np.percentile(values, p)) for p in PERCENTILES}

    def median(self, name: str) -> float:
        return self.percentiles(name)[50]


def diff_report(expected: list, got: list, limit: int = 10) -> str:
    """Human-readable description of how two outputs differ."""
    lines = [f"expected {len(expected)} complex events, got {len(got)}"]
    for i, (a, b) in enumerate(zip(expected, got)):
        if a != b:
            lines.append(f"first difference at position {i}: expected {a.key()} got {b.key()}")
            break
    exp, out = {e.key() for e in expected}, {e.key() for e in got}
    missing = sorted(exp - out)[:limit]
    extra = sorted(out - exp)[:limit]
    if missing:
        lines.append("missing: " + ", ".join(map(str, missing)))
    if extra:
        lines.append("unexpected: " + ", ".join(map(str, extra)))
    return "\n".join(lines)


def write_output_csv(output: list, path) -> None:
    """One complex event per row: query id, window id, space-separated constituent seqs."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["query", "window", "events"])
        for ce in output:
            w.writerow([ce.query_id, ce.window_id, " ".join(map(str, ce.constituents))])


def write_metrics_csv(result: BenchmarkResult, path) -> None:
    """Per-run rows followed by one row per percentile (``run`` = ``p0`` .. ``p100``)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(METRICS_HEADER)
        for m in result.runs:
            w.writerow(m.row())
        cols = METRICS_HEADER[2:]
        pct = {c: result.percentiles(c) for c in cols}
        for p in PERCENTILES:
            w.writerow([f"p{p}", result.config.instances] + [pct[c][p] for c in cols])


def run_once(stream, pattern, config: RunConfig, on_engine=None):
    engine = Engine(stream, pattern, config.engine_config())
    if on_engine is not None:
        on_engine(engine)
    if config.executor == "threaded":
        stats = run_threaded(engine)
    elif config.executor == "stepped":
        stats = run_stepped(engine, seed=config.seed, delay_prob=config.delay_prob)
    else:
        raise ValueError(f"unknown executor {config.executor!r}")
    return engine, stats


def run_benchmark(config: RunConfig, stream: EventStream | None = None,
                  on_engine=None) -> BenchmarkResult:
    """Run the engine ``config.repeat`` times, verifying every run against the oracle.

    Raises `VerificationError` on the first mismatching run.  Stream loading
    and the oracle run are not part of the timed section.
    """
    if config.repeat < 1:
        raise ValueError("repeat must be at least 1")
    pattern = config.pattern()
    if stream is None:
        stream = config.load_stream()
    oracle = run_sequential(stream, pattern, config.compiled)
    gt = oracle.gt_completion_prob
    runs = []
    output = None
    for r in range(config.repeat):
        engine, st = run_once(stream, pattern, config, on_engine)
        if config.verify and engine.output != oracle.output:
            raise VerificationError(diff_report(oracle.output, engine.output), r)
        output = engine.output
        runs.append(Metrics(r, config.instances, st.throughput_eps, st.cycles_per_s,
                            st.max_tree_versions, st.rollbacks, st.dropped_versions, gt,
                            st.elapsed, st.splitter_cpu_s))
    result = BenchmarkResult(config, runs, output, oracle.output if config.verify else None, gt)
    if config.output:
        write_output_csv(output, config.output)
    if config.metrics:
        write_metrics_csv(result, config.metrics)
    return result


def measure_ground_truth(stream, pattern) -> float:
    """Completed-to-created ratio of consumption groups under sequential processing."""
    return run_sequential(stream, pattern).gt_completion_prob


def sweep(config: RunConfig, ks=(1, 2, 4, 8), stream=None) -> dict:
    """Median-oriented k sweep sharing one stream; returns ``{k: BenchmarkResult}``."""
    if stream is None:
        stream = config.load_stream()
    out = {}
    for k in ks:
        cfg = RunConfig(**{**asdict(config), "instances": k, "output": None, "metrics": None})
        out[k] = run_benchmark(cfg, stream)
    return out

