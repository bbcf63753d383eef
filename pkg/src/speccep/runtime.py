"""Speculative window-parallel execution.

The `Engine` is the splitter: every `Engine.cycle` ingests a batch of events,
opens and closes windows, applies the structural feedback reported by
operator instances to the dependency tree, confirms finished root versions
(emitting their complex events in window order), refreshes the completion
predictor and reassigns the top-k versions to the instances.

An `Instance` processes the version it is assigned in chunks.  Partial-match
changes are written straight into the shared consumption groups; creation,
completion and abandonment of a group, and rollbacks, are queued on the
version (``wv.pending``) for the splitter.  Every ``check_freq`` events an
instance checks that it has not processed an event that a suppressed group has
since claimed, and rolls the version back if it has.

Locking: each version has its own lock.  Instances only ever hold one lock.
The splitter takes locks top-down (an ancestor before its descendants) when it
duplicates a subtree, and applies a version's queued feedback before copying
it, so copies never miss feedback.

Two executors drive the engine: `run_threaded` (one thread per instance plus
the splitter in the calling thread) and `run_stepped`, a single-threaded
interleaving that is deterministic for a given seed and can delay the
publication of partial-match updates to provoke rollbacks.
"""

from __future__ import annotations

import random
import threading
import time
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .kernels import ABANDON, ADD, COMPLETE, CREATE
from .prediction import FixedPredictor, MarkovPredictor
from .query import ComplexEvent, PatternDefinition
from .scheduler import find_top_k_versions, schedule
from .splitter import SplitterStats, Window
from .tree import OPEN, ConsumptionGroup, DependencyTree

REC_CREATED = 0
REC_COMPLETED = 1
REC_ABANDONED = 2
REC_ROLLBACK = 3


class EngineStalled(RuntimeError):
    pass


@dataclass
class EngineConfig:
    instances: int = 1
    batch: int = 64
    check_freq: int = 16
    alpha: float = 0.7
    ell: int = 10
    rho: int = 100
    fixed_probability: float | None = None
    lookahead: int | None = None
    refresh_cycles: int = 16
    compiled: bool | None = None
    warmup: float = 0.1

    def validate(self):
        if self.instances < 1:
            raise ValueError("at least one instance is required")
        if self.batch < 1 or self.check_freq < 1 or self.refresh_cycles < 1:
            raise ValueError("batch, check_freq and refresh_cycles must be positive")
        if self.fixed_probability is not None and not 0.0 <= self.fixed_probability <= 1.0:
            raise ValueError("fixed probability must be in [0, 1]")
        if not 0.0 <= self.warmup < 1.0:
            raise ValueError("warmup must be in [0, 1)")


@dataclass
class RunStats:
    events: int = 0
    elapsed: float = 0.0
    throughput_eps: float = 0.0
    cycles: int = 0
    cycles_per_s: float = 0.0
    splitter_cpu_s: float = 0.0
    max_tree_versions: int = 0
    rollbacks: int = 0
    dropped_versions: int = 0
    processed_events: int = 0
    created_groups: int = 0
    completed_groups: int = 0
    windows: int = 0


class _WindowSource:
    """Bulk window opening/closing from precomputed start positions."""

    def __init__(self, starts, ws):
        self.starts = starts
        self.ws = ws
        self.i = 0
        self.open: deque = deque()
        self.next_seq = 0

    def advance_to(self, stop):
        actions = []
        starts, ws, opn = self.starts, self.ws, self.open
        while True:
            o = int(starts[self.i]) if self.i < len(starts) and starts[self.i] < stop else None
            c = opn[0].end - 1 if opn and opn[0].end <= stop else None
            if o is None and c is None:
                break
            if c is None or (o is not None and o <= c):
                w = Window(self.i, o, o + ws)
                self.i += 1
                opn.append(w)
                actions.append(("open", w))
            else:
                w = opn.popleft()
                w.closed = True
                actions.append(("close", w))
        self.next_seq = stop
        return actions

    def finish(self):
        actions = []
        while self.open:
            w = self.open.popleft()
            w.end = min(w.end, self.next_seq)
            w.closed = True
            actions.append(("close", w))
        return actions


class Instance:
    """An operator instance working on whatever version the splitter assigns."""

    def __init__(self, iid, engine):
        self.id = iid
        self.engine = engine
        self.scheduled = None
        self.current = None
        self.since_check = 0
        self.processed = 0
        self.rollbacks = 0
        self.counts = np.zeros((engine.d, engine.d), dtype=np.int64)
        # adversarial interleaving: probability of withholding a partial-match update
        self.rng = None
        self.delay_prob = 0.0

    def step(self) -> bool:
        """Process one chunk of the assigned version; False when there was nothing to do."""
        wv = self.scheduled
        if wv is None:
            self.current = None
            return False
        if wv is not self.current:
            self.current = wv
            self.since_check = 0
        eng = self.engine
        with wv.lock:
            if not wv.alive or wv.finished:
                return False
            if wv.det is None:
                eng.init_version(wv)
            win = wv.window
            limit = min(win.end, eng.available) - win.start
            pos = wv.pos
            did = False
            if pos < limit:
                freq = eng.check_freq
                if eng.needs_check(wv):
                    stop = min(limit, pos + freq - self.since_check)
                else:
                    stop = limit
                rec = self.counts if wv.is_root and eng.learn else None
                new, fb = wv.det.run(eng.sym, eng.opn, eng.cls, wv.mask, wv.used,
                                     win.start, pos, stop, rec)
                wv.pos = new
                self.processed += new - pos
                self.since_check += new - pos
                if fb:
                    self._handle(wv, fb)
                if rec is not None and rec.any():
                    eng.stat_queue.append(rec.copy())
                    rec[:] = 0
                if wv.unpublished and self.rng is not None and self.rng.random() < 0.3:
                    _publish(wv)
                if self.since_check >= freq:
                    self.since_check = 0
                    if eng.check(wv):
                        self._rollback(wv)
                        return True
                did = True
            if wv.pos >= win.end - win.start and win.closed:
                _publish(wv)
                if eng.check(wv):
                    self._rollback(wv)
                    return True
                fb = wv.det.finish()
                if fb:
                    self._handle(wv, fb)
                wv.finished = True
                did = True
            return did

    def _handle(self, wv, fb):
        eng = self.engine
        slots = wv.slots
        consumes = eng.consumes
        tracked = eng.tracked
        delay = self.delay_prob if self.rng is not None else 0.0
        for kind, slot, seq, delta in fb:
            if kind == ADD:
                cg = slots[slot]
                cg.constituents.append(seq)
                cg.delta = delta
                if consumes(seq):
                    if delay and self.rng.random() < delay:
                        wv.unpublished.append((cg, seq))
                        continue
                    cg.events.append(seq)
                cg.version += 1
            elif kind == CREATE:
                cg = ConsumptionGroup(eng.tree.new_cg_id(), wv, delta,
                                      [seq] if consumes(seq) else (), [seq])
                slots[slot] = cg
                wv.owned.append(cg)
                if tracked:
                    eng.enqueue(wv, (REC_CREATED, cg))
            elif kind == COMPLETE:
                cg = slots[slot]
                slots[slot] = None
                if wv.unpublished:
                    _publish(wv)
                cg.delta = 0
                wv.buffer.append(ComplexEvent(eng.query_id, wv.window.id,
                                              tuple(cg.constituents), wv.id))
                if tracked:
                    eng.enqueue(wv, (REC_COMPLETED, cg))
            else:
                cg = slots[slot]
                slots[slot] = None
                if wv.unpublished:
                    _publish(wv)
                if tracked:
                    eng.enqueue(wv, (REC_ABANDONED, cg))

    def _rollback(self, wv):
        old = list(wv.owned)
        self.engine.reset_version(wv)
        wv.pending.clear()
        self.engine.enqueue(wv, (REC_ROLLBACK, old))
        self.rollbacks += 1
        self.since_check = 0


def _publish(wv):
    for cg, seq in wv.unpublished:
        cg.events.append(seq)
        cg.version += 1
    wv.unpublished.clear()


class Engine:
    """Splitter, dependency tree and operator instances for one query over one stream."""

    def __init__(self, stream, pattern: PatternDefinition, config: EngineConfig | None = None,
                 trace=None):
        cfg = config or EngineConfig()
        cfg.validate()
        self.cfg = cfg
        self.pattern = pattern
        self.stream = stream
        self.bound = pattern.bind(stream)
        self.query_id = pattern.query_id
        self.compiled = kernels.COMPILED if cfg.compiled is None else cfg.compiled
        self.sym, self.opn, self.cls = self.bound.columns(self.compiled)
        self.n = len(stream)
        self.k = cfg.instances
        self.check_freq = cfg.check_freq
        self.batch = cfg.batch
        self.lookahead = max(cfg.lookahead or pattern.ws, pattern.ws)
        self.tracked = self.bound.tracks_consumption
        policy = pattern.consumption
        if policy == "all":
            self.consumes = _always
        elif policy == "none":
            self.consumes = _never
        else:
            b = self.bound.consume_b
            sym_list = stream.as_lists()[0]
            self.consumes = lambda seq: sym_list[seq] == b
        self.d = pattern.delta_max + 1
        if cfg.fixed_probability is not None:
            self.predictor = FixedPredictor(cfg.fixed_probability)
            self.learn = False
        else:
            self.predictor = MarkovPredictor(pattern.delta_max, cfg.alpha, cfg.ell, cfg.rho,
                                             horizon=pattern.ws, auto_refresh=False)
            self.predictor.refresh()
            self.learn = True
        self.stats = SplitterStats()
        self.avg_ws = float(pattern.ws)
        self.tree = DependencyTree(acquire=self._acquire, release=self._release,
                                   clone_state=self._clone_state)
        self.source = _WindowSource(self.bound.window_starts, pattern.ws)
        self.instances = [Instance(i, self) for i in range(self.k)]
        self.available = 0
        self.split_done = False
        self.notify: deque = deque()
        self.stat_queue: deque = deque()
        self.output: list = []
        self.cycles = 0
        self.splitter_rollbacks = 0
        self.confirmed_windows = 0
        self.created_groups = 0
        self.completed_groups = 0
        self.trace = trace
        self._since_refresh = 0
        self._last_assignment = None
        self.frontier_times: list = []
        self.on_cycle = None

    # state of a version

    def _ensure_sync(self, wv):
        if wv.lock is None:
            wv.lock = threading.RLock()
            wv.pending = deque()

    def init_version(self, wv):
        length = wv.window.end - wv.window.start
        wv.det = self.bound.new_detector(self.compiled)
        wv.pos = 0
        wv.mask = bytearray(length)
        wv.used = bytearray(length)
        wv.seen = [0] * len(wv.suppressed)
        wv.lastv = [-1] * len(wv.suppressed)
        wv.slots = [None] * self.pattern.max_cg
        wv.owned = []
        wv.buffer = []
        wv.finished = False
        wv.unpublished = []
        self.check(wv)

    def reset_version(self, wv):
        wv.det.reset()
        wv.pos = 0
        # the window may have been cut short at stream end since init
        wv.used = bytearray(wv.window.end - wv.window.start)
        wv.slots = [None] * self.pattern.max_cg
        wv.owned = []
        wv.buffer = []
        wv.finished = False
        wv.unpublished = []

    def state_hash(self, wv) -> int:
        """Hash of the processing state (not of the suppression view)."""
        return hash((wv.pos, wv.det.state(), bytes(wv.used), tuple(wv.buffer),
                     tuple(c is not None for c in wv.slots), len(wv.owned), wv.finished,
                     len(wv.unpublished)))

    def needs_check(self, wv) -> bool:
        seen = wv.seen
        for i, c in enumerate(wv.suppressed):
            if c.status is OPEN or seen[i] < len(c.events):
                return True
        return False

    def check(self, wv) -> bool:
        """Mark newly suppressed events; True if one of them was already processed."""
        start = wv.window.start
        mask, used = wv.mask, wv.used
        length = len(mask)
        seen, lastv = wv.seen, wv.lastv
        bad = False
        for i, c in enumerate(wv.suppressed):
            v = c.version
            if v == lastv[i]:
                continue
            evs = c.events
            n = len(evs)
            for j in range(seen[i], n):
                r = evs[j] - start
                if 0 <= r < length:
                    if used[r]:
                        bad = True
                    mask[r] = 1
            seen[i] = n
            lastv[i] = v
        return bad

    def enqueue(self, wv, rec):
        wv.pending.append(rec)
        self.notify.append(wv)

    # hooks used by the tree while duplicating a subtree

    def _acquire(self, wv):
        self._ensure_sync(wv)
        wv.lock.acquire()
        self._flush(wv)

    def _release(self, wv):
        wv.lock.release()

    def _clone_state(self, src, dst, cgmap):
        self._ensure_sync(dst)
        if src.det is None:
            return
        tree = self.tree

        def m(c):
            if c is None:
                return None
            c2 = cgmap.get(c)
            if c2 is None:
                c2 = c.clone(tree.new_cg_id(), dst)
                cgmap[c] = c2
            return c2

        extra = len(dst.suppressed) - len(src.suppressed)
        dst.det = src.det.copy()
        dst.pos = src.pos
        dst.mask = bytearray(src.mask)
        dst.used = bytearray(src.used)
        dst.seen = src.seen + [0] * extra
        dst.lastv = src.lastv + [-1] * extra
        dst.slots = [m(c) for c in src.slots]
        dst.owned = [m(c) for c in src.owned]
        dst.buffer = [replace(ce, version_id=dst.id) for ce in src.buffer]
        dst.finished = src.finished
        dst.unpublished = [(m(c), seq) for c, seq in src.unpublished]

    # feedback

    def _flush(self, wv):
        pending = wv.pending
        while pending:
            self._apply(wv, pending.popleft())

    def _apply(self, wv, rec):
        if not wv.alive:
            return
        kind, arg = rec
        tree = self.tree
        if kind == REC_CREATED:
            if arg.status == OPEN:
                tree.consumption_group_created(arg, wv)
        elif kind == REC_COMPLETED:
            if arg.status == OPEN:
                tree.consumption_group_completed(arg)
        elif kind == REC_ABANDONED:
            if arg.status == OPEN:
                tree.consumption_group_abandoned(arg)
        else:
            tree.rollback(wv, arg)

    # the splitter cycle

    @property
    def done(self) -> bool:
        return self.split_done and not self.tree.trees

    @property
    def frontier(self) -> int:
        if self.tree.trees:
            return self.tree.trees[0].windows[0].start
        return self.available

    def _ingest(self) -> bool:
        n = self.n
        if self.available >= n:
            if not self.split_done:
                self.source.finish()
                self.split_done = True
                return True
            return False
        cap = self.frontier + self.lookahead
        limit = min(n, self.available + self.batch, cap)
        if limit <= self.available:
            return False
        for action, w in self.source.advance_to(limit):
            if action == "open":
                self.tree.new_window(w)
        self.available = limit
        return True

    def prob(self, cg) -> float:
        if cg.delta <= 0:
            return 1.0
        return self.predictor.predict(cg.delta, cg.owner.pos, self.avg_ws)

    @staticmethod
    def _eligible(wv) -> bool:
        return not wv.finished

    def _confirm(self) -> bool:
        did = False
        tree = self.tree
        while tree.trees:
            root = tree.trees[0].root
            if not root.window.closed:
                break
            self._ensure_sync(root)
            with root.lock:
                self._flush(root)
                if not root.finished:
                    break
                if self.check(root):
                    old = list(root.owned)
                    self.reset_version(root)
                    root.pending.clear()
                    tree.rollback(root, old)
                    self.splitter_rollbacks += 1
                    break
                tree.confirm_root()
            self.output.extend(root.buffer)
            self.created_groups += len(root.owned)
            self.completed_groups += len(root.buffer)
            self.avg_ws = self.stats.update(root.window.length)
            self.confirmed_windows += 1
            did = True
        return did

    def cycle(self) -> bool:
        progressed = self._ingest()
        notify = self.notify
        for _ in range(len(notify)):
            wv = notify.popleft()
            if wv.pending:
                with wv.lock:
                    self._flush(wv)
                progressed = True
        if self.stat_queue:
            pred = self.predictor
            while self.stat_queue:
                pred.record_counts(self.stat_queue.popleft())
        self._since_refresh += 1
        if self._since_refresh >= self.cfg.refresh_cycles:
            self.predictor.refresh()
            self._since_refresh = 0
        if self._confirm():
            progressed = True
        if self.tree.trees:
            top = find_top_k_versions(self.tree, self.k, self.prob, self._eligible)
            for wv in top:
                self._ensure_sync(wv)
        else:
            top = []
        assignment = schedule(self.instances, top)
        if self.trace is not None and assignment.by_instance != self._last_assignment:
            self.trace(self.cycles, assignment)
            self._last_assignment = assignment.by_instance
        self.cycles += 1
        if self.on_cycle is not None:
            self.on_cycle(self)
        return progressed

    def run_stats(self) -> RunStats:
        return RunStats(
            events=self.n,
            cycles=self.cycles,
            max_tree_versions=self.tree.max_versions,
            rollbacks=sum(i.rollbacks for i in self.instances) + self.splitter_rollbacks,
            dropped_versions=self.tree.dropped,
            processed_events=sum(i.processed for i in self.instances),
            created_groups=self.created_groups,
            completed_groups=self.completed_groups,
            windows=self.confirmed_windows,
        )


def _always(seq):
    return True


def _never(seq):
    return False


class _Timer:
    """Tracks when the confirmed frontier passes the warm-up mark."""

    def __init__(self, engine):
        self.engine = engine
        self.mark = int(engine.cfg.warmup * engine.n)
        self.t0 = time.perf_counter()
        self.t_warm = None
        self.f_warm = 0

    def poll(self):
        if self.t_warm is None:
            f = self.engine.frontier
            if f >= self.mark:
                self.t_warm = time.perf_counter()
                self.f_warm = f

    def finish(self, stats: RunStats, splitter_cpu):
        t1 = time.perf_counter()
        if self.t_warm is None:
            self.t_warm, self.f_warm = self.t0, 0
        stats.elapsed = t1 - self.t0
        span = t1 - self.t_warm
        stats.throughput_eps = (self.engine.n - self.f_warm) / span if span > 0 else float("inf")
        stats.cycles_per_s = stats.cycles / stats.elapsed if stats.elapsed > 0 else float("inf")
        stats.splitter_cpu_s = splitter_cpu
        return stats


def run_stepped(engine: Engine, steps: int = 4, seed: int | None = None,
                delay_prob: float = 0.0, max_idle_cycles: int = 200_000) -> RunStats:
    """Single-threaded interleaving of splitter cycles and instance steps.

    Without a seed every instance takes ``steps`` steps per cycle in id order.
    With a seed the order is shuffled, each instance takes a random number of
    steps in ``0..steps`` and partial-match updates are withheld with
    probability ``delay_prob``.
    """
    rng = random.Random(seed) if seed is not None else None
    if rng is not None:
        for inst in engine.instances:
            inst.rng = random.Random(rng.random())
            inst.delay_prob = delay_prob
    timer = _Timer(engine)
    cpu0 = time.thread_time()
    idle = 0
    while not engine.done:
        progressed = engine.cycle()
        timer.poll()
        order = list(engine.instances)
        if rng is not None:
            rng.shuffle(order)
        for inst in order:
            s = rng.randint(0, steps) if rng is not None else steps
            for _ in range(s):
                if not inst.step():
                    break
                progressed = True
        idle = 0 if progressed else idle + 1
        if idle > max_idle_cycles:
            raise EngineStalled(f"no progress after {idle} cycles")
    return timer.finish(engine.run_stats(), time.thread_time() - cpu0)


def run_threaded(engine: Engine, switch_interval: float | None = 0.0005) -> RunStats:
    """One thread per instance; the splitter runs in the calling thread."""
    import sys

    stop = threading.Event()
    errors = []

    def loop(inst):
        idle = 0
        try:
            while not stop.is_set():
                if inst.step():
                    idle = 0
                else:
                    idle += 1
                    time.sleep(0 if idle < 16 else 0.0002)
        except BaseException as exc:  # surfaced in the splitter thread
            errors.append(exc)
            stop.set()

    old_switch = sys.getswitchinterval()
    if switch_interval is not None:
        sys.setswitchinterval(switch_interval)
    threads = [threading.Thread(target=loop, args=(inst,), daemon=True) for inst in engine.instances]
    timer = _Timer(engine)
    cpu0 = time.thread_time()
    for t in threads:
        t.start()
    try:
        while not engine.done and not errors:
            if not engine.cycle():
                time.sleep(0)
            timer.poll()
    finally:
        stop.set()
        for t in threads:
            t.join()
        sys.setswitchinterval(old_switch)
    if errors:
        raise errors[0]
    return timer.finish(engine.run_stats(), time.thread_time() - cpu0)


def run(stream, pattern, config: EngineConfig | None = None, executor: str = "threaded",
        **kwargs):
    """Build an engine, run it and return ``(output, stats, engine)``."""
    engine = Engine(stream, pattern, config)
    if executor == "threaded":
        stats = run_threaded(engine, **kwargs)
    elif executor == "stepped":
        stats = run_stepped(engine, **kwargs)
    else:
        raise ValueError(f"unknown executor {executor!r}")
    return engine.output, stats, engine
