"""Query definitions and per-window detection.

Four query shapes are supported:

``qe``  ``A B`` where a window opens on every A event; selection "first A, each
        B"; consumption either ``none`` or ``selected_b`` (matched B events are
        consumed, A events are not).
``q1``  A rising (or falling) leader quote followed by ``q`` quotes moving the
        same way; a window opens on every such leader quote.
``q2``  A 13-element band pattern ``A B+ C D+ E F+ G H+ I J+ K L+ M`` over close
        prices (low / mid / high relative to ``lower`` and ``upper``) on count
        windows.
``q3``  An anchor symbol followed by every symbol of a set in any order, on
        count windows.

Except for ``qe`` all constituents of a match are consumed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import kernels
from .kernels import ABANDON, ADD, COMPLETE, CREATE
from .events import Event, EventStream

QUERY_KINDS = ("qe", "q1", "q2", "q3")

DEFAULT_WINDOWS = {
    "qe": (300, None),
    "q1": (8000, None),
    "q2": (8000, 1000),
    "q3": (1000, 100),
}


class QueryConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ComplexEvent:
    """A detected match.  Equality ignores which window version produced it."""

    query_id: str
    window_id: int
    constituents: tuple
    version_id: int | None = field(default=None, compare=False)

    def key(self):
        return (self.window_id, self.constituents)


@dataclass(frozen=True)
class PatternDefinition:
    query_id: str
    ws: int
    slide: int | None
    delta_max: int
    consumption: str
    max_cg: int = 1
    params: tuple = ()

    @property
    def predicate_windows(self) -> bool:
        return self.slide is None

    def param(self, name, default=None):
        return dict(self.params).get(name, default)

    def bind(self, stream: EventStream) -> "BoundQuery":
        return BoundQuery(self, stream)


def _as_list(v):
    if isinstance(v, str):
        return [x for x in v.replace(";", ",").replace(" ", ",").split(",") if x]
    return list(v)


def _positive_int(params, name, default):
    v = params.pop(name, default)
    try:
        iv = int(v)
    except (TypeError, ValueError):
        raise QueryConfigError(f"{name} must be an integer") from None
    if iv <= 0 or float(v) != iv:
        raise QueryConfigError(f"{name} must be a positive integer")
    return iv


def build_query(kind: str, ws: int | None = None, slide: int | None = None,
                max_cg: int = 1, **params: Any) -> PatternDefinition:
    """Validate parameters and build a `PatternDefinition`.

    ``ws`` and ``slide`` default per query kind.  Unknown parameters raise
    `QueryConfigError`.
    """
    kind = str(kind).lower()
    if kind not in QUERY_KINDS:
        raise QueryConfigError(f"unknown query {kind!r}")
    params = dict(params)
    d_ws, d_slide = DEFAULT_WINDOWS[kind]
    ws = _positive_int({"ws": ws if ws is not None else d_ws}, "ws", d_ws)
    if not 1 <= int(max_cg) <= 64:
        raise QueryConfigError("max_cg must be between 1 and 64")
    max_cg = int(max_cg)
    if kind in ("q2", "q3"):
        slide = _positive_int({"s": slide if slide is not None else d_slide}, "s", d_slide)
    elif slide is not None:
        raise QueryConfigError(f"{kind} opens windows on events and takes no slide")

    if kind == "qe":
        a = str(params.pop("a", "S0000"))
        b = str(params.pop("b", "S0001"))
        policy = str(params.pop("policy", "selected_b")).lower()
        if policy not in ("none", "selected_b"):
            raise QueryConfigError("policy must be none or selected_b")
        if a == b:
            raise QueryConfigError("a and b must differ")
        out = dict(a=a, b=b, policy=policy)
        delta_max, consumption = 2, policy
        max_cg = 1
    elif kind == "q1":
        q = _positive_int(params, "q", 40)
        leaders = _as_list(params.pop("leaders", [f"S{i:04d}" for i in range(16)]))
        if not leaders:
            raise QueryConfigError("leaders must not be empty")
        direction = str(params.pop("direction", "rise")).lower()
        if direction not in ("rise", "fall"):
            raise QueryConfigError("direction must be rise or fall")
        out = dict(q=q, leaders=tuple(leaders), direction=direction)
        delta_max, consumption = q + 1, "all"
        max_cg = 1
    elif kind == "q2":
        try:
            lower = float(params.pop("lower", 95.0))
            upper = float(params.pop("upper", 105.0))
        except (TypeError, ValueError):
            raise QueryConfigError("limits must be numbers") from None
        if not lower < upper:
            raise QueryConfigError("lower limit must be below the upper limit")
        out = dict(lower=lower, upper=upper)
        delta_max, consumption = 13, "all"
    else:
        n = _positive_int(params, "n", 2)
        if n > 63:
            raise QueryConfigError("n must be at most 63")
        a = str(params.pop("a", "S0000"))
        default_set = [f"S{i:04d}" for i in range(1, n + 1)]
        symbols = _as_list(params.pop("set", default_set))
        if len(symbols) != n or len(set(symbols)) != n:
            raise QueryConfigError("set must list n distinct symbols")
        if a in symbols:
            raise QueryConfigError("the anchor symbol cannot be part of the set")
        out = dict(n=n, a=a, set=tuple(symbols))
        delta_max, consumption = n + 1, "all"
    if params:
        raise QueryConfigError(f"unknown parameters for {kind}: {', '.join(sorted(params))}")
    return PatternDefinition(kind, ws, slide, delta_max, consumption, max_cg,
                             tuple(sorted(out.items())))


class BoundQuery:
    """A pattern bound to the symbol table and columns of one stream."""

    def __init__(self, pattern: PatternDefinition, stream: EventStream):
        self.pattern = pattern
        self.stream = stream
        p = dict(pattern.params)
        kind = pattern.query_id
        self.kind = kind
        n = len(stream)
        self.consume_b = -2
        if kind == "qe":
            self.a_sym = stream.symbol_id(p["a"])
            self.b_sym = stream.symbol_id(p["b"])
            self.openers = stream.sym == self.a_sym if self.a_sym >= 0 else np.zeros(n, bool)
            if p["policy"] == "selected_b":
                self.consume_b = self.b_sym
        elif kind == "q1":
            leaders = np.zeros(max(stream.n_symbols, 1), np.uint8)
            for name in p["leaders"]:
                i = stream.symbol_id(name)
                if i >= 0:
                    leaders[i] = 1
            self.leaders = leaders.tobytes()
            self.rising = p["direction"] == "rise"
            moved = stream.close > stream.open if self.rising else stream.close < stream.open
            self.openers = leaders[stream.sym].astype(bool) & moved if n else np.zeros(0, bool)
        elif kind == "q3":
            self.a_sym = stream.symbol_id(p["a"])
            self.set_syms = [stream.symbol_id(s) for s in p["set"]]
        if pattern.predicate_windows:
            self.window_starts = np.flatnonzero(self.openers)
        else:
            self.window_starts = np.arange(0, n, pattern.slide)

    @property
    def tracks_consumption(self) -> bool:
        return self.pattern.consumption != "none"

    def consumes(self, seq: int) -> bool:
        """Whether constituent ``seq`` becomes unavailable to later windows."""
        c = self.pattern.consumption
        if c == "all":
            return True
        if c == "none":
            return False
        return int(self.stream.sym[seq]) == self.consume_b

    def opens_window(self, seq: int) -> bool:
        if self.pattern.predicate_windows:
            return bool(self.openers[seq])
        return seq % self.pattern.slide == 0

    def new_detector(self, compiled: bool | None = None):
        mod = kernels.backend(compiled)
        p = self.pattern
        if self.kind == "qe":
            return mod.QEDetector(self.a_sym, self.b_sym)
        if self.kind == "q1":
            return mod.Q1Detector(p.param("q"), self.leaders, self.rising)
        if self.kind == "q2":
            return mod.Q2Detector(p.param("lower"), p.param("upper"), p.max_cg)
        return mod.Q3Detector(self.a_sym, self.set_syms, max(self.stream.n_symbols, 1), p.max_cg)

    def windows(self):
        """``(start, end)`` pairs, ends clipped to the stream."""
        n = len(self.stream)
        ws = self.pattern.ws
        return [(int(s), min(int(s) + ws, n)) for s in self.window_starts]

    def columns(self, compiled: bool | None = None):
        if compiled is None:
            compiled = kernels.COMPILED
        s = self.stream
        if compiled:
            return s.sym, s.open, s.close
        return s.as_lists()


@dataclass
class Feedback:
    """Effects of one processed event on the partial matches of a window version."""

    completed: list = field(default_factory=list)
    abandoned: list = field(default_factory=list)
    created: list = field(default_factory=list)
    added: list = field(default_factory=list)

    def __bool__(self):
        return bool(self.completed or self.abandoned or self.created or self.added)


class DetectionState:
    """Event-at-a-time matcher for one window, without speculation.

    Partial matches get increasing integer ids; ``groups`` maps an id to its
    constituent sequence numbers.
    """

    def __init__(self, bound: BoundQuery, window_id: int, start: int, end: int,
                 compiled: bool | None = None):
        self.bound = bound
        self.window_id = window_id
        self.start = start
        self.end = end
        self.det = bound.new_detector(compiled)
        self.cols = bound.columns(compiled)
        self.pos = 0
        self.mask = bytearray(end - start)
        self.used = bytearray(end - start)
        self.slots: dict[int, int] = {}
        self.groups: dict[int, list] = {}
        self.deltas: dict[int, int] = {}
        self._next = 0

    def suppress(self, seq: int):
        self.mask[seq - self.start] = 1

    def process_event(self, e: Event | int) -> Feedback:
        seq = e.seq if isinstance(e, Event) else int(e)
        if not self.start <= seq < self.end:
            raise ValueError(f"event {seq} outside window [{self.start}, {self.end})")
        if seq - self.start < self.pos:
            raise ValueError("events must be processed in order")
        fb = Feedback()
        while self.pos <= seq - self.start:
            stop = seq - self.start + 1
            self.pos, raw = self.det.run(*self.cols, self.mask, self.used, self.start,
                                         self.pos, stop)
            self._apply(raw, fb)
        return fb

    def finish(self) -> Feedback:
        fb = Feedback()
        self._apply(self.det.finish(), fb)
        return fb

    def _apply(self, raw, fb):
        for kind, slot, seq, delta in raw:
            if kind == CREATE:
                gid = self._next
                self._next += 1
                self.slots[slot] = gid
                self.groups[gid] = [seq]
                self.deltas[gid] = delta
                fb.created.append(gid)
            elif kind == ADD:
                gid = self.slots[slot]
                self.groups[gid].append(seq)
                self.deltas[gid] = delta
                fb.added.append((gid, seq))
            elif kind == COMPLETE:
                gid = self.slots.pop(slot)
                self.deltas[gid] = 0
                fb.completed.append((ComplexEvent(self.bound.kind, self.window_id,
                                                  tuple(self.groups[gid])), gid))
            else:
                fb.abandoned.append(self.slots.pop(slot))
