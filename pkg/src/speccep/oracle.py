"""Sequential reference semantics.

`run_sequential` processes windows strictly one after another with a global
consumed-event mask, using the same detectors as the parallel engine.
`direct_matches` is a second, independent implementation written straight
from the query definitions (no detectors, no feedback protocol); it is meant
for small streams and for cross-checking the first.
"""

from __future__ import annotations

from dataclasses import dataclass

from .kernels import ABANDON, ADD, COMPLETE, CREATE
from .query import ComplexEvent, PatternDefinition
from .detect import Q2_ELEMENTS, Q2_LENGTH, LOW, MID, HIGH, NONE


@dataclass
class OracleResult:
    output: list
    created: int
    completed: int
    windows: int

    @property
    def gt_completion_prob(self) -> float:
        """Fraction of created partial matches that completed (0.0 when none were created)."""
        return self.completed / self.created if self.created else 0.0


def run_sequential(stream, pattern: PatternDefinition, compiled: bool | None = None) -> OracleResult:
    bound = pattern.bind(stream)
    cols = bound.columns(compiled)
    consumed = bytearray(len(stream))
    consumes = bound.consumes
    out = []
    created = completed = 0
    windows = bound.windows()
    for wid, (start, end) in enumerate(windows):
        det = bound.new_detector(compiled)
        mask = bytearray(consumed[start:end])
        used = bytearray(end - start)
        length = end - start
        groups = {}
        pos = 0
        finished = False
        while not finished:
            if pos < length:
                pos, fb = det.run(*cols, mask, used, start, pos, length)
            else:
                fb = det.finish()
                finished = True
            for kind, slot, seq, delta in fb:
                if kind == CREATE:
                    groups[slot] = [seq]
                    created += 1
                elif kind == ADD:
                    groups[slot].append(seq)
                elif kind == COMPLETE:
                    cons = groups.pop(slot)
                    completed += 1
                    out.append(ComplexEvent(pattern.query_id, wid, tuple(cons)))
                    for e in cons:
                        if consumes(e):
                            consumed[e] = 1
                elif kind == ABANDON:
                    groups.pop(slot)
    return OracleResult(out, created, completed, len(windows))


def measure_ground_truth(stream, pattern: PatternDefinition) -> float:
    return run_sequential(stream, pattern).gt_completion_prob


def direct_matches(stream, pattern: PatternDefinition) -> list:
    """Matches computed from the definitions, one partial match per window at a time."""
    if pattern.max_cg != 1:
        raise ValueError("the direct matcher supports one partial match per window")
    bound = pattern.bind(stream)
    p = dict(pattern.params)
    kind = pattern.query_id
    syms = [stream.symbols[s] for s in stream.sym.tolist()]
    opn = stream.open.tolist()
    cls = stream.close.tolist()
    consumed = set()
    out = []
    for wid, (start, end) in enumerate(bound.windows()):
        free = [e for e in range(start, end) if e not in consumed]
        found = []
        if kind == "qe":
            anchor = next((e for e in free if syms[e] == p["a"]), None)
            if anchor is not None:
                for e in free:
                    if e > anchor and syms[e] == p["b"]:
                        found.append((anchor, e))
        elif kind == "q1":
            rising = p["direction"] == "rise"

            def moved(e):
                return cls[e] > opn[e] if rising else cls[e] < opn[e]

            if free and free[0] == start and syms[start] in p["leaders"] and moved(start):
                rest = [e for e in free[1:] if moved(e)]
                if len(rest) >= p["q"]:
                    found.append((start, *rest[:p["q"]]))
        elif kind == "q2":
            lo, hi = p["lower"], p["upper"]

            def klass(c):
                if c < lo:
                    return LOW
                if c > hi:
                    return HIGH
                if lo < c < hi:
                    return MID
                return NONE

            cur = None
            for e in free:
                k = klass(cls[e])
                if cur is None:
                    if k == LOW:
                        cur, nxt = [e], 1
                    continue
                if k == Q2_ELEMENTS[nxt]:
                    cur.append(e)
                    nxt += 1
                    if nxt == Q2_LENGTH:
                        found.append(tuple(cur))
                        cur = None
                elif (nxt - 1) % 2 == 1 and k == MID:
                    cur.append(e)
        else:
            cur = None
            for e in free:
                s = syms[e]
                if cur is None:
                    if s == p["a"]:
                        cur, todo = [e], set(p["set"])
                    continue
                if s in todo:
                    cur.append(e)
                    todo.discard(s)
                    if not todo:
                        found.append(tuple(cur))
                        cur = None
        for m in found:
            out.append(ComplexEvent(kind, wid, tuple(m)))
            for e in m:
                if bound.consumes(e):
                    consumed.add(e)
    return out
