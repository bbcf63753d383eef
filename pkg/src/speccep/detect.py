"""Interpreted pattern detectors.

These are the reference implementation of the detection kernels; the compiled
module ``speccep._detect`` mirrors them one to one.  A detector holds the
partial-match state of one window version and is driven by `run`, which walks
window positions ``pos..stop-1``:

* positions flagged in ``mask`` (suppressed events) are skipped,
* every processed position is flagged in ``used``,
* the walk returns early right after an event that created, completed or
  abandoned a partial match, so callers can act on structural changes at once.

Feedback is a list of ``(kind, slot, seq, delta)`` tuples in event order.  A
slot is the detector-local index of a partial match (consumption group).
``CREATE`` carries the first constituent, ``ADD`` the added event and the
remaining number of mandatory events after it.

When ``counts`` (a ``(d, d)`` int64 array, ``d = delta_max + 1``) is given,
every processed event records one ``counts[new, old] += 1`` per partial match
that was active before it, plus ``counts[start, delta_max]`` for each new one.
"""

CREATE = 1
ADD = 2
COMPLETE = 3
ABANDON = 4

# Q2 price classes
LOW, MID, HIGH, NONE = 0, 1, 2, 3
# A B+ C D+ E F+ G H+ I J+ K L+ M, odd positions are Kleene elements
Q2_ELEMENTS = (LOW, MID, HIGH, MID, LOW, MID, HIGH, MID, LOW, MID, HIGH, MID, LOW)
Q2_LENGTH = len(Q2_ELEMENTS)


class QEDetector:
    """First A of the window, then every B."""

    def __init__(self, a_sym, b_sym):
        self.a_sym = a_sym
        self.b_sym = b_sym
        self.delta_max = 2
        self.anchor = -1

    def reset(self):
        self.anchor = -1

    def copy(self):
        d = QEDetector(self.a_sym, self.b_sym)
        d.anchor = self.anchor
        return d

    def state(self):
        return (self.anchor,)

    def run(self, sym, opn, cls, mask, used, base, pos, stop, counts=None):
        out = []
        while pos < stop:
            if mask[pos]:
                pos += 1
                continue
            used[pos] = 1
            e = base + pos
            s = sym[e]
            pos += 1
            if self.anchor < 0:
                if s == self.a_sym:
                    self.anchor = e
                    out.append((CREATE, 0, e, 1))
                    if counts is not None:
                        counts[1, 2] += 1
                    break
            else:
                if s == self.b_sym:
                    out.append((ADD, 0, e, 0))
                    out.append((COMPLETE, 0, e, 0))
                    out.append((CREATE, 0, self.anchor, 1))
                    if counts is not None:
                        counts[0, 1] += 1
                        counts[1, 2] += 1
                    break
                if counts is not None:
                    counts[1, 1] += 1
        return pos, out

    def finish(self):
        if self.anchor >= 0:
            self.anchor = -2
            return [(ABANDON, 0, -1, 1)]
        self.anchor = -2
        return []


class Q1Detector:
    """The window's opening leader event, then ``q`` further moves in the same direction."""

    def __init__(self, q, leaders, rising=True):
        self.q = q
        self.leaders = bytes(leaders)
        self.rising = bool(rising)
        self.delta_max = q + 1
        self.phase = 0
        self.delta = 0

    def reset(self):
        self.phase = 0
        self.delta = 0

    def copy(self):
        d = Q1Detector(self.q, self.leaders, self.rising)
        d.phase = self.phase
        d.delta = self.delta
        return d

    def state(self):
        return (self.phase, self.delta)

    def run(self, sym, opn, cls, mask, used, base, pos, stop, counts=None):
        out = []
        rising = self.rising
        while pos < stop:
            if self.phase == 2:
                # finished or unable to match: nothing left to look at
                pos = stop
                break
            if mask[pos]:
                pos += 1
                continue
            used[pos] = 1
            e = base + pos
            moved = cls[e] > opn[e] if rising else cls[e] < opn[e]
            phase = self.phase
            if phase == 1:
                old = self.delta
                if moved:
                    self.delta = old - 1
                    out.append((ADD, 0, e, old - 1))
                    if counts is not None:
                        counts[old - 1, old] += 1
                    if old == 1:
                        out.append((COMPLETE, 0, e, 0))
                        self.phase = 2
                        pos += 1
                        break
                elif counts is not None:
                    counts[old, old] += 1
            elif phase == 0:
                if pos == 0 and self.leaders[sym[e]] and moved:
                    self.phase = 1
                    self.delta = self.q
                    out.append((CREATE, 0, e, self.q))
                    if counts is not None:
                        counts[self.q, self.q + 1] += 1
                    pos += 1
                    break
                # the opening event was suppressed, the window cannot match
                self.phase = 2
            pos += 1
        return pos, out

    def finish(self):
        out = []
        if self.phase == 1:
            out.append((ABANDON, 0, -1, self.delta))
        self.phase = 2
        return out


class Q2Detector:
    """Price-band walk ``A B+ C D+ ... M`` with skip-till-next-match."""

    def __init__(self, lower, upper, max_cg=1):
        if not lower < upper:
            raise ValueError("lower limit must be below the upper limit")
        self.lower = float(lower)
        self.upper = float(upper)
        self.max_cg = max_cg
        self.delta_max = Q2_LENGTH
        self.matched = [0] * max_cg
        self.active = []

    def reset(self):
        self.matched = [0] * self.max_cg
        self.active = []

    def copy(self):
        d = Q2Detector(self.lower, self.upper, self.max_cg)
        d.matched = list(self.matched)
        d.active = list(self.active)
        return d

    def state(self):
        return (tuple(self.matched), tuple(self.active))

    def run(self, sym, opn, cls, mask, used, base, pos, stop, counts=None):
        out = []
        lower, upper = self.lower, self.upper
        matched, active = self.matched, self.active
        while pos < stop:
            if mask[pos]:
                pos += 1
                continue
            used[pos] = 1
            e = base + pos
            pos += 1
            c = cls[e]
            if c < lower:
                k = LOW
            elif c > upper:
                k = HIGH
            elif lower < c < upper:
                k = MID
            else:
                k = NONE
            taken = -1
            advanced = done = False
            for s in active:
                p = matched[s]
                if k == Q2_ELEMENTS[p]:
                    advanced = True
                    matched[s] = p + 1
                    out.append((ADD, s, e, Q2_LENGTH - p - 1))
                    if p + 1 == Q2_LENGTH:
                        out.append((COMPLETE, s, e, 0))
                        done = True
                    taken = s
                    break
                if p % 2 == 0 and k == MID:
                    # element p-1 is a Kleene element and repeats
                    out.append((ADD, s, e, Q2_LENGTH - p))
                    taken = s
                    break
            if counts is not None:
                for s in active:
                    new = Q2_LENGTH - matched[s]
                    counts[new, new + 1 if advanced and s == taken else new] += 1
            if done:
                active.remove(taken)
                matched[taken] = 0
                break
            if taken < 0 and k == LOW and len(active) < self.max_cg:
                s = _free_slot(matched, active)
                matched[s] = 1
                active.append(s)
                out.append((CREATE, s, e, Q2_LENGTH - 1))
                if counts is not None:
                    counts[Q2_LENGTH - 1, Q2_LENGTH] += 1
                break
        return pos, out

    def finish(self):
        out = [(ABANDON, s, -1, Q2_LENGTH - self.matched[s]) for s in self.active]
        self.active = []
        self.matched = [0] * self.max_cg
        return out


def _free_slot(matched, active):
    for s in range(len(matched)):
        if s not in active:
            return s
    raise RuntimeError("no free slot")


class Q3Detector:
    """An A event followed by each symbol of a set, in any order."""

    def __init__(self, a_sym, set_syms, n_symbols, max_cg=1):
        set_syms = list(set_syms)
        if a_sym >= 0 and a_sym in set_syms:
            raise ValueError("the anchor symbol cannot be part of the set")
        if not 1 <= len(set_syms) <= 63:
            raise ValueError("set size must be between 1 and 63")
        self.a_sym = a_sym
        self.set_syms = set_syms
        self.n_symbols = n_symbols
        self.max_cg = max_cg
        self.n = len(set_syms)
        self.delta_max = self.n + 1
        self.index = [-1] * n_symbols
        for i, s in enumerate(set_syms):
            if 0 <= s < n_symbols:
                self.index[s] = i
        self.remaining = [0] * max_cg
        self.delta = [0] * max_cg
        self.active = []

    def reset(self):
        self.remaining = [0] * self.max_cg
        self.delta = [0] * self.max_cg
        self.active = []

    def copy(self):
        d = Q3Detector(self.a_sym, self.set_syms, self.n_symbols, self.max_cg)
        d.remaining = list(self.remaining)
        d.delta = list(self.delta)
        d.active = list(self.active)
        return d

    def state(self):
        return (tuple(self.remaining), tuple(self.delta), tuple(self.active))

    def run(self, sym, opn, cls, mask, used, base, pos, stop, counts=None):
        out = []
        index, remaining, delta, active = self.index, self.remaining, self.delta, self.active
        full = (1 << self.n) - 1
        while pos < stop:
            if mask[pos]:
                pos += 1
                continue
            used[pos] = 1
            e = base + pos
            pos += 1
            s = sym[e]
            i = index[s]
            taken = -1
            structural = False
            if i >= 0:
                bit = 1 << i
                for t in active:
                    if remaining[t] & bit:
                        remaining[t] &= ~bit
                        delta[t] -= 1
                        out.append((ADD, t, e, delta[t]))
                        if delta[t] == 0:
                            out.append((COMPLETE, t, e, 0))
                            structural = True
                        taken = t
                        break
            if counts is not None:
                for t in active:
                    new = delta[t]
                    counts[new, new + 1 if t == taken else new] += 1
            if structural:
                active.remove(taken)
            elif taken < 0 and s == self.a_sym and len(active) < self.max_cg:
                t = _free_slot(delta, active)
                remaining[t] = full
                delta[t] = self.n
                active.append(t)
                out.append((CREATE, t, e, self.n))
                if counts is not None:
                    counts[self.n, self.n + 1] += 1
                structural = True
            if structural:
                break
        return pos, out

    def finish(self):
        out = [(ABANDON, t, -1, self.delta[t]) for t in self.active]
        self.active = []
        return out
