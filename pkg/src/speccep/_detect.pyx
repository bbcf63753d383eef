# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled pattern detectors.

Same contract as ``speccep.detect``: ``run`` walks window positions, skips
masked ones, flags processed ones in ``used`` and stops right after any
structural feedback.  The stream columns are passed as contiguous numpy
arrays (int32 symbols, float64 prices).
"""

from libc.stdint cimport int32_t, int64_t, uint64_t

cdef enum:
    CREATE = 1
    ADD = 2
    COMPLETE = 3
    ABANDON = 4

cdef enum:
    LOW = 0
    MID = 1
    HIGH = 2
    NONE = 3

cdef enum:
    MAX_SLOTS = 64

cdef int Q2_LENGTH = 13
cdef int Q2_ELEMENTS[13]
Q2_ELEMENTS[:] = [LOW, MID, HIGH, MID, LOW, MID, HIGH, MID, LOW, MID, HIGH, MID, LOW]


cdef class QEDetector:
    cdef public int a_sym, b_sym, delta_max
    cdef public int64_t anchor

    def __init__(self, int a_sym, int b_sym):
        self.a_sym = a_sym
        self.b_sym = b_sym
        self.delta_max = 2
        self.anchor = -1

    def reset(self):
        self.anchor = -1

    def copy(self):
        cdef QEDetector d = QEDetector(self.a_sym, self.b_sym)
        d.anchor = self.anchor
        return d

    def state(self):
        return (self.anchor,)

    def run(self, const int32_t[::1] sym, const double[::1] opn, const double[::1] cls,
            unsigned char[::1] mask, unsigned char[::1] used, Py_ssize_t base,
            Py_ssize_t pos, Py_ssize_t stop, counts=None):
        cdef list out = []
        cdef int64_t[:, ::1] cv
        cdef bint rec = counts is not None
        cdef Py_ssize_t e
        cdef int s
        if rec:
            cv = counts
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
                    if rec:
                        cv[1, 2] += 1
                    break
            else:
                if s == self.b_sym:
                    out.append((ADD, 0, e, 0))
                    out.append((COMPLETE, 0, e, 0))
                    out.append((CREATE, 0, self.anchor, 1))
                    if rec:
                        cv[0, 1] += 1
                        cv[1, 2] += 1
                    break
                if rec:
                    cv[1, 1] += 1
        return pos, out

    def finish(self):
        if self.anchor >= 0:
            self.anchor = -2
            return [(ABANDON, 0, -1, 1)]
        self.anchor = -2
        return []


cdef class Q1Detector:
    cdef public int q, phase, delta, delta_max
    cdef public bint rising
    cdef bytes _leaders
    cdef const unsigned char[::1] leaders

    def __init__(self, int q, leaders, bint rising=True):
        self.q = q
        self._leaders = bytes(leaders)
        self.leaders = self._leaders
        self.rising = rising
        self.delta_max = q + 1
        self.phase = 0
        self.delta = 0

    def reset(self):
        self.phase = 0
        self.delta = 0

    def copy(self):
        cdef Q1Detector d = Q1Detector(self.q, self._leaders, self.rising)
        d.phase = self.phase
        d.delta = self.delta
        return d

    def state(self):
        return (self.phase, self.delta)

    def run(self, const int32_t[::1] sym, const double[::1] opn, const double[::1] cls,
            unsigned char[::1] mask, unsigned char[::1] used, Py_ssize_t base,
            Py_ssize_t pos, Py_ssize_t stop, counts=None):
        cdef list out = []
        cdef int64_t[:, ::1] cv
        cdef bint rec = counts is not None
        cdef bint moved
        cdef Py_ssize_t e
        cdef int old
        if rec:
            cv = counts
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
            if self.rising:
                moved = cls[e] > opn[e]
            else:
                moved = cls[e] < opn[e]
            if self.phase == 1:
                old = self.delta
                if moved:
                    self.delta = old - 1
                    out.append((ADD, 0, e, old - 1))
                    if rec:
                        cv[old - 1, old] += 1
                    if old == 1:
                        out.append((COMPLETE, 0, e, 0))
                        self.phase = 2
                        pos += 1
                        break
                elif rec:
                    cv[old, old] += 1
            elif self.phase == 0:
                if pos == 0 and self.leaders[sym[e]] and moved:
                    self.phase = 1
                    self.delta = self.q
                    out.append((CREATE, 0, e, self.q))
                    if rec:
                        cv[self.q, self.q + 1] += 1
                    pos += 1
                    break
                self.phase = 2
            pos += 1
        return pos, out

    def finish(self):
        out = []
        if self.phase == 1:
            out.append((ABANDON, 0, -1, self.delta))
        self.phase = 2
        return out


cdef int _slot_free(int* active, int n_active, int s):
    cdef int i
    for i in range(n_active):
        if active[i] == s:
            return 0
    return 1


cdef void _remove(int* active, int* n_active, int s):
    cdef int i, j = 0
    for i in range(n_active[0]):
        if active[i] != s:
            active[j] = active[i]
            j += 1
    n_active[0] = j


cdef class Q2Detector:
    cdef public double lower, upper
    cdef public int max_cg, delta_max
    cdef int matched[MAX_SLOTS]
    cdef int active[MAX_SLOTS]
    cdef int n_active

    def __init__(self, double lower, double upper, int max_cg=1):
        if not lower < upper:
            raise ValueError("lower limit must be below the upper limit")
        if not 1 <= max_cg <= MAX_SLOTS:
            raise ValueError("max_cg out of range")
        self.lower = lower
        self.upper = upper
        self.max_cg = max_cg
        self.delta_max = Q2_LENGTH
        self.reset()

    def reset(self):
        cdef int i
        for i in range(MAX_SLOTS):
            self.matched[i] = 0
        self.n_active = 0

    def copy(self):
        cdef Q2Detector d = Q2Detector(self.lower, self.upper, self.max_cg)
        d.matched = self.matched
        d.active = self.active
        d.n_active = self.n_active
        return d

    def state(self):
        return (tuple(self.matched[i] for i in range(self.max_cg)),
                tuple(self.active[i] for i in range(self.n_active)))

    def run(self, const int32_t[::1] sym, const double[::1] opn, const double[::1] cls,
            unsigned char[::1] mask, unsigned char[::1] used, Py_ssize_t base,
            Py_ssize_t pos, Py_ssize_t stop, counts=None):
        cdef list out = []
        cdef int64_t[:, ::1] cv
        cdef bint rec = counts is not None
        cdef Py_ssize_t e
        cdef double c
        cdef int k, i, s, p, taken, new
        cdef bint advanced, done
        if rec:
            cv = counts
        while pos < stop:
            if mask[pos]:
                pos += 1
                continue
            used[pos] = 1
            e = base + pos
            pos += 1
            c = cls[e]
            if c < self.lower:
                k = LOW
            elif c > self.upper:
                k = HIGH
            elif self.lower < c < self.upper:
                k = MID
            else:
                k = NONE
            taken = -1
            advanced = False
            done = False
            for i in range(self.n_active):
                s = self.active[i]
                p = self.matched[s]
                if k == Q2_ELEMENTS[p]:
                    advanced = True
                    self.matched[s] = p + 1
                    out.append((ADD, s, e, Q2_LENGTH - p - 1))
                    if p + 1 == Q2_LENGTH:
                        out.append((COMPLETE, s, e, 0))
                        done = True
                    taken = s
                    break
                if p % 2 == 0 and k == MID:
                    out.append((ADD, s, e, Q2_LENGTH - p))
                    taken = s
                    break
            if rec:
                for i in range(self.n_active):
                    s = self.active[i]
                    new = Q2_LENGTH - self.matched[s]
                    if advanced and s == taken:
                        cv[new, new + 1] += 1
                    else:
                        cv[new, new] += 1
            if done:
                _remove(self.active, &self.n_active, taken)
                self.matched[taken] = 0
                break
            if taken < 0 and k == LOW and self.n_active < self.max_cg:
                s = 0
                while not _slot_free(self.active, self.n_active, s):
                    s += 1
                self.matched[s] = 1
                self.active[self.n_active] = s
                self.n_active += 1
                out.append((CREATE, s, e, Q2_LENGTH - 1))
                if rec:
                    cv[Q2_LENGTH - 1, Q2_LENGTH] += 1
                break
        return pos, out

    def finish(self):
        cdef int i
        out = [(ABANDON, self.active[i], -1, Q2_LENGTH - self.matched[self.active[i]])
               for i in range(self.n_active)]
        self.n_active = 0
        for i in range(MAX_SLOTS):
            self.matched[i] = 0
        return out


cdef class Q3Detector:
    cdef public int a_sym, n_symbols, max_cg, n, delta_max
    cdef public list set_syms
    cdef int32_t[::1] index
    cdef object _index
    cdef uint64_t remaining[MAX_SLOTS]
    cdef int delta[MAX_SLOTS]
    cdef int active[MAX_SLOTS]
    cdef int n_active

    def __init__(self, int a_sym, set_syms, int n_symbols, int max_cg=1):
        import numpy as np
        set_syms = list(set_syms)
        if a_sym >= 0 and a_sym in set_syms:
            raise ValueError("the anchor symbol cannot be part of the set")
        if not 1 <= len(set_syms) <= 63:
            raise ValueError("set size must be between 1 and 63")
        if not 1 <= max_cg <= MAX_SLOTS:
            raise ValueError("max_cg out of range")
        self.a_sym = a_sym
        self.set_syms = set_syms
        self.n_symbols = n_symbols
        self.max_cg = max_cg
        self.n = len(set_syms)
        self.delta_max = self.n + 1
        self._index = np.full(max(n_symbols, 1), -1, dtype=np.int32)
        for i, s in enumerate(set_syms):
            if 0 <= s < n_symbols:
                self._index[s] = i
        self.index = self._index
        self.reset()

    def reset(self):
        cdef int i
        for i in range(MAX_SLOTS):
            self.remaining[i] = 0
            self.delta[i] = 0
        self.n_active = 0

    def copy(self):
        cdef Q3Detector d = Q3Detector(self.a_sym, self.set_syms, self.n_symbols, self.max_cg)
        d.remaining = self.remaining
        d.delta = self.delta
        d.active = self.active
        d.n_active = self.n_active
        return d

    def state(self):
        return (tuple(self.remaining[i] for i in range(self.max_cg)),
                tuple(self.delta[i] for i in range(self.max_cg)),
                tuple(self.active[i] for i in range(self.n_active)))

    def run(self, const int32_t[::1] sym, const double[::1] opn, const double[::1] cls,
            unsigned char[::1] mask, unsigned char[::1] used, Py_ssize_t base,
            Py_ssize_t pos, Py_ssize_t stop, counts=None):
        cdef list out = []
        cdef int64_t[:, ::1] cv
        cdef bint rec = counts is not None
        cdef Py_ssize_t e
        cdef int s, idx, i, t, taken, new
        cdef uint64_t bit
        cdef uint64_t full = (<uint64_t>1 << self.n) - 1
        cdef bint done
        if rec:
            cv = counts
        while pos < stop:
            if mask[pos]:
                pos += 1
                continue
            used[pos] = 1
            e = base + pos
            pos += 1
            s = sym[e]
            idx = self.index[s]
            taken = -1
            done = False
            if idx >= 0:
                bit = <uint64_t>1 << idx
                for i in range(self.n_active):
                    t = self.active[i]
                    if self.remaining[t] & bit:
                        self.remaining[t] &= ~bit
                        self.delta[t] -= 1
                        out.append((ADD, t, e, self.delta[t]))
                        if self.delta[t] == 0:
                            out.append((COMPLETE, t, e, 0))
                            done = True
                        taken = t
                        break
            if rec:
                for i in range(self.n_active):
                    t = self.active[i]
                    new = self.delta[t]
                    if t == taken:
                        cv[new, new + 1] += 1
                    else:
                        cv[new, new] += 1
            if done:
                _remove(self.active, &self.n_active, taken)
                break
            if taken < 0 and s == self.a_sym and self.n_active < self.max_cg:
                t = 0
                while not _slot_free(self.active, self.n_active, t):
                    t += 1
                self.remaining[t] = full
                self.delta[t] = self.n
                self.active[self.n_active] = t
                self.n_active += 1
                out.append((CREATE, t, e, self.n))
                if rec:
                    cv[self.n, self.n + 1] += 1
                break
        return pos, out

    def finish(self):
        cdef int i
        out = [(ABANDON, self.active[i], -1, self.delta[self.active[i]]) for i in range(self.n_active)]
        self.n_active = 0
        return out
