"""Completion-probability prediction for partial matches.

A partial match is described by ``delta``, the number of events it still needs.
Its evolution is modelled as a Markov chain over ``delta`` states with a
column-stochastic one-step matrix ``T1`` (``T1[i, j]`` is the probability of
moving from state ``j`` to state ``i``).  ``T1`` is learned from observed
transitions: every ``rho`` measurements the empirical matrix is blended in
with weight ``alpha``.

Multi-step matrices are only kept for multiples of ``ell``; other step counts
are linearly interpolated between the two neighbouring multiples (``T_0`` is
the identity).
"""

from __future__ import annotations

import math

import numpy as np
from scipy import sparse


class MarkovPredictor:
    """Learns ``T1`` and answers completion-probability queries.

    Parameters
    ----------
    delta_max : int
        Largest number of outstanding events; the chain has ``delta_max + 1``
        states and state 0 (complete) is absorbing.
    alpha : float
        Weight of the newest empirical matrix when folding.
    ell : int
        Spacing of the precomputed matrix powers.
    rho : int
        Number of measurements per fold.
    horizon : int
        Largest step count that needs an exact power; longer horizons are
        clamped.  Usually the window size.
    initial_guess : float, optional
        Expected number of events per decrement before anything is learned
        (defaults to ``horizon``).
    auto_refresh : bool
        Recompute powers lazily on the first query after ``T1`` changed.  When
        false the owner calls `refresh` itself.
    """

    def __init__(self, delta_max: int, alpha: float = 0.7, ell: int = 10, rho: int = 100,
                 horizon: int = 1000, initial_guess: float | None = None,
                 auto_refresh: bool = True):
        if delta_max < 1:
            raise ValueError("delta_max must be at least 1")
        if not 0.0 < alpha <= 1.0:
            raise ValueError("alpha must be in (0, 1]")
        if ell < 1 or rho < 1 or horizon < 1:
            raise ValueError("ell, rho and horizon must be positive")
        self.delta_max = delta_max
        self.d = delta_max + 1
        self.alpha = alpha
        self.ell = ell
        self.rho = rho
        self.horizon = horizon
        self.auto_refresh = auto_refresh
        g = float(initial_guess if initial_guess is not None else horizon)
        p = min(1.0, 1.0 / max(g, 1.0))
        t1 = np.zeros((self.d, self.d))
        t1[0, 0] = 1.0
        for j in range(1, self.d):
            t1[j, j] = 1.0 - p
            t1[j - 1, j] = p
        self.T1 = t1
        self.counts = np.zeros((self.d, self.d), dtype=np.int64)
        self.measurements = 0
        self.folds = 0
        self.version = 0
        self._table = None
        self._table_version = -1
        self._powers: dict[int, np.ndarray] = {}
        self._powers_version = -1

    # learning

    def record_transition(self, old: int, new: int, count: int = 1) -> None:
        """Record ``count`` observations of ``old -> new``."""
        if not (0 <= old < self.d and 0 <= new < self.d):
            raise ValueError(f"transition {old}->{new} outside 0..{self.delta_max}")
        if count < 0:
            raise ValueError("count must be non-negative")
        while count > 0:
            take = min(count, self.rho - self.measurements)
            self.counts[new, old] += take
            self.measurements += take
            count -= take
            if self.measurements >= self.rho:
                self.fold()

    def record_counts(self, counts: np.ndarray) -> None:
        """Record a whole ``counts[new, old]`` matrix of observations."""
        for new, old in zip(*np.nonzero(counts)):
            self.record_transition(int(old), int(new), int(counts[new, old]))

    def fold(self) -> None:
        """Blend the pending counts into ``T1``; columns without data keep their values."""
        col = self.counts.sum(axis=0)
        fresh = self.T1.copy()
        seen = col > 0
        if seen.any():
            fresh[:, seen] = self.counts[:, seen] / col[seen]
            t1 = (1.0 - self.alpha) * self.T1 + self.alpha * fresh
            t1[:, 0] = 0.0
            t1[0, 0] = 1.0
            self.T1 = t1
            self.version += 1
        self.counts[:] = 0
        self.measurements = 0
        self.folds += 1

    # powers

    @property
    def max_multiple(self) -> int:
        return math.ceil(self.horizon / self.ell)

    def power(self, m: int) -> np.ndarray:
        """``T1 ** (m * ell)``."""
        if self._powers_version != self.version:
            self._powers = {}
            self._powers_version = self.version
        m = min(m, self.max_multiple)
        got = self._powers.get(m)
        if got is None:
            got = np.linalg.matrix_power(self.T1, m * self.ell)
            self._powers[m] = got
        return got

    def matrix_power_and_interpolate(self, n: int) -> np.ndarray:
        """Interpolated ``n``-step matrix."""
        if n < 0:
            raise ValueError("n must be non-negative")
        lo, r = divmod(n, self.ell)
        if r == 0:
            return self.power(lo)
        w = r / self.ell
        return (1.0 - w) * self.power(lo) + w * self.power(lo + 1)

    def refresh(self) -> None:
        """Recompute the completion table (row 0 of every power ``T_{m ell}``)."""
        if self._table_version == self.version and self._table is not None:
            return
        d = self.d
        m_max = self.max_multiple
        table = np.empty((m_max + 1, d))
        row = np.zeros(d)
        row[0] = 1.0
        table[0] = row
        if m_max:
            # row_{m} = row_{m-1} @ P; scipy's per-call overhead only pays off
            # once the dense product gets expensive. Learned matrices are
            # nearly banded, so the sparse power stays small.
            if d > 256:
                t1 = sparse.csr_matrix(self.T1)
                p = t1
                for _ in range(self.ell - 1):
                    p = p @ t1
                step = sparse.csr_matrix(p.T)
                for m in range(1, m_max + 1):
                    row = step @ row
                    table[m] = row
            else:
                p = np.linalg.matrix_power(self.T1, self.ell)
                dot = np.dot
                for m in range(1, m_max + 1):
                    row = dot(row, p)
                    table[m] = row
        self._table = table
        self._table_version = self.version

    def completion_probability(self, delta: int, n: int) -> float:
        """Probability of reaching state 0 from ``delta`` within ``n`` steps."""
        if delta <= 0:
            return 1.0
        if delta >= self.d:
            raise ValueError(f"delta {delta} outside 0..{self.delta_max}")
        if self._table is None or (self.auto_refresh and self._table_version != self.version):
            self.refresh()
        table = self._table
        m_max = len(table) - 1
        lo, r = divmod(max(n, 0), self.ell)
        if lo >= m_max:
            return float(table[m_max, delta])
        if r == 0:
            return float(table[lo, delta])
        w = r / self.ell
        return float((1.0 - w) * table[lo, delta] + w * table[lo + 1, delta])

    def predict(self, delta: int, pos_in_window: int, avg_window_size: float) -> float:
        """Completion probability for a partial match at ``pos_in_window``."""
        n = max(1, int(avg_window_size - pos_in_window))
        return self.completion_probability(delta, n)


class FixedPredictor:
    """Constant completion probability, used as a baseline."""

    def __init__(self, p: float):
        if not 0.0 <= p <= 1.0:
            raise ValueError("probability must be in [0, 1]")
        self.p = float(p)
        self.version = 0

    def record_transition(self, old, new, count=1):
        pass

    def record_counts(self, counts):
        pass

    def refresh(self):
        pass

    def predict(self, delta, pos_in_window, avg_window_size):
        return 1.0 if delta <= 0 else self.p
