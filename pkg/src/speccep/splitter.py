"""Window opening and closing, window dependency and the average window size."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass


@dataclass(eq=False)
class Window:
    """A window over ``[start, end)``.

    ``end`` is the nominal end (``start + ws``) until the stream runs out, at
    which point it is clipped.  ``closed`` flips once every event up to ``end``
    has been assigned.
    """

    id: int
    start: int
    end: int
    closed: bool = False

    @property
    def length(self) -> int:
        return self.end - self.start

    def __repr__(self):
        return f"Window({self.id}, [{self.start}, {self.end}){' closed' if self.closed else ''})"


def dependency(wj: Window, wi: Window) -> bool:
    """True when the later window ``wi`` overlaps the earlier window ``wj``."""
    return wj.start <= wi.start < wj.end


class SplitterStats:
    """Exponentially smoothed average window size; the first sample is taken as is."""

    def __init__(self, beta: float = 0.1, initial: float | None = None):
        self.beta = beta
        self.avg_window_size = initial
        self.samples = 0

    def update(self, size: float) -> float:
        if self.samples == 0 or self.avg_window_size is None:
            self.avg_window_size = float(size)
        else:
            self.avg_window_size = self.beta * size + (1.0 - self.beta) * self.avg_window_size
        self.samples += 1
        return self.avg_window_size


def update_avg_window_size(stats: SplitterStats, window: Window) -> float:
    return stats.update(window.length)


class WindowSplitter:
    """Turns a sequence of events into window open/close actions.

    Count windows open every ``slide`` events; predicate windows open on the
    events for which ``opener(seq)`` holds.  Every window spans ``ws`` events.
    """

    def __init__(self, ws: int, slide: int | None = None, opener=None):
        if ws <= 0:
            raise ValueError("ws must be positive")
        if (slide is None) == (opener is None):
            raise ValueError("give exactly one of slide or opener")
        if slide is not None and slide <= 0:
            raise ValueError("slide must be positive")
        self.ws = ws
        self.slide = slide
        self.opener = opener
        self.open: deque[Window] = deque()
        self._next_id = 0
        self.next_seq = 0

    def advance(self, seq: int) -> list:
        """Feed event ``seq``; returns ``("open"|"close", window)`` actions in order."""
        if seq != self.next_seq:
            raise ValueError(f"expected event {self.next_seq}, got {seq}")
        self.next_seq += 1
        actions = []
        if (seq % self.slide == 0) if self.slide is not None else self.opener(seq):
            w = Window(self._next_id, seq, seq + self.ws)
            self._next_id += 1
            self.open.append(w)
            actions.append(("open", w))
        while self.open and self.open[0].end <= seq + 1:
            w = self.open.popleft()
            w.closed = True
            actions.append(("close", w))
        return actions

    def finish(self) -> list:
        """End of stream: clip and close every open window."""
        actions = []
        while self.open:
            w = self.open.popleft()
            w.end = min(w.end, self.next_seq)
            w.closed = True
            actions.append(("close", w))
        return actions
