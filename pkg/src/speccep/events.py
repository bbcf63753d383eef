"""Stock quote events, in-memory streams, CSV ingestion and a synthetic generator.

A stream is stored column-wise (symbol ids, open and close prices) so that the
detection kernels can walk it without allocating per-event objects.  `Event`
objects are materialised on demand for callers that want them.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np


@dataclass(frozen=True)
class Event:
    """A single quote.  ``seq`` is the arrival position and the total order."""

    seq: int
    symbol: str
    open_price: float
    close_price: float

    @property
    def ts(self) -> int:
        # one quote per tick, the timestamp is the arrival position
        return self.seq

    @property
    def rising(self) -> bool:
        return self.close_price > self.open_price

    @property
    def falling(self) -> bool:
        return self.close_price < self.open_price

    def __lt__(self, other: "Event") -> bool:
        return self.seq < other.seq


def compare(a: Event, b: Event) -> int:
    """Three-way comparison by sequence number."""
    if a.seq < b.seq:
        return -1
    if a.seq > b.seq:
        return 1
    return 0


class StreamFormatError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class EventStream:
    """Column store of quotes ordered by ``seq`` (which is ``0..n-1``)."""

    def __init__(self, symbols: Sequence[str], sym, open_, close, source: str = ""):
        self.symbols = tuple(symbols)
        self.sym = np.ascontiguousarray(sym, dtype=np.int32)
        self.open = np.ascontiguousarray(open_, dtype=np.float64)
        self.close = np.ascontiguousarray(close, dtype=np.float64)
        if not (len(self.sym) == len(self.open) == len(self.close)):
            raise ValueError("column lengths differ")
        self.source = source
        self._ids = {s: i for i, s in enumerate(self.symbols)}
        self._lists = None

    def __len__(self) -> int:
        return len(self.sym)

    def __getitem__(self, seq: int) -> Event:
        if seq < 0:
            seq += len(self)
        return Event(seq, self.symbols[self.sym[seq]], float(self.open[seq]), float(self.close[seq]))

    def __iter__(self) -> Iterator[Event]:
        for i in range(len(self)):
            yield self[i]

    @property
    def n_symbols(self) -> int:
        return len(self.symbols)

    def symbol_id(self, name: str) -> int:
        """Id of ``name`` or -1 when the symbol never occurs."""
        return self._ids.get(name, -1)

    def as_lists(self):
        """Plain Python lists of the columns, used by the interpreted kernels."""
        if self._lists is None:
            self._lists = (self.sym.tolist(), self.open.tolist(), self.close.tolist())
        return self._lists

    def slice(self, start: int, stop: int) -> "EventStream":
        return EventStream(self.symbols, self.sym[start:stop], self.open[start:stop],
                           self.close[start:stop], self.source)

    @classmethod
    def from_events(cls, rows: Sequence, source: str = "") -> "EventStream":
        """Build from ``(symbol, open, close)`` tuples or `Event` objects."""
        names: dict[str, int] = {}
        sym, opn, cls_ = [], [], []
        for r in rows:
            if isinstance(r, Event):
                r = (r.symbol, r.open_price, r.close_price)
            s, o, c = r
            sym.append(names.setdefault(s, len(names)))
            opn.append(o)
            cls_.append(c)
        return cls(list(names), sym, opn, cls_, source)


@dataclass(frozen=True)
class PriceModel:
    """Per-symbol multiplicative random walk.

    Each quote moves the price by a factor ``1 + u`` where ``|u|`` is uniform on
    ``[0, volatility)`` and the sign is positive with probability ``rise_prob``.
    The next quote of the same symbol opens at the previous close.
    """

    initial: float = 100.0
    volatility: float = 0.01
    rise_prob: float = 0.5


def symbol_names(n_symbols: int) -> list[str]:
    width = max(4, len(str(max(n_symbols - 1, 0))))
    return [f"S{i:0{width}d}" for i in range(n_symbols)]


def generate_random_stream(n_events: int, n_symbols: int, seed: int,
                           price_model: PriceModel | None = None) -> EventStream:
    """Uniform symbol draws with a random-walk price per symbol.

    Deterministic for a given seed.
    """
    if n_events < 0 or n_symbols <= 0:
        raise ValueError("n_events must be >= 0 and n_symbols > 0")
    pm = price_model or PriceModel()
    rng = np.random.default_rng(seed)
    sym = rng.integers(0, n_symbols, size=n_events, dtype=np.int32)
    mag = rng.uniform(0.0, pm.volatility, size=n_events)
    sign = np.where(rng.random(n_events) < pm.rise_prob, 1.0, -1.0)
    step = np.log1p(sign * mag)
    # cumulative log-price per symbol, computed with one stable sort
    order = np.argsort(sym, kind="stable")
    s_sorted = sym[order]
    csum = np.cumsum(step[order])
    starts = np.searchsorted(s_sorted, s_sorted, side="left")
    base = np.where(starts > 0, csum[starts - 1], 0.0)
    after = np.empty(n_events)
    after[order] = csum - base
    before = after - step
    opn = pm.initial * np.exp(before)
    close = pm.initial * np.exp(after)
    return EventStream(symbol_names(n_symbols), sym, opn, close, source=f"random:{seed}")


def read_stream_csv(path) -> EventStream:
    """Parse ``symbol,open,close`` rows (an optional ``seq`` column is checked).

    Sequence numbers are reassigned as ``0..n-1`` in file order.
    """
    names: dict[str, int] = {}
    sym, opn, cls_ = [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return EventStream([], [], [], [], os.fspath(path))
        cols = [h.strip().lower() for h in header]
        try:
            i_sym, i_open, i_close = cols.index("symbol"), cols.index("open"), cols.index("close")
        except ValueError:
            raise StreamFormatError(1, "header must contain symbol,open,close") from None
        i_seq = cols.index("seq") if "seq" in cols else None
        last_seq = None
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(cols):
                raise StreamFormatError(line, f"expected {len(cols)} fields, got {len(row)}")
            s = row[i_sym].strip()
            if not s:
                raise StreamFormatError(line, "empty symbol")
            try:
                o = float(row[i_open])
                c = float(row[i_close])
            except ValueError:
                raise StreamFormatError(line, "price is not a number") from None
            if not (o > 0 and c > 0) or o != o or c != c or o == float("inf") or c == float("inf"):
                raise StreamFormatError(line, "prices must be positive and finite")
            if i_seq is not None:
                try:
                    q = int(row[i_seq])
                except ValueError:
                    raise StreamFormatError(line, "seq is not an integer") from None
                if last_seq is not None and q <= last_seq:
                    raise StreamFormatError(line, "seq must be strictly increasing")
                last_seq = q
            sym.append(names.setdefault(s, len(names)))
            opn.append(o)
            cls_.append(c)
    return EventStream(list(names), sym, opn, cls_, os.fspath(path))


def write_stream_csv(stream: EventStream, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["symbol", "open", "close"])
        names = stream.symbols
        for s, o, c in zip(stream.sym.tolist(), stream.open.tolist(), stream.close.tolist()):
            w.writerow([names[s], repr(o), repr(c)])
