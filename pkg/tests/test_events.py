import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from speccep.events import (Event, EventStream, PriceModel, StreamFormatError, compare,
                            generate_random_stream, read_stream_csv, symbol_names,
                            write_stream_csv)


def write(tmp_path, text):
    p = tmp_path / "s.csv"
    p.write_text(text, encoding="utf-8")
    return p


def test_event_order_and_direction():
    a = Event(0, "X", 1.0, 2.0)
    b = Event(1, "X", 2.0, 1.5)
    assert a < b and not b < a
    assert compare(a, b) == -1 and compare(b, a) == 1 and compare(a, a) == 0
    assert a.rising and not a.falling
    assert b.falling and not b.rising
    assert a.ts == 0
    flat = Event(2, "X", 1.0, 1.0)
    assert not flat.rising and not flat.falling


def test_csv_single_row(tmp_path):
    s = read_stream_csv(write(tmp_path, "symbol,open,close\nAAPL,100.0,101.5\n"))
    assert len(s) == 1
    assert s[0] == Event(0, "AAPL", 100.0, 101.5)


def test_csv_header_only_is_empty(tmp_path):
    assert len(read_stream_csv(write(tmp_path, "symbol,open,close\n"))) == 0


def test_csv_empty_file(tmp_path):
    assert len(read_stream_csv(write(tmp_path, ""))) == 0


@pytest.mark.parametrize("row,line", [
    ("X,-1.0,2.0", 3),
    ("X,abc,2.0", 3),
    ("X,1.0", 3),
    (",1.0,2.0", 3),
    ("X,1.0,nan", 3),
])
def test_csv_bad_row_names_line(tmp_path, row, line):
    p = write(tmp_path, f"symbol,open,close\nY,1.0,1.0\n{row}\n")
    with pytest.raises(StreamFormatError) as ei:
        read_stream_csv(p)
    assert ei.value.line == line
    assert f"line {line}" in str(ei.value)


def test_csv_bad_header(tmp_path):
    with pytest.raises(StreamFormatError):
        read_stream_csv(write(tmp_path, "sym,o,c\nX,1,2\n"))


def test_csv_seq_column(tmp_path):
    s = read_stream_csv(write(tmp_path, "seq,symbol,open,close\n10,X,1,2\n12,Y,2,1\n"))
    assert [e.seq for e in s] == [0, 1]
    with pytest.raises(StreamFormatError) as ei:
        read_stream_csv(write(tmp_path, "seq,symbol,open,close\n10,X,1,2\n10,Y,2,1\n"))
    assert ei.value.line == 3


def test_csv_roundtrip(tmp_path):
    s = generate_random_stream(500, 7, seed=3)
    p = tmp_path / "r.csv"
    write_stream_csv(s, p)
    back = read_stream_csv(p)
    assert list(back) == list(s)


def test_from_events_and_slice():
    s = EventStream.from_events([("A", 1, 2), ("B", 2, 1), Event(9, "A", 3, 3)])
    assert s.symbols == ("A", "B")
    assert [e.seq for e in s] == [0, 1, 2]
    assert s.symbol_id("B") == 1 and s.symbol_id("Z") == -1
    t = s.slice(1, 3)
    assert [e.symbol for e in t] == ["B", "A"]
    assert s[-1].seq == 2


def test_symbol_names():
    assert symbol_names(3) == ["S0000", "S0001", "S0002"]
    assert symbol_names(20000)[-1] == "S19999"


def test_generator_deterministic():
    a = generate_random_stream(2000, 30, seed=5)
    b = generate_random_stream(2000, 30, seed=5)
    c = generate_random_stream(2000, 30, seed=6)
    assert np.array_equal(a.sym, b.sym) and np.array_equal(a.close, b.close)
    assert not np.array_equal(a.sym, c.sym)


def test_generator_random_walk():
    s = generate_random_stream(5000, 10, seed=1, price_model=PriceModel(volatility=0.02))
    last = {}
    for e in s:
        if e.symbol in last:
            assert e.open_price == pytest.approx(last[e.symbol], rel=1e-9)
        else:
            assert e.open_price == pytest.approx(100.0)
        assert abs(e.close_price / e.open_price - 1.0) <= 0.02 + 1e-12
        last[e.symbol] = e.close_price


def test_generator_rise_probability():
    s = generate_random_stream(100_000, 50, seed=2)
    frac = float(np.mean(s.close > s.open))
    assert abs(frac - 0.5) < 0.01


def test_generator_symbol_frequencies():
    # 10,000 expected per symbol, so one standard deviation is about 1%
    n, k = 3_000_000, 300
    s = generate_random_stream(n, k, seed=7)
    counts = np.bincount(s.sym, minlength=k)
    assert stats.chisquare(counts).pvalue > 1e-3
    assert np.max(np.abs(counts / (n / k) - 1.0)) < 0.05


@settings(max_examples=30, deadline=None)
@given(n=st.integers(0, 300), k=st.integers(1, 20), seed=st.integers(0, 2**31))
def test_generator_dense_seq(n, k, seed):
    s = generate_random_stream(n, k, seed)
    assert [e.seq for e in s] == list(range(n))
    assert (s.open > 0).all() and (s.close > 0).all()
    assert s.sym.min(initial=0) >= 0 and s.sym.max(initial=0) < k
