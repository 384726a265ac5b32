import math

import numpy as np
import pytest

from rstools.errors import DataError, TickParseError
from rstools.ticks import TickSeries, ingest_ticks


def write(tmp_path, text, name="ticks.csv"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_ingest_log_transforms(tmp_path):
    series = ingest_ticks(write(tmp_path, "time,price\n0,100\n0.5,101\n1.0,100.5\n"))
    np.testing.assert_array_equal(series.times, [0.0, 0.5, 1.0])
    np.testing.assert_allclose(series.x, [math.log(100), math.log(101), math.log(100.5)])
    assert series.duplicates_collapsed == 0


def test_duplicate_timestamps_keep_last_price(tmp_path):
    series = ingest_ticks(write(tmp_path, "time,price\n0,100\n0,101\n1,102\n"))
    np.testing.assert_array_equal(series.times, [0.0, 1.0])
    np.testing.assert_array_equal(series.prices, [101.0, 102.0])
    assert series.duplicates_collapsed == 1


def test_parse_error_reports_line(tmp_path):
    with pytest.raises(TickParseError) as info:
        ingest_ticks(write(tmp_path, "time,price\n0,100\nabc,100\n"))
    assert info.value.line == 3
    assert "line 3" in str(info.value)


def test_bad_header(tmp_path):
    with pytest.raises(TickParseError) as info:
        ingest_ticks(write(tmp_path, "t,p\n0,100\n"))
    assert info.value.line == 1


@pytest.mark.parametrize("text", [
    "time,price\n0,100\n1,-5\n",
    "time,price\n0,100\n1,0\n",
    "time,price\n0,100\n2,101\n1,102\n",
])
def test_data_errors(tmp_path, text):
    with pytest.raises(DataError):
        ingest_ticks(write(tmp_path, text))


def test_missing_and_empty_files(tmp_path):
    with pytest.raises(DataError):
        ingest_ticks(str(tmp_path / "absent.csv"))
    with pytest.raises(DataError):
        ingest_ticks(write(tmp_path, ""))


def test_grid_starts_at_zero():
    series = TickSeries(times=np.array([10.0, 10.5, 12.0]), prices=np.array([1.0, 2.0, 3.0]))
    grid = series.to_grid()
    np.testing.assert_allclose(grid.times, [0.0, 0.5, 2.0])
    assert grid.count == 2


def test_series_invariants():
    with pytest.raises(DataError):
        TickSeries(times=np.array([0.0, 1.0]), prices=np.array([1.0]))
