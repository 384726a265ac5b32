"""
Tick data: ingestion of `time,price` files into log-price series.
"""

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import DataError, TickParseError
from .sampling import SampleGrid

TICK_COLUMNS = ["time", "price"]


@dataclass(frozen=True, eq=False)
class TickSeries:
    """Strictly increasing times with positive prices; x = ln(price)."""

    times: np.ndarray
    prices: np.ndarray
    duplicates_collapsed: int = 0

    def __post_init__(self):
        if self.times.size != self.prices.size:
            raise DataError(f"times and prices differ in length ({self.times.size} vs {self.prices.size})")
        if np.any(np.diff(self.times) <= 0):
            raise DataError("tick times must be strictly increasing")
        if np.any(self.prices <= 0):
            raise DataError("tick prices must be positive")

    @property
    def x(self):
        return np.log(self.prices)

    def to_grid(self):
        """Observation times shifted to start at 0."""
        return SampleGrid.from_times(self.times - self.times[0])


def ingest_ticks(path):
    """Read a `time,price` CSV, collapsing duplicate timestamps to their last price."""
    try:
        frame = pd.read_csv(path, dtype=str, skipinitialspace=True, keep_default_na=False)
    except FileNotFoundError:
        raise DataError(f"tick file not found: {path}")
    except pd.errors.EmptyDataError:
        raise DataError(f"tick file is empty: {path}")
    except pd.errors.ParserError as e:
        raise DataError(f"cannot parse tick file {path}: {e}")

    if [c.strip() for c in frame.columns] != TICK_COLUMNS:
        raise TickParseError(f"expected header 'time,price', got '{','.join(frame.columns)}'", 1)

    numeric = frame.apply(lambda col: pd.to_numeric(col.str.strip(), errors="coerce"))
    bad = numeric.isna().any(axis=1).to_numpy()
    if bad.any():
        row = int(np.argmax(bad))
        # header is line 1
        raise TickParseError(f"cannot parse row '{','.join(frame.iloc[row])}'", row + 2)

    times = numeric.iloc[:, 0].to_numpy(dtype=float)
    prices = numeric.iloc[:, 1].to_numpy(dtype=float)
    if np.any(prices <= 0):
        line = int(np.argmax(prices <= 0)) + 2
        raise DataError(f"line {line}: non-positive price {prices[line - 2]}")

    deduped = pd.DataFrame({"time": times, "price": prices}).drop_duplicates("time", keep="last")
    collapsed = len(times) - len(deduped)
    if collapsed:
        logging.warning(f"Collapsed {collapsed} duplicate timestamp(s) in {path} to the last price")
    series = TickSeries(times=deduped["time"].to_numpy(), prices=deduped["price"].to_numpy(),
                        duplicates_collapsed=collapsed)
    logging.info(f"Loaded {series.times.size} ticks from {path}")
    return series
