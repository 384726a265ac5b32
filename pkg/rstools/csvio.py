"""
CSV files written and read by the command line tools.

  grid   i,t,tau
  path   time,x,sigma2
  stats  n,rep,value   (written by ExperimentReport.write_stats_csv)
"""

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import DataError

FLOAT_FORMAT = "%.17g"
PATH_COLUMNS = ["time", "x", "sigma2"]


@dataclass(frozen=True, eq=False)
class ObservedPath:
    """A path read back from a `time,x,sigma2` file."""

    times: np.ndarray
    x: np.ndarray
    sigma2: np.ndarray


def write_grid_csv(grid, path):
    tau = np.concatenate(([np.nan], grid.durations))
    frame = pd.DataFrame({"i": np.arange(grid.count + 1), "t": grid.times, "tau": tau})
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, na_rep="")
    logging.info(f"Grid with N={grid.count} written to {path}")


def write_path_csv(sim, path):
    frame = pd.DataFrame({"time": sim.times, "x": sim.sample_x, "sigma2": sim.sample_sigma2})
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    logging.info(f"Path with {len(frame)} observations written to {path}")


def read_path_csv(path):
    try:
        frame = pd.read_csv(path)
    except FileNotFoundError:
        raise DataError(f"path file not found: {path}")
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as e:
        raise DataError(f"cannot parse path file {path}: {e}")
    if list(frame.columns[:2]) != PATH_COLUMNS[:2]:
        raise DataError(f"expected header 'time,x,sigma2' in {path}, got '{','.join(frame.columns)}'")
    try:
        times = frame["time"].to_numpy(dtype=float)
        x = frame["x"].to_numpy(dtype=float)
    except ValueError as e:
        raise DataError(f"non-numeric value in {path}: {e}")
    if np.isnan(times).any() or np.isnan(x).any():
        raise DataError(f"missing values in {path}")
    if np.any(np.diff(times) <= 0):
        raise DataError(f"times in {path} must be strictly increasing")
    sigma2 = frame["sigma2"].to_numpy(dtype=float) if "sigma2" in frame else np.full(times.size, np.nan)
    return ObservedPath(times=times, x=x, sigma2=sigma2)
