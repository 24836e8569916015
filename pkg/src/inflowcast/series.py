"""Daily time-series containers shared by the ingest, forecast and scoring code."""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass

import numpy as np

from .errors import InputError

ONE_DAY = np.timedelta64(1, "D")


def as_day_array(dates) -> np.ndarray:
    """Coerce a sequence of dates (datetime.date / ISO strings / datetime64) to datetime64[D]."""
    arr = np.asarray(dates, dtype="datetime64[D]")
    return arr


@dataclass(frozen=True)
class DailySeries:
    """A (possibly gappy) daily-valued series indexed by calendar date.

    Dates must be strictly increasing; missing days are simply absent rather
    than stored as NaN.
    """

    dates: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "dates", as_day_array(self.dates))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.dates.shape != self.values.shape or self.dates.ndim != 1:
            raise InputError("dates and values must be 1-D arrays of equal length")
        if len(self.dates) == 0:
            raise InputError("empty series")
        if np.any(np.diff(self.dates) <= np.timedelta64(0, "D")):
            raise InputError("dates must be strictly increasing")

    def __len__(self) -> int:
        return len(self.values)

    @property
    def start(self) -> np.datetime64:
        return self.dates[0]

    @property
    def end(self) -> np.datetime64:
        return self.dates[-1]

    def window_mean(self, start, end) -> float | None:
        """Mean of the values on days [start, end] inclusive.

        Returns None unless every calendar day in the window is present
        (partial windows would bias horizon means).
        """
        start = np.datetime64(start, "D")
        end = np.datetime64(end, "D")
        if end < start:
            raise InputError("window end precedes start")
        n_expected = int((end - start) / ONE_DAY) + 1
        lo = np.searchsorted(self.dates, start, side="left")
        hi = np.searchsorted(self.dates, end, side="right")
        if hi - lo != n_expected:
            return None
        return float(self.values[lo:hi].mean())

    def value_on(self, day) -> float | None:
        day = np.datetime64(day, "D")
        i = np.searchsorted(self.dates, day, side="left")
        if i < len(self.dates) and self.dates[i] == day:
            return float(self.values[i])
        return None

    def years(self) -> np.ndarray:
        """Distinct calendar years present in the series."""
        return np.unique(self.dates.astype("datetime64[Y]").astype(int) + 1970)


@dataclass(frozen=True)
class InflowSeries(DailySeries):
    """Aggregated net-inflow series, normalised by its record-wide mean rate.

    ``normalization_constant`` is the mean rate (m3/s) that the stored values
    were divided by; values are dimensionless and may be negative.  For weekly
    aggregates the dates are the window start days.
    """

    normalization_constant: float = 1.0
    window: str = "daily"

    def __post_init__(self):
        super().__post_init__()
        if self.normalization_constant <= 0:
            raise InputError("normalization constant must be positive")
        if self.window not in ("daily", "weekly"):
            raise InputError(f"unknown window {self.window!r}")


def year_of(day) -> int:
    return int(np.datetime64(day, "Y").astype(int)) + 1970


def month_of(day) -> int:
    d = np.datetime64(day, "D")
    return int((d.astype("datetime64[M]") - d.astype("datetime64[Y]")) / np.timedelta64(1, "M")) + 1


def to_pydate(day) -> dt.date:
    return np.datetime64(day, "D").astype(dt.date)
