"""Forecast verification on the equal-area grid.

RMSE is the plain root mean square over pixels; no latitude weighting is
applied anywhere because every pixel covers the same area.  ACC is the
cosine similarity between predicted and observed anomalies from a
day-of-year climatology.
"""

import bisect
import warnings

import numpy as np


def rmse(truth, pred):
    """Root mean square error over the pixel axis (axis 0).

    Returns a scalar for 1-D inputs, otherwise an array over the
    remaining axes, one value per variable (and level).
    """
    truth = np.asarray(truth, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if truth.shape != pred.shape:
        raise ValueError(f"grid mismatch: {truth.shape} vs {pred.shape}")
    out = np.sqrt(np.mean((truth - pred) ** 2, axis=0))
    return float(out) if out.ndim == 0 else out


def acc(truth, pred, clim):
    """Anomaly correlation coefficient over the pixel axis.

    Anomalies are deviations from the climatology field.  Channels where
    either anomaly norm vanishes are undefined and come back as NaN, to
    be excluded from averages rather than counted as zero skill.
    """
    truth = np.asarray(truth, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    clim = np.asarray(clim, dtype=np.float64)
    if truth.shape != pred.shape or truth.shape != clim.shape:
        raise ValueError(
            f"grid mismatch: {truth.shape} vs {pred.shape} vs {clim.shape}"
        )
    dy = truth - clim
    dp = pred - clim
    num = np.sum(dy * dp, axis=0)
    den = np.sqrt(np.sum(dy * dy, axis=0) * np.sum(dp * dp, axis=0))
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(den > 0.0, num / np.maximum(den, 1e-300), np.nan)
    return float(out) if out.ndim == 0 else out


def level_mean(values, axis=0):
    """Average a per-level metric over the 13 vertical levels."""
    values = np.asarray(values, dtype=np.float64)
    if values.shape[axis] != 13:
        raise ValueError(f"expected 13 levels on axis {axis}, got {values.shape[axis]}")
    out = values.mean(axis=axis)
    return float(out) if out.ndim == 0 else out


class ClimatologyTable:
    """Per day-of-year mean fields, built from a training sequence.

    Days without samples resolve at lookup time: day 366 silently falls
    back to day 365 when absent, every other gap falls back to the
    nearest populated day with a warning.
    """

    def __init__(self, surface_by_day: dict, upper_by_day: dict):
        if set(surface_by_day) != set(upper_by_day) or not surface_by_day:
            raise ValueError("surface and upper tables must cover the same days")
        self.surface_by_day = surface_by_day
        self.upper_by_day = upper_by_day
        self._days = sorted(surface_by_day)

    @classmethod
    def from_states(cls, states, days) -> "ClimatologyTable":
        days = np.asarray(days)
        if len(states) != days.shape[0]:
            raise ValueError("one day-of-year per state required")
        if days.size and (days.min() < 1 or days.max() > 366):
            raise ValueError("day of year must lie in 1..366")
        surf_sum, up_sum, count = {}, {}, {}
        for state, day in zip(states, days):
            day = int(day)
            if day not in count:
                surf_sum[day] = np.zeros_like(state.surface, dtype=np.float64)
                up_sum[day] = np.zeros_like(state.upper, dtype=np.float64)
                count[day] = 0
            surf_sum[day] += state.surface
            up_sum[day] += state.upper
            count[day] += 1
        surface = {d: surf_sum[d] / count[d] for d in count}
        upper = {d: up_sum[d] / count[d] for d in count}
        return cls(surface, upper)

    def _resolve(self, day: int) -> int:
        if not 1 <= day <= 366:
            raise ValueError(f"day of year {day} out of range 1..366")
        if day in self.surface_by_day:
            return day
        if day == 366 and 365 in self.surface_by_day:
            return 365
        pos = bisect.bisect_left(self._days, day)
        candidates = self._days[max(0, pos - 1): pos + 1]
        nearest = min(candidates, key=lambda d: (abs(d - day), d))
        warnings.warn(
            f"no climatology for day {day}; using nearest day {nearest}", stacklevel=3
        )
        return nearest

    def lookup(self, day: int):
        """(surface_mean, upper_mean) for the given day of year."""
        resolved = self._resolve(int(day))
        return self.surface_by_day[resolved], self.upper_by_day[resolved]
