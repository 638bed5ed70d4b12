"""Iterated inference and the metrics report it produces.

The model advances the normalized state one day per call; predictions
are de-normalized back to physical units before any metric touches
them.  A report is a flat table with one row per lead time, variable,
and level, written as CSV with a fixed schema.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .metrics import acc, rmse
from .state import SURFACE_VARS, UPPER_VARS, VolumetricState

CSV_FIELDS = ("lead_time_days", "variable", "level", "rmse", "acc", "n_samples")
MAX_LEAD_DAYS = 10


@dataclass
class MetricRow:
    lead_time_days: int
    variable: str
    level: str  # "" for surface variables, the level index for upper ones
    rmse: float
    acc: float  # NaN when the anomaly norm vanished
    n_samples: int  # samples behind the acc value; 0 when undefined


@dataclass
class RolloutReport:
    rows: list = field(default_factory=list)
    truncated: bool = False

    def lead_times(self):
        return sorted({row.lead_time_days for row in self.rows})

    def to_csv(self, path):
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(CSV_FIELDS)
            for row in self.rows:
                writer.writerow([
                    row.lead_time_days,
                    row.variable,
                    row.level,
                    repr(row.rmse),
                    "" if math.isnan(row.acc) else repr(row.acc),
                    row.n_samples,
                ])


def _rows_for(lead, rmse_s, acc_s, rmse_u, acc_u, n_acc_s=None, n_acc_u=None):
    rows = []
    for i, name in enumerate(SURFACE_VARS):
        a = float(acc_s[i])
        n = (0 if math.isnan(a) else 1) if n_acc_s is None else int(n_acc_s[i])
        rows.append(MetricRow(lead, name, "", float(rmse_s[i]), a, n))
    for level in range(rmse_u.shape[0]):
        for i, name in enumerate(UPPER_VARS):
            a = float(acc_u[level, i])
            n = (0 if math.isnan(a) else 1) if n_acc_u is None else int(n_acc_u[level, i])
            rows.append(MetricRow(lead, name, str(level), float(rmse_u[level, i]), a, n))
    return rows


def rollout(model, norm, initial: VolumetricState, truth, days, clim, n_steps=10):
    """Iterate the model n_steps times from one initial state.

    truth and days give the verifying state and its day-of-year for each
    lead; a non-finite intermediate truncates the report and flags it.
    Returns (predictions, report).
    """
    if not 1 <= n_steps <= MAX_LEAD_DAYS:
        raise ValueError(f"n_steps must lie in 1..{MAX_LEAD_DAYS}")
    if len(truth) < n_steps or len(days) < n_steps:
        raise ValueError("need a verifying state and day tag for every lead")

    report = RolloutReport()
    predictions = []
    current = norm.normalize(initial)
    for lead in range(1, n_steps + 1):
        out = model.forward(current)
        if not out.is_finite():
            report.truncated = True
            break
        pred = norm.denormalize(out)
        predictions.append(pred)
        clim_s, clim_u = clim.lookup(int(days[lead - 1]))
        verify = truth[lead - 1]
        report.rows.extend(_rows_for(
            lead,
            rmse(verify.surface, pred.surface),
            acc(verify.surface, pred.surface, clim_s),
            rmse(verify.upper, pred.upper),
            acc(verify.upper, pred.upper, clim_u),
        ))
        current = out
    return predictions, report


def evaluate_forecasts(model, norm, dataset, days, clim) -> RolloutReport:
    """One-day-ahead metrics averaged over a dataset of (input, target) pairs.

    days holds the day-of-year of each target.  Undefined ACC samples are
    dropped from the ACC average; n_samples counts what remains.
    """
    if len(days) < len(dataset):
        raise ValueError("need a day-of-year tag for every target")
    rmse_s, acc_s, rmse_u, acc_u = [], [], [], []
    for (state_in, state_out), day in zip(dataset, days):
        pred = norm.denormalize(model.forward(norm.normalize(state_in)))
        clim_s, clim_u = clim.lookup(int(day))
        rmse_s.append(rmse(state_out.surface, pred.surface))
        acc_s.append(acc(state_out.surface, pred.surface, clim_s))
        rmse_u.append(rmse(state_out.upper, pred.upper))
        acc_u.append(acc(state_out.upper, pred.upper, clim_u))
    def valid_mean(values):
        stack = np.stack(values)
        valid = ~np.isnan(stack)
        n = valid.sum(axis=0)
        total = np.where(valid, stack, 0.0).sum(axis=0)
        return np.where(n > 0, total / np.maximum(n, 1), np.nan), n

    mean_acc_s, n_s = valid_mean(acc_s)
    mean_acc_u, n_u = valid_mean(acc_u)
    return RolloutReport(rows=_rows_for(
        1,
        np.mean(np.stack(rmse_s), axis=0),
        mean_acc_s,
        np.mean(np.stack(rmse_u), axis=0),
        mean_acc_u,
        n_acc_s=n_s,
        n_acc_u=n_u,
    ))
