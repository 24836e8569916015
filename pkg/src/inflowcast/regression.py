"""Benchmark inflow forecasts: a week-1 precipitation regression under cross-validation.

A single least-squares line from week-1 ensemble precipitation to the observed
7-day inflow is fitted per cross-validation fold and applied member-by-member
to every horizon, producing ensemble inflow forecasts in normalised inflow
units.  Folds exclude both the forecast year and the subsequent year so no
forecast is scored against a model that saw it.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass

import numpy as np

from .data import (
    CANONICAL_HORIZONS,
    EnsemblePrecipForecast,
    HorizonSpec,
    horizon_average,
    observed_horizon_mean,
)
from .errors import InputError, LeakageError
from .series import DailySeries, year_of

WEEK1 = CANONICAL_HORIZONS[0]


@dataclass(frozen=True)
class LinearInflowModel:
    """Least-squares line mapping week-1 mean precipitation (mm/day) to inflow."""

    slope: float
    intercept: float
    training_years: frozenset[int]
    n_pairs: int

    def predict(self, precip):
        return self.slope * np.asarray(precip, dtype=float) + self.intercept

    def to_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "training_years": sorted(self.training_years),
            "n_pairs": self.n_pairs,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LinearInflowModel":
        return cls(
            slope=float(d["slope"]),
            intercept=float(d["intercept"]),
            training_years=frozenset(int(y) for y in d["training_years"]),
            n_pairs=int(d["n_pairs"]),
        )


@dataclass(frozen=True)
class BenchmarkEnsembleForecast:
    """Ensemble inflow forecast obtained by regressing member precipitation."""

    issue_date: dt.date
    horizon: HorizonSpec
    members: np.ndarray  # (K,), normalised inflow; may be negative


def fit_week1_regression(
    precip,
    inflow,
    training_years,
    min_pairs: int = 30,
) -> LinearInflowModel:
    """Ordinary least squares of observed inflow on week-1 precipitation."""
    x = np.asarray(precip, dtype=float)
    y = np.asarray(inflow, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise InputError("precip and inflow must be 1-D arrays of equal length")
    if len(x) < min_pairs:
        raise InputError(f"{len(x)} training pairs is below the minimum of {min_pairs}")
    xc = x - x.mean()
    sxx = float(np.dot(xc, xc))
    if sxx == 0.0:
        raise InputError("precipitation training values are constant; slope undefined")
    slope = float(np.dot(xc, y) / sxx)
    intercept = float(y.mean() - slope * x.mean())
    return LinearInflowModel(
        slope=slope,
        intercept=intercept,
        training_years=frozenset(int(t) for t in training_years),
        n_pairs=len(x),
    )


def build_training_pairs(
    issues,
    inflow: DailySeries,
    member_wise: bool = True,
):
    """Week-1 (precip, observed inflow) pairs from a set of forecast issues.

    With ``member_wise`` each member's week-1 mean forms its own pair against
    the single observed inflow; otherwise one pair per issue uses the ensemble
    mean.  Issues whose observation window is incomplete are dropped.
    """
    xs: list[float] = []
    ys: list[float] = []
    n_issues = 0
    for f in issues:
        obs = observed_horizon_mean(inflow, f.issue_date, WEEK1)
        if obs is None:
            continue
        means = horizon_average(f, WEEK1)
        n_issues += 1
        if member_wise:
            xs.extend(means.tolist())
            ys.extend([obs] * len(means))
        else:
            xs.append(float(means.mean()))
            ys.append(obs)
    return np.asarray(xs), np.asarray(ys), n_issues


def generate_benchmark(
    forecast: EnsemblePrecipForecast,
    horizon: HorizonSpec,
    model: LinearInflowModel,
) -> BenchmarkEnsembleForecast:
    """Apply the regression to each member's horizon-mean precipitation."""
    issue_year = year_of(forecast.issue_date)
    overlap = model.training_years & {issue_year, issue_year + 1}
    if overlap:
        raise LeakageError(
            f"model trained on years {sorted(overlap)} cannot forecast an issue from {issue_year}"
        )
    members = model.predict(horizon_average(forecast, horizon))
    return BenchmarkEnsembleForecast(forecast.issue_date, horizon, members)


@dataclass
class CrossValidationResult:
    models: dict[int, LinearInflowModel]  # keyed by forecast year
    forecasts: list[BenchmarkEnsembleForecast]

    def forecasts_for(self, horizon: HorizonSpec) -> list[BenchmarkEnsembleForecast]:
        return [f for f in self.forecasts if f.horizon.name == horizon.name]


def run_cross_validation(
    issues,
    inflow: DailySeries,
    horizons=CANONICAL_HORIZONS,
    member_wise: bool = True,
    min_years: int = 4,
    min_pairs: int = 30,
) -> CrossValidationResult:
    """Out-of-sample benchmark forecasts for every issue, year by year.

    For each forecast year Y one regression is fitted on all other years
    except Y and Y+1, then applied to every issue of Y for all horizons.
    """
    issues = sorted(issues, key=lambda f: f.issue_date)
    issue_years = sorted({year_of(f.issue_date) for f in issues})
    if len(issue_years) < min_years:
        raise InputError(f"cross-validation needs at least {min_years} years, got {len(issue_years)}")

    models: dict[int, LinearInflowModel] = {}
    forecasts: list[BenchmarkEnsembleForecast] = []
    for fold_year in issue_years:
        train_issues = [
            f for f in issues if year_of(f.issue_date) not in (fold_year, fold_year + 1)
        ]
        training_years = sorted({year_of(f.issue_date) for f in train_issues})
        x, y, _ = build_training_pairs(train_issues, inflow, member_wise=member_wise)
        if len(x) < min_pairs:
            raise InputError(
                f"fold {fold_year}: only {len(x)} training pairs (minimum {min_pairs})"
            )
        model = fit_week1_regression(x, y, training_years, min_pairs=min_pairs)
        models[fold_year] = model
        for f in issues:
            if year_of(f.issue_date) != fold_year:
                continue
            for h in horizons:
                forecasts.append(generate_benchmark(f, h, model))
    return CrossValidationResult(models=models, forecasts=forecasts)
